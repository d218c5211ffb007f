//! Machine-readable JSON reports. Field order is fixed by the struct
//! layout so identical runs serialize to identical bytes.

use crate::error::Result;
use crate::tensor::{iter_square_blocks, masked_l1, pruned_l1, Mask, Matrix, NmConfig};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct RatioStats {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl RatioStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        };
        Some(Self {
            min: sorted[0],
            median,
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            max: *sorted.last().unwrap(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MaskReport {
    pub schema: u32,
    pub kind: String,
    pub rows: usize,
    pub cols: usize,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub kept_count: usize,
    pub sparsity: f64,
    pub kept_l1: f64,
    pub pruned_l1: f64,
    /// Per-tile kept-ℓ1 fraction statistics for tiled strategies.
    pub tile_kept_fraction: Option<RatioStats>,
}

impl MaskReport {
    pub fn new(
        kind: &str,
        mat: &Matrix,
        mask: &Mask,
        cfg: Option<&NmConfig>,
        tile_side: Option<usize>,
    ) -> Result<Self> {
        let kept = masked_l1(mat, mask)?;
        let pruned = pruned_l1(mat, mask)?;
        let tile_kept_fraction = match (tile_side, cfg) {
            (Some(m), Some(c)) if m == c.m() => {
                let tiles = iter_square_blocks(mat, c)?;
                let fractions: Vec<f64> = tiles
                    .iter()
                    .map(|b| {
                        let vals = mat.block_values(b);
                        let total: f64 = vals.iter().map(|v| v.abs()).sum();
                        if total == 0.0 {
                            return 1.0;
                        }
                        let mut kept_tile = 0.0;
                        for i in 0..b.m {
                            for j in 0..b.m {
                                if mask.kept(b.row + i, b.col + j) {
                                    kept_tile += vals[i * b.m + j].abs();
                                }
                            }
                        }
                        kept_tile / total
                    })
                    .collect();
                RatioStats::from_values(&fractions)
            }
            _ => None,
        };
        let total = mask.rows() * mask.cols();
        Ok(Self {
            schema: SCHEMA_VERSION,
            kind: kind.to_string(),
            rows: mat.rows(),
            cols: mat.cols(),
            n: cfg.map(|c| c.n()),
            m: cfg.map(|c| c.m()),
            kept_count: mask.kept_count(),
            sparsity: mask.zeros_count() as f64 / total as f64,
            kept_l1: kept,
            pruned_l1: pruned,
            tile_kept_fraction,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ViolationReport {
    pub schema: u32,
    pub n: usize,
    pub m: usize,
    pub blocks: usize,
    pub violating_blocks: usize,
    pub flipped_weights: usize,
    pub empirical_density: f64,
    /// Eq.-style predicted violation probability at the mask's
    /// empirical prunable density.
    pub predicted_violation_probability: f64,
    pub empirical_violation_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchEntry {
    pub m: usize,
    pub n: usize,
    pub trials: usize,
    pub flow_median_us: f64,
    pub greedy_median_us: f64,
    pub oracle_median_us: Option<f64>,
    pub ratio: RatioStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub schema: u32,
    pub entries: Vec<BenchEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvertReport {
    pub schema: u32,
    pub target_n: usize,
    pub target_m: usize,
    pub transposable: bool,
    pub bias_fix: bool,
    pub adaprune: bool,
    pub flipped_weights: usize,
    pub kept_l1: f64,
    pub pruned_l1: f64,
    pub output_mse: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::optimal_transposable_mask;
    use crate::synth::gaussian_matrix;

    #[test]
    fn report_serialization_is_deterministic() {
        let w = gaussian_matrix(8, 8, 0.0, 1.0, 81);
        let cfg = NmConfig::new(4, 8).unwrap();
        let mask = optimal_transposable_mask(&w, &cfg).unwrap();
        let a = serde_json::to_string(
            &MaskReport::new("transposable-opt", &w, &mask, Some(&cfg), Some(8)).unwrap(),
        )
        .unwrap();
        let b = serde_json::to_string(
            &MaskReport::new("transposable-opt", &w, &mask, Some(&cfg), Some(8)).unwrap(),
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"schema\":1"));
        assert!(a.contains("tile_kept_fraction"));
    }

    #[test]
    fn ratio_stats_median() {
        let s = RatioStats::from_values(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.0);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 3.0);
        assert!(RatioStats::from_values(&[]).is_none());
    }
}
