//! Post-pruning weight correction: mean-absorption bias fix, per-row
//! least-squares refit on a calibration set, and mask conversion.

use crate::builders::enforce_structured;
use crate::error::{Error, Result};
use crate::flow::optimal_transposable_mask;
use crate::tensor::{iter_row_blocks, Mask, Matrix, NmConfig};
use rayon::prelude::*;

/// Input-activation matrix X, shape (in_features × samples); columns
/// are activation samples feeding the layer.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    x: Matrix,
}

impl CalibrationSet {
    pub fn new(x: Matrix) -> Self {
        Self { x }
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn in_features(&self) -> usize {
        self.x.rows()
    }

    pub fn samples(&self) -> usize {
        self.x.cols()
    }
}

/// How the pruned weight of a block is pushed into its survivors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AbsorbMode {
    /// Distribute the pruned sum evenly over the survivors, preserving
    /// the block's total weight exactly.
    #[default]
    SumPreserving,
    /// Add the mean of the pruned weights (sum / pruned count) to each
    /// survivor.
    PrunedMean,
}

/// Absorb pruned weight into each block's survivors. The mask must
/// have at least N zeros in every 1×M block.
pub fn mean_absorb(mat: &Matrix, mask: &Mask, cfg: &NmConfig, mode: AbsorbMode) -> Result<Matrix> {
    if (mat.rows(), mat.cols()) != (mask.rows(), mask.cols()) {
        return Err(Error::ShapeMismatch {
            expected: (mat.rows(), mat.cols()),
            got: (mask.rows(), mask.cols()),
        });
    }
    let blocks = iter_row_blocks(mat, cfg)?;
    let mut out = vec![0.0f64; mat.rows() * mat.cols()];
    for b in blocks {
        let base = b.row * mat.cols() + b.col;
        let mut pruned_sum = 0.0;
        let mut pruned = 0usize;
        for j in 0..b.m {
            if !mask.kept(b.row, b.col + j) {
                pruned_sum += mat.get(b.row, b.col + j);
                pruned += 1;
            }
        }
        if pruned < cfg.n() {
            return Err(Error::InvalidMask(format!(
                "block at ({}, {}) has {pruned} zeros, N:M requires at least {}",
                b.row,
                b.col,
                cfg.n()
            )));
        }
        let survivors = b.m - pruned;
        let bump = match mode {
            AbsorbMode::SumPreserving if survivors > 0 => pruned_sum / survivors as f64,
            AbsorbMode::PrunedMean if survivors > 0 => pruned_sum / pruned as f64,
            _ => 0.0, // fully pruned block: nothing to absorb into
        };
        for j in 0..b.m {
            if mask.kept(b.row, b.col + j) {
                out[base + j] = mat.get(b.row, b.col + j) + bump;
            }
        }
    }
    Matrix::new(mat.rows(), mat.cols(), out)
}

/// Ridge weight for the refit; `None` selects λ = 1e-6·tr(G)/k per row.
pub type Lambda = Option<f64>;

fn cholesky_solve(gram: &mut [f64], rhs: &mut [f64], k: usize) -> Result<()> {
    // in-place LLᵀ
    for i in 0..k {
        for j in 0..=i {
            let mut sum = gram[i * k + j];
            for p in 0..j {
                sum -= gram[i * k + p] * gram[j * k + p];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::SingularSystem);
                }
                gram[i * k + i] = sum.sqrt();
            } else {
                gram[i * k + j] = sum / gram[j * k + j];
            }
        }
    }
    for i in 0..k {
        let mut sum = rhs[i];
        for p in 0..i {
            sum -= gram[i * k + p] * rhs[p];
        }
        rhs[i] = sum / gram[i * k + i];
    }
    for i in (0..k).rev() {
        let mut sum = rhs[i];
        for p in i + 1..k {
            sum -= gram[p * k + i] * rhs[p];
        }
        rhs[i] = sum / gram[i * k + i];
    }
    Ok(())
}

fn refit_row(w_row: &[f64], kept: &[usize], x: &Matrix, lambda: Lambda) -> Result<Vec<f64>> {
    let samples = x.cols();
    let k = kept.len();
    let mut out = vec![0.0f64; w_row.len()];
    if k == 0 {
        return Ok(out);
    }

    // target y = w_row · X over the full row, pruned entries included
    let mut y = vec![0.0f64; samples];
    for (j, &w) in w_row.iter().enumerate() {
        if w != 0.0 {
            let xj = x.row(j);
            for s in 0..samples {
                y[s] += w * xj[s];
            }
        }
    }

    let mut gram = vec![0.0f64; k * k];
    for a in 0..k {
        let xa = x.row(kept[a]);
        for b in 0..=a {
            let xb = x.row(kept[b]);
            let dot: f64 = xa.iter().zip(xb).map(|(p, q)| p * q).sum();
            gram[a * k + b] = dot;
            gram[b * k + a] = dot;
        }
    }
    let ridge = match lambda {
        Some(l) => l,
        None => {
            let trace: f64 = (0..k).map(|a| gram[a * k + a]).sum();
            1e-6 * trace / k as f64
        }
    };
    for a in 0..k {
        gram[a * k + a] += ridge;
    }

    let mut rhs: Vec<f64> = kept
        .iter()
        .map(|&j| x.row(j).iter().zip(&y).map(|(p, q)| p * q).sum())
        .collect();
    cholesky_solve(&mut gram, &mut rhs, k)?;
    for (a, &j) in kept.iter().enumerate() {
        out[j] = rhs[a];
    }
    Ok(out)
}

/// Per-output-row least-squares refit of the surviving weights so that
/// the masked layer best reproduces the dense layer's outputs on the
/// calibration set. The closed-form normal equations attain the convex
/// optimum, so the objective never exceeds that of the plainly masked
/// weights.
pub fn adaprune(w: &Matrix, mask: &Mask, calib: &CalibrationSet, lambda: Lambda) -> Result<Matrix> {
    if (w.rows(), w.cols()) != (mask.rows(), mask.cols()) {
        return Err(Error::ShapeMismatch {
            expected: (w.rows(), w.cols()),
            got: (mask.rows(), mask.cols()),
        });
    }
    if calib.in_features() != w.cols() {
        return Err(Error::ShapeMismatch {
            expected: (w.cols(), calib.samples()),
            got: (calib.in_features(), calib.samples()),
        });
    }
    let rows: Vec<Vec<f64>> = (0..w.rows())
        .into_par_iter()
        .map(|r| {
            let kept: Vec<usize> = (0..w.cols()).filter(|&j| mask.kept(r, j)).collect();
            refit_row(w.row(r), &kept, calib.x(), lambda)
        })
        .collect::<Result<_>>()?;
    Matrix::new(w.rows(), w.cols(), rows.concat())
}

/// Layer output discrepancy ‖WX − W'X‖² / (rows × samples).
pub fn output_mse(w: &Matrix, w_approx: &Matrix, x: &Matrix) -> Result<f64> {
    if (w.rows(), w.cols()) != (w_approx.rows(), w_approx.cols()) || w.cols() != x.rows() {
        return Err(Error::ShapeMismatch {
            expected: (w.rows(), w.cols()),
            got: (w_approx.rows(), w_approx.cols()),
        });
    }
    let samples = x.cols();
    let total: f64 = (0..w.rows())
        .into_par_iter()
        .map(|r| {
            let wr = w.row(r);
            let ar = w_approx.row(r);
            let mut acc = vec![0.0f64; samples];
            for j in 0..w.cols() {
                let d = wr[j] - ar[j];
                if d != 0.0 {
                    let xj = x.row(j);
                    for s in 0..samples {
                        acc[s] += d * xj[s];
                    }
                }
            }
            acc.iter().map(|e| e * e).sum::<f64>()
        })
        .sum();
    Ok(total / (w.rows() * samples) as f64)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConvertOptions {
    pub bias_fix: bool,
    pub absorb_mode: AbsorbMode,
    pub adaprune: bool,
    pub lambda: Lambda,
}

#[derive(Debug, Clone)]
pub struct Conversion {
    pub mask: Mask,
    pub weights: Matrix,
    /// Entries kept by the source mask but pruned by the target.
    pub flipped: usize,
}

fn apply_mask(w: &Matrix, mask: &Mask) -> Matrix {
    let data = w
        .data()
        .iter()
        .zip(mask.bits())
        .map(|(&v, &b)| if b == 1 { v } else { 0.0 })
        .collect();
    Matrix::new(w.rows(), w.cols(), data).expect("masking preserves finiteness")
}

/// Convert an existing sparse model (weights + mask) to a target N:M
/// structure, treating source-pruned entries as zeros, with optional
/// bias fix and least-squares refit.
pub fn convert_mask(
    w: &Matrix,
    source_mask: &Mask,
    target_cfg: &NmConfig,
    transposable: bool,
    calib: Option<&CalibrationSet>,
    opts: &ConvertOptions,
) -> Result<Conversion> {
    if (w.rows(), w.cols()) != (source_mask.rows(), source_mask.cols()) {
        return Err(Error::ShapeMismatch {
            expected: (w.rows(), w.cols()),
            got: (source_mask.rows(), source_mask.cols()),
        });
    }
    let w_eff = apply_mask(w, source_mask);
    let target = if transposable {
        // zero-cost edges cover the source-pruned entries first; the
        // intersection keeps the final kept-set inside the source's
        optimal_transposable_mask(&w_eff, target_cfg)?.intersect(source_mask)?
    } else {
        enforce_structured(w, source_mask, target_cfg)?
    };
    let flipped = source_mask
        .bits()
        .iter()
        .zip(target.bits())
        .filter(|(&s, &t)| s == 1 && t == 0)
        .count();

    let mut weights = apply_mask(&w_eff, &target);
    if opts.bias_fix {
        weights = mean_absorb(&w_eff, &target, target_cfg, opts.absorb_mode)?;
    }
    if opts.adaprune {
        let calib = calib.ok_or_else(|| {
            Error::MissingArgument("adaprune conversion requires a calibration set".into())
        })?;
        weights = adaprune(&w_eff, &target, calib, opts.lambda)?;
    }
    Ok(Conversion {
        mask: target,
        weights,
        flipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{count_violations, structured_mask, unstructured_mask};
    use crate::synth::gaussian_matrix;

    fn cfg(n: usize, m: usize) -> NmConfig {
        NmConfig::new(n, m).unwrap()
    }

    #[test]
    fn absorb_zero_sum_pruned_leaves_survivors() {
        let w = Matrix::new(1, 4, vec![4.0, 3.0, 0.2, -0.2]).unwrap();
        let mask = Mask::new(1, 4, vec![1, 1, 0, 0]).unwrap();
        let out = mean_absorb(&w, &mask, &cfg(2, 4), AbsorbMode::SumPreserving).unwrap();
        assert_eq!(out.data(), &[4.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn absorb_pushes_pruned_sum_to_survivors() {
        let w = Matrix::new(1, 4, vec![4.0, 2.0, 1.0, 1.0]).unwrap();
        let mask = Mask::new(1, 4, vec![1, 1, 0, 0]).unwrap();
        let out = mean_absorb(&w, &mask, &cfg(2, 4), AbsorbMode::SumPreserving).unwrap();
        assert_eq!(out.data(), &[5.0, 3.0, 0.0, 0.0]);

        let alt = mean_absorb(&w, &mask, &cfg(2, 4), AbsorbMode::PrunedMean).unwrap();
        assert_eq!(alt.data(), &[5.0, 3.0, 0.0, 0.0]); // sum 2, both modes /2 here
    }

    #[test]
    fn absorb_preserves_block_sums() {
        let w = gaussian_matrix(8, 16, 0.0, 1.0, 51);
        let c = cfg(4, 8);
        let mask = structured_mask(&w, &c).unwrap();
        let out = mean_absorb(&w, &mask, &c, AbsorbMode::SumPreserving).unwrap();
        for i in 0..8 {
            for b in 0..2 {
                let orig: f64 = (0..8).map(|j| w.get(i, b * 8 + j)).sum();
                let got: f64 = (0..8).map(|j| out.get(i, b * 8 + j)).sum();
                assert!((orig - got).abs() <= 1e-12 * orig.abs().max(1.0));
            }
        }
    }

    #[test]
    fn absorb_rejects_violating_masks() {
        let w = Matrix::new(1, 4, vec![1.0; 4]).unwrap();
        let dense = Mask::all_ones(1, 4);
        assert!(matches!(
            mean_absorb(&w, &dense, &cfg(2, 4), AbsorbMode::SumPreserving),
            Err(Error::InvalidMask(_))
        ));
    }

    #[test]
    fn orthonormal_design_reduces_to_truncation() {
        // X = sqrt-identity: rows are orthogonal, refit decouples
        let x = Matrix::new(4, 4, {
            let mut d = vec![0.0; 16];
            for i in 0..4 {
                d[i * 4 + i] = 1.0;
            }
            d
        })
        .unwrap();
        let w = Matrix::new(1, 4, vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        let mask = Mask::new(1, 4, vec![1, 0, 1, 0]).unwrap();
        let refit = adaprune(&w, &mask, &CalibrationSet::new(x), Some(0.0)).unwrap();
        assert!((refit.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((refit.get(0, 2) - 3.0).abs() < 1e-12);
        assert_eq!(refit.get(0, 1), 0.0);
        assert_eq!(refit.get(0, 3), 0.0);
    }

    #[test]
    fn duplicated_row_refits_to_sum() {
        // W = [1, 1], keep column 0, X rows identical -> w' = 2
        let x = Matrix::new(2, 3, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]).unwrap();
        let w = Matrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        let mask = Mask::new(1, 2, vec![1, 0]).unwrap();
        let refit = adaprune(&w, &mask, &CalibrationSet::new(x), Some(0.0)).unwrap();
        assert!((refit.get(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn refit_never_beats_nothing_but_never_loses_to_truncation() {
        let w = gaussian_matrix(16, 32, 0.0, 1.0, 52);
        let x = gaussian_matrix(32, 64, 0.5, 1.0, 53);
        let c = cfg(4, 8);
        let mask = structured_mask(&w, &c).unwrap();
        let truncated = apply_mask(&w, &mask);
        let refit = adaprune(&w, &mask, &CalibrationSet::new(x.clone()), Some(0.0)).unwrap();
        let mse_trunc = output_mse(&w, &truncated, &x).unwrap();
        let mse_refit = output_mse(&w, &refit, &x).unwrap();
        assert!(mse_refit <= mse_trunc + 1e-12);

        // support stays inside the mask
        for i in 0..16 {
            for j in 0..32 {
                if !mask.kept(i, j) {
                    assert_eq!(refit.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn residual_orthogonal_to_kept_rows() {
        let w = gaussian_matrix(4, 16, 0.0, 1.0, 54);
        let x = gaussian_matrix(16, 64, 0.0, 1.0, 55);
        let c = cfg(4, 8);
        let mask = structured_mask(&w, &c).unwrap();
        let refit = adaprune(&w, &mask, &CalibrationSet::new(x.clone()), Some(0.0)).unwrap();
        for r in 0..4 {
            let mut resid = vec![0.0f64; 64];
            for j in 0..16 {
                let d = w.get(r, j) - refit.get(r, j);
                for (s, v) in resid.iter_mut().enumerate() {
                    *v += d * x.get(j, s);
                }
            }
            let scale: f64 = resid.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            for j in 0..16 {
                if mask.kept(r, j) {
                    let dot: f64 = (0..64).map(|s| x.get(j, s) * resid[s]).sum();
                    assert!(dot.abs() <= 1e-8 * scale * 64.0_f64.sqrt());
                }
            }
        }
    }

    #[test]
    fn singular_system_without_ridge() {
        // two identical kept columns, one sample: rank-deficient Gram
        let x = Matrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let w = Matrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        let mask = Mask::all_ones(1, 2);
        assert!(matches!(
            adaprune(&w, &mask, &CalibrationSet::new(x.clone()), Some(0.0)),
            Err(Error::SingularSystem)
        ));
        // default ridge makes it solvable
        assert!(adaprune(&w, &mask, &CalibrationSet::new(x), None).is_ok());
    }

    #[test]
    fn convert_is_idempotent_when_source_satisfies_target() {
        let w = gaussian_matrix(8, 16, 0.0, 1.0, 56);
        let c = cfg(4, 8);
        let src = structured_mask(&w, &c).unwrap();
        let conv = convert_mask(&w, &src, &c, false, None, &ConvertOptions::default()).unwrap();
        assert_eq!(conv.mask, src);
        assert_eq!(conv.flipped, 0);
        assert_eq!(conv.weights, apply_mask(&w, &src));
    }

    #[test]
    fn convert_flip_count_matches_violations() {
        let w = gaussian_matrix(16, 16, 0.0, 1.0, 57);
        let src = unstructured_mask(&w, 0.5).unwrap();
        let c = cfg(4, 8);
        let (_, predicted) = count_violations(&src, &c).unwrap();
        let conv = convert_mask(&w, &src, &c, false, None, &ConvertOptions::default()).unwrap();
        assert_eq!(conv.flipped, predicted);
        assert_eq!(count_violations(&conv.mask, &c).unwrap(), (0, 0));
    }

    #[test]
    fn convert_transposable_to_smaller_block() {
        let w = gaussian_matrix(16, 16, 0.0, 1.0, 58);
        let big = cfg(4, 8);
        let src = crate::flow::optimal_transposable_mask(&w, &big).unwrap();
        let small = cfg(2, 4);
        let conv = convert_mask(&w, &src, &small, true, None, &ConvertOptions::default()).unwrap();
        assert_eq!(count_violations(&conv.mask, &small).unwrap(), (0, 0));
        assert_eq!(
            count_violations(&conv.mask.transpose(), &small).unwrap(),
            (0, 0)
        );
        // never un-prunes
        for (s, t) in src.bits().iter().zip(conv.mask.bits()) {
            assert!(!(s == &0 && t == &1));
        }
    }

    #[test]
    fn convert_requires_calibration_for_adaprune() {
        let w = gaussian_matrix(8, 8, 0.0, 1.0, 59);
        let src = Mask::all_ones(8, 8);
        let opts = ConvertOptions {
            adaprune: true,
            ..Default::default()
        };
        assert!(matches!(
            convert_mask(&w, &src, &cfg(2, 4), false, None, &opts),
            Err(Error::MissingArgument(_))
        ));
    }
}
