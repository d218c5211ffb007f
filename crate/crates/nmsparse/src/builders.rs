//! Magnitude-based mask builders and the N:M enforcement pipeline.

use crate::error::{Error, Result};
use crate::tensor::{iter_row_blocks, magnitude_order, Mask, Matrix, NmConfig};

/// Prune exactly ⌊sparsity × rows × cols⌋ smallest-magnitude elements
/// under a single global threshold.
pub fn unstructured_mask(mat: &Matrix, sparsity: f64) -> Result<Mask> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidConfig(format!(
            "sparsity must be in [0,1), got {sparsity}"
        )));
    }
    let total = mat.rows() * mat.cols();
    let prune = (sparsity * total as f64).floor() as usize;
    let mut bits = vec![1u8; total];
    for &idx in magnitude_order(mat.data()).iter().take(prune) {
        bits[idx] = 0;
    }
    Mask::new(mat.rows(), mat.cols(), bits)
}

/// In every 1×M block, prune the N smallest-magnitude elements.
pub fn structured_mask(mat: &Matrix, cfg: &NmConfig) -> Result<Mask> {
    let blocks = iter_row_blocks(mat, cfg)?;
    let mut bits = vec![1u8; mat.rows() * mat.cols()];
    for b in blocks {
        let vals = mat.block_values(&b);
        for &local in magnitude_order(&vals).iter().take(cfg.n()) {
            bits[b.row * mat.cols() + b.col + local] = 0;
        }
    }
    Mask::new(mat.rows(), mat.cols(), bits)
}

/// In every 1×M block, prune the contiguous window of N positions with
/// the smallest summed magnitude; leftmost window wins ties.
pub fn sequential_mask(mat: &Matrix, cfg: &NmConfig) -> Result<Mask> {
    let blocks = iter_row_blocks(mat, cfg)?;
    let (n, m) = (cfg.n(), cfg.m());
    let mut bits = vec![1u8; mat.rows() * mat.cols()];
    for b in blocks {
        let vals = mat.block_values(&b);
        let mut best = (f64::INFINITY, 0usize);
        for start in 0..=(m - n) {
            let cost: f64 = vals[start..start + n].iter().map(|v| v.abs()).sum();
            if cost < best.0 {
                best = (cost, start);
            }
        }
        for local in best.1..best.1 + n {
            bits[b.row * mat.cols() + b.col + local] = 0;
        }
    }
    Mask::new(mat.rows(), mat.cols(), bits)
}

/// Blocks violating the N:M pattern, and the total number of kept
/// weights that would have to be flipped to zero to fix them.
pub fn count_violations(mask: &Mask, cfg: &NmConfig) -> Result<(usize, usize)> {
    let m = cfg.m();
    if !mask.cols().is_multiple_of(m) {
        return Err(Error::Dimension(format!(
            "mask cols {} not divisible by M={m}",
            mask.cols()
        )));
    }
    let mut violating = 0usize;
    let mut flips = 0usize;
    for i in 0..mask.rows() {
        for b in 0..mask.cols() / m {
            let zeros = (0..m).filter(|&j| !mask.kept(i, b * m + j)).count();
            if zeros < cfg.n() {
                violating += 1;
                flips += cfg.n() - zeros;
            }
        }
    }
    Ok((violating, flips))
}

/// Force an arbitrary mask into the N:M structure. Already-pruned
/// entries rank as magnitude 0, so they are pruned preferentially and
/// the output kept-set is a subset of the input kept-set.
pub fn enforce_structured(mat: &Matrix, mask: &Mask, cfg: &NmConfig) -> Result<Mask> {
    if (mat.rows(), mat.cols()) != (mask.rows(), mask.cols()) {
        return Err(Error::ShapeMismatch {
            expected: (mat.rows(), mat.cols()),
            got: (mask.rows(), mask.cols()),
        });
    }
    let blocks = iter_row_blocks(mat, cfg)?;
    let mut bits = mask.bits().to_vec();
    for b in blocks {
        let base = b.row * mat.cols() + b.col;
        let vals: Vec<f64> = (0..b.m)
            .map(|j| {
                if mask.kept(b.row, b.col + j) {
                    mat.get(b.row, b.col + j)
                } else {
                    0.0
                }
            })
            .collect();
        let zeros = vals
            .iter()
            .enumerate()
            .filter(|(j, _)| !mask.kept(b.row, b.col + j))
            .count();
        if zeros >= cfg.n() {
            continue;
        }
        // The magnitude order puts the already-pruned (value 0) entries
        // first, so taking the N cheapest re-prunes them and flips only
        // the missing count of kept weights.
        for &local in magnitude_order(&vals).iter().take(cfg.n()) {
            bits[base + local] = 0;
        }
    }
    Mask::new(mat.rows(), mat.cols(), bits)
}
