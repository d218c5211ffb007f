//! Exhaustive ground truth for small tiles: optimal transposable masks
//! by enumeration, and exact transposable mask counts.

use crate::error::{Error, Result};
use crate::tensor::{Mask, Matrix, NmConfig};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use std::collections::HashMap;

fn combinations(m: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    fn rec(start: usize, m: usize, n: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == n {
            out.push(current.clone());
            return;
        }
        for i in start..m {
            current.push(i);
            rec(i + 1, m, n, current, out);
            current.pop();
        }
    }
    rec(0, m, n, &mut current, &mut out);
    out
}

/// Brute-force optimum by scanning every M×M pruning pattern; a
/// pattern is feasible when each row and each column prunes exactly N
/// entries. Only M ≤ 4 (2^16 patterns) is allowed. Ties break toward
/// the lowest pattern in row-major bit order.
pub fn exhaustive_transposable_optimum(block: &Matrix, cfg: &NmConfig) -> Result<(Mask, f64)> {
    let m = cfg.m();
    let n = cfg.n();
    if block.rows() != m || block.cols() != m {
        return Err(Error::Dimension(format!(
            "expected {m}x{m} block, got {}x{}",
            block.rows(),
            block.cols()
        )));
    }
    if m > 4 {
        return Err(Error::TooLarge(format!(
            "exhaustive search supports M <= 4, got {m}"
        )));
    }

    let cells = m * m;
    let row_bits: u32 = (1 << m) - 1;
    let mut best_cost = f64::INFINITY;
    let mut best: Option<u32> = None;
    // bit k set means entry (k / m, k % m) is pruned
    for pattern in 0u32..(1u32 << cells) {
        if pattern.count_ones() as usize != n * m {
            continue;
        }
        let rows_ok = (0..m).all(|i| ((pattern >> (i * m)) & row_bits).count_ones() as usize == n);
        if !rows_ok {
            continue;
        }
        let cols_ok = (0..m).all(|j| {
            (0..m)
                .filter(|&i| pattern & (1 << (i * m + j)) != 0)
                .count()
                == n
        });
        if !cols_ok {
            continue;
        }
        let cost: f64 = (0..cells)
            .filter(|&k| pattern & (1 << k) != 0)
            .map(|k| block.get(k / m, k % m).abs())
            .sum();
        if cost < best_cost {
            best_cost = cost;
            best = Some(pattern);
        }
    }

    let pattern = best.ok_or_else(|| Error::Infeasible("no feasible transposable mask".into()))?;
    let bits: Vec<u8> = (0..cells)
        .map(|k| u8::from(pattern & (1 << k) == 0))
        .collect();
    let mask = Mask::new(m, m, bits)?;
    let kept = block.l1() - best_cost;
    Ok((mask, kept))
}

/// Exact number of M×M binary matrices with exactly N zeros in every
/// row and column. Enumeration with memoization on the multiset of
/// remaining column needs; M ≤ 6.
pub fn exact_transposable_count(m: usize, n: usize) -> Result<BigUint> {
    if m > 6 {
        return Err(Error::TooLarge(format!(
            "exact count supports M <= 6, got {m}"
        )));
    }
    if n > m {
        return Err(Error::InvalidConfig(format!("need N <= M, got {n}:{m}")));
    }
    let choices = combinations(m, n);
    let mut memo: HashMap<(usize, Vec<u8>), BigUint> = HashMap::new();

    fn rec(
        rows_left: usize,
        needs: &mut Vec<u8>,
        choices: &[Vec<usize>],
        memo: &mut HashMap<(usize, Vec<u8>), BigUint>,
    ) -> BigUint {
        if rows_left == 0 {
            return if needs.iter().all(|&c| c == 0) {
                BigUint::one()
            } else {
                BigUint::zero()
            };
        }
        // permuting columns preserves the completion count
        let mut key: Vec<u8> = needs.clone();
        key.sort_unstable();
        if let Some(v) = memo.get(&(rows_left, key.clone())) {
            return v.clone();
        }
        let mut total = BigUint::zero();
        for choice in choices {
            if choice.iter().any(|&j| needs[j] == 0) {
                continue;
            }
            for &j in choice {
                needs[j] -= 1;
            }
            if needs.iter().all(|&c| (c as usize) < rows_left) {
                total += rec(rows_left - 1, needs, choices, memo);
            }
            for &j in choice {
                needs[j] += 1;
            }
        }
        memo.insert((rows_left, key), total.clone());
        total
    }

    let mut needs = vec![n as u8; m];
    Ok(rec(m, &mut needs, &choices, &mut memo))
}
