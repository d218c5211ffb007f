//! Closed-form mask analytics: diversity counts, block violation
//! probability, phase curves, and per-layer N selection.

use crate::error::{Error, Result};
use crate::tensor::NmConfig;
use num_bigint::{BigInt, BigUint};
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    Unstructured,
    Structured,
    Transposable,
    Sequential,
}

impl std::str::FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unstructured" => Ok(Self::Unstructured),
            "structured" => Ok(Self::Structured),
            "transposable" => Ok(Self::Transposable),
            "sequential" => Ok(Self::Sequential),
            other => Err(Error::InvalidConfig(format!("unknown structure '{other}'"))),
        }
    }
}

impl std::fmt::Display for Structure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Unstructured => "unstructured",
            Self::Structured => "structured",
            Self::Transposable => "transposable",
            Self::Sequential => "sequential",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DiversityQuery {
    /// Total element count of the tensor.
    pub tensor_size: u64,
    pub cfg: NmConfig,
    pub structure: Structure,
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut result = BigUint::one();
    for i in 1..=k {
        result = result * BigUint::from(n - k + i) / BigUint::from(i);
    }
    result
}

fn factorial(n: u64) -> BigUint {
    let mut result = BigUint::one();
    for i in 2..=n {
        result *= BigUint::from(i);
    }
    result
}

/// Number of masks satisfying the structure at sparsity N/M, exact.
pub fn mask_diversity(q: &DiversityQuery) -> Result<BigUint> {
    let t = q.tensor_size;
    let n = q.cfg.n() as u64;
    let m = q.cfg.m() as u64;
    match q.structure {
        Structure::Unstructured => {
            if !(n * t).is_multiple_of(m) {
                return Err(Error::Divisibility(format!(
                    "N·T/M = {n}·{t}/{m} is not integral"
                )));
            }
            Ok(binomial(t, n * t / m))
        }
        Structure::Structured => {
            if !t.is_multiple_of(m) {
                return Err(Error::Divisibility(format!("T={t} not divisible by M={m}")));
            }
            Ok(binomial(m, n).pow((t / m) as u32))
        }
        Structure::Transposable => {
            if !t.is_multiple_of(m * m) {
                return Err(Error::Divisibility(format!(
                    "T={t} not divisible by M²={}",
                    m * m
                )));
            }
            let per_block: BigUint = (m - n + 1..=m).map(factorial).product();
            Ok(per_block.pow((t / (m * m)) as u32))
        }
        Structure::Sequential => {
            if !t.is_multiple_of(m) {
                return Err(Error::Divisibility(format!("T={t} not divisible by M={m}")));
            }
            Ok(BigUint::from(m - n + 1).pow((t / m) as u32))
        }
    }
}

/// Render a big integer as truncated scientific notation with two
/// significant digits, e.g. 576480100000000 → "5.7e14".
pub fn scientific(value: &BigUint) -> String {
    let digits = value.to_string();
    let exp = digits.len() - 1;
    if exp == 0 {
        return format!("{digits}e0");
    }
    let first = &digits[0..1];
    let second = &digits[1..2];
    format!("{first}.{second}e{exp}")
}

/// P(a Bernoulli(ρ) block of size M has at least N prunable entries),
/// compensated summation. Accepts the full range 0 ≤ N ≤ M so phase
/// curves and budget scans can evaluate the endpoints.
pub fn sparse_probability_raw(rho: f64, n: usize, m: usize) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for i in n..=m {
        let c = binomial(m as u64, i as u64)
            .to_f64()
            .expect("binomial(M,i) fits in f64 for supported M");
        let term = c * rho.powi(i as i32) * (1.0 - rho).powi((m - i) as i32);
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum.clamp(0.0, 1.0)
}

pub fn sparse_probability(rho: f64, cfg: &NmConfig) -> f64 {
    sparse_probability_raw(rho, cfg.n(), cfg.m())
}

/// Probability that a Bernoulli(ρ) block violates the N:M pattern.
pub fn violation_probability(rho: f64, cfg: &NmConfig) -> f64 {
    1.0 - sparse_probability(rho, cfg)
}

/// Exact rational evaluation of the sparse probability, for tests.
pub fn sparse_probability_exact(rho: &Ratio<BigInt>, cfg: &NmConfig) -> Ratio<BigInt> {
    let m = cfg.m();
    let n = cfg.n();
    let one = Ratio::from_integer(BigInt::one());
    let mut sum = Ratio::from_integer(BigInt::zero());
    for i in n..=m {
        let c = Ratio::from_integer(BigInt::from(binomial(m as u64, i as u64)));
        let mut term = c;
        for _ in 0..i {
            term *= rho.clone();
        }
        for _ in 0..(m - i) {
            term *= one.clone() - rho.clone();
        }
        sum += term;
    }
    sum
}

/// Sparse probability across N = 0..=M as (N/M, probability) pairs;
/// monotone non-increasing in N.
pub fn phase_curve(rho: f64, m: usize) -> Vec<(f64, f64)> {
    (0..=m)
        .map(|n| (n as f64 / m as f64, sparse_probability_raw(rho, n, m)))
        .collect()
}

/// Largest N whose violation probability stays within the budget;
/// 0 when even 1:M violates too often.
pub fn select_n_for_budget(rho: f64, m: usize, budget: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&budget) || budget == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "budget must be in (0,1), got {budget}"
        )));
    }
    for n in (1..=m).rev() {
        if 1.0 - sparse_probability_raw(rho, n, m) <= budget {
            return Ok(n);
        }
    }
    Ok(0)
}
