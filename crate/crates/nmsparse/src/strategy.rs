//! Runtime-selectable mask construction strategies.
//!
//! Every builder sits behind [`MaskStrategy`] and is registered by
//! name, so the CLI (and embedders) pick a strategy with a string and
//! new variants slot in without touching call sites.

use crate::builders;
use crate::error::{Error, Result};
use crate::flow;
use crate::greedy;
use crate::tensor::{Mask, Matrix, NmConfig};

/// Parameters shared by all strategies; each strategy validates the
/// subset it needs.
#[derive(Debug, Clone, Copy, Default)]
pub struct StrategyParams {
    pub cfg: Option<NmConfig>,
    pub sparsity: Option<f64>,
    /// Drop surplus pruned entries after greedy selection.
    pub repair: bool,
}

impl StrategyParams {
    fn cfg(&self) -> Result<&NmConfig> {
        self.cfg
            .as_ref()
            .ok_or_else(|| Error::MissingArgument("this strategy requires --n and --m".into()))
    }

    fn sparsity(&self) -> Result<f64> {
        self.sparsity
            .ok_or_else(|| Error::MissingArgument("this strategy requires --sparsity".into()))
    }
}

pub trait MaskStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self, mat: &Matrix, params: &StrategyParams) -> Result<Mask>;
    /// Tile side for per-tile reporting; None for global strategies.
    fn tile_side(&self, params: &StrategyParams) -> Option<usize> {
        let _ = params;
        None
    }
}

struct Unstructured;

impl MaskStrategy for Unstructured {
    fn name(&self) -> &'static str {
        "unstructured"
    }

    fn build(&self, mat: &Matrix, params: &StrategyParams) -> Result<Mask> {
        builders::unstructured_mask(mat, params.sparsity()?)
    }
}

struct StructuredNm;

impl MaskStrategy for StructuredNm {
    fn name(&self) -> &'static str {
        "nm"
    }

    fn build(&self, mat: &Matrix, params: &StrategyParams) -> Result<Mask> {
        builders::structured_mask(mat, params.cfg()?)
    }
}

struct SequentialNm;

impl MaskStrategy for SequentialNm {
    fn name(&self) -> &'static str {
        "sequential"
    }

    fn build(&self, mat: &Matrix, params: &StrategyParams) -> Result<Mask> {
        builders::sequential_mask(mat, params.cfg()?)
    }
}

struct TransposableOpt;

impl MaskStrategy for TransposableOpt {
    fn name(&self) -> &'static str {
        "transposable-opt"
    }

    fn build(&self, mat: &Matrix, params: &StrategyParams) -> Result<Mask> {
        flow::optimal_transposable_mask(mat, params.cfg()?)
    }

    fn tile_side(&self, params: &StrategyParams) -> Option<usize> {
        params.cfg.map(|c| c.m())
    }
}

struct TransposableGreedy;

impl MaskStrategy for TransposableGreedy {
    fn name(&self) -> &'static str {
        "transposable-greedy"
    }

    fn build(&self, mat: &Matrix, params: &StrategyParams) -> Result<Mask> {
        greedy::greedy_transposable_mask(mat, params.cfg()?, params.repair)
    }

    fn tile_side(&self, params: &StrategyParams) -> Option<usize> {
        params.cfg.map(|c| c.m())
    }
}

pub struct StrategyRegistry {
    entries: Vec<Box<dyn MaskStrategy>>,
}

impl StrategyRegistry {
    /// Registry with all built-in strategies.
    pub fn builtin() -> Self {
        Self {
            entries: vec![
                Box::new(Unstructured),
                Box::new(StructuredNm),
                Box::new(SequentialNm),
                Box::new(TransposableOpt),
                Box::new(TransposableGreedy),
            ],
        }
    }

    pub fn get(&self, name: &str) -> Result<&dyn MaskStrategy> {
        self.entries
            .iter()
            .map(|b| b.as_ref())
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|s| s.name()).collect()
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
