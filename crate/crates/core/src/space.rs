//! Discrete state spaces: a coordinate vector with quadrature weights and a
//! block structure describing which coordinates sample a field on `[0,1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Nodal values of a function on `[0,1]` at the given positions.
    Field { positions: Vec<f64> },
    /// Independent scalar coordinates.
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub kind: BlockKind,
    /// Whether noise may act on this block.
    pub noisy: bool,
}

/// Coordinates with the weighted inner product `⟨x, y⟩ = Σ w_i x_i y_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    weights: Vec<f64>,
    blocks: Vec<Block>,
}

impl StateSpace {
    pub fn new(weights: Vec<f64>, blocks: Vec<Block>) -> Result<Self> {
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("state weights must be positive".into()));
        }
        let mut next = 0;
        for b in &blocks {
            if b.offset != next {
                return Err(Error::Config(format!("block {} is not contiguous", b.name)));
            }
            if let BlockKind::Field { positions } = &b.kind {
                if positions.len() != b.len {
                    return Err(Error::Config(format!(
                        "block {} has mismatched positions",
                        b.name
                    )));
                }
            }
            next += b.len;
        }
        if next != weights.len() {
            return Err(Error::Config("blocks do not cover the state vector".into()));
        }
        Ok(StateSpace { weights, blocks })
    }

    /// `R^dim` with unit weights, one scalar block.
    pub fn euclidean(dim: usize) -> Self {
        StateSpace {
            weights: vec![1.0; dim],
            blocks: vec![Block {
                name: "x".into(),
                offset: 0,
                len: dim,
                kind: BlockKind::Scalar,
                noisy: true,
            }],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Switches noise on or off for the named block.
    pub fn set_noisy(&mut self, name: &str, noisy: bool) -> Result<()> {
        let b = self
            .blocks
            .iter_mut()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Config(format!("no block named {name}")))?;
        b.noisy = noisy;
        Ok(())
    }

    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(x.iter().zip(y))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn norm_sq(&self, x: &[f64]) -> f64 {
        self.inner(x, x)
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.norm_sq(x).sqrt()
    }
}
