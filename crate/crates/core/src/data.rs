//! Labeled examples and datasets.

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Slack allowed on the unit-norm feature constraint for rounding.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// A labeled feature vector `(x, y)` with `||x||_2 <= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    x: Vector,
    y: f64,
}

impl Example {
    pub fn new(x: Vector, y: f64) -> Result<Self> {
        let norm = x.norm();
        if norm > 1.0 + NORM_TOLERANCE {
            return Err(Error::FeatureNormExceeded { norm });
        }
        if !y.is_finite() {
            return Err(Error::NonFinite { context: "label" });
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &Vector {
        &self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }
}

/// An immutable, nonempty sample `S_n` with a common feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let first = examples.first().ok_or(Error::EmptyDataset)?;
        let d = first.dim();
        if let Some(bad) = examples.iter().find(|e| e.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.dim(),
            });
        }
        Ok(Self { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.examples[0].dim()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    /// Neighboring dataset with position `i` replaced.
    pub fn with_replaced(&self, i: usize, example: Example) -> Result<Dataset> {
        if example.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: example.dim(),
            });
        }
        let mut examples = self.examples.clone();
        examples[i] = example;
        Ok(Dataset { examples })
    }

    /// Positions where the two datasets hold different examples.
    pub fn differing_positions(&self, other: &Dataset) -> Result<Vec<usize>> {
        if self.len() != other.len() {
            return Err(Error::Config(format!(
                "datasets have different sizes {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .examples
            .iter()
            .zip(&other.examples)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect())
    }
}
