use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tensor, MASK_NEG};

/// Direction of temporal context for a masked self-attention block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Position `j` attends to earlier positions `i < j`.
    Forward,
    /// Position `j` attends to later positions `i > j`.
    Backward,
}

/// Additive `[m×m]` mask indexed `[i][j]`: `0` where source `i` may feed
/// target `j`, a large negative value elsewhere. The diagonal is always masked.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionalMask {
    direction: Direction,
    matrix: Tensor,
}

impl PositionalMask {
    pub fn new(size: usize, direction: Direction) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("positional mask size must be positive".into()));
        }
        let mut matrix = Tensor::full([size, size], MASK_NEG);
        for i in 0..size {
            for j in 0..size {
                let open = match direction {
                    Direction::Forward => i < j,
                    Direction::Backward => i > j,
                };
                if open {
                    matrix.set(&[i, j], 0.0);
                }
            }
        }
        Ok(PositionalMask { direction, matrix })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn size(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    /// Whether source `i` is visible from target `j`.
    pub fn is_open(&self, i: usize, j: usize) -> bool {
        self.matrix.get(&[i, j]) == 0.0
    }
}
