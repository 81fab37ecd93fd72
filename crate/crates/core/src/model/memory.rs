use crate::error::{contract_err, shape_err, Result};
use crate::tensor::{Real, Tensor};

/// Per-shape global feature vectors, one row per shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank<T> {
    rows: Tensor<T>,
    trainable: Vec<bool>,
}

impl<T: Real> MemoryBank<T> {
    /// Trainable rows drawn from N(0, 0.02²).
    pub fn random(shapes: usize, dim: usize, seed: u64) -> Result<Self> {
        let rows = Tensor::randn_init(&[shapes, dim], seed)?.with_requires_grad(false);
        Ok(Self { rows, trainable: vec![true; shapes] })
    }

    /// All-zero rows that never receive updates.
    pub fn frozen_zeros(shapes: usize, dim: usize) -> Result<Self> {
        Ok(Self { rows: Tensor::zeros(&[shapes, dim])?, trainable: vec![false; shapes] })
    }

    pub fn from_parts(rows: Tensor<T>, trainable: Vec<bool>) -> Result<Self> {
        let rows = rows.with_requires_grad(false);
        if rows.shape().len() != 2 || rows.shape()[0] != trainable.len() {
            return Err(shape_err!(
                "memory matrix {:?} does not match {} trainable flags",
                rows.shape(),
                trainable.len()
            ));
        }
        Ok(Self { rows, trainable })
    }

    pub fn shapes(&self) -> usize {
        self.rows.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.rows.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[T] {
        let d = self.dim();
        &self.rows.data()[i * d..(i + 1) * d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let d = self.dim();
        &mut self.rows.data_mut()[i * d..(i + 1) * d]
    }

    pub fn is_trainable(&self, i: usize) -> bool {
        self.trainable[i]
    }

    pub fn trainable_flags(&self) -> &[bool] {
        &self.trainable
    }

    pub fn set_trainable(&mut self, i: usize, flag: bool) {
        self.trainable[i] = flag;
    }

    pub fn matrix(&self) -> &Tensor<T> {
        &self.rows
    }

    pub fn rows_vec(&self) -> Vec<Vec<T>> {
        (0..self.shapes()).map(|i| self.row(i).to_vec()).collect()
    }

    /// `F ← F − ε·∂L/∂F` for each `(row, gradient)` pair. Frozen rows are
    /// rejected.
    pub fn descend(&mut self, updates: &[(usize, Vec<T>)], eps: T) -> Result<()> {
        for (row, g) in updates {
            if *row >= self.shapes() {
                return Err(contract_err!("memory row {row} out of range"));
            }
            if !self.trainable[*row] {
                return Err(contract_err!("memory row {row} is frozen"));
            }
            if g.len() != self.dim() {
                return Err(shape_err!("memory gradient of length {} for dim {}", g.len(), self.dim()));
            }
        }
        for (row, g) in updates {
            self.row_mut(*row).iter_mut().zip(g).for_each(|(x, &d)| *x -= eps * d);
        }
        Ok(())
    }

    /// Appends the rows of `other`, returning the index of its first row.
    pub fn extend(&mut self, other: &MemoryBank<T>) -> Result<usize> {
        if other.dim() != self.dim() {
            return Err(shape_err!("memory dims differ: {} vs {}", self.dim(), other.dim()));
        }
        let first = self.shapes();
        let mut data = self.rows.data().to_vec();
        data.extend_from_slice(other.rows.data());
        self.rows = Tensor::from_vec(&[first + other.shapes(), self.dim()], data)?;
        self.trainable.extend_from_slice(&other.trainable);
        Ok(first)
    }
}
