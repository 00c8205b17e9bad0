use nalgebra::DMatrix;
use thiserror::Error;

use crate::graph::CommGraph;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("expected {expected} values for {n} blocks of dimension {dim}, got {got}")]
pub struct ShapeError {
    pub n: usize,
    pub dim: usize,
    pub expected: usize,
    pub got: usize,
}

/// `n` per-agent vectors of length `dim`, stored contiguously
/// (agent-major). This is the stacked vector `col(y_1, ..., y_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Blocks {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Blocks {
            n,
            dim,
            data: vec![0.0; n * dim],
        }
    }

    pub fn from_vec(n: usize, dim: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if data.len() != n * dim {
            return Err(ShapeError {
                n,
                dim,
                expected: n * dim,
                got: data.len(),
            });
        }
        Ok(Blocks { n, dim, data })
    }

    /// One scalar per agent.
    pub fn from_scalars(values: &[f64]) -> Self {
        Blocks {
            n: values.len(),
            dim: 1,
            data: values.to_vec(),
        }
    }

    /// `n` copies of the same block, i.e. `1_n ⊗ value`.
    pub fn repeated(n: usize, value: &[f64]) -> Self {
        Blocks {
            n,
            dim: value.len(),
            data: value.repeat(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Blocks) -> bool {
        self.n == other.n && self.dim == other.dim
    }

    pub fn dot(&self, other: &Blocks) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, other: &Blocks) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn mean_block(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for i in 0..self.n {
            for (m, v) in mean.iter_mut().zip(self.block(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= self.n as f64;
        }
        mean
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `(L ⊗ I_d) y` computed from the Laplacian matrix.
///
/// Uses the zero row sums of `L` to evaluate row `i` as
/// `Σ_{j≠i} (-l_ij)(y_i - y_j)` in increasing `j`, so the result is
/// bitwise identical to summing neighbor disagreements.
pub fn laplacian_apply(l: &DMatrix<f64>, y: &Blocks) -> Blocks {
    let mut out = Blocks::zeros(y.n, y.dim);
    for i in 0..y.n {
        for j in 0..y.n {
            let lij = l[(i, j)];
            if j == i || lij == 0.0 {
                continue;
            }
            let w = -lij;
            for c in 0..y.dim {
                out.data[i * y.dim + c] += w * (y.data[i * y.dim + c] - y.data[j * y.dim + c]);
            }
        }
    }
    out
}

/// `(L ⊗ I_d) y` evaluated agent by agent from neighbor lists.
pub fn graph_apply(g: &CommGraph, y: &Blocks) -> Blocks {
    let mut out = Blocks::zeros(y.n, y.dim);
    for i in 0..y.n {
        let dim = y.dim;
        g.disagreement_into(&y.data, dim, i, &mut out.data[i * dim..(i + 1) * dim]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_and_graph_routes_agree_bitwise() {
        let g = CommGraph::from_edges(4, &[(0, 1, 0.3), (1, 2, 1.7), (2, 3, 1.0), (0, 2, 2.2)])
            .unwrap();
        let y =
            Blocks::from_vec(4, 2, vec![0.1, -3.3, 7.7, 1e-3, -2.5, 4.0, 1.0 / 3.0, 9.9]).unwrap();
        assert_eq!(laplacian_apply(&g.laplacian(), &y), graph_apply(&g, &y));
    }

    #[test]
    fn shape_checks() {
        assert!(Blocks::from_vec(2, 2, vec![1.0; 3]).is_err());
        let b = Blocks::repeated(3, &[1.0, 2.0]);
        assert_eq!(b.block(2), &[1.0, 2.0]);
        assert_eq!(b.mean_block(), vec![1.0, 2.0]);
    }
}
