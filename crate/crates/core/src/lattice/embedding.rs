/// Orthonormal basis of the zero-sum hyperplane in `R^(d+1)`, stored as a
/// `(d+1) x d` matrix.
///
/// Column `j` (0-based) is `(1, ..., 1, -(j+1), 0, ..., 0) / sqrt((j+1)(j+2))`
/// with `j+1` leading ones: an upper-triangular sign pattern scaled column by
/// column.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    // Row-major, (dim + 1) rows by dim columns.
    entries: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..=self.dim).map(|r| self.get(r, col)).collect()
    }

    /// `out = E * p`, with `out.len() == d + 1`.
    pub fn embed(&self, p: &[f64], out: &mut [f64]) {
        debug_assert_eq!(p.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim + 1);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.entries[r * self.dim..(r + 1) * self.dim];
            *o = row.iter().zip(p).map(|(e, x)| e * x).sum();
        }
    }
}

pub fn build_embedding(dim: usize) -> EmbeddingMatrix {
    assert!(dim >= 1, "embedding dimension must be positive");
    let mut entries = vec![0.0; (dim + 1) * dim];
    for col in 0..dim {
        let j = (col + 1) as f64;
        let scale = 1.0 / (j * (j + 1.0)).sqrt();
        for row in 0..=col {
            entries[row * dim + col] = scale;
        }
        entries[(col + 1) * dim + col] = -j * scale;
    }
    EmbeddingMatrix { dim, entries }
}
