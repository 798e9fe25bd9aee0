//! Dense row-major matrices and the handful of kernels the toy model needs.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Uniform in `[-scale, scale]`.
    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect(),
        }
    }

    /// Random orthogonal square matrix (Gram-Schmidt on uniform rows).
    pub fn orthogonal(n: usize, rng: &mut impl Rng) -> Self {
        let mut m = Matrix::uniform(n, n, 1.0, rng);
        for i in 0..n {
            for j in 0..i {
                let proj = dot(m.row(i), m.row(j));
                let (head, tail) = m.data.split_at_mut(i * n);
                axpy(&mut tail[..n], -proj, &head[j * n..(j + 1) * n]);
            }
            let norm = dot(m.row(i), m.row(i)).sqrt();
            m.row_mut(i).iter_mut().for_each(|x| *x /= norm);
        }
        m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `out += x · W` for a row vector `x` (length `W.rows`).
pub fn add_vec_mat(out: &mut [f64], x: &[f64], w: &Matrix) {
    debug_assert_eq!(x.len(), w.rows);
    debug_assert_eq!(out.len(), w.cols);
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(out, xi, w.row(i));
        }
    }
}

/// `out += W · g` (length `W.rows`), the back-propagated row-vector gradient.
pub fn add_mat_vec(out: &mut [f64], w: &Matrix, g: &[f64]) {
    debug_assert_eq!(g.len(), w.cols);
    debug_assert_eq!(out.len(), w.rows);
    for (i, o) in out.iter_mut().enumerate() {
        *o += dot(w.row(i), g);
    }
}

/// `W += x ⊗ g`.
pub fn add_outer(w: &mut Matrix, x: &[f64], g: &[f64]) {
    debug_assert_eq!(x.len(), w.rows);
    debug_assert_eq!(g.len(), w.cols);
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(w.row_mut(i), xi, g);
        }
    }
}

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log-sum-exp of a row, stable for large entries.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(row);
    row.iter().map(|x| (x - lse).exp()).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_match_naive_products() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let mut out = vec![0.0; 3];
        add_vec_mat(&mut out, &[1.0, -1.0], &w);
        assert_eq!(out, [-3.0, -3.0, -3.0]);
        let mut back = vec![0.0; 2];
        add_mat_vec(&mut back, &w, &[1.0, 0.0, 1.0]);
        assert_eq!(back, [4.0, 10.0]);
        let mut g = Matrix::zeros(2, 3);
        add_outer(&mut g, &[2.0, 0.0], &[1.0, 2.0, 3.0]);
        assert_eq!(g.data, [2.0, 4.0, 6.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        use rand::SeedableRng;
        let q = Matrix::orthogonal(16, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        for i in 0..16 {
            for j in 0..16 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot(q.row(i), q.row(j)) - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn softmax_is_stable() {
        let p = softmax(&[1000.0, 1000.0]);
        assert!(p.iter().all(|x| (x - 0.5).abs() < 1e-12));
        assert!((log_sum_exp(&[0.0, 0.0, 0.0]) - 3f64.ln()).abs() < 1e-15);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
