use serde::{Deserialize, Serialize};

/// Dense row-major matrix. Bias vectors are stored as `rows x 1` matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn column(values: Vec<f64>) -> Self {
        let rows = values.len();
        Matrix::from_vec(rows, 1, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += self * x`
    pub fn mul_vec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), x);
        }
    }

    /// `out += self * x`, touching only the listed nonzero columns of `x`.
    pub fn mul_sparse_add(&self, x: &[f64], nonzero: &[usize], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            *o += nonzero.iter().map(|&c| row[c] * x[c]).sum::<f64>();
        }
    }

    /// `out += self^T * d`
    pub fn tmul_vec_add(&self, d: &[f64], out: &mut [f64]) {
        debug_assert_eq!(d.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &dr) in d.iter().enumerate() {
            if dr == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * dr;
            }
        }
    }

    /// `self += d * x^T`
    pub fn add_outer(&mut self, d: &[f64], x: &[f64]) {
        let cols = self.cols;
        for (r, &dr) in d.iter().enumerate() {
            if dr == 0.0 {
                continue;
            }
            for (w, &xc) in self.data[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                *w += dr * xc;
            }
        }
    }

    /// `self += d * x^T` over the listed nonzero columns of `x`.
    pub fn add_outer_sparse(&mut self, d: &[f64], x: &[f64], nonzero: &[usize]) {
        let cols = self.cols;
        for (r, &dr) in d.iter().enumerate() {
            if dr == 0.0 {
                continue;
            }
            let row = &mut self.data[r * cols..(r + 1) * cols];
            for &c in nonzero {
                row[c] += dr * x[c];
            }
        }
    }

    /// `self += v` for a column matrix.
    pub fn add_column(&mut self, v: &[f64]) {
        for (a, b) in self.data.iter_mut().zip(v) {
            *a += b;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn nonzero_indices(x: &[f64]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_hand_values() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]);
        let mut out = vec![0.5, 0.0];
        m.mul_vec_add(&[1.0, 1.0, 2.0], &mut out);
        assert_eq!(out, [9.5, 7.0]);

        let mut sparse = vec![0.0, 0.0];
        m.mul_sparse_add(&[0.0, 3.0, 0.0], &[1], &mut sparse);
        assert_eq!(sparse, [6.0, 0.0]);

        let mut t = vec![0.0; 3];
        m.tmul_vec_add(&[1.0, 2.0], &mut t);
        assert_eq!(t, [-1.0, 2.0, 11.0]);

        let mut g = Matrix::zeros(2, 3);
        g.add_outer(&[1.0, -1.0], &[1.0, 2.0, 3.0]);
        assert_eq!(g.as_slice(), [1.0, 2.0, 3.0, -1.0, -2.0, -3.0]);
    }

    #[test]
    fn softmax_is_stable() {
        let y = softmax(&[1000.0, 1000.0, 1000.0]);
        for p in y {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }
}
