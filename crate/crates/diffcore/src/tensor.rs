/// Dense rank-2 tensor of 64-bit floats, row-major.
///
/// Vectors are represented as 1xN rows and scalars as 1x1. Shapes are fixed
/// at construction; every operation that combines tensors checks shape
/// compatibility and panics on mismatch (those are programming errors, not
/// data errors).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "tensor: {} values do not fill a {}x{} shape",
            data.len(),
            rows,
            cols
        );
        Tensor { shape: [rows, cols], data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { shape: [rows, cols], data: vec![0.0; rows * cols] }
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Tensor { shape: [rows, cols], data: vec![value; rows * cols] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: [1, 1], data: vec![value] }
    }

    /// A 1xN row vector.
    pub fn row(values: Vec<f64>) -> Self {
        let n = values.len();
        Tensor { shape: [1, n], data: values }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.shape[0], self.shape[1])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.shape[1] + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// The single value of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape, [1, 1], "item: tensor is {}x{}, not scalar", self.rows(), self.cols());
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = self.shape();
        let mut out = Tensor::zeros(c, r);
        for i in 0..r {
            for j in 0..c {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Tensor) -> Tensor {
        let (m, k) = self.shape();
        let (k2, n) = rhs.shape();
        assert_eq!(k, k2, "matmul: inner dims differ, {m}x{k} vs {k2}x{n}");
        let mut out = Tensor::zeros(m, n);
        for i in 0..m {
            let lhs_row = self.row_slice(i);
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (p, &a) in lhs_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let rhs_row = rhs.row_slice(p);
                for j in 0..n {
                    out_row[j] += a * rhs_row[j];
                }
            }
        }
        out
    }

    pub fn add_assign_scaled(&mut self, other: &Tensor, scale: f64) {
        assert_eq!(self.shape, other.shape, "add_assign_scaled: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::new(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    #[should_panic(expected = "inner dims differ")]
    fn matmul_shape_mismatch_panics() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(2, 3);
        let _ = a.matmul(&b);
    }

    #[test]
    fn transpose_roundtrip() {
        let a = Tensor::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.transpose().transpose(), a);
    }
}
