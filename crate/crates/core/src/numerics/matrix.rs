use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
///
/// Layer weights are stored input-major: row `i` holds the outgoing weights of
/// input unit `i`, so both a dense and a sparse forward pass walk contiguous
/// rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("matrix shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
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

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear head `y = W^T x + b` for input-major `W` (shape `in x out`).
pub fn affine_forward(w: &DenseMatrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != w.rows || b.len() != w.cols {
        return Err(Error::Shape(format!(
            "affine layer {}x{} with input {} and bias {}",
            w.rows,
            w.cols,
            x.len(),
            b.len()
        )));
    }
    let mut y = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(xi, w.row(i), &mut y);
        }
    }
    Ok(y)
}

/// `tanh(W^T x + b)`.
pub fn affine_tanh_forward(w: &DenseMatrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let mut y = affine_forward(w, b, x)?;
    tanh_in_place(&mut y);
    Ok(y)
}

/// Affine layer over a sparse input given as `(index, value)` pairs.
pub fn affine_sparse_forward(
    w: &DenseMatrix,
    b: &[f64],
    indices: &[u32],
    values: &[f64],
) -> Result<Vec<f64>> {
    if b.len() != w.cols || indices.len() != values.len() {
        return Err(Error::Shape("sparse affine arguments disagree".into()));
    }
    let mut y = b.to_vec();
    for (&i, &v) in indices.iter().zip(values) {
        let i = i as usize;
        if i >= w.rows {
            return Err(Error::Shape(format!(
                "sparse index {i} outside layer with {} inputs",
                w.rows
            )));
        }
        axpy(v, w.row(i), &mut y);
    }
    Ok(y)
}

pub fn tanh_in_place(v: &mut [f64]) {
    for x in v {
        *x = x.tanh();
    }
}

/// Turns the gradient w.r.t. `tanh` outputs into the gradient w.r.t. its
/// pre-activations, given the activations `h`.
pub fn tanh_backward_in_place(grad: &mut [f64], h: &[f64]) {
    for (g, hv) in grad.iter_mut().zip(h) {
        *g *= 1.0 - hv * hv;
    }
}

/// Accumulates the gradients of a dense affine layer.
///
/// `gy` is the gradient w.r.t. the layer output. Parameter gradients are added
/// into `gw`/`gb`; the input gradient, if requested, is written to `gx`.
pub fn affine_backward(
    w: &DenseMatrix,
    x: &[f64],
    gy: &[f64],
    gw: &mut DenseMatrix,
    gb: &mut [f64],
    gx: Option<&mut [f64]>,
) {
    debug_assert_eq!(w.shape(), gw.shape());
    axpy(1.0, gy, gb);
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(xi, gy, gw.row_mut(i));
        }
    }
    if let Some(gx) = gx {
        for (i, g) in gx.iter_mut().enumerate() {
            *g = dot(w.row(i), gy);
        }
    }
}

/// Backward pass of [`affine_sparse_forward`]; only rows of active inputs are
/// touched.
pub fn affine_sparse_backward(
    indices: &[u32],
    values: &[f64],
    gy: &[f64],
    gw: &mut DenseMatrix,
    gb: &mut [f64],
) {
    axpy(1.0, gy, gb);
    for (&i, &v) in indices.iter().zip(values) {
        if v != 0.0 {
            axpy(v, gy, gw.row_mut(i as usize));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, SeededRng};

    #[test]
    fn zero_layer_gives_zero() {
        let w = DenseMatrix::zeros(3, 2);
        let y = affine_tanh_forward(&w, &[0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_is_nearly_linear_for_small_input() {
        let w = DenseMatrix::identity(3);
        let x = [1e-4, -2e-4, 3e-4];
        let y = affine_tanh_forward(&w, &[0.0; 3], &x).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn two_by_two_hand_case() {
        // weight rows are inputs: y0 = 1*x0 + 3*x1, y1 = 2*x0 + 4*x1
        let w = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = affine_forward(&w, &[0.5, -1.0], &[1.0, 2.0]).unwrap();
        assert_eq!(y, vec![7.5, 9.0]);
        let t = affine_tanh_forward(&w, &[0.5, -1.0], &[0.1, -0.2]).unwrap();
        assert!((t[0] - (0.5f64 + 0.1 - 0.6).tanh()).abs() < 1e-15);
        assert!((t[1] - (-1.0f64 + 0.2 - 0.8).tanh()).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let w = DenseMatrix::zeros(3, 2);
        assert!(matches!(
            affine_forward(&w, &[0.0, 0.0], &[1.0]),
            Err(Error::Shape(_))
        ));
        assert!(DenseMatrix::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn sparse_forward_matches_dense() {
        let mut rng = SeededRng::new(5);
        let data = (0..20).map(|_| rng.standard_normal()).collect();
        let w = DenseMatrix::from_vec(5, 4, data).unwrap();
        let b = [0.1, 0.2, -0.3, 0.0];
        let dense = [0.0, 0.7, 0.0, 0.0, -0.2];
        let a = affine_forward(&w, &b, &dense).unwrap();
        let s = affine_sparse_forward(&w, &b, &[1, 4], &[0.7, -0.2]).unwrap();
        for (x, y) in a.iter().zip(&s) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    fn random_matrix(rng: &mut SeededRng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_vec(r, c, (0..r * c).map(|_| rng.standard_normal()).collect()).unwrap()
    }

    // loss = sum(c .* tanh(W^T x + b)) checked w.r.t. W, b and x.
    #[test]
    fn tanh_layer_gradients_pass_grad_check() {
        let mut rng = SeededRng::new(17);
        for _ in 0..5 {
            let (nin, nout) = (4, 3);
            let w = random_matrix(&mut rng, nin, nout);
            let b: Vec<f64> = (0..nout).map(|_| rng.standard_normal()).collect();
            let x: Vec<f64> = (0..nin).map(|_| rng.standard_normal()).collect();
            let c: Vec<f64> = (0..nout).map(|_| rng.standard_normal()).collect();

            let pack = |w: &DenseMatrix, b: &[f64], x: &[f64]| {
                let mut p = w.as_slice().to_vec();
                p.extend_from_slice(b);
                p.extend_from_slice(x);
                p
            };
            let loss = |p: &[f64]| {
                let w = DenseMatrix::from_vec(nin, nout, p[..nin * nout].to_vec()).unwrap();
                let b = &p[nin * nout..nin * nout + nout];
                let x = &p[nin * nout + nout..];
                let h = affine_tanh_forward(&w, b, x).unwrap();
                h.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
            };

            let h = affine_tanh_forward(&w, &b, &x).unwrap();
            let mut gy = c.clone();
            tanh_backward_in_place(&mut gy, &h);
            let mut gw = DenseMatrix::zeros(nin, nout);
            let mut gb = vec![0.0; nout];
            let mut gx = vec![0.0; nin];
            affine_backward(&w, &x, &gy, &mut gw, &mut gb, Some(&mut gx));
            let analytic = pack(&gw, &gb, &gx);

            let err = grad_check(loss, &pack(&w, &b, &x), &analytic, 1e-5).unwrap();
            assert!(err < 1e-4, "relative error {err}");
        }
    }

    #[test]
    fn sparse_backward_matches_dense_backward() {
        let w = DenseMatrix::zeros(5, 2);
        let gy = [0.3, -0.4];
        let mut gw_dense = DenseMatrix::zeros(5, 2);
        let mut gb_dense = vec![0.0; 2];
        affine_backward(
            &w,
            &[0.0, 2.0, 0.0, 0.0, 1.0],
            &gy,
            &mut gw_dense,
            &mut gb_dense,
            None,
        );
        let mut gw_sparse = DenseMatrix::zeros(5, 2);
        let mut gb_sparse = vec![0.0; 2];
        affine_sparse_backward(&[1, 4], &[2.0, 1.0], &gy, &mut gw_sparse, &mut gb_sparse);
        assert_eq!(gw_dense, gw_sparse);
        assert_eq!(gb_dense, gb_sparse);
    }
}
