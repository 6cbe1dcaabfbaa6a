//! Dense row-major `f64` tensors and the handful of primitives the models need.
//!
//! Everything here is deliberately small: shapes are plain `Vec<usize>`,
//! storage is a flat `Vec<f64>`, and 2-D helpers cover the matrix products
//! used by attention and linear layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("dimensions must be positive, got {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} values but {} were given",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Rows and columns of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::Shape(format!("expected a matrix, got shape {other:?}"))),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = *self.shape.last().unwrap_or(&0);
        &self.data[r * c..(r + 1) * c]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "element-wise op on {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::matrix(c, r, out)
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        let (n, k) = self.dims2()?;
        let (k2, m) = other.dims2()?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; n * m];
        matmul_into(&self.data, &other.data, &mut out, n, k, m);
        Tensor::matrix(n, m, out)
    }
}

/// `out[n×m] += a[n×k] · b[k×m]`
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[k×m] += aᵀ · b` with `a[n×k]`, `b[n×m]`.
pub(crate) fn matmul_tn_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[n×k] += a · bᵀ` with `a[n×m]`, `b[k×m]`.
pub(crate) fn matmul_nt_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, m: usize, k: usize) {
    for i in 0..n {
        let arow = &a[i * m..(i + 1) * m];
        for p in 0..k {
            let brow = &b[p * m..(p + 1) * m];
            out[i * k + p] += dot(arow, brow);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax of a slice, written into `out`.
pub(crate) fn softmax_slice(v: &[f64], out: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Softmax along `axis`, always subtracting the maximum first.
pub fn softmax(v: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= v.ndim() {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} out of range for shape {:?}",
            v.shape
        )));
    }
    v.ensure_finite("softmax input")?;
    let len = v.shape[axis];
    if len == 0 {
        return Err(Error::Empty("softmax axis"));
    }
    let inner: usize = v.shape[axis + 1..].iter().product();
    let outer: usize = v.shape[..axis].iter().product();
    let mut out = vec![0.0; v.len()];
    let mut buf = vec![0.0; len];
    let mut res = vec![0.0; len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            for (j, b) in buf.iter_mut().enumerate() {
                *b = v.data[base + j * inner];
            }
            softmax_slice(&buf, &mut res);
            for (j, r) in res.iter().enumerate() {
                out[base + j * inner] = *r;
            }
        }
    }
    Tensor::new(v.shape.clone(), out)
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Layer normalisation over the last axis.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, epsilon: f64) -> Result<Tensor> {
    let width = *x.shape.last().ok_or(Error::Empty("layer_norm input"))?;
    if width == 0 {
        return Err(Error::Empty("layer_norm row"));
    }
    if gain.len() != width || bias.len() != width {
        return Err(Error::Shape(format!(
            "layer_norm row width {width}, gain {}, bias {}",
            gain.len(),
            bias.len()
        )));
    }
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument("layer_norm epsilon must be positive".into()));
    }
    let mut out = x.data.clone();
    for row in out.chunks_mut(width) {
        let (mean, inv_std) = row_stats(row, epsilon);
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv_std * gain.data[j] + bias.data[j];
        }
    }
    Tensor::new(x.shape.clone(), out)
}

/// Mean and `1/sqrt(var + eps)` of one row (population variance).
pub(crate) fn row_stats(row: &[f64], epsilon: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + epsilon).sqrt())
}

/// `softmax(Q Kᵀ / sqrt(d_k)) V` for 2-D `Q[n×d_k]`, `K[m×d_k]`, `V[m×d_v]`.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (n, dk) = q.dims2()?;
    let (m, dk2) = k.dims2()?;
    let (m2, dv) = v.dims2()?;
    if dk != dk2 || m != m2 {
        return Err(Error::Shape(format!(
            "attention Q{:?} K{:?} V{:?}",
            q.shape, k.shape, v.shape
        )));
    }
    let scale = 1.0 / (dk as f64).sqrt();
    let mut scores = vec![0.0; n * m];
    matmul_nt_into(&q.data, &k.data, &mut scores, n, dk, m);
    let mut probs = vec![0.0; m];
    let mut out = vec![0.0; n * dv];
    for i in 0..n {
        let row: Vec<f64> = scores[i * m..(i + 1) * m].iter().map(|s| s * scale).collect();
        softmax_slice(&row, &mut probs);
        matmul_into(&probs, &v.data, &mut out[i * dv..(i + 1) * dv], 1, m, dv);
    }
    let out = Tensor::matrix(n, dv, out)?;
    out.ensure_finite("attention output")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn softmax_uniform_and_ln2() {
        let s = softmax(&Tensor::from_vec(vec![0.0, 0.0, 0.0]), 0).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax(&Tensor::from_vec(vec![0.0, 2f64.ln()]), 0).unwrap();
        assert!((s.data()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.data()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_large_inputs_match_shifted_oracle() {
        let v = [1000.0, 1000.5, 999.0];
        let s = softmax(&Tensor::from_vec(v.to_vec()), 0).unwrap();
        // oracle: exponentiate offsets from the max by hand
        let offs = [-0.5f64, 0.0, -1.5];
        let z: f64 = offs.iter().map(|o| o.exp()).sum();
        for (got, o) in s.data().iter().zip(offs) {
            assert!((got - o.exp() / z).abs() < 1e-15);
        }
        assert!((s.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_errors() {
        let bad = Tensor::from_vec(vec![0.0, f64::NAN]);
        assert!(matches!(softmax(&bad, 0), Err(Error::NonFinite(_))));
        assert!(softmax(&Tensor::from_vec(vec![1.0]), 1).is_err());
    }

    #[test]
    fn softmax_along_first_axis() {
        let t = Tensor::matrix(2, 3, vec![0.0, 1.0, 2.0, 0.0, 1.0, 2.0]).unwrap();
        let s = softmax(&t, 0).unwrap();
        for v in s.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = Tensor::matrix(1, 4, vec![1.0; 4]).unwrap();
        let y = layer_norm(&x, &Tensor::from_vec(vec![1.0; 4]), &Tensor::zeros(&[4]), 1e-5).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn layer_norm_two_values() {
        let x = Tensor::matrix(1, 2, vec![1.0, 3.0]).unwrap();
        let y = layer_norm(&x, &Tensor::from_vec(vec![1.0; 2]), &Tensor::zeros(&[2]), 1e-14).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-12);
        assert!((y.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_random_rows_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_matrix(&mut rng, 4, 8);
        let y = layer_norm(&x, &Tensor::from_vec(vec![1.0; 8]), &Tensor::zeros(&[8]), 1e-12).unwrap();
        for r in 0..4 {
            let row = y.row(r);
            let mut mean = 0.0;
            for v in row {
                mean += v;
            }
            mean /= 8.0;
            let mut var = 0.0;
            for v in row {
                var += (v - mean) * (v - mean);
            }
            var /= 8.0;
            assert!(mean.abs() < 1e-10, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-8, "var {var}");
        }
    }

    #[test]
    fn layer_norm_errors() {
        let x = Tensor::matrix(1, 2, vec![1.0, 3.0]).unwrap();
        assert!(layer_norm(&x, &Tensor::from_vec(vec![1.0; 3]), &Tensor::zeros(&[2]), 1e-5).is_err());
        assert!(layer_norm(&x, &Tensor::from_vec(vec![1.0; 2]), &Tensor::zeros(&[2]), 0.0).is_err());
    }

    #[test]
    fn attention_single_token_is_identity() {
        let t = Tensor::matrix(1, 3, vec![0.3, -1.2, 2.0]).unwrap();
        let out = scaled_dot_attention(&t, &t, &t).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn attention_saturates_on_matching_key() {
        let q = Tensor::matrix(1, 2, vec![100.0, 0.0]).unwrap();
        let k = Tensor::matrix(2, 2, vec![100.0, 0.0, 0.0, 100.0]).unwrap();
        let v = Tensor::matrix(2, 2, vec![1.0, 2.0, -3.0, 4.0]).unwrap();
        let out = scaled_dot_attention(&q, &k, &v).unwrap();
        assert!((out.data()[0] - 1.0).abs() < 1e-12);
        assert!((out.data()[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn attention_dimension_mismatch() {
        let a = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        let b = Tensor::matrix(2, 2, vec![0.0; 4]).unwrap();
        assert!(scaled_dot_attention(&a, &b, &b).is_err());
    }

    /// Literal three-loop reference.
    fn naive_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Vec<f64> {
        let (n, d) = q.dims2().unwrap();
        let (m, dv) = v.dims2().unwrap();
        let mut out = vec![0.0; n * dv];
        for i in 0..n {
            let mut s = vec![0.0; m];
            for j in 0..m {
                for p in 0..d {
                    s[j] += q.data()[i * d + p] * k.data()[j * d + p];
                }
                s[j] /= (d as f64).sqrt();
            }
            let mx = s.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = s.iter().map(|x| (x - mx).exp()).sum();
            for j in 0..m {
                let a = (s[j] - mx).exp() / z;
                for c in 0..dv {
                    out[i * dv + c] += a * v.data()[j * dv + c];
                }
            }
        }
        out
    }

    #[test]
    fn attention_three_tokens_matches_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_matrix(&mut rng, 3, 4);
        let k = random_matrix(&mut rng, 3, 4);
        let v = random_matrix(&mut rng, 3, 5);
        let got = scaled_dot_attention(&q, &k, &v).unwrap();
        for (a, b) in got.data().iter().zip(naive_attention(&q, &k, &v)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-50.0f64..50.0, 1..24), cols in 1usize..6) {
            let rows = vals.len() / cols;
            prop_assume!(rows >= 1);
            let t = Tensor::matrix(rows, cols, vals[..rows * cols].to_vec()).unwrap();
            let s = softmax(&t, 1).unwrap();
            for r in 0..rows {
                let row = s.row(r);
                prop_assert!(row.iter().all(|v| *v > 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn attention_matches_naive(seed in 0u64..500, n in 1usize..9, m in 1usize..9, d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_matrix(&mut rng, n, d);
            let k = random_matrix(&mut rng, m, d);
            let v = random_matrix(&mut rng, m, d);
            let got = scaled_dot_attention(&q, &k, &v).unwrap();
            for (a, b) in got.data().iter().zip(naive_attention(&q, &k, &v)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
