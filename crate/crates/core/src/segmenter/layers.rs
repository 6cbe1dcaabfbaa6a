//! Layers with explicit forward caches and backward passes.
//!
//! Activations are flat row-major `Vec<f64>` buffers with the row count passed
//! alongside; parameters live in a [`ParamStore`] and are referenced by id so
//! several workers can accumulate gradients into private [`Grads`] buffers.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::optim::Parameter;
use crate::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, row_stats, softmax_slice, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    pub(crate) params: Vec<Parameter>,
}

impl ParamStore {
    pub fn add(&mut self, param: Parameter) -> ParamId {
        self.params.push(param);
        ParamId(self.params.len() - 1)
    }

    pub(crate) fn init_normal<R: Rng>(
        &mut self,
        name: String,
        shape: &[usize],
        std: f64,
        layer: usize,
        rng: &mut R,
    ) -> ParamId {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("std is positive");
        let data = (0..n).map(|_| dist.sample(rng)).collect();
        let value = Tensor::new(shape.to_vec(), data).expect("shape matches data");
        self.add(Parameter::new(name, value, layer))
    }

    pub(crate) fn init_const(&mut self, name: String, shape: &[usize], v: f64, layer: usize) -> ParamId {
        let n: usize = shape.iter().product();
        let value = Tensor::new(shape.to_vec(), vec![v; n]).expect("shape matches data");
        self.add(Parameter::new(name, value, layer))
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        self.params[id.0].value.data()
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(self.params.iter().map(|p| vec![0.0; p.value.len()]).collect())
    }
}

/// Gradient buffers parallel to a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Grads(pub(crate) Vec<Vec<f64>>);

impl Grads {
    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.0[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.0 {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn as_slices(&self) -> &[Vec<f64>] {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub(crate) weight: ParamId,
    pub(crate) bias: ParamId,
    pub(crate) input: usize,
    pub(crate) output: usize,
}

impl Linear {
    pub(crate) fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, layer: usize, rng: &mut R) -> Self {
        let weight = store.init_normal(format!("{name}.weight"), &[input, output], 1.0 / (input as f64).sqrt(), layer, rng);
        let bias = store.init_const(format!("{name}.bias"), &[output], 0.0, layer);
        Self { weight, bias, input, output }
    }

    pub(crate) fn forward(&self, store: &ParamStore, x: &[f64], rows: usize) -> Vec<f64> {
        let b = store.get(self.bias);
        let mut out = Vec::with_capacity(rows * self.output);
        for _ in 0..rows {
            out.extend_from_slice(b);
        }
        matmul_into(x, store.get(self.weight), &mut out, rows, self.input, self.output);
        out
    }

    pub(crate) fn backward(&self, store: &ParamStore, grads: &mut Grads, x: &[f64], rows: usize, dy: &[f64]) -> Vec<f64> {
        matmul_tn_into(x, dy, grads.get_mut(self.weight), rows, self.input, self.output);
        let db = grads.get_mut(self.bias);
        for r in 0..rows {
            for (g, d) in db.iter_mut().zip(&dy[r * self.output..(r + 1) * self.output]) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; rows * self.input];
        matmul_nt_into(dy, store.get(self.weight), &mut dx, rows, self.output, self.input);
        dx
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub(crate) gain: ParamId,
    pub(crate) bias: ParamId,
    pub(crate) width: usize,
    pub(crate) eps: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub(crate) fn new(store: &mut ParamStore, name: &str, width: usize, eps: f64, layer: usize) -> Self {
        let gain = store.init_const(format!("{name}.gain"), &[width], 1.0, layer);
        let bias = store.init_const(format!("{name}.bias"), &[width], 0.0, layer);
        Self { gain, bias, width, eps }
    }

    pub(crate) fn forward(&self, store: &ParamStore, x: &[f64]) -> (Vec<f64>, NormCache) {
        let g = store.get(self.gain);
        let b = store.get(self.bias);
        let rows = x.len() / self.width;
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &x[r * self.width..(r + 1) * self.width];
            let (mean, inv) = row_stats(row, self.eps);
            inv_std.push(inv);
            for j in 0..self.width {
                let h = (row[j] - mean) * inv;
                xhat[r * self.width + j] = h;
                y[r * self.width + j] = h * g[j] + b[j];
            }
        }
        (y, NormCache { xhat, inv_std })
    }

    pub(crate) fn backward(&self, store: &ParamStore, grads: &mut Grads, cache: &NormCache, dy: &[f64]) -> Vec<f64> {
        let g = store.get(self.gain).to_vec();
        let w = self.width;
        let rows = dy.len() / w;
        let mut dx = vec![0.0; dy.len()];
        {
            let dg = grads.get_mut(self.gain);
            for r in 0..rows {
                for j in 0..w {
                    dg[j] += dy[r * w + j] * cache.xhat[r * w + j];
                }
            }
        }
        {
            let db = grads.get_mut(self.bias);
            for r in 0..rows {
                for j in 0..w {
                    db[j] += dy[r * w + j];
                }
            }
        }
        let n = w as f64;
        for r in 0..rows {
            let xh = &cache.xhat[r * w..(r + 1) * w];
            let dxh: Vec<f64> = (0..w).map(|j| dy[r * w + j] * g[j]).collect();
            let sum: f64 = dxh.iter().sum();
            let sum_x: f64 = dxh.iter().zip(xh).map(|(a, b)| a * b).sum();
            for j in 0..w {
                dx[r * w + j] = cache.inv_std[r] / n * (n * dxh[j] - sum - xh[j] * sum_x);
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Multi-head self-attention applied independently inside groups of rows.
///
/// Each group is an ordered list of row indices into the input; rows attend
/// only to rows of the same group. A row may appear in several groups (the
/// class token joins every frame's spatial group), in which case it receives
/// one output per group.
#[derive(Debug, Clone)]
pub struct Attention {
    pub(crate) q: Linear,
    pub(crate) k: Linear,
    pub(crate) v: Linear,
    pub(crate) o: Linear,
    pub(crate) heads: usize,
    pub(crate) dim: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Per group, per head: row-major `L×L` attention probabilities.
    probs: Vec<Vec<Vec<f64>>>,
    /// Per group: concatenated head outputs before the output projection.
    mixed: Vec<Vec<f64>>,
}

impl Attention {
    pub(crate) fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, layer: usize, rng: &mut R) -> Self {
        Self {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, layer, rng),
            k: Linear::new(store, &format!("{name}.k"), dim, dim, layer, rng),
            v: Linear::new(store, &format!("{name}.v"), dim, dim, layer, rng),
            o: Linear::new(store, &format!("{name}.o"), dim, dim, layer, rng),
            heads,
            dim,
        }
    }

    pub(crate) fn forward(&self, store: &ParamStore, x: &[f64], groups: &[Vec<usize>]) -> (Vec<Vec<f64>>, AttentionCache) {
        let rows = x.len() / self.dim;
        let q = self.q.forward(store, x, rows);
        let k = self.k.forward(store, x, rows);
        let v = self.v.forward(store, x, rows);
        let d = self.dim;
        let hd = d / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut outs = Vec::with_capacity(groups.len());
        let mut probs_all = Vec::with_capacity(groups.len());
        let mut mixed_all = Vec::with_capacity(groups.len());
        for g in groups {
            let l = g.len();
            let mut mixed = vec![0.0; l * d];
            let mut probs_g = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let off = h * hd;
                let mut p = vec![0.0; l * l];
                let mut scores = vec![0.0; l];
                for (a, &ra) in g.iter().enumerate() {
                    let qa = &q[ra * d + off..ra * d + off + hd];
                    for (b, &rb) in g.iter().enumerate() {
                        let kb = &k[rb * d + off..rb * d + off + hd];
                        scores[b] = crate::tensor::dot(qa, kb) * scale;
                    }
                    softmax_slice(&scores, &mut p[a * l..(a + 1) * l]);
                    let out = &mut mixed[a * d + off..a * d + off + hd];
                    for (b, &rb) in g.iter().enumerate() {
                        let pb = p[a * l + b];
                        let vb = &v[rb * d + off..rb * d + off + hd];
                        for (o, vv) in out.iter_mut().zip(vb) {
                            *o += pb * vv;
                        }
                    }
                }
                probs_g.push(p);
            }
            outs.push(self.o.forward(store, &mixed, l));
            probs_all.push(probs_g);
            mixed_all.push(mixed);
        }
        (
            outs,
            AttentionCache {
                q,
                k,
                v,
                probs: probs_all,
                mixed: mixed_all,
            },
        )
    }

    pub(crate) fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        x: &[f64],
        groups: &[Vec<usize>],
        cache: &AttentionCache,
        douts: &[Vec<f64>],
    ) -> Vec<f64> {
        let rows = x.len() / self.dim;
        let d = self.dim;
        let hd = d / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut dq = vec![0.0; rows * d];
        let mut dk = vec![0.0; rows * d];
        let mut dv = vec![0.0; rows * d];
        for (gi, g) in groups.iter().enumerate() {
            let l = g.len();
            let dmixed = self.o.backward(store, grads, &cache.mixed[gi], l, &douts[gi]);
            for h in 0..self.heads {
                let off = h * hd;
                let p = &cache.probs[gi][h];
                for a in 0..l {
                    let dma = &dmixed[a * d + off..a * d + off + hd];
                    // dP[a,b] = <dO_a, V_b>
                    let mut dp = vec![0.0; l];
                    for (b, &rb) in g.iter().enumerate() {
                        let vb = &cache.v[rb * d + off..rb * d + off + hd];
                        dp[b] = crate::tensor::dot(dma, vb);
                        let pb = p[a * l + b];
                        let dvb = &mut dv[rb * d + off..rb * d + off + hd];
                        for (o, m) in dvb.iter_mut().zip(dma) {
                            *o += pb * m;
                        }
                    }
                    let inner: f64 = (0..l).map(|b| dp[b] * p[a * l + b]).sum();
                    let ra = g[a];
                    for (b, &rb) in g.iter().enumerate() {
                        let ds = p[a * l + b] * (dp[b] - inner) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for c in 0..hd {
                            dq[ra * d + off + c] += ds * cache.k[rb * d + off + c];
                            dk[rb * d + off + c] += ds * cache.q[ra * d + off + c];
                        }
                    }
                }
            }
        }
        let mut dx = self.q.backward(store, grads, x, rows, &dq);
        for (a, b) in dx.iter_mut().zip(self.k.backward(store, grads, x, rows, &dk)) {
            *a += b;
        }
        for (a, b) in dx.iter_mut().zip(self.v.backward(store, grads, x, rows, &dv)) {
            *a += b;
        }
        dx
    }
}
