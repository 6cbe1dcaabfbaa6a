//! The spatiotemporal transformer: tokenisation, hierarchical temporal
//! attention, variance-weighted spatial attention, and the classification head.
//!
//! Token layout is `[CLS, x(0,0) … x(0,K-1), x(1,0) … x(T-1,K-1)]`, i.e. the
//! class token followed by frame-major patch tokens. The target frame is the
//! last frame of the clip and every local window trails it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SegmenterConfig;
use super::layers::{gelu, gelu_grad, Attention, AttentionCache, Grads, LayerNorm, Linear, NormCache, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{softmax_slice, Tensor};

/// A clip of `frames × height × width × channels` pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Clip {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * height * width * channels {
            return Err(Error::Shape(format!(
                "clip {frames}x{height}x{width}x{channels} needs {} values, got {}",
                frames * height * width * channels,
                data.len()
            )));
        }
        Ok(Self { frames, height, width, channels, data })
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    /// Stack equally sized frames into a clip.
    pub fn from_frames(frames: &[&[f64]], height: usize, width: usize, channels: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(frames.len() * height * width * channels);
        for f in frames {
            data.extend_from_slice(f);
        }
        Self::new(frames.len(), height, width, channels, data)
    }
}

/// `(1 + T·K) × d` token matrix with the class token in row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Tensor,
    pub frames: usize,
    pub locations: usize,
}

impl TokenSequence {
    pub fn new(tokens: Tensor, frames: usize, locations: usize) -> Result<Self> {
        let (n, _) = tokens.dims2()?;
        if n != 1 + frames * locations {
            return Err(Error::Shape(format!(
                "{n} tokens cannot hold 1 + {frames}x{locations}"
            )));
        }
        Ok(Self { tokens, frames, locations })
    }

    pub fn dim(&self) -> usize {
        self.tokens.shape()[1]
    }

    pub fn cls(&self) -> &[f64] {
        self.tokens.row(0)
    }

    /// Token of patch `location` in frame `frame`.
    pub fn token(&self, frame: usize, location: usize) -> &[f64] {
        self.tokens.row(token_row(self.locations, frame, location))
    }
}

/// Softmax-normalised temporal variances, one per spatial location.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceWeights {
    pub weights: Tensor,
    pub variances: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train,
}

pub(crate) fn token_row(locations: usize, frame: usize, location: usize) -> usize {
    1 + frame * locations + location
}

#[derive(Debug, Clone)]
enum Positional {
    Factorized { spatial: ParamId, temporal: ParamId },
    Joint(ParamId),
}

#[derive(Debug, Clone)]
pub(crate) struct Block {
    temporal: Vec<Attention>,
    norm1: LayerNorm,
    spatial: Attention,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

#[derive(Debug, Clone)]
struct Head {
    norm: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

/// Action segmentation transformer with hand-written backpropagation.
#[derive(Debug, Clone)]
pub struct Segmenter {
    cfg: SegmenterConfig,
    store: ParamStore,
    embed: Linear,
    cls: ParamId,
    pos: Positional,
    blocks: Vec<Block>,
    head: Head,
}

struct BranchCache {
    groups: Vec<Vec<usize>>,
    attn: AttentionCache,
}

struct BlockCache {
    input: Vec<f64>,
    branches: Vec<BranchCache>,
    norm1: NormCache,
    normed: Vec<f64>,
    mean: Vec<f64>,
    weights: Vec<f64>,
    weighted: Vec<f64>,
    spatial_groups: Vec<Vec<usize>>,
    spatial: AttentionCache,
    norm2: NormCache,
    mlp_in: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
}

struct HeadCache {
    norm: NormCache,
    dropped: Vec<f64>,
    mask: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
}

pub(crate) struct ForwardCache {
    patches: Vec<f64>,
    blocks: Vec<BlockCache>,
    head: HeadCache,
}

impl Segmenter {
    pub fn new(cfg: SegmenterConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut store = ParamStore::default();
        let d = cfg.embed_dim;
        let k = cfg.patches_per_frame();
        let embed = Linear::new(&mut store, "embed", cfg.patch_dim(), d, 0, &mut rng);
        let cls = store.init_normal("cls".into(), &[d], 0.02, 0, &mut rng);
        let pos = if cfg.joint_positional {
            Positional::Joint(store.init_normal("pos.joint".into(), &[cfg.frames * k, d], 0.1, 0, &mut rng))
        } else {
            Positional::Factorized {
                spatial: store.init_normal("pos.spatial".into(), &[k, d], 0.1, 0, &mut rng),
                temporal: store.init_normal("pos.temporal".into(), &[cfg.frames, d], 0.1, 0, &mut rng),
            }
        };
        let hidden = cfg.mlp_ratio * d;
        let branches = cfg.branch_windows().len();
        let mut blocks = Vec::with_capacity(cfg.num_blocks);
        for b in 0..cfg.num_blocks {
            let layer = b + 1;
            let p = format!("blocks.{b}");
            let temporal = if cfg.share_temporal_weights {
                vec![Attention::new(&mut store, &format!("{p}.temporal"), d, cfg.num_heads, layer, &mut rng)]
            } else {
                (0..branches)
                    .map(|j| Attention::new(&mut store, &format!("{p}.temporal.{j}"), d, cfg.num_heads, layer, &mut rng))
                    .collect()
            };
            blocks.push(Block {
                temporal,
                norm1: LayerNorm::new(&mut store, &format!("{p}.norm1"), d, cfg.layer_norm_eps, layer),
                spatial: Attention::new(&mut store, &format!("{p}.spatial"), d, cfg.num_heads, layer, &mut rng),
                norm2: LayerNorm::new(&mut store, &format!("{p}.norm2"), d, cfg.layer_norm_eps, layer),
                fc1: Linear::new(&mut store, &format!("{p}.mlp.fc1"), d, hidden, layer, &mut rng),
                fc2: Linear::new(&mut store, &format!("{p}.mlp.fc2"), hidden, d, layer, &mut rng),
            });
        }
        let head_layer = cfg.num_blocks + 1;
        let head = Head {
            norm: LayerNorm::new(&mut store, "head.norm", d, cfg.layer_norm_eps, head_layer),
            fc1: Linear::new(&mut store, "head.fc1", d, hidden, head_layer, &mut rng),
            fc2: Linear::new(&mut store, "head.fc2", hidden, cfg.num_classes, head_layer, &mut rng),
        };
        Ok(Self { cfg, store, embed, cls, pos, blocks, head })
    }

    pub fn config(&self) -> &SegmenterConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn check_clip(&self, clip: &Clip) -> Result<()> {
        let c = &self.cfg;
        if (clip.frames, clip.height, clip.width, clip.channels) != (c.frames, c.height, c.width, c.channels) {
            return Err(Error::Shape(format!(
                "clip {}x{}x{}x{} does not match config {}x{}x{}x{}",
                clip.frames, clip.height, clip.width, clip.channels, c.frames, c.height, c.width, c.channels
            )));
        }
        if clip.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("clip pixels"));
        }
        Ok(())
    }

    /// Flattened `P·P·C` patches in frame-major, row-major patch order.
    fn extract_patches(&self, clip: &Clip) -> Vec<f64> {
        let c = &self.cfg;
        let (p, ch) = (c.patch, c.channels);
        let per_row = c.width / p;
        let k = c.patches_per_frame();
        let mut out = Vec::with_capacity(c.frames * k * c.patch_dim());
        for t in 0..c.frames {
            let frame = clip.frame(t);
            for i in 0..k {
                let (py, px) = (i / per_row, i % per_row);
                for y in 0..p {
                    let start = ((py * p + y) * c.width + px * p) * ch;
                    out.extend_from_slice(&frame[start..start + p * ch]);
                }
            }
        }
        out
    }

    fn positional(&self, frame: usize, location: usize) -> Vec<f64> {
        let d = self.cfg.embed_dim;
        match self.pos {
            Positional::Factorized { spatial, temporal } => {
                let s = &self.store.get(spatial)[location * d..(location + 1) * d];
                let t = &self.store.get(temporal)[frame * d..(frame + 1) * d];
                s.iter().zip(t).map(|(a, b)| a + b).collect()
            }
            Positional::Joint(id) => {
                let r = frame * self.cfg.patches_per_frame() + location;
                self.store.get(id)[r * d..(r + 1) * d].to_vec()
            }
        }
    }

    fn embed_patches(&self, patches: &[f64]) -> Vec<f64> {
        let c = &self.cfg;
        let d = c.embed_dim;
        let k = c.patches_per_frame();
        let rows = c.frames * k;
        let projected = self.embed.forward(&self.store, patches, rows);
        let mut tokens = Vec::with_capacity((rows + 1) * d);
        tokens.extend_from_slice(self.store.get(self.cls));
        for t in 0..c.frames {
            for i in 0..k {
                let r = t * k + i;
                let pos = self.positional(t, i);
                tokens.extend(projected[r * d..(r + 1) * d].iter().zip(&pos).map(|(a, b)| a + b));
            }
        }
        tokens
    }

    /// Patch embedding plus positional encodings, with the class token in front.
    pub fn tokenize(&self, clip: &Clip) -> Result<TokenSequence> {
        self.check_clip(clip)?;
        let tokens = self.embed_patches(&self.extract_patches(clip));
        self.wrap(tokens)
    }

    fn wrap(&self, tokens: Vec<f64>) -> Result<TokenSequence> {
        let n = self.cfg.token_count();
        TokenSequence::new(Tensor::matrix(n, self.cfg.embed_dim, tokens)?, self.cfg.frames, self.cfg.patches_per_frame())
    }

    fn block(&self, index: usize) -> Result<&Block> {
        self.blocks
            .get(index)
            .ok_or_else(|| Error::InvalidArgument(format!("block {index} out of range")))
    }

    fn temporal_attention<'b>(&self, block: &'b Block, branch: usize) -> &'b Attention {
        if block.temporal.len() == 1 {
            &block.temporal[0]
        } else {
            &block.temporal[branch]
        }
    }

    /// Full-window temporal self-attention of `block`, one sequence per location.
    pub fn global_temporal_attention(&self, block: usize, seq: &TokenSequence) -> Result<TokenSequence> {
        let b = self.block(block)?;
        let attn = self.temporal_attention(b, 0);
        let groups = temporal_groups(seq.frames, seq.locations, seq.frames, seq.frames - 1);
        self.wrap(apply_temporal(&self.store, attn, seq.tokens.data(), &groups).0)
    }

    /// Temporal attention restricted to the `window` frames ending at
    /// `target_frame`. Tokens of other frames pass through unchanged. Uses the
    /// projections of local branch `branch` (they coincide with the global
    /// branch when weights are shared).
    pub fn local_temporal_attention(
        &self,
        block: usize,
        branch: usize,
        seq: &TokenSequence,
        window: usize,
        target_frame: usize,
    ) -> Result<TokenSequence> {
        if window == 0 || window > seq.frames {
            return Err(Error::InvalidArgument(format!(
                "window {window} outside 1..={}",
                seq.frames
            )));
        }
        if target_frame >= seq.frames || window > target_frame + 1 {
            return Err(Error::InvalidArgument(format!(
                "window {window} ending at frame {target_frame} starts before the clip"
            )));
        }
        let b = self.block(block)?;
        let attn = self.temporal_attention(b, branch);
        let groups = temporal_groups(seq.frames, seq.locations, window, target_frame);
        self.wrap(apply_temporal(&self.store, attn, seq.tokens.data(), &groups).0)
    }

    /// Variance-weighted spatial attention within one frame: the frame's tokens
    /// are scaled by `w` and attend together with the class token. Returns the
    /// sequence with that frame's tokens and the class token updated residually.
    pub fn weighted_spatial_attention(
        &self,
        block: usize,
        seq: &TokenSequence,
        w: &VarianceWeights,
        frame: usize,
    ) -> Result<TokenSequence> {
        if frame >= seq.frames {
            return Err(Error::InvalidArgument(format!("frame {frame} out of range")));
        }
        if w.weights.len() != seq.locations {
            return Err(Error::Shape(format!(
                "{} weights for {} locations",
                w.weights.len(),
                seq.locations
            )));
        }
        let b = self.block(block)?;
        let d = seq.dim();
        let mut weighted = seq.tokens.data().to_vec();
        scale_tokens(&mut weighted, seq.frames, seq.locations, d, w.weights.data());
        let group = spatial_group(seq.locations, frame);
        let (outs, _) = b.spatial.forward(&self.store, &weighted, std::slice::from_ref(&group));
        let mut out = seq.tokens.data().to_vec();
        for (l, &r) in group.iter().enumerate() {
            for c in 0..d {
                out[r * d + c] += outs[0][l * d + c];
            }
        }
        self.wrap(out)
    }

    pub fn forward(&self, clip: &Clip) -> Result<Vec<f64>> {
        let (logits, _) = self.forward_cached(clip, Mode::Eval, None)?;
        Ok(logits)
    }

    pub(crate) fn forward_cached(&self, clip: &Clip, mode: Mode, rng: Option<&mut ChaCha8Rng>) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_clip(clip)?;
        let patches = self.extract_patches(clip);
        let mut x = self.embed_patches(&patches);
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (out, cache) = self.block_forward(block, x);
            block_caches.push(cache);
            x = out;
        }
        let (logits, head) = self.head_forward(&x, mode, rng)?;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        Ok((logits, ForwardCache { patches, blocks: block_caches, head }))
    }

    fn block_forward(&self, block: &Block, input: Vec<f64>) -> (Vec<f64>, BlockCache) {
        let c = &self.cfg;
        let (t, k, d) = (c.frames, c.patches_per_frame(), c.embed_dim);
        let windows = c.branch_windows();
        let extent = c.temporal_extent();

        let mut agg = vec![0.0; input.len()];
        let mut branches = Vec::with_capacity(windows.len());
        for (j, &w) in windows.iter().enumerate() {
            let attn = self.temporal_attention(block, j);
            let groups = temporal_groups(t, k, w, t - 1);
            let (y, cache) = apply_temporal(&self.store, attn, &input, &groups);
            for (a, v) in agg.iter_mut().zip(&y) {
                *a += v;
            }
            branches.push(BranchCache { groups, attn: cache });
        }
        let inv = 1.0 / windows.len() as f64;
        agg.iter_mut().for_each(|v| *v *= inv);

        let (normed, norm1) = block.norm1.forward(&self.store, &agg);
        let stats = variance_stats(&normed, t, k, d, extent);
        let mut weighted = normed.clone();
        scale_tokens(&mut weighted, t, k, d, &stats.weights);

        let spatial_groups: Vec<Vec<usize>> = (0..t).map(|f| spatial_group(k, f)).collect();
        let (souts, spatial) = block.spatial.forward(&self.store, &weighted, &spatial_groups);
        let mut mid = agg;
        for (f, out) in souts.iter().enumerate() {
            for i in 0..k {
                let r = token_row(k, f, i);
                for ch in 0..d {
                    mid[r * d + ch] += out[(1 + i) * d + ch];
                }
            }
            if f >= t - extent {
                for ch in 0..d {
                    mid[ch] += out[ch] / extent as f64;
                }
            }
        }

        let (mlp_in, norm2) = block.norm2.forward(&self.store, &mid);
        let rows = mid.len() / d;
        let hidden_pre = block.fc1.forward(&self.store, &mlp_in, rows);
        let hidden: Vec<f64> = hidden_pre.iter().map(|&v| gelu(v)).collect();
        let mlp_out = block.fc2.forward(&self.store, &hidden, rows);
        let out: Vec<f64> = mid.iter().zip(&mlp_out).map(|(a, b)| a + b).collect();

        (
            out,
            BlockCache {
                input,
                branches,
                norm1,
                normed,
                mean: stats.mean,
                weights: stats.weights,
                weighted,
                spatial_groups,
                spatial,
                norm2,
                mlp_in,
                hidden_pre,
                hidden,
            },
        )
    }

    fn head_forward(&self, x: &[f64], mode: Mode, rng: Option<&mut ChaCha8Rng>) -> Result<(Vec<f64>, HeadCache)> {
        let d = self.cfg.embed_dim;
        let (normed, norm) = self.head.norm.forward(&self.store, &x[..d]);
        let p = self.cfg.dropout;
        let mask: Vec<f64> = match mode {
            Mode::Train if p > 0.0 => {
                let rng = rng.ok_or_else(|| Error::InvalidArgument("training mode needs a random generator".into()))?;
                (0..d)
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) })
                    .collect()
            }
            _ => vec![1.0; d],
        };
        let dropped: Vec<f64> = normed.iter().zip(&mask).map(|(a, m)| a * m).collect();
        let hidden_pre = self.head.fc1.forward(&self.store, &dropped, 1);
        let hidden: Vec<f64> = hidden_pre.iter().map(|&v| gelu(v)).collect();
        let logits = self.head.fc2.forward(&self.store, &hidden, 1);
        Ok((logits, HeadCache { norm, dropped, mask, hidden_pre, hidden }))
    }

    /// Backpropagate `dlogits` through the cached forward pass into `grads`.
    pub(crate) fn backward(&self, cache: &ForwardCache, dlogits: &[f64], grads: &mut Grads) {
        let c = &self.cfg;
        let d = c.embed_dim;
        let s = &self.store;

        let h = &cache.head;
        let dhidden = self.head.fc2.backward(s, grads, &h.hidden, 1, dlogits);
        let dpre: Vec<f64> = dhidden.iter().zip(&h.hidden_pre).map(|(g, &x)| g * gelu_grad(x)).collect();
        let ddropped = self.head.fc1.backward(s, grads, &h.dropped, 1, &dpre);
        let dnormed: Vec<f64> = ddropped.iter().zip(&h.mask).map(|(g, m)| g * m).collect();
        let dcls = self.head.norm.backward(s, grads, &h.norm, &dnormed);

        let mut dx = vec![0.0; c.token_count() * d];
        dx[..d].copy_from_slice(&dcls);
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            dx = self.block_backward(block, bc, dx, grads);
        }
        self.embed_backward(&cache.patches, &dx, grads);
    }

    fn block_backward(&self, block: &Block, bc: &BlockCache, dout: Vec<f64>, grads: &mut Grads) -> Vec<f64> {
        let c = &self.cfg;
        let s = &self.store;
        let (t, k, d) = (c.frames, c.patches_per_frame(), c.embed_dim);
        let extent = c.temporal_extent();
        let rows = dout.len() / d;

        // MLP sub-block
        let dhidden = block.fc2.backward(s, grads, &bc.hidden, rows, &dout);
        let dpre: Vec<f64> = dhidden.iter().zip(&bc.hidden_pre).map(|(g, &x)| g * gelu_grad(x)).collect();
        let dmlp_in = block.fc1.backward(s, grads, &bc.mlp_in, rows, &dpre);
        let mut dmid = dout;
        for (a, b) in dmid.iter_mut().zip(block.norm2.backward(s, grads, &bc.norm2, &dmlp_in)) {
            *a += b;
        }

        // spatial sub-block
        let douts: Vec<Vec<f64>> = (0..t)
            .map(|f| {
                let mut g = vec![0.0; (k + 1) * d];
                if f >= t - extent {
                    for ch in 0..d {
                        g[ch] = dmid[ch] / extent as f64;
                    }
                }
                for i in 0..k {
                    let r = token_row(k, f, i);
                    g[(1 + i) * d..(2 + i) * d].copy_from_slice(&dmid[r * d..(r + 1) * d]);
                }
                g
            })
            .collect();
        let dweighted = block.spatial.backward(s, grads, &bc.weighted, &bc.spatial_groups, &bc.spatial, &douts);

        let mut dnormed = dweighted.clone();
        let mut dw = vec![0.0; k];
        for f in 0..t {
            for i in 0..k {
                let r = token_row(k, f, i);
                let (row_d, row_u) = (&dweighted[r * d..(r + 1) * d], &bc.normed[r * d..(r + 1) * d]);
                dw[i] += crate::tensor::dot(row_d, row_u);
                for ch in 0..d {
                    dnormed[r * d + ch] = bc.weights[i] * row_d[ch];
                }
            }
        }
        let inner: f64 = dw.iter().zip(&bc.weights).map(|(a, b)| a * b).sum();
        let dvar: Vec<f64> = (0..k).map(|i| bc.weights[i] * (dw[i] - inner)).collect();
        let scale = 2.0 / extent as f64;
        for f in t - extent..t {
            for i in 0..k {
                let r = token_row(k, f, i);
                for ch in 0..d {
                    dnormed[r * d + ch] += scale * (bc.normed[r * d + ch] - bc.mean[i * d + ch]) * dvar[i];
                }
            }
        }
        let mut dagg = dmid;
        for (a, b) in dagg.iter_mut().zip(block.norm1.backward(s, grads, &bc.norm1, &dnormed)) {
            *a += b;
        }

        // temporal branches, averaged
        let nb = bc.branches.len() as f64;
        let mut dinput = dagg.clone();
        dagg.iter_mut().for_each(|v| *v /= nb);
        for (j, br) in bc.branches.iter().enumerate() {
            let attn = self.temporal_attention(block, j);
            let douts: Vec<Vec<f64>> = br
                .groups
                .iter()
                .map(|g| g.iter().flat_map(|&r| dagg[r * d..(r + 1) * d].iter().copied()).collect())
                .collect();
            let dx = attn.backward(s, grads, &bc.input, &br.groups, &br.attn, &douts);
            for (a, b) in dinput.iter_mut().zip(dx) {
                *a += b;
            }
        }
        dinput
    }

    fn embed_backward(&self, patches: &[f64], dx: &[f64], grads: &mut Grads) {
        let c = &self.cfg;
        let (t, k, d) = (c.frames, c.patches_per_frame(), c.embed_dim);
        for (g, v) in grads.get_mut(self.cls).iter_mut().zip(&dx[..d]) {
            *g += v;
        }
        let dtokens = &dx[d..];
        self.embed.backward(&self.store, grads, patches, t * k, dtokens);
        match self.pos {
            Positional::Factorized { spatial, temporal } => {
                for f in 0..t {
                    for i in 0..k {
                        let r = f * k + i;
                        let row = &dtokens[r * d..(r + 1) * d];
                        for (g, v) in grads.get_mut(spatial)[i * d..(i + 1) * d].iter_mut().zip(row) {
                            *g += v;
                        }
                        for (g, v) in grads.get_mut(temporal)[f * d..(f + 1) * d].iter_mut().zip(row) {
                            *g += v;
                        }
                    }
                }
            }
            Positional::Joint(id) => {
                for (g, v) in grads.get_mut(id).iter_mut().zip(dtokens) {
                    *g += v;
                }
            }
        }
    }

    /// Cross-entropy loss on the target-frame logits and its gradient.
    pub fn loss_and_grads(&self, clip: &Clip, label: usize, mode: Mode, rng: Option<&mut ChaCha8Rng>) -> Result<(f64, Vec<f64>, Grads)> {
        if label >= self.cfg.num_classes {
            return Err(Error::InvalidArgument(format!("label {label} out of range")));
        }
        let (logits, cache) = self.forward_cached(clip, mode, rng)?;
        let (loss, dlogits) = cross_entropy(&logits, label);
        let mut grads = self.store.zero_grads();
        self.backward(&cache, &dlogits, &mut grads);
        Ok((loss, logits, grads))
    }

    /// Loss only, in evaluation mode.
    pub fn loss(&self, clip: &Clip, label: usize) -> Result<f64> {
        let logits = self.forward(clip)?;
        Ok(cross_entropy(&logits, label).0)
    }
}

pub(crate) fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut p = vec![0.0; logits.len()];
    softmax_slice(logits, &mut p);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[label];
    p[label] -= 1.0;
    (loss, p)
}

/// Per-location temporal sequences over `window` frames ending at `target`,
/// plus the class token as its own single-token sequence.
fn temporal_groups(frames: usize, locations: usize, window: usize, target: usize) -> Vec<Vec<usize>> {
    let first = target + 1 - window;
    let _ = frames;
    let mut groups: Vec<Vec<usize>> = (0..locations)
        .map(|i| (first..=target).map(|f| token_row(locations, f, i)).collect())
        .collect();
    groups.push(vec![0]);
    groups
}

fn spatial_group(locations: usize, frame: usize) -> Vec<usize> {
    std::iter::once(0)
        .chain((0..locations).map(|i| token_row(locations, frame, i)))
        .collect()
}

/// Residual temporal attention: rows in a group get `x + attn(x)`, others pass through.
fn apply_temporal(store: &ParamStore, attn: &Attention, x: &[f64], groups: &[Vec<usize>]) -> (Vec<f64>, AttentionCache) {
    let d = attn.dim;
    let (outs, cache) = attn.forward(store, x, groups);
    let mut y = x.to_vec();
    for (g, out) in groups.iter().zip(&outs) {
        for (l, &r) in g.iter().enumerate() {
            for c in 0..d {
                y[r * d + c] += out[l * d + c];
            }
        }
    }
    (y, cache)
}

fn scale_tokens(x: &mut [f64], frames: usize, locations: usize, d: usize, weights: &[f64]) {
    for f in 0..frames {
        for (i, &w) in weights.iter().enumerate() {
            let r = token_row(locations, f, i);
            x[r * d..(r + 1) * d].iter_mut().for_each(|v| *v *= w);
        }
    }
}

struct VarianceStats {
    mean: Vec<f64>,
    variances: Vec<f64>,
    weights: Vec<f64>,
}

/// Temporal mean, squared-norm variance and softmax weights per location over
/// the trailing `extent` frames.
fn variance_stats(x: &[f64], frames: usize, locations: usize, d: usize, extent: usize) -> VarianceStats {
    let first = frames - extent;
    let mut mean = vec![0.0; locations * d];
    for f in first..frames {
        for i in 0..locations {
            let r = token_row(locations, f, i);
            for c in 0..d {
                mean[i * d + c] += x[r * d + c];
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= extent as f64);
    let mut variances = vec![0.0; locations];
    for f in first..frames {
        for (i, v) in variances.iter_mut().enumerate() {
            let r = token_row(locations, f, i);
            for c in 0..d {
                let dev = x[r * d + c] - mean[i * d + c];
                *v += dev * dev;
            }
        }
    }
    variances.iter_mut().for_each(|v| *v /= extent as f64);
    let mut weights = vec![0.0; locations];
    softmax_slice(&variances, &mut weights);
    VarianceStats { mean, variances, weights }
}

/// Spatial importance weights from the temporal variance of every location,
/// taken over all frames of the sequence.
pub fn variance_weights(seq: &TokenSequence) -> Result<VarianceWeights> {
    if seq.frames == 0 {
        return Err(Error::Empty("token sequence has no frames"));
    }
    seq.tokens.ensure_finite("token sequence")?;
    let stats = variance_stats(seq.tokens.data(), seq.frames, seq.locations, seq.dim(), seq.frames);
    Ok(VarianceWeights {
        weights: Tensor::from_vec(stats.weights),
        variances: Tensor::from_vec(stats.variances),
    })
}

/// Element-wise mean of equally shaped token sequences.
pub fn aggregate_temporal(outputs: &[TokenSequence]) -> Result<TokenSequence> {
    let first = outputs.first().ok_or(Error::Empty("aggregate_temporal inputs"))?;
    let mut acc = vec![0.0; first.tokens.len()];
    for o in outputs {
        if o.tokens.shape() != first.tokens.shape() || o.frames != first.frames {
            return Err(Error::Shape(format!(
                "cannot aggregate {:?} with {:?}",
                o.tokens.shape(),
                first.tokens.shape()
            )));
        }
        for (a, v) in acc.iter_mut().zip(o.tokens.data()) {
            *a += v;
        }
    }
    let n = outputs.len() as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    TokenSequence::new(Tensor::new(first.tokens.shape().to_vec(), acc)?, first.frames, first.locations)
}
