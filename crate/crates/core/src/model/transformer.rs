//! Decoder-only transformer with explicit forward caches and hand-written
//! backward pass.
//!
//! Token embeddings are scaled by `sqrt(D)` and summed with fixed sinusoidal
//! position encodings. Blocks use causal multi-head attention and a ReLU MLP
//! of width `4D`; normalization placement follows [`BlockNorm`]. A final
//! layer norm precedes an untied output projection.
//!
//! A batch is a list of variable-length sequences whose rows are stacked
//! into one `R × D` activation matrix, so every linear layer is a single GEMM.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{BlockNorm, ModelConfig};
use super::layout::{LayerRanges, ParamLayout};
use super::real::{matmul, matmul_at, matmul_bt, Real};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct Transformer<T: Real> {
    config: ModelConfig,
    layout: ParamLayout,
    pub params: Vec<T>,
    pos_enc: Vec<T>,
    emb_scale: T,
}

#[derive(Debug, Clone, Default)]
struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

#[derive(Debug, Clone, Default)]
struct LayerCache<T> {
    attn_in: Vec<T>,
    ln_a: LnCache<T>,
    qkv: Vec<T>,
    probs: Vec<T>,
    att: Vec<T>,
    mlp_in: Vec<T>,
    ln_b: LnCache<T>,
    act: Vec<T>,
}

/// Activations of one forward pass, retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T: Real> {
    tokens: Vec<u32>,
    starts: Vec<usize>,
    lens: Vec<usize>,
    prob_offsets: Vec<usize>,
    layers: Vec<LayerCache<T>>,
    lnf: LnCache<T>,
    hf: Vec<T>,
    logits: Vec<T>,
    vocab: usize,
}

impl<T: Real> ForwardPass<T> {
    pub fn num_sequences(&self) -> usize {
        self.lens.len()
    }

    pub fn seq_len(&self, s: usize) -> usize {
        self.lens[s]
    }

    /// Which MLP units are active, over every layer and position.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.layers
            .iter()
            .flat_map(|l| l.act.iter().map(|&a| a > T::zero()))
            .collect()
    }

    /// Logits at position `pos` of sequence `s` (predicting token `pos + 1`).
    pub fn logits_at(&self, s: usize, pos: usize) -> &[T] {
        let r = self.starts[s] + pos;
        &self.logits[r * self.vocab..(r + 1) * self.vocab]
    }

    /// Log-probabilities at position `pos` of sequence `s`, in f64.
    pub fn log_probs_at(&self, s: usize, pos: usize) -> Vec<f64> {
        let row = self.logits_at(s, pos);
        let mx = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.as_f64()));
        let lse = mx + row.iter().map(|&x| (x.as_f64() - mx).exp()).sum::<f64>().ln();
        row.iter().map(|&x| x.as_f64() - lse).collect()
    }

    /// Cross-entropy of every predicted token: entry `p` of sequence `s` is
    /// `-ln P(tokens[p + 1] | tokens[..=p])`.
    pub fn token_losses(&self) -> Vec<Vec<f64>> {
        (0..self.lens.len())
            .map(|s| {
                let n = self.lens[s];
                (0..n.saturating_sub(1))
                    .map(|p| {
                        let r = self.starts[s] + p;
                        let row = &self.logits[r * self.vocab..(r + 1) * self.vocab];
                        let target = self.tokens[r + 1] as usize;
                        let mx = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.as_f64()));
                        let se: f64 = row.iter().map(|&x| (x.as_f64() - mx).exp()).sum();
                        mx + se.ln() - row[target].as_f64()
                    })
                    .collect()
            })
            .collect()
    }
}

fn sinusoidal(context: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; context * d];
    for pos in 0..context {
        for i in (0..d).step_by(2) {
            let freq = 1.0 / 10000f64.powf(i as f64 / d as f64);
            pe[pos * d + i] = (pos as f64 * freq).sin();
            if i + 1 < d {
                pe[pos * d + i + 1] = (pos as f64 * freq).cos();
            }
        }
    }
    pe
}

fn layer_norm<T: Real>(x: &[T], g: &[T], b: &[T], d: usize, out: &mut [T], cache: &mut LnCache<T>) {
    let rows = x.len() / d;
    cache.xhat.resize(x.len(), T::zero());
    cache.rstd.resize(rows, T::zero());
    let dn = T::from_f(d as f64);
    let eps = T::from_f(LN_EPS);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().copied().sum::<T>() / dn;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
        let rstd = T::one() / (var + eps).sqrt();
        cache.rstd[r] = rstd;
        for j in 0..d {
            let xh = (xr[j] - mean) * rstd;
            cache.xhat[r * d + j] = xh;
            out[r * d + j] = xh * g[j] + b[j];
        }
    }
}

/// Backward through a layer norm; accumulates parameter gradients and writes
/// the input gradient into `dx`.
fn layer_norm_backward<T: Real>(
    dy: &[T],
    cache: &LnCache<T>,
    g: &[T],
    dg: &mut [T],
    db: &mut [T],
    dx: &mut [T],
    d: usize,
) {
    let rows = dy.len() / d;
    let dn = T::from_f(d as f64);
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_dxh = T::zero();
        let mut mean_dxh_xh = T::zero();
        for j in 0..d {
            let dxh = dyr[j] * g[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[j];
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
        }
        mean_dxh /= dn;
        mean_dxh_xh /= dn;
        let rstd = cache.rstd[r];
        for j in 0..d {
            let dxh = dyr[j] * g[j];
            dx[r * d + j] = rstd * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
        }
    }
}

fn add_bias<T: Real>(x: &mut [T], b: &[T]) {
    let n = b.len();
    for row in x.chunks_mut(n) {
        for (v, &bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
}

fn add_colsum<T: Real>(dst: &mut [T], x: &[T]) {
    let n = dst.len();
    for row in x.chunks(n) {
        for (d, &v) in dst.iter_mut().zip(row) {
            *d += v;
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<T: Real> Transformer<T> {
    /// Weights ~ N(0, 0.02²), biases 0, layer-norm gains 1.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut params = vec![T::zero(); layout.total()];
        for spec in &layout.specs {
            let slot = &mut params[spec.range()];
            if spec.decay {
                slot.iter_mut()
                    .for_each(|p| *p = T::from_f(normal.sample(rng)));
            } else if spec.name.ends_with(".g") {
                slot.iter_mut().for_each(|p| *p = T::one());
            }
        }
        Ok(Self::from_params(config, params))
    }

    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Self {
        let layout = ParamLayout::new(&config);
        assert_eq!(params.len(), layout.total(), "parameter vector length");
        let pos_enc = sinusoidal(config.context, config.hidden)
            .into_iter()
            .map(T::from_f)
            .collect();
        Transformer {
            emb_scale: T::from_f((config.hidden as f64).sqrt()),
            config,
            layout,
            params,
            pos_enc,
        }
    }

    /// Same weights in another scalar type.
    pub fn cast<U: Real>(&self) -> Transformer<U> {
        Transformer::from_params(
            self.config,
            self.params.iter().map(|&p| U::from_f(p.as_f64())).collect(),
        )
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.get(name).map(|s| &self.params[s.range()])
    }

    /// Fixed position encoding row for `pos`.
    pub fn position_encoding(&self, pos: usize) -> &[T] {
        let d = self.config.hidden;
        &self.pos_enc[pos * d..(pos + 1) * d]
    }

    pub fn embedding_scale(&self) -> T {
        self.emb_scale
    }

    fn p(&self, r: &std::ops::Range<usize>) -> &[T] {
        &self.params[r.clone()]
    }

    pub fn check_sequences<S: AsRef<[u32]>>(&self, seqs: &[S]) -> Result<()> {
        for s in seqs {
            let s = s.as_ref();
            if s.len() > self.config.context {
                return Err(Error::SequenceTooLong {
                    len: s.len(),
                    context: self.config.context,
                });
            }
            if let Some(&id) = s.iter().find(|&&id| id as usize >= self.config.vocab) {
                return Err(Error::OutOfVocab {
                    id,
                    vocab: self.config.vocab,
                });
            }
        }
        Ok(())
    }

    pub fn forward<S: AsRef<[u32]>>(&self, seqs: &[S]) -> Result<ForwardPass<T>> {
        self.check_sequences(seqs)?;
        let cfg = &self.config;
        let (d, v, h) = (cfg.hidden, cfg.vocab, cfg.heads);
        let mut tokens = Vec::new();
        let mut starts = Vec::with_capacity(seqs.len());
        let mut lens = Vec::with_capacity(seqs.len());
        let mut prob_offsets = Vec::with_capacity(seqs.len() + 1);
        let mut prob_total = 0;
        for s in seqs {
            let s = s.as_ref();
            starts.push(tokens.len());
            lens.push(s.len());
            prob_offsets.push(prob_total);
            prob_total += h * s.len() * s.len();
            tokens.extend_from_slice(s);
        }
        let rows = tokens.len();

        let mut x = vec![T::zero(); rows * d];
        let emb = self.p(&self.layout.tok_emb);
        for (si, &start) in starts.iter().enumerate() {
            for pos in 0..lens[si] {
                let r = start + pos;
                let tok = tokens[r] as usize;
                let pe = &self.pos_enc[pos * d..(pos + 1) * d];
                for j in 0..d {
                    x[r * d + j] = emb[tok * d + j] * self.emb_scale + pe[j];
                }
            }
        }

        let mut layers = Vec::with_capacity(cfg.layers);
        for lr in &self.layout.layers {
            let mut c = LayerCache {
                probs: vec![T::zero(); prob_total],
                ..LayerCache::default()
            };
            match cfg.block_norm {
                BlockNorm::Pre => {
                    c.attn_in = vec![T::zero(); rows * d];
                    layer_norm(&x, self.p(&lr.ln1_g), self.p(&lr.ln1_b), d, &mut c.attn_in, &mut c.ln_a);
                    let o = self.attention_forward(lr, &mut c, &starts, &lens, &prob_offsets);
                    add_into(&mut x, &o);
                    c.mlp_in = vec![T::zero(); rows * d];
                    layer_norm(&x, self.p(&lr.ln2_g), self.p(&lr.ln2_b), d, &mut c.mlp_in, &mut c.ln_b);
                    let m = self.mlp_forward(lr, &mut c);
                    add_into(&mut x, &m);
                }
                BlockNorm::Post => {
                    c.attn_in = x.clone();
                    let o = self.attention_forward(lr, &mut c, &starts, &lens, &prob_offsets);
                    add_into(&mut x, &o);
                    c.mlp_in = vec![T::zero(); rows * d];
                    layer_norm(&x, self.p(&lr.ln1_g), self.p(&lr.ln1_b), d, &mut c.mlp_in, &mut c.ln_a);
                    let mut z = self.mlp_forward(lr, &mut c);
                    add_into(&mut z, &c.mlp_in);
                    layer_norm(&z, self.p(&lr.ln2_g), self.p(&lr.ln2_b), d, &mut x, &mut c.ln_b);
                }
            }
            layers.push(c);
        }

        let mut lnf = LnCache::default();
        let mut hf = vec![T::zero(); rows * d];
        layer_norm(&x, self.p(&self.layout.lnf_g), self.p(&self.layout.lnf_b), d, &mut hf, &mut lnf);
        let mut logits = vec![T::zero(); rows * v];
        matmul(&mut logits, &hf, self.p(&self.layout.w_out), rows, d, v, false);
        add_bias(&mut logits, self.p(&self.layout.b_out));

        Ok(ForwardPass {
            tokens,
            starts,
            lens,
            prob_offsets,
            layers,
            lnf,
            hf,
            logits,
            vocab: v,
        })
    }

    fn attention_forward(
        &self,
        lr: &LayerRanges,
        c: &mut LayerCache<T>,
        starts: &[usize],
        lens: &[usize],
        prob_offsets: &[usize],
    ) -> Vec<T> {
        let cfg = &self.config;
        let (d, h, dh) = (cfg.hidden, cfg.heads, cfg.head_dim());
        let rows = c.attn_in.len() / d;
        let d3 = 3 * d;
        c.qkv = vec![T::zero(); rows * d3];
        matmul(&mut c.qkv, &c.attn_in, self.p(&lr.w_qkv), rows, d, d3, false);
        add_bias(&mut c.qkv, self.p(&lr.b_qkv));
        c.att = vec![T::zero(); rows * d];
        let scale = T::one() / T::from_f(dh as f64).sqrt();
        for (s, &r0) in starts.iter().enumerate() {
            let n = lens[s];
            for head in 0..h {
                let probs = &mut c.probs[prob_offsets[s] + head * n * n..][..n * n];
                let qo = head * dh;
                let ko = d + head * dh;
                let vo = 2 * d + head * dh;
                for t in 0..n {
                    let q = &c.qkv[(r0 + t) * d3 + qo..][..dh];
                    let prow = &mut probs[t * n..t * n + n];
                    let mut mx = T::neg_infinity();
                    for u in 0..=t {
                        let k = &c.qkv[(r0 + u) * d3 + ko..][..dh];
                        let sc = q.iter().zip(k).map(|(&a, &b)| a * b).sum::<T>() * scale;
                        prow[u] = sc;
                        if sc > mx {
                            mx = sc;
                        }
                    }
                    let mut sum = T::zero();
                    for p in prow[..=t].iter_mut() {
                        *p = (*p - mx).exp();
                        sum += *p;
                    }
                    let out = &mut c.att[(r0 + t) * d + qo..][..dh];
                    for u in 0..=t {
                        prow[u] /= sum;
                        let pu = prow[u];
                        let vv = &c.qkv[(r0 + u) * d3 + vo..][..dh];
                        for (o, &val) in out.iter_mut().zip(vv) {
                            *o += pu * val;
                        }
                    }
                }
            }
        }
        let mut o = vec![T::zero(); rows * d];
        matmul(&mut o, &c.att, self.p(&lr.w_o), rows, d, d, false);
        add_bias(&mut o, self.p(&lr.b_o));
        o
    }

    fn mlp_forward(&self, lr: &LayerRanges, c: &mut LayerCache<T>) -> Vec<T> {
        let (d, m) = (self.config.hidden, self.config.mlp());
        let rows = c.mlp_in.len() / d;
        c.act = vec![T::zero(); rows * m];
        matmul(&mut c.act, &c.mlp_in, self.p(&lr.w_fc1), rows, d, m, false);
        add_bias(&mut c.act, self.p(&lr.b_fc1));
        c.act.iter_mut().for_each(|a| {
            if *a < T::zero() {
                *a = T::zero()
            }
        });
        let mut out = vec![T::zero(); rows * d];
        matmul(&mut out, &c.act, self.p(&lr.w_fc2), rows, m, d, false);
        add_bias(&mut out, self.p(&lr.b_fc2));
        out
    }

    /// Backpropagates `Σ_s Σ_p weights[s][p] · CE(s, p)` and accumulates into
    /// `grads`. `weights[s]` has one entry per predicted position
    /// (`len - 1`). Returns the weighted loss.
    pub fn backward<W: AsRef<[f64]>>(&self, fwd: &ForwardPass<T>, weights: &[W], grads: &mut [T]) -> f64 {
        assert_eq!(grads.len(), self.params.len());
        assert_eq!(weights.len(), fwd.lens.len());
        let cfg = &self.config;
        let (d, v) = (cfg.hidden, cfg.vocab);
        let rows = fwd.tokens.len();

        let mut dlogits = vec![T::zero(); rows * v];
        let mut loss = 0.0;
        for (s, w) in weights.iter().enumerate() {
            let w = w.as_ref();
            let n = fwd.lens[s];
            assert_eq!(w.len(), n.saturating_sub(1), "weights per predicted position");
            for (p, &wp) in w.iter().enumerate() {
                if wp == 0.0 {
                    continue;
                }
                let r = fwd.starts[s] + p;
                let row = &fwd.logits[r * v..(r + 1) * v];
                let target = fwd.tokens[r + 1] as usize;
                let mx = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
                let se: T = row.iter().map(|&x| (x - mx).exp()).sum();
                loss += wp * ((mx + se.ln()) - row[target]).as_f64();
                let wt = T::from_f(wp);
                let dr = &mut dlogits[r * v..(r + 1) * v];
                for (dj, &x) in dr.iter_mut().zip(row) {
                    *dj = wt * (x - mx).exp() / se;
                }
                dr[target] -= wt;
            }
        }

        let lay = &self.layout;
        matmul_at(&mut grads[lay.w_out.clone()], &fwd.hf, &dlogits, rows, d, v, true);
        add_colsum(&mut grads[lay.b_out.clone()], &dlogits);
        let mut dhf = vec![T::zero(); rows * d];
        matmul_bt(&mut dhf, &dlogits, self.p(&lay.w_out), rows, v, d, false);
        drop(dlogits);

        let mut dx = vec![T::zero(); rows * d];
        {
            let (lo, hi) = grads.split_at_mut(lay.lnf_b.start);
            layer_norm_backward(
                &dhf,
                &fwd.lnf,
                self.p(&lay.lnf_g),
                &mut lo[lay.lnf_g.clone()],
                &mut hi[..lay.lnf_b.len()],
                &mut dx,
                d,
            );
        }

        for (lr, c) in lay.layers.iter().zip(&fwd.layers).rev() {
            dx = match cfg.block_norm {
                BlockNorm::Pre => {
                    let dmlp_in = self.mlp_backward(lr, c, &dx, grads);
                    let mut tmp = vec![T::zero(); rows * d];
                    self.ln_backward_into(&dmlp_in, &c.ln_b, &lr.ln2_g, &lr.ln2_b, grads, &mut tmp);
                    add_into(&mut dx, &tmp);
                    let dattn_in = self.attention_backward(lr, c, fwd, &dx, grads);
                    self.ln_backward_into(&dattn_in, &c.ln_a, &lr.ln1_g, &lr.ln1_b, grads, &mut tmp);
                    add_into(&mut dx, &tmp);
                    dx
                }
                BlockNorm::Post => {
                    let mut dz = vec![T::zero(); rows * d];
                    self.ln_backward_into(&dx, &c.ln_b, &lr.ln2_g, &lr.ln2_b, grads, &mut dz);
                    let mut dmlp_in = self.mlp_backward(lr, c, &dz, grads);
                    add_into(&mut dmlp_in, &dz);
                    let mut dy = vec![T::zero(); rows * d];
                    self.ln_backward_into(&dmlp_in, &c.ln_a, &lr.ln1_g, &lr.ln1_b, grads, &mut dy);
                    let dattn_in = self.attention_backward(lr, c, fwd, &dy, grads);
                    add_into(&mut dy, &dattn_in);
                    dy
                }
            };
        }

        let emb = lay.tok_emb.clone();
        let gemb = &mut grads[emb];
        for r in 0..rows {
            let tok = fwd.tokens[r] as usize;
            for j in 0..d {
                gemb[tok * d + j] += self.emb_scale * dx[r * d + j];
            }
        }
        loss
    }

    fn ln_backward_into(
        &self,
        dy: &[T],
        cache: &LnCache<T>,
        g: &std::ops::Range<usize>,
        b: &std::ops::Range<usize>,
        grads: &mut [T],
        dx: &mut [T],
    ) {
        debug_assert_eq!(g.end, b.start);
        let (lo, hi) = grads.split_at_mut(b.start);
        layer_norm_backward(
            dy,
            cache,
            self.p(g),
            &mut lo[g.clone()],
            &mut hi[..b.len()],
            dx,
            self.config.hidden,
        );
    }

    fn mlp_backward(&self, lr: &LayerRanges, c: &LayerCache<T>, dout: &[T], grads: &mut [T]) -> Vec<T> {
        let (d, m) = (self.config.hidden, self.config.mlp());
        let rows = dout.len() / d;
        matmul_at(&mut grads[lr.w_fc2.clone()], &c.act, dout, rows, m, d, true);
        add_colsum(&mut grads[lr.b_fc2.clone()], dout);
        let mut dact = vec![T::zero(); rows * m];
        matmul_bt(&mut dact, dout, self.p(&lr.w_fc2), rows, d, m, false);
        for (g, &a) in dact.iter_mut().zip(&c.act) {
            if a <= T::zero() {
                *g = T::zero();
            }
        }
        matmul_at(&mut grads[lr.w_fc1.clone()], &c.mlp_in, &dact, rows, d, m, true);
        add_colsum(&mut grads[lr.b_fc1.clone()], &dact);
        let mut din = vec![T::zero(); rows * d];
        matmul_bt(&mut din, &dact, self.p(&lr.w_fc1), rows, m, d, false);
        din
    }

    fn attention_backward(
        &self,
        lr: &LayerRanges,
        c: &LayerCache<T>,
        fwd: &ForwardPass<T>,
        dout: &[T],
        grads: &mut [T],
    ) -> Vec<T> {
        let cfg = &self.config;
        let (d, h, dh) = (cfg.hidden, cfg.heads, cfg.head_dim());
        let d3 = 3 * d;
        let rows = dout.len() / d;
        matmul_at(&mut grads[lr.w_o.clone()], &c.att, dout, rows, d, d, true);
        add_colsum(&mut grads[lr.b_o.clone()], dout);
        let mut datt = vec![T::zero(); rows * d];
        matmul_bt(&mut datt, dout, self.p(&lr.w_o), rows, d, d, false);

        let scale = T::one() / T::from_f(dh as f64).sqrt();
        let mut dqkv = vec![T::zero(); rows * d3];
        let mut dp = Vec::new();
        for (s, &r0) in fwd.starts.iter().enumerate() {
            let n = fwd.lens[s];
            dp.resize(n, T::zero());
            for head in 0..h {
                let probs = &c.probs[fwd.prob_offsets[s] + head * n * n..][..n * n];
                let (qo, ko, vo) = (head * dh, d + head * dh, 2 * d + head * dh);
                for t in 0..n {
                    let prow = &probs[t * n..t * n + n];
                    let da = &datt[(r0 + t) * d + qo..][..dh];
                    let mut dot = T::zero();
                    for u in 0..=t {
                        let vv = &c.qkv[(r0 + u) * d3 + vo..][..dh];
                        let g = da.iter().zip(vv).map(|(&a, &b)| a * b).sum::<T>();
                        dp[u] = g;
                        dot += prow[u] * g;
                    }
                    for u in 0..=t {
                        let pu = prow[u];
                        let ds = pu * (dp[u] - dot) * scale;
                        for j in 0..dh {
                            let q = c.qkv[(r0 + t) * d3 + qo + j];
                            let k = c.qkv[(r0 + u) * d3 + ko + j];
                            dqkv[(r0 + t) * d3 + qo + j] += ds * k;
                            dqkv[(r0 + u) * d3 + ko + j] += ds * q;
                            dqkv[(r0 + u) * d3 + vo + j] += pu * da[j];
                        }
                    }
                }
            }
        }
        matmul_at(&mut grads[lr.w_qkv.clone()], &c.attn_in, &dqkv, rows, d, d3, true);
        add_colsum(&mut grads[lr.b_qkv.clone()], &dqkv);
        let mut din = vec![T::zero(); rows * d];
        matmul_bt(&mut din, &dqkv, self.p(&lr.w_qkv), rows, d3, d, false);
        din
    }

    /// Per-sequence sum of token cross-entropies over all predicted positions.
    pub fn sum_losses<S: AsRef<[u32]>>(&self, seqs: &[S]) -> Result<Vec<f64>> {
        Ok(self
            .forward(seqs)?
            .token_losses()
            .into_iter()
            .map(|l| l.iter().sum())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn tiny(norm: BlockNorm) -> Transformer<f64> {
        let cfg = ModelConfig {
            layers: 2,
            heads: 2,
            hidden: 8,
            context: 16,
            vocab: 11,
            precision_bits: 32,
            block_norm: norm,
        };
        Transformer::init(cfg, &mut seeded(3)).unwrap()
    }

    #[test]
    fn init_conventions() {
        let m = tiny(BlockNorm::Pre);
        for spec in &m.layout().specs {
            let t = &m.params[spec.range()];
            if spec.name.ends_with(".g") {
                assert!(t.iter().all(|&x| x == 1.0), "{}", spec.name);
            } else if !spec.decay {
                assert!(t.iter().all(|&x| x == 0.0), "{}", spec.name);
            }
        }
        assert_eq!(m.param_count(), m.config().param_count());
        let again = tiny(BlockNorm::Pre);
        assert_eq!(m.params, again.params);
    }

    #[test]
    fn causal_and_batch_independent() {
        for norm in [BlockNorm::Pre, BlockNorm::Post] {
            let m = tiny(norm);
            let a = vec![0u32, 3, 5, 7, 2, 9];
            let mut b = a.clone();
            b[3] = 10;
            let fa = m.forward(&[&a[..]]).unwrap();
            let fb = m.forward(&[&b[..]]).unwrap();
            for pos in 0..3 {
                assert_eq!(fa.logits_at(0, pos), fb.logits_at(0, pos));
            }
            assert_ne!(fa.logits_at(0, 3), fb.logits_at(0, 3));

            let c = vec![0u32, 1, 4];
            let f1 = m.forward(&[&a[..], &c[..]]).unwrap();
            let f2 = m.forward(&[&c[..], &a[..]]).unwrap();
            for pos in 0..a.len() {
                for (x, y) in f1.logits_at(0, pos).iter().zip(f2.logits_at(1, pos)) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let m = tiny(BlockNorm::Pre);
        assert!(matches!(m.forward(&[vec![0u32, 11]]), Err(Error::OutOfVocab { .. })));
        assert!(matches!(m.forward(&[vec![0u32; 17]]), Err(Error::SequenceTooLong { .. })));
    }

    #[test]
    fn zero_weights_give_zero_gradient_and_loss() {
        let m = tiny(BlockNorm::Pre);
        let seqs = vec![vec![0u32, 3, 5, 7]];
        let f = m.forward(&seqs).unwrap();
        let mut g = vec![0.0; m.param_count()];
        let loss = m.backward(&f, &[vec![0.0; 3]], &mut g);
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn weighted_backward_matches_token_losses() {
        let m = tiny(BlockNorm::Post);
        let seqs = vec![vec![0u32, 3, 5, 7, 1], vec![0u32, 2, 2]];
        let f = m.forward(&seqs).unwrap();
        let tl = f.token_losses();
        let w = vec![vec![1.0, 0.5, 2.0, 0.0], vec![1.0, 3.0]];
        let mut g = vec![0.0; m.param_count()];
        let loss = m.backward(&f, &w, &mut g);
        let want: f64 = tl
            .iter()
            .zip(&w)
            .flat_map(|(l, w)| l.iter().zip(w).map(|(a, b)| a * b))
            .sum();
        assert!((loss - want).abs() < 1e-10);
    }
}
