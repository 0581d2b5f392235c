//! A small decoder-only transformer with hand-written forward and backward
//! passes in f64.
//!
//! Layout per block: pre-norm causal multi-head self-attention with a
//! residual connection, then a pre-norm two-layer feed-forward with 4x
//! expansion and GELU. Token and positional embeddings are learned, the
//! output projection is tied to the token embedding, and all weight
//! matrices are initialized from N(0, INIT_STD^2).

use ndarray::{s, Array1, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelError;

/// Initial weight standard deviation; lowered from the usual 0.02 to keep
/// early gradients tame on small corpora.
pub const INIT_STD: f64 = 0.01;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GptConfig {
    pub vocab_size: usize,
    pub n_layer: usize,
    pub n_head: usize,
    pub n_embd: usize,
    pub block_size: usize,
}

#[derive(Debug, Clone)]
struct LayerNorm {
    gamma: Array1<f64>,
    beta: Array1<f64>,
    d_gamma: Array1<f64>,
    d_beta: Array1<f64>,
}

impl LayerNorm {
    fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            d_gamma: Array1::zeros(dim),
            d_beta: Array1::zeros(dim),
        }
    }

    /// Returns (normalized-and-scaled output, x_hat, rstd-per-row).
    fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
        let n = x.nrows();
        let d = x.ncols();
        let mut x_hat = Array2::zeros((n, d));
        let mut rstd = Array1::zeros(n);
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            let row = x.row(i);
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + LN_EPS).sqrt();
            rstd[i] = r;
            for j in 0..d {
                let xh = (x[[i, j]] - mean) * r;
                x_hat[[i, j]] = xh;
                out[[i, j]] = xh * self.gamma[j] + self.beta[j];
            }
        }
        (out, x_hat, rstd)
    }

    /// Accumulates gamma/beta grads and returns dx.
    fn backward(&mut self, dy: &Array2<f64>, x_hat: &Array2<f64>, rstd: &Array1<f64>) -> Array2<f64> {
        let n = dy.nrows();
        let d = dy.ncols();
        let mut dx = Array2::zeros((n, d));
        for i in 0..n {
            let mut sum_dyg = 0.0;
            let mut sum_dyg_xhat = 0.0;
            for j in 0..d {
                let dyg = dy[[i, j]] * self.gamma[j];
                sum_dyg += dyg;
                sum_dyg_xhat += dyg * x_hat[[i, j]];
                self.d_gamma[j] += dy[[i, j]] * x_hat[[i, j]];
                self.d_beta[j] += dy[[i, j]];
            }
            let inv_d = 1.0 / d as f64;
            for j in 0..d {
                let dyg = dy[[i, j]] * self.gamma[j];
                dx[[i, j]] =
                    rstd[i] * (dyg - inv_d * sum_dyg - x_hat[[i, j]] * inv_d * sum_dyg_xhat);
            }
        }
        dx
    }
}

#[derive(Debug, Clone)]
struct Block {
    ln1: LayerNorm,
    wq: Array2<f64>,
    wk: Array2<f64>,
    wv: Array2<f64>,
    wo: Array2<f64>,
    d_wq: Array2<f64>,
    d_wk: Array2<f64>,
    d_wv: Array2<f64>,
    d_wo: Array2<f64>,
    ln2: LayerNorm,
    w1: Array2<f64>,
    w2: Array2<f64>,
    d_w1: Array2<f64>,
    d_w2: Array2<f64>,
}

/// Per-layer activations cached by the training forward pass.
struct BlockCache {
    ln1_in_hat: Array2<f64>,
    ln1_rstd: Array1<f64>,
    a: Array2<f64>, // ln1 output
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    att: Vec<Array2<f64>>, // (T,T) per (batch, head), pre-dropout softmax
    att_mask: Option<Vec<Array2<f64>>>,
    ho: Array2<f64>, // concatenated head outputs
    resid1_mask: Option<Array2<f64>>,
    ln2_in_hat: Array2<f64>,
    ln2_rstd: Array1<f64>,
    m: Array2<f64>,  // ln2 output
    h1: Array2<f64>, // pre-GELU
    hg: Array2<f64>, // post-GELU
    resid2_mask: Option<Array2<f64>>,
}

struct ForwardCache {
    emb_mask: Option<Array2<f64>>,
    blocks: Vec<BlockCache>,
    lnf_in_hat: Array2<f64>,
    lnf_rstd: Array1<f64>,
    xf: Array2<f64>,
    probs: Array2<f64>, // softmax of logits
}

/// The model: owns parameters and matching gradient buffers.
pub struct Gpt {
    pub cfg: GptConfig,
    dropout: f64,
    wte: Array2<f64>,
    wpe: Array2<f64>,
    d_wte: Array2<f64>,
    d_wpe: Array2<f64>,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
}

impl Gpt {
    /// Builds and initializes the network deterministically from `seed`.
    pub fn new(cfg: GptConfig, dropout: f64, seed: u64) -> Result<Self, ModelError> {
        if !cfg.n_embd.is_multiple_of(cfg.n_head) {
            return Err(ModelError::InfeasibleShape {
                n_embd: cfg.n_embd,
                n_head: cfg.n_head,
            });
        }
        if cfg.vocab_size < 2 {
            return Err(ModelError::VocabTooSmall(cfg.vocab_size));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut init = |rows: usize, cols: usize| -> Array2<f64> {
            Array2::from_shape_fn((rows, cols), |_| normal.sample(&mut rng))
        };
        let e = cfg.n_embd;
        let wte = init(cfg.vocab_size, e);
        let wpe = init(cfg.block_size, e);
        let blocks = (0..cfg.n_layer)
            .map(|_| Block {
                ln1: LayerNorm::new(e),
                wq: init(e, e),
                wk: init(e, e),
                wv: init(e, e),
                wo: init(e, e),
                d_wq: Array2::zeros((e, e)),
                d_wk: Array2::zeros((e, e)),
                d_wv: Array2::zeros((e, e)),
                d_wo: Array2::zeros((e, e)),
                ln2: LayerNorm::new(e),
                w1: init(e, 4 * e),
                w2: init(4 * e, e),
                d_w1: Array2::zeros((e, 4 * e)),
                d_w2: Array2::zeros((4 * e, e)),
            })
            .collect();
        Ok(Self {
            d_wte: Array2::zeros(wte.raw_dim()),
            d_wpe: Array2::zeros(wpe.raw_dim()),
            wte,
            wpe,
            blocks,
            ln_f: LayerNorm::new(e),
            cfg,
            dropout,
        })
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(|p| n += p.len());
        n
    }

    fn visit(&self, mut f: impl FnMut(&[f64])) {
        f(self.wte.as_slice().unwrap());
        f(self.wpe.as_slice().unwrap());
        for b in &self.blocks {
            f(b.ln1.gamma.as_slice().unwrap());
            f(b.ln1.beta.as_slice().unwrap());
            f(b.wq.as_slice().unwrap());
            f(b.wk.as_slice().unwrap());
            f(b.wv.as_slice().unwrap());
            f(b.wo.as_slice().unwrap());
            f(b.ln2.gamma.as_slice().unwrap());
            f(b.ln2.beta.as_slice().unwrap());
            f(b.w1.as_slice().unwrap());
            f(b.w2.as_slice().unwrap());
        }
        f(self.ln_f.gamma.as_slice().unwrap());
        f(self.ln_f.beta.as_slice().unwrap());
    }

    /// Visits every (weights, grads, decayable) triple in a fixed order.
    /// Matrix weights are decayed; LayerNorm parameters are not.
    pub(crate) fn visit_params_mut(&mut self, mut f: impl FnMut(&mut [f64], &mut [f64], bool)) {
        f(
            self.wte.as_slice_mut().unwrap(),
            self.d_wte.as_slice_mut().unwrap(),
            true,
        );
        f(
            self.wpe.as_slice_mut().unwrap(),
            self.d_wpe.as_slice_mut().unwrap(),
            true,
        );
        for b in &mut self.blocks {
            f(
                b.ln1.gamma.as_slice_mut().unwrap(),
                b.ln1.d_gamma.as_slice_mut().unwrap(),
                false,
            );
            f(
                b.ln1.beta.as_slice_mut().unwrap(),
                b.ln1.d_beta.as_slice_mut().unwrap(),
                false,
            );
            f(b.wq.as_slice_mut().unwrap(), b.d_wq.as_slice_mut().unwrap(), true);
            f(b.wk.as_slice_mut().unwrap(), b.d_wk.as_slice_mut().unwrap(), true);
            f(b.wv.as_slice_mut().unwrap(), b.d_wv.as_slice_mut().unwrap(), true);
            f(b.wo.as_slice_mut().unwrap(), b.d_wo.as_slice_mut().unwrap(), true);
            f(
                b.ln2.gamma.as_slice_mut().unwrap(),
                b.ln2.d_gamma.as_slice_mut().unwrap(),
                false,
            );
            f(
                b.ln2.beta.as_slice_mut().unwrap(),
                b.ln2.d_beta.as_slice_mut().unwrap(),
                false,
            );
            f(b.w1.as_slice_mut().unwrap(), b.d_w1.as_slice_mut().unwrap(), true);
            f(b.w2.as_slice_mut().unwrap(), b.d_w2.as_slice_mut().unwrap(), true);
        }
        f(
            self.ln_f.gamma.as_slice_mut().unwrap(),
            self.ln_f.d_gamma.as_slice_mut().unwrap(),
            false,
        );
        f(
            self.ln_f.beta.as_slice_mut().unwrap(),
            self.ln_f.d_beta.as_slice_mut().unwrap(),
            false,
        );
    }

    pub fn zero_grad(&mut self) {
        self.visit_params_mut(|_, g, _| g.iter_mut().for_each(|v| *v = 0.0));
    }

    /// Reads the parameter at flat index `i` (visit order).
    pub fn param_at(&self, i: usize) -> f64 {
        let mut offset = 0;
        let mut out = f64::NAN;
        self.visit(|p| {
            if i >= offset && i < offset + p.len() {
                out = p[i - offset];
            }
            offset += p.len();
        });
        out
    }

    /// Adds `delta` to the parameter at flat index `i`.
    pub fn param_add(&mut self, i: usize, delta: f64) {
        let mut offset = 0;
        self.visit_params_mut(|w, _, _| {
            if i >= offset && i < offset + w.len() {
                w[i - offset] += delta;
            }
            offset += w.len();
        });
    }

    /// Reads the gradient at flat index `i` (visit order).
    pub fn grad_at(&mut self, i: usize) -> f64 {
        let mut offset = 0;
        let mut out = f64::NAN;
        self.visit_params_mut(|_, g, _| {
            if i >= offset && i < offset + g.len() {
                out = g[i - offset];
            }
            offset += g.len();
        });
        out
    }

    fn embed(&self, ids: &Array2<usize>) -> Array2<f64> {
        let (b, t) = ids.dim();
        let e = self.cfg.n_embd;
        let mut x = Array2::zeros((b * t, e));
        for bi in 0..b {
            for ti in 0..t {
                let tok = ids[[bi, ti]];
                let row = bi * t + ti;
                for j in 0..e {
                    x[[row, j]] = self.wte[[tok, j]] + self.wpe[[ti, j]];
                }
            }
        }
        x
    }

    fn dropout_mask(&self, shape: (usize, usize), rng: &mut ChaCha8Rng) -> Option<Array2<f64>> {
        use rand::Rng;
        if self.dropout <= 0.0 {
            return None;
        }
        let keep = 1.0 - self.dropout;
        Some(Array2::from_shape_fn(shape, |_| {
            if rng.random::<f64>() < self.dropout {
                0.0
            } else {
                1.0 / keep
            }
        }))
    }

    /// Training forward: cross-entropy loss in nats plus the cache needed by
    /// `backward`. Dropout is active when `rng` is provided.
    fn forward(
        &self,
        ids: &Array2<usize>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<f64>, ForwardCache) {
        let (b, t) = ids.dim();
        assert!(
            t <= self.cfg.block_size,
            "sequence length {t} exceeds block size {}",
            self.cfg.block_size
        );
        let h = self.cfg.n_head;
        let hd = self.cfg.n_embd / h;
        let scale = 1.0 / (hd as f64).sqrt();

        let mut x = self.embed(ids);
        let emb_mask = rng.as_deref_mut().and_then(|r| self.dropout_mask(x.dim(), r));
        if let Some(m) = &emb_mask {
            x *= m;
        }

        let mut caches = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let (a, ln1_in_hat, ln1_rstd) = blk.ln1.forward(&x);
            let q = a.dot(&blk.wq);
            let k = a.dot(&blk.wk);
            let v = a.dot(&blk.wv);

            let mut ho = Array2::zeros(x.raw_dim());
            let mut att_all = Vec::with_capacity(b * h);
            let mut att_masks = if rng.is_some() && self.dropout > 0.0 {
                Some(Vec::with_capacity(b * h))
            } else {
                None
            };
            for bi in 0..b {
                let rows = s![bi * t..(bi + 1) * t, ..];
                for hi in 0..h {
                    let cols = s![.., hi * hd..(hi + 1) * hd];
                    let qh = q.slice(rows).slice_move(cols);
                    let kh = k.slice(rows).slice_move(cols);
                    let vh = v.slice(rows).slice_move(cols);
                    let mut logits = qh.dot(&kh.t());
                    logits *= scale;
                    let att = causal_softmax(&logits);
                    let ctx = if let Some(masks) = att_masks.as_mut() {
                        let m = self
                            .dropout_mask((t, t), rng.as_deref_mut().unwrap())
                            .expect("dropout active");
                        let dropped = &att * &m;
                        masks.push(m);
                        dropped.dot(&vh)
                    } else {
                        att.dot(&vh)
                    };
                    ho.slice_mut(rows).slice_move(cols).assign(&ctx);
                    att_all.push(att);
                }
            }

            let mut atty = ho.dot(&blk.wo);
            let resid1_mask = rng.as_deref_mut().and_then(|r| self.dropout_mask(atty.dim(), r));
            if let Some(m) = &resid1_mask {
                atty *= m;
            }
            let x1 = &x + &atty;

            let (m_out, ln2_in_hat, ln2_rstd) = blk.ln2.forward(&x1);
            let h1 = m_out.dot(&blk.w1);
            let hg = h1.mapv(gelu);
            let mut h2 = hg.dot(&blk.w2);
            let resid2_mask = rng.as_deref_mut().and_then(|r| self.dropout_mask(h2.dim(), r));
            if let Some(m) = &resid2_mask {
                h2 *= m;
            }
            let x2 = &x1 + &h2;

            caches.push(BlockCache {
                ln1_in_hat,
                ln1_rstd,
                a,
                q,
                k,
                v,
                att: att_all,
                att_mask: att_masks,
                ho,
                resid1_mask,
                ln2_in_hat,
                ln2_rstd,
                m: m_out,
                h1,
                hg,
                resid2_mask,
            });
            x = x2;
        }

        let (xf, lnf_in_hat, lnf_rstd) = self.ln_f.forward(&x);
        let logits = xf.dot(&self.wte.t());
        let probs = row_softmax(&logits);
        (
            probs.clone(),
            ForwardCache {
                emb_mask,
                blocks: caches,
                lnf_in_hat,
                lnf_rstd,
                xf,
                probs,
            },
        )
    }

    /// Mean cross-entropy (nats) of `probs` rows against flattened targets.
    fn nll(probs: &Array2<f64>, targets: &Array2<usize>) -> f64 {
        let (b, t) = targets.dim();
        let n = (b * t) as f64;
        let mut loss = 0.0;
        for bi in 0..b {
            for ti in 0..t {
                loss -= probs[[bi * t + ti, targets[[bi, ti]]]].max(1e-300).ln();
            }
        }
        loss / n
    }

    /// Evaluation-mode loss: no dropout, no gradient work.
    pub fn loss_eval(&self, ids: &Array2<usize>, targets: &Array2<usize>) -> f64 {
        let (probs, _) = self.forward(ids, None);
        Self::nll(&probs, targets)
    }

    /// Evaluation-mode logits reshaped to (batch, time, vocab).
    pub fn logits_eval(&self, ids: &Array2<usize>) -> Array3<f64> {
        let (b, t) = ids.dim();
        let (probs_unused, cache) = self.forward(ids, None);
        drop(probs_unused);
        let logits = cache.xf.dot(&self.wte.t());
        let v = self.cfg.vocab_size;
        let mut out = Array3::zeros((b, t, v));
        for bi in 0..b {
            for ti in 0..t {
                for vi in 0..v {
                    out[[bi, ti, vi]] = logits[[bi * t + ti, vi]];
                }
            }
        }
        out
    }

    /// One training forward/backward: accumulates parameter gradients
    /// (buffers are zeroed first) and returns the loss in nats.
    pub fn loss_and_grad(
        &mut self,
        ids: &Array2<usize>,
        targets: &Array2<usize>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> f64 {
        self.zero_grad();
        let (probs, cache) = self.forward(ids, rng);
        let loss = Self::nll(&probs, targets);
        if !loss.is_finite() {
            return loss;
        }
        self.backward(ids, targets, &cache);
        loss
    }

    fn backward(&mut self, ids: &Array2<usize>, targets: &Array2<usize>, cache: &ForwardCache) {
        let (b, t) = ids.dim();
        let n = b * t;
        let h = self.cfg.n_head;
        let hd = self.cfg.n_embd / h;
        let scale = 1.0 / (hd as f64).sqrt();

        // d loss / d logits = (softmax - onehot) / n
        let mut d_logits = cache.probs.clone();
        for bi in 0..b {
            for ti in 0..t {
                d_logits[[bi * t + ti, targets[[bi, ti]]]] -= 1.0;
            }
        }
        d_logits /= n as f64;

        // logits = xf . wte^T  (tied head)
        self.d_wte += &d_logits.t().dot(&cache.xf);
        let d_xf = d_logits.dot(&self.wte);
        let mut dx = self
            .ln_f
            .backward(&d_xf, &cache.lnf_in_hat, &cache.lnf_rstd);

        for (li, blk) in self.blocks.iter_mut().enumerate().rev() {
            let c = &cache.blocks[li];

            // MLP residual: x2 = x1 + dropout(gelu(ln2(x1) . w1) . w2)
            let mut d_h2 = dx.clone();
            if let Some(m) = &c.resid2_mask {
                d_h2 *= m;
            }
            blk.d_w2 += &c.hg.t().dot(&d_h2);
            let d_hg = d_h2.dot(&blk.w2.t());
            let d_h1 = {
                let mut d = d_hg;
                d.zip_mut_with(&c.h1, |dv, &x| *dv *= gelu_grad(x));
                d
            };
            blk.d_w1 += &c.m.t().dot(&d_h1);
            let d_m = d_h1.dot(&blk.w1.t());
            let d_x1_from_mlp = blk.ln2.backward(&d_m, &c.ln2_in_hat, &c.ln2_rstd);
            let d_x1 = &dx + &d_x1_from_mlp;

            // Attention residual: x1 = x + dropout(heads(ln1(x)) . wo)
            let mut d_atty = d_x1.clone();
            if let Some(m) = &c.resid1_mask {
                d_atty *= m;
            }
            blk.d_wo += &c.ho.t().dot(&d_atty);
            let d_ho = d_atty.dot(&blk.wo.t());

            let mut d_q = Array2::zeros(c.q.raw_dim());
            let mut d_k = Array2::zeros(c.k.raw_dim());
            let mut d_v = Array2::zeros(c.v.raw_dim());
            for bi in 0..b {
                let rows = s![bi * t..(bi + 1) * t, ..];
                for hi in 0..h {
                    let cols = s![.., hi * hd..(hi + 1) * hd];
                    let att_pre = &c.att[bi * h + hi];
                    let d_ctx = d_ho.slice(rows).slice_move(cols);
                    let vh = c.v.slice(rows).slice_move(cols);
                    let qh = c.q.slice(rows).slice_move(cols);
                    let kh = c.k.slice(rows).slice_move(cols);

                    // ctx = (att_pre [* mask]) . vh
                    let mut d_att = d_ctx.dot(&vh.t());
                    match &c.att_mask {
                        Some(masks) => {
                            let m = &masks[bi * h + hi];
                            let att_post = att_pre * m;
                            d_v.slice_mut(rows)
                                .slice_move(cols)
                                .scaled_add(1.0, &att_post.t().dot(&d_ctx));
                            d_att *= m;
                        }
                        None => {
                            d_v.slice_mut(rows)
                                .slice_move(cols)
                                .scaled_add(1.0, &att_pre.t().dot(&d_ctx));
                        }
                    }
                    let d_logits_h = softmax_backward(att_pre, &d_att);
                    d_q.slice_mut(rows)
                        .slice_move(cols)
                        .scaled_add(scale, &d_logits_h.dot(&kh));
                    d_k.slice_mut(rows)
                        .slice_move(cols)
                        .scaled_add(scale, &d_logits_h.t().dot(&qh));
                }
            }

            blk.d_wq += &c.a.t().dot(&d_q);
            blk.d_wk += &c.a.t().dot(&d_k);
            blk.d_wv += &c.a.t().dot(&d_v);
            let d_a = d_q.dot(&blk.wq.t()) + d_k.dot(&blk.wk.t()) + d_v.dot(&blk.wv.t());
            let d_x_from_attn = blk.ln1.backward(&d_a, &c.ln1_in_hat, &c.ln1_rstd);
            dx = &d_x1 + &d_x_from_attn;
        }

        if let Some(m) = &cache.emb_mask {
            dx *= m;
        }
        for bi in 0..b {
            for ti in 0..t {
                let row = bi * t + ti;
                let tok = ids[[bi, ti]];
                for j in 0..self.cfg.n_embd {
                    self.d_wte[[tok, j]] += dx[[row, j]];
                    self.d_wpe[[ti, j]] += dx[[row, j]];
                }
            }
        }
    }
}

/// tanh-approximation GELU.
fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    let sech2 = 1.0 - th * th;
    0.5 * (1.0 + th) + 0.5 * x * sech2 * C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Row-wise softmax with the causal mask: entry (i, j) is zero for j > i.
fn causal_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let t = logits.nrows();
    let mut out = Array2::zeros((t, t));
    for i in 0..t {
        let mut max = f64::NEG_INFINITY;
        for j in 0..=i {
            max = max.max(logits[[i, j]]);
        }
        let mut sum = 0.0;
        for j in 0..=i {
            let e = (logits[[i, j]] - max).exp();
            out[[i, j]] = e;
            sum += e;
        }
        for j in 0..=i {
            out[[i, j]] /= sum;
        }
    }
    out
}

fn row_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// d softmax: ds_i = p_i * (dp_i - sum_j p_j dp_j), row-wise.
fn softmax_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let (r, c) = p.dim();
    let mut out = Array2::zeros((r, c));
    for i in 0..r {
        let dot: f64 = (0..c).map(|j| p[[i, j]] * dp[[i, j]]).sum();
        for j in 0..c {
            out[[i, j]] = p[[i, j]] * (dp[[i, j]] - dot);
        }
    }
    out
}

/// Builds a batch array from nested slices in tests.
#[cfg(test)]
pub(crate) fn batch_from(rows: &[&[usize]]) -> Array2<usize> {
    let b = rows.len();
    let t = rows[0].len();
    Array2::from_shape_fn((b, t), |(i, j)| rows[i][j])
}
