//! Tape-graph builders for the network blocks.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{NodeId, Scalar, Tape};

use super::layout::{AttnIds, CrossBlockIds, EncoderIds, LinearIds, LnIds, SelfBlockIds};

const LN_EPS: f64 = 1e-5;
const MASKED: f64 = -1e30;

/// Additive causal mask: position i may attend to positions <= i.
pub fn causal_mask<F: Scalar>(t: usize) -> Arc<Array2<F>> {
    let neg = F::from(MASKED).unwrap();
    let mut m = Array2::zeros((t, t));
    for i in 0..t {
        for j in i + 1..t {
            m[[i, j]] = neg;
        }
    }
    Arc::new(m)
}

/// Shared state while building one forward graph: parameter leaves are
/// created once per parameter, and dropout masks are drawn in a fixed order.
pub struct GraphCtx<'a, 'p, F: Scalar> {
    pub tape: &'a mut Tape<'p, F>,
    leafs: Vec<Option<NodeId>>,
    mask: Arc<Array2<F>>,
    n_heads: usize,
    head_dim: usize,
    dropout_p: f64,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a, 'p, F: Scalar> GraphCtx<'a, 'p, F> {
    pub fn new(
        tape: &'a mut Tape<'p, F>,
        n_params: usize,
        t_len: usize,
        n_heads: usize,
        head_dim: usize,
        dropout_p: f64,
        rng: Option<&'a mut ChaCha8Rng>,
    ) -> Self {
        Self {
            tape,
            leafs: vec![None; n_params],
            mask: causal_mask(t_len),
            n_heads,
            head_dim,
            dropout_p,
            rng,
        }
    }

    pub fn leaf(&mut self, pid: usize) -> NodeId {
        if let Some(id) = self.leafs[pid] {
            return id;
        }
        let id = self.tape.param(pid);
        self.leafs[pid] = Some(id);
        id
    }

    pub fn linear(&mut self, x: NodeId, ids: &LinearIds) -> NodeId {
        let w = self.leaf(ids.w);
        let b = self.leaf(ids.b);
        let y = self.tape.matmul(x, w);
        self.tape.add_bias(y, b)
    }

    pub fn layer_norm(&mut self, x: NodeId, ids: &LnIds) -> NodeId {
        let g = self.leaf(ids.g);
        let b = self.leaf(ids.b);
        self.tape.layer_norm(x, g, b, F::from(LN_EPS).unwrap())
    }

    fn dropout(&mut self, x: NodeId) -> NodeId {
        if self.dropout_p <= 0.0 {
            return x;
        }
        let Some(rng) = self.rng.as_deref_mut() else { return x };
        let keep = 1.0 - self.dropout_p;
        let scale = F::from(1.0 / keep).unwrap();
        let dim = self.tape.shape(x);
        let mask = Array2::from_shape_fn(dim, |_| {
            if rng.random::<f64>() < keep {
                scale
            } else {
                F::zero()
            }
        });
        self.tape.mul_const(x, Arc::new(mask))
    }

    /// Multi-head attention; `q_src` supplies queries, `kv_src` keys/values.
    pub fn attention(&mut self, q_src: NodeId, kv_src: NodeId, ids: &AttnIds) -> NodeId {
        let q = self.linear(q_src, &ids.q);
        let k = self.linear(kv_src, &ids.k);
        let v = self.linear(kv_src, &ids.v);
        let scale = F::from(1.0 / (self.head_dim as f64).sqrt()).unwrap();
        let mut ctx: Option<NodeId> = None;
        for h in 0..self.n_heads {
            let start = h * self.head_dim;
            let qh = self.tape.slice_cols(q, start, self.head_dim);
            let kh = self.tape.slice_cols(k, start, self.head_dim);
            let vh = self.tape.slice_cols(v, start, self.head_dim);
            let scores = self.tape.matmul_bt(qh, kh);
            let scores = self.tape.scale(scores, scale);
            let probs = self.tape.softmax_rows(scores, self.mask.clone());
            let ctx_h = self.tape.matmul(probs, vh);
            ctx = Some(match ctx {
                None => ctx_h,
                Some(prev) => self.tape.concat_cols(prev, ctx_h),
            });
        }
        self.linear(ctx.expect("at least one head"), &ids.o)
    }

    fn feed_forward(&mut self, x: NodeId, w1: &LinearIds, w2: &LinearIds) -> NodeId {
        let h = self.linear(x, w1);
        let h = self.tape.gelu(h);
        self.linear(h, w2)
    }

    /// Pre-norm self-attention block with residuals.
    pub fn self_block(&mut self, x: NodeId, ids: &SelfBlockIds) -> NodeId {
        let h = self.layer_norm(x, &ids.ln1);
        let a = self.attention(h, h, &ids.attn);
        let a = self.dropout(a);
        let x = self.tape.add(x, a);
        let h = self.layer_norm(x, &ids.ln2);
        let f = self.feed_forward(h, &ids.ff1, &ids.ff2);
        let f = self.dropout(f);
        self.tape.add(x, f)
    }

    /// One direction of a cross layer: self-attention over `own`, then
    /// cross-attention with `other` as keys/values, then feed-forward.
    pub fn cross_block(&mut self, own: NodeId, other: NodeId, ids: &CrossBlockIds) -> NodeId {
        let h = self.layer_norm(own, &ids.ln_self);
        let a = self.attention(h, h, &ids.self_attn);
        let a = self.dropout(a);
        let x = self.tape.add(own, a);
        let q = self.layer_norm(x, &ids.ln_q);
        let kv = self.layer_norm(other, &ids.ln_kv);
        let c = self.attention(q, kv, &ids.cross_attn);
        let c = self.dropout(c);
        let x = self.tape.add(x, c);
        let h = self.layer_norm(x, &ids.ln_ffn);
        let f = self.feed_forward(h, &ids.ff1, &ids.ff2);
        let f = self.dropout(f);
        self.tape.add(x, f)
    }

    /// Causal conv stack: two shifted-matmul convolutions with ReLU, then a
    /// linear projection. Receptive field is 4 frames.
    pub fn encoder_stack(&mut self, x: NodeId, ids: &EncoderIds) -> NodeId {
        let h = self.causal_conv(x, &ids.conv1_taps, ids.conv1_bias);
        let h = self.tape.relu(h);
        let h = self.causal_conv(h, &ids.conv2_taps, ids.conv2_bias);
        let h = self.tape.relu(h);
        self.linear(h, &ids.proj)
    }

    fn causal_conv(&mut self, x: NodeId, taps: &[usize], bias: usize) -> NodeId {
        let mut acc: Option<NodeId> = None;
        for (j, &wid) in taps.iter().enumerate() {
            let shifted = if j == 0 { x } else { self.tape.shift_rows(x, j) };
            let w = self.leaf(wid);
            let term = self.tape.matmul(shifted, w);
            acc = Some(match acc {
                None => term,
                Some(prev) => self.tape.add(prev, term),
            });
        }
        let b = self.leaf(bias);
        self.tape.add_bias(acc.expect("conv has taps"), b)
    }
}
