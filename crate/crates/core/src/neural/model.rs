use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tape::{NodeId, Tape};
use super::tensor::{Mat, Scalar};
use crate::assignment::SlotTarget;
use crate::error::{Error, Result};
use crate::prompting::PromptLayout;
use crate::textenc::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderAttention {
    Bidirectional,
    Causal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_positions: usize,
    pub dropout: f64,
    pub decoder_self_attention: DecoderAttention,
    /// Clip radius of the learned relative-offset biases added to every
    /// self-attention score; 0 disables them.
    pub relative_radius: usize,
    /// Run the context through the decoder (ablation switch when false).
    pub context_via_decoder: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 4,
            ff_dim: 256,
            max_positions: 192,
            dropout: 0.1,
            decoder_self_attention: DecoderAttention::Bidirectional,
            relative_radius: 8,
            context_via_decoder: true,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ModelConfig(m.to_string()));
        if self.hidden == 0 || self.heads == 0 || self.ff_dim == 0 || self.max_positions == 0 {
            return bad("hidden, heads, ff_dim and max_positions must be >= 1");
        }
        if self.hidden % self.heads != 0 {
            return bad("hidden must be divisible by heads");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Embedding,
    Weight,
    Bias,
    Norm,
    Head,
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Attn {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    rel: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Ff {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, Copy)]
struct EncLayer {
    ln1: Norm,
    attn: Attn,
    ln2: Norm,
    ff: Ff,
}

#[derive(Debug, Clone, Copy)]
struct DecLayer {
    ln1: Norm,
    self_attn: Attn,
    ln2: Norm,
    cross: Attn,
    ln3: Norm,
    ff: Ff,
}

/// Where each named tensor lives in the flat parameter list.
#[derive(Debug, Clone)]
pub struct ParamIndex {
    pub specs: Vec<ParamSpec>,
    tok: usize,
    pos: usize,
    enc: Vec<EncLayer>,
    enc_norm: Norm,
    dec: Vec<DecLayer>,
    dec_norm: Norm,
    theta: usize,
}

impl ParamIndex {
    pub fn new(config: &ModelConfig, vocab_size: usize) -> Self {
        let h = config.hidden;
        let mut specs = Vec::new();
        let mut add = |name: String, rows: usize, cols: usize, kind: ParamKind| {
            specs.push(ParamSpec {
                name,
                rows,
                cols,
                kind,
            });
            specs.len() - 1
        };
        let tok = add("embed.tokens".into(), vocab_size, h, ParamKind::Embedding);
        let pos = add(
            "embed.positions".into(),
            config.max_positions,
            h,
            ParamKind::Embedding,
        );
        fn norm(
            add: &mut impl FnMut(String, usize, usize, ParamKind) -> usize,
            p: &str,
            h: usize,
        ) -> Norm {
            Norm {
                g: add(format!("{p}.gamma"), 1, h, ParamKind::Norm),
                b: add(format!("{p}.beta"), 1, h, ParamKind::Norm),
            }
        }
        let rel_shape =
            (config.relative_radius > 0).then_some((config.heads, 2 * config.relative_radius + 1));
        fn attn(
            add: &mut impl FnMut(String, usize, usize, ParamKind) -> usize,
            p: &str,
            h: usize,
            rel: Option<(usize, usize)>,
        ) -> Attn {
            let mut lin = |n: &str| {
                (
                    add(format!("{p}.{n}.weight"), h, h, ParamKind::Weight),
                    add(format!("{p}.{n}.bias"), 1, h, ParamKind::Bias),
                )
            };
            let (wq, bq) = lin("q");
            let (wk, bk) = lin("k");
            let (wv, bv) = lin("v");
            let (wo, bo) = lin("o");
            let rel = rel.map(|(r, c)| add(format!("{p}.rel_bias"), r, c, ParamKind::Bias));
            Attn {
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                rel,
            }
        }
        fn ff(
            add: &mut impl FnMut(String, usize, usize, ParamKind) -> usize,
            p: &str,
            h: usize,
            f: usize,
        ) -> Ff {
            Ff {
                w1: add(format!("{p}.fc1.weight"), h, f, ParamKind::Weight),
                b1: add(format!("{p}.fc1.bias"), 1, f, ParamKind::Bias),
                w2: add(format!("{p}.fc2.weight"), f, h, ParamKind::Weight),
                b2: add(format!("{p}.fc2.bias"), 1, h, ParamKind::Bias),
            }
        }
        let enc = (0..config.encoder_layers)
            .map(|l| {
                let p = format!("encoder.{l}");
                EncLayer {
                    ln1: norm(&mut add, &format!("{p}.ln_attn"), h),
                    attn: attn(&mut add, &format!("{p}.self_attn"), h, rel_shape),
                    ln2: norm(&mut add, &format!("{p}.ln_ff"), h),
                    ff: ff(&mut add, &p, h, config.ff_dim),
                }
            })
            .collect();
        let enc_norm = norm(&mut add, "encoder.ln_out", h);
        let dec = (0..config.decoder_layers)
            .map(|l| {
                let p = format!("decoder.{l}");
                DecLayer {
                    ln1: norm(&mut add, &format!("{p}.ln_self"), h),
                    self_attn: attn(&mut add, &format!("{p}.self_attn"), h, rel_shape),
                    ln2: norm(&mut add, &format!("{p}.ln_cross"), h),
                    cross: attn(&mut add, &format!("{p}.cross_attn"), h, None),
                    ln3: norm(&mut add, &format!("{p}.ln_ff"), h),
                    ff: ff(&mut add, &p, h, config.ff_dim),
                }
            })
            .collect();
        let dec_norm = norm(&mut add, "decoder.ln_out", h);
        let theta = add("span_head.theta".into(), h, 2, ParamKind::Head);
        ParamIndex {
            specs,
            tok,
            pos,
            enc,
            enc_norm,
            dec,
            dec_norm,
            theta,
        }
    }

    pub fn theta(&self) -> usize {
        self.theta
    }
}

/// Initial relative-offset biases: heads cycle through a preference for the
/// previous token, the next token, the token itself, and no preference.
fn rel_bias_prior<T: Scalar>(heads: usize, width: usize) -> Vec<T> {
    let radius = width / 2;
    let mut out = vec![T::zero(); heads * width];
    for h in 0..heads {
        let favored = match h % 4 {
            0 => Some(radius - 1),
            1 => Some(radius + 1),
            2 => Some(radius),
            _ => None,
        };
        if let Some(k) = favored.filter(|&k| k < width) {
            out[h * width + k] = T::from_f64_lossy(REL_PRIOR);
        }
    }
    out
}

const REL_PRIOR: f64 = 4.0;

/// All learnable tensors. `span_head.theta` (h x 2, columns start/end) is the
/// only span-selection parameter and is shared by every role.
#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub vocab_size: usize,
    pub index: ParamIndex,
    pub tensors: Vec<Mat<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn init(config: &ModelConfig, vocab_size: usize) -> Result<Self> {
        config.validate()?;
        let index = ParamIndex::new(config, vocab_size);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let tensors = index
            .specs
            .iter()
            .map(|s| {
                let n = s.rows * s.cols;
                let data: Vec<T> = match s.kind {
                    ParamKind::Embedding | ParamKind::Weight => (0..n)
                        .map(|_| T::from_f64_lossy(normal.sample(&mut rng)))
                        .collect(),
                    ParamKind::Bias if s.name.ends_with("rel_bias") => {
                        rel_bias_prior(s.rows, s.cols)
                    }
                    ParamKind::Bias => vec![T::zero(); n],
                    ParamKind::Norm if s.name.ends_with("gamma") => vec![T::one(); n],
                    ParamKind::Norm => vec![T::zero(); n],
                    ParamKind::Head => (0..n)
                        .map(|_| T::from_f64_lossy(rng.gen::<f64>()))
                        .collect(),
                };
                Mat::from_vec(s.rows, s.cols, data)
            })
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            vocab_size,
            index,
            tensors,
        })
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Mat::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            index: self.index.clone(),
            tensors: self.tensors.iter().map(Mat::cast).collect(),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.index.specs.iter().map(|s| s.name.as_str())
    }
}

/// Per-example values produced by [`forward`].
#[derive(Debug, Clone)]
pub struct ForwardOutputs<T> {
    pub h_enc: Mat<T>,
    /// Event-oriented context representation, `L x h`.
    pub h_x: Mat<T>,
    /// Context-oriented prompt representation, `P x h`.
    pub h_pt: Mat<T>,
    /// Slot features, one row per slot.
    pub psi: Mat<T>,
    /// `K x L` start and end logits in slot order.
    pub logits_start: Mat<T>,
    pub logits_end: Mat<T>,
    pub prompt_passes: usize,
}

/// Nodes of interest on a recorded forward tape.
pub struct ForwardGraph<'p, T: Scalar> {
    pub tape: Tape<'p, T>,
    pub h_enc: NodeId,
    pub h_x: NodeId,
    pub h_pt: NodeId,
    pub psi: NodeId,
    pub logits_start: NodeId,
    pub logits_end: NodeId,
}

struct Builder<'a, 'p, T: Scalar, R> {
    tape: Tape<'p, T>,
    idx: &'a ParamIndex,
    cfg: &'a ModelConfig,
    rng: Option<&'a mut R>,
}

impl<T: Scalar, R: Rng> Builder<'_, '_, T, R> {
    fn dropout(&mut self, x: NodeId) -> NodeId {
        let p = self.cfg.dropout;
        let Some(rng) = self.rng.as_deref_mut() else {
            return x;
        };
        if p <= 0.0 {
            return x;
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - p));
        let n = self.tape.value(x).len();
        let mask = (0..n)
            .map(|_| {
                if rng.gen::<f64>() < p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        self.tape.dropout(x, mask)
    }

    fn embed(&mut self, ids: &[TokenId]) -> NodeId {
        let tok: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let pos: Vec<usize> = (0..ids.len()).collect();
        let t = self.tape.gather(self.idx.tok, &tok);
        let p = self.tape.gather(self.idx.pos, &pos);
        let e = self.tape.add(t, p);
        self.dropout(e)
    }

    fn norm(&mut self, x: NodeId, n: Norm) -> NodeId {
        let g = self.tape.param(n.g);
        let b = self.tape.param(n.b);
        self.tape.layer_norm(x, g, b)
    }

    fn linear(&mut self, x: NodeId, w: usize, b: usize) -> NodeId {
        let w = self.tape.param(w);
        let b = self.tape.param(b);
        let y = self.tape.matmul(x, w);
        self.tape.add_row(y, b)
    }

    fn attention(&mut self, q_in: NodeId, kv_in: NodeId, a: Attn, causal: bool) -> NodeId {
        let q = self.linear(q_in, a.wq, a.bq);
        let k = self.linear(kv_in, a.wk, a.bk);
        let v = self.linear(kv_in, a.wv, a.bv);
        let heads = self.cfg.heads;
        let d = self.cfg.hidden / heads;
        let scale = T::from_f64_lossy(1.0 / (d as f64).sqrt());
        let rel = a.rel.map(|r| self.tape.param(r));
        let radius = self.cfg.relative_radius;
        let mut outs = Vec::with_capacity(heads);
        for hd in 0..heads {
            let qh = self.tape.slice_cols(q, hd * d, d);
            let kh = self.tape.slice_cols(k, hd * d, d);
            let vh = self.tape.slice_cols(v, hd * d, d);
            let mut s = self.tape.matmul_bt(qh, kh);
            if let Some(r) = rel {
                s = self.tape.rel_bias(s, r, hd, radius, T::one() / scale);
            }
            let p = self.tape.softmax(s, scale, causal);
            outs.push(self.tape.matmul(p, vh));
        }
        let o = if heads == 1 {
            outs[0]
        } else {
            self.tape.concat_cols(&outs)
        };
        self.linear(o, a.wo, a.bo)
    }

    fn feed_forward(&mut self, x: NodeId, f: Ff) -> NodeId {
        let h = self.linear(x, f.w1, f.b1);
        let h = self.tape.gelu(h);
        self.linear(h, f.w2, f.b2)
    }

    fn residual(&mut self, x: NodeId, branch: NodeId) -> NodeId {
        let b = self.dropout(branch);
        self.tape.add(x, b)
    }

    fn encode(&mut self, ids: &[TokenId]) -> NodeId {
        let mut x = self.embed(ids);
        let layers = self.idx.enc.clone();
        for l in &layers {
            let h = self.norm(x, l.ln1);
            let a = self.attention(h, h, l.attn, false);
            x = self.residual(x, a);
            let h = self.norm(x, l.ln2);
            let f = self.feed_forward(h, l.ff);
            x = self.residual(x, f);
        }
        if layers.is_empty() {
            x
        } else {
            self.norm(x, self.idx.enc_norm)
        }
    }

    fn decode(&mut self, input: NodeId, memory: NodeId) -> NodeId {
        let causal = self.cfg.decoder_self_attention == DecoderAttention::Causal;
        let mut x = input;
        let layers = self.idx.dec.clone();
        for l in &layers {
            let h = self.norm(x, l.ln1);
            let a = self.attention(h, h, l.self_attn, causal);
            x = self.residual(x, a);
            let h = self.norm(x, l.ln2);
            let c = self.attention(h, memory, l.cross, false);
            x = self.residual(x, c);
            let h = self.norm(x, l.ln3);
            let f = self.feed_forward(h, l.ff);
            x = self.residual(x, f);
        }
        if layers.is_empty() {
            x
        } else {
            self.norm(x, self.idx.dec_norm)
        }
    }
}

/// Records the full forward computation for one event: the encoder over the
/// marked context, the decoder over the encoded context (queries and memory
/// both `H_enc`), and the decoder over the prompt cross-attending to `H_enc`.
/// Context and prompt are never concatenated.
///
/// Dropout is active only when `rng` is given.
pub fn forward_graph<'p, T: Scalar, R: Rng>(
    params: &'p ModelParams<T>,
    context: &[TokenId],
    layout: &PromptLayout,
    rng: Option<&mut R>,
) -> Result<ForwardGraph<'p, T>> {
    let cfg = &params.config;
    for len in [context.len(), layout.tokens.len()] {
        if len > cfg.max_positions {
            return Err(Error::LengthOverflow {
                len,
                max: cfg.max_positions,
            });
        }
        if len == 0 {
            return Err(Error::LengthOverflow { len, max: 0 });
        }
    }
    layout.check()?;
    if let Some(&bad) = context
        .iter()
        .chain(&layout.tokens)
        .find(|&&t| t as usize >= params.vocab_size)
    {
        return Err(Error::Checkpoint(format!(
            "token id {bad} outside vocabulary of {}",
            params.vocab_size
        )));
    }
    let mut b = Builder {
        tape: Tape::new(&params.tensors),
        idx: &params.index,
        cfg,
        rng,
    };
    let h_enc = b.encode(context);
    let h_x = if cfg.context_via_decoder {
        b.decode(h_enc, h_enc)
    } else {
        h_enc
    };
    let prompt = b.embed(&layout.tokens);
    let h_pt = b.decode(prompt, h_enc);
    b.tape.prompt_passes += 1;

    let ranges: Vec<_> = layout.slots.iter().map(|s| s.token_range).collect();
    let tape = &mut b.tape;
    let psi = tape.pool_ranges(h_pt, &ranges);
    let theta = tape.param(params.index.theta);
    let w_start = tape.col_as_row(theta, 0);
    let w_end = tape.col_as_row(theta, 1);
    let sel_start = tape.mul_row(psi, w_start);
    let sel_end = tape.mul_row(psi, w_end);
    let logits_start = tape.matmul_bt(sel_start, h_x);
    let logits_end = tape.matmul_bt(sel_end, h_x);
    Ok(ForwardGraph {
        tape: b.tape,
        h_enc,
        h_x,
        h_pt,
        psi,
        logits_start,
        logits_end,
    })
}

impl<T: Scalar> ForwardGraph<'_, T> {
    pub fn outputs(&self) -> ForwardOutputs<T> {
        let v = |n| self.tape.value(n).clone();
        ForwardOutputs {
            h_enc: v(self.h_enc),
            h_x: v(self.h_x),
            h_pt: v(self.h_pt),
            psi: v(self.psi),
            logits_start: v(self.logits_start),
            logits_end: v(self.logits_end),
            prompt_passes: self.tape.prompt_passes,
        }
    }

    /// Appends the summed slot losses for the given targets; returns the
    /// scalar loss node.
    pub fn add_loss(&mut self, targets: &[SlotTarget]) -> NodeId {
        let half = T::from_f64_lossy(0.5);
        let mut parts = Vec::with_capacity(targets.len() * 2);
        for t in targets {
            parts.push(
                self.tape
                    .cross_entropy(self.logits_start, t.slot, t.target.start, half),
            );
            parts.push(
                self.tape
                    .cross_entropy(self.logits_end, t.slot, t.target.end, half),
            );
        }
        self.tape.sum(&parts)
    }
}

/// Inference-only forward (no dropout).
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    context: &[TokenId],
    layout: &PromptLayout,
) -> Result<ForwardOutputs<T>> {
    Ok(forward_graph::<T, ChaCha8Rng>(params, context, layout, None)?.outputs())
}

/// Mean of the prompt rows in the inclusive slot range.
pub fn slot_feature<T: Scalar>(h_pt: &Mat<T>, range: crate::span::SpanPair) -> Vec<T> {
    assert!(range.end < h_pt.rows, "slot range outside prompt");
    let inv = T::one() / T::from_usize(range.len()).unwrap();
    let mut out = vec![T::zero(); h_pt.cols];
    for i in range.start..=range.end {
        for (o, &v) in out.iter_mut().zip(h_pt.row(i)) {
            *o = *o + v;
        }
    }
    out.iter_mut().for_each(|o| *o = *o * inv);
    out
}

/// Role-specific selector pair from a slot feature and the shared head.
pub fn make_selector<T: Scalar>(psi: &[T], theta: &Mat<T>) -> (Vec<T>, Vec<T>) {
    assert_eq!(theta.rows, psi.len());
    assert_eq!(theta.cols, 2);
    let start = psi
        .iter()
        .enumerate()
        .map(|(i, &p)| p * theta.at(i, 0))
        .collect();
    let end = psi
        .iter()
        .enumerate()
        .map(|(i, &p)| p * theta.at(i, 1))
        .collect();
    (start, end)
}

/// Dot product of each selector with every context row; no bias.
pub fn span_logits<T: Scalar>(selector: (&[T], &[T]), h_x: &Mat<T>) -> (Vec<T>, Vec<T>) {
    let dot = |s: &[T]| -> Vec<T> {
        (0..h_x.rows)
            .map(|i| s.iter().zip(h_x.row(i)).map(|(&a, &b)| a * b).sum())
            .collect()
    };
    (dot(selector.0), dot(selector.1))
}
