//! Model weights: typed bundles, the canonical tensor manifest, and seeded
//! initialization.
//!
//! Serialization itself lives in the companion crate; this module defines
//! what tensors exist, their names, and their shapes, so that a container
//! can be validated without guessing.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::attention::CrossAttnParams;
use crate::config::ArchConfig;
use crate::error::{Error, Result};
use crate::mha::{FfnWeights, MhaParams};
use crate::rng::{fnv1a64, RngStream};
use crate::tensor::Tensor;

/// Position-table budget of the answer decoder (BOS plus generated tokens).
pub const ANSWER_POS: usize = 16;

#[derive(Debug, Clone)]
pub struct VisionWeights {
    pub embed_w: Tensor,
    pub embed_b: Tensor,
    pub pos: Tensor,
    pub attn: MhaParams,
    pub ffn: FfnWeights,
}

#[derive(Debug, Clone)]
pub struct IteLayerWeights {
    pub cross: CrossAttnParams,
    pub ffn: FfnWeights,
}

#[derive(Debug, Clone)]
pub struct IteWeights {
    pub embed: Tensor,
    pub pos: Tensor,
    pub layers: Vec<IteLayerWeights>,
    pub sim_w: Tensor,
    pub sim_b: Tensor,
}

/// One decoder layer: causal self-attention, cross-attention over a
/// context, feed-forward. Used by the captioner (context = patches) and
/// the answer decoder (context = fused caption encodings).
#[derive(Debug, Clone)]
pub struct DecLayerWeights {
    pub self_attn: MhaParams,
    pub cross_attn: MhaParams,
    pub ffn: FfnWeights,
}

#[derive(Debug, Clone)]
pub struct CaptionerWeights {
    pub embed: Tensor,
    pub pos: Tensor,
    pub layers: Vec<DecLayerWeights>,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

#[derive(Debug, Clone)]
pub struct QaEncLayerWeights {
    pub self_attn: MhaParams,
    pub ffn: FfnWeights,
}

#[derive(Debug, Clone)]
pub struct QaWeights {
    pub embed: Tensor,
    pub enc_pos: Tensor,
    pub dec_pos: Tensor,
    pub enc_layers: Vec<QaEncLayerWeights>,
    pub dec_layers: Vec<DecLayerWeights>,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub config: ArchConfig,
    pub vision: VisionWeights,
    pub ite: IteWeights,
    pub captioner: CaptionerWeights,
    pub qa: QaWeights,
}

/// The 12 quadrant-mean channels a patch is reduced to before embedding.
pub const PATCH_RAW_DIM: usize = 12;

/// Canonical tensor list for a given architecture: (name, dims), in the
/// order containers are written.
pub fn manifest(cfg: &ArchConfig) -> Vec<(String, Vec<usize>)> {
    let d_v = cfg.d_v;
    let d_t = cfg.d_t;
    let d_h = cfg.d_head();
    let f_v = cfg.ffn_v();
    let f_t = cfg.ffn_t();
    let v = cfg.vocab_size;
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    let mut push = |name: String, dims: Vec<usize>| out.push((name, dims));

    push("vision.embed.w".into(), vec![PATCH_RAW_DIM, d_v]);
    push("vision.embed.b".into(), vec![d_v]);
    push("vision.pos".into(), vec![cfg.k(), d_v]);
    for n in ["q", "k", "v", "o"] {
        push(format!("vision.attn.{n}"), vec![d_v, d_v]);
    }
    push("vision.ffn.w1".into(), vec![d_v, f_v]);
    push("vision.ffn.b1".into(), vec![f_v]);
    push("vision.ffn.w2".into(), vec![f_v, d_v]);
    push("vision.ffn.b2".into(), vec![d_v]);

    push("ite.embed".into(), vec![v, d_t]);
    push("ite.pos".into(), vec![cfg.max_question_len(), d_t]);
    for l in 0..cfg.ite_layers {
        for h in 0..cfg.heads {
            push(format!("ite.l{l}.cross.q{h}"), vec![d_t, d_t]);
            push(format!("ite.l{l}.cross.k{h}"), vec![d_v, d_t]);
            push(format!("ite.l{l}.cross.v{h}"), vec![d_v, d_h]);
        }
        push(format!("ite.l{l}.cross.o"), vec![d_t, d_t]);
        push(format!("ite.l{l}.ffn.w1"), vec![d_t, f_t]);
        push(format!("ite.l{l}.ffn.b1"), vec![f_t]);
        push(format!("ite.l{l}.ffn.w2"), vec![f_t, d_t]);
        push(format!("ite.l{l}.ffn.b2"), vec![d_t]);
    }
    push("ite.sim.w".into(), vec![d_t]);
    push("ite.sim.b".into(), vec![1]);

    push("cap.embed".into(), vec![v, d_t]);
    push("cap.pos".into(), vec![cfg.max_caption_positions(), d_t]);
    for l in 0..cfg.cap_layers {
        for n in ["q", "k", "v", "o"] {
            push(format!("cap.l{l}.self.{n}"), vec![d_t, d_t]);
        }
        push(format!("cap.l{l}.cross.q"), vec![d_t, d_t]);
        push(format!("cap.l{l}.cross.k"), vec![d_v, d_t]);
        push(format!("cap.l{l}.cross.v"), vec![d_v, d_t]);
        push(format!("cap.l{l}.cross.o"), vec![d_t, d_t]);
        push(format!("cap.l{l}.ffn.w1"), vec![d_t, f_t]);
        push(format!("cap.l{l}.ffn.b1"), vec![f_t]);
        push(format!("cap.l{l}.ffn.w2"), vec![f_t, d_t]);
        push(format!("cap.l{l}.ffn.b2"), vec![d_t]);
    }
    push("cap.out.w".into(), vec![d_t, v]);
    push("cap.out.b".into(), vec![v]);

    push("qa.embed".into(), vec![v, d_t]);
    push("qa.enc.pos".into(), vec![cfg.max_enc_len, d_t]);
    push("qa.dec.pos".into(), vec![ANSWER_POS, d_t]);
    for l in 0..cfg.qa_enc_layers {
        for n in ["q", "k", "v", "o"] {
            push(format!("qa.enc.l{l}.self.{n}"), vec![d_t, d_t]);
        }
        push(format!("qa.enc.l{l}.ffn.w1"), vec![d_t, f_t]);
        push(format!("qa.enc.l{l}.ffn.b1"), vec![f_t]);
        push(format!("qa.enc.l{l}.ffn.w2"), vec![f_t, d_t]);
        push(format!("qa.enc.l{l}.ffn.b2"), vec![d_t]);
    }
    for l in 0..cfg.qa_dec_layers {
        for n in ["q", "k", "v", "o"] {
            push(format!("qa.dec.l{l}.self.{n}"), vec![d_t, d_t]);
        }
        for n in ["q", "k", "v", "o"] {
            push(format!("qa.dec.l{l}.cross.{n}"), vec![d_t, d_t]);
        }
        push(format!("qa.dec.l{l}.ffn.w1"), vec![d_t, f_t]);
        push(format!("qa.dec.l{l}.ffn.b1"), vec![f_t]);
        push(format!("qa.dec.l{l}.ffn.w2"), vec![f_t, d_t]);
        push(format!("qa.dec.l{l}.ffn.b2"), vec![d_t]);
    }
    push("qa.out.w".into(), vec![d_t, v]);
    push("qa.out.b".into(), vec![v]);

    out
}

/// Pulls tensors out of a name->tensor map with shape validation.
struct Taker {
    map: BTreeMap<String, Tensor>,
}

impl Taker {
    fn take(&mut self, name: String, dims: Vec<usize>) -> Result<Tensor> {
        let t = self
            .map
            .remove(&name)
            .ok_or(Error::MissingTensor { name: name.clone() })?;
        if t.dims() != dims.as_slice() {
            return Err(Error::TensorShape {
                name,
                expected: dims,
                actual: t.dims().to_vec(),
            });
        }
        Ok(t)
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize) -> Result<FfnWeights> {
        Ok(FfnWeights {
            w1: self.take(format!("{prefix}.w1"), vec![d, f])?,
            b1: self.take(format!("{prefix}.b1"), vec![f])?,
            w2: self.take(format!("{prefix}.w2"), vec![f, d])?,
            b2: self.take(format!("{prefix}.b2"), vec![d])?,
        })
    }

    fn mha(&mut self, prefix: &str, d_q: usize, d_kv: usize, d: usize, heads: usize) -> Result<MhaParams> {
        Ok(MhaParams {
            w_q: self.take(format!("{prefix}.q"), vec![d_q, d])?,
            w_k: self.take(format!("{prefix}.k"), vec![d_kv, d])?,
            w_v: self.take(format!("{prefix}.v"), vec![d_kv, d])?,
            w_o: self.take(format!("{prefix}.o"), vec![d, d])?,
            heads,
        })
    }
}

impl ModelBundle {
    /// Assemble a bundle from named tensors, validating every name and
    /// shape against the manifest. Unknown extra tensors are rejected.
    pub fn from_named(cfg: &ArchConfig, tensors: BTreeMap<String, Tensor>) -> Result<ModelBundle> {
        cfg.validate()?;
        let d_v = cfg.d_v;
        let d_t = cfg.d_t;
        let d_h = cfg.d_head();
        let f_v = cfg.ffn_v();
        let f_t = cfg.ffn_t();
        let v = cfg.vocab_size;
        let mut t = Taker { map: tensors };

        let vision = VisionWeights {
            embed_w: t.take("vision.embed.w".into(), vec![PATCH_RAW_DIM, d_v])?,
            embed_b: t.take("vision.embed.b".into(), vec![d_v])?,
            pos: t.take("vision.pos".into(), vec![cfg.k(), d_v])?,
            attn: t.mha("vision.attn", d_v, d_v, d_v, 1)?,
            ffn: t.ffn("vision.ffn", d_v, f_v)?,
        };

        let ite_embed = t.take("ite.embed".into(), vec![v, d_t])?;
        let ite_pos = t.take("ite.pos".into(), vec![cfg.max_question_len(), d_t])?;
        let mut ite_layers = Vec::with_capacity(cfg.ite_layers);
        for l in 0..cfg.ite_layers {
            let mut w_q = Vec::with_capacity(cfg.heads);
            let mut w_k = Vec::with_capacity(cfg.heads);
            let mut w_v = Vec::with_capacity(cfg.heads);
            for h in 0..cfg.heads {
                w_q.push(t.take(format!("ite.l{l}.cross.q{h}"), vec![d_t, d_t])?);
                w_k.push(t.take(format!("ite.l{l}.cross.k{h}"), vec![d_v, d_t])?);
                w_v.push(t.take(format!("ite.l{l}.cross.v{h}"), vec![d_v, d_h])?);
            }
            let w_o = t.take(format!("ite.l{l}.cross.o"), vec![d_t, d_t])?;
            let ffn = t.ffn(&format!("ite.l{l}.ffn"), d_t, f_t)?;
            ite_layers.push(IteLayerWeights {
                cross: CrossAttnParams { w_q, w_k, w_v, w_o },
                ffn,
            });
        }
        let ite = IteWeights {
            embed: ite_embed,
            pos: ite_pos,
            layers: ite_layers,
            sim_w: t.take("ite.sim.w".into(), vec![d_t])?,
            sim_b: t.take("ite.sim.b".into(), vec![1])?,
        };

        let cap_embed = t.take("cap.embed".into(), vec![v, d_t])?;
        let cap_pos = t.take("cap.pos".into(), vec![cfg.max_caption_positions(), d_t])?;
        let mut cap_layers = Vec::with_capacity(cfg.cap_layers);
        for l in 0..cfg.cap_layers {
            cap_layers.push(DecLayerWeights {
                self_attn: t.mha(&format!("cap.l{l}.self"), d_t, d_t, d_t, cfg.heads)?,
                cross_attn: t.mha(&format!("cap.l{l}.cross"), d_t, d_v, d_t, cfg.heads)?,
                ffn: t.ffn(&format!("cap.l{l}.ffn"), d_t, f_t)?,
            });
        }
        let captioner = CaptionerWeights {
            embed: cap_embed,
            pos: cap_pos,
            layers: cap_layers,
            out_w: t.take("cap.out.w".into(), vec![d_t, v])?,
            out_b: t.take("cap.out.b".into(), vec![v])?,
        };

        let qa_embed = t.take("qa.embed".into(), vec![v, d_t])?;
        let enc_pos = t.take("qa.enc.pos".into(), vec![cfg.max_enc_len, d_t])?;
        let dec_pos = t.take("qa.dec.pos".into(), vec![ANSWER_POS, d_t])?;
        let mut enc_layers = Vec::with_capacity(cfg.qa_enc_layers);
        for l in 0..cfg.qa_enc_layers {
            enc_layers.push(QaEncLayerWeights {
                self_attn: t.mha(&format!("qa.enc.l{l}.self"), d_t, d_t, d_t, cfg.heads)?,
                ffn: t.ffn(&format!("qa.enc.l{l}.ffn"), d_t, f_t)?,
            });
        }
        let mut dec_layers = Vec::with_capacity(cfg.qa_dec_layers);
        for l in 0..cfg.qa_dec_layers {
            dec_layers.push(DecLayerWeights {
                self_attn: t.mha(&format!("qa.dec.l{l}.self"), d_t, d_t, d_t, cfg.heads)?,
                cross_attn: t.mha(&format!("qa.dec.l{l}.cross"), d_t, d_t, d_t, cfg.heads)?,
                ffn: t.ffn(&format!("qa.dec.l{l}.ffn"), d_t, f_t)?,
            });
        }
        let qa = QaWeights {
            embed: qa_embed,
            enc_pos,
            dec_pos,
            enc_layers,
            dec_layers,
            out_w: t.take("qa.out.w".into(), vec![d_t, v])?,
            out_b: t.take("qa.out.b".into(), vec![v])?,
        };

        if let Some(name) = t.map.keys().next() {
            return Err(Error::InvalidParam {
                name: "container",
                detail: format!("unexpected tensor '{name}'"),
            });
        }

        Ok(ModelBundle { config: cfg.clone(), vision, ite, captioner, qa })
    }

    /// Flatten back to (name, tensor) pairs in manifest order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let cfg = &self.config;
        let mut pairs: Vec<(String, &Tensor)> = alloc::vec![
            ("vision.embed.w".into(), &self.vision.embed_w),
            ("vision.embed.b".into(), &self.vision.embed_b),
            ("vision.pos".into(), &self.vision.pos),
        ];
        pairs.push(("vision.attn.q".into(), &self.vision.attn.w_q));
        pairs.push(("vision.attn.k".into(), &self.vision.attn.w_k));
        pairs.push(("vision.attn.v".into(), &self.vision.attn.w_v));
        pairs.push(("vision.attn.o".into(), &self.vision.attn.w_o));
        pairs.push(("vision.ffn.w1".into(), &self.vision.ffn.w1));
        pairs.push(("vision.ffn.b1".into(), &self.vision.ffn.b1));
        pairs.push(("vision.ffn.w2".into(), &self.vision.ffn.w2));
        pairs.push(("vision.ffn.b2".into(), &self.vision.ffn.b2));

        pairs.push(("ite.embed".into(), &self.ite.embed));
        pairs.push(("ite.pos".into(), &self.ite.pos));
        for (l, layer) in self.ite.layers.iter().enumerate() {
            for h in 0..cfg.heads {
                pairs.push((format!("ite.l{l}.cross.q{h}"), &layer.cross.w_q[h]));
                pairs.push((format!("ite.l{l}.cross.k{h}"), &layer.cross.w_k[h]));
                pairs.push((format!("ite.l{l}.cross.v{h}"), &layer.cross.w_v[h]));
            }
            pairs.push((format!("ite.l{l}.cross.o"), &layer.cross.w_o));
            pairs.push((format!("ite.l{l}.ffn.w1"), &layer.ffn.w1));
            pairs.push((format!("ite.l{l}.ffn.b1"), &layer.ffn.b1));
            pairs.push((format!("ite.l{l}.ffn.w2"), &layer.ffn.w2));
            pairs.push((format!("ite.l{l}.ffn.b2"), &layer.ffn.b2));
        }
        pairs.push(("ite.sim.w".into(), &self.ite.sim_w));
        pairs.push(("ite.sim.b".into(), &self.ite.sim_b));

        pairs.push(("cap.embed".into(), &self.captioner.embed));
        pairs.push(("cap.pos".into(), &self.captioner.pos));
        for (l, layer) in self.captioner.layers.iter().enumerate() {
            pairs.push((format!("cap.l{l}.self.q"), &layer.self_attn.w_q));
            pairs.push((format!("cap.l{l}.self.k"), &layer.self_attn.w_k));
            pairs.push((format!("cap.l{l}.self.v"), &layer.self_attn.w_v));
            pairs.push((format!("cap.l{l}.self.o"), &layer.self_attn.w_o));
            pairs.push((format!("cap.l{l}.cross.q"), &layer.cross_attn.w_q));
            pairs.push((format!("cap.l{l}.cross.k"), &layer.cross_attn.w_k));
            pairs.push((format!("cap.l{l}.cross.v"), &layer.cross_attn.w_v));
            pairs.push((format!("cap.l{l}.cross.o"), &layer.cross_attn.w_o));
            pairs.push((format!("cap.l{l}.ffn.w1"), &layer.ffn.w1));
            pairs.push((format!("cap.l{l}.ffn.b1"), &layer.ffn.b1));
            pairs.push((format!("cap.l{l}.ffn.w2"), &layer.ffn.w2));
            pairs.push((format!("cap.l{l}.ffn.b2"), &layer.ffn.b2));
        }
        pairs.push(("cap.out.w".into(), &self.captioner.out_w));
        pairs.push(("cap.out.b".into(), &self.captioner.out_b));

        pairs.push(("qa.embed".into(), &self.qa.embed));
        pairs.push(("qa.enc.pos".into(), &self.qa.enc_pos));
        pairs.push(("qa.dec.pos".into(), &self.qa.dec_pos));
        for (l, layer) in self.qa.enc_layers.iter().enumerate() {
            pairs.push((format!("qa.enc.l{l}.self.q"), &layer.self_attn.w_q));
            pairs.push((format!("qa.enc.l{l}.self.k"), &layer.self_attn.w_k));
            pairs.push((format!("qa.enc.l{l}.self.v"), &layer.self_attn.w_v));
            pairs.push((format!("qa.enc.l{l}.self.o"), &layer.self_attn.w_o));
            pairs.push((format!("qa.enc.l{l}.ffn.w1"), &layer.ffn.w1));
            pairs.push((format!("qa.enc.l{l}.ffn.b1"), &layer.ffn.b1));
            pairs.push((format!("qa.enc.l{l}.ffn.w2"), &layer.ffn.w2));
            pairs.push((format!("qa.enc.l{l}.ffn.b2"), &layer.ffn.b2));
        }
        for (l, layer) in self.qa.dec_layers.iter().enumerate() {
            pairs.push((format!("qa.dec.l{l}.self.q"), &layer.self_attn.w_q));
            pairs.push((format!("qa.dec.l{l}.self.k"), &layer.self_attn.w_k));
            pairs.push((format!("qa.dec.l{l}.self.v"), &layer.self_attn.w_v));
            pairs.push((format!("qa.dec.l{l}.self.o"), &layer.self_attn.w_o));
            pairs.push((format!("qa.dec.l{l}.cross.q"), &layer.cross_attn.w_q));
            pairs.push((format!("qa.dec.l{l}.cross.k"), &layer.cross_attn.w_k));
            pairs.push((format!("qa.dec.l{l}.cross.v"), &layer.cross_attn.w_v));
            pairs.push((format!("qa.dec.l{l}.cross.o"), &layer.cross_attn.w_o));
            pairs.push((format!("qa.dec.l{l}.ffn.w1"), &layer.ffn.w1));
            pairs.push((format!("qa.dec.l{l}.ffn.b1"), &layer.ffn.b1));
            pairs.push((format!("qa.dec.l{l}.ffn.w2"), &layer.ffn.w2));
            pairs.push((format!("qa.dec.l{l}.ffn.b2"), &layer.ffn.b2));
        }
        pairs.push(("qa.out.w".into(), &self.qa.out_w));
        pairs.push(("qa.out.b".into(), &self.qa.out_b));

        pairs
    }

    /// Deterministic random bundle. Every tensor draws from its own stream
    /// addressed by a hash of its name, so the values do not depend on
    /// manifest order.
    pub fn seeded(cfg: &ArchConfig, seed: u64) -> Result<ModelBundle> {
        cfg.validate()?;
        let root = RngStream::new(seed).child(0x7765696768); // "weigh" in ASCII
        let mut map = BTreeMap::new();
        for (name, dims) in manifest(cfg) {
            let sigma = init_sigma(&name, &dims);
            let mut stream = root.child(fnv1a64(&name));
            let t = if sigma == 0.0 {
                Tensor::zeros(dims)
            } else {
                Tensor::from_fn(dims, |_| sigma * gaussian(&mut stream))?
            };
            if map.insert(name.clone(), t).is_some() {
                return Err(Error::InvalidParam {
                    name: "manifest",
                    detail: format!("duplicate tensor name '{name}'"),
                });
            }
        }
        ModelBundle::from_named(cfg, map)
    }
}

/// Standard normal via Box-Muller.
fn gaussian(stream: &mut RngStream) -> f64 {
    let u1 = stream.next_f64();
    let u2 = stream.next_f64();
    libm::sqrt(-2.0 * libm::log(1.0 - u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

fn init_sigma(name: &str, dims: &[usize]) -> f64 {
    let last = name.rsplit('.').next().unwrap_or(name);
    if matches!(last, "b" | "b1" | "b2") {
        return 0.0;
    }
    if last == "pos" {
        return 0.15;
    }
    if name.ends_with("embed") || name.ends_with("embed.w") {
        return 0.6;
    }
    if name.ends_with("out.w") {
        return 1.6 / libm::sqrt(dims[0] as f64);
    }
    1.0 / libm::sqrt(dims[0] as f64)
}
