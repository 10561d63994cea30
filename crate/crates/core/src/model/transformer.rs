//! Pre-norm transformer encoder with MLM, mutation-position, ancestor and
//! task heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::model::params::{ParamId, ParamStore};
use crate::model::tensor::{Tape, Var};
use crate::objectives::PairedEncoding;
use crate::seqcore::alphabet::{PAD, VOCAB_SIZE};
use crate::simgen::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ffn: usize,
    pub vocab: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Desk-scale configuration.
    fn default() -> Self {
        ModelConfig { layers: 2, heads: 4, hidden: 64, ffn: 256, vocab: VOCAB_SIZE, max_len: 128, dropout: 0.0, seed: 0 }
    }
}

pub const MODEL_KEYS: &[&str] = &["layers", "heads", "hidden", "ffn", "max_len", "dropout", "model_seed"];

impl ModelConfig {
    /// A very small model for gradient checks and fast tests.
    pub fn tiny() -> Self {
        ModelConfig { layers: 1, heads: 2, hidden: 8, ffn: 16, vocab: VOCAB_SIZE, max_len: 32, dropout: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.hidden == 0 || self.ffn == 0 {
            return Err(Error::config("model dimensions must be positive"));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::config(format!("hidden {} not divisible by heads {}", self.hidden, self.heads)));
        }
        if self.vocab < VOCAB_SIZE {
            return Err(Error::config("vocab smaller than the residue alphabet"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Overrides fields present in `kv` (keys in [`MODEL_KEYS`]).
    pub fn apply_kv(&mut self, kv: &KvConfig) -> Result<()> {
        self.layers = kv.get_or("layers", self.layers)?;
        self.heads = kv.get_or("heads", self.heads)?;
        self.hidden = kv.get_or("hidden", self.hidden)?;
        self.ffn = kv.get_or("ffn", self.ffn)?;
        self.max_len = kv.get_or("max_len", self.max_len)?;
        self.dropout = kv.get_or("dropout", self.dropout)?;
        self.seed = kv.get_or("model_seed", self.seed)?;
        self.validate()
    }
}

/// Token-level model input, possibly with a PAD tail.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub tokens: Vec<u32>,
    pub segments: Vec<u8>,
    /// Position ids restart at every segment boundary, so an antibody residue
    /// and the germline residue at the same index share a position embedding.
    pub positions: Vec<usize>,
    pub valid: Vec<bool>,
}

impl ModelInput {
    pub fn from_tokens(tokens: Vec<u32>, segments: Vec<u8>) -> Self {
        assert_eq!(tokens.len(), segments.len());
        let mut positions = Vec::with_capacity(tokens.len());
        let mut pos = 0usize;
        let mut prev_seg = segments.first().copied().unwrap_or(0);
        for (&t, &s) in tokens.iter().zip(&segments) {
            if s != prev_seg && t != PAD {
                pos = 0;
                prev_seg = s;
            }
            positions.push(pos);
            pos += 1;
        }
        let valid = tokens.iter().map(|&t| t != PAD).collect();
        ModelInput { tokens, segments, positions, valid }
    }

    pub fn from_encoding(enc: &PairedEncoding) -> Self {
        Self::from_tokens(enc.token_ids.clone(), enc.segment_ids.clone())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn valid_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.valid[i]).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerIds {
    ln1_g: ParamId,
    ln1_b: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Task head attached for finetuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    BinarySeq,
    MulticlassSeq(usize),
    TokenLabel,
}

impl HeadKind {
    pub fn outputs(self) -> usize {
        match self {
            HeadKind::BinarySeq | HeadKind::TokenLabel => 1,
            HeadKind::MulticlassSeq(k) => k,
        }
    }
}

/// Encoder weights plus parameter lookups.
#[derive(Debug, Clone)]
pub struct Transformer {
    pub config: ModelConfig,
    pub params: ParamStore,
    layers: Vec<LayerIds>,
}

/// Forward-pass outputs on a tape.
#[derive(Debug, Clone)]
pub struct Hidden {
    /// Embedding output followed by each encoder layer's output.
    pub layers: Vec<Var>,
    /// Final layer after the closing layer norm.
    pub last: Var,
    pub valid_rows: Vec<usize>,
}

const INIT_STD: f64 = 0.02;

impl Transformer {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, 0x6d6f_6465_6c);
        let mut p = ParamStore::new();
        let (d, f, v) = (config.hidden, config.ffn, config.vocab);
        p.add_normal("embed.token", [v, d], INIT_STD, &mut rng)?;
        p.add_normal("embed.position", [config.max_len, d], INIT_STD, &mut rng)?;
        p.add_normal("embed.segment", [2, d], INIT_STD, &mut rng)?;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let n = |s: &str| format!("layer{l}.{s}");
            let attn_std = INIT_STD;
            let out_std = INIT_STD / (2.0 * config.layers as f64).sqrt();
            let ids = LayerIds {
                ln1_g: p.add_const(&n("ln1.gamma"), [1, d], 1.0)?,
                ln1_b: p.add_const(&n("ln1.beta"), [1, d], 0.0)?,
                wq: p.add_normal(&n("attn.wq"), [d, d], attn_std, &mut rng)?,
                bq: p.add_const(&n("attn.bq"), [1, d], 0.0)?,
                wk: p.add_normal(&n("attn.wk"), [d, d], attn_std, &mut rng)?,
                bk: p.add_const(&n("attn.bk"), [1, d], 0.0)?,
                wv: p.add_normal(&n("attn.wv"), [d, d], attn_std, &mut rng)?,
                bv: p.add_const(&n("attn.bv"), [1, d], 0.0)?,
                wo: p.add_normal(&n("attn.wo"), [d, d], out_std, &mut rng)?,
                bo: p.add_const(&n("attn.bo"), [1, d], 0.0)?,
                ln2_g: p.add_const(&n("ln2.gamma"), [1, d], 1.0)?,
                ln2_b: p.add_const(&n("ln2.beta"), [1, d], 0.0)?,
                w1: p.add_normal(&n("ffn.w1"), [d, f], INIT_STD, &mut rng)?,
                b1: p.add_const(&n("ffn.b1"), [1, f], 0.0)?,
                w2: p.add_normal(&n("ffn.w2"), [f, d], out_std, &mut rng)?,
                b2: p.add_const(&n("ffn.b2"), [1, d], 0.0)?,
            };
            layers.push(ids);
        }
        p.add_const("final_ln.gamma", [1, d], 1.0)?;
        p.add_const("final_ln.beta", [1, d], 0.0)?;
        p.add_normal("head.mlm.w", [d, v], INIT_STD, &mut rng)?;
        p.add_const("head.mlm.b", [1, v], 0.0)?;
        p.add_normal("head.position.w", [d, 1], INIT_STD, &mut rng)?;
        p.add_const("head.position.b", [1, 1], 0.0)?;
        p.add_normal("head.ancestor.w", [d, 1], INIT_STD, &mut rng)?;
        p.add_const("head.ancestor.b", [1, 1], 0.0)?;
        Ok(Transformer { config, params: p, layers })
    }

    /// Rebuilds a model from a config and a parameter store that holds at
    /// least the encoder and pretraining heads.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut model = Transformer::new(config)?;
        for id in model.params.ids() {
            let name = model.params.name(id).to_string();
            let src = params
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter '{name}'")))?;
            if params.shape(src) != model.params.shape(id) {
                return Err(Error::Checkpoint(format!("shape mismatch for '{name}'")));
            }
        }
        let base = model.params.len();
        model.params.copy_matching(&params);
        for id in params.ids() {
            if model.params.id(params.name(id)).is_none() {
                model.params.add(params.name(id), params.shape(id), params.get(id).to_vec())?;
            }
        }
        debug_assert!(model.params.len() >= base);
        Ok(model)
    }

    /// Adds (or re-initializes) the finetuning head `task.w`/`task.b`.
    pub fn attach_head(&mut self, kind: HeadKind, seed: u64) -> Result<()> {
        let d = self.config.hidden;
        let k = kind.outputs();
        let mut rng = stream_rng(seed, 0x6865_6164);
        let w: Vec<f64> = (0..d * k).map(|_| INIT_STD * crate::model::params::standard_normal(&mut rng)).collect();
        match (self.params.id("task.w"), self.params.id("task.b")) {
            (Some(wid), Some(bid)) if self.params.shape(wid) == [d, k] => {
                self.params.get_mut(wid).copy_from_slice(&w);
                self.params.get_mut(bid).iter_mut().for_each(|x| *x = 0.0);
            }
            (None, None) => {
                self.params.add("task.w", [d, k], w)?;
                self.params.add_const("task.b", [1, k], 0.0)?;
            }
            _ => return Err(Error::Shape("existing task head has a different shape".into())),
        }
        Ok(())
    }

    /// Ids of the parameters that make up the encoder (embeddings, layers and
    /// final norm); heads are excluded.
    pub fn encoder_param_mask(&self) -> Vec<bool> {
        self.params.ids().map(|id| !self.params.name(id).starts_with("head.") && !self.params.name(id).starts_with("task.")).collect()
    }

    pub fn check_input(&self, input: &ModelInput) -> Result<()> {
        if input.len() > self.config.max_len {
            return Err(Error::Overflow { length: input.len(), max_len: self.config.max_len });
        }
        if let Some(&t) = input.tokens.iter().find(|&&t| t as usize >= self.config.vocab) {
            return Err(Error::input(format!("token id {t} outside vocabulary")));
        }
        if input.positions.iter().any(|&p| p >= self.config.max_len) {
            return Err(Error::Overflow { length: input.len(), max_len: self.config.max_len });
        }
        Ok(())
    }

    /// Runs the encoder. `rng` drives dropout and is only consulted when
    /// `train` is set and the dropout rate is positive.
    pub fn forward<R: Rng>(&self, tape: &mut Tape<'_>, input: &ModelInput, train: bool, rng: &mut R) -> Result<Hidden> {
        self.check_input(input)?;
        if input.valid.iter().all(|v| !v) {
            return Err(Error::input("input has no non-PAD token"));
        }
        let drop = if train { self.config.dropout } else { 0.0 };
        let tok_table = tape.param_by_name("embed.token");
        let pos_table = tape.param_by_name("embed.position");
        let seg_table = tape.param_by_name("embed.segment");
        let tok = tape.embed(tok_table, &input.tokens);
        let pos_ids: Vec<u32> = input.positions.iter().map(|&p| p as u32).collect();
        let pos = tape.embed(pos_table, &pos_ids);
        let seg_ids: Vec<u32> = input.segments.iter().map(|&s| u32::from(s.min(1))).collect();
        let seg = tape.embed(seg_table, &seg_ids);
        let mut x = tape.add_n(&[tok, pos, seg]);
        x = tape.dropout(x, drop, rng);
        let mut stacks = vec![x];
        let heads = self.config.heads;
        for ids in &self.layers {
            let (g1, b1) = (tape.param(ids.ln1_g), tape.param(ids.ln1_b));
            let h = tape.layer_norm(x, g1, b1);
            let (wq, bq) = (tape.param(ids.wq), tape.param(ids.bq));
            let (wk, bk) = (tape.param(ids.wk), tape.param(ids.bk));
            let (wv, bv) = (tape.param(ids.wv), tape.param(ids.bv));
            let q = tape.linear(h, wq, Some(bq));
            let k = tape.linear(h, wk, Some(bk));
            let v = tape.linear(h, wv, Some(bv));
            let a = tape.attention(q, k, v, heads, &input.valid);
            let (wo, bo) = (tape.param(ids.wo), tape.param(ids.bo));
            let a = tape.linear(a, wo, Some(bo));
            let a = tape.dropout(a, drop, rng);
            x = tape.add(x, a);

            let (g2, b2) = (tape.param(ids.ln2_g), tape.param(ids.ln2_b));
            let h = tape.layer_norm(x, g2, b2);
            let (w1, bb1) = (tape.param(ids.w1), tape.param(ids.b1));
            let f = tape.linear(h, w1, Some(bb1));
            let f = tape.gelu(f);
            let (w2, bb2) = (tape.param(ids.w2), tape.param(ids.b2));
            let f = tape.linear(f, w2, Some(bb2));
            let f = tape.dropout(f, drop, rng);
            x = tape.add(x, f);
            stacks.push(x);
        }
        let (gf, bf) = (tape.param_by_name("final_ln.gamma"), tape.param_by_name("final_ln.beta"));
        let last = tape.layer_norm(x, gf, bf);
        Ok(Hidden { layers: stacks, last, valid_rows: input.valid_rows() })
    }

    /// Per-token vocabulary logits `[T, vocab]`.
    pub fn mlm_logits(&self, tape: &mut Tape<'_>, hidden: &Hidden) -> Var {
        let (w, b) = (tape.param_by_name("head.mlm.w"), tape.param_by_name("head.mlm.b"));
        tape.linear(hidden.last, w, Some(b))
    }

    /// Per-token mutated/unmutated logits `[T, 1]`.
    pub fn position_logits(&self, tape: &mut Tape<'_>, hidden: &Hidden) -> Var {
        let (w, b) = (tape.param_by_name("head.position.w"), tape.param_by_name("head.position.b"));
        tape.linear(hidden.last, w, Some(b))
    }

    /// Ancestor logit `[1, 1]` from the mean-pooled final layer.
    pub fn ancestor_logit(&self, tape: &mut Tape<'_>, hidden: &Hidden) -> Var {
        let pooled = tape.mean_rows(hidden.last, &hidden.valid_rows);
        let (w, b) = (tape.param_by_name("head.ancestor.w"), tape.param_by_name("head.ancestor.b"));
        tape.linear(pooled, w, Some(b))
    }

    /// Finetuning head output: `[1, k]` for sequence heads (on the
    /// layer-averaged representation), `[T, 1]` for token labelling.
    pub fn task_logits(&self, tape: &mut Tape<'_>, hidden: &Hidden, kind: HeadKind) -> Var {
        let (w, b) = (tape.param_by_name("task.w"), tape.param_by_name("task.b"));
        match kind {
            HeadKind::TokenLabel => tape.linear(hidden.last, w, Some(b)),
            _ => {
                let rep = sequence_representation(tape, hidden);
                tape.linear(rep, w, Some(b))
            }
        }
    }
}

/// Mean-pools the non-PAD tokens of each encoder layer, then averages the
/// per-layer vectors (the embedding layer is excluded).
pub fn sequence_representation(tape: &mut Tape<'_>, hidden: &Hidden) -> Var {
    let pooled: Vec<Var> = hidden.layers[1..].iter().map(|&l| tape.mean_rows(l, &hidden.valid_rows)).collect();
    let sum = tape.add_n(&pooled);
    tape.scale(sum, 1.0 / pooled.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::alphabet::{Alphabet, CLS, SEP};

    fn input(seq: &str) -> ModelInput {
        let mut t = vec![CLS];
        t.extend(seq.bytes().map(|b| Alphabet.token(b).unwrap()));
        let s = vec![0u8; t.len()];
        ModelInput::from_tokens(t, s)
    }

    #[test]
    fn positions_restart_per_segment() {
        let inp = ModelInput::from_tokens(vec![CLS, 5, 6, SEP, 5, 6, PAD, PAD], vec![0, 0, 0, 1, 1, 1, 1, 1]);
        assert_eq!(inp.positions, vec![0, 1, 2, 0, 1, 2, 3, 4]);
        assert_eq!(inp.valid_rows(), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn pad_tail_leaves_outputs_unchanged() {
        let model = Transformer::new(ModelConfig::tiny()).unwrap();
        let base = input("CARDWY");
        let mut padded = base.clone();
        for _ in 0..5 {
            padded.tokens.push(PAD);
            padded.segments.push(0);
            padded.valid.push(false);
        }
        padded.positions.extend([11, 7, 9, 6, 10]);
        let mut rng = stream_rng(0, 0);
        let mut t1 = Tape::new(&model.params);
        let h1 = model.forward(&mut t1, &base, false, &mut rng).unwrap();
        let mut t2 = Tape::new(&model.params);
        let h2 = model.forward(&mut t2, &padded, false, &mut rng).unwrap();
        let d = model.config.hidden;
        for (a, b) in h1.layers.iter().zip(&h2.layers) {
            assert_eq!(t1.value(*a), &t2.value(*b)[..base.len() * d]);
        }
        let r1 = sequence_representation(&mut t1, &h1);
        let r2 = sequence_representation(&mut t2, &h2);
        assert_eq!(t1.value(r1), t2.value(r2));
    }

    #[test]
    fn single_layer_representation_is_plain_mean() {
        let model = Transformer::new(ModelConfig::tiny()).unwrap();
        let inp = input("CAR");
        let mut tape = Tape::new(&model.params);
        let h = model.forward(&mut tape, &inp, false, &mut stream_rng(0, 0)).unwrap();
        let rep = sequence_representation(&mut tape, &h);
        let d = model.config.hidden;
        let layer = tape.value(h.layers[1]).to_vec();
        for c in 0..d {
            let mean = (0..inp.len()).map(|r| layer[r * d + c]).sum::<f64>() / inp.len() as f64;
            assert!((tape.value(rep)[c] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn overflow_and_bad_tokens() {
        let model = Transformer::new(ModelConfig::tiny()).unwrap();
        let long = input(&"A".repeat(40));
        let mut tape = Tape::new(&model.params);
        assert!(matches!(model.forward(&mut tape, &long, false, &mut stream_rng(0, 0)), Err(Error::Overflow { .. })));
        let bad = ModelInput::from_tokens(vec![CLS, 99], vec![0, 0]);
        assert!(model.forward(&mut tape, &bad, false, &mut stream_rng(0, 0)).is_err());
    }

    #[test]
    fn heads_and_divisibility() {
        let mut cfg = ModelConfig::tiny();
        cfg.heads = 3;
        assert!(Transformer::new(cfg).is_err());
        let mut model = Transformer::new(ModelConfig::tiny()).unwrap();
        model.attach_head(HeadKind::MulticlassSeq(6), 1).unwrap();
        let mut tape = Tape::new(&model.params);
        let h = model.forward(&mut tape, &input("CARD"), false, &mut stream_rng(0, 0)).unwrap();
        let out = model.task_logits(&mut tape, &h, HeadKind::MulticlassSeq(6));
        assert_eq!(tape.shape(out), [1, 6]);
        assert!(model.attach_head(HeadKind::BinarySeq, 1).is_err());
    }
}
