//! Two-phase pretraining (MLM, then ancestor-germline and mutation-position
//! objectives), pretraining diagnostics and downstream finetuning.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::KvConfig;
use crate::corpus::ChunkedCorpus;
use crate::error::{Error, Result};
use crate::model::loss::{loss_agp, loss_mlm, loss_mpp};
use crate::model::tensor::{sigmoid, softmax_in_place, Tape, Var};
use crate::model::{Adam, Checkpoint, Dtype, Grads, HeadKind, ModelConfig, ModelInput, Schedule, Transformer};
use crate::objectives::{agp_batch, encode_pair, mlm_plan, mpp_build, MaskScope, PairedEncoding};
use crate::seqcore::alphabet::{N_SPECIALS, VOCAB_SIZE};
use crate::seqcore::AntibodyRecord;
use crate::simgen::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Optimizer steps of the MLM phase.
    pub mlm_steps: u64,
    /// Optimizer steps of the further-pretraining phase.
    pub evolution_steps: u64,
    pub batch_size: usize,
    pub mlm_lr: f64,
    pub evolution_lr: f64,
    pub finetune_lr: f64,
    pub warmup: u64,
    pub evolution_warmup: u64,
    pub finetune_warmup: u64,
    pub eval_interval: u64,
    /// Validation records used per diagnostics pass.
    pub eval_size: usize,
    pub mask_ratio: f64,
    /// Probability of swapping in a foreign germline for AGP.
    pub negative_ratio: f64,
    /// Adds the plain MLM loss to every further-pretraining batch.
    pub evolution_mlm: bool,
    pub max_epochs: usize,
    pub patience: usize,
    pub freeze_encoder: bool,
    pub dtype: Dtype,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mlm_steps: 1000,
            evolution_steps: 1000,
            batch_size: 16,
            mlm_lr: 1e-3,
            evolution_lr: 1e-4,
            finetune_lr: 3e-4,
            warmup: 100,
            evolution_warmup: 100,
            finetune_warmup: 50,
            eval_interval: 100,
            eval_size: 256,
            mask_ratio: 0.15,
            negative_ratio: 0.5,
            evolution_mlm: false,
            max_epochs: 30,
            patience: 5,
            freeze_encoder: false,
            dtype: Dtype::F32,
            seed: 0,
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "mlm_steps",
    "evolution_steps",
    "batch_size",
    "mlm_lr",
    "evolution_lr",
    "finetune_lr",
    "warmup",
    "evolution_warmup",
    "finetune_warmup",
    "eval_interval",
    "eval_size",
    "mask_ratio",
    "negative_ratio",
    "evolution_mlm",
    "max_epochs",
    "patience",
    "freeze_encoder",
    "dtype",
    "seed",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        for (name, lr) in [("mlm_lr", self.mlm_lr), ("evolution_lr", self.evolution_lr), ("finetune_lr", self.finetune_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.evolution_lr >= self.mlm_lr {
            return Err(Error::config("evolution_lr must be below mlm_lr"));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) || !(0.0..=1.0).contains(&self.negative_ratio) {
            return Err(Error::config("mask_ratio and negative_ratio must lie in [0, 1]"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be at least 1"));
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &KvConfig) -> Result<()> {
        self.mlm_steps = kv.get_or("mlm_steps", self.mlm_steps)?;
        self.evolution_steps = kv.get_or("evolution_steps", self.evolution_steps)?;
        self.batch_size = kv.get_or("batch_size", self.batch_size)?;
        self.mlm_lr = kv.get_or("mlm_lr", self.mlm_lr)?;
        self.evolution_lr = kv.get_or("evolution_lr", self.evolution_lr)?;
        self.finetune_lr = kv.get_or("finetune_lr", self.finetune_lr)?;
        self.warmup = kv.get_or("warmup", self.warmup)?;
        self.evolution_warmup = kv.get_or("evolution_warmup", self.evolution_warmup)?;
        self.finetune_warmup = kv.get_or("finetune_warmup", self.finetune_warmup)?;
        self.eval_interval = kv.get_or("eval_interval", self.eval_interval)?;
        self.eval_size = kv.get_or("eval_size", self.eval_size)?;
        self.mask_ratio = kv.get_or("mask_ratio", self.mask_ratio)?;
        self.negative_ratio = kv.get_or("negative_ratio", self.negative_ratio)?;
        self.evolution_mlm = kv.get_or("evolution_mlm", self.evolution_mlm)?;
        self.max_epochs = kv.get_or("max_epochs", self.max_epochs)?;
        self.patience = kv.get_or("patience", self.patience)?;
        self.freeze_encoder = kv.get_or("freeze_encoder", self.freeze_encoder)?;
        if let Some(d) = kv.get_str("dtype") {
            self.dtype = match d {
                "f32" | "32" => Dtype::F32,
                "f64" | "64" => Dtype::F64,
                _ => return Err(Error::config(format!("dtype must be f32 or f64, got '{d}'"))),
            };
        }
        self.seed = kv.get_or("seed", self.seed)?;
        self.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Mlm,
    Evolution,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Mlm => "mlm",
            Phase::Evolution => "evolution",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainDiagnostics {
    pub mlm_loss: f64,
    pub mlm_accuracy: f64,
    /// Ancestor-germline prediction accuracy.
    pub germline_accuracy: f64,
    /// Per-token accuracy of the mutated/unmutated germline labels.
    pub position_accuracy: f64,
    /// Residue accuracy at masked mutation positions.
    pub mutation_accuracy: f64,
    pub agp_loss: f64,
    pub mpp_loss: f64,
    pub mutation_positions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub phase: Phase,
    pub lr: f64,
    /// Mean training loss since the previous row (NaN-free; 0 at step 0).
    pub loss: f64,
    #[serde(flatten)]
    pub diagnostics: PretrainDiagnostics,
}

pub fn write_log_csv<W: Write>(writer: W, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "step",
        "phase",
        "lr",
        "loss",
        "mlm_loss",
        "mlm_accuracy",
        "germline_accuracy",
        "position_accuracy",
        "mutation_accuracy",
        "agp_loss",
        "mpp_loss",
    ])?;
    for r in rows {
        let d = &r.diagnostics;
        w.write_record([
            r.step.to_string(),
            r.phase.name().to_string(),
            format!("{}", r.lr),
            format!("{}", r.loss),
            format!("{}", d.mlm_loss),
            format!("{}", d.mlm_accuracy),
            format!("{}", d.germline_accuracy),
            format!("{}", d.position_accuracy),
            format!("{}", d.mutation_accuracy),
            format!("{}", d.agp_loss),
            format!("{}", d.mpp_loss),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Index of the largest value among `cols`, first on ties.
fn argmax_in(row: &[f64], cols: std::ops::Range<usize>) -> usize {
    let mut best = cols.start;
    for c in cols {
        if row[c] > row[best] {
            best = c;
        }
    }
    best
}

fn masked_encoding(enc: &PairedEncoding, tokens: Vec<u32>) -> PairedEncoding {
    PairedEncoding { token_ids: tokens, ..enc.clone() }
}

#[derive(Default)]
struct DiagSums {
    mlm_loss: f64,
    mlm_hits: usize,
    mlm_total: usize,
    mlm_items: usize,
    agp_loss: f64,
    agp_hits: usize,
    agp_total: usize,
    mpp_loss: f64,
    pos_hits: usize,
    pos_total: usize,
    mut_hits: usize,
    mut_total: usize,
    mpp_items: usize,
}

impl DiagSums {
    fn merge(mut self, o: DiagSums) -> DiagSums {
        self.mlm_loss += o.mlm_loss;
        self.mlm_hits += o.mlm_hits;
        self.mlm_total += o.mlm_total;
        self.mlm_items += o.mlm_items;
        self.agp_loss += o.agp_loss;
        self.agp_hits += o.agp_hits;
        self.agp_total += o.agp_total;
        self.mpp_loss += o.mpp_loss;
        self.pos_hits += o.pos_hits;
        self.pos_total += o.pos_total;
        self.mut_hits += o.mut_hits;
        self.mut_total += o.mut_total;
        self.mpp_items += o.mpp_items;
        self
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

const AGP_GROUP: usize = 16;

/// Evaluates all pretraining objectives on `held_out`. Masking plans and
/// germline swaps are drawn from `seed`, so repeated calls see the same
/// instances.
pub fn diagnostics(
    model: &Transformer,
    held_out: &[AntibodyRecord],
    mask_ratio: f64,
    negative_ratio: f64,
    seed: u64,
) -> Result<PretrainDiagnostics> {
    if held_out.is_empty() {
        return Err(Error::input("diagnostics need at least one held-out record"));
    }
    let max_len = model.config.max_len;
    let per_record = held_out
        .par_iter()
        .enumerate()
        .map(|(i, r)| -> Result<DiagSums> {
            let mut s = DiagSums::default();
            let enc = encode_pair(r, max_len)?;
            let mut rng = stream_rng(seed, 0x1000_0000 + i as u64);
            // MLM.
            let plan = mlm_plan(&enc, mask_ratio, MaskScope::Both, &mut rng)?;
            if !plan.is_empty() {
                let input = masked_encoding(&enc, plan.apply(&enc.token_ids)).to_input();
                let mut tape = Tape::new(&model.params);
                let h = model.forward(&mut tape, &input, false, &mut rng)?;
                let logits = model.mlm_logits(&mut tape, &h);
                let l = loss_mlm(&mut tape, logits, &plan)?;
                s.mlm_loss += tape.scalar(l);
                s.mlm_items += 1;
                let v = tape.value(logits);
                let cols = tape.shape(logits)[1];
                for (&row, &t) in plan.selected.iter().zip(&plan.targets) {
                    s.mlm_hits += usize::from(argmax_in(&v[row * cols..(row + 1) * cols], 0..cols) == t as usize);
                }
                s.mlm_total += plan.len();
            }
            // MPP.
            let inst = mpp_build(r, max_len)?;
            let mut tape = Tape::new(&model.params);
            let h = model.forward(&mut tape, &inst.encoding.to_input(), false, &mut rng)?;
            let gl = model.position_logits(&mut tape, &h);
            let rl = model.mlm_logits(&mut tape, &h);
            let l = loss_mpp(&mut tape, gl, rl, &inst);
            s.mpp_loss += tape.scalar(l);
            s.mpp_items += 1;
            let gv = tape.value(gl);
            for (row, &y) in inst.germline_rows().into_iter().zip(&inst.germline_labels) {
                s.pos_hits += usize::from((gv[row] > 0.0) == (y == 1));
            }
            s.pos_total += inst.germline_labels.len();
            let rv = tape.value(rl);
            let cols = tape.shape(rl)[1];
            let residues = N_SPECIALS as usize..VOCAB_SIZE;
            for (&row, &t) in inst.masked_positions.iter().zip(&inst.masked_targets) {
                let pred = argmax_in(&rv[row * cols..(row + 1) * cols], residues.clone());
                s.mut_hits += usize::from(pred == t as usize);
            }
            s.mut_total += inst.masked_positions.len();
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;

    let groups: Vec<&[AntibodyRecord]> = held_out.chunks(AGP_GROUP).collect();
    let per_group = groups
        .par_iter()
        .enumerate()
        .map(|(gi, g)| -> Result<DiagSums> {
            let mut s = DiagSums::default();
            let refs: Vec<&AntibodyRecord> = g.iter().collect();
            let p = if refs.len() < 2 { 0.0 } else { negative_ratio };
            let mut rng = stream_rng(seed, 0x2000_0000 + gi as u64);
            for inst in agp_batch(&refs, p, max_len, &mut rng)? {
                let mut tape = Tape::new(&model.params);
                let h = model.forward(&mut tape, &inst.encoding.to_input(), false, &mut rng)?;
                let z = model.ancestor_logit(&mut tape, &h);
                let l = loss_agp(&mut tape, z, inst.label);
                s.agp_loss += tape.scalar(l);
                s.agp_hits += usize::from((tape.scalar(z) > 0.0) == (inst.label == 1));
                s.agp_total += 1;
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;

    let s = per_record.into_iter().chain(per_group).fold(DiagSums::default(), DiagSums::merge);
    let d = PretrainDiagnostics {
        mlm_loss: if s.mlm_items == 0 { 0.0 } else { s.mlm_loss / s.mlm_items as f64 },
        mlm_accuracy: ratio(s.mlm_hits, s.mlm_total),
        germline_accuracy: ratio(s.agp_hits, s.agp_total),
        position_accuracy: ratio(s.pos_hits, s.pos_total),
        mutation_accuracy: ratio(s.mut_hits, s.mut_total),
        agp_loss: if s.agp_total == 0 { 0.0 } else { s.agp_loss / s.agp_total as f64 },
        mpp_loss: s.mpp_loss / s.mpp_items as f64,
        mutation_positions: s.mut_total,
    };
    for v in [d.mlm_loss, d.agp_loss, d.mpp_loss] {
        if !v.is_finite() {
            return Err(Error::Numeric("non-finite validation loss".into()));
        }
    }
    Ok(d)
}

/// Cycles through shuffled epochs of `0..n`.
struct Sampler {
    n: usize,
    order: Vec<usize>,
    pos: usize,
    epoch: u64,
    seed: u64,
    stream: u64,
}

impl Sampler {
    fn new(n: usize, seed: u64, stream: u64) -> Self {
        Sampler { n, order: Vec::new(), pos: n, epoch: 0, seed, stream }
    }

    fn next(&mut self) -> usize {
        if self.pos >= self.order.len() {
            self.order = (0..self.n).collect();
            self.order.shuffle(&mut stream_rng(self.seed, self.stream + self.epoch));
            self.epoch += 1;
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }

    fn batch(&mut self, b: usize) -> Vec<usize> {
        (0..b).map(|_| self.next()).collect()
    }
}

/// Sums per-item gradients in item order so the result does not depend on
/// the thread count; returns the mean loss and mean gradient.
fn batch_gradient<F>(model: &Transformer, items: usize, frozen: Option<&[bool]>, f: F) -> Result<(f64, Grads)>
where
    F: Fn(usize, &mut Tape<'_>) -> Result<Var> + Sync,
{
    let parts = (0..items)
        .into_par_iter()
        .map(|i| -> Result<(f64, Grads)> {
            let mut tape = match frozen {
                Some(m) => Tape::with_frozen(&model.params, m),
                None => Tape::new(&model.params),
            };
            let root = f(i, &mut tape)?;
            let loss = tape.scalar(root);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite training loss {loss}")));
            }
            let mut g = model.params.zeros_like();
            tape.backward(root, &mut g);
            Ok((loss, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = model.params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_assign(g);
    }
    total.scale(1.0 / items as f64);
    if !total.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok((loss / items as f64, total))
}

pub struct PretrainOutput {
    /// Model at the end of the MLM phase.
    pub mlm_checkpoint: Checkpoint,
    /// Model at the end of both phases.
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
    pub warnings: Vec<String>,
}

fn finish_params(model: &mut Transformer, dtype: Dtype) {
    if dtype == Dtype::F32 {
        model.params.round_to_f32();
    }
}

/// Runs the MLM phase for `mlm_steps` optimizer steps, then the
/// ancestor-germline / mutation-position phase for `evolution_steps`,
/// alternating the two objectives batch by batch.
pub fn pretrain(corpus: &ChunkedCorpus, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<PretrainOutput> {
    cfg.validate()?;
    let train: Vec<&AntibodyRecord> = corpus.train().collect();
    if train.is_empty() {
        return Err(Error::input("pretraining corpus has an empty training set"));
    }
    let valid_all = corpus.validation();
    let valid: Vec<AntibodyRecord> = {
        let mut idx: Vec<usize> = (0..valid_all.len()).collect();
        idx.shuffle(&mut stream_rng(cfg.seed, 0x7661_6c69_64));
        idx.truncate(cfg.eval_size.max(1));
        idx.sort_unstable();
        idx.into_iter().map(|i| valid_all[i].clone()).collect()
    };
    let encodings: Vec<PairedEncoding> = train.iter().map(|r| encode_pair(r, model_cfg.max_len)).collect::<Result<_>>()?;
    let mut model = Transformer::new(model_cfg.clone())?;
    let mut log = Vec::new();
    let mut warnings = corpus.warnings.clone();
    let eval_seed = cfg.seed ^ 0x5eed;

    let diag = |m: &Transformer| -> Result<PretrainDiagnostics> {
        if valid.is_empty() {
            return Ok(PretrainDiagnostics::default());
        }
        diagnostics(m, &valid, cfg.mask_ratio, cfg.negative_ratio, eval_seed)
    };
    if valid.is_empty() {
        warnings.push("validation chunk is empty; diagnostics are zero".into());
    }
    log.push(LogRow { step: 0, phase: Phase::Mlm, lr: 0.0, loss: 0.0, diagnostics: diag(&model)? });

    let mut step = 0u64;
    let mut sampler = Sampler::new(train.len(), cfg.seed, 0x5000_0000);
    let mut adam = Adam::new(&model.params);
    let sched = Schedule { peak_lr: cfg.mlm_lr, warmup: cfg.warmup };
    let mut running = (0.0, 0u64);
    for t in 1..=cfg.mlm_steps {
        step += 1;
        let batch = sampler.batch(cfg.batch_size);
        let step_seed = stream_rng(cfg.seed, 0x6000_0000 + step).gen::<u64>();
        let (loss, grads) = batch_gradient(&model, batch.len(), None, |i, tape| {
            let enc = &encodings[batch[i]];
            let mut rng = stream_rng(step_seed, i as u64);
            let plan = mlm_plan(enc, cfg.mask_ratio, MaskScope::Both, &mut rng)?;
            if plan.is_empty() {
                return Err(Error::input(format!("record '{}' yields an empty mask set", train[batch[i]].id)));
            }
            let input = masked_encoding(enc, plan.apply(&enc.token_ids)).to_input();
            let h = model.forward(tape, &input, true, &mut rng)?;
            let logits = model.mlm_logits(tape, &h);
            loss_mlm(tape, logits, &plan)
        })?;
        let lr = sched.lr(t);
        adam.update(&mut model.params, &grads, lr, None)?;
        running = (running.0 + loss, running.1 + 1);
        if t == cfg.mlm_steps || (cfg.eval_interval > 0 && step % cfg.eval_interval == 0) {
            if t == cfg.mlm_steps {
                finish_params(&mut model, cfg.dtype);
            }
            log.push(LogRow {
                step,
                phase: Phase::Mlm,
                lr,
                loss: running.0 / running.1 as f64,
                diagnostics: diag(&model)?,
            });
            running = (0.0, 0);
        }
    }
    if cfg.mlm_steps == 0 {
        finish_params(&mut model, cfg.dtype);
    }
    let mlm_checkpoint = Checkpoint::from_model(&model, Some(&adam), step, None);

    if cfg.evolution_steps > 0 {
        adam = Adam::new(&model.params);
    }
    let sched = Schedule { peak_lr: cfg.evolution_lr, warmup: cfg.evolution_warmup };
    let records: Vec<&AntibodyRecord> = train.clone();
    for t in 1..=cfg.evolution_steps {
        step += 1;
        let batch = sampler.batch(cfg.batch_size.max(2));
        let step_seed = stream_rng(cfg.seed, 0x6000_0000 + step).gen::<u64>();
        let agp_step = t % 2 == 1;
        let agp = if agp_step {
            let refs: Vec<&AntibodyRecord> = batch.iter().map(|&i| records[i]).collect();
            Some(agp_batch(&refs, cfg.negative_ratio, model_cfg.max_len, &mut stream_rng(step_seed, u64::MAX))?)
        } else {
            None
        };
        let (loss, grads) = batch_gradient(&model, batch.len(), None, |i, tape| {
            let mut rng = stream_rng(step_seed, i as u64);
            let objective = match &agp {
                Some(instances) => {
                    let inst = &instances[i];
                    let h = model.forward(tape, &inst.encoding.to_input(), true, &mut rng)?;
                    let z = model.ancestor_logit(tape, &h);
                    loss_agp(tape, z, inst.label)
                }
                None => {
                    let inst = mpp_build(records[batch[i]], model_cfg.max_len)?;
                    let h = model.forward(tape, &inst.encoding.to_input(), true, &mut rng)?;
                    let gl = model.position_logits(tape, &h);
                    let rl = model.mlm_logits(tape, &h);
                    loss_mpp(tape, gl, rl, &inst)
                }
            };
            if !cfg.evolution_mlm {
                return Ok(objective);
            }
            let enc = &encodings[batch[i]];
            let plan = mlm_plan(enc, cfg.mask_ratio, MaskScope::Both, &mut rng)?;
            if plan.is_empty() {
                return Ok(objective);
            }
            let input = masked_encoding(enc, plan.apply(&enc.token_ids)).to_input();
            let h = model.forward(tape, &input, true, &mut rng)?;
            let logits = model.mlm_logits(tape, &h);
            let l = loss_mlm(tape, logits, &plan)?;
            Ok(tape.add(objective, l))
        })?;
        let lr = sched.lr(t);
        if lr > cfg.evolution_lr {
            return Err(Error::Numeric(format!("learning rate {lr} above the further-pretraining peak")));
        }
        adam.update(&mut model.params, &grads, lr, None)?;
        running = (running.0 + loss, running.1 + 1);
        if t == cfg.evolution_steps || (cfg.eval_interval > 0 && step % cfg.eval_interval == 0) {
            if t == cfg.evolution_steps {
                finish_params(&mut model, cfg.dtype);
            }
            log.push(LogRow {
                step,
                phase: Phase::Evolution,
                lr,
                loss: running.0 / running.1 as f64,
                diagnostics: diag(&model)?,
            });
            running = (0.0, 0);
        }
    }
    let checkpoint = Checkpoint::from_model(&model, Some(&adam), step, None);
    Ok(PretrainOutput { mlm_checkpoint, checkpoint, log, warnings })
}

/// Supervision for one finetuning example.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Class(usize),
    /// Token rows (input indices) and their 0/1 labels.
    Tokens { rows: Vec<usize>, labels: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: ModelInput,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

pub struct FinetuneOutput {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Transformer,
    pub kind: HeadKind,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
}

fn check_target(kind: HeadKind, t: &Target) -> Result<()> {
    match (kind, t) {
        (HeadKind::BinarySeq, Target::Class(c)) if *c < 2 => Ok(()),
        (HeadKind::MulticlassSeq(k), Target::Class(c)) if c < &k => Ok(()),
        (HeadKind::TokenLabel, Target::Tokens { rows, labels }) if rows.len() == labels.len() && !rows.is_empty() => Ok(()),
        _ => Err(Error::input(format!("label {t:?} does not fit a {kind:?} head"))),
    }
}

fn example_loss(model: &Transformer, tape: &mut Tape<'_>, ex: &Example, kind: HeadKind, train: bool, rng: &mut impl Rng) -> Result<Var> {
    let h = model.forward(tape, &ex.input, train, rng)?;
    let out = model.task_logits(tape, &h, kind);
    Ok(match (&ex.target, kind) {
        (Target::Class(c), HeadKind::BinarySeq) => tape.bce_with_logits(out, &[0], &[*c as f64]),
        (Target::Class(c), _) => tape.cross_entropy(out, &[0], &[*c as u32]),
        (Target::Tokens { rows, labels }, _) => {
            let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
            tape.bce_with_logits(out, rows, &y)
        }
    })
}

fn mean_loss(model: &Transformer, examples: &[Example], kind: HeadKind) -> Result<f64> {
    let losses = examples
        .par_iter()
        .map(|ex| {
            let mut tape = Tape::new(&model.params);
            let l = example_loss(model, &mut tape, ex, kind, false, &mut stream_rng(0, 0))?;
            Ok(tape.scalar(l))
        })
        .collect::<Result<Vec<f64>>>()?;
    let m = losses.iter().sum::<f64>() / losses.len() as f64;
    if !m.is_finite() {
        return Err(Error::Numeric("non-finite validation loss".into()));
    }
    Ok(m)
}

/// Attaches a `kind` head to `base` and trains with early stopping on the
/// validation loss.
pub fn finetune(mut base: Transformer, kind: HeadKind, train: &[Example], valid: &[Example], cfg: &TrainConfig) -> Result<FinetuneOutput> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::input("finetuning needs nonempty training and validation sets"));
    }
    for ex in train.iter().chain(valid) {
        check_target(kind, &ex.target)?;
    }
    base.attach_head(kind, cfg.seed)?;
    let frozen = if cfg.freeze_encoder { Some(base.encoder_param_mask()) } else { None };
    let mut model = base;
    let mut adam = Adam::new(&model.params);
    let sched = Schedule { peak_lr: cfg.finetune_lr, warmup: cfg.finetune_warmup };
    let mut best = (f64::INFINITY, 0usize, model.params.clone());
    let mut history = Vec::new();
    let mut stale = 0;
    let mut step = 0u64;
    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, 0x7000_0000 + epoch as u64));
        let mut epoch_loss = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            step += 1;
            let seed = cfg.seed ^ (epoch as u64) << 32 ^ bi as u64;
            let (loss, grads) = batch_gradient(&model, batch.len(), frozen.as_deref(), |i, tape| {
                example_loss(&model, tape, &train[batch[i]], kind, true, &mut stream_rng(seed, i as u64))
            })?;
            adam.update(&mut model.params, &grads, sched.lr(step), frozen.as_deref())?;
            epoch_loss += loss * batch.len() as f64;
        }
        let valid_loss = mean_loss(&model, valid, kind)?;
        history.push(EpochLog { epoch, train_loss: epoch_loss / train.len() as f64, valid_loss });
        if valid_loss < best.0 {
            best = (valid_loss, epoch, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience.max(1) {
                break;
            }
        }
    }
    model.params = best.2;
    finish_params(&mut model, cfg.dtype);
    Ok(FinetuneOutput { model, kind, history, best_epoch: best.1 })
}

/// Head outputs as probabilities: one value for binary heads, a softmax
/// over classes for multiclass heads, and one value per input token for
/// token labelling.
pub fn predict(model: &Transformer, kind: HeadKind, inputs: &[ModelInput]) -> Result<Vec<Vec<f64>>> {
    inputs
        .par_iter()
        .map(|input| {
            let mut tape = Tape::new(&model.params);
            let h = model.forward(&mut tape, input, false, &mut stream_rng(0, 0))?;
            let out = model.task_logits(&mut tape, &h, kind);
            let mut v = tape.value(out).to_vec();
            match kind {
                HeadKind::MulticlassSeq(_) => {
                    softmax_in_place(&mut v);
                }
                _ => v.iter_mut().for_each(|z| *z = sigmoid(*z)),
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric("non-finite prediction".into()));
            }
            Ok(v)
        })
        .collect()
}
