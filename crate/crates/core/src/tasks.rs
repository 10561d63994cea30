//! Benchmark task runners: binding classification, paratope labelling,
//! B-cell stage classification and binder discovery from noisy profile
//! labels.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::eval::cv::{group_key, kfold, kfold_keys, Fold, Grouping};
use crate::eval::metrics::{auc, confusion_matrix, row_normalize, threshold, Scores};
use crate::eval::ranking::{best_identity, binder_match, cumulative_match_curve, trimmed_mean};
use crate::eval::EvalReport;
use crate::model::{HeadKind, ModelInput, Transformer};
use crate::objectives::encode_single;
use crate::seqcore::{AntibodyRecord, Label, Stage};
use crate::simgen::stream_rng;
use crate::train::{finetune, predict, Example, Target, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Binding,
    Paratope,
    Bcell,
    Discovery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub head: HeadKind,
    pub grouping: Grouping,
    pub metrics: Vec<String>,
    pub class_names: Vec<String>,
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        let m = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        match kind {
            TaskKind::Binding => TaskSpec {
                kind,
                head: HeadKind::BinarySeq,
                grouping: Grouping::BySequence,
                metrics: m(&["auc", "f1", "mcc"]),
                class_names: m(&["non-binder", "binder"]),
            },
            TaskKind::Paratope => TaskSpec {
                kind,
                head: HeadKind::TokenLabel,
                grouping: Grouping::BySequence,
                metrics: m(&["auc", "f1", "mcc"]),
                class_names: m(&["other", "paratope"]),
            },
            TaskKind::Bcell => TaskSpec {
                kind,
                head: HeadKind::MulticlassSeq(Stage::ALL.len()),
                grouping: Grouping::BySequence,
                metrics: m(&["acc", "f1", "mcc"]),
                class_names: Stage::ALL.iter().map(|s| s.name().to_string()).collect(),
            },
            TaskKind::Discovery => TaskSpec {
                kind,
                head: HeadKind::BinarySeq,
                grouping: Grouping::ByProfile,
                metrics: m(&["auc", "f1", "mcc"]),
                class_names: m(&["healthy", "disease"]),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub folds: usize,
    pub seed: u64,
    /// Per-tail trim fraction for individual-level scores.
    pub trim: f64,
    pub identity_thresholds: Vec<f64>,
    pub prob_thresholds: Vec<f64>,
    /// Sequences per profile kept by the redundancy filter.
    pub top_redundancy: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            folds: 10,
            seed: 0,
            trim: 0.1,
            identity_thresholds: vec![0.85, 0.90],
            prob_thresholds: vec![0.5, 0.7, 0.8, 0.9],
            top_redundancy: 100,
        }
    }
}

pub const TASK_KEYS: &[&str] = &["folds", "trim", "identity_thresholds", "prob_thresholds", "top_redundancy"];

impl TaskConfig {
    pub fn apply_kv(&mut self, kv: &KvConfig) -> Result<()> {
        self.folds = kv.get_or("folds", self.folds)?;
        self.trim = kv.get_or("trim", self.trim)?;
        if let Some(v) = kv.get_list("identity_thresholds")? {
            self.identity_thresholds = v;
        }
        if let Some(v) = kv.get_list("prob_thresholds")? {
            self.prob_thresholds = v;
        }
        self.top_redundancy = kv.get_or("top_redundancy", self.top_redundancy)?;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::config("folds must be at least 2"));
        }
        if !(0.0..0.5).contains(&self.trim) {
            return Err(Error::config("trim must lie in [0, 0.5)"));
        }
        if self.identity_thresholds.iter().chain(&self.prob_thresholds).any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::config("thresholds must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Per-sequence scores from a third-party model.
pub type ExternalScores = BTreeMap<String, f64>;

/// Reads a two-column `id,score` CSV (header required).
pub fn read_scores_csv(path: &Path) -> Result<ExternalScores> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        score: f64,
    }
    let mut out = BTreeMap::new();
    for row in csv::Reader::from_path(path)?.deserialize::<Row>() {
        let row = row?;
        if !row.score.is_finite() {
            return Err(Error::input(format!("score for '{}' is not finite", row.id)));
        }
        if out.insert(row.id.clone(), row.score).is_some() {
            return Err(Error::input(format!("duplicate score for '{}'", row.id)));
        }
    }
    Ok(out)
}

fn external_lookup(scores: &ExternalScores, records: &[AntibodyRecord]) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| scores.get(&r.id).copied().ok_or_else(|| Error::input(format!("no external score for '{}'", r.id))))
        .collect()
}

/// Fixed train/valid/test assignment by record id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StandardSplit {
    pub train: BTreeSet<String>,
    pub valid: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// Reads an `id,split` CSV where split is train, valid or test.
pub fn read_split_csv(path: &Path) -> Result<StandardSplit> {
    let mut s = StandardSplit::default();
    let mut rdr = csv::Reader::from_path(path)?;
    for row in rdr.records() {
        let row = row?;
        let (id, part) = (row.get(0).unwrap_or("").to_string(), row.get(1).unwrap_or("").trim());
        match part {
            "train" => s.train.insert(id),
            "valid" | "validation" => s.valid.insert(id),
            "test" => s.test.insert(id),
            _ => return Err(Error::input(format!("unknown split '{part}' for '{id}'"))),
        };
    }
    Ok(s)
}

fn class_label(r: &AntibodyRecord, k: usize) -> Result<usize> {
    match &r.label {
        Some(Label::Class(c)) if *c < k => Ok(*c),
        Some(l) => Err(Error::input(format!("record '{}' label {l:?} is not a class below {k}", r.id))),
        None => Err(Error::input(format!("record '{}' is unlabeled", r.id))),
    }
}

fn inputs(records: &[AntibodyRecord], idx: &[usize], max_len: usize) -> Result<Vec<ModelInput>> {
    idx.iter().map(|&i| encode_single(&records[i].antibody, max_len)).collect()
}

fn class_examples(records: &[AntibodyRecord], idx: &[usize], labels: &[usize], max_len: usize) -> Result<Vec<Example>> {
    idx.iter()
        .map(|&i| Ok(Example { input: encode_single(&records[i].antibody, max_len)?, target: Target::Class(labels[i]) }))
        .collect()
}

/// Splits `train` into (fit, early-stopping) parts without breaking groups.
fn inner_split(keys: &[&str], train: &[usize], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let sub: Vec<&str> = train.iter().map(|&i| keys[i]).collect();
    let groups: BTreeSet<&str> = sub.iter().copied().collect();
    if groups.len() < 2 {
        return Err(Error::input("training fold has fewer than two groups for early stopping"));
    }
    let k = groups.len().min(9);
    let f = kfold_keys(&sub, k, seed ^ 0x1a4e)?.swap_remove(0);
    Ok((f.train.iter().map(|&j| train[j]).collect(), f.valid.iter().map(|&j| train[j]).collect()))
}

fn check_disjoint(keys: &[&str], fold: &Fold) -> Result<()> {
    let tr: BTreeSet<&str> = fold.train.iter().map(|&i| keys[i]).collect();
    if fold.valid.iter().any(|&i| tr.contains(keys[i])) {
        return Err(Error::input("cross-validation fold leaks a group between train and validation"));
    }
    Ok(())
}

fn fold_seed(cfg: &TaskConfig, f: usize) -> u64 {
    cfg.seed.wrapping_add(1 + f as u64 * 0x9e37_79b9)
}

fn train_cfg_for(train: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..train.clone() }
}

/// Binary classification of binders. Uses `split` verbatim when given,
/// otherwise a seeded 80/10/10 sequence-grouped split.
pub fn run_binding(
    records: &[AntibodyRecord],
    base: &Transformer,
    train_cfg: &TrainConfig,
    cfg: &TaskConfig,
    split: Option<&StandardSplit>,
    external: Option<&ExternalScores>,
) -> Result<EvalReport> {
    cfg.validate()?;
    let labels: Vec<usize> = records.iter().map(|r| class_label(r, 2)).collect::<Result<_>>()?;
    let mut report = EvalReport::new("binding");
    report.class_names = TaskSpec::new(TaskKind::Binding).class_names;
    let (tr, va, te) = match split {
        Some(s) => {
            let pick = |set: &BTreeSet<String>| -> Vec<usize> {
                (0..records.len()).filter(|&i| set.contains(&records[i].id)).collect()
            };
            report.notes.push("standard split used verbatim".into());
            (pick(&s.train), pick(&s.valid), pick(&s.test))
        }
        None => {
            let keys: Vec<&str> = records.iter().map(|r| r.antibody.as_str()).collect();
            let mut groups: Vec<&str> = keys.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            groups.shuffle(&mut stream_rng(cfg.seed, 0xb1d));
            let n = groups.len();
            if n < 3 {
                return Err(Error::input("binding needs at least three distinct sequences"));
            }
            let n_test = (n / 10).max(1);
            let n_valid = (n / 10).max(1);
            let part: BTreeMap<&str, usize> = groups
                .iter()
                .enumerate()
                .map(|(i, &g)| (g, if i < n_test { 2 } else if i < n_test + n_valid { 1 } else { 0 }))
                .collect();
            let pick = |p: usize| -> Vec<usize> { (0..records.len()).filter(|&i| part[keys[i]] == p).collect() };
            (pick(0), pick(1), pick(2))
        }
    };
    report.set_extra("split_sizes", [tr.len(), va.len(), te.len()]);
    if te.is_empty() {
        return Err(Error::input("binding test split is empty"));
    }
    let probs: Vec<f64> = match external {
        Some(scores) => {
            let test: Vec<AntibodyRecord> = te.iter().map(|&i| records[i].clone()).collect();
            report.notes.push("scores read from external file; no training".into());
            external_lookup(scores, &test)?
        }
        None => {
            let max_len = base.config.max_len;
            let train_ex = class_examples(records, &tr, &labels, max_len)?;
            let valid_ex = class_examples(records, &va, &labels, max_len)?;
            let out = finetune(base.clone(), HeadKind::BinarySeq, &train_ex, &valid_ex, &train_cfg_for(train_cfg, cfg.seed))?;
            report.set_extra("best_epoch", out.best_epoch);
            predict(&out.model, HeadKind::BinarySeq, &inputs(records, &te, max_len)?)?.into_iter().map(|p| p[0]).collect()
        }
    };
    let test_labels: Vec<usize> = te.iter().map(|&i| labels[i]).collect();
    report.scores = Scores::binary(&probs, &test_labels)?;
    Ok(report)
}

fn token_targets(r: &AntibodyRecord) -> Result<Target> {
    let labels = match &r.label {
        Some(Label::Tokens(t)) => t,
        _ => return Err(Error::input(format!("record '{}' has no per-residue labels", r.id))),
    };
    if labels.len() != r.antibody.len() {
        return Err(Error::input(format!("record '{}' label length differs from the sequence", r.id)));
    }
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if r.cdr.contains(i) {
            rows.push(i + 1);
            ys.push(y);
        } else if y != 0 {
            return Err(Error::input(format!("record '{}' has a positive label outside the CDR spans", r.id)));
        }
    }
    if rows.is_empty() {
        return Err(Error::input(format!("record '{}' has no CDR positions", r.id)));
    }
    Ok(Target::Tokens { rows, labels: ys })
}

/// Per-residue paratope labelling on CDR positions with sequence-grouped
/// cross-validation; AUC pools all CDR tokens of a fold.
pub fn run_paratope(records: &[AntibodyRecord], base: &Transformer, train_cfg: &TrainConfig, cfg: &TaskConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let max_len = base.config.max_len;
    let examples: Vec<Example> = records
        .iter()
        .map(|r| Ok(Example { input: encode_single(&r.antibody, max_len)?, target: token_targets(r)? }))
        .collect::<Result<_>>()?;
    let keys: Vec<&str> = records.iter().map(|r| r.antibody.as_str()).collect();
    let folds = kfold(records, cfg.folds, Grouping::BySequence, cfg.seed)?;
    for f in &folds {
        check_disjoint(&keys, f)?;
        let ids: BTreeSet<&str> = f.train.iter().map(|&i| records[i].id.as_str()).collect();
        if f.valid.iter().any(|&i| ids.contains(records[i].id.as_str())) {
            return Err(Error::input("paratope folds share a sequence id"));
        }
    }
    let per_fold = folds
        .par_iter()
        .enumerate()
        .map(|(fi, f)| -> Result<Scores> {
            let seed = fold_seed(cfg, fi);
            let (fit, stop) = inner_split(&keys, &f.train, seed)?;
            let pick = |idx: &[usize]| -> Vec<Example> { idx.iter().map(|&i| examples[i].clone()).collect() };
            let out = finetune(base.clone(), HeadKind::TokenLabel, &pick(&fit), &pick(&stop), &train_cfg_for(train_cfg, seed))?;
            let ins: Vec<ModelInput> = f.valid.iter().map(|&i| examples[i].input.clone()).collect();
            let probs = predict(&out.model, HeadKind::TokenLabel, &ins)?;
            let mut scores = Vec::new();
            let mut truth = Vec::new();
            for (p, &i) in probs.iter().zip(&f.valid) {
                if let Target::Tokens { rows, labels } = &examples[i].target {
                    for (&row, &y) in rows.iter().zip(labels) {
                        scores.push(p[row]);
                        truth.push(usize::from(y));
                    }
                }
            }
            Scores::binary(&scores, &truth)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = EvalReport::new("paratope");
    report.class_names = TaskSpec::new(TaskKind::Paratope).class_names;
    report.scores = Scores::mean(&per_fold);
    report.per_fold = per_fold;
    report.set_extra("auc_pooling", "micro");
    Ok(report)
}

/// Finetuning examples for `kind`: class labels for sequence tasks, CDR
/// token targets for paratope labelling, stage indices for B-cell records.
pub fn task_examples(kind: TaskKind, records: &[AntibodyRecord], max_len: usize) -> Result<Vec<Example>> {
    records
        .iter()
        .map(|r| {
            let target = match kind {
                TaskKind::Binding | TaskKind::Discovery => Target::Class(class_label(r, 2)?),
                TaskKind::Paratope => token_targets(r)?,
                TaskKind::Bcell => Target::Class(
                    r.stage.map(Stage::index).ok_or_else(|| Error::input(format!("record '{}' has no stage", r.id)))?,
                ),
            };
            Ok(Example { input: encode_single(&r.antibody, max_len)?, target })
        })
        .collect()
}

/// Group-aware (fit, early-stopping) split of all records by sequence.
pub fn holdout_split(records: &[AntibodyRecord], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let keys: Vec<&str> = records.iter().map(|r| r.antibody.as_str()).collect();
    inner_split(&keys, &(0..records.len()).collect::<Vec<_>>(), seed)
}

/// Fraction of misclassifications that land on a neighbouring stage.
pub fn adjacency_statistic(pred: &[usize], labels: &[usize]) -> Option<f64> {
    let errors: Vec<(usize, usize)> = pred.iter().zip(labels).filter(|(p, l)| p != l).map(|(&p, &l)| (p, l)).collect();
    if errors.is_empty() {
        return None;
    }
    let adjacent = errors.iter().filter(|(p, l)| p.abs_diff(*l) == 1).count();
    Some(adjacent as f64 / errors.len() as f64)
}

/// Six-way B-cell stage classification with cross-validation; the
/// confusion matrix pools all out-of-fold predictions.
pub fn run_bcell(records: &[AntibodyRecord], base: &Transformer, train_cfg: &TrainConfig, cfg: &TaskConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let k = Stage::ALL.len();
    let labels: Vec<usize> = records
        .iter()
        .map(|r| r.stage.map(Stage::index).ok_or_else(|| Error::input(format!("record '{}' has no stage", r.id))))
        .collect::<Result<_>>()?;
    let keys: Vec<&str> = records.iter().map(|r| r.antibody.as_str()).collect();
    let folds = kfold(records, cfg.folds, Grouping::BySequence, cfg.seed)?;
    let max_len = base.config.max_len;
    let kind = HeadKind::MulticlassSeq(k);
    let results = folds
        .par_iter()
        .enumerate()
        .map(|(fi, f)| -> Result<(Vec<usize>, Scores)> {
            check_disjoint(&keys, f)?;
            let seed = fold_seed(cfg, fi);
            let (fit, stop) = inner_split(&keys, &f.train, seed)?;
            let out = finetune(
                base.clone(),
                kind,
                &class_examples(records, &fit, &labels, max_len)?,
                &class_examples(records, &stop, &labels, max_len)?,
                &train_cfg_for(train_cfg, seed),
            )?;
            let probs = predict(&out.model, kind, &inputs(records, &f.valid, max_len)?)?;
            let pred: Vec<usize> = probs
                .iter()
                .map(|p| (0..k).fold(0, |b, c| if p[c] > p[b] { c } else { b }))
                .collect();
            let truth: Vec<usize> = f.valid.iter().map(|&i| labels[i]).collect();
            let acc = crate::eval::metrics::accuracy(&pred, &truth)?;
            let f1 = crate::eval::metrics::weighted_f1(&pred, &truth, k)?;
            let mcc = crate::eval::metrics::mcc_multiclass(&pred, &truth, k).ok();
            Ok((pred, Scores { acc: Some(acc), auc: None, f1: Some(f1), mcc }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pooled_pred = vec![0usize; records.len()];
    for (f, (pred, _)) in folds.iter().zip(&results) {
        for (&i, &p) in f.valid.iter().zip(pred) {
            pooled_pred[i] = p;
        }
    }
    let per_fold: Vec<Scores> = results.into_iter().map(|(_, s)| s).collect();
    let mut report = EvalReport::new("bcell");
    report.class_names = TaskSpec::new(TaskKind::Bcell).class_names;
    report.scores = Scores::mean(&per_fold);
    report.per_fold = per_fold;
    report.confusion = Some(row_normalize(&confusion_matrix(&pooled_pred, &labels, k)?));
    report.set_extra("adjacent_error_fraction", adjacency_statistic(&pooled_pred, &labels));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSequence {
    pub rank: usize,
    pub id: String,
    pub profile_id: String,
    pub cdr3: String,
    pub score: f64,
    pub best_binder: String,
    pub identity: f64,
}

pub fn write_ranked_csv<W: std::io::Write>(writer: W, ranked: &[RankedSequence]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in ranked {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub struct DiscoveryOutput {
    pub report: EvalReport,
    pub ranked: Vec<RankedSequence>,
}

/// Keeps the `top` most redundant sequences per profile (ties by id) when
/// every record carries a redundancy count. Returns the kept indices and
/// whether the filter applied.
pub fn redundancy_filter(records: &[AntibodyRecord], top: usize) -> (Vec<usize>, bool) {
    if records.iter().any(|r| r.redundancy.is_none()) {
        return ((0..records.len()).collect(), false);
    }
    let mut by_profile: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_profile.entry(r.profile_id.as_deref().unwrap_or("")).or_default().push(i);
    }
    let mut keep = Vec::new();
    for members in by_profile.values_mut() {
        members.sort_by(|&a, &b| {
            records[b].redundancy.cmp(&records[a].redundancy).then_with(|| records[a].id.cmp(&records[b].id))
        });
        keep.extend(members.iter().take(top));
    }
    keep.sort_unstable();
    (keep, true)
}

/// Trains a sequence classifier on profile labels, scores held-out profiles
/// by the trimmed mean of their sequence scores, and matches the ranked
/// positive-profile sequences against known binders.
pub fn run_discovery(
    records: &[AntibodyRecord],
    base: &Transformer,
    train_cfg: &TrainConfig,
    cfg: &TaskConfig,
    binder_db: &[String],
    external: Option<&ExternalScores>,
) -> Result<DiscoveryOutput> {
    cfg.validate()?;
    if binder_db.is_empty() {
        return Err(Error::input("empty binder database"));
    }
    let labels: Vec<usize> = records.iter().map(|r| class_label(r, 2)).collect::<Result<_>>()?;
    let keys: Vec<&str> = records.iter().map(|r| group_key(r, Grouping::ByProfile)).collect::<Result<_>>()?;
    let mut profile_label: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, &k) in keys.iter().enumerate() {
        if *profile_label.entry(k).or_insert(labels[i]) != labels[i] {
            return Err(Error::input(format!("profile '{k}' mixes labels")));
        }
    }
    let mut report = EvalReport::new("discovery");
    report.class_names = TaskSpec::new(TaskKind::Discovery).class_names;
    let (train_pool, filtered) = redundancy_filter(records, cfg.top_redundancy);
    if filtered {
        report.notes.push(format!("training uses the top {} sequences by redundancy per profile", cfg.top_redundancy));
    } else {
        report.notes.push("no redundancy counts: all sequences used for training".into());
    }
    let in_pool: Vec<bool> = {
        let mut v = vec![false; records.len()];
        train_pool.iter().for_each(|&i| v[i] = true);
        v
    };

    let scores: Vec<f64> = match external {
        Some(ext) => {
            report.notes.push("scores read from external file; no training".into());
            external_lookup(ext, records)?
        }
        None => {
            let folds = kfold_keys(&keys, cfg.folds, cfg.seed)?;
            let max_len = base.config.max_len;
            let parts = folds
                .par_iter()
                .enumerate()
                .map(|(fi, f)| -> Result<Vec<f64>> {
                    check_disjoint(&keys, f)?;
                    let seed = fold_seed(cfg, fi);
                    let pool: Vec<usize> = f.train.iter().copied().filter(|&i| in_pool[i]).collect();
                    let (fit, stop) = inner_split(&keys, &pool, seed)?;
                    let out = finetune(
                        base.clone(),
                        HeadKind::BinarySeq,
                        &class_examples(records, &fit, &labels, max_len)?,
                        &class_examples(records, &stop, &labels, max_len)?,
                        &train_cfg_for(train_cfg, seed),
                    )?;
                    Ok(predict(&out.model, HeadKind::BinarySeq, &inputs(records, &f.valid, max_len)?)?
                        .into_iter()
                        .map(|p| p[0])
                        .collect())
                })
                .collect::<Result<Vec<_>>>()?;
            let mut s = vec![f64::NAN; records.len()];
            for (f, p) in folds.iter().zip(parts) {
                for (&i, v) in f.valid.iter().zip(p) {
                    s[i] = v;
                }
            }
            s
        }
    };

    // Sequence level: every sequence inherits its profile's label.
    let truth: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
    let sequence_auc = auc(&scores, &truth)?;

    // Individual level.
    let mut per_profile: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (i, &k) in keys.iter().enumerate() {
        per_profile.entry(k).or_default().push(scores[i]);
    }
    let mut indiv_scores = Vec::new();
    let mut indiv_labels = Vec::new();
    let mut individual = BTreeMap::new();
    for (k, v) in &per_profile {
        if v.is_empty() {
            return Err(Error::input(format!("profile '{k}' has no sequences")));
        }
        let s = trimmed_mean(v, cfg.trim)?;
        individual.insert(k.to_string(), s);
        indiv_scores.push(s);
        indiv_labels.push(profile_label[k]);
    }
    let indiv_truth: Vec<bool> = indiv_labels.iter().map(|&l| l == 1).collect();
    let indiv_pred = threshold(&indiv_scores, 0.5);
    report.scores = Scores {
        acc: Some(crate::eval::metrics::accuracy(&indiv_pred, &indiv_labels)?),
        auc: Some(auc(&indiv_scores, &indiv_truth)?),
        f1: crate::eval::metrics::f1_binary(&indiv_pred, &indiv_labels).ok(),
        mcc: crate::eval::metrics::mcc_binary(&indiv_pred, &indiv_labels).ok(),
    };
    report.set_extra("sequence_auc", sequence_auc);
    report.set_extra("individual_scores", &individual);
    report.set_extra("trim", cfg.trim);

    // Rank positive-profile sequences and match their CDR-H3s.
    let mut positives: Vec<usize> = (0..records.len()).filter(|&i| labels[i] == 1).collect();
    positives.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| records[a].id.cmp(&records[b].id)));
    let cdr3 = |i: usize| -> &str { records[i].cdr3().unwrap_or(&records[i].antibody) };
    let best: Vec<(usize, f64)> = positives.par_iter().map(|&i| best_identity(cdr3(i), binder_db)).collect::<Result<_>>()?;
    let ranked: Vec<RankedSequence> = positives
        .iter()
        .zip(&best)
        .enumerate()
        .map(|(rank, (&i, &(bi, id)))| RankedSequence {
            rank: rank + 1,
            id: records[i].id.clone(),
            profile_id: keys[i].to_string(),
            cdr3: cdr3(i).to_string(),
            score: scores[i],
            best_binder: binder_db[bi].clone(),
            identity: id,
        })
        .collect();
    let scored: Vec<(String, f64)> = ranked.iter().map(|r| (r.cdr3.clone(), r.score)).collect();
    for &it in &cfg.identity_thresholds {
        for &pt in &cfg.prob_thresholds {
            report.hit_table.push(binder_match(&scored, binder_db, pt, it)?.row);
        }
        let hits: Vec<bool> = ranked.iter().map(|r| r.identity >= it).collect();
        report.curves.insert(format!("cmc_identity_{:.0}", it * 100.0), cumulative_match_curve(&hits));
    }
    Ok(DiscoveryOutput { report, ranked })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacency() {
        assert_eq!(adjacency_statistic(&[0, 1, 2], &[0, 1, 2]), None);
        assert_eq!(adjacency_statistic(&[1, 3, 2], &[0, 1, 2]), Some(0.5));
    }

    #[test]
    fn redundancy_filter_keeps_top() {
        let mut recs = Vec::new();
        for i in 0..5u32 {
            let mut r = AntibodyRecord::new(format!("s{i}"), "CAR", "CAR");
            r.profile_id = Some("p".into());
            r.redundancy = Some(i % 3);
            recs.push(r);
        }
        let (keep, applied) = redundancy_filter(&recs, 2);
        assert!(applied);
        assert_eq!(keep, vec![1, 2]);
        recs[0].redundancy = None;
        assert!(!redundancy_filter(&recs, 2).1);
    }

    #[test]
    fn token_targets_reject_labels_outside_cdrs() {
        let mut r = AntibodyRecord::new("a", "CARDW", "CARDW");
        r.cdr.cdr3 = Some((1, 4));
        r.label = Some(Label::Tokens(vec![0, 1, 0, 1, 0]));
        let t = token_targets(&r).unwrap();
        assert_eq!(t, Target::Tokens { rows: vec![2, 3, 4], labels: vec![1, 0, 1] });
        r.label = Some(Label::Tokens(vec![1, 0, 0, 0, 0]));
        assert!(token_targets(&r).is_err());
    }

    #[test]
    fn bcell_class_names() {
        assert_eq!(TaskSpec::new(TaskKind::Bcell).class_names.len(), 6);
        assert_eq!(TaskSpec::new(TaskKind::Discovery).grouping, Grouping::ByProfile);
    }
}
