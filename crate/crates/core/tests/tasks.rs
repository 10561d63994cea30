use std::collections::BTreeMap;

use abevo::model::{ModelConfig, Transformer};
use abevo::simgen::{generate_repertoire, GeneLibrary, LibraryConfig, RepertoireSpec};
use abevo::tasks::{run_bcell, run_binding, run_discovery, run_paratope, StandardSplit, TaskConfig};
use abevo::train::TrainConfig;
use abevo::{AntibodyRecord, Label};

fn tiny() -> Transformer {
    Transformer::new(ModelConfig { max_len: 64, ..ModelConfig::tiny() }).unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig { max_epochs: 2, batch_size: 8, finetune_warmup: 2, ..Default::default() }
}

fn cohort(motif_fraction: f64) -> Vec<AntibodyRecord> {
    let lib = GeneLibrary::generate(&LibraryConfig::desk(), 3).unwrap();
    let spec = RepertoireSpec {
        n_profiles: 6,
        sequences_per_profile: 20,
        disease_motif: Some("WCWHM".into()),
        motif_fraction,
        seed: 3,
        ..Default::default()
    };
    generate_repertoire(&spec, &lib).unwrap()
}

#[test]
fn binding_with_external_scores_uses_split_verbatim() {
    let recs = cohort(1.0);
    let mut split = StandardSplit::default();
    for (i, r) in recs.iter().enumerate() {
        match i % 4 {
            0 => split.test.insert(r.id.clone()),
            1 => split.valid.insert(r.id.clone()),
            _ => split.train.insert(r.id.clone()),
        };
    }
    let scores: BTreeMap<String, f64> = recs
        .iter()
        .map(|r| (r.id.clone(), if r.label == Some(Label::Class(1)) { 0.9 } else { 0.1 }))
        .collect();
    let rep = run_binding(&recs, &tiny(), &quick(), &TaskConfig::default(), Some(&split), Some(&scores)).unwrap();
    assert_eq!(rep.scores.auc, Some(1.0));
    assert_eq!(rep.scores.mcc, Some(1.0));
    assert_eq!(rep.extra["split_sizes"], serde_json::json!([60, 30, 30]));
}

#[test]
fn binding_rejects_missing_scores() {
    let recs = cohort(1.0);
    let scores = BTreeMap::new();
    assert!(run_binding(&recs, &tiny(), &quick(), &TaskConfig::default(), None, Some(&scores)).is_err());
}

#[test]
fn paratope_cross_validation_reports_every_fold() {
    let mut recs = cohort(0.0);
    recs.truncate(40);
    for r in &mut recs {
        let (s, e) = r.cdr.cdr3.unwrap();
        let labels = (0..r.antibody.len()).map(|i| u8::from(i >= s && i < e && i % 2 == 0)).collect();
        r.label = Some(Label::Tokens(labels));
    }
    let cfg = TaskConfig { folds: 4, ..TaskConfig::default() };
    let rep = run_paratope(&recs, &tiny(), &quick(), &cfg).unwrap();
    assert_eq!(rep.per_fold.len(), 4);
    assert!(rep.scores.auc.is_some());
    assert_eq!(rep.extra["auc_pooling"], "micro");

    let (s, _) = recs[0].cdr.cdr1.unwrap();
    if let Some(Label::Tokens(t)) = &mut recs[0].label {
        t[s.saturating_sub(1)] = 1;
    }
    assert!(run_paratope(&recs, &tiny(), &quick(), &cfg).is_err());
}

#[test]
fn bcell_confusion_is_row_normalized() {
    let mut recs = cohort(0.0);
    recs.truncate(60);
    let cfg = TaskConfig { folds: 3, ..TaskConfig::default() };
    let rep = run_bcell(&recs, &tiny(), &quick(), &cfg).unwrap();
    let m = rep.confusion.unwrap();
    assert_eq!(m.len(), 6);
    for row in &m {
        let s: f64 = row.iter().sum();
        assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
    }
    assert_eq!(rep.class_names.len(), 6);
}

#[test]
fn discovery_with_external_scores() {
    let recs = cohort(0.25);
    let carrier = |r: &AntibodyRecord| r.cdr3().is_some_and(|c| c.contains("WCWHM"));
    let db: Vec<String> = recs.iter().filter(|r| carrier(r)).map(|r| r.cdr3().unwrap().to_string()).collect();
    assert_eq!(db.len(), 15);
    let scores: BTreeMap<String, f64> =
        recs.iter().map(|r| (r.id.clone(), if carrier(r) { 0.95 } else { 0.4 })).collect();
    let cfg = TaskConfig { trim: 0.1, ..TaskConfig::default() };
    let out = run_discovery(&recs, &tiny(), &quick(), &cfg, &db, Some(&scores)).unwrap();
    let r = &out.report;
    assert_eq!(r.scores.auc, Some(1.0));
    assert!(r.scores.auc.unwrap() >= r.extra["sequence_auc"].as_f64().unwrap());
    assert_eq!(r.hit_table.len(), 8);
    assert!(r.notes.iter().any(|n| n.contains("no redundancy counts")));
    let curve = &r.curves["cmc_identity_85"];
    assert_eq!(curve.y[14], 15.0);
    assert!(curve.y[29] > curve.baseline[29]);
    assert_eq!(out.ranked.len(), 60);
    assert!(out.ranked[..15].iter().all(|s| s.identity == 1.0));
}

#[test]
fn discovery_applies_redundancy_filter_when_counts_exist() {
    let mut recs = cohort(0.25);
    for (i, r) in recs.iter_mut().enumerate() {
        r.redundancy = Some((i % 7) as u32);
    }
    let db = vec!["ARDLGGYFDY".to_string()];
    let scores: BTreeMap<String, f64> = recs.iter().map(|r| (r.id.clone(), 0.5)).collect();
    let cfg = TaskConfig { top_redundancy: 5, ..TaskConfig::default() };
    let out = run_discovery(&recs, &tiny(), &quick(), &cfg, &db, Some(&scores)).unwrap();
    assert!(out.report.notes.iter().any(|n| n.contains("top 5")));
}
