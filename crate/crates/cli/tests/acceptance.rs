//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers to run a subset, e.g.
//! `cargo test --test acceptance -- 1 2 5`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use abevo::corpus::{cluster_filter, shuffle_and_chunk};
use abevo::eval::metrics::{auc, f1_binary, mcc_binary};
use abevo::eval::ranking::binder_match;
use abevo::eval::stats::{chi_squared, kruskal_wallis, welch_t};
use abevo::model::gradcheck::check_pretraining_heads;
use abevo::model::{ModelConfig, Transformer};
use abevo::objectives::{encode_pair_strs, mlm_plan, MaskAction, MaskScope};
use abevo::seqcore::sequence_identity;
use abevo::simgen::{generate_repertoire, stream_rng, GeneLibrary, LibraryConfig, RepertoireSpec};
use abevo::tasks::{run_discovery, TaskConfig};
use abevo::train::{diagnostics, pretrain, TrainConfig};
use abevo::AntibodyRecord;
use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1. Identity table of predicted vs known binder CDR-H3s.
const IDENTITY_TABLE: [(&str, &str, &str); 11] = [
    ("AREGIVGATTGFDY", "AREGIVGATTGFDY", "1.000"),
    ("ARDLGGYFDY", "ARDLGGYFDY", "1.000"),
    ("AKDQDDAYYYYYYMDV", "AKDQDDGYYYYYYMDV", "0.938"),
    ("ASYYYDSSGYHYGMDV", "ASYYYDSSGYYYGMDV", "0.938"),
    ("ARRGLGLYYYGMDV", "ARRGDGLYYYGMDV", "0.929"),
    ("ARAFRGSYYYGMDV", "ARATRGSYYYGMDV", "0.929"),
    ("ARLSGSSWYFDY", "ARLSGSSWDFDY", "0.917"),
    ("ARLGSSSWYFDY", "ARVGSSSWYFDY", "0.917"),
    ("ARGWLRGYFDL", "ARRGWLRGYFDL", "0.909"),
    ("ARDWGELYFDY", "ARDWGEYYFDY", "0.909"),
    ("ARDLGGVFDY", "ARDLGGYFDY", "0.900"),
];

fn identity_table() -> Outcome {
    let t0 = Instant::now();
    let mut bad = Vec::new();
    for (q, t, want) in IDENTITY_TABLE {
        let got = format!("{:.3}", sequence_identity(q.as_bytes(), t.as_bytes()).map_err(|e| e.to_string())?);
        if got != want {
            bad.push(format!("{q}: {got} != {want}"));
        }
    }
    let el = t0.elapsed();
    check(bad.is_empty() && el < Duration::from_secs(1), format!("11 rows, mismatches {bad:?}, {el:.2?}"))
}

// 2. Hit-rate arithmetic on a constructed list with 13253 sequences above
// 0.5, 66 of which match the database.
fn hit_rate() -> Outcome {
    let db = vec!["ARDLGGYFDY".to_string(), "AREGIVGATTGFDY".to_string()];
    let mut rng = stream_rng(2, 0);
    let mut scored = Vec::new();
    for i in 0..13253 {
        let q = if i < 66 { db[i % 2].clone() } else { "WWWWWWWWPP".to_string() };
        scored.push((q, rng.gen_range(0.5001..1.0)));
    }
    for _ in 0..4000 {
        scored.push((db[0].clone(), rng.gen_range(0.0..=0.5)));
    }
    scored.shuffle(&mut rng);
    let r = binder_match(&scored, &db, 0.5, 0.85).map_err(|e| e.to_string())?;
    let shown = r.row.hit_rate_display();
    check(
        r.row.total == 13253 && r.row.hits == 66 && shown == "0.498",
        format!("total {} hits {} hit rate {shown}%", r.row.total, r.row.hits),
    )
}

// 3. Autograd against central differences for every pretraining loss.
fn gradients() -> Outcome {
    let t0 = Instant::now();
    let reports = check_pretraining_heads(&ModelConfig::tiny(), 200, 3).map_err(|e| e.to_string())?;
    let el = t0.elapsed();
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let detail: Vec<String> = reports.iter().map(|r| format!("{} {:.2e}", r.objective, r.max_rel_error)).collect();
    check(
        reports.len() == 3 && worst < 1e-4 && el < Duration::from_secs(60),
        format!("{}, {el:.1?}", detail.join(", ")),
    )
}

// 4. Pretraining diagnostics at the desk configuration.
const C4_MLM_STEPS: u64 = 1000;
const C4_EVOLUTION_STEPS: u64 = 4000;
const C4_EVOLUTION_LR: f64 = 5e-4;

fn pretraining_diagnostics() -> Outcome {
    let t0 = Instant::now();
    let lib = GeneLibrary::generate(&LibraryConfig::desk(), 7).map_err(|e| e.to_string())?;
    let spec = RepertoireSpec { n_profiles: 10, sequences_per_profile: 1000, shm_rate: 0.05, seed: 7, ..Default::default() };
    let records = generate_repertoire(&spec, &lib).map_err(|e| e.to_string())?;
    let corpus = shuffle_and_chunk(records, 9000, 1).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        mlm_steps: C4_MLM_STEPS,
        evolution_steps: C4_EVOLUTION_STEPS,
        evolution_lr: C4_EVOLUTION_LR,
        eval_interval: 0,
        ..Default::default()
    };
    let out = pretrain(&corpus, &ModelConfig::default(), &cfg).map_err(|e| e.to_string())?;
    let held_out = corpus.validation();
    let base = out.mlm_checkpoint.model().map_err(|e| e.to_string())?;
    let full = out.checkpoint.model().map_err(|e| e.to_string())?;
    let d0 = diagnostics(&base, held_out, 0.15, 0.5, 99).map_err(|e| e.to_string())?;
    let d1 = diagnostics(&full, held_out, 0.15, 0.5, 99).map_err(|e| e.to_string())?;
    let el = t0.elapsed();
    check(
        d1.position_accuracy >= 0.95
            && d1.mutation_accuracy >= 2.0 * d0.mutation_accuracy
            && d1.germline_accuracy >= 0.95
            && el <= Duration::from_secs(30 * 60),
        format!(
            "position {:.3}, residue {:.3} vs MLM-only {:.3}, ancestor {:.3}, {:.0}s",
            d1.position_accuracy,
            d1.mutation_accuracy,
            d0.mutation_accuracy,
            d1.germline_accuracy,
            el.as_secs_f64()
        ),
    )
}

// 5. Metric and test oracles.
fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

fn oracle_chi2(table: &[Vec<f64>]) -> (f64, f64) {
    let rows: Vec<&Vec<f64>> = table.iter().filter(|r| r.iter().sum::<f64>() > 0.0).collect();
    let cols: Vec<usize> = (0..table[0].len()).filter(|&c| rows.iter().map(|r| r[c]).sum::<f64>() > 0.0).collect();
    let total: f64 = rows.iter().map(|r| r.iter().sum::<f64>()).sum();
    let mut stat = 0.0;
    for r in &rows {
        let rs: f64 = r.iter().sum();
        for &c in &cols {
            let cs: f64 = rows.iter().map(|x| x[c]).sum();
            let e = rs * cs / total;
            stat += (r[c] - e) * (r[c] - e) / e;
        }
    }
    (stat, ((rows.len() - 1) * (cols.len() - 1)) as f64)
}

fn oracle_kw(groups: &[Vec<f64>]) -> (f64, f64) {
    let mut all: Vec<(f64, usize)> = groups.iter().enumerate().flat_map(|(g, v)| v.iter().map(move |&x| (x, g))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = all.len() as f64;
    let mut rank_sum = vec![0.0; groups.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for x in &all[i..j] {
            rank_sum[x.1] += r;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    let h: f64 = 12.0 / (n * (n + 1.0)) * groups.iter().zip(&rank_sum).map(|(g, r)| r * r / g.len() as f64).sum::<f64>()
        - 3.0 * (n + 1.0);
    (h / (1.0 - ties / (n * n * n - n)), (groups.len() - 1) as f64)
}

fn oracle_welch(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mv = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64)
    };
    let ((ma, va), (mb, vb)) = (mv(a), mv(b));
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let t = (ma - mb) / (sa + sb).sqrt();
    let dof = (sa + sb).powi(2) / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    (t, dof)
}

fn metric_oracles() -> Outcome {
    let mut rng = stream_rng(5, 0);
    let mut worst_auc = 0.0f64;
    let mut auc_cases = 0;
    while auc_cases < 100 {
        let n = rng.gen_range(2..=50);
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..10) as f64) / 10.0).collect();
        let a = auc(&scores, &labels).map_err(|e| e.to_string())?;
        if a != brute_auc(&scores, &labels) {
            return Err(format!("AUC mismatch on instance {auc_cases}"));
        }
        worst_auc = worst_auc.max((a - brute_auc(&scores, &labels)).abs());
        auc_cases += 1;
    }
    let mut worst_cls = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(4..=60);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let c = |p: usize, l: usize| pred.iter().zip(&labels).filter(|(&a, &b)| a == p && b == l).count() as f64;
        let (tp, fp, fn_, tn) = (c(1, 1), c(1, 0), c(0, 1), c(0, 0));
        let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        if den > 0.0 {
            let m = mcc_binary(&pred, &labels).map_err(|e| e.to_string())?;
            worst_cls = worst_cls.max((m - (tp * tn - fp * fn_) / den).abs());
        }
        if tp + fp + fn_ > 0.0 {
            let f = f1_binary(&pred, &labels).map_err(|e| e.to_string())?;
            worst_cls = worst_cls.max((f - 2.0 * tp / (2.0 * tp + fp + fn_)).abs());
        }
    }
    let mut worst_p = 0.0f64;
    for _ in 0..50 {
        let (r, c) = (rng.gen_range(2..=5), rng.gen_range(2..=5));
        let table: Vec<Vec<f64>> = (0..r).map(|_| (0..c).map(|_| rng.gen_range(0..30) as f64).collect()).collect();
        let (stat, dof) = oracle_chi2(&table);
        let got = chi_squared(&table).map_err(|e| e.to_string())?;
        let p = ChiSquared::new(dof).map_err(|e| e.to_string())?.sf(stat);
        worst_p = worst_p.max((got.p_value - p).abs()).max((got.statistic - stat).abs() / stat.max(1.0));

        let k = rng.gen_range(2..=5);
        let groups: Vec<Vec<f64>> =
            (0..k).map(|_| (0..rng.gen_range(2..=10)).map(|_| rng.gen_range(0..20) as f64).collect()).collect();
        let (h, dof) = oracle_kw(&groups);
        let got = kruskal_wallis(&groups).map_err(|e| e.to_string())?;
        let p = ChiSquared::new(dof).map_err(|e| e.to_string())?.sf(h);
        worst_p = worst_p.max((got.p_value - p).abs()).max((got.statistic - h).abs() / h.abs().max(1.0));

        let a: Vec<f64> = (0..rng.gen_range(2..=20)).map(|_| rng.gen_range(0.0..10.0)).collect();
        let b: Vec<f64> = (0..rng.gen_range(2..=20)).map(|_| rng.gen_range(1.0..12.0)).collect();
        let (t, dof) = oracle_welch(&a, &b);
        let got = welch_t(&a, &b).map_err(|e| e.to_string())?;
        let p = 2.0 * StudentsT::new(0.0, 1.0, dof).map_err(|e| e.to_string())?.sf(t.abs());
        worst_p = worst_p.max((got.p_value - p).abs()).max((got.statistic - t).abs() / t.abs().max(1.0));
    }
    check(
        worst_auc == 0.0 && worst_cls <= 1e-12 && worst_p <= 1e-8,
        format!("AUC exact on 100, F1/MCC max error {worst_cls:.1e}, p-value max error {worst_p:.1e} on 150"),
    )
}

// 6. cluster_filter against an all-pairs greedy reference.
fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            d[i][j] = (d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1])).min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn reference_filter(records: &[AntibodyRecord], threshold: f64) -> Vec<String> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].id.cmp(&records[b].id).then(a.cmp(&b)));
    let mut reps: Vec<usize> = Vec::new();
    for i in order {
        let q = records[i].antibody.as_bytes();
        let redundant = reps.iter().any(|&r| {
            let d = levenshtein(q, records[r].antibody.as_bytes());
            let ident = if d >= q.len() { 0.0 } else { (q.len() - d) as f64 / q.len() as f64 };
            records[r].cdr3() == records[i].cdr3() && ident >= threshold
        });
        if !redundant {
            reps.push(i);
        }
    }
    reps.sort_unstable();
    reps.iter().map(|&i| format!("{}#{}", records[i].id, records[i].antibody)).collect()
}

fn clustering_oracle() -> Outcome {
    let mut rng = stream_rng(6, 0);
    let mut kept_total = 0;
    let mut in_total = 0;
    for case in 0..100 {
        let n = rng.gen_range(1..=200);
        let threshold = [0.5, 0.7, 0.8, 0.9, 1.0][rng.gen_range(0..5)];
        let records: Vec<AntibodyRecord> = (0..n)
            .map(|i| {
                let len = rng.gen_range(6..=9);
                let s: String = (0..len).map(|_| b"ACD"[rng.gen_range(0..if i % 3 == 0 { 2 } else { 3 })] as char).collect();
                let mut r = AntibodyRecord::new(format!("r{:03}", rng.gen_range(0..n)), s.clone(), s);
                r.cdr.cdr3 = Some((1, 4));
                r
            })
            .collect();
        let want = reference_filter(&records, threshold);
        let got: Vec<String> = cluster_filter(records, threshold)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|r| format!("{}#{}", r.id, r.antibody))
            .collect();
        if got != want {
            return Err(format!("corpus {case} (n={n}, threshold {threshold}) differs"));
        }
        kept_total += got.len();
        in_total += n;
    }
    Ok(format!("100 corpora equal, {kept_total} of {in_total} records kept"))
}

// 7. Discovery on a motif-implanted cohort.
const C7_MOTIF: &str = "WCWHM";
const C7_FOLDS: usize = 2;
const C7_TRIM: f64 = 0.1;

fn discovery() -> Outcome {
    let t0 = Instant::now();
    let lib = GeneLibrary::generate(&LibraryConfig::desk(), 11).map_err(|e| e.to_string())?;
    let spec = RepertoireSpec {
        n_profiles: 20,
        sequences_per_profile: 500,
        disease_motif: Some(C7_MOTIF.into()),
        motif_fraction: 0.1,
        seed: 11,
        ..Default::default()
    };
    let records = generate_repertoire(&spec, &lib).map_err(|e| e.to_string())?;
    let db: Vec<String> = records
        .iter()
        .filter_map(|r| r.cdr3())
        .filter(|c| c.contains(C7_MOTIF))
        .map(str::to_string)
        .collect();
    let model = Transformer::new(ModelConfig { max_len: 64, ..ModelConfig::default() }).map_err(|e| e.to_string())?;
    let train = TrainConfig {
        finetune_lr: 1e-3,
        finetune_warmup: 20,
        max_epochs: 4,
        patience: 2,
        seed: 11,
        ..Default::default()
    };
    let task = TaskConfig { folds: C7_FOLDS, seed: 11, trim: C7_TRIM, ..TaskConfig::default() };
    let out = run_discovery(&records, &model, &train, &task, &db, None).map_err(|e| e.to_string())?;
    let el = t0.elapsed();
    let curve = &out.report.curves["cmc_identity_85"];
    let half = curve.x.len() / 2 - 1;
    let (at, base) = (curve.y[half], curve.baseline[half]);
    let seq_auc = out.report.extra["sequence_auc"].as_f64().unwrap_or(f64::NAN);
    let ind_auc = out.report.scores.auc.unwrap_or(f64::NAN);
    check(
        at > base && ind_auc >= seq_auc && el <= Duration::from_secs(20 * 60),
        format!(
            "matches at n/2 {at} vs random {base:.1}, individual AUC {ind_auc:.3} vs sequence AUC {seq_auc:.3}, {:.0}s",
            el.as_secs_f64()
        ),
    )
}

// 8. Byte-identical outputs for repeated CLI runs.
fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_abevo"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .env_remove("SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("abevo {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn snapshot(dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) -> std::io::Result<()> {
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            snapshot(&p, acc)?;
        } else {
            acc.insert(p.clone(), std::fs::read(&p)?);
        }
    }
    Ok(())
}

fn pipeline(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let p = |s: &str| root.join(s).display().to_string();
    let _ = std::fs::remove_dir_all(root);
    std::fs::create_dir_all(root).map_err(|e| e.to_string())?;
    std::fs::write(
        root.join("sim.cfg"),
        "library = desk\nn_profiles = 6\nsequences_per_profile = 30\ndisease_motif = WCWHM\nmotif_fraction = 1.0\n",
    )
    .map_err(|e| e.to_string())?;
    std::fs::write(
        root.join("model.cfg"),
        "layers = 1\nheads = 2\nhidden = 16\nffn = 32\nmax_len = 128\nmlm_steps = 4\nevolution_steps = 4\n\
         batch_size = 4\neval_interval = 4\neval_size = 8\nmax_epochs = 6\nfinetune_lr = 0.005\nfinetune_warmup = 5\nfolds = 3\n",
    )
    .map_err(|e| e.to_string())?;
    std::fs::write(root.join("db.txt"), "ARWCWHMDY\nARDLGGYFDY\n").map_err(|e| e.to_string())?;
    let cfg = p("model.cfg");
    run_cli(&["simulate", "--spec", &p("sim.cfg"), "--seed", "8", "--out", &p("sim")])?;
    let data = p("sim/repertoire.csv");
    run_cli(&["preprocess", "--input", &data, "--chunk-size", "60", "--seed", "8", "--out", &p("pre")])?;
    run_cli(&["pretrain", "--corpus", &p("pre"), "--config", &cfg, "--seed", "8", "--out", &p("pt")])?;
    let ck = p("pt/checkpoint.bin");
    run_cli(&["evaluate", "--task", "binding", "--data", &data, "--checkpoint", &ck, "--config", &cfg, "--seed", "8", "--out", &p("ev")])?;
    run_cli(&[
        "discover", "--profiles", &data, "--db", &p("db.txt"), "--trim", "0.1", "--checkpoint", &ck, "--config", &cfg, "--seed", "8",
        "--out", &p("disc"),
    ])?;
    run_cli(&["plot", "--input", &p("disc/report.json"), "--out", &p("plot")])?;
    run_cli(&["stats", "--input", &data, "--out", &p("stats")])?;
    let mut files = BTreeMap::new();
    snapshot(root, &mut files).map_err(|e| e.to_string())?;
    Ok(files)
}

fn determinism() -> Outcome {
    let root = std::env::temp_dir().join(format!("abevo-determinism-{}", std::process::id()));
    let first = pipeline(&root)?;
    let second = pipeline(&root)?;
    let _ = std::fs::remove_dir_all(&root);
    let differing: Vec<String> = first
        .iter()
        .filter(|(k, v)| second.get(*k) != Some(*v))
        .map(|(k, _)| k.strip_prefix(&root).unwrap_or(k).display().to_string())
        .collect();
    let has = |suffix: &str| first.keys().any(|k| k.to_string_lossy().ends_with(suffix));
    check(
        differing.is_empty() && first.len() == second.len() && has("checkpoint.bin") && has("report.json") && has(".svg"),
        format!("{} files compared, differing {differing:?}", first.len()),
    )
}

// 9. MLM masking split.
fn masking_split() -> Outcome {
    let enc = encode_pair_strs(
        "EVQLVESGGGLVQPGGSLRLSCAASGFTFSSYAMSWVRQAPGKGLEWVSAISGSGGSTYYADSVKG",
        "EVQLVESGGGLVQPGGSLRLSCAASGFTFSSYAMSWVRQAPGKGLEWVSAISGSGGSTYYADSVKG",
        256,
    )
    .map_err(|e| e.to_string())?;
    let mut rng = stream_rng(9, 0);
    let mut counts = [0usize; 3];
    for _ in 0..10_000 {
        let plan = mlm_plan(&enc, 0.15, MaskScope::Both, &mut rng).map_err(|e| e.to_string())?;
        for a in &plan.actions {
            counts[match a {
                MaskAction::Mask => 0,
                MaskAction::Random => 1,
                MaskAction::Keep => 2,
            }] += 1;
        }
    }
    let total = counts.iter().sum::<usize>() as f64;
    let f: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let ok = (f[0] - 0.8).abs() <= 0.01 && (f[1] - 0.1).abs() <= 0.01 && (f[2] - 0.1).abs() <= 0.01;
    check(ok, format!("mask {:.4} replace {:.4} keep {:.4} over {total} tokens", f[0], f[1], f[2]))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "identity table", identity_table),
        (2, "hit-rate arithmetic", hit_rate),
        (3, "gradient correctness", gradients),
        (4, "pretraining diagnostics", pretraining_diagnostics),
        (5, "metric oracles", metric_oracles),
        (6, "clustering oracle", clustering_oracle),
        (7, "discovery end to end", discovery),
        (8, "determinism", determinism),
        (9, "masking statistics", masking_split),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(d) => println!("criterion {n} {name}: PASS ({d})"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL ({d})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
