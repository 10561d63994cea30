//! `abevo` command-line interface.
//!
//! Settings precedence, lowest first: built-in defaults, the `--config`
//! key-value file, `--set key=value` pairs, then dedicated flags. The seed
//! resolves as `--seed`, then the `SEED` environment variable, then the
//! `seed` key, then 0.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abevo::config::KvConfig;
use abevo::corpus::{self, ChunkedCorpus, DEFAULT_CHUNK_SIZE, DEFAULT_IDENTITY};
use abevo::eval::ranking::{read_binder_db, Curve};
use abevo::eval::report::line_chart;
use abevo::eval::stats::{specificity_report, MutationTest};
use abevo::eval::EvalReport;
use abevo::model::checkpoint::Checkpoint;
use abevo::model::gradcheck::check_pretraining_heads;
use abevo::model::transformer::MODEL_KEYS;
use abevo::model::{ModelConfig, Transformer};
use abevo::simgen::{generate_repertoire, GeneLibrary, RepertoireSpec, SPEC_KEYS};
use abevo::tasks::{self, TaskConfig, TaskKind, TaskSpec, TASK_KEYS};
use abevo::train::{self, TrainConfig, TRAIN_KEYS};
use abevo::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::RunManifest;

const GRADCHECK_TOLERANCE: f64 = 1e-4;
const EXTRA_KEYS: &[&str] = &["chunk_size", "identity", "samples"];

#[derive(Parser)]
#[command(name = "abevo", version, about = "Evolution-aware antibody language model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Random seed; overrides SEED and the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Flat key = value settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single setting override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic repertoire CSV.
    Simulate {
        /// Repertoire spec (key = value).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory, or a `.csv` path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Deduplicate, cluster-filter and chunk a corpus.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        identity: Option<f64>,
        #[arg(long)]
        chunk_size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Pretrain with MLM then the evolution objectives.
    Pretrain {
        /// Chunk directory from `preprocess`, or a CSV/JSONL corpus.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Finetune a task head and save the model.
    Finetune {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        data: PathBuf,
        /// Pretrained checkpoint; a fresh model when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a benchmark task and write its report.
    Evaluate {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// `id,split` CSV for the binding task.
        #[arg(long)]
        split: Option<PathBuf>,
        /// `id,score` CSV; skips training.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Profile-level classification and binder discovery.
    Discover {
        /// Labelled sequences with profile ids.
        #[arg(long)]
        profiles: PathBuf,
        /// Known binders, one CDR-H3 per line.
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        trim: Option<f64>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Germline usage and mutation count tests between classes.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "kruskal-wallis")]
        test: TestArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare autograd with finite differences for each pretraining loss.
    Gradcheck {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Render curves from reports or curve CSVs as SVG.
    Plot {
        /// `report.json` or curve CSV files.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long, default_value = "curves")]
        title: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Binding,
    Paratope,
    Bcell,
}

impl TaskArg {
    fn kind(self) -> TaskKind {
        match self {
            TaskArg::Binding => TaskKind::Binding,
            TaskArg::Paratope => TaskKind::Paratope,
            TaskArg::Bcell => TaskKind::Bcell,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    KruskalWallis,
    Welch,
}

struct Settings {
    kv: KvConfig,
    seed: u64,
    config: Option<PathBuf>,
}

impl Settings {
    fn resolve(common: &Common, base: Option<&Path>) -> Result<Settings> {
        let path = common.config.as_deref().or(base);
        let mut kv = match path {
            Some(p) => KvConfig::load(p)?,
            None => KvConfig::default(),
        };
        for pair in &common.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::config(format!("--set expects KEY=VALUE, got '{pair}'")))?;
            kv.set(k.trim(), v.trim());
        }
        let known: Vec<&str> =
            [SPEC_KEYS, MODEL_KEYS, TRAIN_KEYS, TASK_KEYS, EXTRA_KEYS, &["library", "threads"]].concat();
        kv.ensure_known(&known)?;
        let env_seed = match std::env::var("SEED") {
            Ok(s) => Some(s.trim().parse::<u64>().map_err(|_| Error::config(format!("SEED '{s}' is not an integer")))?),
            Err(_) => None,
        };
        let seed = match common.seed.or(env_seed) {
            Some(s) => s,
            None => kv.get_or("seed", 0u64)?,
        };
        kv.set("seed", seed);
        Ok(Settings { kv, seed, config: path.map(Path::to_path_buf) })
    }

    fn model_config(&self) -> Result<ModelConfig> {
        let mut m = ModelConfig::default();
        m.apply_kv(&self.kv)?;
        Ok(m)
    }

    fn train_config(&self) -> Result<TrainConfig> {
        let mut t = TrainConfig::default();
        t.apply_kv(&self.kv)?;
        Ok(t)
    }

    fn task_config(&self) -> Result<TaskConfig> {
        let mut t = TaskConfig { seed: self.seed, ..TaskConfig::default() };
        t.apply_kv(&self.kv)?;
        Ok(t)
    }

    fn manifest(&self, subcommand: &str) -> RunManifest {
        RunManifest::new(subcommand, self.config.as_deref(), self.seed, self.kv.render())
    }
}

fn set_threads(common: &Common) -> Result<()> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(e.to_string()))?;
    }
    Ok(())
}

fn base_model(checkpoint: Option<&Path>, settings: &Settings) -> Result<Transformer> {
    match checkpoint {
        Some(p) => Checkpoint::load(p)?.model(),
        None => Transformer::new(settings.model_config()?),
    }
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>, m: &mut RunManifest) -> Result<()> {
    std::fs::write(dir.join(name), bytes)?;
    m.outputs.push(name.to_string());
    Ok(())
}

fn write_report(report: &EvalReport, dir: &Path, m: &mut RunManifest) -> Result<()> {
    m.outputs.extend(report.write_dir(dir)?);
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { spec, out, common } => {
            set_threads(&common)?;
            let s = Settings::resolve(&common, spec.as_deref())?;
            let (spec, lib_cfg, lib_seed) = RepertoireSpec::from_kv(&s.kv)?;
            let lib = GeneLibrary::generate(&lib_cfg, lib_seed)?;
            let records = generate_repertoire(&spec, &lib)?;
            let (dir, file) = if out.extension().is_some_and(|e| e == "csv") {
                let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
                let file = out.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
                (dir, file)
            } else {
                (out, "repertoire.csv".to_string())
            };
            std::fs::create_dir_all(&dir)?;
            let mut m = s.manifest("simulate");
            corpus::save_csv(&dir.join(&file), &records)?;
            m.outputs.push(file.clone());
            let stem = file.trim_end_matches(".csv");
            let manifest_name = if stem == "repertoire" { "manifest.json".to_string() } else { format!("{stem}.manifest.json") };
            eprintln!("simulated {} sequences", records.len());
            m.write(&dir, &manifest_name)
        }
        Command::Preprocess { input, identity, chunk_size, out, common } => {
            set_threads(&common)?;
            let mut s = Settings::resolve(&common, None)?;
            if let Some(v) = identity {
                s.kv.set("identity", v);
            }
            if let Some(v) = chunk_size {
                s.kv.set("chunk_size", v);
            }
            let threshold = s.kv.get_or("identity", DEFAULT_IDENTITY)?;
            let size = s.kv.get_or("chunk_size", DEFAULT_CHUNK_SIZE)?;
            let mut m = s.manifest("preprocess");
            m.inputs.push(input.display().to_string());
            let records = corpus::load_records(&input)?;
            let n_in = records.len();
            let unique = corpus::dedup(records);
            let n_unique = unique.len();
            let kept = corpus::cluster_filter(unique, threshold)?;
            let n_kept = kept.len();
            let chunked = corpus::shuffle_and_chunk(kept, size, s.seed)?;
            std::fs::create_dir_all(&out)?;
            m.outputs.extend(corpus::write_chunks(&out, &chunked)?);
            for w in &chunked.warnings {
                eprintln!("warning: {w}");
            }
            let summary = serde_json::json!({
                "input": n_in,
                "after_dedup": n_unique,
                "after_cluster_filter": n_kept,
                "identity": threshold,
                "chunk_size": size,
                "chunks": chunked.chunks.len(),
                "warnings": chunked.warnings,
            });
            write(&out, "summary.json", format!("{}\n", serde_json::to_string_pretty(&summary)?), &mut m)?;
            m.write(&out, "manifest.json")
        }
        Command::Pretrain { corpus: path, out, common } => {
            set_threads(&common)?;
            let s = Settings::resolve(&common, None)?;
            let model_cfg = s.model_config()?;
            let cfg = s.train_config()?;
            let mut m = s.manifest("pretrain");
            m.inputs.push(path.display().to_string());
            let chunked: ChunkedCorpus = if path.is_dir() {
                corpus::read_chunks(&path)?
            } else {
                let size = s.kv.get_or("chunk_size", DEFAULT_CHUNK_SIZE)?;
                corpus::shuffle_and_chunk(corpus::load_records(&path)?, size, s.seed)?
            };
            let result = train::pretrain(&chunked, &model_cfg, &cfg)?;
            for w in result.warnings.iter().chain(&chunked.warnings) {
                eprintln!("warning: {w}");
            }
            std::fs::create_dir_all(&out)?;
            write(&out, "mlm_checkpoint.bin", result.mlm_checkpoint.to_bytes(cfg.dtype)?, &mut m)?;
            write(&out, "checkpoint.bin", result.checkpoint.to_bytes(cfg.dtype)?, &mut m)?;
            let mut log = Vec::new();
            train::write_log_csv(&mut log, &result.log)?;
            write(&out, "log.csv", log, &mut m)?;
            if let Some(last) = result.log.last() {
                write(&out, "diagnostics.json", format!("{}\n", serde_json::to_string_pretty(last)?), &mut m)?;
            }
            m.write(&out, "manifest.json")
        }
        Command::Finetune { task, data, checkpoint, out, common } => {
            set_threads(&common)?;
            let s = Settings::resolve(&common, None)?;
            let cfg = s.train_config()?;
            let mut m = s.manifest("finetune");
            m.inputs.push(data.display().to_string());
            m.inputs.extend(checkpoint.iter().map(|p| p.display().to_string()));
            let base = base_model(checkpoint.as_deref(), &s)?;
            let records = corpus::load_records(&data)?;
            let spec = TaskSpec::new(task.kind());
            let examples = tasks::task_examples(task.kind(), &records, base.config.max_len)?;
            let (fit, stop) = tasks::holdout_split(&records, s.seed)?;
            let pick = |idx: &[usize]| idx.iter().map(|&i| examples[i].clone()).collect::<Vec<_>>();
            let result = train::finetune(base, spec.head, &pick(&fit), &pick(&stop), &cfg)?;
            std::fs::create_dir_all(&out)?;
            let ck = Checkpoint::from_model(&result.model, None, result.history.len() as u64, Some(spec.head));
            write(&out, "model.bin", ck.to_bytes(cfg.dtype)?, &mut m)?;
            let history = serde_json::json!({ "best_epoch": result.best_epoch, "epochs": result.history });
            write(&out, "history.json", format!("{}\n", serde_json::to_string_pretty(&history)?), &mut m)?;
            m.write(&out, "manifest.json")
        }
        Command::Evaluate { task, data, checkpoint, split, scores, out, common } => {
            set_threads(&common)?;
            let s = Settings::resolve(&common, None)?;
            let train_cfg = s.train_config()?;
            let task_cfg = s.task_config()?;
            let mut m = s.manifest("evaluate");
            m.inputs.extend([Some(&data), checkpoint.as_ref(), split.as_ref(), scores.as_ref()].into_iter().flatten().map(|p| p.display().to_string()));
            let records = corpus::load_records(&data)?;
            let external = scores.as_deref().map(tasks::read_scores_csv).transpose()?;
            if external.is_some() && !matches!(task, TaskArg::Binding) {
                return Err(Error::config("external scores apply to sequence-level binary tasks only"));
            }
            let split = split.as_deref().map(tasks::read_split_csv).transpose()?;
            let base = base_model(checkpoint.as_deref(), &s)?;
            let report = match task {
                TaskArg::Binding => tasks::run_binding(&records, &base, &train_cfg, &task_cfg, split.as_ref(), external.as_ref())?,
                TaskArg::Paratope => tasks::run_paratope(&records, &base, &train_cfg, &task_cfg)?,
                TaskArg::Bcell => tasks::run_bcell(&records, &base, &train_cfg, &task_cfg)?,
            };
            write_report(&report, &out, &mut m)?;
            m.write(&out, "manifest.json")
        }
        Command::Discover { profiles, db, trim, checkpoint, scores, out, common } => {
            set_threads(&common)?;
            let mut s = Settings::resolve(&common, None)?;
            if let Some(t) = trim {
                s.kv.set("trim", t);
            }
            let train_cfg = s.train_config()?;
            let task_cfg = s.task_config()?;
            let mut m = s.manifest("discover");
            m.inputs.extend([Some(&profiles), Some(&db), checkpoint.as_ref(), scores.as_ref()].into_iter().flatten().map(|p| p.display().to_string()));
            let records = corpus::load_records(&profiles)?;
            let binders = read_binder_db(&std::fs::read_to_string(&db)?)?;
            let external = scores.as_deref().map(tasks::read_scores_csv).transpose()?;
            let base = base_model(checkpoint.as_deref(), &s)?;
            let result = tasks::run_discovery(&records, &base, &train_cfg, &task_cfg, &binders, external.as_ref())?;
            write_report(&result.report, &out, &mut m)?;
            let mut ranked = Vec::new();
            tasks::write_ranked_csv(&mut ranked, &result.ranked)?;
            write(&out, "ranked.csv", ranked, &mut m)?;
            m.write(&out, "manifest.json")
        }
        Command::Stats { input, test, out, common } => {
            set_threads(&common)?;
            let s = Settings::resolve(&common, None)?;
            let mut m = s.manifest("stats");
            m.inputs.push(input.display().to_string());
            let records = corpus::load_records(&input)?;
            let test = match test {
                TestArg::KruskalWallis => MutationTest::KruskalWallis,
                TestArg::Welch => MutationTest::WelchT,
            };
            let report = specificity_report(&records, test)?;
            std::fs::create_dir_all(&out)?;
            write(&out, "stats.json", format!("{}\n", serde_json::to_string_pretty(&report)?), &mut m)?;
            m.write(&out, "manifest.json")
        }
        Command::Gradcheck { samples, out, common } => {
            set_threads(&common)?;
            let mut s = Settings::resolve(&common, None)?;
            if let Some(n) = samples {
                s.kv.set("samples", n);
            }
            let mut model_cfg = ModelConfig::tiny();
            model_cfg.apply_kv(&s.kv)?;
            let n = s.kv.get_or("samples", 200usize)?;
            let reports = check_pretraining_heads(&model_cfg, n, s.seed)?;
            let mut worst: f64 = 0.0;
            for r in &reports {
                println!("{}\tchecked {}\tmax relative error {:.3e}", r.objective, r.checked, r.max_rel_error);
                worst = worst.max(r.max_rel_error);
            }
            println!("max relative error {worst:.3e}");
            if let Some(out) = out {
                std::fs::create_dir_all(&out)?;
                let mut m = s.manifest("gradcheck");
                write(&out, "gradcheck.json", format!("{}\n", serde_json::to_string_pretty(&reports)?), &mut m)?;
                m.write(&out, "manifest.json")?;
            }
            if worst.is_finite() && worst < GRADCHECK_TOLERANCE {
                Ok(())
            } else {
                Err(Error::Numeric(format!("max relative error {worst:.3e} is not below {GRADCHECK_TOLERANCE:e}")))
            }
        }
        Command::Plot { input, title, out, common } => {
            set_threads(&common)?;
            let s = Settings::resolve(&common, None)?;
            let mut m = s.manifest("plot");
            let mut series: Vec<(String, Curve)> = Vec::new();
            for p in &input {
                m.inputs.push(p.display().to_string());
                if p.extension().is_some_and(|e| e == "json") {
                    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(p)?)?;
                    series.extend(report.curves);
                } else {
                    let name = p.file_stem().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
                    series.push((name.trim_start_matches("curve_").to_string(), Curve::read_csv(std::fs::File::open(p)?)?));
                }
            }
            if series.is_empty() {
                return Err(Error::input("no curves to plot"));
            }
            let refs: Vec<(&str, &Curve)> = series.iter().map(|(n, c)| (n.as_str(), c)).collect();
            std::fs::create_dir_all(&out)?;
            write(&out, "curves.svg", line_chart(&title, &refs), &mut m)?;
            m.write(&out, "manifest.json")
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else if matches!(e, Error::Config(_)) {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
