use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Serialize};
use serde_json::json;

use clinproj::constraints::var_index;
use clinproj::preprocess::{inverse_transform, SubPatient};
use clinproj::projection::TrustStats;
use clinproj::psv;
use clinproj_cli::config::RunConfig;
use clinproj_cli::run::{self, Failure, Manifest, Setup};
use clinproj_ml::metrics::{evaluate, sofa_baseline};
use clinproj_ml::prepare::PreparedWindow;
use clinproj_ml::split::Split;
use clinproj_ml::{PipelineModel, WindowInput};

#[derive(Parser)]
#[command(name = "clinproj", version, about = "Project clinical windows onto physical constraints and predict sepsis")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(long, global = true)]
    stride: Option<usize>,
    #[arg(long, global = true)]
    clusters: Option<usize>,
    #[arg(long, global = true)]
    gap_tol: Option<f64>,
    #[arg(long, global = true)]
    node_budget: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a corrupted synthetic cohort as PSV files plus its corruption mask.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        patients: Option<usize>,
    },
    /// Impute and window PSV records into sub-patients (JSON).
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Project sub-patients onto the physical set (JSON).
    Project {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Export corrected windows with trust and physical-distance columns (PSV).
    Trust {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Split by patient and train on the training part; writes model.json and split.json.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Train without trust features (ablation).
        #[arg(long)]
        no_trust: bool,
    },
    /// Predict every window (PSV).
    Predict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Metrics on the held-out patients (all windows when no split.json sits next to the model).
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Add the SOFA >= 2 baseline row.
        #[arg(long)]
        sofa_baseline: bool,
    },
    /// Synthesize (or ingest) through evaluation, with and without trust features.
    E2e {
        /// Directory of PSV records; a synthetic cohort when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.window {
        cfg.window = v;
    }
    if let Some(v) = common.stride {
        cfg.stride = v;
    }
    if let Some(v) = common.clusters {
        cfg.ml.k = v;
    }
    if let Some(v) = common.gap_tol {
        cfg.solver.gap_tol = v;
    }
    if let Some(v) = common.node_budget {
        cfg.solver.node_budget = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).context(Failure::Io)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).context(Failure::Io)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).context(Failure::Io)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display())).context(Failure::Io)
}

fn emit<T: Serialize>(value: &T, output: Option<&Path>) -> Result<()> {
    let text = run::to_json(value);
    match output {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Windows file, projected or not.
enum Windows {
    Plain(Vec<SubPatient>),
    Projected(Vec<PreparedWindow>),
}

fn read_windows(path: &Path) -> Result<Windows> {
    let value: serde_json::Value = read_json(path)?;
    if let Ok(p) = serde_json::from_value::<Vec<PreparedWindow>>(value.clone()) {
        return Ok(Windows::Projected(p));
    }
    serde_json::from_value::<Vec<SubPatient>>(value)
        .map(Windows::Plain)
        .with_context(|| format!("{} holds neither windows nor projected windows", path.display()))
        .context(Failure::Io)
}

fn model_inputs(windows: Windows, with_trust: bool) -> Result<Vec<WindowInput>> {
    match windows {
        Windows::Projected(p) => Ok(p
            .into_iter()
            .map(|w| {
                let mut input = w.input;
                if !with_trust {
                    input.norm_dist = None;
                }
                input
            })
            .collect()),
        Windows::Plain(_) if with_trust => {
            Err(anyhow::anyhow!("trust features need projected windows; run `project` first").context(Failure::Io))
        }
        Windows::Plain(sp) => Ok(run::plain_inputs(&sp)),
    }
}

fn cmd_synth(cfg: &RunConfig, output: &Path, patients: Option<usize>) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(n) = patients {
        cfg.synth.n_patients = n;
    }
    let setup = Setup::new(&cfg)?;
    let (records, masks) = run::synth(&cfg, &setup)?;
    std::fs::create_dir_all(output).with_context(|| format!("creating {}", output.display())).context(Failure::Io)?;
    for r in &records {
        psv::write_record(&output.join(format!("{}.psv", r.patient_id)), r, &setup.registry).context(Failure::Io)?;
    }
    write_text(&output.join("mask.json"), &run::to_json(&masks))?;
    emit(
        &json!({
            "manifest": Manifest::new(&cfg, &setup),
            "patients": records.len(),
            "septic_patients": records.iter().filter(|r| r.is_septic()).count(),
            "corrupted_cells": masks.values().map(Vec::len).sum::<usize>(),
        }),
        None,
    )
}

fn cmd_preprocess(cfg: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let setup = Setup::new(cfg)?;
    let records = run::load_records(input, &setup)?;
    let windows = run::windows_of(&records, cfg, &setup)?;
    write_text(output, &run::to_json(&windows))?;
    emit(
        &json!({
            "manifest": Manifest::new(cfg, &setup),
            "patients": records.len(),
            "missing_cells": records.iter().map(|r| r.missing_cells()).sum::<usize>(),
            "windows": windows.len(),
            "positive_windows": windows.iter().filter(|w| w.label == 1).count(),
        }),
        None,
    )
}

fn cmd_project(cfg: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let setup = Setup::new(cfg)?;
    let windows: Vec<SubPatient> = read_json(input)?;
    let projected = run::project_windows(windows.clone(), cfg, &setup)?;
    let summary = run::summarize_projection(&projected, &windows);
    write_text(output, &run::to_json(&projected))?;
    emit(&json!({ "manifest": Manifest::new(cfg, &setup), "projection": summary }), None)
}

fn cmd_trust(cfg: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let setup = Setup::new(cfg)?;
    let projected: Vec<PreparedWindow> = read_json(input)?;
    let reg = &setup.registry;
    let dists = projected
        .iter()
        .map(|w| w.input.norm_dist.clone().ok_or_else(|| anyhow::anyhow!("window {} was not projected", w.input.sub_id)))
        .collect::<Result<Vec<_>>>()
        .context(Failure::Io)?;
    let stats = TrustStats::fit(&dists);
    let mut header = vec!["SubId".to_string(), "PatientId".into(), "WindowStart".into(), psv::LABEL_COLUMN.into()];
    for name in reg.names() {
        header.extend((0..cfg.window).map(|t| format!("{name}_t{t}")));
    }
    header.extend(reg.names().map(|n| format!("{n}_trust")));
    header.extend(reg.names().map(|n| format!("{n}_physdist")));
    let mut text = header.join("|");
    text.push('\n');
    for (w, d) in projected.iter().zip(&dists) {
        let p = w.projection.as_ref().context("projection result missing").context(Failure::Io)?;
        let mut cells = vec![
            w.input.sub_id.clone(),
            w.input.patient_id.clone(),
            w.input.window_start.to_string(),
            w.input.label.to_string(),
        ];
        for (v, spec) in reg.specs().iter().enumerate() {
            for t in 0..cfg.window {
                cells.push(psv::format_value(inverse_transform(spec, w.input.values[var_index(v, t, cfg.window)])));
            }
        }
        cells.extend(stats.apply(d).into_iter().map(psv::format_value));
        cells.extend(p.phys_dist.iter().map(|&x| psv::format_value(x)));
        let _ = writeln!(text, "{}", cells.join("|"));
    }
    write_text(output, &text)?;
    emit(&json!({ "manifest": Manifest::new(cfg, &setup), "windows": projected.len(), "trust_stats": stats }), None)
}

fn cmd_train(cfg: &RunConfig, input: &Path, output: &Path, no_trust: bool) -> Result<()> {
    let setup = Setup::new(cfg)?;
    let inputs = model_inputs(read_windows(input)?, !no_trust)?;
    let split = run::split_inputs(&inputs, cfg)?;
    let model = run::train(&run::select(&inputs, &split.train), setup.layout(cfg, !no_trust), cfg, &setup)?;
    write_text(&output.join("model.json"), &model.to_json())?;
    write_text(&output.join("split.json"), &run::to_json(&split))?;
    emit(
        &json!({
            "manifest": Manifest::new(cfg, &setup),
            "model_hash": model.model_hash(),
            "manifest_hash": model.manifest_hash(),
            "train_windows": split.train.len(),
            "train_patients": split.train_patients.len(),
            "fallback_clusters": model.manifest.fallback_clusters,
        }),
        None,
    )
}

fn load_model(path: &Path, setup: &Setup) -> Result<PipelineModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).context(Failure::Io)?;
    let model = PipelineModel::from_json(&text).context(Failure::Io)?;
    if model.registry_fingerprint != setup.registry.fingerprint() {
        bail!(anyhow::anyhow!("model was trained against a different vital registry").context(Failure::Io));
    }
    Ok(model)
}

fn cmd_predict(cfg: &RunConfig, input: &Path, model_path: &Path, output: &Path) -> Result<()> {
    let setup = Setup::new(cfg)?;
    let model = load_model(model_path, &setup)?;
    let inputs = model_inputs(read_windows(input)?, model.layout().with_trust)?;
    let preds = run::predict_all(&model, &inputs)?;
    let mut text = String::from("SubId|PatientId|WindowStart|Probability|Prediction\n");
    for (w, (p, l)) in inputs.iter().zip(&preds) {
        let _ = writeln!(text, "{}|{}|{}|{}|{}", w.sub_id, w.patient_id, w.window_start, psv::format_value(*p), l);
    }
    write_text(output, &text)?;
    emit(&json!({ "manifest": Manifest::new(cfg, &setup), "windows": inputs.len(), "model_hash": model.model_hash() }), None)
}

fn cmd_eval(cfg: &RunConfig, input: &Path, model_path: &Path, output: Option<&Path>, sofa: bool) -> Result<()> {
    let setup = Setup::new(cfg)?;
    let model = load_model(model_path, &setup)?;
    let mut inputs = model_inputs(read_windows(input)?, model.layout().with_trust)?;
    let split_path = model_path.with_file_name("split.json");
    let scope = if split_path.exists() {
        let split: Split = read_json(&split_path)?;
        let test: BTreeSet<&String> = split.test_patients.iter().collect();
        inputs.retain(|w| test.contains(&w.patient_id));
        "test_patients"
    } else {
        "all_windows"
    };
    let preds = run::predict_all(&model, &inputs)?;
    let probs: Vec<f64> = preds.iter().map(|p| p.0).collect();
    let labels: Vec<u8> = preds.iter().map(|p| p.1).collect();
    let truth: Vec<u8> = inputs.iter().map(|w| w.label).collect();
    let mut rows = BTreeMap::new();
    rows.insert("model", evaluate(&probs, &labels, &truth).context(Failure::Training)?);
    if sofa {
        let s: Vec<u32> = inputs.iter().map(|w| w.sofa).collect();
        rows.insert("sofa_baseline", sofa_baseline(&s, &truth).context(Failure::Training)?);
    }
    emit(
        &json!({
            "manifest": Manifest::new(cfg, &setup),
            "model_hash": model.model_hash(),
            "scope": scope,
            "windows": inputs.len(),
            "metrics": rows,
        }),
        output,
    )
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = config(&cli.common)?;
    match cli.command {
        Command::Synth { output, patients } => cmd_synth(&cfg, &output, patients),
        Command::Preprocess { input, output } => cmd_preprocess(&cfg, &input, &output),
        Command::Project { input, output } => cmd_project(&cfg, &input, &output),
        Command::Trust { input, output } => cmd_trust(&cfg, &input, &output),
        Command::Train { input, output, no_trust } => cmd_train(&cfg, &input, &output, no_trust),
        Command::Predict { input, model, output } => cmd_predict(&cfg, &input, &model, &output),
        Command::Eval { input, model, output, sofa_baseline } => {
            cmd_eval(&cfg, &input, &model, output.as_deref(), sofa_baseline)
        }
        Command::E2e { input, output } => {
            let report = run::e2e(&cfg, input.as_deref())?;
            emit(&report, output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // Unclassified errors come from configuration or flags.
            ExitCode::from(e.downcast_ref::<Failure>().map_or(1, |f| f.exit_code()))
        }
    }
}
