//! Command-line driver: synthetic instance generation, learning runs,
//! evaluation, and experiment sweeps with reproducible seeds.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use privmix::dp::{BudgetLedger, PrivacyParams};
use privmix::eval::{clustering_accuracy, laminarity, learning_verdict, TvOptions};
use privmix::learn::{
    nonprivate_spectral_learner, pegme, pgme, sample_aggregate, LearnReport, LearnStatus,
    PartitionConfig, PegmeParams,
};
use privmix::model::{
    check_condition_numpoints, check_condition_radius, check_condition_separation,
    check_flatness, model_from_json, model_to_json, planted_instance, read_dataset_csv,
    write_dataset_csv, AccuracyParams, LabelledDataset, MixtureModel, ModelJson, PlantedSpec,
};
use privmix::rng::stage_rng;

use config::{Algorithm, GenerateConfig, LearnConfig, SweepConfig};
use report::{build_report, EvalReportJson, LearnReportJson};

#[derive(Parser)]
#[command(name = "privmix", about = "Differentially private Gaussian mixture learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted instance: model JSON + dataset CSV.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a learner on a dataset and write a report JSON.
    Learn {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Bypass all mechanism noise (flagged in the ledger).
        #[arg(long)]
        zero_noise: bool,
    },
    /// Evaluate a learned report against a ground-truth model.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a sweep: generate + learn + eval per (axis point, seed).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate { config, seed, out } => cmd_generate(&config, seed, &out),
        Command::Learn {
            config,
            data,
            seed,
            out,
            zero_noise,
        } => cmd_learn(&config, &data, seed, &out, zero_noise),
        Command::Eval { truth, report, out } => cmd_eval(&truth, &report, &out),
        Command::Sweep { config, out } => cmd_sweep(&config, &out),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

const EXIT_USAGE: u8 = 2;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn cmd_generate(config: &Path, seed: Option<u64>, out: &Path) -> anyhow::Result<ExitCode> {
    let cfg: GenerateConfig = match read_json(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(ExitCode::from(EXIT_USAGE));
        }
    };
    let seed = seed.unwrap_or(cfg.seed);
    let (model, ds) = generate_instance(&cfg, seed)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("model.json"), &model_to_json(&model))?;
    let file = fs::File::create(out.join("data.csv"))?;
    write_dataset_csv(&ds, file)?;
    print_checker_summary(&model, &ds, &cfg);
    println!(
        "wrote {}/model.json and {}/data.csv",
        out.display(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn generate_instance(
    cfg: &GenerateConfig,
    seed: u64,
) -> anyhow::Result<(MixtureModel, LabelledDataset)> {
    let spec = PlantedSpec {
        k: cfg.k,
        d: cfg.d,
        n: cfg.n,
        spherical: cfg.spherical,
        separation_multiplier: cfg.separation_multiplier,
        weights: cfg.weights.clone(),
    };
    let mut rng = stage_rng(seed, "generate");
    planted_instance(&cfg.bounds, &spec, &mut rng).map_err(|e| anyhow!("{e}"))
}

fn print_checker_summary(model: &MixtureModel, ds: &LabelledDataset, cfg: &GenerateConfig) {
    let weights = model.weights();
    if let Ok(report) = check_condition_numpoints(ds, &weights, 0.2) {
        println!("condition numpoints: all_pass={}", report.all_pass);
    }
    if model.is_spherical() {
        if let Ok(checks) = check_condition_radius(ds, model) {
            let pass = checks.iter().flatten().all(|c| c.pass_lower && c.pass_upper);
            println!("condition radius: all_pass={pass}");
        }
        if let Ok(pass) = check_condition_separation(ds, model, cfg.bounds.separation) {
            println!("condition separation: pass={pass}");
        }
    }
    let flat = check_flatness(model, ds.n(), model.k(), 0.05);
    println!("flatness: all_pass={}", flat.iter().all(|f| f.pass()));
}

fn effective_pp(cfg: &LearnConfig, zero_noise: bool) -> anyhow::Result<PrivacyParams> {
    if zero_noise || cfg.zero_noise {
        Ok(PrivacyParams::non_private())
    } else {
        PrivacyParams::new(cfg.epsilon, cfg.delta).map_err(|e| anyhow!("{e}"))
    }
}

fn run_learner(
    cfg: &LearnConfig,
    ds: &LabelledDataset,
    seed: u64,
    zero_noise: bool,
) -> anyhow::Result<(LearnReport, BudgetLedger)> {
    let pp = effective_pp(cfg, zero_noise)?;
    let mut ledger = BudgetLedger::new();
    let mut rng = stage_rng(seed, "learn");
    let report = match cfg.algorithm {
        Algorithm::Pegme => {
            let params = PegmeParams {
                k: cfg.k,
                kappa: cfg.bounds.kappa,
                sigma_min: cfg.bounds.sigma_min,
                mean_radius: Some(cfg.bounds.mean_radius),
                alpha: cfg.alpha,
                beta: cfg.beta,
                backend: cfg.backend.to_backend(),
            };
            pegme(&ds.points, &params, pp, &mut ledger, &mut rng)
        }
        Algorithm::Pgme => {
            let pc = PartitionConfig {
                beta: cfg.beta,
                backend: cfg.backend.to_backend(),
            };
            pgme(&ds.points, cfg.k, &cfg.bounds, pp, &pc, &mut ledger, &mut rng)
        }
        Algorithm::SampleAggregate => sample_aggregate(
            &ds.points,
            cfg.batches,
            nonprivate_spectral_learner,
            cfg.k,
            &cfg.bounds,
            pp,
            cfg.alpha,
            &mut ledger,
            &mut rng,
        )
        .map(|outcome| {
            let status = if outcome.found == cfg.k {
                LearnStatus::Ok
            } else if outcome.model.is_some() {
                LearnStatus::Partial
            } else {
                LearnStatus::Abstained
            };
            LearnReport {
                status,
                model: outcome.model,
                privacy_total: pp,
                realized_levels: 1,
                cluster_sizes: vec![],
                omitted: 0,
                partition: None,
                node_diagnostics: vec![],
                warnings: outcome.warnings,
            }
        }),
    }
    .map_err(|e| anyhow!("{e}"))?;
    Ok((report, ledger))
}

fn cmd_learn(
    config: &Path,
    data: &Path,
    seed: Option<u64>,
    out: &Path,
    zero_noise: bool,
) -> anyhow::Result<ExitCode> {
    let cfg: LearnConfig = match read_json(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(ExitCode::from(EXIT_USAGE));
        }
    };
    let file = match fs::File::open(data) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: opening {}: {e}", data.display());
            return Ok(ExitCode::from(EXIT_USAGE));
        }
    };
    let ds = match read_dataset_csv(file) {
        Ok(ds) => ds,
        Err(e) => {
            eprintln!("error: parsing {}: {e}", data.display());
            return Ok(ExitCode::from(EXIT_USAGE));
        }
    };
    let seed = seed.unwrap_or(cfg.seed);
    let start = Instant::now();
    let (learn_report, ledger) = run_learner(&cfg, &ds, seed, zero_noise)?;
    let wall = start.elapsed().as_millis() as u64;

    let (laminar, accuracy) = partition_audits(&cfg, &learn_report, &ds);
    let json = build_report(&learn_report, &cfg, seed, &ledger, laminar, accuracy, wall);
    fs::create_dir_all(out)?;
    write_json(&out.join("report.json"), &json)?;
    println!(
        "status: {}",
        match learn_report.status {
            LearnStatus::Ok => "ok",
            LearnStatus::Abstained => "abstained",
            LearnStatus::Partial => "partial",
        }
    );
    println!("wrote {}/report.json", out.display());
    Ok(ExitCode::SUCCESS)
}

fn partition_audits(
    cfg: &LearnConfig,
    report: &LearnReport,
    ds: &LabelledDataset,
) -> (Option<bool>, Option<f64>) {
    let (Some(partition), Ok(labels)) = (&report.partition, ds.labels()) else {
        return (None, None);
    };
    let laminar = laminarity(partition, labels, cfg.k, cfg.bounds.w_min, cfg.alpha)
        .ok()
        .map(|r| r.laminar && r.pure);
    let accuracy = clustering_accuracy(partition, labels, cfg.k).ok();
    (laminar, accuracy)
}

fn cmd_eval(truth: &Path, report: &Path, out: &Path) -> anyhow::Result<ExitCode> {
    let truth_json: ModelJson = match read_json(truth) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(ExitCode::from(EXIT_USAGE));
        }
    };
    let report_json: LearnReportJson = match read_json(report) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(ExitCode::from(EXIT_USAGE));
        }
    };
    let truth_model = model_from_json(&truth_json).map_err(|e| anyhow!("{e}"))?;
    let Some(est_json) = &report_json.model else {
        eprintln!("report has no model (status: abstained)");
        return Ok(ExitCode::SUCCESS);
    };
    let est = model_from_json(est_json).map_err(|e| anyhow!("{e}"))?;
    if est.k() != truth_model.k() {
        eprintln!(
            "error: k mismatch: truth {} vs learned {}",
            truth_model.k(),
            est.k()
        );
        return Ok(ExitCode::from(EXIT_USAGE));
    }
    let acc = AccuracyParams::new(report_json.config.alpha, report_json.config.beta)
        .map_err(|e| anyhow!("{e}"))?;
    let start = Instant::now();
    let mut rng = stage_rng(report_json.seed, "eval");
    let mut result = learning_verdict(
        &truth_model,
        &est,
        &acc,
        &TvOptions { mc_samples: 200_000 },
        &mut rng,
    )
    .map_err(|e| anyhow!("{e}"))?;
    result.laminar = report_json.laminar;
    result.clustering_accuracy = report_json.clustering_accuracy;
    let wall = start.elapsed().as_millis() as u64;
    fs::create_dir_all(out)?;
    write_json(
        &out.join("eval.json"),
        &EvalReportJson {
            result: result.clone(),
            alpha: acc.alpha,
            wall_clock_ms: wall,
        },
    )?;
    append_summary_row(&out.join("summary.csv"), &report_json, &result)?;
    println!(
        "verdict: pass={} mixture_tv_upper={:.4}",
        result.pass, result.mixture_tv_upper
    );
    Ok(ExitCode::SUCCESS)
}

fn append_summary_row(
    path: &Path,
    report: &LearnReportJson,
    result: &privmix::eval::EvalResult,
) -> anyhow::Result<()> {
    let header = "seed,algorithm,k,epsilon,non_private,status,pass,max_tv,max_weight_err,mixture_tv_upper,laminar,clustering_accuracy\n";
    let mut text = String::new();
    if !path.exists() {
        text.push_str(header);
    }
    let max_tv = result.per_component_tv.iter().cloned().fold(0.0f64, f64::max);
    let max_w = result.weight_errors.iter().cloned().fold(0.0f64, f64::max);
    text.push_str(&format!(
        "{},{:?},{},{},{},{:?},{},{},{},{},{},{}\n",
        report.seed,
        report.config.algorithm,
        report.config.k,
        report.config.epsilon,
        report.non_private,
        report.status,
        result.pass,
        max_tv,
        max_w,
        result.mixture_tv_upper,
        report.laminar.map_or(String::new(), |l| l.to_string()),
        report
            .clustering_accuracy
            .map_or(String::new(), |a| a.to_string()),
    ));
    use std::io::Write;
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

fn cmd_sweep(config: &Path, out: &Path) -> anyhow::Result<ExitCode> {
    let cfg: SweepConfig = match read_json(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(ExitCode::from(EXIT_USAGE));
        }
    };
    fs::create_dir_all(out)?;
    let points = cfg.axes.points();
    let mut runs = Vec::new();
    for (pi, point) in points.iter().enumerate() {
        for &seed in &cfg.seeds {
            runs.push((pi, *point, seed));
        }
    }
    let summary = Mutex::new(String::from(
        "run,seed,algorithm,k,d,n,epsilon,sep_mult,status,pass,max_tv,mixture_tv_upper,laminar\n",
    ));
    let results: Vec<anyhow::Result<()>> = runs
        .par_iter()
        .map(|&(pi, point, seed)| {
            let mut gen = cfg.generate.clone();
            let mut learn = cfg.learn.clone();
            if let Some(e) = point.epsilon {
                learn.epsilon = e;
            }
            if let Some(n) = point.n {
                gen.n = n;
            }
            if let Some(d) = point.d {
                gen.d = d;
            }
            if let Some(k) = point.k {
                gen.k = k;
                learn.k = k;
            }
            if let Some(s) = point.separation_multiplier {
                gen.separation_multiplier = s;
            }
            let run_id = format!("p{pi}_s{seed}");
            let (model, ds) = generate_instance(&gen, seed)?;
            let start = Instant::now();
            let (learn_report, ledger) = run_learner(&learn, &ds, seed, false)?;
            let wall = start.elapsed().as_millis() as u64;
            let (laminar, accuracy) = partition_audits(&learn, &learn_report, &ds);
            let json = build_report(&learn_report, &learn, seed, &ledger, laminar, accuracy, wall);
            write_json(&out.join(format!("report_{run_id}.json")), &json)?;

            let mut row = format!(
                "{run_id},{seed},{:?},{},{},{},{},{},{:?}",
                learn.algorithm,
                learn.k,
                gen.d,
                gen.n,
                learn.epsilon,
                gen.separation_multiplier,
                learn_report.status
            );
            match &learn_report.model {
                Some(est) if est.k() == model.k() => {
                    let acc = AccuracyParams::new(learn.alpha, learn.beta)
                        .map_err(|e| anyhow!("{e}"))?;
                    let mut rng = stage_rng(seed, "eval");
                    let result = learning_verdict(
                        &model,
                        est,
                        &acc,
                        &TvOptions { mc_samples: 100_000 },
                        &mut rng,
                    )
                    .map_err(|e| anyhow!("{e}"))?;
                    let max_tv = result
                        .per_component_tv
                        .iter()
                        .cloned()
                        .fold(0.0f64, f64::max);
                    row.push_str(&format!(
                        ",{},{},{},{}",
                        result.pass,
                        max_tv,
                        result.mixture_tv_upper,
                        laminar.map_or(String::new(), |l| l.to_string())
                    ));
                }
                _ => row.push_str(",,,,"),
            }
            row.push('\n');
            summary.lock().unwrap().push_str(&row);
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    // Worker pool finishes in arbitrary order; sort rows for determinism.
    let text = summary.into_inner().unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let (header, rows) = lines.split_at_mut(1);
    rows.sort_unstable();
    let mut sorted = String::from(header[0]);
    sorted.push('\n');
    for row in rows {
        sorted.push_str(row);
        sorted.push('\n');
    }
    fs::write(out.join("summary.csv"), sorted)?;
    println!("wrote {}/summary.csv", out.display());
    Ok(ExitCode::SUCCESS)
}
