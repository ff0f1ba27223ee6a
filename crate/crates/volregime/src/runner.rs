//! Experiment orchestration behind the CLI subcommands: ingest the price
//! file, build the demonstration pool, backtest every configured method,
//! and render the comparison reports.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use volregime_core::baselines::{
    fit_garch, fit_har, garch_filter, har_forecast, rolling_mean_forecast, BaselineError,
    GarchParams, HarParams, HAR_MONTHLY,
};
use volregime_core::evaluator::{
    compute_metrics, render_csv, render_markdown, run_backtest, EvalError, Forecast,
    ForecastRecord, MetricsReport,
};
use volregime_core::forecast::{icl_forecast, one_shot_forecast, ForecastError};
use volregime_core::gateway::{GatewayError, MockBehavior, MockModel, Model};
use volregime_core::pool::{build_pool, DemoPool, PoolError, Regime};
use volregime_core::sampler::{SamplerConfig, Strategy};
use volregime_core::WindowSample;

use crate::backend::{RemoteConfig, RemoteModel};
use crate::config::{ConfigError, ExperimentConfig};
use crate::ingest::{load_prices, read_artifact, write_artifact, DerivedData, IngestError};
use crate::poolio::{read_pool, write_pool, PoolHeader, PoolIoError};

pub const POOL_FILE: &str = "pool.jsonl";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_MD: &str = "report.md";
pub const AUDIT_FILE: &str = "audit.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    PoolIo(#[from] PoolIoError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{} method(s) failed: {}", .0.len(), .0.join("; "))]
    MethodFailures(Vec<String>),
}

/// CLI flag overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replaces the seed relevant to the subcommand (pool seed for
    /// build-pool, sampler seed for evaluate).
    pub seed: Option<u64>,
    pub backend: Option<String>,
}

/// Builds the model backend named by `spec`: `remote`, `mock:echo`,
/// `mock:cheating_oracle`, `mock:corrective`, or `mock:constant:<value>`.
/// The cheating variants need the full variance series.
pub fn build_model(
    spec: &str,
    config: &ExperimentConfig,
    variances: Vec<f64>,
) -> Result<Box<dyn Model>, RunnerError> {
    if spec == "remote" {
        let m = &config.model;
        let remote = RemoteModel::from_env(RemoteConfig {
            endpoint: m.endpoint.clone(),
            model_name: m.model_name.clone(),
            timeout: Duration::from_secs(m.timeout_seconds),
            max_retries: m.max_retries,
        })?;
        return Ok(Box::new(remote));
    }
    let behavior = match spec {
        "mock:echo" => MockBehavior::EchoLastVariance { seed: 0 },
        "mock:cheating_oracle" => MockBehavior::CheatingOracle { seed: 0 },
        "mock:corrective" => MockBehavior::Corrective { seed: 0 },
        _ => match spec.strip_prefix("mock:constant:") {
            Some(v) => {
                let value: f64 = v.parse().map_err(|_| {
                    RunnerError::Invalid(format!("bad constant in backend spec {spec:?}"))
                })?;
                MockBehavior::Constant { value, seed: 0 }
            }
            None => {
                return Err(RunnerError::Invalid(format!(
                    "unknown backend {spec:?}; expected remote, mock:echo, \
                     mock:cheating_oracle, mock:corrective, or mock:constant:<value>"
                )))
            }
        },
    };
    Ok(Box::new(MockModel::with_series(behavior, variances)))
}

fn write_text(path: &Path, text: &str) -> Result<(), RunnerError> {
    std::fs::write(path, text).map_err(|source| RunnerError::Io { path: path.to_path_buf(), source })
}

pub fn cmd_ingest(config: &ExperimentConfig) -> Result<DerivedData, RunnerError> {
    let prices = load_prices(&config.data.path, config.data.format)?;
    if prices.was_unsorted {
        eprintln!("warning: input rows were not in date order; sorted before use");
    }
    let p = &config.pipeline;
    let derived = DerivedData::derive(
        &prices,
        &config.data.dataset_id,
        p.window,
        p.train_fraction,
        p.quantile,
    )
    .map_err(IngestError::from)?;
    std::fs::create_dir_all(&config.output.dir)
        .map_err(|source| RunnerError::Io { path: config.output.dir.clone(), source })?;
    write_artifact(&config.output.dir, &derived)?;
    println!(
        "ingested {}: {} returns, {} train / {} test windows, tau = {:e}",
        derived.dataset_id,
        derived.returns.len(),
        derived.n_train,
        derived.n_test,
        derived.tau
    );
    Ok(derived)
}

pub fn cmd_build_pool(
    config: &ExperimentConfig,
    overrides: &Overrides,
) -> Result<PoolHeader, RunnerError> {
    let derived = read_artifact(&config.output.dir)?;
    let (train, _) = derived.split_windows();
    let n = config.pipeline.pool_size;
    if n > train.len() {
        eprintln!(
            "warning: requested pool size {} exceeds the {} training samples; \
             building a pool of {}",
            n,
            train.len(),
            train.len()
        );
    }
    let seed = overrides.seed.unwrap_or(config.seeds.pool);
    let backend = overrides.backend.as_deref().unwrap_or(&config.model.backend);
    let model = build_model(backend, config, derived.variances())?;
    let pool = build_pool(
        &train,
        model.as_ref(),
        n,
        config.pipeline.refine_iterations,
        derived.tau,
        seed,
        &derived.dataset_id,
    )?;
    let header = PoolHeader {
        dataset_id: derived.dataset_id.clone(),
        tau: derived.tau,
        n,
        j: config.pipeline.refine_iterations,
        seed,
        size: pool.len(),
    };
    let path = config.output.dir.join(POOL_FILE);
    write_pool(&path, &header, &pool)?;
    println!(
        "built pool of {} demonstrations ({} low / {} high) at {}",
        pool.len(),
        pool.count_by_regime(Regime::Low),
        pool.count_by_regime(Regime::High),
        path.display()
    );
    Ok(header)
}

#[derive(Debug, Serialize, Deserialize)]
struct AuditEntry {
    method: String,
    end_index: usize,
    /// Pool source indices of the demonstrations placed in the prompt.
    sources: Vec<usize>,
}

struct MethodOutcome {
    method: String,
    result: Result<(Vec<ForecastRecord>, Vec<AuditEntry>), String>,
}

/// Fitted classical state shared by the per-window forecasters.
struct ClassicalFits {
    har: Option<Result<HarParams, BaselineError>>,
    garch: Option<Result<GarchParams, BaselineError>>,
    gjr: Option<Result<GarchParams, BaselineError>>,
    initial_variance: f64,
}

fn fit_classical(config: &ExperimentConfig, derived: &DerivedData) -> ClassicalFits {
    let boundary = derived.split.boundary_index;
    let train_returns = &derived.returns[..=boundary];
    let train_lr: Vec<f64> = train_returns.iter().map(|o| o.log_return).collect();
    let n = train_lr.len() as f64;
    let mean = train_lr.iter().sum::<f64>() / n;
    let initial_variance =
        train_lr.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let wants = |name: &str| config.methods.classical.iter().any(|m| m == name);
    ClassicalFits {
        har: wants("har").then(|| fit_har(train_returns).map(|(p, _)| p)),
        garch: wants("garch").then(|| fit_garch(&train_lr, false).map(|(p, _)| p)),
        gjr: wants("gjr_garch").then(|| fit_garch(&train_lr, true).map(|(p, _)| p)),
        initial_variance,
    }
}

fn history_variances(w: &WindowSample) -> Vec<f64> {
    w.history.iter().map(|o| o.realized_variance).collect()
}

#[derive(Debug)]
pub struct EvaluateOutcome {
    pub reports: Vec<MetricsReport>,
    pub failures: Vec<String>,
}

pub fn cmd_evaluate(
    config: &ExperimentConfig,
    overrides: &Overrides,
) -> Result<EvaluateOutcome, RunnerError> {
    let derived = read_artifact(&config.output.dir)?;
    let (_, test) = derived.split_windows();
    let tau = derived.tau;
    let variances = derived.variances();
    let log_returns: Vec<f64> = derived.returns.iter().map(|o| o.log_return).collect();

    for name in &config.methods.classical {
        if !["rolling_mean", "har", "garch", "gjr_garch"].contains(&name.as_str()) {
            return Err(RunnerError::Invalid(format!("unknown classical method {name:?}")));
        }
    }
    for name in &config.methods.icl {
        if !["one_shot", "random", "fixed_prior", "label_estimate"].contains(&name.as_str()) {
            return Err(RunnerError::Invalid(format!("unknown icl method {name:?}")));
        }
    }

    let fits = fit_classical(config, &derived);

    // The pool and a model backend exist only if some ICL method needs them.
    let needs_pool = config.methods.icl.iter().any(|m| m != "one_shot");
    let pool: Option<DemoPool> = if needs_pool {
        let path = config.output.dir.join(POOL_FILE);
        if !path.exists() {
            return Err(RunnerError::Invalid(format!(
                "pool file {} not found; run build-pool first",
                path.display()
            )));
        }
        Some(read_pool(&path)?.1)
    } else {
        None
    };
    let model: Option<Box<dyn Model>> = if config.methods.icl.is_empty() {
        None
    } else {
        let backend = overrides.backend.as_deref().unwrap_or(&config.model.backend);
        Some(build_model(backend, config, variances.clone())?)
    };
    let sampler_seed = overrides.seed.unwrap_or(config.seeds.sampler);

    let sampler_config = |strategy: Strategy| -> SamplerConfig {
        let s = &config.sampler;
        let alpha = s.alpha.unwrap_or_else(|| {
            // Default: the pool's own empirical low-regime fraction.
            pool.as_ref()
                .filter(|p| !p.is_empty())
                .map(|p| p.count_by_regime(Regime::Low) as f64 / p.len() as f64)
                .unwrap_or(0.5)
        });
        SamplerConfig {
            strategy,
            k: s.k,
            alpha,
            alpha_low: s.alpha_low,
            alpha_high: s.alpha_high,
            m: s.m,
            tau_prime: s.tau_prime.unwrap_or(tau),
            seed: sampler_seed,
        }
    };

    enum Job<'a> {
        RollingMean,
        Har(&'a Result<HarParams, BaselineError>),
        Garch(&'a Result<GarchParams, BaselineError>),
        OneShot,
        Icl(Strategy),
    }

    let mut jobs: Vec<(String, Job)> = Vec::new();
    for name in &config.methods.classical {
        let job = match name.as_str() {
            "rolling_mean" => Job::RollingMean,
            "har" => Job::Har(fits.har.as_ref().expect("fit requested")),
            "garch" => Job::Garch(fits.garch.as_ref().expect("fit requested")),
            "gjr_garch" => Job::Garch(fits.gjr.as_ref().expect("fit requested")),
            _ => unreachable!("validated above"),
        };
        jobs.push((name.clone(), job));
    }
    for name in &config.methods.icl {
        let job = match name.as_str() {
            "one_shot" => Job::OneShot,
            "random" => Job::Icl(Strategy::Random),
            "fixed_prior" => Job::Icl(Strategy::FixedPrior),
            "label_estimate" => Job::Icl(Strategy::LabelEstimate),
            _ => unreachable!("validated above"),
        };
        jobs.push((name.clone(), job));
    }

    let run_job = |(name, job): (String, Job)| -> MethodOutcome {
        let no_audit =
            |r: Result<Vec<ForecastRecord>, EvalError>| r.map(|recs| (recs, Vec::new()));
        let result = match job {
            Job::RollingMean => no_audit(run_backtest(&test, &name, tau, |w| {
                rolling_mean_forecast(&history_variances(w)).map(Forecast::plain)
            }))
            .map_err(|e| e.to_string()),
            Job::Har(fit) => match fit {
                Err(e) => Err(format!("fit failed: {e}")),
                Ok(params) => no_audit(run_backtest(&test, &name, tau, |w| {
                    // The model uses the trailing 22 realized variances up
                    // to and including the window's last day.
                    let t = w.end_index;
                    if t + 1 < HAR_MONTHLY {
                        return Err(BaselineError::TooFewObservations {
                            needed: HAR_MONTHLY,
                            got: t + 1,
                        });
                    }
                    har_forecast(params, &variances[..=t]).map(Forecast::plain)
                }))
                .map_err(|e| e.to_string()),
            },
            Job::Garch(fit) => match fit {
                Err(e) => Err(format!("fit failed: {e}")),
                Ok(params) => {
                    // filter[t] is the conditional variance of return t
                    // given the first t-1 returns; the target of a window
                    // ending at t is the variance of return t+1.
                    match garch_filter(params, &log_returns, fits.initial_variance) {
                        Err(e) => Err(format!("filter failed: {e}")),
                        Ok(filter) => no_audit(run_backtest(
                            &test,
                            &name,
                            tau,
                            |w| -> Result<Forecast, BaselineError> {
                                Ok(Forecast::plain(filter[w.end_index + 1]))
                            },
                        ))
                        .map_err(|e| e.to_string()),
                    }
                }
            },
            Job::OneShot => {
                let model = model.as_deref().expect("icl methods have a backend");
                no_audit(run_backtest(&test, &name, tau, |w| one_shot_forecast(w, model)))
                    .map_err(|e| e.to_string())
            }
            Job::Icl(strategy) => {
                let model = model.as_deref().expect("icl methods have a backend");
                let pool = pool.as_ref().expect("pool checked above");
                let sc = sampler_config(strategy);
                let mut audit = Vec::new();
                run_backtest(&test, &name, tau, |w| -> Result<Forecast, ForecastError> {
                    let (forecast, sources) = icl_forecast(w, pool, &sc, model)?;
                    audit.push(AuditEntry {
                        method: name.clone(),
                        end_index: w.end_index,
                        sources,
                    });
                    Ok(forecast)
                })
                .map(|recs| (recs, audit))
                .map_err(|e| e.to_string())
            }
        };
        MethodOutcome { method: name, result }
    };

    // Methods are independent; each sees only its own fitted state.
    let outcomes: Vec<MethodOutcome> = jobs.into_par_iter().map(run_job).collect();

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut audit = Vec::new();
    for outcome in outcomes {
        match outcome.result {
            Ok((records, mut entries)) => {
                match compute_metrics(&records, tau) {
                    Ok(report) => reports.push(report),
                    Err(e) => failures.push(format!("{}: {e}", outcome.method)),
                }
                audit.append(&mut entries);
            }
            Err(e) => failures.push(format!("{}: {e}", outcome.method)),
        }
    }
    for failure in &failures {
        eprintln!("method failed: {failure}");
    }
    if reports.is_empty() {
        return Err(RunnerError::MethodFailures(failures));
    }

    let csv_text = render_csv(&derived.dataset_id, &reports)?;
    let md_text = render_markdown(&reports)?;
    write_text(&config.output.dir.join(REPORT_CSV), &csv_text)?;
    write_text(&config.output.dir.join(REPORT_MD), &md_text)?;
    let audit_path = config.output.dir.join(AUDIT_FILE);
    let mut audit_file = std::fs::File::create(&audit_path)
        .map_err(|source| RunnerError::Io { path: audit_path.clone(), source })?;
    for entry in &audit {
        let line = serde_json::to_string(entry).expect("audit serialize");
        writeln!(audit_file, "{line}")
            .map_err(|source| RunnerError::Io { path: audit_path.clone(), source })?;
    }
    print!("{md_text}");
    Ok(EvaluateOutcome { reports, failures })
}

/// Re-renders the Markdown table from a previously written report.csv.
pub fn cmd_report(config: &ExperimentConfig) -> Result<String, RunnerError> {
    let csv_path = config.output.dir.join(REPORT_CSV);
    let mut reader = csv::Reader::from_path(&csv_path)
        .map_err(|e| RunnerError::Invalid(format!("cannot read {}: {e}", csv_path.display())))?;
    let mut reports = Vec::new();
    for row in reader.records() {
        let row =
            row.map_err(|e| RunnerError::Invalid(format!("bad row in report.csv: {e}")))?;
        if row.len() != 8 {
            return Err(RunnerError::Invalid(format!(
                "report.csv row has {} fields, expected 8",
                row.len()
            )));
        }
        let num = |i: usize| -> Result<f64, RunnerError> {
            row[i]
                .parse()
                .map_err(|_| RunnerError::Invalid(format!("bad number {:?} in report.csv", &row[i])))
        };
        let opt_num = |i: usize| -> Result<Option<f64>, RunnerError> {
            if row[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let count = |i: usize| -> Result<usize, RunnerError> {
            row[i]
                .parse()
                .map_err(|_| RunnerError::Invalid(format!("bad count {:?} in report.csv", &row[i])))
        };
        reports.push(MetricsReport {
            method: row[1].to_string(),
            mae: num(2)?,
            rmse: num(3)?,
            mae_low: opt_num(4)?,
            mae_high: opt_num(5)?,
            n_low: count(6)?,
            n_high: count(7)?,
        });
    }
    let md_text = render_markdown(&reports)?;
    write_text(&config.output.dir.join(REPORT_MD), &md_text)?;
    print!("{md_text}");
    Ok(md_text)
}
