//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or input validation,
//! 3 numerical failure, 4 protocol violation.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{
    apply_cost_noise_with, gen_gaussian_with, load_costs_csv, load_features_csv, rng_stream, sample_costs_with,
    save_dataset_csv, CostFn, CostModel, LabeledTable,
};
use crate::design::BuyerQuery;
use crate::error::{Error, Result};
use crate::eval::{
    budget_select, fit_on_selection, random_permutation, run_experiment, test_mse, write_records_jsonl,
    ExperimentConfig, Method, MetricsRecord,
};
use crate::frank_wolfe::{
    cost_scaled_gradient, rank_descending, run_frank_wolfe, single_step_select, top_k, FwConfig, InitMode,
    SelectionResult, StepRule,
};
use crate::market::{partition_round_robin, run_federated_selection_with, Execution};

pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_PROTOCOL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "seller-select", version, about = "Buyer-driven seller data selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic linear-Gaussian dataset as CSV.
    GenData(GenDataArgs),
    /// Select seller points for a buyer query.
    Select(SelectArgs),
    /// Score a selection record on labeled buyer data.
    Evaluate(EvaluateArgs),
    /// Run a multi-buyer experiment from a TOML config.
    Sweep(SweepArgs),
    /// Run the federated protocol and check it against the centralized run.
    FederatedDemo(FederatedArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StepRuleArg {
    LineSearch,
    Harmonic,
}

impl From<StepRuleArg> for StepRule {
    fn from(v: StepRuleArg) -> Self {
        match v {
            StepRuleArg::LineSearch => StepRule::LineSearch,
            StepRuleArg::Harmonic => StepRule::Harmonic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Data,
    Identity,
}

impl From<InitArg> for InitMode {
    fn from(v: InitArg) -> Self {
        match v {
            InitArg::Data => InitMode::Data,
            InitArg::Identity => InitMode::Identity,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: u64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample per-row costs from this support, scale rows by cost, and add
    /// cost-dependent label noise.
    #[arg(long, value_delimiter = ',')]
    pub costs_support: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = CostFn::Square)]
    pub cost_fn: CostFn,
    #[arg(long, default_value_t = 0.3)]
    pub beta: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also draw this many buyer rows from the same model (same coefficients,
    /// unit-norm rows, no cost noise) and write them to `--buyer-out`.
    #[arg(long, requires = "buyer_out")]
    pub buyer_samples: Option<usize>,
    #[arg(long, requires = "buyer_samples")]
    pub buyer_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub buyer: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Number of points to select; required unless a budget is given.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = StepRuleArg::LineSearch)]
    pub step_rule: StepRuleArg,
    #[arg(long, value_enum, default_value_t = InitArg::Data)]
    pub init: InitArg,
    /// Any CSV with a `cost` column, one row per seller.
    #[arg(long)]
    pub costs: Option<PathBuf>,
    #[arg(long, requires = "costs")]
    pub budget: Option<f64>,
    /// Buy the point that first overshoots the budget as well.
    #[arg(long, requires = "budget")]
    pub inclusive_budget: bool,
    /// Keep raw scores even when costs are given.
    #[arg(long)]
    pub no_cost_scaling: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub selection: PathBuf,
    /// Labeled seller table.
    #[arg(long)]
    pub data: PathBuf,
    /// Labeled buyer table.
    #[arg(long)]
    pub buyer: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub buyers: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Record wall-clock runtimes (output is then not reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct FederatedArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub buyer: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub sellers: u64,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Identity)]
    pub init: InitArg,
    #[arg(long, value_enum, default_value_t = StepRuleArg::LineSearch)]
    pub step_rule: StepRuleArg,
    /// Run seller-side work concurrently within each round.
    #[arg(long)]
    pub parallel: bool,
    /// Communication log (one JSON record per round).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional selection record of the federated run.
    #[arg(long)]
    pub selection_out: Option<PathBuf>,
}

/// What `select` writes and `evaluate` reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub method: Method,
    pub seed: u64,
    pub k: Option<usize>,
    pub budget: Option<f64>,
    pub selected_indices: Vec<usize>,
    /// Optimizer trace; absent for the random baseline.
    pub selection: Option<SelectionResult>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Singular { .. } | Error::Conditioning(_) => EXIT_NUMERICAL,
        Error::Protocol(_) => EXIT_PROTOCOL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the command, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => cmd_gen_data(&a),
        Command::Select(a) => cmd_select(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::FederatedDemo(a) => cmd_federated_demo(&a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    out.write_all(b"\n").map_err(io_err)?;
    out.flush().map_err(io_err)
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn cmd_gen_data(a: &GenDataArgs) -> Result<()> {
    let (n, d) = (a.samples as usize, a.dim as usize);
    let m = a.buyer_samples.unwrap_or(0);
    if a.buyer_samples == Some(0) {
        return Err(Error::invalid("--buyer-samples must be at least 1"));
    }
    let costs = match &a.costs_support {
        Some(support) => {
            let model = CostModel {
                support: support.clone(),
                cost_fn: a.cost_fn,
                beta: a.beta,
            };
            Some((sample_costs_with(&mut rng_stream(a.seed, 1), n, &model)?, model))
        }
        None => None,
    };
    let scale = costs.as_ref().map(|(c, _)| {
        let mut full = c.clone();
        full.resize(n + m, 1.0);
        full
    });
    let ds = gen_gaussian_with(&mut rng_stream(a.seed, 0), n + m, d, a.noise, scale.as_deref())?;
    let seller_rows: Vec<usize> = (0..n).collect();
    let mut y = ds.y[..n].to_vec();
    if let Some((c, model)) = &costs {
        y = apply_cost_noise_with(&mut rng_stream(a.seed, 2), &y, c, model)?;
    }
    let sellers = LabeledTable {
        features: ds.x.select_rows(&seller_rows)?,
        targets: Some(y),
        costs: costs.map(|(c, _)| c),
    };
    save_dataset_csv(&a.out, &sellers)?;
    eprintln!("gen-data: wrote {n} rows to {}", a.out.display());
    if let Some(path) = &a.buyer_out {
        let buyer_rows: Vec<usize> = (n..n + m).collect();
        let buyer = LabeledTable {
            features: ds.x.select_rows(&buyer_rows)?,
            targets: Some(ds.y[n..].to_vec()),
            costs: None,
        };
        save_dataset_csv(path, &buyer)?;
        eprintln!("gen-data: wrote {m} buyer rows to {}", path.display());
    }
    Ok(())
}

fn load_query(path: &Path) -> Result<(BuyerQuery, Option<Vec<f64>>)> {
    let t = load_features_csv(path)?;
    Ok((BuyerQuery::new(t.features), t.targets))
}

pub fn cmd_select(a: &SelectArgs) -> Result<()> {
    if a.steps == 0 {
        return Err(Error::invalid("--steps must be at least 1"));
    }
    if a.k.is_none() && a.budget.is_none() {
        return Err(Error::invalid("either --k or --budget is required"));
    }
    if let Some(b) = a.budget {
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::invalid("--budget must be finite and ≥ 0"));
        }
    }
    let sellers: LabeledTable = load_features_csv(&a.data)?;
    let x = sellers.features;
    let n = x.nrows();
    let (query, _) = load_query(&a.buyer)?;
    query.check_against(&x)?;
    let costs = a.costs.as_deref().map(load_costs_csv).transpose()?;
    if let Some(c) = &costs {
        if c.len() != n {
            return Err(Error::DimensionMismatch {
                context: "cost rows vs seller rows",
                expected: n,
                actual: c.len(),
            });
        }
    }
    let k = a.k.unwrap_or(1);
    if k == 0 || k > n {
        return Err(Error::invalid(format!("--k must be in 1..={n}")));
    }
    let scaling = costs.is_some() && !a.no_cost_scaling;

    let (ranking, selection) = match a.method {
        Method::MultiStep => {
            let cfg = FwConfig {
                steps: a.steps,
                k_select: k,
                lambda: a.lambda,
                step_rule: a.step_rule.into(),
                init_mode: a.init.into(),
                costs: costs.clone(),
                cost_scaling: scaling,
            };
            let res = run_frank_wolfe(&x, &query, &cfg)?;
            (res.ranking(), Some(res))
        }
        Method::SingleStep => {
            let mut res = single_step_select(&x, &query, k, a.lambda)?;
            let mut scores = res.first_round_scores.clone();
            if scaling {
                scores = cost_scaled_gradient(&scores, costs.as_deref().expect("costs"))?;
            }
            res.selected_indices = top_k(&scores, k)?;
            (rank_descending(&scores), Some(res))
        }
        Method::Random => (random_permutation(n, a.seed), None),
    };
    let selected_indices = match (a.budget, &costs) {
        (Some(b), Some(c)) => budget_select(&ranking, c, b, a.inclusive_budget),
        _ => ranking[..k].to_vec(),
    };
    let record = SelectionRecord {
        method: a.method,
        seed: a.seed,
        k: a.budget.is_none().then_some(k),
        budget: a.budget,
        selected_indices,
        selection,
    };
    write_json(&a.out, &record)?;
    eprintln!(
        "select: {} picked {} points, wrote {}",
        a.method.name(),
        record.selected_indices.len(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let record: SelectionRecord =
        serde_json::from_str(&read_to_string(&a.selection)?).map_err(|source| Error::Json {
            path: a.selection.clone(),
            source,
        })?;
    let sellers = load_features_csv(&a.data)?;
    let y = sellers
        .targets
        .ok_or_else(|| Error::invalid(format!("{}: seller table has no `y` column", a.data.display())))?;
    let (query, y_test) = load_query(&a.buyer)?;
    let y_test =
        y_test.ok_or_else(|| Error::invalid(format!("{}: buyer table has no `y` column", a.buyer.display())))?;
    query.check_against(&sellers.features)?;
    if let Some(&j) = record.selected_indices.iter().find(|&&j| j >= sellers.features.nrows()) {
        return Err(Error::invalid(format!("selected index {j} out of range")));
    }
    let theta = fit_on_selection(&sellers.features, &y, &record.selected_indices)?;
    let mse = test_mse(&theta, &query, &y_test)?;
    let metrics = MetricsRecord {
        method: record.method,
        k: Some(record.selected_indices.len()),
        budget: record.budget,
        mean_mse: mse,
        per_buyer_mse: vec![mse],
        runtime_s: None,
        seed: record.seed,
    };
    write_records_jsonl(&a.out, &[metrics])?;
    eprintln!("evaluate: mse {mse:.6}");
    Ok(())
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    toml::from_str(&read_to_string(path)?).map_err(|source| Error::Config {
        path: path.to_path_buf(),
        source,
    })
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let mut cfg = load_experiment_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(b) = a.buyers {
        cfg.n_buyers = b;
    }
    if let Some(t) = a.steps {
        cfg.frank_wolfe.steps = t;
    }
    if let Some(l) = a.lambda {
        cfg.frank_wolfe.lambda = l;
    }
    cfg.timing |= a.timing;
    cfg.validate()?;
    eprintln!(
        "sweep: {} buyers × {} methods, n = {}, d = {}",
        cfg.n_buyers,
        cfg.methods.len(),
        cfg.n_sellers,
        cfg.dim
    );
    let records = run_experiment(&cfg)?;
    write_records_jsonl(&a.out, &records)?;
    eprintln!("sweep: wrote {} records to {}", records.len(), a.out.display());
    Ok(())
}

pub fn cmd_federated_demo(a: &FederatedArgs) -> Result<()> {
    let x = load_features_csv(&a.data)?.features;
    let (query, _) = load_query(&a.buyer)?;
    let cfg = FwConfig {
        steps: a.steps,
        k_select: a.k,
        lambda: a.lambda,
        step_rule: a.step_rule.into(),
        init_mode: a.init.into(),
        costs: None,
        cost_scaling: false,
    };
    cfg.validate(x.nrows())?;
    query.check_against(&x)?;
    let mut nodes = partition_round_robin(&x, a.sellers as usize)?;
    let exec = if a.parallel { Execution::Parallel } else { Execution::Serial };
    let (fed, log) = run_federated_selection_with(&mut nodes, &query, &cfg, exec)?;
    let central = run_frank_wolfe(&x, &query, &cfg)?;

    // a data-dependent start pools moments in a different order
    let alpha_tol = if cfg.init_mode == InitMode::Identity { 1e-12 } else { 1e-9 };
    if fed.chosen_per_round != central.chosen_per_round {
        return Err(Error::Protocol("federated and centralized runs chose different sellers".into()));
    }
    if let Some((t, (f, c))) = fed
        .alphas
        .iter()
        .zip(&central.alphas)
        .enumerate()
        .find(|(_, (f, c))| (*f - *c).abs() > alpha_tol)
    {
        return Err(Error::Protocol(format!("round {}: step {f} differs from centralized {c}", t + 1)));
    }
    if fed.selected_indices != central.selected_indices {
        return Err(Error::Protocol("federated and centralized Top-K differ".into()));
    }
    let n = x.nrows();
    let d = x.ncols();
    if let Some(r) = log
        .selection_rounds()
        .find(|r| r.uplink_scalars != n || r.broadcast_scalars != d + 2)
    {
        return Err(Error::Protocol(format!("round {} broke the O(d) communication contract", r.round)));
    }
    log.write_jsonl(&a.out)?;
    if let Some(p) = &a.selection_out {
        write_json(p, &fed)?;
    }
    eprintln!(
        "federated-demo: {} sellers, {} rounds, {} scalars total; matches centralized run",
        nodes.len(),
        cfg.steps,
        log.records.last().map_or(0, |r| r.cumulative_scalars)
    );
    Ok(())
}
