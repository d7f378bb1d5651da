//! Buyer-side evaluation: fit a linear model on the purchased rows and score
//! it on the buyer's labeled test points, across many simulated buyers.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{apply_cost_noise_with, gen_gaussian_with, rng_stream, sample_costs_with, CostModel};
use crate::design::{BuyerQuery, FeatureMatrix};
use crate::error::{Error, Result};
use crate::frank_wolfe::{
    cost_scaled_gradient, rank_descending, run_frank_wolfe, single_step_scores, FwConfig, InitMode, StepRule,
};

/// Minimum-norm least squares without intercept.
///
/// Singular values below `max(rows, cols)·ε·σ_max` are treated as zero, which
/// yields exact OLS for full column rank and the minimum-norm interpolant when
/// there are fewer rows than features.
pub fn fit_least_squares(x_sel: &FeatureMatrix, y_sel: &[f64]) -> Result<Vec<f64>> {
    if y_sel.len() != x_sel.nrows() {
        return Err(Error::DimensionMismatch {
            context: "targets vs selected rows",
            expected: x_sel.nrows(),
            actual: y_sel.len(),
        });
    }
    let a = x_sel.to_matrix();
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = x_sel.nrows().max(x_sel.ncols()) as f64 * f64::EPSILON * smax;
    let b = DMatrix::from_column_slice(y_sel.len(), 1, y_sel);
    let theta = svd.solve(&b, eps).map_err(|e| Error::Conditioning(e.to_string()))?;
    Ok(theta.column(0).iter().copied().collect())
}

/// Least squares on a subset of rows; an empty subset fits `θ = 0`.
pub fn fit_on_selection(x: &FeatureMatrix, y: &[f64], selected: &[usize]) -> Result<Vec<f64>> {
    if selected.is_empty() {
        return Ok(vec![0.0; x.ncols()]);
    }
    let ys: Vec<f64> = selected.iter().map(|&j| y[j]).collect();
    fit_least_squares(&x.select_rows(selected)?, &ys)
}

/// `(1/m) Σ_i (θᵀx_i − y_i)²`.
pub fn test_mse(theta: &[f64], query: &BuyerQuery, y_test: &[f64]) -> Result<f64> {
    if theta.len() != query.ncols() {
        return Err(Error::DimensionMismatch {
            context: "coefficients vs buyer columns",
            expected: query.ncols(),
            actual: theta.len(),
        });
    }
    if y_test.len() != query.nrows() {
        return Err(Error::DimensionMismatch {
            context: "buyer targets vs rows",
            expected: query.nrows(),
            actual: y_test.len(),
        });
    }
    let theta = DVector::from_column_slice(theta);
    let sse: f64 = query
        .features()
        .rows()
        .zip(y_test)
        .map(|(row, y)| {
            let r = DVector::from_column_slice(row).dot(&theta) - y;
            r * r
        })
        .sum();
    Ok(sse / query.nrows() as f64)
}

/// Seeded uniform permutation of `0..n`.
pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_stream(seed, 0));
    idx
}

/// `k` distinct indices drawn uniformly from `0..n`.
pub fn random_baseline_select(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds n = {n}")));
    }
    let mut perm = random_permutation(n, seed);
    perm.truncate(k);
    Ok(perm)
}

/// Walks `ranked` in order and buys while the running cost stays within
/// `budget`. The first point that would overshoot ends the walk; with
/// `inclusive` it is still bought.
pub fn budget_select(ranked: &[usize], costs: &[f64], budget: f64, inclusive: bool) -> Vec<usize> {
    let mut spent = 0.0;
    let mut out = Vec::new();
    for &j in ranked {
        let next = spent + costs[j];
        if next > budget {
            if inclusive {
                out.push(j);
            }
            break;
        }
        spent = next;
        out.push(j);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MultiStep,
    SingleStep,
    Random,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::MultiStep => "multi_step",
            Method::SingleStep => "single_step",
            Method::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FwSettings {
    pub steps: usize,
    pub lambda: f64,
    pub step_rule: StepRule,
    pub init_mode: InitMode,
    /// Divide selection scores by seller cost when costs exist.
    pub cost_scaling: bool,
}

impl Default for FwSettings {
    fn default() -> Self {
        Self {
            steps: 500,
            lambda: 0.0,
            step_rule: StepRule::LineSearch,
            init_mode: InitMode::Data,
            cost_scaling: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_sellers: usize,
    pub dim: usize,
    pub noise: f64,
    pub n_buyers: usize,
    /// Test points per buyer.
    pub buyer_points: usize,
    pub methods: Vec<Method>,
    pub k_grid: Vec<usize>,
    pub budget_grid: Option<Vec<f64>>,
    pub inclusive_budget: bool,
    pub frank_wolfe: FwSettings,
    pub costs: Option<CostModel>,
    /// Record wall-clock selection time; makes output non-reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_sellers: 1000,
            dim: 10,
            noise: 0.1,
            n_buyers: 50,
            buyer_points: 1,
            methods: vec![Method::MultiStep, Method::SingleStep, Method::Random],
            k_grid: (1..=10).collect(),
            budget_grid: None,
            inclusive_budget: false,
            frank_wolfe: FwSettings::default(),
            costs: None,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sellers == 0 || self.dim == 0 || self.buyer_points == 0 {
            return Err(Error::invalid("n_sellers, dim and buyer_points must be ≥ 1"));
        }
        if self.n_buyers == 0 {
            return Err(Error::invalid("n_buyers must be ≥ 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("method set is empty"));
        }
        let budgets = self.budget_grid.as_deref().unwrap_or(&[]);
        if self.k_grid.is_empty() && budgets.is_empty() {
            return Err(Error::invalid("both k_grid and budget_grid are empty"));
        }
        if let Some(k) = self.k_grid.iter().find(|&&k| k == 0 || k > self.n_sellers) {
            return Err(Error::invalid(format!("k = {k} outside 1..={}", self.n_sellers)));
        }
        if !budgets.is_empty() && self.costs.is_none() {
            return Err(Error::invalid("budget_grid needs a cost model"));
        }
        if budgets.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::invalid("budgets must be finite and ≥ 0"));
        }
        if let Some(c) = &self.costs {
            c.validate()?;
        }
        if self.frank_wolfe.steps == 0 {
            return Err(Error::invalid("frank_wolfe.steps must be ≥ 1"));
        }
        if !(0.0..=1.0).contains(&self.frank_wolfe.lambda) {
            return Err(Error::invalid("frank_wolfe.lambda outside [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: Method,
    pub k: Option<usize>,
    pub budget: Option<f64>,
    pub mean_mse: f64,
    pub per_buyer_mse: Vec<f64>,
    pub runtime_s: Option<f64>,
    pub seed: u64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// One simulated buyer: a fresh seller pool and a labeled test query.
#[derive(Debug, Clone)]
pub struct BuyerTask {
    pub sellers: FeatureMatrix,
    pub targets: Vec<f64>,
    pub costs: Option<Vec<f64>>,
    pub query: BuyerQuery,
    pub query_targets: Vec<f64>,
}

const STREAMS_PER_BUYER: u64 = 4;

/// Draws buyer `b`'s task. Sellers and buyer points come from one generator
/// call so they share coefficients; buyer rows are never cost-scaled and
/// their targets carry no cost noise.
pub fn buyer_task(cfg: &ExperimentConfig, buyer: usize) -> Result<BuyerTask> {
    let (n, m) = (cfg.n_sellers, cfg.buyer_points);
    let mut rng = rng_stream(cfg.seed, buyer as u64 * STREAMS_PER_BUYER);
    let seller_costs = cfg
        .costs
        .as_ref()
        .map(|model| sample_costs_with(&mut rng, n, model))
        .transpose()?;
    let scale = seller_costs.as_ref().map(|c| {
        let mut full = c.clone();
        full.resize(n + m, 1.0);
        full
    });
    let ds = gen_gaussian_with(&mut rng, n + m, cfg.dim, cfg.noise, scale.as_deref())?;
    let seller_idx: Vec<usize> = (0..n).collect();
    let buyer_idx: Vec<usize> = (n..n + m).collect();
    let mut targets = ds.y[..n].to_vec();
    if let (Some(model), Some(c)) = (&cfg.costs, &seller_costs) {
        targets = apply_cost_noise_with(&mut rng, &targets, c, model)?;
    }
    Ok(BuyerTask {
        sellers: ds.x.select_rows(&seller_idx)?,
        targets,
        costs: seller_costs,
        query: BuyerQuery::new(ds.x.select_rows(&buyer_idx)?),
        query_targets: ds.y[n..].to_vec(),
    })
}

/// Full seller ranking (most valuable first) produced by `method`.
pub fn method_ranking(method: Method, task: &BuyerTask, fw: &FwSettings, random_seed: u64) -> Result<Vec<usize>> {
    let n = task.sellers.nrows();
    let scaling = fw.cost_scaling && task.costs.is_some();
    match method {
        Method::MultiStep => {
            let cfg = FwConfig {
                steps: fw.steps,
                k_select: 1,
                lambda: fw.lambda,
                step_rule: fw.step_rule,
                init_mode: fw.init_mode,
                costs: task.costs.clone(),
                cost_scaling: scaling,
            };
            Ok(run_frank_wolfe(&task.sellers, &task.query, &cfg)?.ranking())
        }
        Method::SingleStep => {
            let mut scores = single_step_scores(&task.sellers, &task.query, fw.lambda)?;
            if scaling {
                scores = cost_scaled_gradient(&scores, task.costs.as_deref().expect("costs"))?;
            }
            Ok(rank_descending(&scores))
        }
        Method::Random => Ok(random_permutation(n, random_seed)),
    }
}

struct BuyerOutcome {
    /// `[method][cell]` MSE, cells being the k grid then the budget grid.
    mse: Vec<Vec<f64>>,
    seconds: Vec<f64>,
}

fn run_buyer(cfg: &ExperimentConfig, buyer: usize) -> Result<BuyerOutcome> {
    let task = buyer_task(cfg, buyer)?;
    // a distinct stream so adding methods never shifts the random baseline
    let random_seed = rng_stream(cfg.seed, buyer as u64 * STREAMS_PER_BUYER + 1).random::<u64>();
    let budgets = cfg.budget_grid.as_deref().unwrap_or(&[]);
    let mut mse = Vec::with_capacity(cfg.methods.len());
    let mut seconds = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let start = Instant::now();
        let ranking = method_ranking(method, &task, &cfg.frank_wolfe, random_seed)?;
        seconds.push(start.elapsed().as_secs_f64());
        let mut cells = Vec::with_capacity(cfg.k_grid.len() + budgets.len());
        for &k in &cfg.k_grid {
            let theta = fit_on_selection(&task.sellers, &task.targets, &ranking[..k])?;
            cells.push(test_mse(&theta, &task.query, &task.query_targets)?);
        }
        for &b in budgets {
            let costs = task.costs.as_deref().expect("validated cost model");
            let chosen = budget_select(&ranking, costs, b, cfg.inclusive_budget);
            let theta = fit_on_selection(&task.sellers, &task.targets, &chosen)?;
            cells.push(test_mse(&theta, &task.query, &task.query_targets)?);
        }
        mse.push(cells);
    }
    Ok(BuyerOutcome { mse, seconds })
}

/// Runs every method for every buyer and grid cell. Records come out ordered
/// by method, then the k grid, then the budget grid.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let outcomes: Vec<BuyerOutcome> = (0..cfg.n_buyers)
        .into_par_iter()
        .map(|b| run_buyer(cfg, b))
        .collect::<Result<_>>()?;

    let budgets = cfg.budget_grid.as_deref().unwrap_or(&[]);
    let cells: Vec<(Option<usize>, Option<f64>)> = cfg
        .k_grid
        .iter()
        .map(|&k| (Some(k), None))
        .chain(budgets.iter().map(|&b| (None, Some(b))))
        .collect();
    let mut records = Vec::with_capacity(cfg.methods.len() * cells.len());
    for (mi, &method) in cfg.methods.iter().enumerate() {
        let runtime = cfg
            .timing
            .then(|| outcomes.iter().map(|o| o.seconds[mi]).sum::<f64>());
        for (ci, &(k, budget)) in cells.iter().enumerate() {
            let per_buyer: Vec<f64> = outcomes.iter().map(|o| o.mse[mi][ci]).collect();
            records.push(MetricsRecord {
                method,
                k,
                budget,
                mean_mse: mean(&per_buyer),
                per_buyer_mse: per_buyer,
                runtime_s: runtime,
                seed: cfg.seed,
            });
        }
    }
    Ok(records)
}

pub fn write_records_jsonl(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    for r in records {
        let line = serde_json::to_string(r).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
