//! Frank-Wolfe selection over the seller simplex.
//!
//! Each round scores every seller by `−∂C/∂w_j`, moves weight toward the
//! best one, and folds that seller into `P` with a rank-1 update. Each round
//! adds at most one new coordinate to the support.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{
    design_loss, init_inverse_info, update_inverse_in_place, BuyerCache, BuyerQuery, FeatureMatrix,
    InverseInfo, ScoreOperator, StepProbe, WeightVector,
};
use crate::error::{Error, Result};

/// Line-search bracket for the step size.
pub const ALPHA_MIN: f64 = 1e-4;
pub const ALPHA_MAX: f64 = 0.999;
/// Golden-section stopping width in `α`.
pub const ALPHA_TOL: f64 = 1e-6;

const PARALLEL_WORK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    #[default]
    LineSearch,
    /// `α_t = 1/(t+1)`
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Regularized inverse of `Xᵀ diag(w) X` at uniform weights.
    #[default]
    Data,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwConfig {
    pub steps: usize,
    pub k_select: usize,
    pub lambda: f64,
    pub step_rule: StepRule,
    pub init_mode: InitMode,
    pub costs: Option<Vec<f64>>,
    pub cost_scaling: bool,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            k_select: 10,
            lambda: 0.0,
            step_rule: StepRule::LineSearch,
            init_mode: InitMode::Data,
            costs: None,
            cost_scaling: false,
        }
    }
}

impl FwConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.k_select == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.k_select > n {
            return Err(Error::invalid(format!(
                "k = {} exceeds the {n} available sellers",
                self.k_select
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if let Some(costs) = &self.costs {
            check_costs(costs, n)?;
        } else if self.cost_scaling {
            return Err(Error::invalid("cost scaling requested without costs"));
        }
        Ok(())
    }
}

pub(crate) fn check_costs(costs: &[f64], n: usize) -> Result<()> {
    if costs.len() != n {
        return Err(Error::DimensionMismatch {
            context: "costs vs sellers",
            expected: n,
            actual: costs.len(),
        });
    }
    if let Some(j) = costs.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(Error::invalid(format!("cost of seller {j} is not positive")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected_indices: Vec<usize>,
    pub final_weights: WeightVector,
    /// Loss before the first round and after every round.
    pub loss_trace: Vec<f64>,
    pub chosen_per_round: Vec<usize>,
    pub alphas: Vec<f64>,
    /// `c_j · w_j`, when costs are known.
    pub payments: Option<Vec<f64>>,
    /// Unscaled scores `−∂C/∂w_j` at the first round.
    pub first_round_scores: Vec<f64>,
}

impl SelectionResult {
    /// Every seller ordered by final weight, heaviest first.
    pub fn ranking(&self) -> Vec<usize> {
        rank_descending(self.final_weights.as_slice())
    }
}

/// Optimizer state: simplex weights and the matching inverse information.
#[derive(Debug, Clone)]
pub struct DesignState {
    pub weights: WeightVector,
    pub inverse: InverseInfo,
    /// Completed rounds.
    pub round: usize,
}

impl DesignState {
    pub fn new(x: &FeatureMatrix, lambda: f64, init_mode: InitMode) -> Result<Self> {
        let weights = WeightVector::uniform(x.nrows());
        let inverse = match init_mode {
            InitMode::Data => init_inverse_info(x, &weights, lambda)?,
            InitMode::Identity => InverseInfo::identity(x.ncols()),
        };
        Ok(Self {
            weights,
            inverse,
            round: 0,
        })
    }

    /// Move weight `α` to seller `j` whose features are `x_j`.
    pub fn apply_step(&mut self, j: usize, x_j: &[f64], alpha: f64) -> Result<()> {
        update_inverse_in_place(&mut self.inverse, x_j, alpha)?;
        self.weights.step_toward(j, alpha);
        self.round += 1;
        Ok(())
    }
}

pub(crate) fn seller_scores(op: &ScoreOperator, x: &FeatureMatrix) -> Vec<f64> {
    if x.nrows() * x.ncols() >= PARALLEL_WORK {
        (0..x.nrows()).into_par_iter().map(|j| op.score(x.row(j))).collect()
    } else {
        x.rows().map(|row| op.score(row)).collect()
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax_lowest(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((j, v)),
        }
    }
    best.map(|(j, _)| j)
}

/// `g_j / c_j`.
pub fn cost_scaled_gradient(g: &[f64], costs: &[f64]) -> Result<Vec<f64>> {
    check_costs(costs, g.len())?;
    Ok(g.iter().zip(costs).map(|(g, c)| g / c).collect())
}

/// All indices sorted by descending value, lowest index first among ties.
pub fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Indices of the `k` largest weights.
pub fn top_k(w: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > w.len() {
        return Err(Error::invalid(format!("k = {k} exceeds {} entries", w.len())));
    }
    let mut ranked = rank_descending(w);
    ranked.truncate(k);
    Ok(ranked)
}

fn golden_section(f: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Best step toward a seller given its probe; `round` is the 1-based round
/// the step belongs to and only matters for the fallback.
pub fn search_step(probe: &StepProbe, round: usize) -> Result<f64> {
    let f = |a: f64| probe.loss_at(a);
    let (mut best_alpha, mut best_loss) = golden_section(f, ALPHA_MIN, ALPHA_MAX, ALPHA_TOL)?;
    // the bracket ends are never sampled by the section search itself
    for edge in [ALPHA_MIN, ALPHA_MAX] {
        let l = f(edge)?;
        if l < best_loss {
            best_alpha = edge;
            best_loss = l;
        }
    }
    if best_loss < probe.loss {
        return Ok(best_alpha);
    }
    // dC/dα at 0 is C − cross_term: descent may exist only below ALPHA_MIN
    if probe.cross_term > probe.loss {
        let (alpha, loss) = golden_section(f, 0.0, ALPHA_MIN, ALPHA_MIN * ALPHA_TOL)?;
        if loss < probe.loss && alpha > 0.0 {
            return Ok(alpha);
        }
    }
    Ok(harmonic_step(round))
}

pub fn harmonic_step(round: usize) -> f64 {
    1.0 / (round as f64 + 1.0)
}

/// Line search for the next step toward `x_j` from `state`.
pub fn line_search(state: &DesignState, cache: &BuyerCache, x_j: &[f64]) -> Result<f64> {
    let probe = StepProbe::new(&state.inverse, cache, x_j)?;
    search_step(&probe, state.round + 1)
}

pub(crate) fn step_size(
    rule: StepRule,
    state: &DesignState,
    cache: &BuyerCache,
    op: &ScoreOperator,
    x_j: &[f64],
) -> Result<f64> {
    let round = state.round + 1;
    match rule {
        StepRule::Harmonic => Ok(harmonic_step(round)),
        StepRule::LineSearch => {
            let probe = StepProbe::with_operator(&state.inverse, cache, op, x_j)?;
            search_step(&probe, round)
        }
    }
}

pub(crate) fn payments(costs: Option<&Vec<f64>>, w: &WeightVector) -> Option<Vec<f64>> {
    costs.map(|c| c.iter().zip(w.as_slice()).map(|(c, w)| c * w).collect())
}

/// The full iterative procedure on one buyer query.
pub fn run_frank_wolfe(x: &FeatureMatrix, query: &BuyerQuery, cfg: &FwConfig) -> Result<SelectionResult> {
    cfg.validate(x.nrows())?;
    query.check_against(x)?;
    let cache = BuyerCache::new(query);
    let mut state = DesignState::new(x, cfg.lambda, cfg.init_mode)?;

    let mut loss_trace = Vec::with_capacity(cfg.steps + 1);
    loss_trace.push(design_loss(&state.inverse, &cache)?);
    let mut chosen = Vec::with_capacity(cfg.steps);
    let mut alphas = Vec::with_capacity(cfg.steps);
    let mut first_round_scores = Vec::new();

    for _ in 0..cfg.steps {
        let op = ScoreOperator::new(&state.inverse, &cache)?;
        let scores = seller_scores(&op, x);
        let j = match (&cfg.costs, cfg.cost_scaling) {
            (Some(costs), true) => argmax_lowest(&cost_scaled_gradient(&scores, costs)?),
            _ => argmax_lowest(&scores),
        }
        .expect("at least one seller");
        if state.round == 0 {
            first_round_scores = scores;
        }
        let x_j = x.row(j);
        let alpha = step_size(cfg.step_rule, &state, &cache, &op, x_j)?;
        state.apply_step(j, x_j, alpha)?;
        chosen.push(j);
        alphas.push(alpha);
        loss_trace.push(design_loss(&state.inverse, &cache)?);
    }

    let selected_indices = top_k(state.weights.as_slice(), cfg.k_select)?;
    Ok(SelectionResult {
        selected_indices,
        payments: payments(cfg.costs.as_ref(), &state.weights),
        final_weights: state.weights,
        loss_trace,
        chosen_per_round: chosen,
        alphas,
        first_round_scores,
    })
}

/// Per-seller scores `mean_i (x_iᵀ P x_j)²` at uniform weights.
pub fn single_step_scores(x: &FeatureMatrix, query: &BuyerQuery, lambda: f64) -> Result<Vec<f64>> {
    query.check_against(x)?;
    let cache = BuyerCache::new(query);
    let state = DesignState::new(x, lambda, InitMode::Data)?;
    let op = ScoreOperator::new(&state.inverse, &cache)?;
    Ok(seller_scores(&op, x))
}

/// One linearization of the objective: Top-K sellers by their uniform-weight score.
pub fn single_step_select(
    x: &FeatureMatrix,
    query: &BuyerQuery,
    k: usize,
    lambda: f64,
) -> Result<SelectionResult> {
    if k > x.nrows() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} available sellers",
            x.nrows()
        )));
    }
    let scores = single_step_scores(x, query, lambda)?;
    let cache = BuyerCache::new(query);
    let state = DesignState::new(x, lambda, InitMode::Data)?;
    Ok(SelectionResult {
        selected_indices: top_k(&scores, k)?,
        final_weights: state.weights,
        loss_trace: vec![design_loss(&state.inverse, &cache)?],
        chosen_per_round: Vec::new(),
        alphas: Vec::new(),
        payments: None,
        first_round_scores: scores,
    })
}
