//! Lockstep simulation of the federated selection protocol.
//!
//! Sellers keep their rows private. Every round each seller uplinks one score
//! per row, the platform picks the winner, and the winner broadcasts the step
//! size together with its feature vector so every replica of `P` can apply the
//! same rank-1 update. Messages travel over an in-process queue and every
//! payload scalar is accounted in a [`CommLog`].

use std::collections::VecDeque;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{
    design_loss, invert_spd, update_inverse_in_place, weighted_gram, BuyerCache, BuyerQuery, FeatureMatrix,
    InverseInfo, ScoreOperator, StepProbe, WeightVector,
};
use crate::error::{Error, Result};
use crate::frank_wolfe::{
    argmax_lowest, cost_scaled_gradient, harmonic_step, payments, search_step, top_k, FwConfig, InitMode,
    SelectionResult, StepRule,
};

/// Maximum Frobenius distance between replicas accepted by [`verify_replicas`].
pub const REPLICA_TOL: f64 = 1e-12;
/// Divergence that aborts a run as a protocol bug.
pub const DIVERGENCE_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RoundMessage {
    GradientUplink {
        seller_id: usize,
        coordinate_index: usize,
        score: f64,
    },
    /// Point-to-point notice from the platform; carries no payload scalars.
    WinnerNotify { seller_id: usize, global_index: usize },
    WinnerAnnounce {
        alpha: f64,
        x_vector: Vec<f64>,
        global_index: usize,
    },
    QueryBroadcast(BuyerQuery),
    /// Local sufficient statistics for a data-dependent start.
    InitUplink {
        seller_id: usize,
        count: usize,
        column_sums: Vec<f64>,
        column_sq_sums: Vec<f64>,
        /// Upper triangle of the local `Σ x xᵀ`; empty when not needed.
        gram_upper: Vec<f64>,
    },
    InitBroadcast {
        lambda: f64,
        sigma2: f64,
        /// Upper triangle of the regularized information matrix; empty for a
        /// scaled-identity start.
        info_upper: Vec<f64>,
    },
}

impl RoundMessage {
    pub fn payload_scalars(&self) -> usize {
        match self {
            RoundMessage::GradientUplink { .. } => 1,
            RoundMessage::WinnerNotify { .. } => 0,
            RoundMessage::WinnerAnnounce { x_vector, .. } => x_vector.len() + 2,
            RoundMessage::QueryBroadcast(q) => q.nrows() * q.ncols(),
            RoundMessage::InitUplink {
                column_sums,
                column_sq_sums,
                gram_upper,
                ..
            } => 1 + column_sums.len() + column_sq_sums.len() + gram_upper.len(),
            RoundMessage::InitBroadcast { info_upper, .. } => 2 + info_upper.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Route {
    Uplink,
    Direct,
    Broadcast,
}

/// FIFO message queue with per-round payload accounting.
#[derive(Debug, Default)]
struct Bus {
    queue: VecDeque<(Route, RoundMessage)>,
    uplink: usize,
    broadcast: usize,
}

impl Bus {
    fn send(&mut self, route: Route, msg: RoundMessage) {
        match route {
            Route::Uplink => self.uplink += msg.payload_scalars(),
            Route::Broadcast => self.broadcast += msg.payload_scalars(),
            Route::Direct => {}
        }
        self.queue.push_back((route, msg));
    }

    fn recv(&mut self) -> Option<(Route, RoundMessage)> {
        self.queue.pop_front()
    }

    fn close_round(&mut self, round: usize, log: &mut CommLog) {
        log.push(round, self.uplink, self.broadcast);
        self.uplink = 0;
        self.broadcast = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub uplink_scalars: usize,
    pub broadcast_scalars: usize,
    pub cumulative_scalars: usize,
}

/// Round 0 is the setup exchange (query and initialization); rounds `1..=T`
/// are selection rounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommLog {
    pub records: Vec<RoundRecord>,
}

impl CommLog {
    fn push(&mut self, round: usize, uplink: usize, broadcast: usize) {
        let prev = self.records.last().map_or(0, |r| r.cumulative_scalars);
        self.records.push(RoundRecord {
            round,
            uplink_scalars: uplink,
            broadcast_scalars: broadcast,
            cumulative_scalars: prev + uplink + broadcast,
        });
    }

    pub fn setup(&self) -> Option<&RoundRecord> {
        self.records.iter().find(|r| r.round == 0)
    }

    pub fn selection_rounds(&self) -> impl Iterator<Item = &RoundRecord> {
        self.records.iter().filter(|r| r.round > 0)
    }

    pub fn round_broadcast_total(&self) -> usize {
        self.selection_rounds().map(|r| r.broadcast_scalars).sum()
    }

    pub fn round_uplink_total(&self) -> usize {
        self.selection_rounds().map(|r| r.uplink_scalars).sum()
    }

    /// One JSON object per line.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })?;
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

/// One seller: private rows, their global indices, and protocol replicas.
#[derive(Debug, Clone)]
pub struct SellerNode {
    pub seller_id: usize,
    global_indices: Vec<usize>,
    local_rows: FeatureMatrix,
    local_p: Option<InverseInfo>,
    local_cache: Option<BuyerCache>,
    round: usize,
}

impl SellerNode {
    pub fn new(seller_id: usize, global_indices: Vec<usize>, local_rows: FeatureMatrix) -> Result<Self> {
        if global_indices.len() != local_rows.nrows() {
            return Err(Error::DimensionMismatch {
                context: "seller global indices vs local rows",
                expected: local_rows.nrows(),
                actual: global_indices.len(),
            });
        }
        Ok(Self {
            seller_id,
            global_indices,
            local_rows,
            local_p: None,
            local_cache: None,
            round: 0,
        })
    }

    pub fn global_indices(&self) -> &[usize] {
        &self.global_indices
    }

    pub fn replica(&self) -> Option<&InverseInfo> {
        self.local_p.as_ref()
    }

    /// Fault injection for tests.
    #[doc(hidden)]
    pub fn replica_mut(&mut self) -> Option<&mut InverseInfo> {
        self.local_p.as_mut()
    }

    fn local_index(&self, global: usize) -> Option<usize> {
        self.global_indices.iter().position(|&g| g == global)
    }

    fn receive(&mut self, msg: &RoundMessage) -> Result<()> {
        match msg {
            RoundMessage::QueryBroadcast(q) => {
                q.check_against(&self.local_rows)?;
                self.local_cache = Some(BuyerCache::new(q));
            }
            RoundMessage::InitBroadcast {
                lambda,
                sigma2,
                info_upper,
            } => {
                let d = self.local_rows.ncols();
                let mut p = if info_upper.is_empty() {
                    InverseInfo::from_matrix(DMatrix::identity(d, d) / *sigma2)?
                } else {
                    InverseInfo::from_matrix(invert_spd(unpack_upper(d, info_upper), *lambda)?)?
                };
                p.lambda = *lambda;
                p.sigma2 = *sigma2;
                self.local_p = Some(p);
                self.round = 0;
            }
            RoundMessage::WinnerAnnounce { alpha, x_vector, .. } => {
                let p = self.local_p.as_mut().ok_or_else(|| not_ready(self.seller_id))?;
                update_inverse_in_place(p, x_vector, *alpha)?;
                self.round += 1;
            }
            _ => {}
        }
        Ok(())
    }

    fn init_uplink(&self, with_gram: bool, weight: f64) -> RoundMessage {
        let d = self.local_rows.ncols();
        let mut column_sums = vec![0.0; d];
        let mut column_sq_sums = vec![0.0; d];
        for row in self.local_rows.rows() {
            for k in 0..d {
                column_sums[k] += row[k];
                column_sq_sums[k] += row[k] * row[k];
            }
        }
        let gram_upper = if with_gram {
            let w = vec![weight; self.local_rows.nrows()];
            pack_upper(&weighted_gram(&self.local_rows, &w))
        } else {
            Vec::new()
        };
        RoundMessage::InitUplink {
            seller_id: self.seller_id,
            count: self.local_rows.nrows(),
            column_sums,
            column_sq_sums,
            gram_upper,
        }
    }

    /// One uplink per local row; reads only this seller's rows and replicas.
    fn gradient_uplinks(&self) -> Result<Vec<RoundMessage>> {
        let (p, cache) = self.replicas()?;
        let op = ScoreOperator::new(p, cache)?;
        Ok(self
            .local_rows
            .rows()
            .zip(&self.global_indices)
            .map(|(row, &g)| RoundMessage::GradientUplink {
                seller_id: self.seller_id,
                coordinate_index: g,
                score: op.score(row),
            })
            .collect())
    }

    fn announce(&self, global_index: usize, rule: StepRule) -> Result<RoundMessage> {
        let local = self
            .local_index(global_index)
            .ok_or_else(|| Error::Protocol(format!("seller {} does not own index {global_index}", self.seller_id)))?;
        let x = self.local_rows.row(local);
        let (p, cache) = self.replicas()?;
        let round = self.round + 1;
        let alpha = match rule {
            StepRule::Harmonic => harmonic_step(round),
            StepRule::LineSearch => {
                let op = ScoreOperator::new(p, cache)?;
                search_step(&StepProbe::with_operator(p, cache, &op, x)?, round)?
            }
        };
        Ok(RoundMessage::WinnerAnnounce {
            alpha,
            x_vector: x.to_vec(),
            global_index,
        })
    }

    fn replicas(&self) -> Result<(&InverseInfo, &BuyerCache)> {
        match (&self.local_p, &self.local_cache) {
            (Some(p), Some(c)) => Ok((p, c)),
            _ => Err(not_ready(self.seller_id)),
        }
    }
}

fn not_ready(id: usize) -> Error {
    Error::Protocol(format!("seller {id} has not received its initialization"))
}

fn pack_upper(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for a in 0..d {
        for b in a..d {
            out.push(m[(a, b)]);
        }
    }
    out
}

fn unpack_upper(d: usize, packed: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut it = packed.iter();
    for a in 0..d {
        for b in a..d {
            let v = *it.next().expect("packed triangle length");
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// Splits rows across `sellers` nodes, row `j` going to seller `j mod sellers`.
pub fn partition_round_robin(x: &FeatureMatrix, sellers: usize) -> Result<Vec<SellerNode>> {
    if sellers == 0 {
        return Err(Error::invalid("need at least one seller"));
    }
    let groups: Vec<Vec<usize>> = (0..sellers)
        .map(|s| (s..x.nrows()).step_by(sellers).collect())
        .collect();
    partition_by_assignment(x, &groups)
}

/// One node per index group; empty groups are dropped.
pub fn partition_by_assignment(x: &FeatureMatrix, groups: &[Vec<usize>]) -> Result<Vec<SellerNode>> {
    groups
        .iter()
        .filter(|g| !g.is_empty())
        .enumerate()
        .map(|(id, g)| SellerNode::new(id, g.clone(), x.select_rows(g)?))
        .collect()
}

fn check_partition(partition: &[SellerNode]) -> Result<usize> {
    if partition.is_empty() {
        return Err(Error::Protocol("no sellers in partition".into()));
    }
    let n: usize = partition.iter().map(|s| s.global_indices.len()).sum();
    let d = partition[0].local_rows.ncols();
    let mut seen = vec![false; n];
    for s in partition {
        if s.local_rows.ncols() != d {
            return Err(Error::Protocol(format!("seller {} has a different feature width", s.seller_id)));
        }
        for &g in &s.global_indices {
            if g >= n || seen[g] {
                return Err(Error::Protocol(format!(
                    "partition is not a disjoint cover of 0..{n}: index {g} of seller {}",
                    s.seller_id
                )));
            }
            seen[g] = true;
        }
    }
    Ok(n)
}

fn max_replica_gap(partition: &[SellerNode]) -> Option<f64> {
    let first = partition.first()?.local_p.as_ref()?.matrix();
    let gap = partition[1..]
        .iter()
        .map(|s| s.local_p.as_ref().map_or(f64::INFINITY, |p| (p.matrix() - first).norm()))
        .fold(0.0, f64::max);
    Some(gap)
}

/// True iff every seller's `P` replica agrees with every other within
/// [`REPLICA_TOL`] in Frobenius norm.
pub fn verify_replicas(partition: &[SellerNode]) -> bool {
    if partition.len() < 2 {
        return true;
    }
    max_replica_gap(partition).is_some_and(|g| g <= REPLICA_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Serial,
    /// Seller-side work inside a round runs on the rayon pool.
    Parallel,
}

/// The platform's view: weights of record, its own `P` replica for loss
/// reporting, and public seller prices.
struct Platform {
    weights: WeightVector,
    replica: InverseInfo,
    cache: BuyerCache,
}

/// Runs the protocol over `partition` and returns the selection with its
/// communication log.
pub fn run_federated_selection(
    partition: &mut [SellerNode],
    query: &BuyerQuery,
    cfg: &FwConfig,
) -> Result<(SelectionResult, CommLog)> {
    run_federated_selection_with(partition, query, cfg, Execution::Serial)
}

pub fn run_federated_selection_with(
    partition: &mut [SellerNode],
    query: &BuyerQuery,
    cfg: &FwConfig,
    exec: Execution,
) -> Result<(SelectionResult, CommLog)> {
    let n = check_partition(partition)?;
    cfg.validate(n)?;
    let d = partition[0].local_rows.ncols();
    if query.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "buyer query columns",
            expected: d,
            actual: query.ncols(),
        });
    }

    let mut bus = Bus::default();
    let mut log = CommLog::default();

    // round 0: query and initialization
    bus.send(Route::Broadcast, RoundMessage::QueryBroadcast(query.clone()));
    deliver_broadcasts(&mut bus, partition)?;
    let init = match cfg.init_mode {
        InitMode::Identity => RoundMessage::InitBroadcast {
            lambda: 1.0,
            sigma2: 1.0,
            info_upper: Vec::new(),
        },
        InitMode::Data => {
            let with_gram = cfg.lambda < 1.0;
            let weight = 1.0 / n as f64;
            for s in partition.iter() {
                bus.send(Route::Uplink, s.init_uplink(with_gram, weight));
            }
            aggregate_init(&mut bus, n, d, cfg.lambda)?
        }
    };
    bus.send(Route::Broadcast, init);
    deliver_broadcasts(&mut bus, partition)?;
    bus.close_round(0, &mut log);

    let replica = partition[0].local_p.clone().ok_or_else(|| not_ready(0))?;
    let mut platform = Platform {
        weights: WeightVector::uniform(n),
        replica,
        cache: BuyerCache::new(query),
    };

    let mut loss_trace = vec![design_loss(&platform.replica, &platform.cache)?];
    let mut chosen = Vec::with_capacity(cfg.steps);
    let mut alphas = Vec::with_capacity(cfg.steps);
    let mut first_round_scores = Vec::new();

    for round in 1..=cfg.steps {
        let uplinks: Vec<Vec<RoundMessage>> = match exec {
            Execution::Serial => partition.iter().map(SellerNode::gradient_uplinks).collect::<Result<_>>()?,
            Execution::Parallel => partition
                .par_iter()
                .map(SellerNode::gradient_uplinks)
                .collect::<Result<_>>()?,
        };
        for msg in uplinks.into_iter().flatten() {
            bus.send(Route::Uplink, msg);
        }

        let mut scores = vec![f64::NAN; n];
        while let Some((route, msg)) = bus.recv() {
            match (route, msg) {
                (
                    Route::Uplink,
                    RoundMessage::GradientUplink {
                        coordinate_index,
                        score,
                        ..
                    },
                ) => scores[coordinate_index] = score,
                (_, other) => return Err(Error::Protocol(format!("unexpected message during scoring: {other:?}"))),
            }
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Protocol(format!("round {round}: missing gradient uplinks")));
        }
        let winner = match (&cfg.costs, cfg.cost_scaling) {
            (Some(costs), true) => argmax_lowest(&cost_scaled_gradient(&scores, costs)?),
            _ => argmax_lowest(&scores),
        }
        .expect("non-empty partition");
        if round == 1 {
            first_round_scores = scores;
        }

        let owner = partition
            .iter()
            .position(|s| s.local_index(winner).is_some())
            .ok_or_else(|| Error::Protocol(format!("no owner for index {winner}")))?;
        bus.send(
            Route::Direct,
            RoundMessage::WinnerNotify {
                seller_id: partition[owner].seller_id,
                global_index: winner,
            },
        );
        let announce = match bus.recv() {
            Some((Route::Direct, RoundMessage::WinnerNotify { global_index, .. })) => {
                partition[owner].announce(global_index, cfg.step_rule)?
            }
            other => return Err(Error::Protocol(format!("expected winner notice, got {other:?}"))),
        };
        let alpha = match &announce {
            RoundMessage::WinnerAnnounce { alpha, x_vector, .. } => {
                update_inverse_in_place(&mut platform.replica, x_vector, *alpha)?;
                *alpha
            }
            _ => unreachable!("announce builds a WinnerAnnounce"),
        };
        bus.send(Route::Broadcast, announce);
        deliver_broadcasts(&mut bus, partition)?;
        bus.close_round(round, &mut log);

        if let Some(gap) = max_replica_gap(partition) {
            if gap > DIVERGENCE_GUARD {
                return Err(Error::Protocol(format!("round {round}: replicas diverged by {gap:e}")));
            }
        }

        platform.weights.step_toward(winner, alpha);
        chosen.push(winner);
        alphas.push(alpha);
        loss_trace.push(design_loss(&platform.replica, &platform.cache)?);
    }

    let result = SelectionResult {
        selected_indices: top_k(platform.weights.as_slice(), cfg.k_select)?,
        payments: payments(cfg.costs.as_ref(), &platform.weights),
        final_weights: platform.weights,
        loss_trace,
        chosen_per_round: chosen,
        alphas,
        first_round_scores,
    };
    Ok((result, log))
}

fn deliver_broadcasts(bus: &mut Bus, partition: &mut [SellerNode]) -> Result<()> {
    while let Some((route, msg)) = bus.recv() {
        if route != Route::Broadcast {
            return Err(Error::Protocol(format!("unexpected {route:?} message during broadcast")));
        }
        for s in partition.iter_mut() {
            s.receive(&msg)?;
        }
    }
    Ok(())
}

/// Platform side of a data-dependent start: pool the uplinked moments into
/// `σ_X²` and, for `λ < 1`, the regularized information matrix.
fn aggregate_init(bus: &mut Bus, n: usize, d: usize, lambda: f64) -> Result<RoundMessage> {
    let mut sums = vec![0.0; d];
    let mut sq = vec![0.0; d];
    let mut gram = DMatrix::zeros(d, d);
    let mut count = 0;
    let mut with_gram = false;
    while let Some((route, msg)) = bus.recv() {
        match (route, msg) {
            (Route::Uplink, RoundMessage::InitUplink { count: c, column_sums, column_sq_sums, gram_upper, .. }) => {
                count += c;
                sums.iter_mut().zip(&column_sums).for_each(|(a, b)| *a += b);
                sq.iter_mut().zip(&column_sq_sums).for_each(|(a, b)| *a += b);
                if !gram_upper.is_empty() {
                    with_gram = true;
                    gram += unpack_upper(d, &gram_upper);
                }
            }
            (_, other) => return Err(Error::Protocol(format!("unexpected message during init: {other:?}"))),
        }
    }
    if count != n {
        return Err(Error::Protocol(format!("init covered {count} rows, expected {n}")));
    }
    let nf = n as f64;
    let sigma2 = sums
        .iter()
        .zip(&sq)
        .map(|(s, q)| (q / nf - (s / nf) * (s / nf)).max(0.0))
        .sum::<f64>()
        / d as f64;
    if !(sigma2 > 0.0) && lambda > 0.0 {
        return Err(Error::Singular { lambda, rcond: 0.0 });
    }
    let info_upper = if with_gram {
        let mut a = gram * (1.0 - lambda);
        for k in 0..d {
            a[(k, k)] += lambda * sigma2;
        }
        pack_upper(&a)
    } else {
        Vec::new()
    };
    Ok(RoundMessage::InitBroadcast {
        lambda,
        sigma2,
        info_upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_gaussian;
    use crate::frank_wolfe::run_frank_wolfe;

    fn identity_cfg(steps: usize) -> FwConfig {
        FwConfig {
            steps,
            k_select: 5,
            init_mode: InitMode::Identity,
            ..FwConfig::default()
        }
    }

    fn problem(n: usize, d: usize, seed: u64) -> (FeatureMatrix, BuyerQuery) {
        let ds = gen_gaussian(n + 2, d, 0.1, None, seed).unwrap();
        let idx: Vec<usize> = (0..n).collect();
        let q: Vec<usize> = (n..n + 2).collect();
        (ds.x.select_rows(&idx).unwrap(), BuyerQuery::new(ds.x.select_rows(&q).unwrap()))
    }

    #[test]
    fn single_seller_matches_centralized() {
        let (x, q) = problem(40, 5, 1);
        let cfg = identity_cfg(20);
        let mut nodes = partition_round_robin(&x, 1).unwrap();
        let (fed, _) = run_federated_selection(&mut nodes, &q, &cfg).unwrap();
        let central = run_frank_wolfe(&x, &q, &cfg).unwrap();
        assert_eq!(fed, central);
    }

    #[test]
    fn overlapping_partition_rejected() {
        let (x, q) = problem(6, 3, 2);
        let mut nodes = partition_by_assignment(&x, &[vec![0, 1, 2], vec![2, 3, 4]]).unwrap();
        let err = run_federated_selection(&mut nodes, &q, &identity_cfg(2)).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
        let mut gappy = partition_by_assignment(&x, &[vec![0, 1], vec![3, 4]]).unwrap();
        assert!(run_federated_selection(&mut gappy, &q, &identity_cfg(2)).is_err());
    }

    #[test]
    fn tampered_replica_detected() {
        let (x, q) = problem(30, 4, 3);
        let mut nodes = partition_round_robin(&x, 3).unwrap();
        run_federated_selection(&mut nodes, &q, &identity_cfg(5)).unwrap();
        assert!(verify_replicas(&nodes));
        nodes[1].replica_mut().unwrap().matrix_mut()[(0, 0)] += 1e-6;
        assert!(!verify_replicas(&nodes));
    }

    #[test]
    fn data_init_uses_an_init_round() {
        let (x, q) = problem(60, 4, 4);
        let cfg = FwConfig {
            steps: 10,
            k_select: 3,
            lambda: 0.3,
            ..FwConfig::default()
        };
        let mut nodes = partition_round_robin(&x, 4).unwrap();
        let (fed, log) = run_federated_selection(&mut nodes, &q, &cfg).unwrap();
        let central = run_frank_wolfe(&x, &q, &cfg).unwrap();
        assert_eq!(fed.chosen_per_round, central.chosen_per_round);
        for (a, b) in fed.alphas.iter().zip(&central.alphas) {
            assert!((a - b).abs() < 1e-9);
        }
        let setup = log.setup().unwrap();
        // four sellers × (count + 2d moments + d(d+1)/2 gram)
        assert_eq!(setup.uplink_scalars, 4 * (1 + 8 + 10));
        assert_eq!(setup.broadcast_scalars, 2 * 4 + 2 + 10);
    }

    #[test]
    fn payload_sizes() {
        let ann = RoundMessage::WinnerAnnounce {
            alpha: 0.1,
            x_vector: vec![0.0; 10],
            global_index: 3,
        };
        assert_eq!(ann.payload_scalars(), 12);
        let up = RoundMessage::GradientUplink {
            seller_id: 0,
            coordinate_index: 0,
            score: 1.0,
        };
        assert_eq!(up.payload_scalars(), 1);
    }
}
