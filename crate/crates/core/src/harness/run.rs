//! Replicated regret experiments.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, RngExt};
use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::estimation::{mle_step, StepObservation};
use crate::fire::{generate_schedule, FireSimulator, FireState, ParamSchedule, SpreadParams};
use crate::grid::{GridMap, NodeId, NodeSet};
use crate::lp::{DenseSimplex, LpSolver};
use crate::network::{
    functional_indicator, Functional, FunctionalProbabilities, NetworkRisk, PowerNetwork,
};
use crate::online::{Algorithm, DetectorConfig, Learner};
use crate::opf::{
    expected_cost, stochastic_opf, PlanOutcome, ScenarioProbabilities, Strategy, Topology,
};
use crate::rng::{self, tag};

/// Solved strategies kept per replication before the cache is reset.
const CACHE_LIMIT: usize = 4096;

/// Fire origins for one replication. With one area, or more origins than
/// areas, nodes are uniform over the grid. With as many origins as areas,
/// one node per area; with fewer, distinct areas are drawn first and a
/// node is drawn inside each.
pub fn choose_origins<R: Rng + ?Sized>(
    grid: &GridMap,
    count: usize,
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    let areas = grid.areas();
    if count == 0 {
        return Err(Error::Config("at least one fire origin is required".into()));
    }
    if areas == 1 || count > areas {
        if count > grid.len() {
            return Err(Error::Config(format!(
                "{count} origins do not fit on the grid"
            )));
        }
        let mut picks: Vec<usize> = sample(rng, grid.len(), count).into_vec();
        picks.sort_unstable();
        return Ok(picks.into_iter().map(|i| grid.node(i)).collect());
    }
    let chosen: Vec<usize> = if count == areas {
        (0..areas).collect()
    } else {
        let mut a = sample(rng, areas, count).into_vec();
        a.sort_unstable();
        a
    };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); areas];
    for i in 0..grid.len() {
        members[grid.area_at(i)].push(i);
    }
    chosen
        .into_iter()
        .map(|h| {
            let m = &members[h];
            if m.is_empty() {
                return Err(Error::Config(format!("area {} has no nodes", h + 1)));
            }
            Ok(grid.node(m[rng.random_range(0..m.len())]))
        })
        .collect()
}

/// The parameter schedule of sequence `seq`.
pub fn sequence_schedule(cfg: &ExperimentConfig, seq: usize) -> Result<ParamSchedule> {
    let mut r = rng::stream(cfg.seed, &[tag::SCHEDULE, seq as u64]);
    generate_schedule(&cfg.schedule_spec()?, &mut r)
}

/// Origins and fire random stream of replication `rep` of sequence `seq`.
pub fn replication_streams(
    cfg: &ExperimentConfig,
    grid: &GridMap,
    seq: usize,
    rep: usize,
) -> Result<(Vec<NodeId>, rng::StreamRng)> {
    let mut r = rng::stream(cfg.seed, &[tag::ORIGINS, seq as u64, rep as u64]);
    let origins = choose_origins(grid, cfg.origins, &mut r)?;
    Ok((
        origins,
        rng::stream(cfg.seed, &[tag::FIRE, seq as u64, rep as u64]),
    ))
}

/// One row of the per-step log.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub sequence: usize,
    pub rep: usize,
    pub t: usize,
    pub algorithm: Algorithm,
    pub detected_plus: usize,
    pub detected_minus: usize,
    /// Episode starts per area as `plus/minus`, joined by `;`.
    pub episode_starts: String,
    pub expected_cost: f64,
    pub regret_increment: f64,
}

/// A period where the dispatch LP was infeasible and the fallback was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incident {
    pub sequence: usize,
    pub rep: usize,
    pub t: usize,
    pub algorithm: Algorithm,
}

#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub sequence: usize,
    pub rep: usize,
    /// Cumulative regret per algorithm (config order), index `t - 1`.
    pub cumulative: Vec<Vec<f64>>,
    pub steps: Vec<StepRecord>,
    pub incidents: Vec<Incident>,
    /// Smallest regret increment seen (negative only through LP roundoff).
    pub min_increment: f64,
    pub seconds: f64,
}

/// Mean and standard error of cumulative regret across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretRecord {
    pub algorithms: Vec<Algorithm>,
    pub horizon: usize,
    pub runs: usize,
    /// `mean[a][t - 1]`
    pub mean: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
}

impl RegretRecord {
    pub fn from_runs(algorithms: &[Algorithm], horizon: usize, runs: &[ReplicationResult]) -> Self {
        let n = runs.len() as f64;
        let mut mean = vec![vec![0.0; horizon]; algorithms.len()];
        let mut se = vec![vec![0.0; horizon]; algorithms.len()];
        for a in 0..algorithms.len() {
            for t in 0..horizon {
                let m = runs.iter().map(|r| r.cumulative[a][t]).sum::<f64>() / n;
                let var = if runs.len() > 1 {
                    runs.iter()
                        .map(|r| (r.cumulative[a][t] - m).powi(2))
                        .sum::<f64>()
                        / (n - 1.0)
                } else {
                    f64::NAN
                };
                mean[a][t] = m;
                se[a][t] = (var / n).sqrt();
            }
        }
        RegretRecord {
            algorithms: algorithms.to_vec(),
            horizon,
            runs: runs.len(),
            mean,
            se,
        }
    }

    /// Mean and standard error of `algorithm` at time `t`.
    pub fn at(&self, algorithm: Algorithm, t: usize) -> Option<(f64, f64)> {
        let a = self.algorithms.iter().position(|&x| x == algorithm)?;
        (1..=self.horizon)
            .contains(&t)
            .then(|| (self.mean[a][t - 1], self.se[a][t - 1]))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub record: RegretRecord,
    pub replications: Vec<ReplicationResult>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep per-step records for the step log.
    pub step_log: bool,
}

/// Fixed inputs shared by every replication.
pub struct Setting<'a> {
    pub cfg: &'a ExperimentConfig,
    pub grid: &'a GridMap,
    pub net: &'a PowerNetwork,
    pub solver: &'a dyn LpSolver,
}

/// Runs every sequence and replication of `cfg` (in parallel on the current
/// rayon pool) and aggregates the regret curves.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    let start = Instant::now();
    let grid = cfg.grid()?;
    let net = cfg.network(&grid)?;
    let solver = DenseSimplex::default();
    let setting = Setting {
        cfg,
        grid: &grid,
        net: &net,
        solver: &solver,
    };
    let schedules = (0..cfg.sequences)
        .map(|s| sequence_schedule(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.sequences)
        .flat_map(|s| (0..cfg.reps).map(move |r| (s, r)))
        .collect();
    let replications = jobs
        .par_iter()
        .map(|&(s, r)| run_replication(&setting, &schedules[s], s, r, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        record: RegretRecord::from_runs(&cfg.algorithms, cfg.horizon, &replications),
        replications,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Caches solved strategies by planning topology and probabilities.
struct PlanCache {
    map: HashMap<Vec<u64>, (Strategy, PlanOutcome)>,
}

impl PlanCache {
    fn key(topo_key: &[u64], probs: &FunctionalProbabilities) -> Vec<u64> {
        let mut k = topo_key.to_vec();
        k.extend(probs.bus.iter().chain(&probs.line).map(|p| p.to_bits()));
        k
    }

    fn plan(
        &mut self,
        s: &Setting,
        topo: &Topology,
        topo_key: &[u64],
        probs: &FunctionalProbabilities,
    ) -> Result<(Strategy, PlanOutcome)> {
        let key = Self::key(topo_key, probs);
        if let Some(hit) = self.map.get(&key) {
            return Ok(hit.clone());
        }
        let scen = ScenarioProbabilities::new(s.net, probs, s.cfg.degree_cap)?;
        let plan = stochastic_opf(s.net, topo, &scen, s.solver)?;
        if self.map.len() >= CACHE_LIMIT {
            self.map.clear();
        }
        self.map.insert(key, (plan.strategy.clone(), plan.outcome));
        Ok((plan.strategy, plan.outcome))
    }
}

fn mask_key(f: &Functional) -> Vec<u64> {
    let mut key = vec![0u64; (f.bus.len() + f.line.len()).div_ceil(64).max(1)];
    for (k, &up) in f.bus.iter().chain(&f.line).enumerate() {
        if up {
            key[k / 64] |= 1 << (k % 64);
        }
    }
    key
}

fn format_starts(starts: &[(usize, usize)]) -> String {
    starts
        .iter()
        .map(|(p, m)| format!("{p}/{m}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Runs one fire realization against every algorithm.
///
/// At decision time `t` the operator knows the burning sets up to
/// `B_{t-1}`, so learners have seen the estimates of periods up to `t-2`
/// and must guess the parameters of period `t-1`, which drive the move to
/// `B_t`. Both the learners and the clairvoyant plan on the topology left
/// by `B_{t-1}`; costs are evaluated under the true parameters.
pub fn run_replication(
    s: &Setting,
    schedule: &ParamSchedule,
    sequence: usize,
    rep: usize,
    opts: &RunOptions,
) -> Result<ReplicationResult> {
    let start = Instant::now();
    let cfg = s.cfg;
    let horizon = cfg.horizon;
    let areas = s.grid.areas();
    let detector: DetectorConfig = cfg.detector();
    let (origins, mut fire_rng) = replication_streams(cfg, s.grid, sequence, rep)?;

    let mut learners: Vec<Option<Box<dyn Learner>>> = cfg
        .algorithms
        .iter()
        .map(|a| a.learner(areas, horizon, &detector))
        .collect();
    let mut cumulative = vec![vec![0.0; horizon]; cfg.algorithms.len()];
    let mut steps = Vec::new();
    let mut incidents = Vec::new();
    let mut min_increment = f64::INFINITY;
    let mut cache = PlanCache {
        map: HashMap::new(),
    };

    let mut sim = FireSimulator::new(s.grid);
    let mut prev = FireState::new(1, NodeSet::from_nodes(s.grid, origins.iter().copied())?);
    let mut next = NodeSet::for_grid(s.grid);
    let mut topo_cache: Option<(Vec<u64>, Topology)> = None;

    for t in 2..=horizon {
        if t >= 3 {
            // advance B_{t-2} -> B_{t-1} and hand the estimate of t-2 over
            let period = t - 2;
            sim.step(
                &prev.burning,
                &schedule.params_at(period),
                &mut fire_rng,
                &mut next,
            );
            let obs =
                StepObservation::from_counts(s.grid, sim.neighbor_counts(), &prev.burning, &next);
            let est = mle_step(&obs);
            for l in learners.iter_mut().flatten() {
                l.observe(period, &est);
            }
            std::mem::swap(&mut prev.burning, &mut next);
            prev.t = t - 1;
        }
        let burning = &prev.burning;
        let functional = functional_indicator(s.net, s.grid, burning);
        let key = mask_key(&functional);
        if topo_cache.as_ref().is_none_or(|(k, _)| *k != key) {
            topo_cache = Some((key.clone(), Topology::from_functional(s.net, &functional)?));
        }
        let topo = &topo_cache.as_ref().unwrap().1;

        let risk = NetworkRisk::new(s.net, s.grid, burning);
        let truth: SpreadParams = schedule.params_at(t - 1);
        let true_probs = risk.probabilities(&truth);
        let true_scen = ScenarioProbabilities::new(s.net, &true_probs, cfg.degree_cap)?;
        let (best, best_outcome) = cache.plan(s, topo, &key, &true_probs)?;
        let best_cost = expected_cost(s.net, &best, &true_scen);

        for (a, alg) in cfg.algorithms.iter().enumerate() {
            let (strategy, outcome) = match &learners[a] {
                Some(l) => cache.plan(s, topo, &key, &risk.probabilities(&l.params()))?,
                None => (best.clone(), best_outcome),
            };
            let cost = expected_cost(s.net, &strategy, &true_scen);
            let inc = if learners[a].is_some() {
                cost - best_cost
            } else {
                0.0
            };
            min_increment = min_increment.min(inc);
            cumulative[a][t - 1] = cumulative[a][t - 2] + inc;
            if outcome == PlanOutcome::Fallback {
                incidents.push(Incident {
                    sequence,
                    rep,
                    t,
                    algorithm: *alg,
                });
            }
            if opts.step_log {
                let (dp, dm, starts) = match &learners[a] {
                    Some(l) => {
                        let (dp, dm) = l.detections();
                        (dp, dm, format_starts(&l.episode_starts()))
                    }
                    None => (0, 0, String::new()),
                };
                steps.push(StepRecord {
                    sequence,
                    rep,
                    t,
                    algorithm: *alg,
                    detected_plus: dp,
                    detected_minus: dm,
                    episode_starts: starts,
                    expected_cost: cost,
                    regret_increment: inc,
                });
            }
        }
    }

    Ok(ReplicationResult {
        sequence,
        rep,
        cumulative,
        steps,
        incidents,
        min_increment,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// The regret bound `12 [K+ max_h sqrt(L+_h nu+) + K- max_h sqrt(L-_h nu-)]
/// sqrt(T ln 2T) + 2 (K+ + K-) / T` for per-area change counts `L+_h`,
/// `L-_h` and variance-proxy caps `nu+`, `nu-`.
pub fn theorem2_bound(
    horizon: usize,
    changes_plus: &[usize],
    changes_minus: &[usize],
    nu_plus: f64,
    nu_minus: f64,
    k_plus: f64,
    k_minus: f64,
) -> f64 {
    let t = horizon as f64;
    let worst = |changes: &[usize], nu: f64| {
        changes
            .iter()
            .map(|&c| (c as f64 * nu).sqrt())
            .fold(0.0, f64::max)
    };
    12.0 * (k_plus * worst(changes_plus, nu_plus) + k_minus * worst(changes_minus, nu_minus))
        * (t * (2.0 * t).ln()).sqrt()
        + 2.0 * (k_plus + k_minus) / t
}
