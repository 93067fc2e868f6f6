//! DC optimal power flow: the deterministic dispatch, the scenario-expanded
//! stochastic dispatch under fire risk, and cost evaluation of strategies.
//!
//! Line flows are not decision variables here. They follow from the
//! generator outputs through the PTDF, `beta = PTDF (alpha - L)`, so every
//! formulation is written in the generator outputs (plus shedding
//! auxiliaries for the stochastic one).

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpSolver, LpStatus, Row, INF};
use crate::network::{
    compute_ptdf, scenario_weights, Functional, FunctionalProbabilities, PowerNetwork, Ptdf,
};

/// Scenario terms with a smaller objective weight are left out of the LP.
pub const MIN_SCENARIO_WEIGHT: f64 = 1e-15;

/// Generator outputs per bus and flows per line (positive along the line's
/// `from -> to` orientation).
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Strategy {
    pub fn zero(net: &PowerNetwork) -> Self {
        Strategy {
            alpha: vec![0.0; net.buses.len()],
            beta: vec![0.0; net.lines.len()],
        }
    }

    pub fn generation_cost(&self, net: &PowerNetwork) -> f64 {
        net.buses
            .iter()
            .zip(&self.alpha)
            .map(|(b, a)| b.cost * a)
            .sum()
    }

    /// Net flow into bus `i` over the lines in `lines`.
    pub fn inflow(
        &self,
        net: &PowerNetwork,
        i: usize,
        lines: impl IntoIterator<Item = usize>,
    ) -> f64 {
        lines
            .into_iter()
            .map(|l| net.lines[l].inflow_sign(i) * self.beta[l])
            .sum()
    }
}

/// The grid as known when planning: assets already out of service are
/// removed and the PTDF is recomputed per island.
#[derive(Debug, Clone)]
pub struct Topology {
    pub ptdf: Ptdf,
    pub bus_up: Vec<bool>,
    pub line_up: Vec<bool>,
    /// Whether each island has any generating capacity.
    pub island_has_gen: Vec<bool>,
}

impl Topology {
    pub fn nominal(net: &PowerNetwork) -> Result<Self> {
        Self::from_functional(net, &Functional::all(net))
    }

    pub fn from_functional(net: &PowerNetwork, f: &Functional) -> Result<Self> {
        let ptdf = compute_ptdf(net, &f.failed_lines(), &f.failed_buses())?;
        let island_has_gen = ptdf
            .islands
            .iter()
            .map(|m| m.iter().any(|&i| net.buses[i].capacity > 0.0))
            .collect();
        Ok(Topology {
            line_up: (0..net.lines.len())
                .map(|l| ptdf.line_island[l].is_some())
                .collect(),
            bus_up: f.bus.clone(),
            ptdf,
            island_has_gen,
        })
    }

    /// Whether line `l` carries flow: in service and in an island with
    /// generation. Islands without generation get no injections at all.
    pub fn carries_flow(&self, l: usize) -> bool {
        self.ptdf.line_island[l].is_some_and(|k| self.island_has_gen[k])
    }
}

/// Flows as affine functions of the generator-output variables.
#[derive(Debug, Clone)]
pub struct FlowModel {
    /// LP variable of each bus's output, if it can generate.
    pub alpha_var: Vec<Option<usize>>,
    pub flow_const: Vec<f64>,
    pub flow_coef: Vec<Vec<(usize, f64)>>,
}

impl FlowModel {
    fn new(net: &PowerNetwork, topo: &Topology, lp: &mut LinearProgram) -> Self {
        let alpha_var: Vec<Option<usize>> = net
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| {
                (topo.bus_up[i] && b.capacity > 0.0).then(|| lp.add_var(b.cost, 0.0, b.capacity))
            })
            .collect();
        let mut flow_const = vec![0.0; net.lines.len()];
        let mut flow_coef = vec![Vec::new(); net.lines.len()];
        for l in 0..net.lines.len() {
            if !topo.carries_flow(l) {
                continue;
            }
            for (k, b) in net.buses.iter().enumerate() {
                let f = topo.ptdf.get(l, k);
                if f == 0.0 || !topo.bus_up[k] {
                    continue;
                }
                flow_const[l] -= f * b.load;
                if let Some(v) = alpha_var[k] {
                    flow_coef[l].push((v, f));
                }
            }
        }
        FlowModel {
            alpha_var,
            flow_const,
            flow_coef,
        }
    }

    fn cap_rows(&self, net: &PowerNetwork, topo: &Topology, lp: &mut LinearProgram) {
        for (l, line) in net.lines.iter().enumerate() {
            if topo.carries_flow(l) {
                let c = self.flow_const[l];
                lp.add_row(Row::range(
                    self.flow_coef[l].clone(),
                    -line.capacity - c,
                    line.capacity - c,
                ));
            }
        }
    }

    pub fn strategy(&self, x: &[f64]) -> Strategy {
        let alpha = self
            .alpha_var
            .iter()
            .map(|v| v.map_or(0.0, |j| x[j]))
            .collect();
        let beta = self
            .flow_const
            .iter()
            .zip(&self.flow_coef)
            .map(|(c, coef)| c + coef.iter().map(|&(j, f)| f * x[j]).sum::<f64>())
            .collect();
        Strategy { alpha, beta }
    }
}

/// Deterministic dispatch with every live asset assumed to stay up:
/// minimum generation cost subject to per-island balance, capacities and
/// flow limits.
pub fn static_opf(net: &PowerNetwork, topo: &Topology, solver: &dyn LpSolver) -> Result<Strategy> {
    let mut lp = LinearProgram::new();
    let model = FlowModel::new(net, topo, &mut lp);
    for members in &topo.ptdf.islands {
        let load: f64 = members.iter().map(|&i| net.buses[i].load).sum();
        let coeffs: Vec<(usize, f64)> = members
            .iter()
            .filter_map(|&i| model.alpha_var[i])
            .map(|v| (v, 1.0))
            .collect();
        lp.add_row(Row::eq(coeffs, load));
    }
    model.cap_rows(net, topo, &mut lp);
    let sol = solver.solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(model.strategy(&sol.x)),
        LpStatus::Infeasible => Err(Error::Infeasible(
            "no dispatch meets every load within capacity and flow limits".into(),
        )),
        LpStatus::Unbounded => Err(Error::Unbounded("dispatch problem is unbounded".into())),
    }
}

/// In-service probabilities of every bus and of every subset of its lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioProbabilities {
    pub bus: Vec<f64>,
    /// `subsets[i][s]`: probability that exactly the lines in subset `s` of
    /// bus `i`'s incident lines are in service.
    pub subsets: Vec<Vec<f64>>,
}

impl ScenarioProbabilities {
    pub fn new(
        net: &PowerNetwork,
        probs: &FunctionalProbabilities,
        degree_cap: usize,
    ) -> Result<Self> {
        let subsets = (0..net.buses.len())
            .map(|i| scenario_weights(net, &probs.line, i, degree_cap))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScenarioProbabilities {
            bus: probs.bus.clone(),
            subsets,
        })
    }
}

/// Lines of subset `s` among bus `i`'s incident lines.
fn subset_lines(net: &PowerNetwork, i: usize, s: usize) -> impl Iterator<Item = usize> + '_ {
    net.incident(i)
        .iter()
        .enumerate()
        .filter(move |(k, _)| s >> k & 1 == 1)
        .map(|(_, &l)| l)
}

/// The scenario-expanded stochastic dispatch as an LP, with the flow model
/// that maps its solution back to a strategy.
pub fn stochastic_lp(
    net: &PowerNetwork,
    topo: &Topology,
    scen: &ScenarioProbabilities,
) -> (LinearProgram, FlowModel) {
    let mut lp = LinearProgram::new();
    let model = FlowModel::new(net, topo, &mut lp);
    model.cap_rows(net, topo, &mut lp);
    for (i, bus) in net.buses.iter().enumerate() {
        // Lines that carry no flow contribute nothing to the inflow, so
        // subsets differing only in them share one shedding variable.
        let live = net
            .incident(i)
            .iter()
            .enumerate()
            .filter(|(_, &l)| topo.carries_flow(l))
            .fold(0usize, |m, (k, _)| m | 1 << k);
        let mut merged = vec![0.0; scen.subsets[i].len()];
        for (s, &rho) in scen.subsets[i].iter().enumerate() {
            merged[s & live] += rho;
        }
        for (s, &rho) in merged.iter().enumerate() {
            let weight = net.shedding_cost * scen.bus[i] * rho;
            if weight < MIN_SCENARIO_WEIGHT {
                continue;
            }
            // H >= L - alpha_i - sum_{l in s} inflow_l
            let h = lp.add_var(weight, 0.0, INF);
            let mut coeffs = vec![(h, 1.0)];
            if let Some(v) = model.alpha_var[i] {
                coeffs.push((v, 1.0));
            }
            let mut rhs = bus.load;
            for l in subset_lines(net, i, s) {
                let sign = net.lines[l].inflow_sign(i);
                rhs -= sign * model.flow_const[l];
                coeffs.extend(model.flow_coef[l].iter().map(|&(v, f)| (v, sign * f)));
            }
            lp.add_row(Row::ge(merge(coeffs), rhs));
        }
    }
    (lp, model)
}

fn merge(mut coeffs: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    coeffs.sort_by_key(|c| c.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
    for (j, a) in coeffs {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => out.push((j, a)),
        }
    }
    out.retain(|c| c.1 != 0.0);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanOutcome {
    Optimal,
    /// The LP had no feasible point; the fallback strategy was used.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub strategy: Strategy,
    /// Expected cost reported by the LP (fallback: evaluated directly).
    pub objective: f64,
    pub outcome: PlanOutcome,
}

/// Solves the stochastic dispatch. When it is infeasible (flow limits
/// cannot be met), returns the fallback strategy instead.
pub fn stochastic_opf(
    net: &PowerNetwork,
    topo: &Topology,
    scen: &ScenarioProbabilities,
    solver: &dyn LpSolver,
) -> Result<Plan> {
    let (lp, model) = stochastic_lp(net, topo, scen);
    let sol = solver.solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(Plan {
            strategy: model.strategy(&sol.x),
            objective: sol.objective,
            outcome: PlanOutcome::Optimal,
        }),
        LpStatus::Infeasible => {
            let strategy = fallback_strategy(net, topo);
            Ok(Plan {
                objective: expected_cost(net, &strategy, scen),
                strategy,
                outcome: PlanOutcome::Fallback,
            })
        }
        LpStatus::Unbounded => Err(Error::Unbounded("stochastic dispatch is unbounded".into())),
    }
}

/// Last-resort dispatch: every live generator runs at the same fraction of
/// its capacity, enough to cover the total load if possible; no flows.
pub fn fallback_strategy(net: &PowerNetwork, topo: &Topology) -> Strategy {
    let cap: f64 = net
        .buses
        .iter()
        .enumerate()
        .filter(|(i, _)| topo.bus_up[*i])
        .map(|(_, b)| b.capacity)
        .sum();
    let frac = if cap > 0.0 {
        (net.total_load() / cap).min(1.0)
    } else {
        0.0
    };
    Strategy {
        alpha: net
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| {
                if topo.bus_up[i] {
                    b.capacity * frac
                } else {
                    0.0
                }
            })
            .collect(),
        beta: vec![0.0; net.lines.len()],
    }
}

/// Generation cost plus expected shedding penalty of `strategy`, with
/// buses and lines in service independently per `scen`.
pub fn expected_cost(net: &PowerNetwork, strategy: &Strategy, scen: &ScenarioProbabilities) -> f64 {
    let mut shed = 0.0;
    for (i, bus) in net.buses.iter().enumerate() {
        if scen.bus[i] == 0.0 {
            continue;
        }
        let mut e = 0.0;
        for (s, &rho) in scen.subsets[i].iter().enumerate() {
            if rho == 0.0 {
                continue;
            }
            let gap =
                bus.load - strategy.alpha[i] - strategy.inflow(net, i, subset_lines(net, i, s));
            e += rho * gap.max(0.0);
        }
        shed += scen.bus[i] * e;
    }
    strategy.generation_cost(net) + net.shedding_cost * shed
}

/// Load shed at each bus when `strategy` meets the realized outages, and
/// the resulting total cost. Out-of-service buses have no load to shed.
pub fn realized_shedding(
    net: &PowerNetwork,
    strategy: &Strategy,
    realized: &Functional,
) -> (Vec<f64>, f64) {
    let ls: Vec<f64> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, bus)| {
            if !realized.bus[i] {
                return 0.0;
            }
            let supply = strategy.alpha[i].min(bus.capacity);
            let inflow: f64 = net
                .incident(i)
                .iter()
                .map(|&l| {
                    let cap = if realized.line[l] {
                        net.lines[l].capacity
                    } else {
                        0.0
                    };
                    let b = net.lines[l].inflow_sign(i) * strategy.beta[l];
                    b.signum() * b.abs().min(cap)
                })
                .sum();
            (bus.load - supply - inflow).max(0.0)
        })
        .collect();
    let total = strategy.generation_cost(net) + net.shedding_cost * ls.iter().sum::<f64>();
    (ls, total)
}

/// Sensitivity constants `(K+, K-)` bounding the expected-cost gap of the
/// optimal strategy under wrong spread and containment probabilities.
pub fn regret_constants(net: &PowerNetwork) -> (f64, f64) {
    let ball = {
        let w = 2.0 * net.d_bar as f64 + 1.0;
        w * w
    };
    let mut kp = 0.0;
    let mut km = 0.0;
    for (i, bus) in net.buses.iter().enumerate() {
        let inc = net.incident(i);
        let scenarios = 2f64.powi(inc.len() as i32);
        let mut nodes: Vec<_> = inc
            .iter()
            .flat_map(|&l| net.lines[l].path.iter().copied())
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        let delta = nodes.len() as f64;
        let scale =
            bus.capacity + bus.load + inc.iter().map(|&l| net.lines[l].capacity).sum::<f64>();
        kp += (scenarios + 3.0) * (delta + 2.0 * ball) * scale;
        km += scenarios * (ball + delta) * scale;
    }
    (2.0 * net.shedding_cost * kp, 2.0 * net.shedding_cost * km)
}
