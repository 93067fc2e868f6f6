//! Acceptance suite. Runs every criterion at its stated scale and prints one
//! `PASS`/`FAIL` line per criterion; exits non-zero when any criterion
//! fails. Pass criterion ids (`c1` .. `c9`, `c57`) as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- c3 c4`.

mod common;

use std::time::Instant;

use firegrid::estimation::{
    minus_log_likelihood, mle_step, plus_log_likelihood, AreaCounts, AreaEstimate, Estimate,
    StepEstimate, StepObservation,
};
use firegrid::fire::{FireSimulator, SpreadParams};
use firegrid::grid::{GridMap, NodeId, NodeSet};
use firegrid::harness::{
    replication_streams, run_experiment, sequence_schedule, write_summary, ExperimentConfig,
    ExperimentResult, RunOptions,
};
use firegrid::lp::{solve_lp, DenseSimplex, LpStatus};
use firegrid::network::{
    auto_route, functional_indicator, Bus, BusKind, Functional, FunctionalProbabilities, Line,
    NetworkRisk, PowerNetwork,
};
use firegrid::online::{AdaptiveRestart, Algorithm, DetectorConfig, Learner};
use firegrid::opf::{
    expected_cost, realized_shedding, regret_constants, stochastic_opf, PlanOutcome,
    ScenarioProbabilities, Topology,
};
use firegrid::rng::{stream, StreamRng};
use rand::RngExt;
use statrs::distribution::{ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

/// Mean cumulative regret of `alg` at `t`.
fn regret(result: &ExperimentResult, alg: Algorithm, t: usize) -> f64 {
    result.record.at(alg, t).expect("recorded period").0
}

const BENCHMARKS: [Algorithm; 3] = [
    Algorithm::Naive,
    Algorithm::GlobalAverage,
    Algorithm::LikelihoodRatio,
];

fn regret_ordering(result: &ExperimentResult, horizon: usize) -> Outcome {
    let ours = regret(result, Algorithm::Adaptive, horizon);
    let others: Vec<(Algorithm, f64)> = BENCHMARKS
        .iter()
        .map(|&a| (a, regret(result, a, horizon)))
        .collect();
    let below_all = others.iter().all(|&(_, r)| ours < r);
    let worst = others.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
    let ratio_ok = worst >= 1.5 * ours;
    let listing: Vec<String> = std::iter::once((Algorithm::Adaptive, ours))
        .chain(others.iter().copied())
        .map(|(a, r)| format!("{}={r:.4}", a.name()))
        .collect();
    Outcome::new(
        below_all && ratio_ok,
        format!(
            "R({horizon}): {}; adaptive lowest: {below_all}; worst >= 1.5x adaptive: {ratio_ok}",
            listing.join(" ")
        ),
    )
}

fn criterion1(result: &ExperimentResult, cfg: &ExperimentConfig) -> Outcome {
    let mut o = regret_ordering(result, cfg.horizon);
    o.detail = format!(
        "{} ({} seq x {} reps, {:.0} s)",
        o.detail, cfg.sequences, cfg.reps, result.seconds
    );
    o
}

fn criterion2(result: &ExperimentResult, cfg: &ExperimentConfig) -> Outcome {
    let (early, late) = (500, cfg.horizon);
    let rate = |a: Algorithm, t: usize| regret(result, a, t) / t as f64;
    let ours_drops = rate(Algorithm::Adaptive, late) < rate(Algorithm::Adaptive, early);
    let mut detail = format!(
        "R(T)/T at {early} -> {late}: adaptive {:.3e} -> {:.3e}",
        rate(Algorithm::Adaptive, early),
        rate(Algorithm::Adaptive, late)
    );
    let mut flat = true;
    for a in [Algorithm::Naive, Algorithm::GlobalAverage] {
        let (e, l) = (rate(a, early), rate(a, late));
        flat &= l >= e;
        detail += &format!(", {} {e:.3e} -> {l:.3e}", a.name());
    }
    Outcome::new(ours_drops && flat, detail)
}

fn criterion9(first: &ExperimentResult, cfg: &ExperimentConfig) -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .expect("pool");
    let second = pool
        .install(|| run_experiment(cfg, &RunOptions::default()))
        .expect("rerun");
    let write = |name: &str, r: &ExperimentResult| {
        let p = dir.path().join(name);
        write_summary(&p, &r.record, &cfg.checkpoints).expect("summary");
        std::fs::read(p).expect("read back")
    };
    let (a, b) = (write("a.csv", first), write("b.csv", &second));
    Outcome::new(
        a == b,
        format!(
            "summary CSVs of {} bytes identical: {} (rerun on 3 threads)",
            a.len(),
            a == b
        ),
    )
}

fn grid_bus(id: u32, x: u32, y: u32, capacity: f64, cost: f64, load: f64) -> Bus {
    Bus {
        id,
        node: NodeId::new(x, y),
        kind: if capacity > 0.0 {
            BusKind::Generator("gas".into())
        } else {
            BusKind::Consumer
        },
        load,
        capacity,
        cost,
    }
}

fn grid_line(buses: &[Bus], a: usize, b: usize, capacity: f64) -> Line {
    Line {
        from: a,
        to: b,
        reactance: 0.1,
        capacity,
        cost: 1.0,
        path: auto_route(buses[a].node, buses[b].node, &[]).expect("route"),
    }
}

fn criterion3() -> Outcome {
    let buses = vec![
        grid_bus(1, 3, 10, 5.0, 2.0, 0.0),
        grid_bus(2, 10, 10, 0.0, 0.0, 2.0),
        grid_bus(3, 17, 10, 2.0, 6.0, 2.0),
    ];
    let lines = vec![grid_line(&buses, 0, 1, 3.0), grid_line(&buses, 1, 2, 3.0)];
    let net = PowerNetwork::new(buses, lines, 1, 20.0).unwrap();
    let probs = FunctionalProbabilities {
        bus: vec![0.9, 0.8, 0.85],
        line: vec![0.7, 0.6],
    };
    let scen = ScenarioProbabilities::new(&net, &probs, 12).unwrap();
    let topo = Topology::nominal(&net).unwrap();
    let plan = stochastic_opf(&net, &topo, &scen, &DenseSimplex::default()).unwrap();
    if plan.outcome != PlanOutcome::Optimal {
        return Outcome::new(false, "stochastic LP unexpectedly infeasible");
    }
    let n = 100_000;
    let mut rng = stream(3, &[3]);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let realized = Functional {
            bus: probs.bus.iter().map(|&p| rng.random::<f64>() < p).collect(),
            line: probs
                .line
                .iter()
                .map(|&p| rng.random::<f64>() < p)
                .collect(),
        };
        let cost = realized_shedding(&net, &plan.strategy, &realized).1;
        sum += cost;
        sum_sq += cost * cost;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) * n as f64 / (n as f64 - 1.0)).sqrt()
        / (n as f64).sqrt();
    let z = (plan.objective - mean).abs() / se;
    Outcome::new(
        z <= 3.0 && se > 0.0,
        format!(
            "LP objective {:.5}, Monte-Carlo {mean:.5} (se {se:.5}), |z| = {z:.2}",
            plan.objective
        ),
    )
}

fn criterion4() -> Outcome {
    let mut rng = stream(4, &[4]);
    let (mut worst, mut optimal, mut infeasible, mut bad) = (0.0f64, 0, 0, 0);
    for _ in 0..200 {
        let lp = common::random_lp(&mut rng, 6, 8);
        let sol = solve_lp(&lp).expect("solver runs");
        match common::brute_force_lp(&lp) {
            Some(best) => {
                let rel = (sol.objective - best).abs() / best.abs().max(1.0);
                if sol.status == LpStatus::Optimal {
                    optimal += 1;
                    worst = worst.max(rel);
                    bad += usize::from(rel > 1e-6);
                } else {
                    bad += 1;
                }
            }
            None => {
                infeasible += 1;
                bad += usize::from(sol.status != LpStatus::Infeasible);
            }
        }
    }
    Outcome::new(
        bad == 0,
        format!("{optimal} optimal, {infeasible} infeasible, {bad} mismatches, worst relative gap {worst:.2e}"),
    )
}

fn random_counts(rng: &mut StreamRng) -> AreaCounts {
    let mut c = AreaCounts::default();
    let scale = [3, 20, 200][rng.random_range(0..3)];
    for m in 1..=8 {
        if rng.random::<f64>() < 0.6 {
            c.ignited[m] = rng.random_range(0..=scale);
            c.spared[m] = rng.random_range(0..=scale);
        }
    }
    match rng.random_range(0..6) {
        0 => c.ignited = [0; 9],
        1 => c.spared = [0; 9],
        _ => {}
    }
    c.extinguished = rng.random_range(0..=scale);
    c.persisted = rng.random_range(0..=scale);
    c
}

/// Maximizer of `f` over the grid `k * 1e-4`, `k = 1..=9999`.
fn grid_argmax(f: impl Fn(f64) -> f64) -> f64 {
    (1..10_000)
        .map(|k| k as f64 * 1e-4)
        .map(|p| (p, f(p)))
        .fold(
            (0.0, f64::NEG_INFINITY),
            |b, x| if x.1 > b.1 { x } else { b },
        )
        .0
}

fn criterion5() -> Outcome {
    let mut rng = stream(5, &[5]);
    let (mut worst_plus, mut worst_minus, mut closed_form_misses, mut checked) =
        (0.0f64, 0.0f64, 0, 0);
    for _ in 0..500 {
        let areas = rng.random_range(1..=3);
        let obs = StepObservation {
            areas: (0..areas).map(|_| random_counts(&mut rng)).collect(),
        };
        let est = mle_step(&obs);
        for (c, e) in obs.areas.iter().zip(&est.areas) {
            if let Some(p) = e.plus {
                worst_plus =
                    worst_plus.max((p.value - grid_argmax(|q| plus_log_likelihood(c, q))).abs());
                checked += 1;
            }
            if let Some(m) = e.minus {
                let (a, b) = (c.extinguished as f64, c.persisted as f64);
                let closed = (a / (a + b)).clamp(1e-6, 1.0 - 1e-6);
                closed_form_misses += usize::from(m.value != closed);
                worst_minus =
                    worst_minus.max((m.value - grid_argmax(|q| minus_log_likelihood(c, q))).abs());
            }
        }
    }
    Outcome::new(
        worst_plus <= 2e-4 && worst_minus <= 2e-4 && closed_form_misses == 0,
        format!(
            "{checked} spread fits, max |mle - grid| = {worst_plus:.2e}; containment max gap {worst_minus:.2e}, \
             closed-form mismatches {closed_form_misses}"
        ),
    )
}

/// One-step functional frequencies against the closed form for one burning
/// cluster. Returns `(assets checked, assets strictly between 0 and 1,
/// worst |z|, failures)`.
fn functional_check(
    grid: &GridMap,
    net: &PowerNetwork,
    cluster: &[NodeId],
    params: &SpreadParams,
    seed: u64,
) -> (usize, usize, f64, usize) {
    let burning = NodeSet::from_nodes(grid, cluster.iter().copied()).unwrap();
    let probs = NetworkRisk::new(net, grid, &burning).probabilities(params);
    let expected: Vec<f64> = probs.bus.iter().chain(&probs.line).copied().collect();
    let n = 100_000;
    let mut hits = vec![0usize; expected.len()];
    let mut sim = FireSimulator::new(grid);
    let mut next = NodeSet::for_grid(grid);
    let mut rng = stream(seed, &[6]);
    for _ in 0..n {
        sim.step(&burning, params, &mut rng, &mut next);
        let f = functional_indicator(net, grid, &next);
        for (h, up) in hits.iter_mut().zip(f.bus.iter().chain(&f.line)) {
            *h += usize::from(*up);
        }
    }
    let (mut worst, mut failures) = (0.0f64, 0);
    for (&p, &h) in expected.iter().zip(&hits) {
        let freq = h as f64 / n as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        if sd == 0.0 {
            failures += usize::from(freq != p);
            continue;
        }
        let z = (freq - p).abs() / sd;
        worst = worst.max(z);
        failures += usize::from(z > 4.0);
    }
    let open = expected.iter().filter(|&&p| p > 0.0 && p < 1.0).count();
    (expected.len(), open, worst, failures)
}

fn criterion6() -> Outcome {
    let grid = GridMap::with_blocks(40, 40, 2).unwrap();
    let buses = vec![
        grid_bus(1, 20, 25, 4.0, 10.0, 0.0),
        grid_bus(2, 24, 19, 0.0, 0.0, 3.0),
        grid_bus(3, 16, 15, 0.0, 0.0, 3.0),
        grid_bus(4, 30, 30, 2.0, 6.0, 0.0),
    ];
    let lines = vec![
        grid_line(&buses, 0, 1, 4.0),
        grid_line(&buses, 1, 2, 4.0),
        grid_line(&buses, 0, 3, 4.0),
    ];
    let net = PowerNetwork::new(buses, lines, 3, 20.0).unwrap();
    let params = SpreadParams::new(vec![0.15, 0.3], vec![0.4, 0.6]).unwrap();
    // a 3 x 3 block and a diamond, both straddling the area boundary at y = 20
    let block: Vec<NodeId> = (19..22)
        .flat_map(|x| (19..22).map(move |y| NodeId::new(x, y)))
        .collect();
    let diamond = vec![
        NodeId::new(20, 18),
        NodeId::new(19, 19),
        NodeId::new(20, 19),
        NodeId::new(21, 19),
        NodeId::new(20, 20),
    ];
    let (mut checked, mut open, mut worst, mut failures) = (0, 0, 0.0f64, 0);
    for (k, cluster) in [block, diamond].iter().enumerate() {
        let (n, o, w, f) = functional_check(&grid, &net, cluster, &params, 60 + k as u64);
        checked += n;
        open += o;
        worst = worst.max(w);
        failures += f;
    }
    Outcome::new(
        failures == 0 && open > 0,
        format!(
            "{checked} asset probabilities ({open} strictly inside (0,1)) over 1e5 steps, worst |z| = {worst:.2}, \
             outside 4 sigma: {failures}"
        ),
    )
}

fn gaussian_step(
    rng: &mut StreamRng,
    normal: &Normal,
    p_plus: f64,
    p_minus: f64,
    nu: f64,
) -> StepEstimate {
    let mut draw = |mean: f64| Estimate {
        value: mean + nu.sqrt() * normal.inverse_cdf(rng.random::<f64>().max(1e-300)),
        nu,
    };
    StepEstimate {
        areas: vec![AreaEstimate {
            plus: Some(draw(p_plus)),
            minus: Some(draw(p_minus)),
        }],
    }
}

fn criterion7() -> Outcome {
    let (horizon, reps, nu, jump_at) = (500, 200, 1e-3, 250);
    let normal = Normal::standard();
    let config = DetectorConfig::default();
    let mut rng = stream(7, &[7]);
    let mut false_alarms = 0;
    for _ in 0..reps {
        let mut learner = AdaptiveRestart::new(1, horizon, &config);
        for t in 1..=horizon {
            learner.observe(t, &gaussian_step(&mut rng, &normal, 0.3, 0.25, nu));
        }
        false_alarms += usize::from(learner.detections() != (0, 0));
    }
    let mut detected = 0;
    let mut delays = Vec::new();
    for _ in 0..reps {
        let mut learner = AdaptiveRestart::new(1, horizon, &config);
        let mut seen = 0;
        for t in 1..=horizon {
            let p = if t >= jump_at { 0.7 } else { 0.3 };
            learner.observe(t, &gaussian_step(&mut rng, &normal, p, 0.25, nu));
            let d = learner.detections().0;
            if d > seen && t >= jump_at {
                if t <= jump_at + 30 {
                    detected += 1;
                    delays.push(t - jump_at);
                }
                break;
            }
            seen = d;
        }
    }
    let fa_rate = false_alarms as f64 / reps as f64;
    let det_rate = detected as f64 / reps as f64;
    let max_delay = delays.iter().max().copied().unwrap_or(0);
    Outcome::new(
        fa_rate <= 0.05 && det_rate >= 0.95,
        format!(
            "null false-alarm rate {fa_rate:.3}; jump of 0.4 detected within 30 periods in {det_rate:.3} \
             (max delay {max_delay})"
        ),
    )
}

fn criterion8() -> Outcome {
    let cfg = ExperimentConfig::builtin("ieee11").unwrap();
    let grid = cfg.grid().unwrap();
    let net = cfg.network(&grid).unwrap();
    let (k_plus, k_minus) = regret_constants(&net);
    let solver = DenseSimplex::default();
    let scenarios = |risk: &NetworkRisk, params: &SpreadParams| {
        ScenarioProbabilities::new(&net, &risk.probabilities(params), cfg.degree_cap).unwrap()
    };
    // gap in true expected cost between planning with `guess` and with `truth`
    let cost_gap = |burning: &NodeSet, truth: &SpreadParams, guess: &SpreadParams| {
        let topo =
            Topology::from_functional(&net, &functional_indicator(&net, &grid, burning)).unwrap();
        let risk = NetworkRisk::new(&net, &grid, burning);
        let true_scen = scenarios(&risk, truth);
        let best = stochastic_opf(&net, &topo, &true_scen, &solver).unwrap();
        let plan = stochastic_opf(&net, &topo, &scenarios(&risk, guess), &solver).unwrap();
        expected_cost(&net, &plan.strategy, &true_scen)
            - expected_cost(&net, &best.strategy, &true_scen)
    };

    // Burning sets where some asset is neither certain to survive nor sure
    // to fail. The dispatch reacts to the parameters only in a few of them,
    // so those where an extreme guess changes the plan are kept apart and
    // drawn more often.
    let extremes = [
        SpreadParams::uniform(1, 0.01, 0.99).unwrap(),
        SpreadParams::uniform(1, 0.99, 0.01).unwrap(),
    ];
    let (mut sensitive, mut other) = (Vec::new(), Vec::new());
    for rep in 0..16 {
        let schedule = sequence_schedule(&cfg, 0).unwrap();
        let (origins, mut fire_rng) = replication_streams(&cfg, &grid, 0, rep).unwrap();
        let mut burning = NodeSet::from_nodes(&grid, origins).unwrap();
        let mut next = NodeSet::for_grid(&grid);
        let mut sim = FireSimulator::new(&grid);
        for t in 1..600 {
            let params = schedule.params_at(t);
            let p = NetworkRisk::new(&net, &grid, &burning).probabilities(&params);
            if p.bus
                .iter()
                .chain(&p.line)
                .any(|&q| q > 1e-3 && q < 1.0 - 1e-3)
            {
                if extremes
                    .iter()
                    .any(|g| cost_gap(&burning, &params, g) > 1e-9)
                {
                    sensitive.push(burning.clone());
                } else {
                    other.push(burning.clone());
                }
            }
            sim.step(&burning, &params, &mut fire_rng, &mut next);
            std::mem::swap(&mut burning, &mut next);
        }
    }
    if sensitive.is_empty() && other.is_empty() {
        return Outcome::new(false, "no at-risk network state found");
    }

    let mut rng = stream(8, &[8]);
    let (mut violations, mut positive, mut worst_ratio) = (0, 0, 0.0f64);
    for k in 0..100 {
        let burning = if !sensitive.is_empty() && (k % 4 != 0 || other.is_empty()) {
            &sensitive[rng.random_range(0..sensitive.len())]
        } else {
            &other[rng.random_range(0..other.len())]
        };
        let truth =
            SpreadParams::uniform(1, rng.random_range(0.2..0.6), rng.random_range(0.1..0.4))
                .unwrap();
        // half small perturbations, half arbitrary guesses
        let guess = if k % 2 == 0 {
            let d_plus: f64 = rng.random_range(-0.15..0.15);
            let d_minus: f64 = rng.random_range(-0.15..0.15);
            SpreadParams::uniform(
                1,
                (truth.p_plus[0] + d_plus).clamp(0.01, 0.99),
                (truth.p_minus[0] + d_minus).clamp(0.01, 0.99),
            )
        } else {
            SpreadParams::uniform(
                1,
                rng.random_range(0.01..0.99),
                rng.random_range(0.01..0.99),
            )
        }
        .unwrap();
        let gap = cost_gap(burning, &truth, &guess);
        let bound = k_plus * (guess.p_plus[0] - truth.p_plus[0]).abs()
            + k_minus * (guess.p_minus[0] - truth.p_minus[0]).abs();
        violations += usize::from(gap > bound + 1e-9);
        positive += usize::from(gap > 1e-9);
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(gap / bound);
        }
    }
    Outcome::new(
        violations == 0,
        format!(
            "K+ = {k_plus:.3e}, K- = {k_minus:.3e}; {} of {} at-risk states are parameter-sensitive; \
             {positive}/100 perturbations with a positive gap, largest gap/bound {worst_ratio:.2e}, \
             violations {violations}",
            sensitive.len(),
            sensitive.len() + other.len()
        ),
    )
}

fn criterion57() -> Outcome {
    let mut cfg = ExperimentConfig::builtin("ieee57").unwrap();
    cfg.sequences = 1;
    cfg.reps = 2;
    cfg.horizon = 500;
    cfg.checkpoints.retain(|&c| c <= 500);
    let start = Instant::now();
    let result = match run_experiment(&cfg, &RunOptions::default()) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("run failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let order = regret_ordering(&result, cfg.horizon);
    Outcome::new(
        secs <= 3600.0 && order.pass,
        format!("1 seq x 2 reps x T=500 in {secs:.0} s; {}", order.detail),
    )
}

fn main() {
    let wanted: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let run = |id: &str| wanted.is_empty() || wanted.iter().any(|w| w == id);
    let mut lines: Vec<(String, Outcome)> = Vec::new();
    let mut record = |id: &str, name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!(
            "criterion {id} ({name}): {} [{:.1} s] {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        lines.push((id.to_string(), o));
    };

    if run("c1") || run("c2") || run("c9") {
        let cfg = ExperimentConfig::builtin("ieee11").unwrap();
        let result = run_experiment(&cfg, &RunOptions::default()).expect("11-bus experiment");
        if run("c1") {
            record("c1", "regret ordering", &|| criterion1(&result, &cfg));
        }
        if run("c2") {
            record("c2", "sub-linear regret", &|| criterion2(&result, &cfg));
        }
        if run("c9") {
            record("c9", "determinism", &|| criterion9(&result, &cfg));
        }
    }
    let rest: [(&str, &str, fn() -> Outcome); 7] = [
        ("c3", "extensive form vs Monte-Carlo", criterion3),
        ("c4", "LP oracle", criterion4),
        ("c5", "MLE oracle", criterion5),
        ("c6", "functional probability vs Monte-Carlo", criterion6),
        ("c7", "detector calibration", criterion7),
        ("c8", "cost-gap inequality", criterion8),
        ("c57", "57-bus desk run", criterion57),
    ];
    for (id, name, f) in rest {
        if run(id) {
            record(id, name, &f);
        }
    }

    let failed: Vec<&str> = lines
        .iter()
        .filter(|l| !l.1.pass)
        .map(|l| l.0.as_str())
        .collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        lines.len() - failed.len(),
        lines.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {}", failed.join(", "))
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
