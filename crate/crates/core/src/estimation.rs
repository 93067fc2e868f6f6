//! Per-period maximum-likelihood estimates of the spread and containment
//! probabilities, their variance proxies, interval averages over estimate
//! histories, and standardized-residual diagnostics.
//!
//! A period's data for area `h` are the transitions of nodes in that area:
//! non-burning nodes with at least one burning neighbor (any area) either
//! ignite or are spared, and burning nodes are either put out or persist.

use std::path::Path;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fire::{FireSimulator, FireState, ParamSchedule};
use crate::grid::{GridMap, NodeSet};

/// Estimates are clamped to `[EPS, 1 - EPS]`.
pub const EPS: f64 = 1e-6;
const GOLDEN_TOL: f64 = 1e-8;

/// Highest possible number of burning king-move neighbors.
pub const MAX_NEIGHBORS: usize = 8;

/// Transition counts for one area over one period. Index `m` of `ignited`
/// and `spared` counts frontier nodes with `m` burning neighbors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AreaCounts {
    pub ignited: [u64; MAX_NEIGHBORS + 1],
    pub spared: [u64; MAX_NEIGHBORS + 1],
    pub extinguished: u64,
    pub persisted: u64,
}

impl AreaCounts {
    pub fn frontier(&self) -> u64 {
        self.ignited.iter().chain(&self.spared).sum()
    }

    pub fn burning(&self) -> u64 {
        self.extinguished + self.persisted
    }

    fn scaled(&self, k: u64) -> Self {
        AreaCounts {
            ignited: self.ignited.map(|c| c * k),
            spared: self.spared.map(|c| c * k),
            extinguished: self.extinguished * k,
            persisted: self.persisted * k,
        }
    }
}

/// Counts for every area over one period `t -> t+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepObservation {
    pub areas: Vec<AreaCounts>,
}

impl StepObservation {
    pub fn empty(areas: usize) -> Self {
        StepObservation {
            areas: vec![AreaCounts::default(); areas],
        }
    }

    pub fn from_states(grid: &GridMap, before: &FireState, after: &FireState) -> Self {
        let mut sim = FireSimulator::new(grid);
        sim.count_neighbors(&before.burning);
        Self::from_counts(grid, sim.neighbor_counts(), &before.burning, &after.burning)
    }

    /// Builds counts given burning-neighbor counts of `before`.
    pub fn from_counts(grid: &GridMap, counts: &[u8], before: &NodeSet, after: &NodeSet) -> Self {
        // hist[h][(was * 2 + is) * 9 + m], filled without data-dependent branches
        let mut hist = vec![[0u64; 36]; grid.areas()];
        let (bw, aw) = (before.words(), after.words());
        for (i, &m) in counts.iter().enumerate() {
            let was = (bw[i >> 6] >> (i & 63) & 1) as usize;
            let is = (aw[i >> 6] >> (i & 63) & 1) as usize;
            hist[grid.area_at(i)][(was * 2 + is) * 9 + m as usize] += 1;
        }
        let mut obs = Self::empty(grid.areas());
        for (c, h) in obs.areas.iter_mut().zip(&hist) {
            for m in 1..=MAX_NEIGHBORS {
                c.spared[m] = h[m];
                c.ignited[m] = h[9 + m];
            }
            c.extinguished = h[18..27].iter().sum();
            c.persisted = h[27..36].iter().sum();
        }
        obs
    }

    /// Same counts repeated `k` times.
    pub fn scaled(&self, k: u64) -> Self {
        StepObservation {
            areas: self.areas.iter().map(|a| a.scaled(k)).collect(),
        }
    }
}

/// A point estimate with its variance proxy (`f64::INFINITY` when the data
/// carry no information).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub nu: f64,
}

/// Estimates for one area; `None` where the period gave no data.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AreaEstimate {
    pub plus: Option<Estimate>,
    pub minus: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepEstimate {
    pub areas: Vec<AreaEstimate>,
}

/// Which of the two probabilities a stream refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Plus,
    Minus,
}

impl Stream {
    pub const BOTH: [Stream; 2] = [Stream::Plus, Stream::Minus];

    pub fn label(self) -> &'static str {
        match self {
            Stream::Plus => "plus",
            Stream::Minus => "minus",
        }
    }
}

impl AreaEstimate {
    pub fn get(&self, stream: Stream) -> Option<Estimate> {
        match stream {
            Stream::Plus => self.plus,
            Stream::Minus => self.minus,
        }
    }
}

/// Log-likelihood of the spread terms of one area at `p`.
pub fn plus_log_likelihood(c: &AreaCounts, p: f64) -> f64 {
    let q = 1.0 - p;
    let mut ll = 0.0;
    for m in 1..=MAX_NEIGHBORS {
        if c.ignited[m] > 0 {
            ll += c.ignited[m] as f64 * (-q.powi(m as i32)).ln_1p();
        }
        if c.spared[m] > 0 {
            ll += (c.spared[m] * m as u64) as f64 * q.ln();
        }
    }
    ll
}

/// Log-likelihood of the containment terms of one area at `p`.
pub fn minus_log_likelihood(c: &AreaCounts, p: f64) -> f64 {
    let mut ll = 0.0;
    if c.extinguished > 0 {
        ll += c.extinguished as f64 * p.ln();
    }
    if c.persisted > 0 {
        ll += c.persisted as f64 * (1.0 - p).ln();
    }
    ll
}

/// Full log-likelihood. Impossible data under boundary probabilities give
/// negative infinity.
pub fn log_likelihood(p_plus: &[f64], p_minus: &[f64], obs: &StepObservation) -> f64 {
    obs.areas
        .iter()
        .enumerate()
        .map(|(h, c)| plus_log_likelihood(c, p_plus[h]) + minus_log_likelihood(c, p_minus[h]))
        .sum()
}

/// Negative second derivative of the spread terms at `p`.
pub fn plus_information(c: &AreaCounts, p: f64) -> f64 {
    let q = 1.0 - p;
    let mut info = 0.0;
    for m in 1..=MAX_NEIGHBORS {
        let mf = m as f64;
        if c.ignited[m] > 0 {
            let qm = q.powi(m as i32);
            let denom = (1.0 - qm) * (1.0 - qm);
            info += c.ignited[m] as f64 * mf * q.powi(m as i32 - 2) * (mf - 1.0 + qm) / denom;
        }
        if c.spared[m] > 0 {
            info += c.spared[m] as f64 * mf / (q * q);
        }
    }
    info
}

/// Negative second derivative of the containment terms at `p`.
pub fn minus_information(c: &AreaCounts, p: f64) -> f64 {
    c.extinguished as f64 / (p * p) + c.persisted as f64 / ((1.0 - p) * (1.0 - p))
}

fn inverse(info: f64) -> f64 {
    if info > 0.0 && info.is_finite() {
        1.0 / info
    } else {
        f64::INFINITY
    }
}

/// Maximizes a unimodal function on `[lo, hi]`, returning the best of the
/// golden-section point and the two endpoints.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid, f(mid));
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best.0
}

/// Spread-probability estimate for one area, or `None` without frontier data.
pub fn mle_plus(c: &AreaCounts) -> Option<Estimate> {
    if c.frontier() == 0 {
        return None;
    }
    let value = golden_section_max(|p| plus_log_likelihood(c, p), EPS, 1.0 - EPS, GOLDEN_TOL);
    Some(Estimate {
        value,
        nu: inverse(plus_information(c, value)),
    })
}

/// Containment-probability estimate `a / (a + b)`, clamped.
pub fn mle_minus(c: &AreaCounts) -> Option<Estimate> {
    let n = c.burning();
    if n == 0 {
        return None;
    }
    let value = (c.extinguished as f64 / n as f64).clamp(EPS, 1.0 - EPS);
    Some(Estimate {
        value,
        nu: inverse(minus_information(c, value)),
    })
}

pub fn mle_step(obs: &StepObservation) -> StepEstimate {
    StepEstimate {
        areas: obs
            .areas
            .iter()
            .map(|c| AreaEstimate {
                plus: mle_plus(c),
                minus: mle_minus(c),
            })
            .collect(),
    }
}

/// Per-area `(nu_plus, nu_minus)` at the given estimate, infinity where no
/// information is available.
pub fn variance_proxy(obs: &StepObservation, est: &StepEstimate) -> Vec<(f64, f64)> {
    obs.areas
        .iter()
        .zip(&est.areas)
        .map(|(c, e)| {
            let nu_p = e
                .plus
                .map_or(f64::INFINITY, |p| inverse(plus_information(c, p.value)));
            let nu_m = e
                .minus
                .map_or(f64::INFINITY, |p| inverse(minus_information(c, p.value)));
            (nu_p, nu_m)
        })
        .collect()
}

/// Estimates of one stream in one area, keyed by the period that produced
/// them, with prefix sums for constant-time interval averages.
#[derive(Debug, Clone, Default)]
pub struct EstimateSeries {
    periods: Vec<usize>,
    values: Vec<f64>,
    value_sums: Vec<f64>,
    nu_sums: Vec<f64>,
}

impl EstimateSeries {
    pub fn new() -> Self {
        EstimateSeries {
            value_sums: vec![0.0],
            nu_sums: vec![0.0],
            ..Default::default()
        }
    }

    /// Appends the estimate for `period`; periods must increase.
    pub fn push(&mut self, period: usize, est: Estimate) {
        debug_assert!(self.periods.last().is_none_or(|&p| p < period));
        self.periods.push(period);
        self.values.push(est.value);
        self.value_sums
            .push(self.value_sums.last().unwrap() + est.value);
        self.nu_sums.push(self.nu_sums.last().unwrap() + est.nu);
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn periods(&self) -> &[usize] {
        &self.periods
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// Index of the first entry with period `>= t`.
    pub fn first_at_or_after(&self, t: usize) -> usize {
        self.periods.partition_point(|&p| p < t)
    }

    /// Mean and summed variance proxy over entries `i..j` (half-open).
    pub fn range_stats(&self, i: usize, j: usize) -> (f64, f64) {
        debug_assert!(i < j && j <= self.len());
        let n = (j - i) as f64;
        (
            (self.value_sums[j] - self.value_sums[i]) / n,
            self.nu_sums[j] - self.nu_sums[i],
        )
    }

    /// Mean and summed variance proxy over the periods in `t1..=t2` that
    /// have data; `None` when none do.
    pub fn interval_average(&self, t1: usize, t2: usize) -> Option<(f64, f64)> {
        let i = self.first_at_or_after(t1);
        let j = self.first_at_or_after(t2 + 1);
        (i < j).then(|| self.range_stats(i, j))
    }
}

/// Standardized residuals `(estimate - truth) / sqrt(nu)` of one stream in
/// one area, with normal Q-Q pairs and a Kolmogorov-Smirnov statistic.
#[derive(Debug, Clone)]
pub struct ResidualSeries {
    pub area: usize,
    pub stream: Stream,
    /// `(period, residual)` in period order.
    pub residuals: Vec<(usize, f64)>,
    /// `(normal quantile, sorted residual)`.
    pub qq: Vec<(f64, f64)>,
    pub ks_statistic: f64,
}

impl ResidualSeries {
    /// Asymptotic 1% critical value of the one-sample KS statistic.
    pub fn ks_critical_1pct(&self) -> f64 {
        1.628 / (self.residuals.len() as f64).sqrt()
    }
}

/// Kolmogorov-Smirnov distance between the sample and the standard normal.
pub fn ks_statistic_normal(sorted: &[f64]) -> f64 {
    let normal = Normal::standard();
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            let f = normal.cdf(z);
            (f - k as f64 / n).max((k + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Residual diagnostics for a trajectory whose true schedule is known.
/// Period `t` compares the estimate from `B_t -> B_{t+1}` with the
/// parameters in effect at `t`. Periods whose transition has fewer than
/// `min_count` frontier nodes (for spread) or burning nodes (for
/// containment) are left out. Areas and streams without data are omitted.
pub fn residual_analysis(
    grid: &GridMap,
    trajectory: &[FireState],
    schedule: &ParamSchedule,
    min_count: u64,
) -> Result<Vec<ResidualSeries>> {
    if schedule.areas() != grid.areas() {
        return Err(Error::Config(
            "schedule and grid disagree on area count".into(),
        ));
    }
    let areas = grid.areas();
    let mut res: Vec<[Vec<(usize, f64)>; 2]> = vec![[Vec::new(), Vec::new()]; areas];
    let mut sim = FireSimulator::new(grid);
    for pair in trajectory.windows(2) {
        let t = pair[0].t;
        sim.count_neighbors(&pair[0].burning);
        let obs = StepObservation::from_counts(
            grid,
            sim.neighbor_counts(),
            &pair[0].burning,
            &pair[1].burning,
        );
        let est = mle_step(&obs);
        let truth = schedule.params_at(t);
        for h in 0..areas {
            let c = &obs.areas[h];
            if let Some(e) = est.areas[h]
                .plus
                .filter(|_| c.frontier() >= min_count.max(1))
            {
                res[h][0].push((t, (e.value - truth.p_plus[h]) / e.nu.sqrt()));
            }
            if let Some(e) = est.areas[h]
                .minus
                .filter(|_| c.burning() >= min_count.max(1))
            {
                res[h][1].push((t, (e.value - truth.p_minus[h]) / e.nu.sqrt()));
            }
        }
    }
    let normal = Normal::standard();
    let mut out = Vec::new();
    for (h, streams) in res.into_iter().enumerate() {
        for (stream, residuals) in Stream::BOTH.into_iter().zip(streams) {
            if residuals.is_empty() {
                continue;
            }
            let mut sorted: Vec<f64> = residuals.iter().map(|r| r.1).collect();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len() as f64;
            let qq = sorted
                .iter()
                .enumerate()
                .map(|(k, &z)| (normal.inverse_cdf((k as f64 + 0.5) / n), z))
                .collect();
            out.push(ResidualSeries {
                area: h,
                stream,
                ks_statistic: ks_statistic_normal(&sorted),
                residuals,
                qq,
            });
        }
    }
    Ok(out)
}

/// Per-period estimates for a whole trajectory; entry `k` describes the
/// transition out of `trajectory[k]`.
pub fn estimate_trajectory(grid: &GridMap, trajectory: &[FireState]) -> Vec<(usize, StepEstimate)> {
    let mut sim = FireSimulator::new(grid);
    trajectory
        .windows(2)
        .map(|pair| {
            sim.count_neighbors(&pair[0].burning);
            let obs = StepObservation::from_counts(
                grid,
                sim.neighbor_counts(),
                &pair[0].burning,
                &pair[1].burning,
            );
            (pair[0].t, mle_step(&obs))
        })
        .collect()
}

/// Writes `t,h,p_plus_hat,nu_plus,p_minus_hat,nu_minus` with 1-based area
/// labels; missing estimates are left blank.
pub fn write_estimates_csv(path: &Path, estimates: &[(usize, StepEstimate)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "h", "p_plus_hat", "nu_plus", "p_minus_hat", "nu_minus"])?;
    let fmt = |e: Option<Estimate>| match e {
        Some(e) => (e.value.to_string(), e.nu.to_string()),
        None => (String::new(), String::new()),
    };
    for (t, est) in estimates {
        for (h, a) in est.areas.iter().enumerate() {
            let (pp, np) = fmt(a.plus);
            let (pm, nm) = fmt(a.minus);
            w.write_record([t.to_string(), (h + 1).to_string(), pp, np, pm, nm])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes `h,stream,theoretical,sample` Q-Q rows.
pub fn write_qq_csv(path: &Path, series: &[ResidualSeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["h", "stream", "theoretical", "sample"])?;
    for s in series {
        for &(q, z) in &s.qq {
            w.write_record([
                (s.area + 1).to_string(),
                s.stream.label().into(),
                q.to_string(),
                z.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
