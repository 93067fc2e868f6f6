//! Stochastic spread and containment of fire on the lattice.
//!
//! One period takes the burning set `B_t` to `B_{t+1}` in two phases:
//! every non-burning node with `m` burning king-move neighbors ignites with
//! probability `1 - (1 - p+)^m`, and every node burning at the start of the
//! period is put out with probability `p-`. Nodes that ignite during the
//! period are not eligible for extinguishment until the next one. Put-out
//! nodes may catch fire again later.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::grid::{GridMap, NodeId, NodeSet};

/// Spread and containment probabilities per area (0-based area index).
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadParams {
    pub p_plus: Vec<f64>,
    pub p_minus: Vec<f64>,
}

impl SpreadParams {
    pub fn new(p_plus: Vec<f64>, p_minus: Vec<f64>) -> Result<Self> {
        let params = SpreadParams { p_plus, p_minus };
        params.validate(None)?;
        Ok(params)
    }

    pub fn uniform(areas: usize, p_plus: f64, p_minus: f64) -> Result<Self> {
        Self::new(vec![p_plus; areas], vec![p_minus; areas])
    }

    pub fn areas(&self) -> usize {
        self.p_plus.len()
    }

    pub fn validate(&self, areas: Option<usize>) -> Result<()> {
        if self.p_plus.len() != self.p_minus.len() {
            return Err(Error::Config(format!(
                "p+ has {} areas but p- has {}",
                self.p_plus.len(),
                self.p_minus.len()
            )));
        }
        if let Some(h) = areas {
            if self.p_plus.len() != h {
                return Err(Error::Config(format!(
                    "parameters cover {} areas, grid has {h}",
                    self.p_plus.len()
                )));
            }
        }
        for &p in self.p_plus.iter().chain(&self.p_minus) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("probability {p} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// Closed interval a parameter value is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::Config(format!(
                "probability range [{lo}, {hi}] must satisfy 0 <= lo <= hi <= 1"
            )));
        }
        Ok(ParamRange { lo, hi })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.lo + (self.hi - self.lo) * rng.random::<f64>()
    }
}

/// Piecewise-constant value over `1..=horizon`: sorted `(start, value)`
/// segments, the first starting at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Segments(Vec<(usize, f64)>);

impl Segments {
    pub fn constant(value: f64) -> Self {
        Segments(vec![(1, value)])
    }

    pub fn new(segments: Vec<(usize, f64)>) -> Result<Self> {
        if segments.first().map(|s| s.0) != Some(1) {
            return Err(Error::Config("first segment must start at t=1".into()));
        }
        if segments.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config("segment start times must increase".into()));
        }
        Ok(Segments(segments))
    }

    pub fn value_at(&self, t: usize) -> f64 {
        let k = self.0.partition_point(|&(start, _)| start <= t);
        self.0[k.saturating_sub(1)].1
    }

    /// Start times of every segment after the first.
    pub fn change_times(&self) -> Vec<usize> {
        self.0[1..].iter().map(|s| s.0).collect()
    }

    pub fn segments(&self) -> &[(usize, f64)] {
        &self.0
    }
}

/// Per-area piecewise-constant schedules for both probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSchedule {
    pub horizon: usize,
    pub plus: Vec<Segments>,
    pub minus: Vec<Segments>,
}

impl ParamSchedule {
    pub fn constant(params: &SpreadParams, horizon: usize) -> Self {
        ParamSchedule {
            horizon,
            plus: params
                .p_plus
                .iter()
                .map(|&p| Segments::constant(p))
                .collect(),
            minus: params
                .p_minus
                .iter()
                .map(|&p| Segments::constant(p))
                .collect(),
        }
    }

    pub fn areas(&self) -> usize {
        self.plus.len()
    }

    /// Parameters in effect during period `t`.
    pub fn params_at(&self, t: usize) -> SpreadParams {
        SpreadParams {
            p_plus: self.plus.iter().map(|s| s.value_at(t)).collect(),
            p_minus: self.minus.iter().map(|s| s.value_at(t)).collect(),
        }
    }

    pub fn change_times_plus(&self, area: usize) -> Vec<usize> {
        self.plus[area].change_times()
    }

    pub fn change_times_minus(&self, area: usize) -> Vec<usize> {
        self.minus[area].change_times()
    }
}

/// How random schedules are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub areas: usize,
    pub horizon: usize,
    pub changes_plus: usize,
    pub changes_minus: usize,
    pub range_plus: ParamRange,
    pub range_minus: ParamRange,
}

/// Draws a random schedule. For each area and each probability, the change
/// times are sampled without replacement from `2..=horizon` and a fresh
/// value is drawn uniformly from the range at `t=1` and at every change.
pub fn generate_schedule<R: Rng + ?Sized>(
    spec: &ScheduleSpec,
    rng: &mut R,
) -> Result<ParamSchedule> {
    if spec.horizon < 1 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    for lambda in [spec.changes_plus, spec.changes_minus] {
        if lambda >= spec.horizon {
            return Err(Error::Config(format!(
                "{lambda} change points do not fit in horizon {}",
                spec.horizon
            )));
        }
    }
    let draw = |lambda: usize, range: ParamRange, rng: &mut R| {
        let mut times: Vec<usize> = index::sample(rng, spec.horizon - 1, lambda)
            .into_iter()
            .map(|i| i + 2)
            .collect();
        times.sort_unstable();
        let mut segs = Vec::with_capacity(lambda + 1);
        segs.push((1, range.draw(rng)));
        for t in times {
            segs.push((t, range.draw(rng)));
        }
        Segments(segs)
    };
    let mut plus = Vec::with_capacity(spec.areas);
    let mut minus = Vec::with_capacity(spec.areas);
    for _ in 0..spec.areas {
        plus.push(draw(spec.changes_plus, spec.range_plus, rng));
        minus.push(draw(spec.changes_minus, spec.range_minus, rng));
    }
    Ok(ParamSchedule {
        horizon: spec.horizon,
        plus,
        minus,
    })
}

/// Burning set at period `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FireState {
    pub t: usize,
    pub burning: NodeSet,
}

impl FireState {
    pub fn new(t: usize, burning: NodeSet) -> Self {
        FireState { t, burning }
    }

    pub fn count(&self) -> usize {
        self.burning.len()
    }

    /// Burning nodes in area `h`.
    pub fn in_area(&self, grid: &GridMap, h: usize) -> NodeSet {
        let mut set = NodeSet::for_grid(grid);
        for i in self.burning.iter().filter(|&i| grid.area_at(i) == h) {
            set.insert(i);
        }
        set
    }
}

/// `1 - (1 - p_plus)^m`.
pub fn ignition_probability(m: u32, p_plus: f64) -> f64 {
    if m == 0 {
        0.0
    } else {
        1.0 - (1.0 - p_plus).powi(m as i32)
    }
}

/// Bernoulli draw as an integer comparison on one 64-bit word.
#[derive(Debug, Clone, Copy)]
struct Coin(u64);

impl Coin {
    const ALWAYS: u64 = u64::MAX;

    fn new(p: f64) -> Self {
        if p >= 1.0 {
            Coin(Self::ALWAYS)
        } else if p <= 0.0 {
            Coin(0)
        } else {
            Coin((p * 18_446_744_073_709_551_616.0) as u64)
        }
    }

    /// Always consumes one draw.
    #[inline]
    fn flip<R: Rng + ?Sized>(self, rng: &mut R) -> bool {
        let x = rng.next_u64();
        (x < self.0) | (self.0 == Self::ALWAYS)
    }
}

/// Reusable buffers for stepping fire on one grid.
///
/// After [`FireSimulator::step`] the burning-neighbor count of every node
/// with respect to the pre-step set is available from
/// [`FireSimulator::neighbor_counts`].
pub struct FireSimulator<'g> {
    grid: &'g GridMap,
    counts: Vec<u8>,
}

impl<'g> FireSimulator<'g> {
    pub fn new(grid: &'g GridMap) -> Self {
        FireSimulator {
            grid,
            counts: vec![0; grid.len()],
        }
    }

    pub fn grid(&self) -> &'g GridMap {
        self.grid
    }

    pub fn neighbor_counts(&self) -> &[u8] {
        &self.counts
    }

    /// Fills the neighbor-count buffer for `burning` without stepping.
    pub fn count_neighbors(&mut self, burning: &NodeSet) {
        fill_neighbor_counts(self.grid, burning, &mut self.counts);
    }

    /// Advances `current` by one period into `next`. One 64-bit draw is
    /// made per node in row-major order, so the result is a function of the
    /// RNG state alone.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        current: &NodeSet,
        params: &SpreadParams,
        rng: &mut R,
        next: &mut NodeSet,
    ) {
        let grid = self.grid;
        // thresholds[h][0..9]: ignition with m burning neighbors;
        // thresholds[h][9]: staying alight
        let thresholds: Vec<[Coin; 10]> = (0..params.areas())
            .map(|h| {
                std::array::from_fn(|k| match k {
                    9 => Coin::new(1.0 - params.p_minus[h]),
                    m => Coin::new(ignition_probability(m as u32, params.p_plus[h])),
                })
            })
            .collect();

        fill_neighbor_counts(grid, current, &mut self.counts);
        next.clear();
        let n = grid.len();
        let words = current.words();
        for (wi, &word) in words.iter().enumerate() {
            let lo = wi * 64;
            let hi = (lo + 64).min(n);
            let mut out = 0u64;
            for i in lo..hi {
                let bit = i - lo;
                let burning = (word >> bit & 1) as usize;
                let k = if burning == 1 {
                    9
                } else {
                    self.counts[i] as usize
                };
                let hit = thresholds[grid.area_at(i)][k].flip(rng);
                out |= (hit as u64) << bit;
            }
            next.set_word(wi, out);
        }
    }
}

fn fill_neighbor_counts(grid: &GridMap, burning: &NodeSet, counts: &mut [u8]) {
    // 3x3 box sum of the burning indicator, done as a horizontal then a
    // vertical pass, minus the node itself.
    let w = grid.width() as usize;
    let h = grid.height() as usize;
    let words = burning.words();
    let ind: Vec<u8> = (0..w * h)
        .map(|i| (words[i >> 6] >> (i & 63) & 1) as u8)
        .collect();
    let mut row_sum = vec![0u8; w * h];
    for y in 0..h {
        let r = &ind[y * w..(y + 1) * w];
        let out = &mut row_sum[y * w..(y + 1) * w];
        for x in 0..w {
            let left = if x > 0 { r[x - 1] } else { 0 };
            let right = if x + 1 < w { r[x + 1] } else { 0 };
            out[x] = left + r[x] + right;
        }
    }
    for y in 0..h {
        let up = y.checked_sub(1).map(|u| &row_sum[u * w..(u + 1) * w]);
        let down = (y + 1 < h).then(|| &row_sum[(y + 1) * w..(y + 2) * w]);
        let mid = &row_sum[y * w..(y + 1) * w];
        let own = &ind[y * w..(y + 1) * w];
        let out = &mut counts[y * w..(y + 1) * w];
        for x in 0..w {
            out[x] = mid[x] + up.map_or(0, |u| u[x]) + down.map_or(0, |d| d[x]) - own[x];
        }
    }
}

/// One-period update of `state` under `params`.
pub fn step_fire<R: Rng + ?Sized>(
    grid: &GridMap,
    state: &FireState,
    params: &SpreadParams,
    rng: &mut R,
) -> FireState {
    let mut next = NodeSet::for_grid(grid);
    FireSimulator::new(grid).step(&state.burning, params, rng, &mut next);
    FireState::new(state.t + 1, next)
}

/// Runs the fire for `horizon` periods starting from `origins` at `t=1`.
/// Period `t` is stepped with the parameters in effect at `t`.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    grid: &GridMap,
    origins: &[NodeId],
    schedule: &ParamSchedule,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<FireState>> {
    if origins.is_empty() {
        return Err(Error::Config("at least one fire origin is required".into()));
    }
    if schedule.areas() != grid.areas() {
        return Err(Error::Config(format!(
            "schedule covers {} areas, grid has {}",
            schedule.areas(),
            grid.areas()
        )));
    }
    let start = NodeSet::from_nodes(grid, origins.iter().copied())?;
    let mut sim = FireSimulator::new(grid);
    let mut states = Vec::with_capacity(horizon);
    states.push(FireState::new(1, start));
    for t in 1..horizon {
        let mut next = NodeSet::for_grid(grid);
        sim.step(
            &states[t - 1].burning,
            &schedule.params_at(t),
            rng,
            &mut next,
        );
        states.push(FireState::new(t + 1, next));
    }
    Ok(states)
}

/// Writes `t,count,coords` rows, coordinates as `x,y` pairs joined by `;`.
pub fn write_trajectory_csv(path: &Path, grid: &GridMap, states: &[FireState]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = csv::Writer::from_writer(std::io::BufWriter::new(file));
    out.write_record(["t", "count", "coords"])?;
    for s in states {
        let coords = s
            .burning
            .iter()
            .map(|i| {
                let n = grid.node(i);
                format!("{},{}", n.x, n.y)
            })
            .collect::<Vec<_>>()
            .join(";");
        out.write_record([s.t.to_string(), s.count().to_string(), coords])?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a trajectory written by [`write_trajectory_csv`].
pub fn read_trajectory_csv(path: &Path, grid: &GridMap) -> Result<Vec<FireState>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let bad = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut states = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let t: usize = rec
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|e| bad(format!("bad period: {e}")))?;
        let mut set = NodeSet::for_grid(grid);
        for pair in rec
            .get(2)
            .unwrap_or("")
            .split(';')
            .filter(|p| !p.is_empty())
        {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| bad(format!("bad coordinate {pair:?}")))?;
            let node = NodeId::new(
                x.trim()
                    .parse()
                    .map_err(|_| bad(format!("bad coordinate {pair:?}")))?,
                y.trim()
                    .parse()
                    .map_err(|_| bad(format!("bad coordinate {pair:?}")))?,
            );
            grid.check(node)?;
            set.insert(grid.index(node));
        }
        states.push(FireState::new(t, set));
    }
    Ok(states)
}
