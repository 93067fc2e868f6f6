//! Electricity network embedded in the lattice: buses sit on nodes, lines
//! run along king-move paths of nodes, and fire near a bus or on a line's
//! interior path takes that asset out of service.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fire::SpreadParams;
use crate::grid::{GridMap, NodeId, NodeSet};

mod ptdf;

pub use ptdf::{compute_ptdf, Ptdf};

/// Largest number of incident lines a bus may have; scenario enumeration
/// is exponential in it.
pub const DEFAULT_DEGREE_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BusKind {
    /// Generator with a free-form subtype such as `gas` or `wind`.
    Generator(String),
    Consumer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    /// Label used in network files and outputs.
    pub id: u32,
    pub node: NodeId,
    pub kind: BusKind,
    pub load: f64,
    pub capacity: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    /// Bus positions (not labels). Positive flow runs `from -> to`.
    pub from: usize,
    pub to: usize,
    pub reactance: f64,
    pub capacity: f64,
    /// Nominal line cost; stored for completeness, it enters no objective.
    pub cost: f64,
    /// Nodes strictly between the two buses.
    pub path: Vec<NodeId>,
}

impl Line {
    pub fn other(&self, bus: usize) -> usize {
        if bus == self.from {
            self.to
        } else {
            self.from
        }
    }

    /// `+1` when power flowing along the line's orientation enters `bus`.
    pub fn inflow_sign(&self, bus: usize) -> f64 {
        if bus == self.to {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowerNetwork {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    /// A bus fails when fire comes within this distance (inclusive).
    pub d_bar: u32,
    pub shedding_cost: f64,
    incident: Vec<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    d_bar: u32,
    #[serde(default = "default_shedding_cost")]
    shedding_cost: f64,
    #[serde(rename = "bus")]
    buses: Vec<BusRecord>,
    #[serde(rename = "line", default)]
    lines: Vec<LineRecord>,
}

fn default_shedding_cost() -> f64 {
    20.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusRecord {
    id: u32,
    x: u32,
    y: u32,
    kind: String,
    #[serde(default)]
    load: f64,
    #[serde(default)]
    capacity: f64,
    #[serde(default)]
    cost: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineRecord {
    from: u32,
    to: u32,
    reactance: f64,
    capacity: f64,
    #[serde(default)]
    cost: f64,
    path: Option<Vec<[u32; 2]>>,
}

impl PowerNetwork {
    /// Builds and validates a network. Lines with an empty path and
    /// non-adjacent endpoints are not accepted here; see [`auto_route`].
    pub fn new(buses: Vec<Bus>, lines: Vec<Line>, d_bar: u32, shedding_cost: f64) -> Result<Self> {
        let mut incident = vec![Vec::new(); buses.len()];
        for (l, line) in lines.iter().enumerate() {
            if line.from >= buses.len() || line.to >= buses.len() || line.from == line.to {
                return Err(Error::Config(format!("line {l} has invalid endpoints")));
            }
            incident[line.from].push(l);
            incident[line.to].push(l);
        }
        let net = PowerNetwork {
            buses,
            lines,
            d_bar,
            shedding_cost,
            incident,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        if !(self.shedding_cost >= 0.0) {
            return Err(Error::Config("shedding cost must be nonnegative".into()));
        }
        let mut at: HashMap<NodeId, u32> = HashMap::new();
        for b in &self.buses {
            if let Some(other) = at.insert(b.node, b.id) {
                return Err(Error::Config(format!(
                    "buses {other} and {} share node {}",
                    b.id, b.node
                )));
            }
            if b.kind == BusKind::Consumer && b.capacity != 0.0 {
                return Err(Error::Config(format!(
                    "consumer bus {} must have zero capacity",
                    b.id
                )));
            }
            if b.load < 0.0 || b.capacity < 0.0 || !b.load.is_finite() || !b.capacity.is_finite() {
                return Err(Error::Config(format!(
                    "bus {} has negative or non-finite load/capacity",
                    b.id
                )));
            }
        }
        for line in &self.lines {
            let (a, b) = (&self.buses[line.from], &self.buses[line.to]);
            let name = format!("line {}-{}", a.id, b.id);
            if !(line.reactance > 0.0) || !line.reactance.is_finite() {
                return Err(Error::Config(format!("{name} needs a positive reactance")));
            }
            if !(line.capacity >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} needs a nonnegative capacity"
                )));
            }
            let mut prev = a.node;
            for &n in line.path.iter().chain(std::iter::once(&b.node)) {
                if prev.chebyshev(n) != 1 {
                    return Err(Error::Config(format!(
                        "{name} path is not king-move connected at {n}"
                    )));
                }
                prev = n;
            }
            if let Some(n) = line.path.iter().find(|n| at.contains_key(n)) {
                return Err(Error::Config(format!("{name} path crosses bus node {n}")));
            }
        }
        Ok(())
    }

    /// Reads a TOML network file: top-level `d_bar` and `shedding_cost`,
    /// then `[[bus]]` and `[[line]]` tables. Line paths are optional and
    /// routed automatically when omitted.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let file: NetworkFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut pos = HashMap::new();
        let mut buses = Vec::with_capacity(file.buses.len());
        for r in file.buses {
            if pos.insert(r.id, buses.len()).is_some() {
                return Err(Error::Config(format!("duplicate bus id {}", r.id)));
            }
            let kind = match r.kind.as_str() {
                "consumer" | "load" => BusKind::Consumer,
                other => BusKind::Generator(other.to_string()),
            };
            buses.push(Bus {
                id: r.id,
                node: NodeId::new(r.x, r.y),
                kind,
                load: r.load,
                capacity: r.capacity,
                cost: r.cost,
            });
        }
        let bus_nodes: Vec<NodeId> = buses.iter().map(|b| b.node).collect();
        let mut lines = Vec::with_capacity(file.lines.len());
        for r in file.lines {
            let lookup = |id: u32| {
                pos.get(&id)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("line refers to unknown bus {id}")))
            };
            let (from, to) = (lookup(r.from)?, lookup(r.to)?);
            let path = match r.path {
                Some(p) => p.into_iter().map(|[x, y]| NodeId::new(x, y)).collect(),
                None => {
                    auto_route(buses[from].node, buses[to].node, &bus_nodes).ok_or_else(|| {
                        Error::Config(format!(
                            "cannot route line {}-{} around other buses",
                            r.from, r.to
                        ))
                    })?
                }
            };
            lines.push(Line {
                from,
                to,
                reactance: r.reactance,
                capacity: r.capacity,
                cost: r.cost,
                path,
            });
        }
        Self::new(buses, lines, file.d_bar, file.shedding_cost)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    /// Errors unless every bus and path node lies inside `grid`.
    pub fn check_on(&self, grid: &GridMap) -> Result<()> {
        for b in &self.buses {
            grid.check(b.node)?;
        }
        for l in &self.lines {
            for &n in &l.path {
                grid.check(n)?;
            }
        }
        Ok(())
    }

    /// Errors when some bus has more incident lines than `cap`.
    pub fn check_degree(&self, cap: usize) -> Result<()> {
        for (i, inc) in self.incident.iter().enumerate() {
            if inc.len() > cap {
                return Err(Error::Config(format!(
                    "bus {} has {} incident lines; scenario enumeration is capped at {cap} \
                     (split the bus or raise the cap)",
                    self.buses[i].id,
                    inc.len()
                )));
            }
        }
        Ok(())
    }

    /// Line positions incident to bus `i`, in line order.
    pub fn incident(&self, i: usize) -> &[usize] {
        &self.incident[i]
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load).sum()
    }

    pub fn bus_position(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }
}

/// King-move route between two nodes that avoids `blocked` nodes: either
/// diagonal moves first or straight moves first. Returns the interior nodes.
pub fn auto_route(a: NodeId, b: NodeId, blocked: &[NodeId]) -> Option<Vec<NodeId>> {
    let step = |from: u32, to: u32| (to as i64 - from as i64).signum();
    for diagonal_first in [true, false] {
        let mut path = Vec::new();
        let (mut x, mut y) = (a.x as i64, a.y as i64);
        loop {
            let (dx, dy) = (step(x as u32, b.x), step(y as u32, b.y));
            if dx == 0 && dy == 0 {
                break;
            }
            let rx = (b.x as i64 - x).abs();
            let ry = (b.y as i64 - y).abs();
            let (mx, my) = if diagonal_first {
                (dx, dy)
            } else if rx > ry {
                (dx, 0)
            } else if ry > rx {
                (0, dy)
            } else {
                (dx, dy)
            };
            x += mx;
            y += my;
            path.push(NodeId::new(x as u32, y as u32));
        }
        path.pop();
        if !path.iter().any(|n| blocked.contains(n)) {
            return Some(path);
        }
    }
    None
}

/// Which assets are in service under a burning set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Functional {
    pub bus: Vec<bool>,
    pub line: Vec<bool>,
}

impl Functional {
    pub fn all(net: &PowerNetwork) -> Self {
        Functional {
            bus: vec![true; net.buses.len()],
            line: vec![true; net.lines.len()],
        }
    }

    pub fn failed_buses(&self) -> Vec<bool> {
        self.bus.iter().map(|f| !f).collect()
    }

    pub fn failed_lines(&self) -> Vec<bool> {
        self.line.iter().map(|f| !f).collect()
    }
}

/// A bus is in service iff no burning node lies within `d_bar` of it; a
/// line iff none of its interior path nodes burns.
pub fn functional_indicator(net: &PowerNetwork, grid: &GridMap, burning: &NodeSet) -> Functional {
    Functional {
        bus: net
            .buses
            .iter()
            .map(|b| !grid.any_within(b.node, net.d_bar, burning))
            .collect(),
        line: net
            .lines
            .iter()
            .map(|l| !l.path.iter().any(|&n| burning.contains(grid.index(n))))
            .collect(),
    }
}

/// Per-area exponents of an in-service probability of the form
/// `prod_h (1 - p+_h)^spread[h] * (p-_h)^contain[h]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct RiskExponents {
    pub spread: Vec<u32>,
    pub contain: Vec<u32>,
}

impl RiskExponents {
    fn new(areas: usize) -> Self {
        RiskExponents {
            spread: vec![0; areas],
            contain: vec![0; areas],
        }
    }

    /// Adds node `j`'s one-period survival: burning nodes must be put out,
    /// others must not ignite.
    fn add_node(&mut self, grid: &GridMap, burning: &NodeSet, j: usize) {
        let h = grid.area_at(j);
        if burning.contains(j) {
            self.contain[h] += 1;
        } else {
            self.spread[h] += grid.burning_neighbors(j, burning);
        }
    }

    pub fn is_certain(&self) -> bool {
        self.spread.iter().chain(&self.contain).all(|&e| e == 0)
    }

    pub fn probability(&self, params: &SpreadParams) -> f64 {
        let mut p = 1.0;
        for h in 0..self.spread.len() {
            if self.spread[h] > 0 {
                p *= (1.0 - params.p_plus[h]).powi(self.spread[h] as i32);
            }
            if self.contain[h] > 0 {
                p *= params.p_minus[h].powi(self.contain[h] as i32);
            }
        }
        p
    }
}

/// Exponents for every bus and line given the burning set one period
/// earlier. They do not depend on the parameters, so one set serves every
/// parameter guess at a given period.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkRisk {
    pub bus: Vec<RiskExponents>,
    pub line: Vec<RiskExponents>,
}

impl NetworkRisk {
    /// A bus survives the period iff no node within `d_bar` of it
    /// (including its own node) is burning afterwards; a line iff none of
    /// its interior nodes is.
    pub fn new(net: &PowerNetwork, grid: &GridMap, burning: &NodeSet) -> Self {
        let areas = grid.areas();
        let bus = net
            .buses
            .iter()
            .map(|b| {
                let mut e = RiskExponents::new(areas);
                if grid.any_within(b.node, net.d_bar + 1, burning) {
                    grid.for_each_in_box(b.node, net.d_bar, |_, j| e.add_node(grid, burning, j));
                }
                e
            })
            .collect();
        let line = net
            .lines
            .iter()
            .map(|l| {
                let mut e = RiskExponents::new(areas);
                for &n in &l.path {
                    e.add_node(grid, burning, grid.index(n));
                }
                e
            })
            .collect();
        NetworkRisk { bus, line }
    }

    pub fn probabilities(&self, params: &SpreadParams) -> FunctionalProbabilities {
        FunctionalProbabilities {
            bus: self.bus.iter().map(|e| e.probability(params)).collect(),
            line: self.line.iter().map(|e| e.probability(params)).collect(),
        }
    }
}

/// One-period-ahead in-service probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalProbabilities {
    pub bus: Vec<f64>,
    pub line: Vec<f64>,
}

impl FunctionalProbabilities {
    pub fn certain(net: &PowerNetwork) -> Self {
        FunctionalProbabilities {
            bus: vec![1.0; net.buses.len()],
            line: vec![1.0; net.lines.len()],
        }
    }
}

pub fn functional_probability_bus(
    net: &PowerNetwork,
    grid: &GridMap,
    burning_prev: &NodeSet,
    params: &SpreadParams,
) -> Vec<f64> {
    NetworkRisk::new(net, grid, burning_prev)
        .probabilities(params)
        .bus
}

pub fn functional_probability_line(
    net: &PowerNetwork,
    grid: &GridMap,
    burning_prev: &NodeSet,
    params: &SpreadParams,
) -> Vec<f64> {
    NetworkRisk::new(net, grid, burning_prev)
        .probabilities(params)
        .line
}

/// Probability of each subset of bus `i`'s incident lines being exactly the
/// in-service ones, lines failing independently. Bit `k` of the subset
/// index refers to `net.incident(i)[k]`.
pub fn scenario_weights(
    net: &PowerNetwork,
    line_prob: &[f64],
    i: usize,
    cap: usize,
) -> Result<Vec<f64>> {
    let inc = net.incident(i);
    if inc.len() > cap {
        net.check_degree(cap)?;
    }
    let mut w = vec![1.0];
    for &l in inc {
        let p = line_prob[l];
        // entries with bit k set (k = lines seen so far) follow those without
        let mut next = Vec::with_capacity(w.len() * 2);
        next.extend(w.iter().map(|x| x * (1.0 - p)));
        next.extend(w.iter().map(|x| x * p));
        w = next;
    }
    Ok(w)
}
