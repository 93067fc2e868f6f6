//! Experiment configuration files and the packaged IEEE scenarios.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fire::{ParamRange, ScheduleSpec};
use crate::grid::GridMap;
use crate::network::{PowerNetwork, DEFAULT_DEGREE_CAP};
use crate::online::{Algorithm, DetectorConfig, IntervalPolicy, LogFactor};

/// Prefix selecting a packaged configuration instead of a file.
pub const BUILTIN_PREFIX: &str = "builtin:";

const BUILTIN_FILES: &[(&str, &str)] = &[
    ("ieee11.cfg", include_str!("../../data/ieee11.cfg")),
    (
        "ieee11_network.toml",
        include_str!("../../data/ieee11_network.toml"),
    ),
    ("ieee57.cfg", include_str!("../../data/ieee57.cfg")),
    (
        "ieee57_network.toml",
        include_str!("../../data/ieee57_network.toml"),
    ),
];

fn builtin_file(name: &str) -> Option<&'static str> {
    BUILTIN_FILES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

/// Where relative file references in a config resolve.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ConfigBase {
    Dir(PathBuf),
    #[default]
    Builtin,
}

fn default_degree_cap() -> usize {
    DEFAULT_DEGREE_CAP
}

fn default_nu_max() -> f64 {
    1e-2
}

/// One regret study. Probabilities are per period; lengths are in grid
/// cells; times are period indices starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Network file, relative to the config file.
    pub network: String,
    pub grid_width: u32,
    pub grid_height: u32,
    pub areas: usize,
    /// Optional area-label file; block partition when absent.
    #[serde(default)]
    pub area_file: Option<String>,
    /// Overrides the network file's failure radius.
    #[serde(default)]
    pub d_bar: Option<u32>,
    /// Overrides the network file's shedding cost.
    #[serde(default)]
    pub shedding_cost: Option<f64>,
    pub horizon: usize,
    pub changes_plus: usize,
    pub changes_minus: usize,
    pub p_plus_range: [f64; 2],
    pub p_minus_range: [f64; 2],
    pub origins: usize,
    pub sequences: usize,
    pub reps: usize,
    pub full_sequences: usize,
    pub full_reps: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    /// Extra horizons reported in the summary besides the final one.
    #[serde(default)]
    pub checkpoints: Vec<usize>,
    #[serde(default)]
    pub log_factor: LogFactor,
    #[serde(default)]
    pub interval_policy: IntervalPolicy,
    pub lr_threshold: f64,
    /// Variance-proxy caps used by the regret bound report.
    #[serde(default = "default_nu_max")]
    pub nu_max_plus: f64,
    #[serde(default = "default_nu_max")]
    pub nu_max_minus: f64,
    #[serde(default = "default_degree_cap")]
    pub degree_cap: usize,
    #[serde(skip)]
    pub base: ConfigBase,
}

impl ExperimentConfig {
    /// Loads `builtin:<name>` or a config file path.
    pub fn load(spec: &str) -> Result<Self> {
        if let Some(name) = spec.strip_prefix(BUILTIN_PREFIX) {
            return Self::builtin(name);
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, path, ConfigBase::Dir(dir))
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let file = format!("{}.cfg", name.trim_end_matches(".cfg"));
        let text = builtin_file(&file)
            .ok_or_else(|| Error::Config(format!("no packaged config `{name}`")))?;
        Self::from_toml_str(text, Path::new(&file), ConfigBase::Builtin)
    }

    pub fn from_toml_str(text: &str, origin: &Path, base: ConfigBase) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.base = base;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.horizon < 2 {
            return fail(format!("horizon must be at least 2, got {}", self.horizon));
        }
        if self.sequences == 0 || self.reps == 0 || self.full_sequences == 0 || self.full_reps == 0
        {
            return fail("replication counts must be at least 1".into());
        }
        if self.areas == 0 || self.grid_width == 0 || self.grid_height == 0 {
            return fail("grid dimensions and area count must be positive".into());
        }
        if self.changes_plus >= self.horizon || self.changes_minus >= self.horizon {
            return fail(format!(
                "change counts must be below the horizon {}",
                self.horizon
            ));
        }
        if self.origins == 0 {
            return fail("at least one fire origin is required".into());
        }
        if self.algorithms.is_empty() {
            return fail("no algorithms selected".into());
        }
        if let Some(&c) = self
            .checkpoints
            .iter()
            .find(|&&c| c == 0 || c > self.horizon)
        {
            return fail(format!("checkpoint {c} outside 1..={}", self.horizon));
        }
        self.detector().validate()?;
        self.schedule_spec()?;
        Ok(())
    }

    /// Switches to the full replication counts.
    pub fn full_scale(&mut self) {
        self.sequences = self.full_sequences;
        self.reps = self.full_reps;
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            log_factor: self.log_factor,
            policy: self.interval_policy,
            lr_threshold: self.lr_threshold,
        }
    }

    pub fn schedule_spec(&self) -> Result<ScheduleSpec> {
        Ok(ScheduleSpec {
            areas: self.areas,
            horizon: self.horizon,
            changes_plus: self.changes_plus,
            changes_minus: self.changes_minus,
            range_plus: ParamRange::new(self.p_plus_range[0], self.p_plus_range[1])?,
            range_minus: ParamRange::new(self.p_minus_range[0], self.p_minus_range[1])?,
        })
    }

    fn read_relative(&self, name: &str) -> Result<(String, PathBuf)> {
        if let Some(builtin) = name.strip_prefix(BUILTIN_PREFIX) {
            let text = builtin_file(builtin)
                .ok_or_else(|| Error::Config(format!("no packaged file `{builtin}`")))?;
            return Ok((text.to_string(), PathBuf::from(builtin)));
        }
        match &self.base {
            ConfigBase::Builtin => {
                let text = builtin_file(name)
                    .ok_or_else(|| Error::Config(format!("no packaged file `{name}`")))?;
                Ok((text.to_string(), PathBuf::from(name)))
            }
            ConfigBase::Dir(dir) => {
                let path = dir.join(name);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                Ok((text, path))
            }
        }
    }

    pub fn grid(&self) -> Result<GridMap> {
        match &self.area_file {
            None => GridMap::with_blocks(self.grid_width, self.grid_height, self.areas),
            Some(name) => match &self.base {
                ConfigBase::Dir(dir) => GridMap::from_assignment_file(
                    &dir.join(name),
                    self.grid_width,
                    self.grid_height,
                    self.areas,
                ),
                ConfigBase::Builtin => {
                    Err(Error::Config("packaged configs use block areas".into()))
                }
            },
        }
    }

    /// Loads the network, applies the overrides and checks it against the
    /// grid and the scenario-enumeration cap.
    pub fn network(&self, grid: &GridMap) -> Result<PowerNetwork> {
        let (text, path) = self.read_relative(&self.network)?;
        let mut net = PowerNetwork::from_toml_str(&text, &path)?;
        if let Some(d) = self.d_bar {
            net.d_bar = d;
        }
        if let Some(c) = self.shedding_cost {
            if !(c >= 0.0) {
                return Err(Error::Config("shedding_cost must be nonnegative".into()));
            }
            net.shedding_cost = c;
        }
        net.check_on(grid)?;
        net.check_degree(self.degree_cap)?;
        Ok(net)
    }
}

/// The packaged IEEE 11-bus and 57-bus configurations.
pub fn ieee_configs() -> Result<Vec<ExperimentConfig>> {
    ["ieee11", "ieee57"]
        .into_iter()
        .map(ExperimentConfig::builtin)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::BusKind;

    #[test]
    fn packaged_configs_load() {
        let cfgs = ieee_configs().unwrap();
        let c11 = &cfgs[0];
        assert_eq!((c11.grid_width, c11.grid_height, c11.areas), (400, 400, 1));
        assert_eq!(c11.horizon, 2000);
        let grid = c11.grid().unwrap();
        let net = c11.network(&grid).unwrap();
        assert_eq!((net.buses.len(), net.lines.len()), (11, 10));
        assert_eq!(net.d_bar, 3);
        assert_eq!(net.shedding_cost, 20.0);
        let gas: Vec<_> = net
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Generator("gas".into()))
            .collect();
        assert!(gas.iter().all(|b| b.capacity == 4.0 && b.cost == 10.0));
        assert!(net
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Consumer)
            .all(|b| b.load == 3.0));

        let c57 = &cfgs[1];
        assert_eq!(
            (c57.grid_width, c57.grid_height, c57.areas),
            (2000, 2000, 4)
        );
        let grid = c57.grid().unwrap();
        let net = c57.network(&grid).unwrap();
        assert_eq!((net.buses.len(), net.lines.len()), (57, 78));
        let fossil: Vec<_> = net
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Generator("fossil".into()))
            .collect();
        assert_eq!(fossil.len(), 7);
        assert!(fossil.iter().all(|b| b.capacity == 3.0 && b.cost == 5.0));
        let renewable = net
            .buses
            .iter()
            .filter(|b| b.capacity == 1.0 && b.cost == 2.0)
            .count();
        assert_eq!(renewable, 8);
        assert_eq!(net.buses.iter().filter(|b| b.load > 0.0).count(), 42);
        assert!(net.total_load() < net.buses.iter().map(|b| b.capacity).sum::<f64>());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = ExperimentConfig::builtin("ieee11").unwrap();
        c.horizon = 1;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::builtin("ieee11").unwrap();
        c.reps = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::builtin("ieee11").unwrap();
        c.changes_plus = c.horizon;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::builtin("ieee99").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = builtin_file("ieee11.cfg").unwrap().to_string() + "\nbogus = 1\n";
        assert!(matches!(
            ExperimentConfig::from_toml_str(&text, Path::new("x.cfg"), ConfigBase::Builtin),
            Err(Error::Parse { .. })
        ));
    }
}
