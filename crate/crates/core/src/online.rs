//! Online learners that turn the stream of per-period estimates into
//! parameter guesses for the next dispatch: the adaptive-restart detector
//! and three benchmarks.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimation::{Estimate, EstimateSeries, StepEstimate, Stream};
use crate::fire::SpreadParams;

/// Parameter guess used before any estimate of a stream has arrived.
pub const PRIOR: f64 = 0.5;

/// Which candidate intervals the detector compares with the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IntervalPolicy {
    /// Every interval inside the episode; quadratic cost per period.
    Exhaustive,
    /// Suffixes of the episode whose lengths are powers of two.
    #[default]
    Geometric,
}

impl FromStr for IntervalPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(IntervalPolicy::Exhaustive),
            "geometric" => Ok(IntervalPolicy::Geometric),
            _ => Err(Error::Config(format!("unknown interval policy `{s}`"))),
        }
    }
}

/// Logarithmic factor inside the detection radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LogFactor {
    /// `ln(2T)`
    #[serde(rename = "ln2T")]
    TwoT,
    /// `ln(2HT)`
    #[default]
    #[serde(rename = "ln2HT")]
    TwoHT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub log_factor: LogFactor,
    pub policy: IntervalPolicy,
    /// Alarm level of the likelihood-ratio benchmark on the standardized
    /// statistic; `inf` disables it.
    pub lr_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            log_factor: LogFactor::TwoHT,
            policy: IntervalPolicy::Geometric,
            lr_threshold: 20.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_threshold > 0.0) {
            return Err(Error::Config(format!(
                "lr_threshold must be positive, got {}",
                self.lr_threshold
            )));
        }
        Ok(())
    }

    pub fn log_term(&self, horizon: usize, areas: usize) -> f64 {
        match self.log_factor {
            LogFactor::TwoT => (2.0 * horizon as f64).ln(),
            LogFactor::TwoHT => (2.0 * (areas * horizon) as f64).ln(),
        }
    }
}

/// Concentration radius `4 sqrt(sum_nu * log_term) / n` of an average of
/// `n` estimates.
fn radius(sum_nu: f64, n: usize, log_term: f64) -> f64 {
    4.0 * (sum_nu * log_term).sqrt() / n as f64
}

/// Looks for an interval of the current episode (entries `start..` of
/// `series`) whose average is inconsistent with the episode average.
/// Returns the first such interval as `(t1, t2)` periods.
pub fn detect_change(
    series: &EstimateSeries,
    start: usize,
    log_term: f64,
    policy: IntervalPolicy,
) -> Option<(usize, usize)> {
    let n = series.len();
    if n <= start + 1 {
        return None;
    }
    let (mean_e, nu_e) = series.range_stats(start, n);
    let r_e = radius(nu_e, n - start, log_term);
    let fires = |i: usize, j: usize| {
        let (mean_i, nu_i) = series.range_stats(i, j);
        (mean_e - mean_i).abs() >= r_e + radius(nu_i, j - i, log_term)
    };
    let periods = series.periods();
    match policy {
        IntervalPolicy::Exhaustive => {
            for i in start..n {
                for j in i + 1..=n {
                    if fires(i, j) {
                        return Some((periods[i], periods[j - 1]));
                    }
                }
            }
        }
        IntervalPolicy::Geometric => {
            let mut len = 1;
            while len <= n - start {
                if fires(n - len, n) {
                    return Some((periods[n - len], periods[n - 1]));
                }
                len *= 2;
            }
        }
    }
    None
}

/// Standardized likelihood-ratio statistic for a single mean shift inside
/// entries `start..` of `series`: the largest
/// `(mean_before - mean_after)^2 / (1/n_before + 1/n_after)` over split
/// points, divided by the episode's mean variance proxy. Returns the
/// statistic and the index of the first entry after the best split.
pub fn lr_statistic(series: &EstimateSeries, start: usize) -> Option<(f64, usize)> {
    let n = series.len();
    if n < start + 2 {
        return None;
    }
    let (_, nu_e) = series.range_stats(start, n);
    let scale = nu_e / (n - start) as f64;
    let mut best: Option<(f64, usize)> = None;
    for s in start + 1..n {
        let (a, _) = series.range_stats(start, s);
        let (b, _) = series.range_stats(s, n);
        let g = (a - b).powi(2) / (1.0 / (s - start) as f64 + 1.0 / (n - s) as f64);
        if best.is_none_or(|(bg, _)| g > bg) {
            best = Some((g, s));
        }
    }
    best.map(|(g, s)| {
        (
            if scale > 0.0 {
                g / scale
            } else {
                f64::INFINITY
            },
            s,
        )
    })
}

/// A learner consumes per-period estimates in order and proposes the
/// parameters for the next dispatch.
pub trait Learner: Send {
    fn name(&self) -> &'static str;
    /// Feeds the estimate produced by the data of `period`.
    fn observe(&mut self, period: usize, est: &StepEstimate);
    fn params(&self) -> SpreadParams;
    /// Changes declared so far on the plus and minus streams.
    fn detections(&self) -> (usize, usize) {
        (0, 0)
    }
    /// Current episode start per area, `(plus, minus)`.
    fn episode_starts(&self) -> Vec<(usize, usize)> {
        Vec::new()
    }
}

/// Per-area, per-stream series with an episode start.
#[derive(Debug, Clone)]
struct Track {
    series: EstimateSeries,
    /// Index of the first entry of the current episode.
    start: usize,
    /// Period of that entry (1 before any data).
    tau: usize,
    detections: usize,
}

impl Track {
    fn new() -> Self {
        Track {
            series: EstimateSeries::new(),
            start: 0,
            tau: 1,
            detections: 0,
        }
    }

    /// Appends a usable estimate; returns whether it was kept.
    fn push(&mut self, period: usize, est: Option<Estimate>) -> bool {
        match est {
            Some(e) if e.nu.is_finite() => {
                self.series.push(period, e);
                true
            }
            _ => false,
        }
    }

    fn restart_at(&mut self, index: usize) {
        self.start = index;
        self.tau = self.series.periods()[index];
        self.detections += 1;
    }

    fn episode_mean(&self) -> f64 {
        let n = self.series.len();
        if n > self.start {
            self.series.range_stats(self.start, n).0
        } else {
            PRIOR
        }
    }

    fn global_mean(&self) -> f64 {
        let n = self.series.len();
        if n > 0 {
            self.series.range_stats(0, n).0
        } else {
            PRIOR
        }
    }
}

/// Tracks for every area and stream, `[area][plus, minus]`.
#[derive(Debug, Clone)]
struct Tracks(Vec<[Track; 2]>);

impl Tracks {
    fn new(areas: usize) -> Self {
        Tracks((0..areas).map(|_| [Track::new(), Track::new()]).collect())
    }

    fn params(&self, pick: impl Fn(&Track) -> f64) -> SpreadParams {
        SpreadParams {
            p_plus: self.0.iter().map(|t| pick(&t[0])).collect(),
            p_minus: self.0.iter().map(|t| pick(&t[1])).collect(),
        }
    }

    /// Pushes the estimate and calls `on_new` for each track that received
    /// a value.
    fn observe(&mut self, period: usize, est: &StepEstimate, mut on_new: impl FnMut(&mut Track)) {
        for (tracks, a) in self.0.iter_mut().zip(&est.areas) {
            for (k, stream) in Stream::BOTH.into_iter().enumerate() {
                if tracks[k].push(period, a.get(stream)) {
                    on_new(&mut tracks[k]);
                }
            }
        }
    }

    fn detections(&self) -> (usize, usize) {
        self.0.iter().fold((0, 0), |(p, m), t| {
            (p + t[0].detections, m + t[1].detections)
        })
    }

    fn episode_starts(&self) -> Vec<(usize, usize)> {
        self.0.iter().map(|t| (t[0].tau, t[1].tau)).collect()
    }
}

/// Averages estimates within the current episode and restarts the episode
/// at the newest estimate whenever some recent interval disagrees with the
/// episode average beyond the concentration radii.
#[derive(Debug, Clone)]
pub struct AdaptiveRestart {
    tracks: Tracks,
    log_term: f64,
    policy: IntervalPolicy,
}

impl AdaptiveRestart {
    pub fn new(areas: usize, horizon: usize, config: &DetectorConfig) -> Self {
        AdaptiveRestart {
            tracks: Tracks::new(areas),
            log_term: config.log_term(horizon, areas),
            policy: config.policy,
        }
    }
}

impl Learner for AdaptiveRestart {
    fn name(&self) -> &'static str {
        "adaptive"
    }

    fn observe(&mut self, period: usize, est: &StepEstimate) {
        let (log_term, policy) = (self.log_term, self.policy);
        self.tracks.observe(period, est, |track| {
            if detect_change(&track.series, track.start, log_term, policy).is_some() {
                track.restart_at(track.series.len() - 1);
            }
        });
    }

    fn params(&self) -> SpreadParams {
        self.tracks.params(Track::episode_mean)
    }

    fn detections(&self) -> (usize, usize) {
        self.tracks.detections()
    }

    fn episode_starts(&self) -> Vec<(usize, usize)> {
        self.tracks.episode_starts()
    }
}

/// Plugs in the most recent single-period estimate.
#[derive(Debug, Clone)]
pub struct Naive {
    tracks: Tracks,
}

impl Naive {
    pub fn new(areas: usize) -> Self {
        Naive {
            tracks: Tracks::new(areas),
        }
    }
}

impl Learner for Naive {
    fn name(&self) -> &'static str {
        "naive"
    }

    fn observe(&mut self, period: usize, est: &StepEstimate) {
        self.tracks.observe(period, est, |_| {});
    }

    fn params(&self) -> SpreadParams {
        self.tracks.params(|t| t.series.last().unwrap_or(PRIOR))
    }
}

/// Plugs in the average of every estimate so far.
#[derive(Debug, Clone)]
pub struct GlobalAverage {
    tracks: Tracks,
}

impl GlobalAverage {
    pub fn new(areas: usize) -> Self {
        GlobalAverage {
            tracks: Tracks::new(areas),
        }
    }
}

impl Learner for GlobalAverage {
    fn name(&self) -> &'static str {
        "global_average"
    }

    fn observe(&mut self, period: usize, est: &StepEstimate) {
        self.tracks.observe(period, est, |_| {});
    }

    fn params(&self) -> SpreadParams {
        self.tracks.params(Track::global_mean)
    }
}

/// Classical single-change likelihood-ratio test over the current episode;
/// on an alarm the episode restarts at the most likely change point.
#[derive(Debug, Clone)]
pub struct LikelihoodRatio {
    tracks: Tracks,
    threshold: f64,
}

impl LikelihoodRatio {
    pub fn new(areas: usize, threshold: f64) -> Self {
        LikelihoodRatio {
            tracks: Tracks::new(areas),
            threshold,
        }
    }
}

impl Learner for LikelihoodRatio {
    fn name(&self) -> &'static str {
        "likelihood_ratio"
    }

    fn observe(&mut self, period: usize, est: &StepEstimate) {
        let threshold = self.threshold;
        self.tracks.observe(period, est, |track| {
            if let Some((g, s)) = lr_statistic(&track.series, track.start) {
                if g > threshold {
                    track.restart_at(s);
                }
            }
        });
    }

    fn params(&self) -> SpreadParams {
        self.tracks.params(Track::episode_mean)
    }

    fn detections(&self) -> (usize, usize) {
        self.tracks.detections()
    }

    fn episode_starts(&self) -> Vec<(usize, usize)> {
        self.tracks.episode_starts()
    }
}

/// The learners that can be requested by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Adaptive,
    Naive,
    GlobalAverage,
    LikelihoodRatio,
    /// Knows the true parameters; its regret is zero by construction.
    Clairvoyant,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Adaptive,
        Algorithm::Naive,
        Algorithm::GlobalAverage,
        Algorithm::LikelihoodRatio,
        Algorithm::Clairvoyant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Adaptive => "adaptive",
            Algorithm::Naive => "naive",
            Algorithm::GlobalAverage => "global_average",
            Algorithm::LikelihoodRatio => "likelihood_ratio",
            Algorithm::Clairvoyant => "clairvoyant",
        }
    }

    /// A fresh learner, or `None` for the clairvoyant entry.
    pub fn learner(
        self,
        areas: usize,
        horizon: usize,
        config: &DetectorConfig,
    ) -> Option<Box<dyn Learner>> {
        match self {
            Algorithm::Adaptive => Some(Box::new(AdaptiveRestart::new(areas, horizon, config))),
            Algorithm::Naive => Some(Box::new(Naive::new(areas))),
            Algorithm::GlobalAverage => Some(Box::new(GlobalAverage::new(areas))),
            Algorithm::LikelihoodRatio => {
                Some(Box::new(LikelihoodRatio::new(areas, config.lr_threshold)))
            }
            Algorithm::Clairvoyant => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

/// Threshold of the likelihood-ratio benchmark giving false-alarm rate
/// `alpha` over `horizon` periods of a constant stream, by simulation of
/// Gaussian estimates with unit variance proxy.
pub fn calibrate_lr_threshold<R: Rng + ?Sized>(
    horizon: usize,
    reps: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<f64> {
    if reps == 0 || !(0.0..1.0).contains(&alpha) || horizon < 2 {
        return Err(Error::Config(
            "calibration needs reps >= 1, horizon >= 2, alpha in [0,1)".into(),
        ));
    }
    let normal = Normal::standard();
    let mut maxima: Vec<f64> = (0..reps)
        .map(|_| {
            let mut series = EstimateSeries::new();
            let mut worst: f64 = 0.0;
            for t in 1..=horizon {
                let u: f64 = rng.random();
                let value = normal.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16));
                series.push(t, Estimate { value, nu: 1.0 });
                if let Some((g, _)) = lr_statistic(&series, 0) {
                    worst = worst.max(g);
                }
            }
            worst
        })
        .collect();
    maxima.sort_by(f64::total_cmp);
    let k = (((1.0 - alpha) * reps as f64).ceil() as usize).clamp(1, reps) - 1;
    Ok(maxima[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::AreaEstimate;
    use crate::rng;

    fn series(values: &[f64], nu: f64) -> EstimateSeries {
        let mut s = EstimateSeries::new();
        for (t, &v) in values.iter().enumerate() {
            s.push(t + 1, Estimate { value: v, nu });
        }
        s
    }

    fn step(p: f64, m: f64, nu: f64) -> StepEstimate {
        StepEstimate {
            areas: vec![AreaEstimate {
                plus: Some(Estimate { value: p, nu }),
                minus: Some(Estimate { value: m, nu }),
            }],
        }
    }

    #[test]
    fn single_period_never_triggers() {
        let s = series(&[0.9], 1e-9);
        for policy in [IntervalPolicy::Exhaustive, IntervalPolicy::Geometric] {
            assert_eq!(detect_change(&s, 0, 7.0, policy), None);
        }
    }

    #[test]
    fn obvious_jump_detected() {
        let mut v = vec![0.2; 50];
        v.extend([0.6; 5]);
        let s = series(&v, 1e-4);
        assert!(detect_change(&s, 0, 7.0, IntervalPolicy::Exhaustive).is_some());
        assert!(detect_change(&s, 0, 7.0, IntervalPolicy::Geometric).is_some());
        // the new episode alone is consistent
        assert!(detect_change(&s, 50, 7.0, IntervalPolicy::Exhaustive).is_none());
    }

    #[test]
    fn geometric_detections_imply_exhaustive() {
        let mut r = rng::stream(5, &[1]);
        for _ in 0..200 {
            let n = r.random_range(2..40usize);
            let v: Vec<f64> = (0..n)
                .map(|i| if i > n / 2 { 0.5 } else { 0.3 } + 0.05 * r.random::<f64>())
                .collect();
            let s = series(&v, 1e-3);
            if detect_change(&s, 0, 3.0, IntervalPolicy::Geometric).is_some() {
                assert!(detect_change(&s, 0, 3.0, IntervalPolicy::Exhaustive).is_some());
            }
        }
    }

    #[test]
    fn adaptive_restarts_on_new_data_only() {
        let cfg = DetectorConfig::default();
        let mut a = AdaptiveRestart::new(1, 200, &cfg);
        for t in 1..=60 {
            a.observe(t, &step(0.2, 0.3, 1e-4));
        }
        assert_eq!(a.detections(), (0, 0));
        for t in 61..=70 {
            a.observe(t, &step(0.7, 0.3, 1e-4));
        }
        assert_eq!(a.detections().0, 1);
        let tau = a.episode_starts()[0].0;
        assert!(tau > 60);
        assert!((a.params().p_plus[0] - 0.7).abs() < 1e-12);
        assert!((a.params().p_minus[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn benchmarks_plug_in() {
        let mut n = Naive::new(1);
        let mut g = GlobalAverage::new(1);
        assert_eq!(n.params().p_plus, vec![PRIOR]);
        for (t, p) in [0.2, 0.4].into_iter().enumerate() {
            n.observe(t + 1, &step(p, 0.1, 1e-3));
            g.observe(t + 1, &step(p, 0.1, 1e-3));
        }
        assert_eq!(n.params().p_plus, vec![0.4]);
        assert!((g.params().p_plus[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn infinite_threshold_is_global_average() {
        let mut lr = LikelihoodRatio::new(1, f64::INFINITY);
        let mut g = GlobalAverage::new(1);
        for t in 1..=40 {
            let p = if t < 20 { 0.1 } else { 0.9 };
            lr.observe(t, &step(p, 0.2, 1e-4));
            g.observe(t, &step(p, 0.2, 1e-4));
        }
        assert_eq!(lr.params(), g.params());
    }

    #[test]
    fn lr_locates_split() {
        let mut v = vec![0.2; 30];
        v.extend([0.6; 30]);
        let s = series(&v, 1e-3);
        let (g, split) = lr_statistic(&s, 0).unwrap();
        assert_eq!(split, 30);
        assert!(g > 100.0);
    }

    #[test]
    fn missing_and_uninformative_estimates_skipped() {
        let mut a = Naive::new(1);
        a.observe(1, &step(0.3, 0.3, f64::INFINITY));
        a.observe(
            2,
            &StepEstimate {
                areas: vec![AreaEstimate::default()],
            },
        );
        assert_eq!(a.params().p_plus, vec![PRIOR]);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("cusum".parse::<Algorithm>().is_err());
    }

    #[test]
    fn calibration_threshold_is_sane() {
        let mut r = rng::stream(9, &[2]);
        let th = calibrate_lr_threshold(200, 200, 0.05, &mut r).unwrap();
        // above the single-split chi-square(1) 95% point, below a loose cap
        assert!(th > 3.84 && th < 30.0, "{th}");
    }
}
