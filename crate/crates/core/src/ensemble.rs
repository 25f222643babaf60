//! Monte Carlo ensembles over independent replicas.
//!
//! Replica `r` draws every variate from `RngStream::new(seed, r)`, so adding
//! replicas never perturbs existing ones. Replicas run in fixed-size chunks
//! (in parallel when requested) and are folded into the statistics strictly
//! in replica order, which makes the report independent of scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    derive_bound_params, lemma2_bound_critical, lemma2_bound_subcritical, second_bird_speed_bound_critical,
    second_bird_speed_bound_subcritical, BoundError, BoundParams, FlockingMonitor, DEFAULT_EPSILON_V,
    DEFAULT_WINDOW,
};
use crate::error::FlockError;
use crate::rng::RngStream;
use crate::simulation::{Scenario, Simulation};
use crate::state::Frame;

const CHUNK: usize = 64;

/// Below this many replicas estimates are flagged as low confidence.
pub const MIN_CONFIDENT_REPLICAS: usize = 100;

pub const DEFAULT_SE_MARGIN: f64 = 3.0;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble spec: {0}")]
    InvalidSpec(String),
    #[error("replica {replica}: {source}")]
    Replica {
        replica: u64,
        #[source]
        source: FlockError,
    },
}

/// `∏_{σ=τ+1}^{t+1} (1 - h Σ_{j ∈ L(bird)} a_{bird,j}[σ])`. Empty when `τ = t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductWindow {
    pub bird: usize,
    pub tau: u64,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatisticSet {
    /// `‖v_ℓ[t]‖` for each follower.
    pub bird_speeds: bool,
    /// `∏_{σ=1}^{t}` contraction factors for each follower.
    pub contraction_products: bool,
    /// `‖v[t]‖∞`, plus its partial sums and final-time quantiles.
    pub sup_norm: bool,
}

impl Default for StatisticSet {
    fn default() -> Self {
        StatisticSet { bird_speeds: true, contraction_products: true, sup_norm: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub epsilon_v: f64,
    pub window: usize,
}

impl Default for Detection {
    fn default() -> Self {
        Detection { epsilon_v: DEFAULT_EPSILON_V, window: DEFAULT_WINDOW }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub scenario: Scenario,
    pub replicas: usize,
    pub horizon: u64,
    pub seed: u64,
    pub statistics: StatisticSet,
    pub product_windows: Vec<ProductWindow>,
    /// Times at which `E‖v_2[t]‖` is compared with its closed-form bound.
    pub speed_bound_times: Vec<u64>,
    pub detection: Detection,
    pub se_margin: f64,
    pub parallel: bool,
}

impl EnsembleSpec {
    pub fn new(scenario: Scenario, replicas: usize, horizon: u64, seed: u64) -> Self {
        EnsembleSpec {
            scenario,
            replicas,
            horizon,
            seed,
            statistics: StatisticSet::default(),
            product_windows: Vec::new(),
            speed_bound_times: Vec::new(),
            detection: Detection::default(),
            se_margin: DEFAULT_SE_MARGIN,
            parallel: true,
        }
    }

    fn validate(&self) -> Result<(), EnsembleError> {
        let bad = |m: String| Err(EnsembleError::InvalidSpec(m));
        if self.replicas == 0 {
            return bad("replica count must be >= 1".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        let k = self.scenario.k();
        for w in &self.product_windows {
            if w.bird < 2 || w.bird > k {
                return bad(format!("product window bird {} outside 2..={k}", w.bird));
            }
            if w.tau > w.t + 1 || w.t + 1 > self.horizon {
                return bad(format!(
                    "product window (tau={}, t={}) needs tau <= t + 1 <= horizon {}",
                    w.tau, w.t, self.horizon
                ));
            }
        }
        if let Some(&t) = self.speed_bound_times.iter().find(|&&t| t > self.horizon) {
            return bad(format!("speed bound time {t} beyond horizon {}", self.horizon));
        }
        if !(self.se_margin >= 0.0) {
            return bad(format!("se_margin {} must be >= 0", self.se_margin));
        }
        Ok(())
    }
}

/// Running mean and variance, updated in replica order.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Sample standard deviation over `√n`; zero for a single replica.
    fn se(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        }
    }
}

/// Mean and standard-error time series over `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSeries {
    pub name: String,
    pub bird: Option<usize>,
    pub replicas: usize,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

impl StatSeries {
    fn from_acc(name: &str, bird: Option<usize>, acc: &[Welford]) -> Self {
        StatSeries {
            name: name.to_string(),
            bird,
            replicas: acc.first().map_or(0, |a| a.n as usize),
            mean: acc.iter().map(|a| a.mean).collect(),
            se: acc.iter().map(Welford::se).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductEstimate {
    pub window: ProductWindow,
    pub mean: f64,
    pub se: f64,
    pub replicas: usize,
    pub low_confidence: bool,
    /// Bound averaged over replicas, when every replica has one.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundComparison {
    pub label: String,
    pub bird: usize,
    pub tau: Option<u64>,
    pub t: u64,
    pub empirical_mean: f64,
    pub se: f64,
    pub bound: f64,
    /// `(bound - mean) / se`; infinite when `se = 0`.
    #[serde(with = "crate::output::extended_f64")]
    pub margin_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlockingSummary {
    pub epsilon_v: f64,
    pub window: usize,
    pub flocking_replicas: usize,
    pub fraction: f64,
    pub failed_replicas: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub q: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub replicas: usize,
    pub horizon: u64,
    pub seed: u64,
    pub low_confidence: bool,
    pub series: Vec<StatSeries>,
    /// `Σ_{s <= t} mean ‖v[s]‖∞`, the finite-horizon proxy for summability.
    pub sup_velocity_partial_sums: Vec<f64>,
    pub final_sup_velocity_quantiles: Vec<Quantile>,
    /// Mean of `‖v[T]‖∞` over replicas.
    pub final_mean_sup_velocity: f64,
    pub flocking: FlockingSummary,
    pub products: Vec<ProductEstimate>,
    pub comparisons: Vec<BoundComparison>,
    /// Comparisons that could not be made, with the reason.
    pub skipped_comparisons: Vec<String>,
}

impl EnsembleReport {
    pub fn all_pass(&self) -> bool {
        self.comparisons.iter().all(|c| c.pass)
    }

    pub fn series(&self, name: &str, bird: Option<usize>) -> Option<&StatSeries> {
        self.series.iter().find(|s| s.name == name && s.bird == bird)
    }
}

struct ReplicaOutcome {
    sup_v: Vec<f64>,
    /// `[bird - 2][t]`.
    speeds: Vec<Vec<f64>>,
    cumulative: Vec<Vec<f64>>,
    windows: Vec<f64>,
    window_bounds: Vec<Result<f64, BoundError>>,
    speed_bounds: Vec<Result<f64, BoundError>>,
    flocking: bool,
}

fn product_bound(bp: &BoundParams, w: &ProductWindow) -> Result<f64, BoundError> {
    if bp.alpha < 1.0 {
        lemma2_bound_subcritical(bp, w.tau, w.t)
    } else {
        lemma2_bound_critical(bp, w.bird, w.tau, w.t).map(|b| b.value)
    }
}

fn speed_bound(bp: &BoundParams, v2_norm: f64, t: u64) -> Result<f64, BoundError> {
    if bp.alpha < 1.0 {
        second_bird_speed_bound_subcritical(bp, v2_norm, t)
    } else {
        second_bird_speed_bound_critical(bp, v2_norm, t)
    }
}

fn run_replica(spec: &EnsembleSpec, r: u64) -> Result<ReplicaOutcome, FlockError> {
    let sc = &spec.scenario;
    let k = sc.k();
    let horizon = spec.horizon as usize;
    let mut sim = Simulation::new(sc, RngStream::new(spec.seed, r), Frame::Relative)?;
    let initial = sim.state().clone();
    let bp = derive_bound_params(&initial, &sc.hierarchy, sc.h, sc.model.certificate())?;
    let mut monitor = FlockingMonitor::new(spec.detection.epsilon_v, spec.detection.window, sc.h)?;
    monitor.push(&initial)?;

    let mut sup_v = Vec::with_capacity(horizon + 1);
    let mut speeds = vec![Vec::with_capacity(horizon + 1); k - 1];
    // factors[b][σ - 1] for σ = 1..=T
    let mut factors = vec![Vec::with_capacity(horizon); k - 1];
    let record = |s: &crate::state::FlockState, sup_v: &mut Vec<f64>, speeds: &mut Vec<Vec<f64>>| {
        sup_v.push(s.sup_velocity());
        for (b, row) in speeds.iter_mut().enumerate() {
            row.push(s.velocities()[b + 1].norm());
        }
    };
    record(&initial, &mut sup_v, &mut speeds);
    for _ in 0..spec.horizon {
        let w = sim.advance()?;
        for (b, f) in factors.iter_mut().enumerate() {
            f.push((1.0 - sc.h * w.row_sum(b + 1)).max(0.0));
        }
        record(sim.state(), &mut sup_v, &mut speeds);
        monitor.push(sim.state())?;
    }

    let cumulative = factors
        .iter()
        .map(|f| {
            let mut acc = 1.0;
            std::iter::once(1.0)
                .chain(f.iter().map(|x| {
                    acc *= x;
                    acc
                }))
                .collect()
        })
        .collect();
    let windows = spec
        .product_windows
        .iter()
        .map(|w| factors[w.bird - 2][w.tau as usize..(w.t + 1) as usize].iter().product())
        .collect();
    let window_bounds = spec.product_windows.iter().map(|w| product_bound(&bp, w)).collect();
    let v2_norm = initial.velocities()[1].norm();
    let speed_bounds = spec.speed_bound_times.iter().map(|&t| speed_bound(&bp, v2_norm, t)).collect();
    // Short horizons cannot fill the detection window; count them as not flocking.
    let flocking = monitor.verdict().map(|v| v.flocking).unwrap_or(false);
    Ok(ReplicaOutcome { sup_v, speeds, cumulative, windows, window_bounds, speed_bounds, flocking })
}

struct Accumulators {
    sup_v: Vec<Welford>,
    speeds: Vec<Vec<Welford>>,
    cumulative: Vec<Vec<Welford>>,
    windows: Vec<Welford>,
    window_bounds: Vec<Result<Welford, BoundError>>,
    speed_bounds: Vec<Result<Welford, BoundError>>,
    final_sup_v: Vec<f64>,
    failed: Vec<u64>,
}

impl Accumulators {
    fn new(spec: &EnsembleSpec) -> Self {
        let n = spec.horizon as usize + 1;
        let k = spec.scenario.k();
        Accumulators {
            sup_v: vec![Welford::default(); n],
            speeds: vec![vec![Welford::default(); n]; k - 1],
            cumulative: vec![vec![Welford::default(); n]; k - 1],
            windows: vec![Welford::default(); spec.product_windows.len()],
            window_bounds: vec![Ok(Welford::default()); spec.product_windows.len()],
            speed_bounds: vec![Ok(Welford::default()); spec.speed_bound_times.len()],
            final_sup_v: Vec::with_capacity(spec.replicas),
            failed: Vec::new(),
        }
    }

    fn fold(&mut self, r: u64, o: ReplicaOutcome) {
        fn push_all(acc: &mut [Welford], xs: &[f64]) {
            acc.iter_mut().zip(xs).for_each(|(a, &x)| a.push(x));
        }
        fn push_bounds(acc: &mut [Result<Welford, BoundError>], xs: Vec<Result<f64, BoundError>>) {
            for (a, x) in acc.iter_mut().zip(xs) {
                match (a.as_mut(), x) {
                    (Ok(w), Ok(v)) => w.push(v),
                    (Ok(_), Err(e)) => *a = Err(e),
                    (Err(_), _) => {}
                }
            }
        }
        push_all(&mut self.sup_v, &o.sup_v);
        for (acc, xs) in self.speeds.iter_mut().zip(&o.speeds) {
            push_all(acc, xs);
        }
        for (acc, xs) in self.cumulative.iter_mut().zip(&o.cumulative) {
            push_all(acc, xs);
        }
        push_all(&mut self.windows, &o.windows);
        push_bounds(&mut self.window_bounds, o.window_bounds);
        push_bounds(&mut self.speed_bounds, o.speed_bounds);
        self.final_sup_v.push(*o.sup_v.last().expect("horizon >= 1"));
        if !o.flocking {
            self.failed.push(r);
        }
    }
}

fn comparison(label: String, bird: usize, tau: Option<u64>, t: u64, est: &Welford, bound: f64, margin: f64) -> BoundComparison {
    let se = est.se();
    let margin_se = if se > 0.0 {
        (bound - est.mean) / se
    } else if bound >= est.mean {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    BoundComparison {
        label,
        bird,
        tau,
        t,
        empirical_mean: est.mean,
        se,
        bound,
        margin_se,
        pass: est.mean <= bound + margin * se,
    }
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleReport, EnsembleError> {
    spec.validate()?;
    let mut acc = Accumulators::new(spec);
    let total = spec.replicas as u64;
    let mut start = 0u64;
    while start < total {
        let end = (start + CHUNK as u64).min(total);
        let run = |r: u64| run_replica(spec, r).map_err(|source| EnsembleError::Replica { replica: r, source });
        let outcomes: Vec<_> = if spec.parallel {
            (start..end).into_par_iter().map(run).collect()
        } else {
            (start..end).map(run).collect()
        };
        for (r, o) in (start..end).zip(outcomes) {
            acc.fold(r, o?);
        }
        start = end;
    }
    Ok(build_report(spec, acc))
}

fn build_report(spec: &EnsembleSpec, acc: Accumulators) -> EnsembleReport {
    let stats = spec.statistics;
    let mut series = Vec::new();
    if stats.sup_norm {
        series.push(StatSeries::from_acc("sup_velocity", None, &acc.sup_v));
    }
    if stats.bird_speeds {
        for (b, a) in acc.speeds.iter().enumerate() {
            series.push(StatSeries::from_acc("speed", Some(b + 2), a));
        }
    }
    if stats.contraction_products {
        for (b, a) in acc.cumulative.iter().enumerate() {
            series.push(StatSeries::from_acc("contraction_product", Some(b + 2), a));
        }
    }

    let mut partial = 0.0;
    let sup_velocity_partial_sums = if stats.sup_norm {
        acc.sup_v
            .iter()
            .map(|w| {
                partial += w.mean;
                partial
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut sorted = acc.final_sup_v.clone();
    sorted.sort_by(f64::total_cmp);
    let final_sup_velocity_quantiles = if stats.sup_norm {
        [0.05, 0.5, 0.95].iter().map(|&q| Quantile { q, value: quantile(&sorted, q) }).collect()
    } else {
        Vec::new()
    };

    let low_confidence = spec.replicas < MIN_CONFIDENT_REPLICAS;
    let mut products = Vec::new();
    let mut comparisons = Vec::new();
    let mut skipped = Vec::new();
    for ((w, est), bound) in spec.product_windows.iter().zip(&acc.windows).zip(&acc.window_bounds) {
        let bound_mean = bound.as_ref().ok().map(|b| b.mean);
        products.push(ProductEstimate {
            window: *w,
            mean: est.mean,
            se: est.se(),
            replicas: est.n as usize,
            low_confidence,
            bound: bound_mean,
        });
        let label = format!("contraction product bird {} over ({}, {}]", w.bird, w.tau, w.t + 1);
        match bound {
            Ok(b) => comparisons.push(comparison(label, w.bird, Some(w.tau), w.t, est, b.mean, spec.se_margin)),
            Err(e) => skipped.push(format!("{label}: {e}")),
        }
    }
    for (&t, bound) in spec.speed_bound_times.iter().zip(&acc.speed_bounds) {
        let label = format!("speed of bird 2 at t = {t}");
        match bound {
            Ok(b) => comparisons.push(comparison(label, 2, None, t, &acc.speeds[0][t as usize], b.mean, spec.se_margin)),
            Err(e) => skipped.push(format!("{label}: {e}")),
        }
    }

    let flocking_replicas = spec.replicas - acc.failed.len();
    EnsembleReport {
        replicas: spec.replicas,
        horizon: spec.horizon,
        seed: spec.seed,
        low_confidence,
        series,
        sup_velocity_partial_sums,
        final_sup_velocity_quantiles,
        final_mean_sup_velocity: acc.sup_v.last().map_or(0.0, |w| w.mean),
        flocking: FlockingSummary {
            epsilon_v: spec.detection.epsilon_v,
            window: spec.detection.window,
            flocking_replicas,
            fraction: flocking_replicas as f64 / spec.replicas as f64,
            failed_replicas: acc.failed,
        },
        products,
        comparisons,
        skipped_comparisons: skipped,
    }
}

/// Estimate `E ∏_{σ=τ+1}^{t+1} (1 - h Σ_j a_{ℓj}[σ])` over the spec's
/// replicas, paired with the replica-averaged contraction bound.
pub fn estimate_product_expectation(
    spec: &EnsembleSpec,
    bird: usize,
    tau: u64,
    t: u64,
) -> Result<ProductEstimate, EnsembleError> {
    let mut s = spec.clone();
    s.horizon = s.horizon.max(t + 1);
    s.statistics = StatisticSet { bird_speeds: false, contraction_products: false, sup_norm: false };
    s.product_windows = vec![ProductWindow { bird, tau, t }];
    s.speed_bound_times.clear();
    let report = run_ensemble(&s)?;
    Ok(report.products.into_iter().next().expect("one window requested"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::Hierarchy;
    use crate::interactions::{InteractionKind, InteractionModel};
    use crate::simulation::InitialCondition;
    use crate::vec3::Vec3;

    fn two_bird(kind: InteractionKind, h: f64) -> Scenario {
        Scenario::new(
            Hierarchy::chain(2).unwrap(),
            InteractionModel::new(kind).unwrap(),
            h,
            InitialCondition::Explicit {
                positions: vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)],
                velocities: vec![Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0)],
            },
        )
        .unwrap()
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [0.3, 1.7, -2.0, 4.5, 0.0, 0.25];
        let mut w = Welford::default();
        xs.iter().for_each(|&x| w.push(x));
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((w.mean - mean).abs() < 1e-15);
        assert!((w.se() - (var / n).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn deterministic_model_has_zero_spread() {
        let sc = two_bird(InteractionKind::BernoulliFailure { p: 1.0, alpha: 0.0 }, 0.5);
        let mut spec = EnsembleSpec::new(sc, 20, 30, 1);
        spec.product_windows = vec![ProductWindow { bird: 2, tau: 0, t: 3 }];
        let rep = run_ensemble(&spec).unwrap();
        for s in &rep.series {
            assert!(s.se.iter().all(|&e| e == 0.0), "{}", s.name);
        }
        assert_eq!(rep.products[0].mean, 0.5f64.powi(4));
        assert_eq!(rep.products[0].se, 0.0);
    }

    #[test]
    fn empty_product_is_one() {
        let sc = two_bird(InteractionKind::BernoulliFailure { p: 0.5, alpha: 0.0 }, 0.5);
        let spec = EnsembleSpec::new(sc, 50, 10, 3);
        let est = estimate_product_expectation(&spec, 2, 5, 4).unwrap();
        assert_eq!((est.mean, est.se), (1.0, 0.0));
        assert!(est.low_confidence);
    }

    #[test]
    fn zero_weights_leave_product_at_one() {
        // connection probability 2^(-1e6) underflows to 0 at distance 1
        let sc = two_bird(InteractionKind::RandomEnvironment { p: 1.0, alpha: 1e6 }, 0.5);
        let spec = EnsembleSpec::new(sc, 5, 10, 3);
        let est = estimate_product_expectation(&spec, 2, 0, 8).unwrap();
        assert_eq!((est.mean, est.se), (1.0, 0.0));
    }

    #[test]
    fn rejects_bad_specs() {
        let sc = two_bird(InteractionKind::PowerLaw { alpha: 0.0 }, 0.5);
        let mut spec = EnsembleSpec::new(sc, 0, 10, 0);
        assert!(matches!(run_ensemble(&spec), Err(EnsembleError::InvalidSpec(_))));
        spec.replicas = 2;
        spec.product_windows = vec![ProductWindow { bird: 3, tau: 0, t: 1 }];
        assert!(run_ensemble(&spec).is_err());
        spec.product_windows = vec![ProductWindow { bird: 2, tau: 0, t: 10 }];
        assert!(run_ensemble(&spec).is_err());
        spec.product_windows.clear();
        spec.speed_bound_times = vec![11];
        assert!(run_ensemble(&spec).is_err());
    }

    #[test]
    fn quantile_nearest_rank() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.0);
        assert_eq!(quantile(&xs, 0.05), 1.0);
        assert_eq!(quantile(&xs, 0.95), 4.0);
    }
}
