//! Statistical estimators for W-measurable and pairwise sensitivity.
//!
//! W-measurable sensitivity asks for a `δ > 0` such that for every center `x`,
//! almost every `y` eventually separates from `x` by more than `δ`. For a
//! nonsingular map the one-hit form (some `n` with `d(T^n x, T^n y) > δ`) is
//! equivalent to the limsup form, so the estimators count one-hit separations
//! within the horizon and spot-check the limsup form by asking for a
//! separation in both halves of the horizon.
//!
//! Pairwise sensitivity samples `(x, y)` jointly and uses the weak inequality
//! `d >= δ`. On continuous samples the two thresholds differ on a null set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{scan_centers, walk_distances, BaseMetric, MeasureEstimate, MetricSpec};
use crate::rng::{par_map, Sampler, Stream};
use crate::systems::{sample_point, ExactPoint, MapSpec};

/// How many `y` per center get the two-window limsup spot check.
pub const LIMSUP_SUB_BUDGET: usize = 50;

/// Which centers an estimator measures separation from.
#[derive(Clone, Debug, PartialEq)]
pub enum CenterPlan {
    /// `count` centers; when `include_adversarial` is set the map's adversarial
    /// centers come first and uniform draws fill the rest.
    Sampled { count: usize, include_adversarial: bool },
    Explicit(Vec<ExactPoint>),
}

impl CenterPlan {
    pub fn sampled(count: usize) -> Self {
        CenterPlan::Sampled {
            count,
            include_adversarial: true,
        }
    }

    pub fn uniform(count: usize) -> Self {
        CenterPlan::Sampled {
            count,
            include_adversarial: false,
        }
    }

    pub fn explicit(centers: Vec<ExactPoint>) -> Self {
        CenterPlan::Explicit(centers)
    }

    pub(crate) fn points(&self, map: &MapSpec, sampler: &Sampler, bits: u32) -> Vec<ExactPoint> {
        match self {
            CenterPlan::Sampled {
                count,
                include_adversarial,
            } => scan_centers(Some(map), *count, sampler, bits, *include_adversarial),
            CenterPlan::Explicit(c) => c.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterFraction {
    pub center: f64,
    pub fraction: f64,
    pub half_width: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub delta: f64,
    pub horizon: usize,
    /// True for the pairwise estimator, which counts `d >= δ`.
    pub weak_inequality: bool,
    pub separation_fraction: MeasureEstimate,
    pub per_center_fractions: Vec<CenterFraction>,
    /// Trapped-set measure per center, on the same `y` samples as the fractions.
    pub trapped_measures: Vec<MeasureEstimate>,
    /// Pairs whose largest distance equals `δ` exactly: neither separated nor trapped.
    pub boundary_pairs: usize,
    /// Fraction of the sub-budget separating in both `[0, N/2)` and `[N/2, N]`.
    pub limsup_check: Option<MeasureEstimate>,
    pub pairs_sampled: usize,
}

#[derive(Clone, Copy, Debug, Default)]
struct PairOutcome {
    separated: bool,
    trapped: bool,
    both_windows: Option<bool>,
}

fn require_base(metric: &MetricSpec) -> Result<BaseMetric> {
    match metric {
        MetricSpec::Base(b) => Ok(*b),
        MetricSpec::Derived(_) => Err(Error::invalid(
            "separation is measured in a base metric; the horizon already plays the derived metric's role",
        )),
    }
}

fn require_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }
    Ok(())
}

/// Walks one pair. Stops at the first strict separation unless the limsup
/// windows are being tracked.
fn pair_outcome(
    map: &MapSpec,
    base: BaseMetric,
    x: &ExactPoint,
    y: &ExactPoint,
    delta: f64,
    horizon: usize,
    track_windows: bool,
) -> Result<PairOutcome> {
    let split = horizon / 2;
    let mut max = 0.0f64;
    let mut early = false;
    let mut late = false;
    walk_distances(map, base, x, y, horizon, |n, d| {
        max = max.max(d);
        if d > delta {
            if n < split {
                early = true;
            } else {
                late = true;
            }
            return track_windows && !(early && late);
        }
        true
    })?;
    Ok(PairOutcome {
        separated: max > delta,
        trapped: max < delta,
        both_windows: track_windows.then_some(early && late),
    })
}

/// Least `n <= horizon` with `d(T^n x, T^n y) > δ`.
pub fn separation_time(
    map: &MapSpec,
    metric: &MetricSpec,
    x: &ExactPoint,
    y: &ExactPoint,
    delta: f64,
    horizon: usize,
) -> Result<Option<usize>> {
    let base = require_base(metric)?;
    require_delta(delta)?;
    let mut hit = None;
    walk_distances(map, base, x, y, horizon, |n, d| {
        if d > delta {
            hit = Some(n);
            return false;
        }
        true
    })?;
    Ok(hit)
}

/// Fraction of `y` separating from each center within the horizon, averaged over centers.
pub fn w_sensitivity_estimate(
    map: &MapSpec,
    metric: &MetricSpec,
    delta: f64,
    centers: &CenterPlan,
    ys_per_center: usize,
    horizon: usize,
    sampler: &Sampler,
) -> Result<SensitivityReport> {
    let base = require_base(metric)?;
    require_delta(delta)?;
    if horizon < 1 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if ys_per_center == 0 {
        return Err(Error::invalid("need at least one y per center"));
    }
    let bits = sampler.precision_for(map.required_precision(horizon));
    let center_points = centers.points(map, sampler, bits);
    if center_points.is_empty() {
        return Err(Error::invalid("need at least one center"));
    }

    let total = center_points.len() * ys_per_center;
    let outcomes = par_map(total, |k| {
        let (i, j) = (k / ys_per_center, k % ys_per_center);
        let y = sample_point(&mut sampler.stream(Stream::Ys, k as u64), bits);
        pair_outcome(map, base, &center_points[i], &y, delta, horizon, j < LIMSUP_SUB_BUDGET)
    });

    let mut per_center_fractions = Vec::with_capacity(center_points.len());
    let mut trapped_measures = Vec::with_capacity(center_points.len());
    let (mut separated_total, mut boundary_pairs) = (0usize, 0usize);
    let (mut both, mut tracked) = (0usize, 0usize);
    for (i, chunk) in outcomes.chunks(ys_per_center).enumerate() {
        let (mut sep, mut trap) = (0usize, 0usize);
        for o in chunk {
            let o = o.as_ref().map_err(Clone::clone)?;
            sep += o.separated as usize;
            trap += o.trapped as usize;
            boundary_pairs += (!o.separated && !o.trapped) as usize;
            if let Some(b) = o.both_windows {
                tracked += 1;
                both += b as usize;
            }
        }
        let est = MeasureEstimate::monte_carlo(sep, ys_per_center);
        per_center_fractions.push(CenterFraction {
            center: center_points[i].to_f64(),
            fraction: est.value,
            half_width: est.half_width,
            samples: ys_per_center,
        });
        trapped_measures.push(MeasureEstimate::monte_carlo(trap, ys_per_center));
        separated_total += sep;
    }

    Ok(SensitivityReport {
        delta,
        horizon,
        weak_inequality: false,
        separation_fraction: MeasureEstimate::monte_carlo(separated_total, total),
        per_center_fractions,
        trapped_measures,
        boundary_pairs,
        limsup_check: (tracked > 0).then(|| MeasureEstimate::monte_carlo(both, tracked)),
        pairs_sampled: total,
    })
}

/// Measure of `{y : d(T^n x, T^n y) < δ for all n <= N}`.
///
/// Draws the same `y` samples as [`crate::metrics::ball_measure`] does for
/// the derived metric at `(x, δ)`, and agrees with it exactly.
pub fn trapped_set_measure(
    map: &MapSpec,
    metric: &MetricSpec,
    x: &ExactPoint,
    delta: f64,
    horizon: usize,
    sampler: &Sampler,
    samples: usize,
) -> Result<MeasureEstimate> {
    let base = require_base(metric)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("trapped-set radius must lie in (0, 1], got {delta}")));
    }
    if samples < 100 {
        return Err(Error::invalid("trapped-set estimate needs at least 100 samples"));
    }
    let bits = sampler.precision_for(map.required_precision(horizon));
    let trapped = par_map(samples, |i| {
        let y = sample_point(&mut sampler.stream(Stream::Ball, i as u64), bits);
        let mut inside = true;
        walk_distances(map, base, x, &y, horizon, |_, d| {
            inside = d < delta;
            inside
        })
        .map(|_| inside)
    });
    let mut hits = 0;
    for t in trapped {
        hits += t? as usize;
    }
    Ok(MeasureEstimate::monte_carlo(hits, samples))
}

/// Fraction of independently drawn pairs with some `n <= N` achieving `d >= δ`.
pub fn pairwise_sensitivity_estimate(
    map: &MapSpec,
    metric: &MetricSpec,
    delta: f64,
    pairs: usize,
    horizon: usize,
    sampler: &Sampler,
) -> Result<SensitivityReport> {
    let base = require_base(metric)?;
    require_delta(delta)?;
    if pairs == 0 {
        return Err(Error::invalid("need at least one pair"));
    }
    let bits = sampler.precision_for(map.required_precision(horizon));
    let hits = par_map(pairs, |i| {
        let mut rng = sampler.stream(Stream::Pairs, i as u64);
        let x = sample_point(&mut rng, bits);
        let y = sample_point(&mut rng, bits);
        let mut hit = false;
        walk_distances(map, base, &x, &y, horizon, |_, d| {
            hit = d >= delta;
            !hit
        })
        .map(|_| hit)
    });
    let mut separated = 0;
    for h in hits {
        separated += h? as usize;
    }
    Ok(SensitivityReport {
        delta,
        horizon,
        weak_inequality: true,
        separation_fraction: MeasureEstimate::monte_carlo(separated, pairs),
        per_center_fractions: Vec::new(),
        trapped_measures: Vec::new(),
        boundary_pairs: 0,
        limsup_check: None,
        pairs_sampled: pairs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub centers: usize,
    pub ys_per_center: usize,
}

impl Budget {
    pub fn total(&self) -> usize {
        self.centers * self.ys_per_center
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub pairwise: MeasureEstimate,
    pub w_mean: MeasureEstimate,
    pub gap: f64,
    /// Sum of the two 3σ half-widths.
    pub tolerance: f64,
    pub consistent: bool,
}

/// Runs the pairwise estimator and the per-center estimator (uniform centers)
/// on the same total budget and compares them.
pub fn equivalence_check(
    map: &MapSpec,
    metric: &MetricSpec,
    delta: f64,
    budget: Budget,
    horizon: usize,
    sampler: &Sampler,
) -> Result<EquivalenceReport> {
    let pairwise = pairwise_sensitivity_estimate(map, metric, delta, budget.total(), horizon, sampler)?;
    let w = w_sensitivity_estimate(
        map,
        metric,
        delta,
        &CenterPlan::uniform(budget.centers),
        budget.ys_per_center,
        horizon,
        sampler,
    )?;
    let (p, m) = (pairwise.separation_fraction, w.separation_fraction);
    let gap = (p.value - m.value).abs();
    let tolerance = p.half_width + m.half_width;
    Ok(EquivalenceReport {
        pairwise: p,
        w_mean: m,
        gap,
        tolerance,
        consistent: gap <= tolerance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub delta: f64,
    pub fraction: MeasureEstimate,
    pub qualifies: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantSearch {
    /// Largest grid δ whose separation fraction reaches the threshold.
    pub delta: Option<f64>,
    pub threshold: f64,
    pub horizon: usize,
    pub grid: Vec<GridPoint>,
    /// `(failing δ, later qualifying δ)` pairs that break the down-closed
    /// pattern by more than the combined 3σ.
    pub monotonicity_violations: Vec<(f64, f64)>,
}

/// Evaluates every grid δ on one shared sample of `(center, y)` pairs.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_constant_search(
    map: &MapSpec,
    metric: &MetricSpec,
    delta_grid: &[f64],
    threshold: f64,
    centers: &CenterPlan,
    ys_per_center: usize,
    horizon: usize,
    sampler: &Sampler,
) -> Result<ConstantSearch> {
    let base = require_base(metric)?;
    if delta_grid.is_empty() {
        return Err(Error::invalid("delta grid is empty"));
    }
    if delta_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("delta grid must be strictly ascending"));
    }
    require_delta(delta_grid[0])?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1], got {threshold}")));
    }
    if ys_per_center == 0 {
        return Err(Error::invalid("need at least one y per center"));
    }
    let bits = sampler.precision_for(map.required_precision(horizon));
    let center_points = centers.points(map, sampler, bits);
    if center_points.is_empty() {
        return Err(Error::invalid("need at least one center"));
    }
    let top = *delta_grid.last().expect("non-empty grid");

    let total = center_points.len() * ys_per_center;
    let maxima = par_map(total, |k| {
        let i = k / ys_per_center;
        let y = sample_point(&mut sampler.stream(Stream::Ys, k as u64), bits);
        let mut max = 0.0f64;
        walk_distances(map, base, &center_points[i], &y, horizon, |_, d| {
            max = max.max(d);
            max <= top
        })
        .map(|_| max)
    });
    let maxima: Vec<f64> = maxima.into_iter().collect::<Result<_>>()?;

    let grid: Vec<GridPoint> = delta_grid
        .iter()
        .map(|&delta| {
            let hits = maxima.iter().filter(|&&m| m > delta).count();
            let fraction = MeasureEstimate::monte_carlo(hits, total);
            GridPoint {
                delta,
                fraction,
                qualifies: fraction.value >= threshold,
            }
        })
        .collect();

    let mut monotonicity_violations = Vec::new();
    for (i, lo) in grid.iter().enumerate() {
        if lo.qualifies {
            continue;
        }
        for hi in &grid[i + 1..] {
            let excess = hi.fraction.value - lo.fraction.value;
            if hi.qualifies && excess > hi.fraction.half_width + lo.fraction.half_width {
                monotonicity_violations.push((lo.delta, hi.delta));
            }
        }
    }

    Ok(ConstantSearch {
        delta: grid.iter().rev().find(|g| g.qualifies).map(|g| g.delta),
        threshold,
        horizon,
        grid,
        monotonicity_violations,
    })
}
