use serde::{Deserialize, Serialize};

use super::{BaseMetric, MetricSpec};
use crate::error::{Error, Result};
use crate::rng::{par_map, Sampler, Stream};
use crate::systems::{sample_point, ExactPoint, MapSpec};

pub(crate) const MIN_MC_SAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureMethod {
    Analytic,
    MonteCarlo,
}

/// Estimate of the Lebesgue measure of a set, with a 3σ half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub half_width: f64,
    pub samples: usize,
    pub method: MeasureMethod,
}

impl MeasureEstimate {
    pub fn analytic(value: f64) -> Self {
        MeasureEstimate {
            value,
            half_width: 0.0,
            samples: 0,
            method: MeasureMethod::Analytic,
        }
    }

    /// Binomial proportion `hits / samples` with a normal-approximation 3σ
    /// half-width. At 0 or 1 hits-fraction the normal width degenerates, so the
    /// rule-of-three width `3 / samples` is reported instead.
    pub fn monte_carlo(hits: usize, samples: usize) -> Self {
        assert!(samples > 0, "monte carlo estimate needs samples");
        let n = samples as f64;
        let value = hits as f64 / n;
        let half_width = if hits == 0 || hits == samples {
            3.0 / n
        } else {
            3.0 * (value * (1.0 - value) / n).sqrt()
        };
        MeasureEstimate {
            value,
            half_width,
            samples,
            method: MeasureMethod::MonteCarlo,
        }
    }

    /// True when the estimate cannot be told apart from zero.
    pub fn is_null(&self) -> bool {
        match self.method {
            MeasureMethod::Analytic => self.value <= 0.0,
            MeasureMethod::MonteCarlo => self.value - self.half_width <= 0.0,
        }
    }

    pub fn contains(&self, target: f64) -> bool {
        (self.value - target).abs() <= self.half_width
    }
}

/// Length of `(c - r, c + r) ∩ [0, 1)`.
fn interval_ball(center: f64, radius: f64) -> f64 {
    ((center + radius).min(1.0) - (center - radius).max(0.0)).max(0.0)
}

fn analytic_ball(base: BaseMetric, center: f64, radius: f64) -> f64 {
    match base {
        BaseMetric::Euclidean => interval_ball(center, radius),
        BaseMetric::Circle => (2.0 * radius).min(1.0),
        BaseMetric::Power(s) => interval_ball(center, radius.powf(1.0 / s)),
    }
}

/// Distances from `center` to `samples` uniform points drawn from the sampler's ball stream.
pub(crate) fn sampled_distances(
    metric: &MetricSpec,
    center: &ExactPoint,
    sampler: &Sampler,
    samples: usize,
) -> Result<Vec<f64>> {
    let bits = sampler.precision_for(metric.required_precision());
    par_map(samples, |i| {
        let y = sample_point(&mut sampler.stream(Stream::Ball, i as u64), bits);
        metric.distance(center, &y)
    })
    .into_iter()
    .collect()
}

/// Measure of the open ball `{y : d(center, y) < radius}`.
///
/// Base metrics are measured in closed form. Derived metrics are estimated by
/// Monte Carlo over uniform points from `sampler`.
pub fn ball_measure(
    metric: &MetricSpec,
    center: &ExactPoint,
    radius: f64,
    sampler: &Sampler,
    samples: usize,
) -> Result<MeasureEstimate> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("ball radius must be positive, got {radius}")));
    }
    match metric {
        MetricSpec::Base(b) => Ok(MeasureEstimate::analytic(analytic_ball(*b, center.to_f64(), radius))),
        MetricSpec::Derived(_) => {
            if samples < MIN_MC_SAMPLES {
                return Err(Error::invalid(format!(
                    "monte carlo ball measure needs at least {MIN_MC_SAMPLES} samples"
                )));
            }
            let d = sampled_distances(metric, center, sampler, samples)?;
            let hits = d.iter().filter(|&&v| v < radius).count();
            Ok(MeasureEstimate::monte_carlo(hits, samples))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Compatibility {
    EmpiricallyCompatible,
    NullBallsFound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallRecord {
    pub center: f64,
    pub radius: f64,
    pub estimate: MeasureEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub verdict: Compatibility,
    pub min_estimate: MeasureEstimate,
    pub flagged_balls: Vec<BallRecord>,
    pub balls: Vec<BallRecord>,
}

/// Scan centers for the metric: the adversarial list of its map first (or of
/// the identity for base metrics), then uniform draws.
pub(crate) fn scan_centers(
    map: Option<&MapSpec>,
    count: usize,
    sampler: &Sampler,
    bits: u32,
    include_adversarial: bool,
) -> Vec<ExactPoint> {
    let mut centers = if include_adversarial {
        map.cloned()
            .unwrap_or_else(MapSpec::identity)
            .adversarial_centers(bits)
    } else {
        Vec::new()
    };
    centers.truncate(count);
    let fill = count - centers.len();
    centers.extend((0..fill).map(|i| sample_point(&mut sampler.stream(Stream::Centers, i as u64), bits)));
    centers
}

/// Looks for balls of (statistically) zero measure over a grid of centers and radii.
/// The metric is declared empirically compatible iff every estimate sits
/// strictly above its half-width.
pub fn mu_compatibility_scan(
    metric: &MetricSpec,
    radii: &[f64],
    sampler: &Sampler,
    centers: usize,
    samples: usize,
) -> Result<ScanReport> {
    if radii.is_empty() {
        return Err(Error::invalid("radius grid is empty"));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::invalid(format!("radius must be positive, got {r}")));
    }
    if centers == 0 {
        return Err(Error::invalid("scan needs at least one center"));
    }
    let bits = sampler.precision_for(metric.required_precision());
    let map = match metric {
        MetricSpec::Derived(d) => Some(&d.map),
        MetricSpec::Base(_) => None,
    };
    let center_points = scan_centers(map, centers, sampler, bits, true);

    let mut balls = Vec::with_capacity(center_points.len() * radii.len());
    for center in &center_points {
        match metric {
            MetricSpec::Base(_) => {
                for &r in radii {
                    balls.push(BallRecord {
                        center: center.to_f64(),
                        radius: r,
                        estimate: ball_measure(metric, center, r, sampler, samples)?,
                    });
                }
            }
            MetricSpec::Derived(_) => {
                if samples < MIN_MC_SAMPLES {
                    return Err(Error::invalid(format!(
                        "monte carlo scan needs at least {MIN_MC_SAMPLES} samples"
                    )));
                }
                let d = sampled_distances(metric, center, sampler, samples)?;
                for &r in radii {
                    let hits = d.iter().filter(|&&v| v < r).count();
                    balls.push(BallRecord {
                        center: center.to_f64(),
                        radius: r,
                        estimate: MeasureEstimate::monte_carlo(hits, samples),
                    });
                }
            }
        }
    }

    let flagged_balls: Vec<BallRecord> = balls.iter().filter(|b| b.estimate.is_null()).cloned().collect();
    let min_estimate = balls
        .iter()
        .map(|b| b.estimate)
        .min_by(|a, b| (a.value - a.half_width).total_cmp(&(b.value - b.half_width)))
        .expect("non-empty scan");
    let verdict = if flagged_balls.is_empty() {
        Compatibility::EmpiricallyCompatible
    } else {
        Compatibility::NullBallsFound
    };
    Ok(ScanReport {
        verdict,
        min_estimate,
        flagged_balls,
        balls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_ball_is_interval_length() {
        let c = ExactPoint::from_f64(0.5, 64).unwrap();
        let m = ball_measure(&MetricSpec::euclidean(), &c, 0.1, &Sampler::new(0), 0).unwrap();
        assert!((m.value - 0.2).abs() < 1e-15);
        assert_eq!(m.method, MeasureMethod::Analytic);
        assert_eq!(m.half_width, 0.0);
        let edge = ExactPoint::from_f64(0.05, 64).unwrap();
        let m = ball_measure(&MetricSpec::euclidean(), &edge, 0.3, &Sampler::new(0), 0).unwrap();
        assert!((m.value - 0.35).abs() < 1e-15);
    }

    #[test]
    fn power_ball_uses_root_radius() {
        let c = ExactPoint::from_f64(0.5, 64).unwrap();
        let m = ball_measure(&MetricSpec::power(0.5).unwrap(), &c, 0.2, &Sampler::new(0), 0).unwrap();
        assert!((m.value - 0.08).abs() < 1e-15);
    }

    #[test]
    fn rule_of_three_at_extremes() {
        let z = MeasureEstimate::monte_carlo(0, 10_000);
        assert_eq!(z.value, 0.0);
        assert!((z.half_width - 3e-4).abs() < 1e-18);
        assert!(z.is_null());
        let half = MeasureEstimate::monte_carlo(5_000, 10_000);
        assert!((half.half_width - 0.015).abs() < 1e-12);
        assert!(!half.is_null());
        assert!(MeasureEstimate::monte_carlo(8, 10_000).is_null());
        assert!(!MeasureEstimate::monte_carlo(10, 10_000).is_null());
    }

    #[test]
    fn invalid_ball_requests() {
        let c = ExactPoint::zero(64);
        assert!(ball_measure(&MetricSpec::circle(), &c, 0.0, &Sampler::new(0), 0).is_err());
        let d = MetricSpec::derived(MetricSpec::circle(), MapSpec::tent(), 5).unwrap();
        assert!(ball_measure(&d, &c, 0.1, &Sampler::new(0), 50).is_err());
        assert!(mu_compatibility_scan(&MetricSpec::circle(), &[], &Sampler::new(0), 3, 100).is_err());
    }

    #[test]
    fn circle_scan_is_compatible() {
        let r = mu_compatibility_scan(&MetricSpec::circle(), &[0.01, 0.1, 0.4], &Sampler::new(1), 8, 100)
            .unwrap();
        assert_eq!(r.verdict, Compatibility::EmpiricallyCompatible);
        assert_eq!(r.balls.len(), 24);
        assert!((r.min_estimate.value - 0.02).abs() < 1e-15);
    }
}
