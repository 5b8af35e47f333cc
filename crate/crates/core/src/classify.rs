//! Sensitive-versus-isometry classification.
//!
//! A map is either W-measurably sensitive or, for ergodic measure-preserving
//! systems, isomorphic to an ergodic isometry. The classifier gathers evidence
//! for one branch at a time: a sensitivity constant first, and only when none
//! is found, an isometry bundle on the derived metric. An `IsometryLike`
//! verdict names a Kronecker candidate; it does not construct the conjugacy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    ball_measure, isometry_defect, lipschitz_defect, BallRecord, DefectReport, MeasureEstimate, MetricSpec,
};
use crate::rng::Sampler;
use crate::sensitivity::{
    sensitivity_constant_search, w_sensitivity_estimate, CenterPlan, ConstantSearch, SensitivityReport,
};
use crate::systems::{MapKind, MapSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub delta_grid: Vec<f64>,
    pub horizon: usize,
    pub centers: usize,
    pub ys_per_center: usize,
    pub threshold: f64,
    /// Absolute tolerance on the derived-metric isometry defect.
    pub isometry_tolerance: f64,
    pub isometry_pairs: usize,
    pub uniformity_radius: f64,
    pub uniformity_centers: usize,
    pub uniformity_samples: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            delta_grid: (1..10).map(|i| f64::from(i) / 10.0).collect(),
            horizon: 200,
            centers: 20,
            ys_per_center: 500,
            threshold: 0.99,
            isometry_tolerance: 2f64.powi(-40),
            isometry_pairs: 2000,
            uniformity_radius: 0.1,
            uniformity_centers: 20,
            uniformity_samples: 4000,
        }
    }
}

impl ClassifyConfig {
    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.centers == 0 || self.ys_per_center == 0 || self.isometry_pairs == 0 || self.uniformity_centers == 0 {
            return Err(Error::invalid("classification budgets must be positive"));
        }
        if !(self.isometry_tolerance >= 0.0) {
            return Err(Error::invalid("isometry tolerance must be nonnegative"));
        }
        if !(self.uniformity_radius > 0.0) {
            return Err(Error::invalid("uniformity radius must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub radius: f64,
    /// Largest minus smallest ball estimate.
    pub max_spread: f64,
    /// Sum of the half-widths of the two extreme estimates.
    pub tolerance: f64,
    pub within_tolerance: bool,
    /// Every ball is statistically non-null.
    pub all_positive: bool,
    pub estimates: Vec<BallRecord>,
    pub warnings: Vec<String>,
}

impl UniformityReport {
    pub fn passes(&self) -> bool {
        self.within_tolerance && self.all_positive
    }
}

/// Compares ball measures of a fixed radius across centers.
///
/// The metric is expected to be 1-Lipschitz for `map`. A short Lipschitz probe
/// runs first and adds a warning when it fails; the check runs regardless.
pub fn ball_uniformity_check(
    map: &MapSpec,
    metric: &MetricSpec,
    radius: f64,
    centers: &CenterPlan,
    samples: usize,
    sampler: &Sampler,
) -> Result<UniformityReport> {
    let mut warnings = Vec::new();
    match lipschitz_defect(metric, map, sampler, 200) {
        Ok(r) if r.max_defect > 0.0 => warnings.push(format!(
            "metric is not 1-Lipschitz for {map}: sampled defect {:e}",
            r.max_defect
        )),
        Ok(_) => {}
        Err(Error::MapMismatch { metric_map, .. }) => {
            warnings.push(format!("metric is derived from {metric_map}, not from {map}"))
        }
        Err(e) => return Err(e),
    }

    let bits = sampler.precision_for(metric.required_precision());
    let points = centers.points(map, sampler, bits);
    if points.is_empty() {
        return Err(Error::invalid("uniformity check needs at least one center"));
    }
    let mut estimates = Vec::with_capacity(points.len());
    for c in &points {
        estimates.push(BallRecord {
            center: c.to_f64(),
            radius,
            estimate: ball_measure(metric, c, radius, sampler, samples)?,
        });
    }

    let by_value = |a: &&BallRecord, b: &&BallRecord| a.estimate.value.total_cmp(&b.estimate.value);
    let lo = estimates.iter().min_by(by_value).expect("non-empty").estimate;
    let hi = estimates.iter().max_by(by_value).expect("non-empty").estimate;
    let max_spread = hi.value - lo.value;
    let tolerance = hi.half_width + lo.half_width;
    Ok(UniformityReport {
        radius,
        max_spread,
        tolerance,
        within_tolerance: max_spread <= tolerance,
        all_positive: estimates.iter().all(|b| !b.estimate.is_null()),
        estimates,
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Sensitive,
    IsometryLike,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "report", rename_all = "snake_case")]
pub enum Evidence {
    ConstantSearch(ConstantSearch),
    Sensitivity(SensitivityReport),
    IsometryDefect(DefectReport),
    BallUniformity(UniformityReport),
}

impl Evidence {
    pub fn name(&self) -> &'static str {
        match self {
            Evidence::ConstantSearch(_) => "constant_search",
            Evidence::Sensitivity(_) => "sensitivity",
            Evidence::IsometryDefect(_) => "isometry_defect",
            Evidence::BallUniformity(_) => "ball_uniformity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub map: MapSpec,
    pub metric: MetricSpec,
    pub sampler: Sampler,
    pub config: ClassifyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub delta: Option<f64>,
    pub isometry_defect: Option<f64>,
    /// Absent when the sensitive branch settles the verdict without a uniformity check.
    pub ball_uniformity_spread: Option<f64>,
    pub evidence: Vec<Evidence>,
    /// Sub-reports that kept the verdict from completing.
    pub failing: Vec<String>,
    /// Both evidence bundles passed on the same run.
    pub contradiction: bool,
    pub warnings: Vec<String>,
    pub config_echo: ConfigEcho,
}

struct IsometryBundle {
    defect: DefectReport,
    uniformity: Option<UniformityReport>,
}

impl IsometryBundle {
    fn passes(&self, tol: f64) -> bool {
        self.defect.max_defect <= tol && self.uniformity.as_ref().is_some_and(UniformityReport::passes)
    }
}

/// Runs the isometry defect on the derived metric and, only if it passes or
/// `always_uniformity` is set, the ball uniformity check.
fn isometry_bundle(
    map: &MapSpec,
    metric: &MetricSpec,
    config: &ClassifyConfig,
    sampler: &Sampler,
    always_uniformity: bool,
) -> Result<IsometryBundle> {
    let derived = MetricSpec::derived(metric.clone(), map.clone(), config.horizon)?;
    let defect = isometry_defect(&derived, map, sampler, config.isometry_pairs)?;
    let uniformity = if always_uniformity || defect.max_defect <= config.isometry_tolerance {
        Some(ball_uniformity_check(
            map,
            &derived,
            config.uniformity_radius,
            &CenterPlan::sampled(config.uniformity_centers),
            config.uniformity_samples,
            sampler,
        )?)
    } else {
        None
    };
    Ok(IsometryBundle { defect, uniformity })
}

/// Classifies `map` with respect to the base metric `metric`.
///
/// Fails only on invalid configuration or exhausted precision; missing
/// evidence yields `Inconclusive`.
pub fn dichotomy_classify(
    map: &MapSpec,
    metric: &MetricSpec,
    config: &ClassifyConfig,
    sampler: &Sampler,
) -> Result<Verdict> {
    config.validate()?;
    let mut warnings = Vec::new();
    if matches!(map.kind, MapKind::Identity) {
        warnings.push("identity is not ergodic; the dichotomy does not apply to it".to_string());
    }
    let plan = CenterPlan::sampled(config.centers);
    let search = sensitivity_constant_search(
        map,
        metric,
        &config.delta_grid,
        config.threshold,
        &plan,
        config.ys_per_center,
        config.horizon,
        sampler,
    )?;
    if !search.monotonicity_violations.is_empty() {
        warnings.push("separation fractions are not monotone in delta".to_string());
    }

    let mut evidence = vec![Evidence::ConstantSearch(search.clone())];
    let mut failing = Vec::new();
    let mut verdict = Verdict {
        label: Label::Inconclusive,
        delta: None,
        isometry_defect: None,
        ball_uniformity_spread: None,
        evidence: Vec::new(),
        failing: Vec::new(),
        contradiction: false,
        warnings: Vec::new(),
        config_echo: ConfigEcho {
            map: map.clone(),
            metric: metric.clone(),
            sampler: *sampler,
            config: config.clone(),
        },
    };

    match search.delta {
        Some(delta) => {
            let report = w_sensitivity_estimate(map, metric, delta, &plan, config.ys_per_center, config.horizon, sampler)?;
            let trapped_null = report.trapped_measures.iter().all(MeasureEstimate::is_null);
            let qualifies = report.separation_fraction.value >= config.threshold;
            evidence.push(Evidence::Sensitivity(report));
            // Probe the other branch too: a passing isometry bundle here is a contradiction.
            let bundle = isometry_bundle(map, metric, config, sampler, false)?;
            let contradiction = bundle.passes(config.isometry_tolerance);
            verdict.isometry_defect = Some(bundle.defect.max_defect);
            verdict.ball_uniformity_spread = bundle.uniformity.as_ref().map(|u| u.max_spread);
            evidence.push(Evidence::IsometryDefect(bundle.defect));
            evidence.extend(bundle.uniformity.map(Evidence::BallUniformity));
            if !trapped_null || !qualifies {
                failing.push("sensitivity".to_string());
            }
            verdict.delta = Some(delta);
            verdict.contradiction = contradiction;
            if contradiction {
                failing.push("isometry_defect".to_string());
            } else if failing.is_empty() {
                verdict.label = Label::Sensitive;
            }
        }
        None => {
            let bundle = isometry_bundle(map, metric, config, sampler, true)?;
            let uniformity = bundle.uniformity.as_ref().expect("uniformity always runs here");
            verdict.isometry_defect = Some(bundle.defect.max_defect);
            verdict.ball_uniformity_spread = Some(uniformity.max_spread);
            if bundle.defect.max_defect > config.isometry_tolerance {
                failing.push("isometry_defect".to_string());
            }
            if !uniformity.passes() {
                failing.push("ball_uniformity".to_string());
            }
            warnings.extend(uniformity.warnings.iter().cloned());
            if failing.is_empty() {
                verdict.label = Label::IsometryLike;
            }
            evidence.push(Evidence::IsometryDefect(bundle.defect));
            evidence.extend(bundle.uniformity.map(Evidence::BallUniformity));
        }
    }
    verdict.evidence = evidence;
    verdict.failing = failing;
    verdict.warnings = warnings;
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::ExactPoint;

    #[test]
    fn euclidean_identity_spread_matches_interval_lengths() {
        let centers = vec![
            ExactPoint::from_f64(0.05, 64).unwrap(),
            ExactPoint::from_f64(0.5, 64).unwrap(),
        ];
        let r = ball_uniformity_check(
            &MapSpec::identity(),
            &MetricSpec::euclidean(),
            0.3,
            &CenterPlan::explicit(centers),
            0,
            &Sampler::new(0),
        )
        .unwrap();
        assert!((r.max_spread - 0.25).abs() < 1e-12);
        assert!(!r.within_tolerance);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn small_config_classifies_doubling() {
        let config = ClassifyConfig {
            horizon: 60,
            centers: 6,
            ys_per_center: 200,
            isometry_pairs: 500,
            uniformity_centers: 4,
            uniformity_samples: 500,
            ..ClassifyConfig::default()
        };
        let v = dichotomy_classify(&MapSpec::doubling(), &MetricSpec::euclidean(), &config, &Sampler::new(3)).unwrap();
        assert_eq!(v.label, Label::Sensitive, "{:?}", v.failing);
        assert!(!v.contradiction);
        assert!(v.delta.unwrap() >= 0.5);
    }

    #[test]
    fn identity_is_not_isometry_like_with_euclidean() {
        let config = ClassifyConfig {
            horizon: 10,
            centers: 4,
            ys_per_center: 100,
            isometry_pairs: 200,
            uniformity_centers: 4,
            uniformity_samples: 4000,
            ..ClassifyConfig::default()
        };
        let v = dichotomy_classify(&MapSpec::identity(), &MetricSpec::euclidean(), &config, &Sampler::new(1)).unwrap();
        assert_eq!(v.label, Label::Inconclusive);
        assert!(v.failing.contains(&"ball_uniformity".to_string()));
        assert!(!v.warnings.is_empty());
    }

    #[test]
    fn bad_config_is_an_error() {
        let config = ClassifyConfig {
            horizon: 0,
            ..ClassifyConfig::default()
        };
        assert!(dichotomy_classify(&MapSpec::tent(), &MetricSpec::euclidean(), &config, &Sampler::new(0)).is_err());
    }
}
