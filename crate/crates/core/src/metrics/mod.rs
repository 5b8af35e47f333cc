//! Base metrics on `[0, 1)`, the derived metric `d_T` truncated at a finite
//! horizon, and the estimators built on them.
//!
//! The derived metric is
//!
//! ```text
//! d_T^N(x, y) = min( max_{0 <= n <= N} d(T^n x, T^n y), 1 )
//! ```
//!
//! which is nondecreasing in `N` and converges to the untruncated metric, so a
//! finite horizon always gives a lower bound. Points stay exact along the
//! orbit; only the final per-step distances are rounded to `f64`, through a
//! monotone conversion, so maxima and horizon comparisons are exact.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fixed::Fixed;
use crate::systems::{iterate, ExactPoint, MapSpec, GUARD_BITS};

mod checks;
mod measure;

pub use checks::{
    isometry_defect, lipschitz_defect, verify_metric_axioms, Axiom, AxiomReport, AxiomViolation,
    DefectReport,
};
pub use measure::{
    ball_measure, mu_compatibility_scan, BallRecord, Compatibility, MeasureEstimate,
    MeasureMethod, ScanReport,
};
pub(crate) use measure::scan_centers;

/// Slack for triangle-inequality checks evaluated in floating point.
pub const TRIANGLE_SLACK: f64 = 8.673_617_379_884_035e-19; // 2^-60

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BaseMetric {
    Euclidean,
    Circle,
    /// `|x - y|^s` for `s` in `(0, 1]`.
    Power(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedMetric {
    pub base: BaseMetric,
    pub map: MapSpec,
    pub horizon: usize,
}

/// A metric on `[0, 1)`: one of the base metrics or a derived metric over one.
/// Derived metrics cannot be nested.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricSpec {
    Base(BaseMetric),
    Derived(DerivedMetric),
}

fn aligned<'a>(x: &'a ExactPoint, y: &'a ExactPoint) -> (Fixed, Fixed) {
    let bits = x.precision_bits().max(y.precision_bits());
    (x.fixed().with_bits(bits), y.fixed().with_bits(bits))
}

impl BaseMetric {
    /// Exact distance as a binary fraction, for the metrics whose values are
    /// dyadic rationals of the inputs.
    pub(crate) fn exact(&self, x: &ExactPoint, y: &ExactPoint) -> Option<Fixed> {
        let (a, b) = if x.precision_bits() == y.precision_bits() {
            (x.fixed().clone(), y.fixed().clone())
        } else {
            aligned(x, y)
        };
        match self {
            BaseMetric::Euclidean => Some(a.abs_diff(&b)),
            BaseMetric::Power(s) if *s == 1.0 => Some(a.abs_diff(&b)),
            BaseMetric::Circle => {
                let d = a.abs_diff(&b);
                Some(if d.top_bit() { d.neg_mod() } else { d })
            }
            BaseMetric::Power(_) => None,
        }
    }

    pub fn eval(&self, x: &ExactPoint, y: &ExactPoint) -> f64 {
        match self {
            BaseMetric::Power(s) if *s != 1.0 => {
                let (a, b) = aligned(x, y);
                a.abs_diff(&b).to_f64().powf(*s)
            }
            _ => self.exact(x, y).expect("exact metric").to_f64(),
        }
    }

    pub fn has_exact_values(&self) -> bool {
        !matches!(self, BaseMetric::Power(s) if *s != 1.0)
    }
}

impl MetricSpec {
    pub fn euclidean() -> Self {
        MetricSpec::Base(BaseMetric::Euclidean)
    }

    pub fn circle() -> Self {
        MetricSpec::Base(BaseMetric::Circle)
    }

    pub fn power(s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::invalid(format!("power metric needs s in (0, 1], got {s}")));
        }
        Ok(MetricSpec::Base(BaseMetric::Power(s)))
    }

    pub fn derived(base: MetricSpec, map: MapSpec, horizon: usize) -> Result<Self> {
        match base {
            MetricSpec::Base(base) => Ok(MetricSpec::Derived(DerivedMetric { base, map, horizon })),
            MetricSpec::Derived(_) => Err(Error::invalid("a derived metric cannot be built over another derived metric")),
        }
    }

    pub fn base(&self) -> BaseMetric {
        match self {
            MetricSpec::Base(b) => *b,
            MetricSpec::Derived(d) => d.base,
        }
    }

    /// Precision sampled points need for this metric to be evaluated exactly.
    pub fn required_precision(&self) -> u32 {
        match self {
            MetricSpec::Base(_) => GUARD_BITS,
            MetricSpec::Derived(d) => d.map.required_precision(d.horizon),
        }
    }

    /// The same metric with the horizon replaced; base metrics are returned unchanged.
    pub fn with_horizon(&self, horizon: usize) -> MetricSpec {
        match self {
            MetricSpec::Base(_) => self.clone(),
            MetricSpec::Derived(d) => MetricSpec::Derived(DerivedMetric {
                horizon,
                ..d.clone()
            }),
        }
    }

    pub fn distance(&self, x: &ExactPoint, y: &ExactPoint) -> Result<f64> {
        distance(self, x, y)
    }

    pub(crate) fn exact_distance(&self, x: &ExactPoint, y: &ExactPoint) -> Result<Option<Fixed>> {
        match self {
            MetricSpec::Base(b) => Ok(b.exact(x, y)),
            MetricSpec::Derived(d) => {
                if !d.base.has_exact_values() {
                    return Ok(None);
                }
                let mut best: Option<Fixed> = None;
                walk_distances_exact(&d.map, d.base, x, y, d.horizon, |_, v| {
                    if best.as_ref().is_none_or(|b| v > *b) {
                        best = Some(v);
                    }
                    true
                })?;
                // Exact base distances are below 1, so the cap never binds here.
                Ok(best)
            }
        }
    }
}

/// Evaluates `metric` at `(x, y)`. Derived metrics iterate both points `N` times.
pub fn distance(metric: &MetricSpec, x: &ExactPoint, y: &ExactPoint) -> Result<f64> {
    match metric {
        MetricSpec::Base(b) => Ok(b.eval(x, y)),
        MetricSpec::Derived(d) => {
            let mut best = 0.0f64;
            walk_distances(&d.map, d.base, x, y, d.horizon, |_, v| {
                best = best.max(v);
                true
            })?;
            Ok(best.min(1.0))
        }
    }
}

/// Calls `visit(n, d(T^n x, T^n y))` for `n = 0..=horizon` until it returns false.
pub(crate) fn walk_distances<F>(
    map: &MapSpec,
    base: BaseMetric,
    x: &ExactPoint,
    y: &ExactPoint,
    horizon: usize,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, f64) -> bool,
{
    let bits = x.precision_bits().max(y.precision_bits());
    let mut px = x.with_precision(bits);
    let mut py = y.with_precision(bits);
    for n in 0..=horizon {
        if !visit(n, base.eval(&px, &py)) || n == horizon {
            break;
        }
        px = iterate(map, &px)?;
        py = iterate(map, &py)?;
    }
    Ok(())
}

fn walk_distances_exact<F>(
    map: &MapSpec,
    base: BaseMetric,
    x: &ExactPoint,
    y: &ExactPoint,
    horizon: usize,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, Fixed) -> bool,
{
    let bits = x.precision_bits().max(y.precision_bits());
    let mut px = x.with_precision(bits);
    let mut py = y.with_precision(bits);
    for n in 0..=horizon {
        let d = base.exact(&px, &py).expect("exact base metric");
        if !visit(n, d) || n == horizon {
            break;
        }
        px = iterate(map, &px)?;
        py = iterate(map, &py)?;
    }
    Ok(())
}

impl fmt::Display for BaseMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseMetric::Euclidean => f.write_str("euclidean"),
            BaseMetric::Circle => f.write_str("circle"),
            BaseMetric::Power(s) => write!(f, "power:{s}"),
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::Base(b) => b.fmt(f),
            MetricSpec::Derived(d) => write!(f, "derived({}; {}; N={})", d.base, d.map, d.horizon),
        }
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let lower = s.to_ascii_lowercase();
        if lower.starts_with("derived") {
            let inner = s["derived".len()..]
                .trim()
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| Error::parse(format!("derived metric must look like derived(base; map; N=..), got `{s}`")))?;
            let parts: Vec<&str> = inner.split(';').map(str::trim).collect();
            let [base, map, horizon] = parts[..] else {
                return Err(Error::parse(format!("derived metric needs three `;`-separated fields, got `{s}`")));
            };
            let base: MetricSpec = base.parse()?;
            let map: MapSpec = map.parse()?;
            let horizon = horizon
                .strip_prefix("N=")
                .or_else(|| horizon.strip_prefix("n="))
                .unwrap_or(horizon)
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(format!("bad horizon `{horizon}`")))?;
            return MetricSpec::derived(base, map, horizon);
        }
        match lower.split_once(':') {
            None if lower == "euclidean" => Ok(MetricSpec::euclidean()),
            None if lower == "circle" => Ok(MetricSpec::circle()),
            Some(("power", exp)) => {
                let exp = exp
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(format!("bad power exponent `{exp}`")))?;
                MetricSpec::power(exp)
            }
            _ => Err(Error::parse(format!("unrecognized metric `{s}`"))),
        }
    }
}

impl Serialize for MetricSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64) -> ExactPoint {
        ExactPoint::from_f64(x, 256).unwrap()
    }

    #[test]
    fn circle_wraps_around() {
        let d = MetricSpec::circle().distance(&pt(0.1), &pt(0.9)).unwrap();
        assert!((d - 0.2).abs() < 1e-15);
        let exact_half = MetricSpec::circle().distance(&pt(0.0), &pt(0.5)).unwrap();
        assert_eq!(exact_half, 0.5);
    }

    #[test]
    fn power_metric_closed_form() {
        let m = MetricSpec::power(0.5).unwrap();
        let d = m.distance(&pt(0.25), &pt(0.5)).unwrap();
        assert_eq!(d, 0.5);
        assert!(MetricSpec::power(1.5).is_err());
        assert!(MetricSpec::power(0.0).is_err());
    }

    #[test]
    fn derived_over_doubling_from_zero_to_third() {
        let m = MetricSpec::derived(MetricSpec::euclidean(), MapSpec::doubling(), 60).unwrap();
        let x = ExactPoint::zero(200);
        let y = ExactPoint::from_ratio(1, 3, 200).unwrap();
        let d = m.distance(&x, &y).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-15, "{d}");
    }

    #[test]
    fn derived_over_rotation_equals_circle() {
        let rot = MapSpec::golden_rotation(256);
        let x = pt(0.05);
        let y = pt(0.61);
        let base = MetricSpec::circle().distance(&x, &y).unwrap();
        for n in [0, 1, 7, 60] {
            let m = MetricSpec::derived(MetricSpec::circle(), rot.clone(), n).unwrap();
            assert_eq!(m.distance(&x, &y).unwrap(), base);
        }
    }

    #[test]
    fn derived_zero_iff_equal() {
        let m = MetricSpec::derived(MetricSpec::euclidean(), MapSpec::doubling(), 30).unwrap();
        let x = pt(0.3);
        assert_eq!(m.distance(&x, &x).unwrap(), 0.0);
        let mut other = x.numerator();
        other += 1u8;
        let y = ExactPoint::from_numerator(&other, 256).unwrap();
        assert!(m.distance(&x, &y).unwrap() > 0.0);
    }

    #[test]
    fn derived_of_derived_is_rejected() {
        let d = MetricSpec::derived(MetricSpec::circle(), MapSpec::tent(), 3).unwrap();
        assert!(MetricSpec::derived(d, MapSpec::tent(), 3).is_err());
        assert!("derived(derived(circle; tent; N=2); tent; N=3)".parse::<MetricSpec>().is_err());
    }

    #[test]
    fn derived_needs_precision() {
        let m = MetricSpec::derived(MetricSpec::euclidean(), MapSpec::doubling(), 100).unwrap();
        let x = ExactPoint::from_f64(0.3, 128).unwrap();
        let err = m.distance(&x, &x).unwrap_err();
        assert!(matches!(err, Error::PrecisionExhausted { .. }));
    }

    #[test]
    fn text_forms_round_trip() {
        for text in [
            "euclidean",
            "circle",
            "power:0.5",
            "derived(circle; radic:3; N=60)",
            "derived(power:0.25; tent; N=5)",
        ] {
            let m: MetricSpec = text.parse().unwrap();
            assert_eq!(m.to_string(), text);
        }
        let rot: MetricSpec = "derived(circle; rotation:golden; N=60)".parse().unwrap();
        assert_eq!(rot.to_string().parse::<MetricSpec>().unwrap(), rot);
        assert!("manhattan".parse::<MetricSpec>().is_err());
        assert!("derived(circle; tent)".parse::<MetricSpec>().is_err());
    }
}
