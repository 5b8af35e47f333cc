use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{MetricSpec, TRIANGLE_SLACK};
use crate::error::{Error, Result};
use crate::rng::{par_map, Sampler, Stream};
use crate::systems::{iterate, sample_point, ExactPoint, MapSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    Symmetry,
    Identity,
    Triangle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomViolation {
    pub axiom: Axiom,
    /// The sampled points, as floats.
    pub witness: Vec<f64>,
    pub defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub metric: MetricSpec,
    pub trials: usize,
    pub violations: Vec<AxiomViolation>,
}

/// Largest sampled value of a defect, with the pair that attains it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub max_defect: f64,
    pub witness: [f64; 2],
    pub pairs: usize,
}

fn violation(axiom: Axiom, pts: &[&ExactPoint], defect: f64) -> AxiomViolation {
    AxiomViolation {
        axiom,
        witness: pts.iter().map(|p| p.to_f64()).collect(),
        defect,
    }
}

fn check_triple(metric: &MetricSpec, x: &ExactPoint, y: &ExactPoint, z: &ExactPoint) -> Result<Vec<AxiomViolation>> {
    let mut out = Vec::new();
    let pts = [x, y, z];

    let dxy = metric.distance(x, y)?;
    let dyx = metric.distance(y, x)?;
    if dxy != dyx {
        out.push(violation(Axiom::Symmetry, &pts[..2], (dxy - dyx).abs()));
    }
    let dxx = metric.distance(x, x)?;
    if dxx != 0.0 {
        out.push(violation(Axiom::Identity, &pts[..1], dxx));
    }
    if x != y && dxy <= 0.0 {
        out.push(violation(Axiom::Identity, &pts[..2], 0.0));
    }

    let exact = (
        metric.exact_distance(x, y)?,
        metric.exact_distance(y, z)?,
        metric.exact_distance(x, z)?,
    );
    if let (Some(xy), Some(yz), Some(xz)) = exact {
        // Exact comparison: d(a,c) <= d(a,b) + d(b,c) for each choice of middle point.
        for (lhs, a, b) in [(&xz, &xy, &yz), (&xy, &xz, &yz), (&yz, &xy, &xz)] {
            if lhs.cmp_sum(a, b) == Ordering::Less {
                out.push(violation(Axiom::Triangle, &pts, lhs.excess_over_sum(a, b)));
            }
        }
    } else {
        let dyz = metric.distance(y, z)?;
        let dxz = metric.distance(x, z)?;
        for (lhs, a, b) in [(dxz, dxy, dyz), (dxy, dxz, dyz), (dyz, dxy, dxz)] {
            let excess = lhs - (a + b);
            if excess > TRIANGLE_SLACK {
                out.push(violation(Axiom::Triangle, &pts, excess));
            }
        }
    }
    Ok(out)
}

/// Checks symmetry, identity of indiscernibles and the triangle inequality on
/// `trials` random triples. Exact metrics are compared exactly; the power
/// metric is compared in floating point with slack 2^-60.
pub fn verify_metric_axioms(metric: &MetricSpec, sampler: &Sampler, trials: usize) -> Result<AxiomReport> {
    if trials == 0 {
        return Err(Error::invalid("axiom check needs at least one trial"));
    }
    let bits = sampler.precision_for(metric.required_precision());
    let per_trial = par_map(trials, |i| {
        let mut rng = sampler.stream(Stream::Triples, i as u64);
        let x = sample_point(&mut rng, bits);
        let y = sample_point(&mut rng, bits);
        let z = sample_point(&mut rng, bits);
        check_triple(metric, &x, &y, &z)
    });
    let mut violations = Vec::new();
    for v in per_trial {
        violations.extend(v?);
    }
    Ok(AxiomReport {
        metric: metric.clone(),
        trials,
        violations,
    })
}

fn max_over_pairs<F>(bits: u32, sampler: &Sampler, pairs: usize, defect: F) -> Result<DefectReport>
where
    F: Fn(&ExactPoint, &ExactPoint) -> Result<f64> + Sync + Send,
{
    if pairs == 0 {
        return Err(Error::invalid("defect estimate needs at least one pair"));
    }
    let values = par_map(pairs, |i| {
        let mut rng = sampler.stream(Stream::Pairs, i as u64);
        let x = sample_point(&mut rng, bits);
        let y = sample_point(&mut rng, bits);
        defect(&x, &y).map(|d| (d, [x.to_f64(), y.to_f64()]))
    });
    let mut best: Option<(f64, [f64; 2])> = None;
    for v in values {
        let (d, w) = v?;
        // Strictly greater keeps the lowest-index witness on ties.
        if best.is_none_or(|(b, _)| d > b) {
            best = Some((d, w));
        }
    }
    let (max_defect, witness) = best.expect("at least one pair");
    Ok(DefectReport {
        max_defect,
        witness,
        pairs,
    })
}

/// Largest sampled `d(Tx, Ty) - d(x, y)`; nonpositive means 1-Lipschitz on the sample.
///
/// For a derived metric of horizon `N` the image pair is measured at horizon
/// `N` and the source pair at `N + 1`, where `d^N(Tx, Ty) <= d^{N+1}(x, y)` holds
/// by construction.
pub fn lipschitz_defect(metric: &MetricSpec, map: &MapSpec, sampler: &Sampler, pairs: usize) -> Result<DefectReport> {
    match metric {
        MetricSpec::Base(_) => {
            let bits = sampler.precision_for(map.required_precision(1));
            max_over_pairs(bits, sampler, pairs, |x, y| {
                let (tx, ty) = (iterate(map, x)?, iterate(map, y)?);
                Ok(metric.distance(&tx, &ty)? - metric.distance(x, y)?)
            })
        }
        MetricSpec::Derived(d) => {
            if d.map != *map {
                return Err(Error::MapMismatch {
                    metric_map: d.map.to_string(),
                    requested: map.to_string(),
                });
            }
            let source = metric.with_horizon(d.horizon + 1);
            let bits = sampler.precision_for(map.required_precision(d.horizon + 1));
            max_over_pairs(bits, sampler, pairs, |x, y| {
                let (tx, ty) = (iterate(map, x)?, iterate(map, y)?);
                Ok(metric.distance(&tx, &ty)? - source.distance(x, y)?)
            })
        }
    }
}

/// Largest sampled `|d(Tx, Ty) - d(x, y)|`, both sides at the metric's own horizon.
pub fn isometry_defect(metric: &MetricSpec, map: &MapSpec, sampler: &Sampler, pairs: usize) -> Result<DefectReport> {
    let horizon = match metric {
        MetricSpec::Base(_) => 0,
        MetricSpec::Derived(d) => d.horizon,
    };
    let bits = sampler.precision_for(map.required_precision(horizon + 1).max(metric.required_precision()));
    max_over_pairs(bits, sampler, pairs, |x, y| {
        let (tx, ty) = (iterate(map, x)?, iterate(map, y)?);
        Ok((metric.distance(&tx, &ty)? - metric.distance(x, y)?).abs())
    })
}
