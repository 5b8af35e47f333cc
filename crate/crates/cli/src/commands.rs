use std::path::PathBuf;

use anyhow::Result;
use serde::Serialize;
use sensilab::classify::{dichotomy_classify, ClassifyConfig, Evidence};
use sensilab::metrics::{
    isometry_defect, lipschitz_defect, mu_compatibility_scan, verify_metric_axioms, MeasureEstimate, MetricSpec,
};
use sensilab::rng::Sampler;
use sensilab::sensitivity::{
    equivalence_check, pairwise_sensitivity_estimate, trapped_set_measure, w_sensitivity_estimate, Budget,
    CenterPlan,
};
use sensilab::systems::{orbit as orbit_of, ExactPoint, MapSpec};

use crate::config::{load_config, ConfigError, FloatList, Resolver};
use crate::output::{Output, Row};
use crate::{ClassifyArgs, Common, MetricCheckArgs, OrbitArgs, PairwiseArgs, ScanArgs, SensitivityArgs};

struct Run {
    command: &'static str,
    resolver: Resolver,
    sampler: Sampler,
    workers: Option<usize>,
    report: PathBuf,
    csv: PathBuf,
}

impl Run {
    fn new(command: &'static str, common: &Common) -> Result<Run> {
        let mut resolver = Resolver::new(load_config(common.config.as_deref())?);
        let seed = resolver.seed(common.seed)?;
        let min_precision = resolver.get("min-precision", common.min_precision, 64u32)?;
        let report = resolver.get(
            "report",
            common.report.clone(),
            PathBuf::from(format!("sensilab-{command}.jsonl")),
        )?;
        let csv = resolver.get("csv", common.csv.clone(), PathBuf::from(format!("sensilab-{command}.csv")))?;
        if common.workers == Some(0) {
            return Err(ConfigError("--workers must be at least 1".into()).into());
        }
        Ok(Run {
            command,
            resolver,
            sampler: Sampler::new(seed).with_min_precision(min_precision),
            workers: common.workers,
            report,
            csv,
        })
    }

    fn seed(&self) -> u64 {
        self.sampler.seed()
    }

    fn bits(&self, required: u32) -> u32 {
        required.max(self.sampler.min_precision())
    }

    /// Runs `f` on a pool of the requested size, or on the global pool.
    fn compute<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.workers {
            None => Ok(f()),
            Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        }
    }

    fn output(&self) -> Output {
        Output::new(self.command, self.resolver.echo().clone())
    }

    fn finish(&self, out: Output, summary: &str) -> Result<()> {
        out.write(&self.report, &self.csv)?;
        println!("{summary}");
        println!("report: {}  csv: {}", self.report.display(), self.csv.display());
        Ok(())
    }
}

fn row(map: &str, metric: &str, seed: u64) -> Row {
    Row {
        map: map.to_string(),
        metric: metric.to_string(),
        seed,
        ..Row::default()
    }
}

fn estimate_row(mut r: Row, e: &MeasureEstimate) -> Row {
    r.fraction = Some(e.value);
    r.half_width = Some(e.half_width);
    r.samples = Some(e.samples);
    r
}

#[derive(Serialize)]
struct OrbitPoint {
    n: usize,
    value: f64,
    hex: String,
}

#[derive(Serialize)]
struct OrbitTable<'a> {
    map: &'a MapSpec,
    horizon: usize,
    precision_bits: u32,
    points: Vec<OrbitPoint>,
}

pub fn orbit(a: OrbitArgs) -> Result<()> {
    let mut run = Run::new("orbit", &a.common)?;
    let map: MapSpec = run.resolver.require("map", a.map)?;
    let x: String = run.resolver.require("x", a.x)?;
    let horizon = run.resolver.get("horizon", a.horizon, 20usize)?;
    let start = ExactPoint::parse(&x, run.bits(map.required_precision(horizon)))?;
    let orbit = orbit_of(&map, &start, horizon)?;

    let mut out = run.output();
    let points: Vec<OrbitPoint> = orbit
        .points
        .iter()
        .enumerate()
        .map(|(n, p)| OrbitPoint {
            n,
            value: p.to_f64(),
            hex: p.to_hex(),
        })
        .collect();
    let map_text = map.to_string();
    for p in &points {
        let mut r = row(&map_text, "", run.seed());
        r.n = Some(p.n);
        r.center = Some(p.value);
        out.rows.push(r);
    }
    out.record(
        "orbit",
        &OrbitTable {
            map: &map,
            horizon,
            precision_bits: start.precision_bits(),
            points,
        },
    )?;
    let last = orbit.points.last().map(ExactPoint::to_f64).unwrap_or_default();
    run.finish(out, &format!("orbit of {x} under {map}: {} points, last {last}", horizon + 1))
}

pub fn metric_check(a: MetricCheckArgs) -> Result<()> {
    let mut run = Run::new("metric-check", &a.common)?;
    let metric: MetricSpec = run.resolver.require("metric", a.metric)?;
    let default_map = match &metric {
        MetricSpec::Derived(d) => d.map.clone(),
        MetricSpec::Base(_) => MapSpec::identity(),
    };
    let map = run.resolver.get("map", a.map, default_map)?;
    let trials = run.resolver.get("trials", a.trials, 1000usize)?;
    let pairs = run.resolver.get("pairs", a.pairs, 1000usize)?;

    let (axioms, lipschitz, isometry) = run.compute(|| -> sensilab::Result<_> {
        Ok((
            verify_metric_axioms(&metric, &run.sampler, trials)?,
            lipschitz_defect(&metric, &map, &run.sampler, pairs)?,
            isometry_defect(&metric, &map, &run.sampler, pairs)?,
        ))
    })??;

    let mut out = run.output();
    out.record("axioms", &axioms)?;
    out.record("lipschitz_defect", &lipschitz)?;
    out.record("isometry_defect", &isometry)?;
    let mut r = row(&map.to_string(), &metric.to_string(), run.seed());
    r.fraction = Some(axioms.violations.len() as f64 / trials as f64);
    r.samples = Some(trials);
    out.rows.push(r);
    run.finish(
        out,
        &format!(
            "{metric}: {} axiom violations in {trials} triples; Lipschitz defect {:e}; isometry defect {:e} under {map}",
            axioms.violations.len(),
            lipschitz.max_defect,
            isometry.max_defect
        ),
    )
}

pub fn scan(a: ScanArgs) -> Result<()> {
    let mut run = Run::new("scan", &a.common)?;
    let metric: MetricSpec = run.resolver.require("metric", a.metric)?;
    let radii = run
        .resolver
        .get("radii", a.radii, FloatList(vec![0.01, 0.05, 0.1, 0.25, 0.5]))?;
    let centers = run.resolver.get("centers", a.centers, 20usize)?;
    let samples = run.resolver.get("samples", a.samples, 10_000usize)?;

    let report = run.compute(|| mu_compatibility_scan(&metric, &radii.0, &run.sampler, centers, samples))??;

    let mut out = run.output();
    let map_text = match &metric {
        MetricSpec::Derived(d) => d.map.to_string(),
        MetricSpec::Base(_) => String::new(),
    };
    for b in &report.balls {
        let mut r = row(&map_text, &metric.to_string(), run.seed());
        r.delta = Some(b.radius);
        r.center = Some(b.center);
        out.rows.push(estimate_row(r, &b.estimate));
    }
    out.record("scan", &report)?;
    run.finish(
        out,
        &format!(
            "{metric}: {:?} ({} of {} balls null-suspect)",
            report.verdict,
            report.flagged_balls.len(),
            report.balls.len()
        ),
    )
}

#[derive(Serialize)]
struct TrappedRecord<'a> {
    center: f64,
    delta: f64,
    horizon: usize,
    ball_metric: &'a MetricSpec,
    estimate: MeasureEstimate,
}

pub fn sensitivity(a: SensitivityArgs) -> Result<()> {
    let mut run = Run::new("sensitivity", &a.common)?;
    let map: MapSpec = run.resolver.require("map", a.map)?;
    let metric = run.resolver.get("metric", a.metric, MetricSpec::euclidean())?;
    let delta = run.resolver.get("delta", a.delta, 0.4)?;
    let horizon = run.resolver.get("horizon", a.horizon, 200usize)?;
    let centers = run.resolver.get("centers", a.centers, 20usize)?;
    let ys = run.resolver.get("ys-per-center", a.ys_per_center, 500usize)?;
    let adversarial = run.resolver.get("adversarial", a.adversarial, true)?;
    let x: String = run.resolver.get("x", a.x, "0".to_string())?;
    let samples = run.resolver.get("samples", a.samples, 10_000usize)?;
    let center = ExactPoint::parse(&x, run.bits(map.required_precision(horizon)))?;
    let plan = CenterPlan::Sampled {
        count: centers,
        include_adversarial: adversarial,
    };

    let (report, trapped) = run.compute(|| -> sensilab::Result<_> {
        Ok((
            w_sensitivity_estimate(&map, &metric, delta, &plan, ys, horizon, &run.sampler)?,
            trapped_set_measure(&map, &metric, &center, delta, horizon, &run.sampler, samples)?,
        ))
    })??;
    let ball_metric = MetricSpec::derived(metric.clone(), map.clone(), horizon)?;

    let mut out = run.output();
    let (map_text, metric_text) = (map.to_string(), metric.to_string());
    let base_row = || {
        let mut r = row(&map_text, &metric_text, run.seed());
        r.n = Some(horizon);
        r.delta = Some(delta);
        r
    };
    for c in &report.per_center_fractions {
        let mut r = base_row();
        r.center = Some(c.center);
        r.fraction = Some(c.fraction);
        r.half_width = Some(c.half_width);
        r.samples = Some(c.samples);
        out.rows.push(r);
    }
    out.rows.push(estimate_row(base_row(), &report.separation_fraction));
    let mut r = estimate_row(base_row(), &trapped);
    r.metric = ball_metric.to_string();
    r.center = Some(center.to_f64());
    out.rows.push(r);

    out.record("w_sensitivity", &report)?;
    out.record(
        "trapped_set",
        &TrappedRecord {
            center: center.to_f64(),
            delta,
            horizon,
            ball_metric: &ball_metric,
            estimate: trapped,
        },
    )?;
    let s = report.separation_fraction;
    run.finish(
        out,
        &format!(
            "{map} / {metric} at delta {delta}, N={horizon}: separation fraction {} +/- {}; trapped measure at {x}: {} +/- {}",
            s.value, s.half_width, trapped.value, trapped.half_width
        ),
    )
}

pub fn pairwise(a: PairwiseArgs) -> Result<()> {
    let mut run = Run::new("pairwise", &a.common)?;
    let map: MapSpec = run.resolver.require("map", a.map)?;
    let metric = run.resolver.get("metric", a.metric, MetricSpec::euclidean())?;
    let delta = run.resolver.get("delta", a.delta, 0.4)?;
    let horizon = run.resolver.get("horizon", a.horizon, 200usize)?;
    let pairs = run.resolver.get("pairs", a.pairs, 10_000usize)?;
    let budget = Budget {
        centers: run.resolver.get("centers", a.centers, 20usize)?,
        ys_per_center: run.resolver.get("ys-per-center", a.ys_per_center, 500usize)?,
    };

    let (report, equivalence) = run.compute(|| -> sensilab::Result<_> {
        Ok((
            pairwise_sensitivity_estimate(&map, &metric, delta, pairs, horizon, &run.sampler)?,
            equivalence_check(&map, &metric, delta, budget, horizon, &run.sampler)?,
        ))
    })??;

    let mut out = run.output();
    for e in [&report.separation_fraction, &equivalence.w_mean] {
        let mut r = row(&map.to_string(), &metric.to_string(), run.seed());
        r.n = Some(horizon);
        r.delta = Some(delta);
        out.rows.push(estimate_row(r, e));
    }
    out.record("pairwise", &report)?;
    out.record("equivalence", &equivalence)?;
    let s = report.separation_fraction;
    run.finish(
        out,
        &format!(
            "{map} / {metric} at delta {delta}, N={horizon}: pairwise fraction {} +/- {}; per-center gap {:e} (tolerance {:e}, {})",
            s.value,
            s.half_width,
            equivalence.gap,
            equivalence.tolerance,
            if equivalence.consistent { "consistent" } else { "inconsistent" }
        ),
    )
}

pub fn classify(a: ClassifyArgs) -> Result<()> {
    let mut run = Run::new("classify", &a.common)?;
    let d = ClassifyConfig::default();
    let map: MapSpec = run.resolver.require("map", a.map)?;
    let metric = run.resolver.get("metric", a.metric, MetricSpec::euclidean())?;
    let r = &mut run.resolver;
    let config = ClassifyConfig {
        delta_grid: r.get("delta-grid", a.delta_grid, FloatList(d.delta_grid))?.0,
        horizon: r.get("horizon", a.horizon, d.horizon)?,
        centers: r.get("centers", a.centers, d.centers)?,
        ys_per_center: r.get("ys-per-center", a.ys_per_center, d.ys_per_center)?,
        threshold: r.get("threshold", a.threshold, d.threshold)?,
        isometry_tolerance: r.get("isometry-tolerance", a.isometry_tolerance, d.isometry_tolerance)?,
        isometry_pairs: r.get("isometry-pairs", a.isometry_pairs, d.isometry_pairs)?,
        uniformity_radius: r.get("uniformity-radius", a.uniformity_radius, d.uniformity_radius)?,
        uniformity_centers: r.get("uniformity-centers", a.uniformity_centers, d.uniformity_centers)?,
        uniformity_samples: r.get("uniformity-samples", a.uniformity_samples, d.uniformity_samples)?,
    };

    let verdict = run.compute(|| dichotomy_classify(&map, &metric, &config, &run.sampler))??;

    let mut out = run.output();
    let (map_text, metric_text) = (map.to_string(), metric.to_string());
    for e in &verdict.evidence {
        match e {
            Evidence::ConstantSearch(s) => {
                for g in &s.grid {
                    let mut r = row(&map_text, &metric_text, run.seed());
                    r.n = Some(s.horizon);
                    r.delta = Some(g.delta);
                    out.rows.push(estimate_row(r, &g.fraction));
                }
            }
            Evidence::Sensitivity(s) => {
                for c in &s.per_center_fractions {
                    let mut r = row(&map_text, &metric_text, run.seed());
                    r.n = Some(s.horizon);
                    r.delta = Some(s.delta);
                    r.center = Some(c.center);
                    r.fraction = Some(c.fraction);
                    r.half_width = Some(c.half_width);
                    r.samples = Some(c.samples);
                    out.rows.push(r);
                }
            }
            Evidence::IsometryDefect(_) | Evidence::BallUniformity(_) => {}
        }
    }
    out.record("verdict", &verdict)?;
    let mut summary = format!("{map} / {metric}: {:?}", verdict.label);
    if let Some(delta) = verdict.delta {
        summary.push_str(&format!(" delta={delta}"));
    }
    if let Some(defect) = verdict.isometry_defect {
        summary.push_str(&format!(" isometry_defect={defect:e}"));
    }
    if !verdict.failing.is_empty() {
        summary.push_str(&format!(" failing=[{}]", verdict.failing.join(", ")));
    }
    for w in &verdict.warnings {
        summary.push_str(&format!("\nwarning: {w}"));
    }
    run.finish(out, &summary)
}
