//! Acceptance criteria. Prints one `criterion N: PASS|FAIL` line each and
//! exits nonzero if any fails.

use std::time::{Duration, Instant};

use rand::Rng;
use sensilab::classify::{ball_uniformity_check, dichotomy_classify, ClassifyConfig, Label};
use sensilab::metrics::{
    ball_measure, lipschitz_defect, mu_compatibility_scan, verify_metric_axioms, Compatibility, MetricSpec,
};
use sensilab::rng::{Sampler, Stream};
use sensilab::sensitivity::{
    equivalence_check, sensitivity_constant_search, trapped_set_measure, w_sensitivity_estimate, Budget,
    CenterPlan,
};
use sensilab::systems::{iterate, sample_point, ExactPoint, MapSpec};

fn report(n: u32, ok: bool, started: Instant, limit: Duration, detail: String) -> bool {
    let elapsed = started.elapsed();
    let pass = ok && elapsed <= limit;
    println!(
        "criterion {n:>2}: {} {detail} [{:.2}s, limit {}s]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn shipped_maps() -> Vec<MapSpec> {
    vec![
        MapSpec::doubling(),
        MapSpec::radic(3).unwrap(),
        MapSpec::radic(5).unwrap(),
        MapSpec::tent(),
        MapSpec::golden_rotation(256),
        MapSpec::sqrt_rotation(2, 256).unwrap(),
        MapSpec::identity(),
    ]
}

fn irrational_rotations() -> Vec<MapSpec> {
    let mut maps = vec![MapSpec::golden_rotation(256)];
    for n in [2, 3, 5, 6, 7, 8, 10, 11, 12] {
        maps.push(MapSpec::sqrt_rotation(n, 256).unwrap());
    }
    maps
}

fn criterion_01_derived_metric_axioms() -> bool {
    let t = Instant::now();
    let m = MetricSpec::derived(MetricSpec::euclidean(), MapSpec::doubling(), 50).unwrap();
    let r = verify_metric_axioms(&m, &Sampler::new(101), 1000).unwrap();
    report(
        1,
        r.violations.is_empty(),
        t,
        Duration::from_secs(10),
        format!("{} violations over {} triples, slack 2^-60", r.violations.len(), r.trials),
    )
}

fn criterion_02_horizon_shift_lipschitz() -> bool {
    let t = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    let mut names = Vec::new();
    for map in shipped_maps() {
        let m = MetricSpec::derived(MetricSpec::euclidean(), map.clone(), 50).unwrap();
        let r = lipschitz_defect(&m, &map, &Sampler::new(102), 10_000).unwrap();
        worst = worst.max(r.max_defect);
        names.push(map.to_string());
    }
    report(
        2,
        worst <= 0.0,
        t,
        Duration::from_secs(30),
        format!("max d^50(Tx,Ty) - d^51(x,y) = {worst:e} over 10^4 pairs for {} maps", names.len()),
    )
}

fn criterion_03_null_doubling_ball_at_zero() -> bool {
    let t = Instant::now();
    let m = MetricSpec::derived(MetricSpec::euclidean(), MapSpec::doubling(), 100).unwrap();
    let zero = ExactPoint::zero(m.required_precision());
    let est = ball_measure(&m, &zero, 0.5, &Sampler::new(103), 10_000).unwrap();
    report(
        3,
        est.value <= 3e-4,
        t,
        Duration::from_secs(60),
        format!("ball(0, 0.5) estimate {} (bound 3e-4), half-width {}", est.value, est.half_width),
    )
}

fn criterion_04_rotation_derived_equals_circle() -> bool {
    let t = Instant::now();
    let rot = MapSpec::golden_rotation(256);
    let derived = MetricSpec::derived(MetricSpec::circle(), rot, 60).unwrap();
    let circle = MetricSpec::circle();
    let sampler = Sampler::new(104);
    let bits = derived.required_precision();
    let mut worst = 0.0f64;
    for i in 0..10_000u64 {
        let mut rng = sampler.stream(Stream::Pairs, i);
        let x = sample_point(&mut rng, bits);
        let y = sample_point(&mut rng, bits);
        let gap = (derived.distance(&x, &y).unwrap() - circle.distance(&x, &y).unwrap()).abs();
        worst = worst.max(gap);
    }
    report(
        4,
        worst == 0.0,
        t,
        Duration::from_secs(30),
        format!("max |d^60 - circle| = {worst:e} over 10^4 pairs"),
    )
}

/// Nearby partner for `x`: the bits below a random depth are redrawn.
fn near_partner<R: Rng>(rng: &mut R, x: &ExactPoint) -> ExactPoint {
    let bits = x.precision_bits();
    let depth = rng.random_range(2..48u32);
    let keep = x.numerator() >> (bits - depth) << (bits - depth);
    let noise = sample_point(rng, bits).numerator() >> depth;
    ExactPoint::from_numerator(&(keep + noise), bits).unwrap()
}

fn criterion_05_ball_containment() -> bool {
    let t = Instant::now();
    let n = 20usize;
    let sampler = Sampler::new(105);
    let mut tested = 0usize;
    let mut counterexamples = 0usize;
    let maps = shipped_maps();
    for i in 0..10_000u64 {
        let map = &maps[i as usize % maps.len()];
        let mut rng = sampler.stream(Stream::Probe, i);
        let m = rng.random_range(0..=10usize);
        let r: f64 = 1.0 - rng.random::<f64>();
        let bits = map.required_precision(n + m);
        let x = sample_point(&mut rng, bits);
        let y = near_partner(&mut rng, &x);
        let wide = MetricSpec::derived(MetricSpec::euclidean(), map.clone(), n + m).unwrap();
        if wide.distance(&x, &y).unwrap() >= r {
            continue;
        }
        tested += 1;
        let (mut tx, mut ty) = (x, y);
        for _ in 0..m {
            tx = iterate(map, &tx).unwrap();
            ty = iterate(map, &ty).unwrap();
        }
        let narrow = MetricSpec::derived(MetricSpec::euclidean(), map.clone(), n).unwrap();
        if narrow.distance(&tx, &ty).unwrap() >= r {
            counterexamples += 1;
        }
    }
    report(
        5,
        counterexamples == 0 && tested > 1000,
        t,
        Duration::from_secs(60),
        format!("{counterexamples} counterexamples among {tested} in-ball samples of 10^4"),
    )
}

/// Fraction of pairs on the 2^12 dyadic grid separating by more than 0.4
/// under doubling within 20 steps, in exact integer arithmetic.
fn dyadic_grid_oracle() -> f64 {
    const SIZE: u64 = 1 << 12;
    let mut separated = 0u64;
    for i in 0..SIZE {
        for j in 0..SIZE {
            let hit = (0..=20u32).any(|n| {
                let a = (i << n.min(12)) % SIZE;
                let b = (j << n.min(12)) % SIZE;
                // |a - b| / 4096 > 0.4  <=>  5 |a - b| > 2 * 4096
                5 * a.abs_diff(b) > 2 * SIZE
            });
            separated += hit as u64;
        }
    }
    separated as f64 / (SIZE * SIZE) as f64
}

fn criterion_06_doubling_sensitivity() -> bool {
    let t = Instant::now();
    let oracle = dyadic_grid_oracle();
    let r = w_sensitivity_estimate(
        &MapSpec::doubling(),
        &MetricSpec::euclidean(),
        0.4,
        &CenterPlan::sampled(20),
        500,
        200,
        &Sampler::new(106),
    )
    .unwrap();
    let value = r.separation_fraction.value;
    let ok = value >= 0.999 && (value - oracle).abs() <= 0.002 && oracle == 0.999755859375;
    report(
        6,
        ok,
        t,
        Duration::from_secs(120),
        format!("separation fraction {value} (need >= 0.999), dyadic oracle {oracle}, gap {:e} (tol 0.002)", (value - oracle).abs()),
    )
}

fn criterion_07_rotation_not_sensitive() -> bool {
    let t = Instant::now();
    let rot = MapSpec::golden_rotation(256);
    let circle = MetricSpec::circle();
    let sampler = Sampler::new(107);
    let grid: Vec<f64> = (1..10).map(|i| f64::from(i) * 0.05).collect();
    let search =
        sensitivity_constant_search(&rot, &circle, &grid, 0.99, &CenterPlan::sampled(20), 500, 200, &sampler)
            .unwrap();
    let x = sample_point(&mut sampler.stream(Stream::Probe, 0), rot.required_precision(200));
    let trapped = trapped_set_measure(&rot, &circle, &x, 0.2, 200, &sampler, 10_000).unwrap();
    report(
        7,
        search.delta.is_none() && trapped.contains(0.4),
        t,
        Duration::from_secs(120),
        format!(
            "constant search {:?}; trapped measure at 0.2 = {} +/- {} (oracle 0.4)",
            search.delta, trapped.value, trapped.half_width
        ),
    )
}

fn criterion_08_pairwise_equivalence() -> bool {
    let t = Instant::now();
    let budget = Budget {
        centers: 20,
        ys_per_center: 500,
    };
    let sampler = Sampler::new(108);
    let doubling = equivalence_check(&MapSpec::doubling(), &MetricSpec::euclidean(), 0.4, budget, 200, &sampler).unwrap();
    let rotation =
        equivalence_check(&MapSpec::golden_rotation(256), &MetricSpec::circle(), 0.45, budget, 200, &sampler).unwrap();
    report(
        8,
        doubling.consistent && rotation.consistent,
        t,
        Duration::from_secs(120),
        format!(
            "doubling gap {:e} (tol {:e}); rotation gap {:e} (tol {:e}); budget 10^4",
            doubling.gap, doubling.tolerance, rotation.gap, rotation.tolerance
        ),
    )
}

fn criterion_09_ball_uniformity() -> bool {
    let t = Instant::now();
    let rot = MapSpec::golden_rotation(256);
    let sampler = Sampler::new(109);
    let base = ball_uniformity_check(&rot, &MetricSpec::circle(), 0.1, &CenterPlan::sampled(20), 10_000, &sampler)
        .unwrap();
    let derived_metric = MetricSpec::derived(MetricSpec::circle(), rot.clone(), 50).unwrap();
    let derived =
        ball_uniformity_check(&rot, &derived_metric, 0.1, &CenterPlan::sampled(20), 10_000, &sampler).unwrap();
    let near = |r: &sensilab::classify::UniformityReport| r.estimates.iter().all(|b| b.estimate.contains(0.2));
    report(
        9,
        base.within_tolerance && derived.within_tolerance && near(&base) && near(&derived),
        t,
        Duration::from_secs(60),
        format!(
            "circle spread {} (tol {}); derived spread {} (tol {}); 20 centers x 10^4 samples",
            base.max_spread, base.tolerance, derived.max_spread, derived.tolerance
        ),
    )
}

fn criterion_10_dichotomy() -> bool {
    let t = Instant::now();
    let config = ClassifyConfig::default();
    let sampler = Sampler::new(110);
    let sensitive = [MapSpec::doubling(), MapSpec::radic(3).unwrap(), MapSpec::radic(5).unwrap(), MapSpec::tent()];
    let rotations = irrational_rotations();

    let run = || -> Vec<String> {
        let mut out = Vec::new();
        for (map, metric) in sensitive
            .iter()
            .map(|m| (m, MetricSpec::euclidean()))
            .chain(rotations.iter().map(|m| (m, MetricSpec::circle())))
        {
            let v = dichotomy_classify(map, &metric, &config, &sampler).unwrap();
            out.push(serde_json::to_string(&v).unwrap());
        }
        out
    };
    let first = run();
    let second = run();

    let verdicts: Vec<sensilab::classify::Verdict> =
        first.iter().map(|s| serde_json::from_str(s).unwrap()).collect();
    let sensitive_ok = verdicts[..sensitive.len()].iter().all(|v| v.label == Label::Sensitive);
    let rotation_ok = verdicts[sensitive.len()..].iter().all(|v| v.label == Label::IsometryLike);
    let contradictions = verdicts.iter().filter(|v| v.contradiction).count();
    let labels: Vec<String> = verdicts
        .iter()
        .map(|v| format!("{}={:?}{}", v.config_echo.map, v.label, v.delta.map(|d| format!("({d})")).unwrap_or_default()))
        .collect();
    report(
        10,
        sensitive_ok && rotation_ok && contradictions == 0 && first == second,
        t,
        Duration::from_secs(600),
        format!(
            "{} sensitive / {} rotation verdicts, {contradictions} contradictions, rerun identical: {}; {}",
            sensitive.len(),
            rotations.len(),
            first == second,
            labels.join(" ")
        ),
    )
}

fn criterion_11_compatibility_scan() -> bool {
    let t = Instant::now();
    let radii = [0.01, 0.05, 0.1, 0.25, 0.5];
    let sampler = Sampler::new(111);
    let circle = mu_compatibility_scan(&MetricSpec::circle(), &radii, &sampler, 20, 10_000).unwrap();
    let euclid = mu_compatibility_scan(&MetricSpec::euclidean(), &radii, &sampler, 20, 10_000).unwrap();
    let derived = MetricSpec::derived(MetricSpec::euclidean(), MapSpec::doubling(), 100).unwrap();
    let flagged = mu_compatibility_scan(&derived, &radii, &sampler, 20, 10_000).unwrap();
    report(
        11,
        circle.verdict == Compatibility::EmpiricallyCompatible
            && euclid.verdict == Compatibility::EmpiricallyCompatible
            && flagged.verdict == Compatibility::NullBallsFound,
        t,
        Duration::from_secs(120),
        format!(
            "circle {:?}, euclidean {:?}, derived doubling {:?} with {} null-suspect balls",
            circle.verdict,
            euclid.verdict,
            flagged.verdict,
            flagged.flagged_balls.len()
        ),
    )
}

fn main() {
    let criteria: [(u32, fn() -> bool); 11] = [
        (1, criterion_01_derived_metric_axioms),
        (2, criterion_02_horizon_shift_lipschitz),
        (3, criterion_03_null_doubling_ball_at_zero),
        (4, criterion_04_rotation_derived_equals_circle),
        (5, criterion_05_ball_containment),
        (6, criterion_06_doubling_sensitivity),
        (7, criterion_07_rotation_not_sensitive),
        (8, criterion_08_pairwise_equivalence),
        (9, criterion_09_ball_uniformity),
        (10, criterion_10_dichotomy),
        (11, criterion_11_compatibility_scan),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string()) {
            continue;
        }
        let pass = std::panic::catch_unwind(run).unwrap_or_else(|_| {
            println!("criterion {n:>2}: FAIL panicked");
            false
        });
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
