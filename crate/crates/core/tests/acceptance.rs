//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! exits nonzero if any of them fails.

use std::process::ExitCode;
use std::time::Instant;

use flowlab::expansiveness::{
    circle_samples, expansiveness_scan, nonsingular_equivalence_probe, orbit_samples, replay_witness, ScanConfig,
    ScanMode, Verdict,
};
use flowlab::field::estimate_lipschitz;
use flowlab::flowbox::{verify_box_bounds, FlowboxChart};
use flowlab::hyperbolicity::{
    check_domination, estimate_normal_splitting, evaluate_cocycle, transport_direction, CocycleSpec, SplittingOptions,
};
use flowlab::poincare::{SectionOptions, SectionalPoincare};
use flowlab::reparam::{
    bottleneck_path, drift_trials, estimate_speed_ratio_constant, lattice_costs, return_time_trials, DistanceScale,
    DriftParams, Lattice,
};
use flowlab::sequence::{random_sequence, random_system, solve_fixed_point, sup_norm, RandomSystemSpec};
use flowlab::{Domain, OrbitSegment, VectorFieldSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

struct Outcome {
    pass: bool,
    detail: String,
    report: Value,
}

type Criterion = fn() -> Outcome;

fn lorenz() -> VectorFieldSpec {
    VectorFieldSpec::lorenz_standard()
}

fn lorenz_region() -> Domain {
    Domain::new(vec![-20.0, -25.0, 5.0], vec![20.0, 25.0, 45.0]).unwrap()
}

fn saddle3() -> VectorFieldSpec {
    VectorFieldSpec::diagonal(&[1.0, -1.0, -2.0], 10.0)
}

fn suspension() -> VectorFieldSpec {
    VectorFieldSpec::saddle_suspension(1.0, 1.0, 1.0, Domain::cube(3, 50.0)).unwrap()
}

/// Builtin fields with the regions the randomized criteria sample from.
fn builtin_fields() -> Vec<(VectorFieldSpec, Domain)> {
    vec![
        (saddle3(), Domain::cube(3, 2.0)),
        (VectorFieldSpec::rotation(3.0), Domain::cube(2, 2.0)),
        (lorenz(), lorenz_region()),
        (suspension(), Domain::cube(3, 2.0)),
    ]
}

fn lipschitz(field: &VectorFieldSpec, region: &Domain) -> f64 {
    estimate_lipschitz(field, region, 4096, 11).unwrap()
}

fn random_regular_point(rng: &mut ChaCha8Rng, field: &VectorFieldSpec, region: &Domain, min_speed: f64) -> DVector<f64> {
    loop {
        let x = region.sample(rng);
        if field.speed(&x) >= min_speed {
            return x;
        }
    }
}

fn flowbox_bounds() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut reports = Vec::new();
    let mut worst = (0.0f64, f64::INFINITY, 0.0f64);
    let mut pass = true;
    let mut nodes = Vec::new();
    for (field, grid) in [(saddle3(), 5), (VectorFieldSpec::rotation(3.0), 12)] {
        let region = Domain::cube(field.dim(), 2.0);
        let l = lipschitz(&field, &field.domain);
        for _ in 0..50 {
            let x = random_regular_point(&mut rng, &field, &region, 0.1);
            let chart = FlowboxChart::new(&field, &x, l, 1e-12).unwrap();
            let rep = verify_box_bounds(&field, &chart, grid).unwrap();
            if nodes.len() < reports.len() / 50 + 1 {
                nodes.push(rep.nodes);
            }
            worst = (worst.0.max(rep.max_dev), worst.1.min(rep.min_mininorm), worst.2.max(rep.max_norm));
            pass &= rep.passed() && rep.no_singularity && rep.nodes >= 125;
            reports.push(serde_json::to_value(&rep).unwrap());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= worst.0 <= 0.5 + 1e-3 && worst.1 >= 0.5 - 1e-3 && worst.2 <= 2.0 + 1e-3 && elapsed < 30.0;
    Outcome {
        pass,
        detail: format!(
            "max |DF - id| = {:.4}, min m(DF) = {:.4}, max |DF| = {:.4}, nodes per chart {:?} (saddle, rotation), {elapsed:.1} s",
            worst.0, worst.1, worst.2, nodes
        ),
        report: Value::Array(reports),
    }
}

fn return_time() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut reports = Vec::new();
    for (field, region) in builtin_fields() {
        let l = lipschitz(&field, &region);
        let rep = return_time_trials(&field, &region, l, 40_000, 1e-10, 2).unwrap();
        pass &= rep.violations == 0 && rep.hypothesis_met >= 10_000;
        parts.push(format!("{} {}/{} max |t|/3delta = {:.3}", field.name, rep.violations, rep.hypothesis_met, rep.worst_ratio));
        reports.push(serde_json::to_value(&rep).unwrap());
    }
    Outcome {
        pass,
        detail: format!("violations/met: {}", parts.join("; ")),
        report: Value::Array(reports),
    }
}

fn drift() -> Outcome {
    let mut pass = true;
    let mut total = 0;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let mut reports = Vec::new();
    for (field, region) in builtin_fields() {
        let l = lipschitz(&field, &region);
        let c = estimate_speed_ratio_constant(&field, &region, l, 4096, 3).unwrap();
        let params = DriftParams {
            lipschitz: l,
            c,
            tol: 1e-11,
            samples: 200,
        };
        let r0 = flowlab::flowbox::r0_for(l);
        for eps in [0.1, 0.3] {
            for horizon in [0.5 * r0, r0, 5.0 * r0] {
                match drift_trials(&field, &region, &params, eps, horizon, 100, 40, 4) {
                    Ok(rep) => {
                        total += rep.trials.len();
                        violations += rep.violations;
                        for t in &rep.trials {
                            worst = worst.max(t.drift.abs() / (eps * horizon));
                        }
                        reports.push(serde_json::to_value(&rep).unwrap());
                    }
                    Err(e) => {
                        pass = false;
                        reports.push(json!({ "field": field.name, "error": e.to_string() }));
                    }
                }
            }
        }
    }
    pass &= violations == 0 && total == 4 * 6 * 100;
    Outcome {
        pass,
        detail: format!("{violations} violations in {total} pairs, max |drift|/(eps T) = {worst:.3e}"),
        report: Value::Array(reports),
    }
}

fn relative(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn sectional_derivative() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_linear: f64 = 0.0;
    let mut rows = Vec::new();
    for diag in [vec![-1.0, 0.5, 2.0], vec![1.0, -1.0], vec![-3.0, -1.0, 2.0]] {
        let field = VectorFieldSpec::diagonal(&diag, 100.0);
        let region = Domain::cube(field.dim(), 2.0);
        let l = lipschitz(&field, &field.domain);
        for _ in 0..10 {
            let x = random_regular_point(&mut rng, &field, &region, 0.2);
            let t: f64 = rng.gen_range(0.1..1.0);
            let sec = SectionalPoincare::new(&field, &x, t, SectionOptions::new(l, 1e-12)).unwrap();
            let (_, d) = sec.apply_with_derivative(&DVector::zeros(field.dim())).unwrap();
            let phi = DMatrix::from_diagonal(&DVector::from_iterator(diag.len(), diag.iter().map(|a| (a * t).exp())));
            let exact = sec.target().matrix().transpose() * phi * sec.source.matrix();
            let err = relative(&d, &exact);
            worst_linear = worst_linear.max(err);
            rows.push(json!({ "field": "linear", "t": t, "error": err }));
        }
    }
    let field = lorenz();
    let l = lipschitz(&field, &lorenz_region());
    let samples = orbit_samples(&field, &DVector::from_vec(vec![1.0, 1.0, 20.0]), 10.0, 10, 0.7, 1e-9).unwrap();
    let mut worst_lorenz: f64 = 0.0;
    for (i, x) in samples.iter().enumerate() {
        let t = if i % 2 == 0 { 0.1 } else { 0.5 };
        let sec = SectionalPoincare::new(&field, x, t, SectionOptions::new(l, 1e-9)).unwrap();
        let (_, d) = sec.apply_with_derivative(&DVector::zeros(3)).unwrap();
        let err = relative(&d, &sec.psi().unwrap().matrix);
        worst_lorenz = worst_lorenz.max(err);
        rows.push(json!({ "field": "lorenz", "t": t, "error": err }));
    }
    Outcome {
        pass: worst_linear <= 1e-6 && worst_lorenz <= 1e-3,
        detail: format!("linear max rel err {worst_linear:.2e} (<= 1e-6), lorenz {worst_lorenz:.2e} (<= 1e-3)"),
        report: Value::Array(rows),
    }
}

fn cocycle_identity() -> Outcome {
    let saddle = VectorFieldSpec::diagonal(&[1.0, -1.0], 100.0);
    let unit_box = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let sigma = (8.0f64 / 3.0 * 27.0).sqrt();
    let around = |s: f64| Domain::new(vec![s * sigma - 6.0, s * sigma - 6.0, 21.0], vec![s * sigma + 6.0, s * sigma + 6.0, 33.0]).unwrap();
    let attractor = orbit_samples(&lorenz(), &DVector::from_vec(vec![1.0, 1.0, 20.0]), 10.0, 1000, 0.05, 1e-10).unwrap();
    let cases: Vec<(&str, VectorFieldSpec, CocycleSpec, Domain)> = vec![
        ("trivial", saddle.clone(), CocycleSpec::Trivial, Domain::cube(2, 2.0)),
        ("flow-speed", saddle.clone(), CocycleSpec::FlowSpeed, Domain::cube(2, 2.0)),
        (
            "pragmatical",
            saddle.clone(),
            CocycleSpec::Pragmatical { region: unit_box },
            Domain::cube(2, 2.0),
        ),
        (
            "product",
            lorenz(),
            CocycleSpec::Product {
                regions: vec![around(1.0), around(-1.0)],
            },
            Domain::new(vec![-12.0, -12.0, 20.0], vec![12.0, 12.0, 34.0]).unwrap(),
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    let mut rows = Vec::new();
    for (name, field, spec, region) in cases {
        spec.validate(&field).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ((lo, hi), tol) = if name == "product" { ((-0.15, 0.6), 1e-11) } else { ((-1.5, 1.5), 1e-12) };
        let mut worst: f64 = 0.0;
        let mut nontrivial = 0;
        let mut errors = 0;
        for k in 0..1000 {
            let x = if name == "product" { attractor[k].clone() } else { random_regular_point(&mut rng, &field, &region, 0.05) };
            let e = DVector::from_fn(field.dim(), |_, _| rng.gen_range(-1.0..1.0));
            let s: f64 = rng.gen_range(lo..hi);
            let t: f64 = rng.gen_range(lo..hi);
            let triple = (|| -> flowlab::Result<(f64, f64)> {
                let whole = evaluate_cocycle(&field, &spec, &x, &e, s + t, tol)?;
                let first = evaluate_cocycle(&field, &spec, &x, &e, s, tol)?;
                let (y, e2) = transport_direction(&field, &x, &e, s, tol)?;
                let second = evaluate_cocycle(&field, &spec, &y, &e2, t, tol)?;
                Ok((whole, first * second))
            })();
            match triple {
                Ok((whole, split)) => {
                    if (whole - 1.0).abs() > 1e-9 {
                        nontrivial += 1;
                    }
                    worst = worst.max((whole - split).abs() / whole.abs());
                }
                Err(e) => {
                    if errors == 0 {
                        eprintln!("{name}: {e}");
                    }
                    errors += 1
                }
            }
        }
        pass &= worst <= 1e-6 && errors == 0;
        parts.push(format!("{name} {worst:.1e} ({nontrivial} nontrivial, {errors} errors)"));
        rows.push(json!({ "spec": name, "worst": worst, "nontrivial": nontrivial, "errors": errors }));
    }
    Outcome {
        pass,
        detail: format!("max rel defect over 1000 triples: {}", parts.join(", ")),
        report: Value::Array(rows),
    }
}

fn area_expansion() -> Outcome {
    let field = VectorFieldSpec::diagonal(&[-3.0, -1.0, 2.0], 1e8);
    let x = DVector::from_vec(vec![0.0, 0.0, 1e-3]);
    let orbit = OrbitSegment::uniform(&field, &x, 0.5, 3, 1e-12, true).unwrap();
    let splitting = estimate_normal_splitting(&field, &orbit, &SplittingOptions::new(1, 1e-12)).unwrap();
    let grid = [0.5, 1.0, 2.0];
    let rep = check_domination(&field, &splitting, &CocycleSpec::Trivial, &CocycleSpec::FlowSpeed, 1.05, 0.5, &grid, 1e-12)
        .unwrap();
    let mut worst: f64 = 0.0;
    for node in &rep.nodes {
        for e in &node.entries {
            worst = worst.max((e.expansion / e.t.exp() - 1.0).abs());
        }
    }
    Outcome {
        pass: worst <= 1e-8,
        detail: format!("max |h^u m(psi|U) / e^T - 1| = {worst:.2e} over {} nodes", rep.nodes.len()),
        report: serde_json::to_value(&rep).unwrap(),
    }
}

fn fixed_point() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pass = true;
    let mut worst_factor: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    let mut worst_spread: f64 = 0.0;
    let mut runs = 0;
    let mut rows = Vec::new();
    for sys_index in 0..100u64 {
        let dim = rng.gen_range(2..=4);
        let spec_base = RandomSystemSpec {
            half_range: 0,
            dim,
            dim_s: rng.gen_range(1..dim),
            eta: rng.gen_range(0.2..0.6),
            kappa: rng.gen_range(0.3..0.9),
        };
        for m in [10, 50] {
            let spec = RandomSystemSpec { half_range: m, ..spec_base };
            let system = random_system(&spec, 1000 + sys_index).unwrap();
            let kappa = system.kappa();
            let mut solutions = Vec::new();
            for k in 0..10 {
                let init = random_sequence(&system, rng.gen_range(0.1..2.0), 100 * sys_index + k);
                let rep = solve_fixed_point(&system, &init, 5000, 1e-13).unwrap();
                runs += 1;
                let ratio = rep.max_factor / kappa;
                worst_factor = worst_factor.max(ratio);
                worst_norm = worst_norm.max(rep.final_norm);
                pass &= rep.converged && rep.final_norm <= 1e-10 && rep.max_factor <= kappa * (1.0 + 1e-6);
                solutions.push(rep.solution);
            }
            for a in &solutions {
                for b in &solutions {
                    let diff: Vec<DVector<f64>> = a.iter().zip(b).map(|(u, v)| u - v).collect();
                    worst_spread = worst_spread.max(sup_norm(&diff));
                }
            }
            rows.push(json!({ "system": sys_index, "m": m, "kappa": kappa }));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= worst_spread <= 1e-10 && elapsed < 60.0;
    Outcome {
        pass,
        detail: format!(
            "{runs} runs, max |v| = {worst_norm:.1e}, max factor/kappa = {worst_factor:.4}, start spread {worst_spread:.1e}, {elapsed:.1} s"
        ),
        report: Value::Array(rows),
    }
}

/// Exhaustive minimax over monotone lattice paths.
fn enumerate_paths(cost: &[Vec<f64>], i: usize, j: usize, running: f64, best: &mut f64) {
    let running = running.max(cost[i][j]);
    if running >= *best {
        return;
    }
    let (m, n) = (cost.len(), cost[0].len());
    if i == m - 1 && j == n - 1 {
        *best = running;
        return;
    }
    if i + 1 < m {
        enumerate_paths(cost, i + 1, j, running, best);
    }
    if j + 1 < n {
        enumerate_paths(cost, i, j + 1, running, best);
    }
    if i + 1 < m && j + 1 < n {
        enumerate_paths(cost, i + 1, j + 1, running, best);
    }
}

fn dp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let fields = [VectorFieldSpec::rotation(10.0), VectorFieldSpec::diagonal(&[1.0, -1.0], 100.0)];
    let mut worst: f64 = 0.0;
    let mut lattices = 0;
    for instance in 0..50 {
        let field = &fields[instance % 2];
        let region = Domain::cube(2, 1.5);
        let x = random_regular_point(&mut rng, field, &region, 0.1);
        let y = random_regular_point(&mut rng, field, &region, 0.1);
        let scale = if instance % 4 < 2 { DistanceScale::Rescaled } else { DistanceScale::Unscaled };
        for rows in 2..=8 {
            for cols in 2..=8 {
                let lattice = Lattice {
                    t_range: (0.0, 2.0),
                    s_range: (-0.3, 2.2),
                    rows,
                    cols,
                };
                let cost = lattice_costs(field, &x, &y, &lattice, 1e-10, scale).unwrap();
                let (dp, _) = bottleneck_path(&cost).unwrap();
                let mut brute = f64::INFINITY;
                enumerate_paths(&cost, 0, 0, f64::NEG_INFINITY, &mut brute);
                worst = worst.max((dp - brute).abs());
                lattices += 1;
            }
        }
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("{lattices} lattices, max |DP - enumeration| = {worst:.1e}"),
        report: json!({ "lattices": lattices, "worst": worst }),
    }
}

fn rotation_scan_config(epsilons: Vec<f64>) -> ScanConfig {
    ScanConfig {
        samples: circle_samples(1.0, 8),
        horizon: 4.0 * std::f64::consts::PI,
        two_sided: false,
        epsilons,
        deltas: vec![0.2],
        delta_ratios: vec![1.0 / 3.0],
        lattice: 40,
        grid: 64,
        budget: 32,
        seed: 9,
        tol: 1e-10,
        lipschitz: 1.05,
    }
}

fn expansiveness() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut reports = Vec::new();

    let rotation = VectorFieldSpec::rotation(3.0);
    let epsilons = vec![0.05, 0.02, 0.01, 0.005, 0.001];
    let config = rotation_scan_config(epsilons.clone());
    let mut replayed = 0;
    let mut consistent = true;
    for mode in ScanMode::ALL {
        let rep = expansiveness_scan(&rotation, &config, mode).unwrap();
        for &eps in &epsilons {
            pass &= rep.entries.iter().any(|e| e.epsilon == eps && e.verdict == Verdict::Violation);
        }
        for w in rep.violations() {
            let text = serde_json::to_string(w).unwrap();
            let back = serde_json::from_str(&text).unwrap();
            pass &= replay_witness(&back).unwrap().reproduced;
            replayed += 1;
            if mode == ScanMode::Komuro {
                let as_bw = flowlab::expansiveness::Witness {
                    mode: ScanMode::BowenWalters,
                    ..w.clone()
                };
                consistent &= replay_witness(&as_bw).unwrap().reproduced;
            }
        }
        reports.push(serde_json::to_value(&rep).unwrap());
    }
    pass &= consistent;
    parts.push(format!("rotation: violations at every eps <= 0.05, {replayed} witnesses replayed"));

    let field = lorenz();
    let l = lipschitz(&field, &lorenz_region());
    let samples = orbit_samples(&field, &DVector::from_vec(vec![1.0, 1.0, 20.0]), 20.0, 50, 1.0, 1e-10).unwrap();
    let config = ScanConfig {
        samples,
        horizon: 20.0,
        two_sided: false,
        epsilons: vec![0.01],
        deltas: vec![],
        delta_ratios: vec![1.0 / 3.0],
        lattice: 64,
        grid: 400,
        budget: 200,
        seed: 10,
        tol: 1e-10,
        lipschitz: l,
    };
    let rep = expansiveness_scan(&field, &config, ScanMode::Rescaled).unwrap();
    let entry = &rep.entries[0];
    pass &= entry.verdict == Verdict::NoViolationFound;
    parts.push(format!(
        "lorenz: {:?} after {} candidates ({} shadowing)",
        entry.verdict, entry.candidates, entry.shadowing_pairs
    ));
    reports.push(serde_json::to_value(&rep).unwrap());

    let unit = VectorFieldSpec::rotation(3.0);
    let mut config = rotation_scan_config(vec![0.02, 0.01]);
    config.deltas = vec![0.005, 0.01, 0.05];
    config.delta_ratios = vec![];
    let probe = nonsingular_equivalence_probe(&unit, &config).unwrap();
    let same = probe.rows.iter().all(|r| r.thresholds[0].delta == r.thresholds[1].delta);
    pass &= probe.consistent() && same && (probe.speed_factor - 1.0).abs() < 1e-9;
    reports.push(serde_json::to_value(&probe).unwrap());

    let field = suspension();
    let samples: Vec<DVector<f64>> = (0..6)
        .map(|k| {
            let a = 0.1 * (k as f64 / 5.0 - 0.5);
            DVector::from_vec(vec![a, 0.08 - a.abs(), 0.0])
        })
        .collect();
    let config = ScanConfig {
        samples,
        horizon: 2.0,
        two_sided: true,
        epsilons: vec![0.05],
        deltas: vec![0.01, 0.02, 0.05],
        delta_ratios: vec![],
        lattice: 40,
        grid: 64,
        budget: 24,
        seed: 12,
        tol: 1e-10,
        lipschitz: lipschitz(&field, &Domain::cube(3, 2.0)),
    };
    let probe2 = nonsingular_equivalence_probe(&field, &config).unwrap();
    pass &= probe2.consistent();
    parts.push(format!(
        "probe: rotation factor {:.3}, suspension factor {:.3}, consistent {}",
        probe.speed_factor,
        probe2.speed_factor,
        probe.consistent() && probe2.consistent()
    ));
    reports.push(serde_json::to_value(&probe2).unwrap());
    Outcome {
        pass,
        detail: parts.join("; "),
        report: Value::Array(reports),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 9] = [
        ("flowbox derivative bounds", flowbox_bounds),
        ("return time |t| <= 3 delta", return_time),
        ("drift |theta(T) - theta(0) - T| <= eps T", drift),
        ("sectional derivative equals psi_T", sectional_derivative),
        ("cocycle identity", cocycle_identity),
        ("area expansion to rescaled normal expansion", area_expansion),
        ("fixed-point solver", fixed_point),
        ("bottleneck DP equals enumeration", dp_oracle),
        ("expansiveness scans", expansiveness),
    ];
    let filter: Option<usize> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    let mut failed = 0;
    let mut bytes = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        if filter.is_some_and(|f| f != i + 1) {
            bytes.push(None);
            continue;
        }
        let start = Instant::now();
        let out = run();
        let status = if out.pass { "PASS" } else { "FAIL" };
        failed += !out.pass as usize;
        println!(
            "criterion {:>2} {status}  {name}: {} [{:.1} s]",
            i + 1,
            out.detail,
            start.elapsed().as_secs_f64()
        );
        bytes.push(Some(serde_json::to_vec(&out.report).unwrap()));
    }
    if filter.is_none() || filter == Some(10) {
        let mut differing = Vec::new();
        for (i, (_, run)) in criteria.iter().enumerate() {
            let first = match &bytes[i] {
                Some(b) => b.clone(),
                None => serde_json::to_vec(&run().report).unwrap(),
            };
            if serde_json::to_vec(&run().report).unwrap() != first {
                differing.push(i + 1);
            }
        }
        let pass = differing.is_empty();
        failed += !pass as usize;
        println!(
            "criterion 10 {}  determinism: reports of criteria 1-9 byte-identical on rerun{}",
            if pass { "PASS" } else { "FAIL" },
            if pass { String::new() } else { format!(" (differ: {differing:?})") }
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

