//! One runner per scenario command. Runners return checks, a JSON result and
//! CSV series; writing them out is left to the caller.

use flowlab::expansiveness::{
    circle_samples, expansiveness_scan, nonsingular_equivalence_probe, orbit_samples, ScanConfig, Verdict, Witness,
};
use flowlab::field::{effective_lipschitz, estimate_lipschitz};
use flowlab::flowbox::{r0_for, verify_box_bounds, FlowboxChart};
use flowlab::hyperbolicity::{
    check_domination, estimate_normal_splitting, rebalance_sequence, BlockMetadata, SplittingOptions,
};
use flowlab::linalg::op_norm;
use flowlab::poincare::{r1_for, SectionOptions, SectionalPoincare};
use flowlab::reparam::{delta_for_epsilon, drift_trials, estimate_speed_ratio_constant, return_time_trials, DriftParams};
use flowlab::sequence::{
    assemble_sequence_system, random_sequence, random_system, solve_fixed_point, sup_norm, AssemblyOptions,
    BlockSequenceSystem, FixedPointReport,
};
use flowlab::{flow_point, Domain, FlowError, OrbitSegment, VectorFieldSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, Result};
use crate::scenario::{
    to_vector, CommandParams, ConstantsParams, ExpansiveParams, FixedpointParams, FlowboxParams, LipschitzSpec,
    PoincareParams, PointSource, Scenario, ShadowParams, SplitParams, SystemSource,
};

/// One pass/fail line of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// A CSV file named `series-<name>.csv`.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub lipschitz: f64,
    pub checks: Vec<Check>,
    pub result: Value,
    pub series: Vec<Series>,
    pub witnesses: Vec<Witness>,
}

struct Context<'a> {
    field: &'a VectorFieldSpec,
    seed: u64,
    tol: f64,
    lipschitz: f64,
}

struct Partial {
    checks: Vec<Check>,
    result: Value,
    series: Vec<Series>,
    witnesses: Vec<Witness>,
}

impl Partial {
    fn new(checks: Vec<Check>, result: Value, series: Vec<Series>) -> Self {
        Partial {
            checks,
            result,
            series,
            witnesses: Vec::new(),
        }
    }
}

/// Runs the scenario's command. `seed` must be set when the scenario needs one.
pub fn run(scenario: &Scenario) -> Result<Outcome> {
    let field = &scenario.field;
    let seed = scenario.seed.unwrap_or(0);
    let lipschitz = match &scenario.lipschitz {
        LipschitzSpec::Value(l) => *l,
        LipschitzSpec::Estimate { region, samples } => {
            estimate_lipschitz(field, region.as_ref().unwrap_or(&field.domain), *samples, seed)?
        }
    };
    let ctx = Context {
        field,
        seed,
        tol: scenario.tol,
        lipschitz,
    };
    let partial = match &scenario.params {
        CommandParams::Flowbox(p) => flowbox(&ctx, p)?,
        CommandParams::Poincare(p) => poincare(&ctx, p)?,
        CommandParams::Shadow(p) => shadow(&ctx, p)?,
        CommandParams::Split(p) => split(&ctx, p)?,
        CommandParams::Fixedpoint(p) => fixedpoint(&ctx, p)?,
        CommandParams::Expansive(p) => expansive(&ctx, p)?,
        CommandParams::Constants(p) => constants(&ctx, p)?,
    };
    Ok(Outcome {
        lipschitz,
        checks: partial.checks,
        result: partial.result,
        series: partial.series,
        witnesses: partial.witnesses,
    })
}

fn csv_series(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<Series> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Invalid(format!("csv output failed: {e}"));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Invalid(format!("csv output failed: {e}")))?;
    Ok(Series {
        name: name.into(),
        bytes,
    })
}

fn library_series(name: &str, write: impl FnOnce(&mut Vec<u8>) -> flowlab::Result<()>) -> Result<Series> {
    let mut bytes = Vec::new();
    write(&mut bytes)?;
    Ok(Series {
        name: name.into(),
        bytes,
    })
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Explicit points, or random points of the region at least `min_speed` fast.
fn base_points(ctx: &Context, source: &PointSource, rng: &mut ChaCha8Rng) -> Result<Vec<DVector<f64>>> {
    if !source.points.is_empty() {
        return Ok(source.points.iter().map(|p| to_vector(p)).collect());
    }
    let region = source.region.as_ref().unwrap_or(&ctx.field.domain);
    let mut out = Vec::with_capacity(source.random_points);
    let mut attempts = 0;
    while out.len() < source.random_points {
        attempts += 1;
        if attempts > 1000 * source.random_points {
            return Err(CliError::Invalid(format!(
                "too few points of the region move faster than min_speed = {}",
                source.min_speed
            )));
        }
        let x = region.sample(rng);
        if ctx.field.speed(&x) >= source.min_speed {
            out.push(x);
        }
    }
    Ok(out)
}

fn flowbox(ctx: &Context, p: &FlowboxParams) -> Result<Partial> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let points = base_points(ctx, &p.source(), &mut rng)?;
    let mut reports = Vec::with_capacity(points.len());
    let mut rows = Vec::new();
    let (mut dev, mut mini, mut norm) = (0.0f64, f64::INFINITY, 0.0f64);
    let mut failed = 0;
    for (k, x) in points.iter().enumerate() {
        let chart = FlowboxChart::new(ctx.field, x, ctx.lipschitz, ctx.tol)?;
        let rep = verify_box_bounds(ctx.field, &chart, p.grid)?;
        dev = dev.max(rep.max_dev);
        mini = mini.min(rep.min_mininorm);
        norm = norm.max(rep.max_norm);
        if !rep.passed() || !rep.no_singularity {
            failed += 1;
        }
        rows.push(vec![
            k.to_string(),
            num(rep.max_dev),
            num(rep.min_mininorm),
            num(rep.max_norm),
            rep.no_singularity.to_string(),
            rep.witnesses.len().to_string(),
        ]);
        reports.push(rep);
    }
    let nodes = reports.first().map_or(0, |r| r.nodes);
    let check = Check::new(
        "flowbox bounds",
        failed == 0,
        format!(
            "{failed} of {} charts fail; max |DF - id| = {dev:.4} (<= 0.5), min m(DF) = {mini:.4} (>= 0.5), max |DF| = {norm:.4} (<= 2), {nodes} nodes per chart",
            reports.len()
        ),
    );
    let series = csv_series(
        "flowbox",
        &["chart", "max_dev", "min_mininorm", "max_norm", "no_singularity", "witnesses"],
        rows,
    )?;
    let result = json!({ "r0": r0_for(ctx.lipschitz), "grid": p.grid, "charts": reports });
    Ok(Partial::new(vec![check], result, vec![series]))
}

fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn poincare(ctx: &Context, p: &PoincareParams) -> Result<Partial> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let points = base_points(ctx, &p.source(), &mut rng)?;
    let mut options = p.derivative.apply(SectionOptions::new(ctx.lipschitz, ctx.tol));
    if p.relaxed {
        options = options.relaxed();
    }
    let l_eff = effective_lipschitz(ctx.lipschitz);
    let (mut worst_err, mut worst_ratio) = (0.0f64, 0.0f64);
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for (k, x) in points.iter().enumerate() {
        for &t in &p.times {
            let sec = SectionalPoincare::new(ctx.field, x, t, options)?;
            let (_, d0) = sec.apply_with_derivative(&DVector::zeros(ctx.field.dim()))?;
            let err = relative_error(&d0, &sec.psi()?.matrix);
            let bound = 4.5 * (l_eff * t.abs()).exp();
            let mut largest = op_norm(&d0);
            for _ in 0..p.probes {
                let coords = DVector::from_fn(sec.source.dim(), |_, _| rng.gen_range(-1.0..1.0));
                let scale = rng.gen_range(0.0..1.0) * sec.radius() / coords.norm();
                let (_, dv) = sec.apply_with_derivative(&sec.source.vector(&(coords * scale)))?;
                largest = largest.max(op_norm(&dv));
            }
            worst_err = worst_err.max(err);
            worst_ratio = worst_ratio.max(largest / bound);
            rows.push(vec![k.to_string(), num(t), num(err), num(largest), num(bound)]);
            entries.push(json!({ "point": k, "t": t, "relative_error": err, "max_derivative_norm": largest, "bound": bound }));
        }
    }
    let checks = vec![
        Check::new(
            "sectional derivative identity",
            worst_err <= p.max_relative_error,
            format!("max relative error of D_0 P against psi_T = {worst_err:.2e} (<= {:e})", p.max_relative_error),
        ),
        Check::new(
            "sectional derivative bound",
            worst_ratio <= 1.0,
            format!("max |D_v P| / (4.5 e^(L|T|)) = {worst_ratio:.4} (<= 1)"),
        ),
    ];
    let series = csv_series("poincare", &["point", "t", "relative_error", "max_derivative_norm", "bound"], rows)?;
    let result = json!({ "options": options, "entries": entries });
    Ok(Partial::new(checks, result, vec![series]))
}

fn shadow(ctx: &Context, p: &ShadowParams) -> Result<Partial> {
    let region = p.region.as_ref().unwrap_or(&ctx.field.domain);
    let r0 = r0_for(ctx.lipschitz);
    let mut checks = Vec::new();
    let ret = return_time_trials(ctx.field, region, ctx.lipschitz, p.return_time_trials, ctx.tol, ctx.seed)?;
    checks.push(Check::new(
        "return time",
        ret.violations == 0,
        format!(
            "{} violations of |t| <= 3 delta in {} trials meeting the hypothesis (of {}), max |t|/(3 delta) = {:.3}",
            ret.violations, ret.hypothesis_met, ret.trials, ret.worst_ratio
        ),
    ));
    let c = estimate_speed_ratio_constant(ctx.field, region, ctx.lipschitz, p.speed_samples, ctx.seed)?;
    let params = DriftParams {
        lipschitz: ctx.lipschitz,
        c,
        tol: ctx.tol,
        samples: 200,
    };
    let mut rows = Vec::new();
    let mut drifts = Vec::new();
    for &eps in &p.epsilons {
        for &factor in &p.horizons {
            let horizon = factor * r0;
            let rep = drift_trials(ctx.field, region, &params, eps, horizon, p.drift_trials, p.knots, ctx.seed)?;
            let worst = rep.trials.iter().map(|t| t.drift.abs() / (eps * horizon)).fold(0.0, f64::max);
            checks.push(Check::new(
                format!("drift eps={eps} T={factor}r0"),
                rep.violations == 0,
                format!(
                    "{} violations in {} pairs ({} rejected), max |drift|/(eps T) = {worst:.3e}",
                    rep.violations,
                    rep.trials.len(),
                    rep.rejected
                ),
            ));
            for t in &rep.trials {
                rows.push(vec![num(eps), num(horizon), t.trial.to_string(), num(t.delta), num(t.drift), t.bound_ok.to_string()]);
            }
            drifts.push(rep);
        }
    }
    let series = csv_series("drift", &["epsilon", "horizon", "trial", "delta", "drift", "bound_ok"], rows)?;
    let result = json!({ "r0": r0, "speed_ratio_constant": c, "return_time": ret, "drift": drifts });
    Ok(Partial::new(checks, result, vec![series]))
}

fn orbit_from(
    ctx: &Context,
    start: &[f64],
    transient: f64,
    block_time: f64,
    blocks: usize,
) -> Result<OrbitSegment> {
    let x0 = flow_point(ctx.field, &to_vector(start), transient, ctx.tol)?;
    Ok(OrbitSegment::uniform(ctx.field, &x0, block_time, blocks, ctx.tol, true)?)
}

fn split(ctx: &Context, p: &SplitParams) -> Result<Partial> {
    let orbit = orbit_from(ctx, &p.start, p.transient, p.block_time, p.blocks)?;
    let orbit_series = library_series("orbit", |out| orbit.write_csv(out))?;
    let splitting = match estimate_normal_splitting(ctx.field, &orbit, &SplittingOptions::new(p.dim_s, ctx.tol)) {
        Err(FlowError::NoDomination { ratio }) => {
            let check = Check::new(
                "dominated splitting",
                false,
                format!("no dominated splitting: singular value ratio {ratio:.6} < 1.05"),
            );
            return Ok(Partial::new(vec![check], json!({ "orbit": orbit }), vec![orbit_series]));
        }
        other => other?,
    };
    let rep = check_domination(
        ctx.field,
        &splitting,
        &p.cocycle_s,
        &p.cocycle_u,
        p.constant,
        p.rate,
        &p.t_grid,
        ctx.tol,
    )?;
    let defect = splitting.invariance_defect(ctx.field)?;
    let checks = vec![
        Check::new(
            "dominated splitting",
            true,
            format!("gap ratio {:.4}, min angle {:.4} rad, invariance defect {defect:.2e}", splitting.gap_ratio, splitting.min_angle()),
        ),
        Check::new(
            "multisingular hyperbolicity",
            rep.passed(),
            format!(
                "worst value/bound: domination {:.4}, contraction {:.4}, expansion {:.4} (each < 1)",
                rep.worst_domination, rep.worst_contraction, rep.worst_expansion
            ),
        ),
    ];
    let domination_series = library_series("domination", |out| rep.write_csv(out))?;
    let result = json!({
        "gap_ratio": splitting.gap_ratio,
        "min_angle": splitting.min_angle(),
        "invariance_defect": defect,
        "domination": rep,
    });
    Ok(Partial::new(checks, result, vec![orbit_series, domination_series]))
}

fn solve_from_starts(
    system: &BlockSequenceSystem<'_>,
    p: &FixedpointParams,
    radius: f64,
    seed: u64,
) -> Result<(Vec<Check>, Value, Series)> {
    let kappa = system.kappa();
    let mut runs: Vec<FixedPointReport> = Vec::with_capacity(p.starts);
    for k in 0..p.starts {
        let start = random_sequence(system, radius, seed.wrapping_add(k as u64));
        runs.push(solve_fixed_point(system, &start, p.max_iter, p.step_tol)?);
    }
    let converged = runs.iter().filter(|r| r.converged).count();
    let worst_factor = runs.iter().map(|r| r.max_factor).fold(0.0, f64::max);
    let worst_norm = runs.iter().map(|r| r.final_norm).fold(0.0, f64::max);
    let mut spread: f64 = 0.0;
    for a in &runs {
        for b in &runs {
            let diff: Vec<DVector<f64>> = a.solution.iter().zip(&b.solution).map(|(u, v)| u - v).collect();
            spread = spread.max(sup_norm(&diff));
        }
    }
    let checks = vec![
        Check::new(
            "contraction",
            converged == runs.len() && worst_factor <= kappa * (1.0 + 1e-6),
            format!("{converged}/{} runs converged, max step ratio {worst_factor:.4} (<= kappa = {kappa:.4})", runs.len()),
        ),
        Check::new(
            "unique zero fixed point",
            worst_norm <= 1e-10 && spread <= 1e-10,
            format!("max |v| = {worst_norm:.1e}, spread over starts {spread:.1e} (each <= 1e-10)"),
        ),
    ];
    let mut rows = Vec::new();
    for (k, r) in runs.iter().enumerate() {
        for row in &r.trace {
            rows.push(vec![k.to_string(), row.iteration.to_string(), num(row.norm), row.factor.map(num).unwrap_or_default()]);
        }
    }
    let series = csv_series("fixedpoint", &["start", "iteration", "norm", "factor"], rows)?;
    let summaries: Vec<Value> = runs
        .iter()
        .map(|r| {
            json!({
                "iterations": r.iterations,
                "converged": r.converged,
                "final_norm": r.final_norm,
                "max_factor": r.max_factor,
            })
        })
        .collect();
    Ok((checks, json!({ "kappa": kappa, "runs": summaries }), series))
}

fn fixedpoint(ctx: &Context, p: &FixedpointParams) -> Result<Partial> {
    if let Some(spec) = p.system.random_spec() {
        let system = random_system(&spec, ctx.seed)?;
        let (checks, runs, series) = solve_from_starts(&system, p, p.radius, ctx.seed)?;
        let result = json!({ "system": system.summary(), "solve": runs });
        return Ok(Partial::new(checks, result, vec![series]));
    }
    let SystemSource::Orbit {
        start,
        transient,
        block_time,
        blocks,
        dim_s,
        eta,
        first,
        epsilon_fraction,
        derivative,
    } = &p.system
    else {
        unreachable!("random systems returned above");
    };
    let orbit = orbit_from(ctx, start, *transient, *block_time, *blocks)?;
    let infeasible = |name: &str, detail: String, result: Value| {
        Ok(Partial::new(vec![Check::new(name, false, detail)], result, Vec::new()))
    };
    let splitting = match estimate_normal_splitting(ctx.field, &orbit, &SplittingOptions::new(*dim_s, ctx.tol)) {
        Err(FlowError::NoDomination { ratio }) => {
            return infeasible("dominated splitting", format!("singular value ratio {ratio:.6} < 1.05"), Value::Null)
        }
        other => other?,
    };
    let norms = splitting.block_norms(ctx.field)?;
    let metadata = BlockMetadata {
        lipschitz: ctx.lipschitz,
        block_time: *block_time,
    };
    let rebalance = match rebalance_sequence(&norms, *eta, *first, Some(metadata), None) {
        Err(e @ FlowError::RebalanceInfeasible { .. }) => return infeasible("rebalance", e.to_string(), Value::Null),
        other => other?,
    };
    let r1 = r1_for(ctx.lipschitz, *block_time);
    let epsilon = epsilon_fraction * r1;
    let options = AssemblyOptions {
        epsilon,
        section: derivative.apply(SectionOptions::new(ctx.lipschitz, ctx.tol)),
        lipschitz_pairs: 200,
        derivative_samples: 20,
        seed: ctx.seed,
    };
    let (system, assembly) = assemble_sequence_system(ctx.field, &splitting, &rebalance, &options)?;
    let feasible = Check::new(
        "perturbation size",
        assembly.feasible,
        format!(
            "measured xi {:.3e} against required {:.3e}, eta {:.4}, alpha {:.4}",
            assembly.measured_xi, assembly.required_xi, assembly.measured_eta, assembly.measured_alpha
        ),
    );
    let base = json!({ "epsilon": epsilon, "rebalance": rebalance, "assembly": assembly });
    if !assembly.feasible {
        return Ok(Partial::new(vec![feasible], base, Vec::new()));
    }
    let (mut checks, runs, series) = solve_from_starts(&system, p, p.radius * epsilon, ctx.seed)?;
    checks.insert(0, feasible);
    let mut result = base;
    result["solve"] = runs;
    Ok(Partial::new(checks, result, vec![series]))
}

fn expansive(ctx: &Context, p: &ExpansiveParams) -> Result<Partial> {
    let mut samples: Vec<DVector<f64>> = p.samples.iter().map(|s| to_vector(s)).collect();
    if let Some(c) = &p.circle {
        samples.extend(circle_samples(c.radius, c.count));
    }
    if let Some(o) = &p.orbit {
        samples.extend(orbit_samples(ctx.field, &to_vector(&o.start), o.transient, o.count, o.spacing, ctx.tol)?);
    }
    let config = ScanConfig {
        samples,
        horizon: p.horizon,
        two_sided: p.two_sided,
        epsilons: p.epsilons.clone(),
        deltas: p.deltas.clone(),
        delta_ratios: p.delta_ratios.clone(),
        lattice: p.lattice,
        grid: p.grid,
        budget: p.budget,
        seed: ctx.seed,
        tol: ctx.tol,
        lipschitz: ctx.lipschitz,
    };
    config.validate()?;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut scans = Vec::new();
    let mut witnesses = Vec::new();
    for &mode in &p.modes {
        let rep = expansiveness_scan(ctx.field, &config, mode)?;
        let violations: Vec<&Witness> = rep.violations().collect();
        let detail = match violations.first() {
            None => format!("no violation in {} (eps, delta) entries, budget {}", rep.entries.len(), rep.budget),
            Some(w) => format!(
                "{} of {} (eps, delta) entries have a witness; first at eps = {}, delta = {:.4}",
                violations.len(),
                rep.entries.len(),
                w.epsilon,
                w.delta
            ),
        };
        checks.push(Check::new(format!("expansiveness ({})", mode.name()), violations.is_empty(), detail));
        witnesses.extend(violations.into_iter().cloned());
        for e in &rep.entries {
            let verdict = match e.verdict {
                Verdict::NoViolationFound => "no-violation-found",
                Verdict::Violation => "violation",
            };
            rows.push(vec![
                mode.name().to_string(),
                num(e.epsilon),
                num(e.delta),
                verdict.to_string(),
                e.candidates.to_string(),
                e.shadowing_pairs.to_string(),
            ]);
        }
        scans.push(rep);
    }
    let mut result = json!({ "samples": config.samples.len(), "window": config.window(), "scans": scans });
    if p.probe {
        let probe = nonsingular_equivalence_probe(ctx.field, &config)?;
        checks.push(Check::new(
            "mode equivalence",
            probe.consistent(),
            format!("speed factor {:.4} over the sampled orbits", probe.speed_factor),
        ));
        result["probe"] = json!({
            "min_speed": probe.min_speed,
            "max_speed": probe.max_speed,
            "speed_factor": probe.speed_factor,
            "rows": probe.rows,
        });
    }
    let series = csv_series(
        "expansive",
        &["mode", "epsilon", "delta", "verdict", "candidates", "shadowing_pairs"],
        rows,
    )?;
    Ok(Partial {
        checks,
        result,
        series: vec![series],
        witnesses,
    })
}

fn constants(ctx: &Context, p: &ConstantsParams) -> Result<Partial> {
    let domain: &Domain = &ctx.field.domain;
    let c = match p.c {
        Some(c) => c,
        None => estimate_speed_ratio_constant(ctx.field, domain, ctx.lipschitz, p.speed_samples, ctx.seed)?,
    };
    let r0 = r0_for(ctx.lipschitz);
    let mut rows = vec![
        vec!["lipschitz".into(), String::new(), num(ctx.lipschitz)],
        vec!["effective_lipschitz".into(), String::new(), num(effective_lipschitz(ctx.lipschitz))],
        vec!["r0".into(), String::new(), num(r0)],
        vec!["speed_ratio_constant".into(), String::new(), num(c)],
    ];
    let mut per_time = Vec::new();
    for &t in &p.block_times {
        let r1 = r1_for(ctx.lipschitz, t);
        let eps0 = flowlab::expansiveness::epsilon0_estimate(ctx.lipschitz, t);
        rows.push(vec!["r1".into(), num(t), num(r1)]);
        if let Ok(e) = &eps0 {
            rows.push(vec!["epsilon0".into(), num(t), num(*e)]);
        }
        per_time.push(json!({
            "block_time": t,
            "r1": r1,
            "epsilon0": eps0.as_ref().ok(),
            "epsilon0_error": eps0.as_ref().err().map(|e| e.to_string()),
        }));
    }
    let mut per_eps = Vec::new();
    for &eps in &p.epsilons {
        let delta = delta_for_epsilon(ctx.lipschitz, c, eps);
        rows.push(vec!["delta".into(), num(eps), num(delta)]);
        per_eps.push(json!({ "epsilon": eps, "delta": delta }));
    }
    let series = csv_series("constants", &["quantity", "argument", "value"], rows)?;
    let result = json!({
        "effective_lipschitz": effective_lipschitz(ctx.lipschitz),
        "r0": r0,
        "speed_ratio_constant": c,
        "singularity_tolerance": ctx.field.singularity_tolerance(),
        "block_times": per_time,
        "epsilons": per_eps,
    });
    Ok(Partial::new(Vec::new(), result, vec![series]))
}
