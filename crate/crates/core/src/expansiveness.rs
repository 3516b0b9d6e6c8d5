//! Budgeted searches for expansiveness violations in the rescaled, Komuro
//! and Bowen-Walters senses, with replayable witnesses, the `eps0` estimate
//! and a consistency probe for nonsingular fields.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::field::{estimate_lipschitz, Domain, VectorFieldSpec};
use crate::flowbox::{r0_for, ChartBounds, FlowboxChart};
use crate::integrate::{flow_point, OrbitSegment, Trajectory};
use crate::linalg;
use crate::poincare::r1_for;
use crate::reparam::{fit_reparametrization, DistanceScale, Lattice, Reparametrization, ShadowingInstance};

/// Rescaled normal displacement below which a point counts as on the orbit.
pub const ON_ORBIT_TOL: f64 = 1e-7;

/// Relative slack on `|tau| <= eps`, the accuracy of the flowbox inversion.
pub const TIME_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMode {
    /// Rescaled shadowing; the conclusion must hold at every grid time.
    Rescaled,
    /// Plain shadowing; the conclusion must hold at some grid time.
    Komuro,
    /// Plain shadowing; the conclusion must hold at time 0.
    BowenWalters,
}

impl ScanMode {
    pub const ALL: [ScanMode; 3] = [ScanMode::Rescaled, ScanMode::Komuro, ScanMode::BowenWalters];

    pub fn scale(self) -> DistanceScale {
        match self {
            ScanMode::Rescaled => DistanceScale::Rescaled,
            _ => DistanceScale::Unscaled,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScanMode::Rescaled => "rescaled",
            ScanMode::Komuro => "komuro",
            ScanMode::BowenWalters => "bowen-walters",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    #[serde(with = "linalg::serde_vecs")]
    pub samples: Vec<DVector<f64>>,
    pub horizon: f64,
    /// Use the window `[-horizon, horizon]` instead of `[0, horizon]`.
    pub two_sided: bool,
    pub epsilons: Vec<f64>,
    /// Absolute `delta` values tried for every `eps`.
    pub deltas: Vec<f64>,
    /// `delta = ratio * eps` values tried for every `eps`.
    pub delta_ratios: Vec<f64>,
    /// Nodes per axis of the fitting lattice.
    pub lattice: usize,
    /// Times at which distances and conclusions are checked.
    pub grid: usize,
    /// Candidate pairs examined per `(eps, delta)`.
    pub budget: usize,
    pub seed: u64,
    pub tol: f64,
    pub lipschitz: f64,
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() || self.epsilons.is_empty() {
            return Err(FlowError::Invalid("samples and epsilons must be nonempty".into()));
        }
        if self.deltas.is_empty() && self.delta_ratios.is_empty() {
            return Err(FlowError::Invalid("give deltas or delta_ratios".into()));
        }
        if self.budget == 0 {
            return Err(FlowError::Invalid("budget must be positive".into()));
        }
        if !(self.horizon > 0.0) || self.lattice < 2 || self.grid < 2 {
            return Err(FlowError::Invalid("need horizon > 0, lattice >= 2, grid >= 2".into()));
        }
        if self.epsilons.iter().chain(&self.deltas).chain(&self.delta_ratios).any(|v| !(*v > 0.0)) {
            return Err(FlowError::Invalid("epsilons and deltas must be positive".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> (f64, f64) {
        if self.two_sided {
            (-self.horizon, self.horizon)
        } else {
            (0.0, self.horizon)
        }
    }

    /// Sorted, deduplicated `delta` values for `eps`.
    pub fn deltas_for(&self, eps: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self.deltas.iter().copied().chain(self.delta_ratios.iter().map(|r| r * eps)).collect();
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        out.dedup();
        out
    }
}

/// Conclusion check at one time: flowbox preimage of `phi_theta(t)(y)` at
/// `phi_t(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    pub t: f64,
    /// Normal part divided by `|X(phi_t(x))|`.
    pub normal: f64,
    pub time_offset: f64,
    pub holds: bool,
}

/// Self-contained record of a violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub field: VectorFieldSpec,
    pub mode: ScanMode,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(with = "linalg::serde_vec")]
    pub x: DVector<f64>,
    #[serde(with = "linalg::serde_vec")]
    pub y: DVector<f64>,
    pub theta: Reparametrization,
    pub window: (f64, f64),
    pub grid: usize,
    pub tol: f64,
    pub lipschitz: f64,
    pub shadow_sup: f64,
    /// First grid time at which the conclusion fails.
    pub failure: Displacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub shadow_sup: f64,
    pub shadow_ok: bool,
    pub conclusion_failed: bool,
    pub reproduced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    NoViolationFound,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub epsilon: f64,
    pub delta: f64,
    pub verdict: Verdict,
    pub candidates: usize,
    pub shadowing_pairs: usize,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub mode: ScanMode,
    pub window: (f64, f64),
    pub budget: usize,
    pub entries: Vec<ScanEntry>,
}

impl ScanReport {
    pub fn violations(&self) -> impl Iterator<Item = &Witness> {
        self.entries.iter().filter_map(|e| e.witness.as_ref())
    }
}

fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn check_grid(window: (f64, f64), n: usize) -> Vec<f64> {
    let mut g = uniform(window.0, window.1, n);
    if !g.contains(&0.0) {
        g.push(0.0);
        g.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    }
    g
}

fn segment_distance(field: &VectorFieldSpec, p: &DVector<f64>, z: &DVector<f64>, eps: f64, tol: f64) -> Result<(f64, f64)> {
    let tr = Trajectory::new(field, p, -eps, eps, tol, false)?;
    let dist = |tau: f64| -> Result<f64> { Ok((tr.state(tau)? - z).norm()) };
    let n = 100;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=n {
        let tau = -eps + 2.0 * eps * i as f64 / n as f64;
        let d = dist(tau)?;
        if d < best.0 {
            best = (d, tau);
        }
    }
    // golden-section refinement around the best sample
    let h = 2.0 * eps / n as f64;
    let (mut a, mut b) = ((best.1 - h).max(-eps), (best.1 + h).min(eps));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if dist(c)? < dist(d)? {
            b = d;
        } else {
            a = c;
        }
    }
    let tau = 0.5 * (a + b);
    let d = dist(tau)?;
    Ok(if d < best.0 { (d, tau) } else { best })
}

#[allow(clippy::too_many_arguments)]
fn displacement(
    field: &VectorFieldSpec,
    p: &DVector<f64>,
    z: &DVector<f64>,
    t: f64,
    eps: f64,
    lipschitz: f64,
    tol: f64,
) -> Result<Displacement> {
    let speed = field.speed(p);
    if speed <= field.singularity_tolerance() {
        return Err(FlowError::Singularity { time: t, speed });
    }
    let chart = FlowboxChart::new(field, p, lipschitz, tol)?.with_bounds(ChartBounds::Relaxed);
    match chart.invert(field, z) {
        Ok((u, tau)) => {
            let normal = u.norm() / speed;
            Ok(Displacement {
                t,
                normal,
                time_offset: tau,
                holds: normal <= ON_ORBIT_TOL && tau.abs() <= eps * (1.0 + TIME_SLACK),
            })
        }
        Err(FlowError::NotInBox(_)) | Err(FlowError::Stiffness { .. }) => {
            let (d, tau) = segment_distance(field, p, z, eps, tol)?;
            let normal = d / speed;
            Ok(Displacement {
                t,
                normal,
                time_offset: tau,
                holds: normal <= ON_ORBIT_TOL,
            })
        }
        Err(e) => Err(e),
    }
}

struct PairCheck {
    shadow_sup: f64,
    failure: Option<Displacement>,
}

/// Shadowing distance over the grid and, if it is within `delta`, the
/// first failing conclusion for the mode.
#[allow(clippy::too_many_arguments)]
fn check_pair(
    field: &VectorFieldSpec,
    mode: ScanMode,
    x: &DVector<f64>,
    y: &DVector<f64>,
    theta: &Reparametrization,
    window: (f64, f64),
    grid: usize,
    eps: f64,
    delta: f64,
    lipschitz: f64,
    tol: f64,
) -> Result<PairCheck> {
    let inst = ShadowingInstance::evaluate(field, x, y, theta, window, grid, tol, mode.scale())?;
    let shadow_sup = inst.sup();
    if shadow_sup > delta {
        return Ok(PairCheck {
            shadow_sup,
            failure: None,
        });
    }
    let tx = Trajectory::new(field, x, window.0.min(0.0), window.1.max(0.0), tol, false)?;
    let (s0, s1) = (theta.eval(window.0), theta.eval(window.1));
    let ty = Trajectory::new(field, y, s0.min(0.0), s1.max(0.0), tol, false)?;
    let at = |t: f64| -> Result<Displacement> {
        displacement(field, &tx.state(t)?, &ty.state(theta.eval(t))?, t, eps, lipschitz, tol)
    };
    let failure = match mode {
        ScanMode::BowenWalters => Some(at(0.0)?).filter(|d| !d.holds),
        ScanMode::Rescaled => {
            let mut first = None;
            for t in check_grid(window, grid) {
                let d = at(t)?;
                if !d.holds {
                    first = Some(d);
                    break;
                }
            }
            first
        }
        ScanMode::Komuro => {
            let mut first = None;
            let mut any_holds = false;
            for t in check_grid(window, grid) {
                let d = at(t)?;
                if d.holds {
                    any_holds = true;
                    break;
                }
                first.get_or_insert(d);
            }
            if any_holds {
                None
            } else {
                first
            }
        }
    };
    Ok(PairCheck { shadow_sup, failure })
}

/// Re-evaluates a witness from its serialized data alone.
pub fn replay_witness(witness: &Witness) -> Result<ReplayReport> {
    let mut field = witness.field.clone();
    field.prepare()?;
    let check = check_pair(
        &field,
        witness.mode,
        &witness.x,
        &witness.y,
        &witness.theta,
        witness.window,
        witness.grid,
        witness.epsilon,
        witness.delta,
        witness.lipschitz,
        witness.tol,
    )?;
    let shadow_ok = check.shadow_sup <= witness.delta;
    let conclusion_failed = check.failure.is_some();
    Ok(ReplayReport {
        shadow_sup: check.shadow_sup,
        shadow_ok,
        conclusion_failed,
        reproduced: shadow_ok && conclusion_failed,
    })
}

#[derive(Debug, Clone)]
enum CandidateKind {
    Perturbation { relative: f64, direction: DVector<f64> },
    Neighbor(usize),
    Return,
}

#[derive(Debug, Clone)]
struct Candidate {
    sample: usize,
    kind: CandidateKind,
}

fn candidates(field: &VectorFieldSpec, config: &ScanConfig) -> Vec<Candidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let samples = &config.samples;
    let mut out = Vec::new();
    for (i, x) in samples.iter().enumerate() {
        let e = linalg::unit(&field.value(x));
        let raw = DVector::from_fn(x.len(), |_, _| rng.gen_range(-1.0..1.0));
        let n = linalg::unit(&(&raw - &e * e.dot(&raw)));
        for relative in [0.5, 1.0] {
            out.push(Candidate {
                sample: i,
                kind: CandidateKind::Perturbation {
                    relative,
                    direction: n.clone(),
                },
            });
        }
        let nearest = samples
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, z)| (j, (z - x).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite").then(a.0.cmp(&b.0)));
        if let Some((j, _)) = nearest {
            out.push(Candidate {
                sample: i,
                kind: CandidateKind::Neighbor(j),
            });
        }
        out.push(Candidate {
            sample: i,
            kind: CandidateKind::Return,
        });
    }
    out
}

/// Time in `[horizon / 10, horizon]` at which the orbit of `x` comes closest
/// to `x`.
fn closest_return(field: &VectorFieldSpec, x: &DVector<f64>, horizon: f64, tol: f64) -> Result<f64> {
    let tr = Trajectory::new(field, x, 0.0, horizon, tol, false)?;
    let n = 400;
    let mut best = (f64::INFINITY, horizon);
    for i in 0..=n {
        let tau = horizon * (0.1 + 0.9 * i as f64 / n as f64);
        let d = (tr.state(tau)? - x).norm();
        if d < best.0 {
            best = (d, tau);
        }
    }
    Ok(best.1)
}

fn candidate_point(
    field: &VectorFieldSpec,
    config: &ScanConfig,
    mode: ScanMode,
    c: &Candidate,
    delta: f64,
) -> Result<DVector<f64>> {
    let x = &config.samples[c.sample];
    match &c.kind {
        CandidateKind::Perturbation { relative, direction } => {
            let size = match mode {
                ScanMode::Rescaled => relative * delta * field.speed(x),
                _ => relative * delta,
            };
            Ok(x + direction * size)
        }
        CandidateKind::Neighbor(j) => Ok(config.samples[*j].clone()),
        CandidateKind::Return => {
            let tau = closest_return(field, x, config.horizon, config.tol)?;
            flow_point(field, x, tau, config.tol)
        }
    }
}

/// Time shift that aligns `y` with the section through `x`, if `y` lies in
/// the flowbox at `x`.
fn alignment(field: &VectorFieldSpec, x: &DVector<f64>, y: &DVector<f64>, config: &ScanConfig) -> f64 {
    let chart = match FlowboxChart::new(field, x, config.lipschitz, config.tol) {
        Ok(c) => c.with_bounds(ChartBounds::Relaxed),
        Err(_) => return 0.0,
    };
    match chart.invert(field, y) {
        Ok((_, tau)) if tau.abs() <= 0.5 * config.horizon => -tau,
        _ => 0.0,
    }
}

fn is_escape(e: &FlowError) -> bool {
    matches!(e, FlowError::Escape { .. } | FlowError::Domain(_) | FlowError::Stiffness { .. })
}

/// Whether the pair shadows, and the witness when it violates.
type PairOutcome = (bool, Option<Witness>);

/// Searches for `(x, y, theta)` shadowing within `delta` whose conclusion
/// fails, for every `(eps, delta)` of the configuration.
pub fn expansiveness_scan(field: &VectorFieldSpec, config: &ScanConfig, mode: ScanMode) -> Result<ScanReport> {
    config.validate()?;
    let window = config.window();
    for (i, x) in config.samples.iter().enumerate() {
        if mode == ScanMode::Rescaled && field.speed(x) <= field.singularity_tolerance() {
            return Err(FlowError::Singularity {
                time: 0.0,
                speed: field.speed(x),
            });
        }
        Trajectory::new(field, x, window.0, window.1, config.tol, false).map_err(|e| match e {
            FlowError::Escape { time } => {
                FlowError::Precondition(format!("sample {i} leaves the domain at t = {time:e} within the window"))
            }
            other => other,
        })?;
    }
    let pool = candidates(field, config);
    let used = pool.len().min(config.budget);
    let mut entries = Vec::new();
    for &eps in &config.epsilons {
        for delta in config.deltas_for(eps) {
            let results: Vec<Result<Option<PairOutcome>>> = pool[..used]
                .par_iter()
                .map(|c| {
                    let x = &config.samples[c.sample];
                    let y = match candidate_point(field, config, mode, c, delta) {
                        Ok(y) if field.domain.contains(y.as_slice()) => y,
                        Ok(_) => return Ok(None),
                        Err(e) if is_escape(&e) => return Ok(None),
                        Err(e) => return Err(e),
                    };
                    let shift = alignment(field, x, &y, config);
                    let lattice = Lattice {
                        t_range: window,
                        s_range: (window.0 + shift, window.1 + shift),
                        rows: config.lattice,
                        cols: config.lattice,
                    };
                    let theta = match fit_reparametrization(field, x, &y, &lattice, config.tol, mode.scale()) {
                        Ok((theta, _)) => theta,
                        Err(e) if is_escape(&e) || matches!(e, FlowError::NoPath) => return Ok(None),
                        Err(e) => return Err(e),
                    };
                    let check = match check_pair(
                        field,
                        mode,
                        x,
                        &y,
                        &theta,
                        window,
                        config.grid,
                        eps,
                        delta,
                        config.lipschitz,
                        config.tol,
                    ) {
                        Ok(c) => c,
                        Err(e) if is_escape(&e) => return Ok(None),
                        Err(e) => return Err(e),
                    };
                    let shadows = check.shadow_sup <= delta;
                    let witness = check.failure.map(|failure| Witness {
                        field: field.clone(),
                        mode,
                        epsilon: eps,
                        delta,
                        x: x.clone(),
                        y: y.clone(),
                        theta,
                        window,
                        grid: config.grid,
                        tol: config.tol,
                        lipschitz: config.lipschitz,
                        shadow_sup: check.shadow_sup,
                        failure,
                    });
                    Ok(Some((shadows, witness)))
                })
                .collect();
            let mut shadowing_pairs = 0;
            let mut witness = None;
            for r in results {
                if let Some((shadows, w)) = r? {
                    shadowing_pairs += shadows as usize;
                    if witness.is_none() {
                        witness = w;
                    }
                }
            }
            entries.push(ScanEntry {
                epsilon: eps,
                delta,
                verdict: if witness.is_some() { Verdict::Violation } else { Verdict::NoViolationFound },
                candidates: used,
                shadowing_pairs,
                witness,
            });
        }
    }
    Ok(ScanReport {
        mode,
        window,
        budget: config.budget,
        entries,
    })
}

/// `eps0 = min{ r1(T)/3, 3 delta(T) }` with `delta(T) = min{ r0/12, r1(T)/3 }`.
pub fn epsilon0_estimate(lipschitz: f64, block_time: f64) -> Result<f64> {
    let r0 = r0_for(lipschitz);
    if !(block_time > r0) {
        return Err(FlowError::Horizon(format!("block time {block_time:e} must exceed r0 = {r0:e}")));
    }
    let r1 = r1_for(lipschitz, block_time);
    let delta = (r0 / 12.0).min(r1 / 3.0);
    Ok((r1 / 3.0).min(3.0 * delta))
}

/// `eps0` with the Lipschitz constant estimated over the orbit's bounding box.
pub fn epsilon0_for_orbit(field: &VectorFieldSpec, orbit: &OrbitSegment, block_time: f64, seed: u64) -> Result<f64> {
    let d = field.dim();
    let lower: Vec<f64> = (0..d).map(|k| orbit.states.iter().map(|x| x[k]).fold(f64::INFINITY, f64::min)).collect();
    let upper: Vec<f64> = (0..d)
        .map(|k| orbit.states.iter().map(|x| x[k]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    // pad degenerate extents so the box has volume
    let upper: Vec<f64> = upper.iter().zip(&lower).map(|(u, l)| if u > l { *u } else { l + 1e-9 }).collect();
    let region = Domain::new(lower, upper)?;
    let l = estimate_lipschitz(field, &region, 256, seed)?;
    epsilon0_estimate(l, block_time)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeThreshold {
    pub mode: ScanMode,
    /// Largest grid `delta` such that it and every smaller one gave no
    /// violation; `None` if the smallest already did.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRow {
    pub epsilon: f64,
    pub thresholds: Vec<ModeThreshold>,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub min_speed: f64,
    pub max_speed: f64,
    pub speed_factor: f64,
    pub rows: Vec<EquivalenceRow>,
    pub scans: Vec<ScanReport>,
}

impl EquivalenceReport {
    pub fn consistent(&self) -> bool {
        self.rows.iter().all(|r| r.consistent)
    }
}

/// Runs all three scans on the same samples and compares the per-mode
/// `delta(eps)` against the speed ratio over the sampled orbits.
pub fn nonsingular_equivalence_probe(field: &VectorFieldSpec, config: &ScanConfig) -> Result<EquivalenceReport> {
    config.validate()?;
    let window = config.window();
    let mut min_speed = f64::INFINITY;
    let mut max_speed: f64 = 0.0;
    for x in &config.samples {
        let tr = Trajectory::new(field, x, window.0, window.1, config.tol, false)?;
        for t in uniform(window.0, window.1, config.grid) {
            let s = field.speed(&tr.state(t)?);
            min_speed = min_speed.min(s);
            max_speed = max_speed.max(s);
        }
    }
    if min_speed <= field.singularity_tolerance() {
        return Err(FlowError::Precondition(format!(
            "sampled orbits come within speed {min_speed:e} of a singularity"
        )));
    }
    let factor = max_speed / min_speed;
    let scans = ScanMode::ALL
        .iter()
        .map(|&m| expansiveness_scan(field, config, m))
        .collect::<Result<Vec<_>>>()?;
    let rows = config
        .epsilons
        .iter()
        .map(|&eps| {
            let thresholds: Vec<ModeThreshold> = scans
                .iter()
                .map(|scan| {
                    let mut best = None;
                    for e in scan.entries.iter().filter(|e| e.epsilon == eps) {
                        if e.verdict == Verdict::Violation {
                            break;
                        }
                        best = Some(e.delta);
                    }
                    ModeThreshold {
                        mode: scan.mode,
                        delta: best,
                    }
                })
                .collect();
            let found: Vec<f64> = thresholds.iter().filter_map(|t| t.delta).collect();
            let consistent = if found.is_empty() {
                true
            } else if found.len() != thresholds.len() {
                false
            } else {
                let hi = found.iter().copied().fold(0.0, f64::max);
                let lo = found.iter().copied().fold(f64::INFINITY, f64::min);
                hi <= lo * factor * (1.0 + 1e-12)
            };
            EquivalenceRow {
                epsilon: eps,
                thresholds,
                consistent,
            }
        })
        .collect();
    Ok(EquivalenceReport {
        min_speed,
        max_speed,
        speed_factor: factor,
        rows,
        scans,
    })
}

/// Points on the orbit of `start` after a transient, `spacing` apart.
pub fn orbit_samples(
    field: &VectorFieldSpec,
    start: &DVector<f64>,
    transient: f64,
    count: usize,
    spacing: f64,
    tol: f64,
) -> Result<Vec<DVector<f64>>> {
    let mut x = flow_point(field, start, transient, tol)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(x.clone());
        x = flow_point(field, &x, spacing, tol)?;
    }
    Ok(out)
}

/// `count` points evenly spaced on the circle of `radius` about the origin.
pub fn circle_samples(radius: f64, count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            DVector::from_vec(vec![radius * a.cos(), radius * a.sin()])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation_config(eps: f64, delta: f64) -> ScanConfig {
        ScanConfig {
            samples: vec![DVector::from_vec(vec![1.0, 0.0])],
            horizon: 7.0,
            two_sided: false,
            epsilons: vec![eps],
            deltas: vec![delta],
            delta_ratios: vec![],
            lattice: 40,
            grid: 50,
            budget: 10,
            seed: 1,
            tol: 1e-10,
            lipschitz: 1.05,
        }
    }

    #[test]
    fn concentric_circles_violate() {
        let f = VectorFieldSpec::rotation(3.0);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let y = DVector::from_vec(vec![1.1, 0.0]);
        let check = check_pair(
            &f,
            ScanMode::Rescaled,
            &x,
            &y,
            &Reparametrization::identity(),
            (0.0, 10.0),
            40,
            0.01,
            0.2,
            1.05,
            1e-10,
        )
        .unwrap();
        assert!((check.shadow_sup - 0.1).abs() < 1e-8);
        let f0 = check.failure.unwrap();
        assert!((f0.normal - 0.1).abs() < 1e-8);
    }

    #[test]
    fn orbit_shift_is_not_a_violation() {
        let f = VectorFieldSpec::rotation(3.0);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let s = 0.005;
        let y = flow_point(&f, &x, s, 1e-12).unwrap();
        for mode in ScanMode::ALL {
            let check = check_pair(
                &f,
                mode,
                &x,
                &y,
                &Reparametrization::shift(-s),
                (0.0, 5.0),
                30,
                0.01,
                0.2,
                1.05,
                1e-12,
            )
            .unwrap();
            assert!(check.failure.is_none(), "{mode:?}");
            let id = check_pair(&f, mode, &x, &y, &Reparametrization::identity(), (0.0, 5.0), 30, 0.01, 0.2, 1.05, 1e-12)
                .unwrap();
            assert!(id.failure.is_none(), "{mode:?}");
        }
    }

    #[test]
    fn rotation_scan_finds_replayable_witness() {
        let f = VectorFieldSpec::rotation(3.0);
        let rep = expansiveness_scan(&f, &rotation_config(0.01, 0.2), ScanMode::Rescaled).unwrap();
        let e = &rep.entries[0];
        assert_eq!(e.verdict, Verdict::Violation);
        let w = e.witness.as_ref().unwrap();
        let json = serde_json::to_string(w).unwrap();
        let back: Witness = serde_json::from_str(&json).unwrap();
        assert!(replay_witness(&back).unwrap().reproduced);
    }

    #[test]
    fn eps0_matches_direct_formula() {
        let l = 1.05;
        let r0 = 1.0 / 10.5;
        let r1 = (-2.1f64).exp() * r0 / 3.0;
        assert!((epsilon0_estimate(l, 1.0).unwrap() - r1 / 3.0).abs() < 1e-18);
        assert!(epsilon0_estimate(2.1, 1.0).unwrap() < epsilon0_estimate(l, 1.0).unwrap());
        assert!(matches!(epsilon0_estimate(l, 0.05), Err(FlowError::Horizon(_))));
    }
}
