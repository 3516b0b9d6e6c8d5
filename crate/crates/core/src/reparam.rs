//! Time reparametrizations, rescaled shadowing distances, lattice fitting of
//! reparametrizations, drift bounds and crossing sequences.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::field::{effective_lipschitz, Domain, VectorFieldSpec};
use crate::flowbox::{r0_for, ChartBounds, FlowboxChart};
use crate::integrate::{flow_point, Trajectory};
use crate::linalg;
use crate::poincare::{SectionOptions, SectionalPoincare};

/// Strictly increasing piecewise-linear time change, extended with slope 1
/// beyond its first and last knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reparametrization {
    knots: Vec<(f64, f64)>,
}

impl Reparametrization {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(FlowError::Invalid("a reparametrization needs at least one knot".into()));
        }
        if knots.iter().any(|(t, s)| !t.is_finite() || !s.is_finite()) {
            return Err(FlowError::Invalid("knots must be finite".into()));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1)) {
            return Err(FlowError::Invalid("knots must be strictly increasing in both coordinates".into()));
        }
        Ok(Reparametrization { knots })
    }

    pub fn identity() -> Self {
        Reparametrization { knots: vec![(0.0, 0.0)] }
    }

    /// `theta(t) = t + shift`.
    pub fn shift(shift: f64) -> Self {
        Reparametrization {
            knots: vec![(0.0, shift)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    fn interpolate(pts: &[(f64, f64)], t: f64, forward: bool) -> f64 {
        let key = |p: &(f64, f64)| if forward { p.0 } else { p.1 };
        let val = |p: &(f64, f64)| if forward { p.1 } else { p.0 };
        let first = &pts[0];
        let last = &pts[pts.len() - 1];
        if t <= key(first) {
            return val(first) + (t - key(first));
        }
        if t >= key(last) {
            return val(last) + (t - key(last));
        }
        let i = pts.partition_point(|p| key(p) <= t);
        let (a, b) = (&pts[i - 1], &pts[i]);
        let w = (t - key(a)) / (key(b) - key(a));
        val(a) + w * (val(b) - val(a))
    }

    pub fn eval(&self, t: f64) -> f64 {
        Self::interpolate(&self.knots, t, true)
    }

    pub fn inverse(&self, s: f64) -> f64 {
        Self::interpolate(&self.knots, s, false)
    }
}

/// How distances along the shadowed orbit are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceScale {
    /// Divide by `|X(phi_t(x))|`.
    Rescaled,
    /// Plain Euclidean distance.
    Unscaled,
}

fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn window(field: &VectorFieldSpec, x: &DVector<f64>, a: f64, b: f64, tol: f64) -> Result<Trajectory> {
    Trajectory::new(field, x, a.min(0.0), b.max(0.0), tol, false)
}

/// Sampled distances `d(phi_t(x), phi_theta(t)(y))` over a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowingInstance {
    #[serde(with = "linalg::serde_vec")]
    pub x: DVector<f64>,
    #[serde(with = "linalg::serde_vec")]
    pub y: DVector<f64>,
    pub theta: Reparametrization,
    pub horizon: (f64, f64),
    pub scale: DistanceScale,
    pub grid: Vec<f64>,
    pub distances: Vec<f64>,
}

impl ShadowingInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        field: &VectorFieldSpec,
        x: &DVector<f64>,
        y: &DVector<f64>,
        theta: &Reparametrization,
        horizon: (f64, f64),
        n_samples: usize,
        tol: f64,
        scale: DistanceScale,
    ) -> Result<Self> {
        let (a, b) = horizon;
        if n_samples < 2 || !(b > a) {
            return Err(FlowError::Invalid("need n_samples >= 2 and a nonempty horizon".into()));
        }
        let grid = uniform_grid(a, b, n_samples);
        let tx = window(field, x, a, b, tol)?;
        let ty = window(field, y, theta.eval(a), theta.eval(b), tol)?;
        let sing = field.singularity_tolerance();
        let mut distances = Vec::with_capacity(n_samples);
        for &t in &grid {
            let p = tx.state(t)?;
            let q = ty.state(theta.eval(t))?;
            let d = (&p - &q).norm();
            distances.push(match scale {
                DistanceScale::Unscaled => d,
                DistanceScale::Rescaled => {
                    let speed = field.speed(&p);
                    if speed <= sing {
                        return Err(FlowError::Singularity { time: t, speed });
                    }
                    d / speed
                }
            });
        }
        Ok(ShadowingInstance {
            x: x.clone(),
            y: y.clone(),
            theta: theta.clone(),
            horizon,
            scale,
            grid,
            distances,
        })
    }

    pub fn sup(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }
}

/// `max_t d(phi_t(x), phi_theta(t)(y)) / |X(phi_t(x))|` over a uniform grid.
pub fn rescaled_sup_distance(
    field: &VectorFieldSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    theta: &Reparametrization,
    horizon: (f64, f64),
    n_samples: usize,
    tol: f64,
) -> Result<f64> {
    Ok(ShadowingInstance::evaluate(field, x, y, theta, horizon, n_samples, tol, DistanceScale::Rescaled)?.sup())
}

/// Minimax monotone path through `cost` from `(0, 0)` to the opposite
/// corner with steps `(1,0)`, `(0,1)`, `(1,1)`. Non-finite entries block.
pub fn bottleneck_path(cost: &[Vec<f64>]) -> Option<(f64, Vec<(usize, usize)>)> {
    let m = cost.len();
    if m == 0 {
        return None;
    }
    let n = cost[0].len();
    if n == 0 || cost.iter().any(|r| r.len() != n) {
        return None;
    }
    let mut best = vec![vec![f64::INFINITY; n]; m];
    let mut prev = vec![vec![(usize::MAX, usize::MAX); n]; m];
    for i in 0..m {
        for j in 0..n {
            let c = if cost[i][j].is_finite() { cost[i][j] } else { f64::INFINITY };
            if i == 0 && j == 0 {
                best[0][0] = c;
                continue;
            }
            let mut from = f64::INFINITY;
            let mut arg = (usize::MAX, usize::MAX);
            // fixed preference order keeps the path deterministic on ties
            for (pi, pj) in [(i.wrapping_sub(1), j.wrapping_sub(1)), (i.wrapping_sub(1), j), (i, j.wrapping_sub(1))] {
                if pi < m && pj < n && best[pi][pj] < from {
                    from = best[pi][pj];
                    arg = (pi, pj);
                }
            }
            best[i][j] = c.max(from);
            prev[i][j] = arg;
        }
    }
    let value = best[m - 1][n - 1];
    if !value.is_finite() {
        return None;
    }
    let mut path = vec![(m - 1, n - 1)];
    let mut cur = (m - 1, n - 1);
    while cur != (0, 0) {
        cur = prev[cur.0][cur.1];
        path.push(cur);
    }
    path.reverse();
    Some((value, path))
}

/// Time lattice for fitting: `rows` times in `t_range` against `cols` times
/// in `s_range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub t_range: (f64, f64),
    pub s_range: (f64, f64),
    pub rows: usize,
    pub cols: usize,
}

impl Lattice {
    pub fn square(horizon: (f64, f64), size: usize) -> Self {
        Lattice {
            t_range: horizon,
            s_range: horizon,
            rows: size,
            cols: size,
        }
    }

    pub fn t_grid(&self) -> Vec<f64> {
        uniform_grid(self.t_range.0, self.t_range.1, self.rows)
    }

    pub fn s_grid(&self) -> Vec<f64> {
        uniform_grid(self.s_range.0, self.s_range.1, self.cols)
    }
}

/// Distances between every lattice pair; `+inf` where `phi_t(x)` is singular
/// under the rescaled scale.
pub fn lattice_costs(
    field: &VectorFieldSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    lattice: &Lattice,
    tol: f64,
    scale: DistanceScale,
) -> Result<Vec<Vec<f64>>> {
    let tg = lattice.t_grid();
    let sg = lattice.s_grid();
    let tx = window(field, x, lattice.t_range.0, lattice.t_range.1, tol)?;
    let ty = window(field, y, lattice.s_range.0, lattice.s_range.1, tol)?;
    let xs: Vec<DVector<f64>> = tg.iter().map(|t| tx.state(*t)).collect::<Result<_>>()?;
    let ys: Vec<DVector<f64>> = sg.iter().map(|s| ty.state(*s)).collect::<Result<_>>()?;
    let sing = field.singularity_tolerance();
    Ok(xs
        .iter()
        .map(|p| {
            let speed = field.speed(p);
            ys.iter()
                .map(|q| {
                    let d = (p - q).norm();
                    match scale {
                        DistanceScale::Unscaled => d,
                        DistanceScale::Rescaled if speed <= sing => f64::INFINITY,
                        DistanceScale::Rescaled => d / speed,
                    }
                })
                .collect()
        })
        .collect())
}

/// Reparametrization through the lattice nodes of a path: nodes advancing
/// in both indices are kept, and the final node always is.
pub fn theta_from_path(path: &[(usize, usize)], t_grid: &[f64], s_grid: &[f64]) -> Reparametrization {
    let mut kept: Vec<(usize, usize)> = vec![path[0]];
    for &(i, j) in &path[1..] {
        let (li, lj) = *kept.last().expect("nonempty");
        if i > li && j > lj {
            kept.push((i, j));
        }
    }
    let last = *path.last().expect("nonempty");
    if *kept.last().expect("nonempty") != last {
        if kept.len() > 1 {
            kept.pop();
        }
        let (li, lj) = *kept.last().expect("nonempty");
        if last.0 > li && last.1 > lj {
            kept.push(last);
        }
    }
    Reparametrization {
        knots: kept.iter().map(|&(i, j)| (t_grid[i], s_grid[j])).collect(),
    }
}

/// Minimax lattice fit of `theta`; returns it with the achieved bottleneck.
pub fn fit_reparametrization(
    field: &VectorFieldSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    lattice: &Lattice,
    tol: f64,
    scale: DistanceScale,
) -> Result<(Reparametrization, f64)> {
    if lattice.rows < 2 || lattice.cols < 2 {
        return Err(FlowError::Invalid("lattice needs at least 2 x 2 nodes".into()));
    }
    let cost = lattice_costs(field, x, y, lattice, tol, scale)?;
    let (value, path) = bottleneck_path(&cost).ok_or(FlowError::NoPath)?;
    Ok((theta_from_path(&path, &lattice.t_grid(), &lattice.s_grid()), value))
}

/// `theta(t) = t - tau(t)`, where `phi_t(y) = phi_tau(phi_t(x) + u)` in the
/// flowbox at `phi_t(x)`; `phi_theta(t)(y)` then lies on the normal section.
pub fn section_reparametrization(
    field: &VectorFieldSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    times: &[f64],
    lipschitz: f64,
    tol: f64,
    bounds: ChartBounds,
) -> Result<Reparametrization> {
    let (a, b) = (times[0], times[times.len() - 1]);
    let tx = window(field, x, a, b, tol)?;
    let ty = window(field, y, a, b, tol)?;
    let mut knots = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let chart = FlowboxChart::new(field, &tx.state(t)?, lipschitz, tol)?.with_bounds(bounds);
        let (_, tau) = chart.invert(field, &ty.state(t)?).map_err(|e| FlowError::Crossing {
            k: k as i64,
            reason: e.to_string(),
        })?;
        knots.push((t, t - tau));
    }
    Reparametrization::new(knots)
}

/// `delta(eps) = min{ r0 / (6 e^{2 L r0}), c / (18 e^{2 L r0}), eps r0 / (12 (3 + 18 e^{2 L r0})) }`.
pub fn delta_for_epsilon(lipschitz: f64, c: f64, epsilon: f64) -> f64 {
    let l = effective_lipschitz(lipschitz);
    let r0 = r0_for(lipschitz);
    let g = (2.0 * l * r0).exp();
    (r0 / (6.0 * g))
        .min(c / (18.0 * g))
        .min(epsilon * r0 / (12.0 * (3.0 + 18.0 * g)))
}

/// Largest sampled `c` with `(1/2)|X(z)| < |X(z')| < 2|X(z)|` whenever
/// `d(z, z') < c |X(z)|`, halved. Rescaled distances are probed up to
/// `1 / L_eff`.
pub fn estimate_speed_ratio_constant(
    field: &VectorFieldSpec,
    region: &Domain,
    lipschitz: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    region.validate()?;
    let probe = 1.0 / effective_lipschitz(lipschitz);
    let sing = field.singularity_tolerance();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = field.dim();
    let mut first_violation = probe;
    for _ in 0..samples {
        let z = region.sample(&mut rng);
        let sz = field.speed(&z);
        if sz <= sing {
            continue;
        }
        let dir = linalg::unit(&DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)));
        let rho: f64 = rng.gen_range(0.0..probe);
        let zp = &z + dir * (rho * sz);
        if !field.domain.contains(zp.as_slice()) {
            continue;
        }
        let ratio = field.speed(&zp) / sz;
        if !(ratio > 0.5 && ratio < 2.0) {
            first_violation = first_violation.min(rho);
        }
    }
    Ok(0.5 * first_violation)
}

/// Subdivision `0 = T_0 < .. < T_n = T` into equal pieces of length in
/// `[r0/2, r0)` when `T >= r0`; a single piece otherwise.
pub fn subdivide(total: f64, r0: f64) -> Vec<f64> {
    let n = if total >= r0 { (total / r0).floor() as usize + 1 } else { 1 };
    (0..=n).map(|i| total * i as f64 / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceDrift {
    pub start: f64,
    pub end: f64,
    pub drift: f64,
    pub bound_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub delta_used: f64,
    pub c_estimate: f64,
    pub measured_sup: f64,
    pub horizon: f64,
    pub epsilon: f64,
    pub drift: f64,
    pub bound_ok: bool,
    pub pieces: Vec<PieceDrift>,
    pub surjectivity_ok: bool,
    /// The horizon is finite; slope bounds say nothing past it.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub lipschitz: f64,
    pub c: f64,
    pub tol: f64,
    pub samples: usize,
}

/// Checks `|theta(T) - theta(0) - T| <= eps T` on `[0, T]` and on each piece
/// of the subdivision, after confirming the shadowing hypothesis at level
/// `delta(eps)`.
pub fn drift_bounds_check(
    field: &VectorFieldSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    theta: &Reparametrization,
    horizon: f64,
    epsilon: f64,
    params: &DriftParams,
) -> Result<DriftReport> {
    if !(horizon > 0.0) || !(epsilon > 0.0) {
        return Err(FlowError::Invalid("horizon and epsilon must be positive".into()));
    }
    let delta = delta_for_epsilon(params.lipschitz, params.c, epsilon);
    let measured = rescaled_sup_distance(field, x, y, theta, (0.0, horizon), params.samples, params.tol)?;
    if measured > delta {
        return Err(FlowError::Hypothesis { measured, delta });
    }
    let r0 = r0_for(params.lipschitz);
    let cuts = subdivide(horizon, r0);
    let pieces: Vec<PieceDrift> = cuts
        .windows(2)
        .map(|w| {
            let len = w[1] - w[0];
            let drift = (theta.eval(w[1]) - theta.eval(w[0]) - len).abs();
            PieceDrift {
                start: w[0],
                end: w[1],
                drift,
                bound_ok: drift <= epsilon * len,
            }
        })
        .collect();
    let drift = (theta.eval(horizon) - theta.eval(0.0) - horizon).abs();
    let bound_ok = drift <= epsilon * horizon && pieces.iter().all(|p| p.bound_ok);
    let surjectivity_ok = theta.eval(horizon) - theta.eval(0.0) >= (1.0 - epsilon) * horizon;
    Ok(DriftReport {
        delta_used: delta,
        c_estimate: params.c,
        measured_sup: measured,
        horizon,
        epsilon,
        drift,
        bound_ok,
        pieces,
        surjectivity_ok,
        truncated: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTrial {
    pub trial: usize,
    pub delta: f64,
    pub drift: f64,
    pub bound_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTrialsReport {
    pub epsilon: f64,
    pub horizon: f64,
    pub trials: Vec<DriftTrial>,
    /// Candidates discarded because the sampled pair did not meet the
    /// shadowing hypothesis.
    pub rejected: usize,
    pub violations: usize,
}

/// Random shadowing pairs `y = x + (delta/2) |X(x)| n` with `n` a unit normal,
/// `theta` fitted through the normal sections along the orbit of `x`.
#[allow(clippy::too_many_arguments)]
pub fn drift_trials(
    field: &VectorFieldSpec,
    region: &Domain,
    params: &DriftParams,
    epsilon: f64,
    horizon: f64,
    trials: usize,
    knots: usize,
    seed: u64,
) -> Result<DriftTrialsReport> {
    let delta = delta_for_epsilon(params.lipschitz, params.c, epsilon);
    let attempts = trials * 20;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<(DVector<f64>, DVector<f64>)> = (0..attempts)
        .map(|_| {
            let x = region.sample(&mut rng);
            let raw = DVector::from_fn(field.dim(), |_, _| rng.gen_range(-1.0..1.0));
            (x, raw)
        })
        .collect();
    let times = uniform_grid(0.0, horizon, knots.max(2));
    let outcomes: Vec<Option<DriftTrial>> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, (x, raw))| {
            let value = field.value(x);
            let speed = value.norm();
            if speed <= field.singularity_tolerance() {
                return None;
            }
            let e = &value / speed;
            let n = linalg::unit(&(raw - &e * e.dot(raw)));
            let y = x + n * (0.5 * delta * speed);
            let theta =
                section_reparametrization(field, x, &y, &times, params.lipschitz, params.tol, ChartBounds::Enforced)
                    .ok()?;
            let report = drift_bounds_check(field, x, &y, &theta, horizon, epsilon, params).ok()?;
            Some(DriftTrial {
                trial: i,
                delta,
                drift: report.drift,
                bound_ok: report.bound_ok && report.surjectivity_ok,
            })
        })
        .collect();
    let mut accepted = Vec::with_capacity(trials);
    let mut rejected = 0;
    for o in outcomes {
        if accepted.len() == trials {
            break;
        }
        match o {
            Some(t) => accepted.push(t),
            None => rejected += 1,
        }
    }
    if accepted.len() < trials {
        return Err(FlowError::Precondition(format!(
            "only {} of {trials} shadowing pairs met the hypothesis",
            accepted.len()
        )));
    }
    let violations = accepted.iter().filter(|t| !t.bound_ok).count();
    Ok(DriftTrialsReport {
        epsilon,
        horizon,
        trials: accepted,
        rejected,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnTimeReport {
    pub trials: usize,
    pub hypothesis_met: usize,
    pub violations: usize,
    /// Largest observed `|t| / (3 delta)` among trials meeting the hypothesis.
    pub worst_ratio: f64,
}

/// Randomized check that `d(x, phi_t(x)) <= delta |X(x)|` with
/// `0 < delta <= r0/3` and `|t| <= r0` forces `|t| <= 3 delta`.
pub fn return_time_trials(
    field: &VectorFieldSpec,
    region: &Domain,
    lipschitz: f64,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<ReturnTimeReport> {
    let r0 = r0_for(lipschitz);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(DVector<f64>, f64, f64)> = (0..trials)
        .map(|_| (region.sample(&mut rng), rng.gen_range(-r0..=r0), rng.gen_range(0.0..1.0)))
        .collect();
    let results: Vec<Option<f64>> = draws
        .par_iter()
        .map(|(x, t, u)| {
            let speed = field.speed(x);
            if speed <= field.singularity_tolerance() {
                return Ok(None);
            }
            let y = flow_point(field, x, *t, tol)?;
            let needed = (&y - x).norm() / speed;
            if needed > r0 / 3.0 || needed == 0.0 && *t != 0.0 {
                return Ok(None);
            }
            // any delta in [needed, r0/3] meets the hypothesis
            let delta = needed + u * (r0 / 3.0 - needed);
            if delta <= 0.0 {
                return Ok(None);
            }
            Ok(Some(t.abs() / (3.0 * delta)))
        })
        .collect::<Result<_>>()?;
    let met: Vec<f64> = results.into_iter().flatten().collect();
    Ok(ReturnTimeReport {
        trials,
        hypothesis_met: met.len(),
        violations: met.iter().filter(|r| **r > 1.0).count(),
        worst_ratio: met.iter().copied().fold(0.0, f64::max),
    })
}

/// Arc version: if `phi_[0,t](x)` stays within `delta |X(x)|` of `x` then
/// `|t| <= 3 delta`. Arcs are sampled at `arc_samples` points, and `t` is
/// drawn from `[-2 r0, 2 r0]` so that long arcs are exercised too.
pub fn arc_return_time_trials(
    field: &VectorFieldSpec,
    region: &Domain,
    lipschitz: f64,
    trials: usize,
    arc_samples: usize,
    tol: f64,
    seed: u64,
) -> Result<ReturnTimeReport> {
    let r0 = r0_for(lipschitz);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(DVector<f64>, f64)> = (0..trials)
        .map(|_| (region.sample(&mut rng), rng.gen_range(-2.0 * r0..=2.0 * r0)))
        .collect();
    let results: Vec<Option<f64>> = draws
        .par_iter()
        .map(|(x, t)| {
            let speed = field.speed(x);
            if speed <= field.singularity_tolerance() || *t == 0.0 {
                return Ok(None);
            }
            let tr = Trajectory::new(field, x, t.min(0.0), t.max(0.0), tol, false)?;
            let mut reach: f64 = 0.0;
            for s in uniform_grid(0.0, *t, arc_samples.max(2)) {
                reach = reach.max((tr.state(s)? - x).norm() / speed);
            }
            if reach > r0 / 3.0 {
                return Ok(None);
            }
            Ok(Some(t.abs() / (3.0 * reach)))
        })
        .collect::<Result<_>>()?;
    let met: Vec<f64> = results.into_iter().flatten().collect();
    Ok(ReturnTimeReport {
        trials,
        hypothesis_met: met.len(),
        violations: met.iter().filter(|r| **r > 1.0).count(),
        worst_ratio: met.iter().copied().fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingPoint {
    pub k: i64,
    pub crossing_time: f64,
    #[serde(with = "linalg::serde_vec")]
    pub normal: DVector<f64>,
    /// Time component of the flowbox preimage, `theta(kT) - theta(T_k)`.
    pub offset: f64,
    pub on_section: bool,
    pub normal_ok: bool,
    pub time_ok: bool,
    /// `None` for the last index, which has no successor.
    pub section_defect: Option<f64>,
    pub section_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingParams {
    pub lipschitz: f64,
    pub delta: f64,
    pub tol: f64,
    pub bounds: ChartBounds,
}

/// Crossing times `T_k` and normal displacements `u_k` of `y`'s orbit with
/// the normal sections at `phi_{kT}(x)`.
pub fn crossing_sequence(
    field: &VectorFieldSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    theta: &Reparametrization,
    period: f64,
    k_range: (i64, i64),
    params: &CrossingParams,
) -> Result<Vec<CrossingPoint>> {
    let (k0, k1) = k_range;
    if k1 < k0 {
        return Err(FlowError::Invalid("empty k range".into()));
    }
    let mut out: Vec<CrossingPoint> = Vec::new();
    let mut bases = Vec::new();
    for k in k0..=k1 {
        let crossing_err = |e: FlowError| FlowError::Crossing {
            k,
            reason: e.to_string(),
        };
        let kt = k as f64 * period;
        let base = flow_point(field, x, kt, params.tol).map_err(crossing_err)?;
        let chart = FlowboxChart::new(field, &base, params.lipschitz, params.tol)
            .map_err(crossing_err)?
            .with_bounds(params.bounds);
        let z = flow_point(field, y, theta.eval(kt), params.tol).map_err(crossing_err)?;
        let (u, offset) = chart.invert(field, &z).map_err(crossing_err)?;
        let target = theta.eval(kt) - offset;
        let crossing_time = theta.inverse(target);
        let on_sec = flow_point(field, y, theta.eval(crossing_time), params.tol).map_err(crossing_err)?;
        let along = chart.flow_dir.dot(&(on_sec - &base)).abs();
        out.push(CrossingPoint {
            k,
            crossing_time,
            normal: u.clone(),
            offset,
            on_section: along <= 1e-6 * chart.speed,
            normal_ok: u.norm() <= 3.0 * params.delta * chart.speed,
            time_ok: offset.abs() <= 3.0 * params.delta,
            section_defect: None,
            section_ok: true,
        });
        bases.push(base);
    }
    let options = SectionOptions {
        lipschitz: params.lipschitz,
        tol: params.tol,
        bounds: params.bounds,
        derivative: Default::default(),
    };
    for i in 0..out.len().saturating_sub(1) {
        let k = out[i].k;
        let sec = SectionalPoincare::new(field, &bases[i], period, options).map_err(|e| FlowError::Crossing {
            k,
            reason: e.to_string(),
        })?;
        let image = sec.apply(&out[i].normal).map_err(|e| FlowError::Crossing {
            k,
            reason: e.to_string(),
        })?;
        let defect = (image - &out[i + 1].normal).norm();
        out[i].section_defect = Some(defect);
        out[i].section_ok = defect <= 1e-6 * sec.chart.speed;
    }
    Ok(out)
}
