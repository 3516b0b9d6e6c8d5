//! Dominated splittings of the linear Poincaré flow along sampled orbits,
//! finite-horizon domination checks, cocycles and rebalancing sequences.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::field::{Domain, VectorFieldSpec};
use crate::integrate::{flow, OrbitSegment, Trajectory};
use crate::linalg;

/// Singular-value ratio below which no spectral gap is accepted.
pub const GAP_THRESHOLD: f64 = 1.05;
/// Allowed distance of the unit flow direction from `F` before induction fails.
pub const FLOW_IN_F_TOL: f64 = 1e-6;
const RANK_TOL: f64 = 1e-8;
const START_SEED: u64 = 0x5eed;

fn normal_projector(field: &VectorFieldSpec, x: &DVector<f64>) -> DMatrix<f64> {
    let e = linalg::unit(&field.value(x));
    DMatrix::identity(x.len(), x.len()) - &e * e.transpose()
}

/// Node states with the variational transition between consecutive nodes.
struct Chain {
    states: Vec<DVector<f64>>,
    transitions: Vec<DMatrix<f64>>,
    /// Index of the first node of the original orbit.
    offset: usize,
}

fn orbit_transitions(orbit: &OrbitSegment) -> Result<&Vec<DMatrix<f64>>> {
    if orbit.len() < 2 {
        return Err(FlowError::Invalid("splitting needs an orbit with at least two nodes".into()));
    }
    orbit
        .transitions
        .as_ref()
        .ok_or_else(|| FlowError::Invalid("orbit segment has no variational data".into()))
}

/// Extends the orbit by up to `burn_in` blocks on each side; the extension is
/// halved until it stays in the domain.
fn extended_chain(field: &VectorFieldSpec, orbit: &OrbitSegment, burn_in: usize, tol: f64) -> Result<Chain> {
    let transitions = orbit_transitions(orbit)?;
    let n = orbit.len();
    let pre_step = orbit.times[1] - orbit.times[0];
    let post_step = orbit.times[n - 1] - orbit.times[n - 2];
    let side = |base: &DVector<f64>, step: f64, backward: bool| -> Result<OrbitSegment> {
        let mut count = burn_in;
        loop {
            let times: Vec<f64> = if backward {
                (0..=count).map(|k| -step * (count - k) as f64).collect()
            } else {
                (0..=count).map(|k| step * k as f64).collect()
            };
            match OrbitSegment::compute(field, base, &times, tol, true) {
                Ok(seg) => return Ok(seg),
                Err(FlowError::Escape { .. }) if count > 0 => count /= 2,
                Err(e) => return Err(e),
            }
        }
    };
    let pre = if burn_in > 0 { Some(side(&orbit.states[0], pre_step, true)?) } else { None };
    let post = if burn_in > 0 { Some(side(&orbit.states[n - 1], post_step, false)?) } else { None };

    let mut states = Vec::new();
    let mut trans = Vec::new();
    let mut offset = 0;
    if let Some(p) = &pre {
        states.extend(p.states[..p.len() - 1].iter().cloned());
        trans.extend(p.transitions.as_ref().expect("variational").iter().cloned());
        offset = p.len() - 1;
    }
    states.extend(orbit.states.iter().cloned());
    trans.extend(transitions.iter().cloned());
    if let Some(p) = &post {
        states.extend(p.states[1..].iter().cloned());
        trans.extend(p.transitions.as_ref().expect("variational").iter().cloned());
    }
    Ok(Chain {
        states,
        transitions: trans,
        offset,
    })
}

fn random_start(rows: usize, cols: usize, project: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let raw = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
    match project {
        Some(p) => linalg::orthonormal_columns(&(p * raw)),
        None => linalg::orthonormal_columns(&raw),
    }
}

/// Subspaces carried forward by `maps`, re-orthonormalized at each node.
fn sweep_forward(maps: &[DMatrix<f64>], start: DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let mut out = vec![start];
    for m in maps {
        let next = linalg::orthonormal_columns(&(m * out.last().expect("nonempty")));
        out.push(next);
    }
    out
}

/// Subspaces carried backward: `inverse_maps[i]` sends node `i + 1` to node `i`.
fn sweep_backward(inverse_maps: &[DMatrix<f64>], end: DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let mut out = vec![end];
    for m in inverse_maps.iter().rev() {
        let next = linalg::orthonormal_columns(&(m * out.last().expect("nonempty")));
        out.push(next);
    }
    out.reverse();
    out
}

fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| FlowError::Invalid("variational transition is not invertible".into()))
}

/// Lower bound for the singular-value gap across the orbit, from per-block
/// mininorms on `unstable` and norms on `stable`.
fn gap_ratio(maps: &[DMatrix<f64>], stable: &[DMatrix<f64>], unstable: &[DMatrix<f64>]) -> f64 {
    let log_gap: f64 = maps
        .iter()
        .enumerate()
        .map(|(i, m)| linalg::mininorm(&(m * &unstable[i])).ln() - linalg::op_norm(&(m * &stable[i])).ln())
        .sum();
    log_gap.exp()
}

/// `Delta^s` and `Delta^u` bases inside the normal spaces along an orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalSplitting {
    pub orbit: OrbitSegment,
    /// Orthonormal columns spanning `Delta^s` at each node.
    #[serde(with = "linalg::serde_mats")]
    pub stable: Vec<DMatrix<f64>>,
    #[serde(with = "linalg::serde_mats")]
    pub unstable: Vec<DMatrix<f64>>,
    /// Lower bound for `m(psi|Delta^u) / |psi|Delta^s|` over the whole orbit.
    pub gap_ratio: f64,
}

impl NormalSplitting {
    pub fn dim_s(&self) -> usize {
        self.stable[0].ncols()
    }

    pub fn dim_u(&self) -> usize {
        self.unstable[0].ncols()
    }

    /// Node-to-node `psi` maps in ambient coordinates.
    pub fn block_maps(&self, field: &VectorFieldSpec) -> Result<Vec<DMatrix<f64>>> {
        let transitions = orbit_transitions(&self.orbit)?;
        Ok(transitions
            .iter()
            .enumerate()
            .map(|(i, phi)| normal_projector(field, &self.orbit.states[i + 1]) * phi)
            .collect())
    }

    /// Per block `(|psi|Delta^s|, m(psi|Delta^u))`.
    pub fn block_norms(&self, field: &VectorFieldSpec) -> Result<Vec<(f64, f64)>> {
        Ok(self
            .block_maps(field)?
            .iter()
            .enumerate()
            .map(|(i, m)| (linalg::op_norm(&(m * &self.stable[i])), linalg::mininorm(&(m * &self.unstable[i]))))
            .collect())
    }

    /// Largest principal-angle sine between `psi` images of the node
    /// subspaces and the subspaces at the next node.
    pub fn invariance_defect(&self, field: &VectorFieldSpec) -> Result<f64> {
        let maps = self.block_maps(field)?;
        Ok(maps
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let ds = linalg::subspace_distance(&(m * &self.stable[i]), &self.stable[i + 1]);
                let du = linalg::subspace_distance(&(m * &self.unstable[i]), &self.unstable[i + 1]);
                ds.max(du)
            })
            .fold(0.0, f64::max))
    }

    /// Smallest principal angle (radians) between `Delta^s` and `Delta^u`
    /// over the nodes.
    pub fn min_angle(&self) -> f64 {
        self.stable
            .iter()
            .zip(&self.unstable)
            .map(|(s, u)| principal_angle(s, u))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Smallest principal angle between two spans given by orthonormal columns.
pub fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let cos = linalg::op_norm(&(a.transpose() * b)).min(1.0);
    cos.acos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingOptions {
    pub dim_s: usize,
    /// Blocks integrated before and after the orbit so that the end nodes
    /// see converged subspaces.
    pub burn_in: usize,
    pub tol: f64,
}

impl SplittingOptions {
    pub fn new(dim_s: usize, tol: f64) -> Self {
        SplittingOptions { dim_s, burn_in: 20, tol }
    }
}

/// Power iteration of `psi` over the orbit blocks: forward for `Delta^u`,
/// backward for `Delta^s`.
pub fn estimate_normal_splitting(
    field: &VectorFieldSpec,
    orbit: &OrbitSegment,
    options: &SplittingOptions,
) -> Result<NormalSplitting> {
    let d = field.dim();
    if d < 3 {
        return Err(FlowError::NoDomination { ratio: 1.0 });
    }
    if options.dim_s == 0 || options.dim_s > d - 2 {
        return Err(FlowError::Invalid(format!("stable dimension must lie in [1, {}]", d - 2)));
    }
    if let Some(i) = orbit.speeds.iter().position(|s| *s <= field.singularity_tolerance()) {
        return Err(FlowError::Singularity {
            time: orbit.times[i],
            speed: orbit.speeds[i],
        });
    }
    let chain = extended_chain(field, orbit, options.burn_in, options.tol)?;
    let projectors: Vec<DMatrix<f64>> = chain.states.iter().map(|x| normal_projector(field, x)).collect();
    let forward: Vec<DMatrix<f64>> =
        chain.transitions.iter().enumerate().map(|(i, phi)| &projectors[i + 1] * phi).collect();
    let backward: Vec<DMatrix<f64>> = chain
        .transitions
        .iter()
        .enumerate()
        .map(|(i, phi)| Ok(&projectors[i] * invert(phi)?))
        .collect::<Result<_>>()?;
    let dim_u = d - 1 - options.dim_s;
    let last = chain.states.len() - 1;
    let unstable = sweep_forward(&forward, random_start(d, dim_u, Some(&projectors[0])));
    let stable = sweep_backward(&backward, random_start(d, options.dim_s, Some(&projectors[last])));
    let range = chain.offset..chain.offset + orbit.len();
    finish_splitting(
        orbit,
        stable[range.clone()].to_vec(),
        unstable[range.clone()].to_vec(),
        &forward[chain.offset..chain.offset + orbit.len() - 1],
    )
}

fn finish_splitting(
    orbit: &OrbitSegment,
    stable: Vec<DMatrix<f64>>,
    unstable: Vec<DMatrix<f64>>,
    maps: &[DMatrix<f64>],
) -> Result<NormalSplitting> {
    let ratio = gap_ratio(maps, &stable, &unstable);
    if !(ratio >= GAP_THRESHOLD) {
        return Err(FlowError::NoDomination { ratio });
    }
    Ok(NormalSplitting {
        orbit: orbit.clone(),
        stable,
        unstable,
        gap_ratio: ratio,
    })
}

/// Re-runs the sweeps seeded with `seed`'s first `Delta^u` and last
/// `Delta^s`, without burn-in.
pub fn refine_normal_splitting(field: &VectorFieldSpec, seed: &NormalSplitting) -> Result<NormalSplitting> {
    let maps = seed.block_maps(field)?;
    let transitions = orbit_transitions(&seed.orbit)?;
    let backward: Vec<DMatrix<f64>> = transitions
        .iter()
        .enumerate()
        .map(|(i, phi)| Ok(normal_projector(field, &seed.orbit.states[i]) * invert(phi)?))
        .collect::<Result<_>>()?;
    let unstable = sweep_forward(&maps, seed.unstable[0].clone());
    let stable = sweep_backward(&backward, seed.stable[seed.stable.len() - 1].clone());
    finish_splitting(&seed.orbit, stable, unstable, &maps)
}

/// `E` and `F` bases spanning the tangent space along an orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentSplitting {
    pub orbit: OrbitSegment,
    #[serde(with = "linalg::serde_mats")]
    pub e: Vec<DMatrix<f64>>,
    #[serde(with = "linalg::serde_mats")]
    pub f: Vec<DMatrix<f64>>,
}

/// Power iteration of the tangent flow: forward for `F`, backward for `E`.
pub fn estimate_tangent_splitting(
    field: &VectorFieldSpec,
    orbit: &OrbitSegment,
    dim_e: usize,
    burn_in: usize,
    tol: f64,
) -> Result<TangentSplitting> {
    let d = field.dim();
    if dim_e == 0 || dim_e >= d {
        return Err(FlowError::Invalid(format!("dim E must lie in [1, {}]", d - 1)));
    }
    let chain = extended_chain(field, orbit, burn_in, tol)?;
    let inverses: Vec<DMatrix<f64>> = chain.transitions.iter().map(invert).collect::<Result<_>>()?;
    let f = sweep_forward(&chain.transitions, random_start(d, d - dim_e, None));
    let e = sweep_backward(&inverses, random_start(d, dim_e, None));
    let range = chain.offset..chain.offset + orbit.len();
    Ok(TangentSplitting {
        orbit: orbit.clone(),
        e: e[range.clone()].to_vec(),
        f: f[range].to_vec(),
    })
}

/// `Delta^s = pi(E)`, `Delta^u = N cap F`, with the flow-speed cocycle as `h^u`.
pub fn induce_from_tangent_splitting(
    field: &VectorFieldSpec,
    tangent: &TangentSplitting,
) -> Result<(NormalSplitting, CocycleSpec)> {
    let orbit = &tangent.orbit;
    let mut stable = Vec::with_capacity(orbit.len());
    let mut unstable = Vec::with_capacity(orbit.len());
    for (node, x) in orbit.states.iter().enumerate() {
        let value = field.value(x);
        if value.norm() <= field.singularity_tolerance() {
            return Err(FlowError::Singularity {
                time: orbit.times[node],
                speed: value.norm(),
            });
        }
        let dir = linalg::unit(&value);
        let fq = linalg::orthonormal_columns(&tangent.f[node]);
        let distance = (&dir - &fq * (fq.transpose() * &dir)).norm();
        if distance > FLOW_IN_F_TOL {
            return Err(FlowError::FlowDirection { node, distance });
        }
        let proj = DMatrix::identity(x.len(), x.len()) - &dir * dir.transpose();
        let e_cols = linalg::matrix_columns(&(&proj * &tangent.e[node]));
        let s = linalg::gram_schmidt(&e_cols, &[], RANK_TOL);
        if s.len() != tangent.e[node].ncols() {
            return Err(FlowError::DegenerateProjection { node });
        }
        // the flow direction goes first so that it absorbs its share of F
        let f_cols = linalg::matrix_columns(&fq);
        let u = linalg::gram_schmidt(&f_cols, &[dir], RANK_TOL);
        if u.len() + 1 != fq.ncols() {
            return Err(FlowError::DegenerateProjection { node });
        }
        stable.push(linalg::columns_to_matrix(&s, x.len()));
        unstable.push(linalg::columns_to_matrix(&u, x.len()));
    }
    let transitions = orbit_transitions(orbit)?;
    let maps: Vec<DMatrix<f64>> = transitions
        .iter()
        .enumerate()
        .map(|(i, phi)| normal_projector(field, &orbit.states[i + 1]) * phi)
        .collect();
    let ratio = gap_ratio(&maps, &stable, &unstable);
    Ok((
        NormalSplitting {
            orbit: orbit.clone(),
            stable,
            unstable,
            gap_ratio: ratio,
        },
        CocycleSpec::FlowSpeed,
    ))
}

/// Positive multiplicative cocycles over the (extended) flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CocycleSpec {
    Trivial,
    /// `|X(phi_t(x))| / |X(x)|`.
    FlowSpeed,
    /// `|Phi_t(e)|` while the orbit stays in `region`, 1 outside.
    Pragmatical { region: Domain },
    /// Product of pragmatical cocycles over disjoint regions.
    Product { regions: Vec<Domain> },
}

impl CocycleSpec {
    fn regions(&self) -> Vec<&Domain> {
        match self {
            CocycleSpec::Pragmatical { region } => vec![region],
            CocycleSpec::Product { regions } => regions.iter().collect(),
            _ => Vec::new(),
        }
    }

    /// Regions must be pairwise disjoint and isolate exactly one singularity.
    pub fn validate(&self, field: &VectorFieldSpec) -> Result<()> {
        let regions = self.regions();
        let sings = field.singularities();
        for (i, r) in regions.iter().enumerate() {
            r.validate()?;
            if r.dim() != field.dim() {
                return Err(FlowError::Invalid("cocycle region has the wrong dimension".into()));
            }
            let inside = sings.iter().filter(|p| r.contains(p.as_slice())).count();
            if inside != 1 {
                return Err(FlowError::Invalid(format!(
                    "cocycle region {i} contains {inside} singularities, expected exactly one"
                )));
            }
            for (j, other) in regions.iter().enumerate().skip(i + 1) {
                if r.intersects(other) {
                    return Err(FlowError::Invalid(format!("cocycle regions {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }
}

/// Negative inside the box, positive outside.
fn box_gauge(region: &Domain, z: &DVector<f64>) -> f64 {
    (0..z.len())
        .map(|k| {
            let c = 0.5 * (region.lower[k] + region.upper[k]);
            let h = 0.5 * (region.upper[k] - region.lower[k]);
            (z[k] - c).abs() - h
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

const CROSSING_BAND: f64 = 1e-9;

/// Times in `[0, t]` (ordered from 0) at which the orbit crosses the region
/// boundary, with the inside flag at time 0.
///
/// The gauge is 1-Lipschitz, so an interval whose end values sum to more
/// than the distance the orbit can travel cannot hide a pair of crossings;
/// other intervals are bisected.
fn crossings(field: &VectorFieldSpec, traj: &Trajectory, region: &Domain, t: f64) -> Result<(bool, Vec<f64>)> {
    let n = ((t.abs() * 200.0).ceil() as usize).max(64);
    let scale = 1.0 + region.diameter();
    let sample = |tau: f64| -> Result<(f64, f64)> {
        let z = traj.state(tau)?;
        Ok((box_gauge(region, &z), field.speed(&z)))
    };
    let times: Vec<f64> = (0..=n).map(|i| t * i as f64 / n as f64).collect();
    let values: Vec<(f64, f64)> = times.iter().map(|&tau| sample(tau)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for i in 0..n {
        refine(&sample, (times[i], values[i]), (times[i + 1], values[i + 1]), scale, 0, &mut out)?;
    }
    Ok((values[0].0 < 0.0, out))
}

type GaugeSample = (f64, (f64, f64));

fn refine(
    sample: &dyn Fn(f64) -> Result<(f64, f64)>,
    (a, (ga, va)): GaugeSample,
    (b, (gb, vb)): GaugeSample,
    scale: f64,
    depth: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    if (ga < 0.0) != (gb < 0.0) {
        let (mut lo, mut hi) = (a, b);
        let inside_lo = ga < 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if (sample(mid)?.0 < 0.0) == inside_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(0.5 * (lo + hi));
        return Ok(());
    }
    // twice the end speeds bounds the speed over a short interval
    let reach = 2.0 * va.max(vb) * (b - a).abs();
    if ga.abs() + gb.abs() > reach {
        return Ok(());
    }
    if depth >= 40 || (b - a).abs() < 1e-13 * (1.0 + a.abs()) {
        if ga.abs().min(gb.abs()) < CROSSING_BAND * scale {
            return Err(FlowError::CrossingDetection { time: a });
        }
        return Ok(());
    }
    let mid = 0.5 * (a + b);
    let m = (mid, sample(mid)?);
    refine(sample, (a, (ga, va)), m, scale, depth + 1, out)?;
    refine(sample, m, (b, (gb, vb)), scale, depth + 1, out)
}

/// Cocycle value `h(x, e, t)`.
pub fn evaluate_cocycle(
    field: &VectorFieldSpec,
    spec: &CocycleSpec,
    x: &DVector<f64>,
    e: &DVector<f64>,
    t: f64,
    tol: f64,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    match spec {
        CocycleSpec::Trivial => Ok(1.0),
        CocycleSpec::FlowSpeed => {
            let speed = field.speed(x);
            if speed <= field.singularity_tolerance() {
                return Err(FlowError::Singularity { time: 0.0, speed });
            }
            let (y, _) = flow(field, x, t, tol)?;
            Ok(field.speed(&y) / speed)
        }
        CocycleSpec::Pragmatical { .. } | CocycleSpec::Product { .. } => {
            let traj = Trajectory::new(field, x, t.min(0.0), t.max(0.0), tol, true)?;
            let e = linalg::unit(e);
            let growth = |tau: f64| -> Result<f64> { Ok((traj.state_and_variational(tau)?.1 * &e).norm()) };
            let mut h = 1.0;
            for region in spec.regions() {
                let (mut inside, cuts) = crossings(field, &traj, region, t)?;
                let mut entry = 0.0;
                for &c in &cuts {
                    if inside {
                        h *= growth(c)? / growth(entry)?;
                    }
                    inside = !inside;
                    entry = c;
                }
                if inside {
                    h *= growth(t)? / growth(entry)?;
                }
            }
            Ok(h)
        }
    }
}

/// Point and unit direction after the extended flow for time `t`.
pub fn transport_direction(
    field: &VectorFieldSpec,
    x: &DVector<f64>,
    e: &DVector<f64>,
    t: f64,
    tol: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (y, phi) = flow(field, x, t, tol)?;
    Ok((y, linalg::unit(&(phi * e))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationEntry {
    pub t: f64,
    /// `|psi_t|Delta^s| * |psi_{-t}|Delta^u(phi_t x)|`.
    pub product: f64,
    /// `h^s_t * |psi_t|Delta^s|`.
    pub contraction: f64,
    /// `h^u_t * m(psi_t|Delta^u)`; the rescaled backward norm is its inverse.
    pub expansion: f64,
    /// `C e^{-lambda t}`.
    pub bound: f64,
    pub domination_ok: bool,
    pub contraction_ok: bool,
    pub expansion_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDomination {
    pub node: usize,
    pub time: f64,
    pub entries: Vec<DominationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub constant: f64,
    pub rate: f64,
    pub t_grid: Vec<f64>,
    pub nodes: Vec<NodeDomination>,
    /// Largest `value / bound` seen; below 1 passes.
    pub worst_domination: f64,
    pub worst_contraction: f64,
    pub worst_expansion: f64,
    pub min_angle: f64,
    pub domination_ok: bool,
    pub contraction_ok: bool,
    pub expansion_ok: bool,
}

impl DominationReport {
    pub fn passed(&self) -> bool {
        self.domination_ok && self.contraction_ok && self.expansion_ok
    }

    /// One row per node and time: `node,t,product,contraction,expansion,bound,pass`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| FlowError::Invalid(format!("csv output failed: {e}"));
        w.write_record(["node", "t", "product", "contraction", "expansion", "bound", "pass"])
            .map_err(io)?;
        for n in &self.nodes {
            for e in &n.entries {
                let pass = e.domination_ok && e.contraction_ok && e.expansion_ok;
                w.write_record([
                    n.node.to_string(),
                    format!("{:e}", e.t),
                    format!("{:e}", e.product),
                    format!("{:e}", e.contraction),
                    format!("{:e}", e.expansion),
                    format!("{:e}", e.bound),
                    pass.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| FlowError::Invalid(format!("csv output failed: {e}")))
    }
}

/// Evaluates the three inequalities of the multisingular definition at each
/// node for each `t` in `t_grid`.
#[allow(clippy::too_many_arguments)]
pub fn check_domination(
    field: &VectorFieldSpec,
    splitting: &NormalSplitting,
    cocycle_s: &CocycleSpec,
    cocycle_u: &CocycleSpec,
    constant: f64,
    rate: f64,
    t_grid: &[f64],
    tol: f64,
) -> Result<DominationReport> {
    let orbit = &splitting.orbit;
    let nodes: Vec<NodeDomination> = (0..orbit.len())
        .into_par_iter()
        .map(|node| {
            let x = &orbit.states[node];
            let e = linalg::unit(&field.value(x));
            let entries = t_grid
                .iter()
                .map(|&t| {
                    let (y, phi) = flow(field, x, t, tol)?;
                    let psi = normal_projector(field, &y) * phi;
                    let s_norm = linalg::op_norm(&(&psi * &splitting.stable[node]));
                    let u_min = linalg::mininorm(&(&psi * &splitting.unstable[node]));
                    let hs = evaluate_cocycle(field, cocycle_s, x, &e, t, tol)?;
                    let hu = evaluate_cocycle(field, cocycle_u, x, &e, t, tol)?;
                    let bound = constant * (-rate * t).exp();
                    let product = s_norm / u_min;
                    let contraction = hs * s_norm;
                    let expansion = hu * u_min;
                    Ok(DominationEntry {
                        t,
                        product,
                        contraction,
                        expansion,
                        bound,
                        domination_ok: product < bound,
                        contraction_ok: contraction < bound,
                        expansion_ok: 1.0 / expansion < bound,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(NodeDomination {
                node,
                time: orbit.times[node],
                entries,
            })
        })
        .collect::<Result<_>>()?;
    let all = || nodes.iter().flat_map(|n| n.entries.iter());
    let worst = |f: &dyn Fn(&DominationEntry) -> f64| all().map(f).fold(0.0, f64::max);
    Ok(DominationReport {
        constant,
        rate,
        t_grid: t_grid.to_vec(),
        worst_domination: worst(&|e| e.product / e.bound),
        worst_contraction: worst(&|e| e.contraction / e.bound),
        worst_expansion: worst(&|e| 1.0 / (e.expansion * e.bound)),
        min_angle: splitting.min_angle(),
        domination_ok: all().all(|e| e.domination_ok),
        contraction_ok: all().all(|e| e.contraction_ok),
        expansion_ok: all().all(|e| e.expansion_ok),
        nodes,
    })
}

/// Lipschitz constant and block time, for the boundedness check on `c_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockMetadata {
    pub lipschitz: f64,
    pub block_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceReport {
    pub eta: f64,
    /// `(i, c_i)`.
    pub c: Vec<(i64, f64)>,
    /// `(i, b_i)`, one more entry than `c`.
    pub b: Vec<(i64, f64)>,
    /// `None` when no metadata was supplied.
    pub bounded: Option<bool>,
    pub b_sup: f64,
    /// Naive-cocycle bound to compare `b_sup` against, when supplied.
    pub naive_bound: Option<f64>,
}

/// `c_i = eta^{-1} / m(psi|Delta^u)` for `i >= 0`, `c_i = eta / |psi|Delta^s|`
/// for `i < 0`; `b_0 = 1` and `b_{i+1} = c_i b_i`. `norms[k]` belongs to
/// index `first + k`.
pub fn rebalance_sequence(
    norms: &[(f64, f64)],
    eta: f64,
    first: i64,
    metadata: Option<BlockMetadata>,
    naive_bound: Option<f64>,
) -> Result<RebalanceReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(FlowError::Invalid("eta must lie in (0, 1)".into()));
    }
    if norms.is_empty() {
        return Err(FlowError::Invalid("no blocks to rebalance".into()));
    }
    let last = first + norms.len() as i64;
    if first > 0 || last < 0 {
        return Err(FlowError::Invalid("index range must contain 0".into()));
    }
    let mut c = Vec::with_capacity(norms.len());
    for (k, &(s_norm, u_min)) in norms.iter().enumerate() {
        let i = first + k as i64;
        if !(s_norm > 0.0 && u_min > 0.0) {
            return Err(FlowError::Invalid(format!("block {i} has a non-positive norm")));
        }
        let ci = if i >= 0 { 1.0 / (eta * u_min) } else { eta / s_norm };
        // small slack for the identities that hold exactly in real arithmetic
        let slack = 1.0 + 1e-12;
        if ci * s_norm > eta * slack {
            return Err(FlowError::RebalanceInfeasible {
                index: i,
                reason: format!("c_i |psi|s| = {:e} exceeds eta = {eta}", ci * s_norm),
            });
        }
        if ci * u_min * slack < 1.0 / eta {
            return Err(FlowError::RebalanceInfeasible {
                index: i,
                reason: format!("c_i m(psi|u) = {:e} is below 1/eta = {:e}", ci * u_min, 1.0 / eta),
            });
        }
        c.push((i, ci));
    }
    let mut b = vec![(0i64, 1.0)];
    let mut acc = 1.0;
    for &(i, ci) in c.iter().filter(|(i, _)| *i >= 0) {
        acc *= ci;
        b.push((i + 1, acc));
    }
    acc = 1.0;
    for &(i, ci) in c.iter().rev().filter(|(i, _)| *i < 0) {
        acc /= ci;
        b.push((i, acc));
    }
    b.sort_by_key(|(i, _)| *i);
    let bounded = metadata.map(|m| {
        let g = (m.lipschitz * m.block_time).exp();
        c.iter().all(|(_, ci)| *ci >= eta / g && *ci <= g / eta)
    });
    let b_sup = b.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    Ok(RebalanceReport {
        eta,
        c,
        b,
        bounded,
        b_sup,
        naive_bound,
    })
}
