//! Sequence-space contraction: block systems `v_{i+1} = L_i v_i + phi_i(v_i)`
//! over a truncated index range, the bounded inverse of `I - L`, the
//! fixed-point iteration and the assembly of such systems from orbit data.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::field::VectorFieldSpec;
use crate::hyperbolicity::{NormalSplitting, RebalanceReport};
use crate::linalg;
use crate::poincare::{r1_for, SectionOptions, SectionalPoincare};

const DEGENERATE_ANGLE: f64 = 1e-12;
/// Consecutive norm increases treated as divergence.
const DIVERGENCE_RUN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceAngle {
    /// `inf |u - v|` over `u in S`, `v in U` with one of them a unit vector.
    pub angle: f64,
    /// Sine of the smallest principal angle.
    pub principal_sine: f64,
    /// The spans overlap; `angle` is reported as 0.
    pub degenerate: bool,
}

/// Angle between the column spans of `s` and `u`, from the smallest singular
/// values of the two cross-projections.
pub fn angle(s: &DMatrix<f64>, u: &DMatrix<f64>) -> SubspaceAngle {
    let qs = linalg::orthonormal_columns(s);
    let qu = linalg::orthonormal_columns(u);
    let n = qs.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let a = linalg::mininorm(&((&id - linalg::projector(&qu)) * &qs));
    let b = linalg::mininorm(&((&id - linalg::projector(&qs)) * &qu));
    let cos = linalg::op_norm(&(qs.transpose() * &qu)).min(1.0);
    let value = a.min(b);
    let degenerate = value < DEGENERATE_ANGLE;
    SubspaceAngle {
        angle: if degenerate { 0.0 } else { value },
        principal_sine: (1.0 - cos * cos).max(0.0).sqrt(),
        degenerate,
    }
}

/// `(1 + eta) xi / (alpha (1 - eta))`.
pub fn contraction_bound(eta: f64, alpha: f64, xi: f64) -> f64 {
    (1.0 + eta) * xi / (alpha * (1.0 - eta))
}

/// Bump with value 1 on `[0, 1/3]`, 0 on `[2/3, inf)` and slope -3 between.
pub fn bump(t: f64) -> f64 {
    (2.0 - 3.0 * t).clamp(0.0, 1.0)
}

/// Nonlinear part `phi_i` of a block map, sending block `i` to block `i + 1`.
pub trait BlockMap: Send + Sync + fmt::Debug {
    fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>>;
    /// Lipschitz bound used for the contraction estimate.
    fn lipschitz(&self) -> f64;
    fn label(&self) -> String;
}

#[derive(Debug, Clone)]
pub struct ZeroMap {
    pub dim: usize,
}

impl BlockMap for ZeroMap {
    fn apply(&self, _v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::zeros(self.dim))
    }

    fn lipschitz(&self) -> f64 {
        0.0
    }

    fn label(&self) -> String {
        "zero".into()
    }
}

/// `scale * outer * sin(inner * v)`, Lipschitz with constant at most
/// `scale |outer| |inner|`.
#[derive(Debug, Clone)]
pub struct SineMap {
    pub scale: f64,
    pub outer: DMatrix<f64>,
    pub inner: DMatrix<f64>,
}

impl SineMap {
    pub fn diagonal(scale: f64, dim: usize) -> Self {
        SineMap {
            scale,
            outer: DMatrix::identity(dim, dim),
            inner: DMatrix::identity(dim, dim),
        }
    }
}

impl BlockMap for SineMap {
    fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.outer * (&self.inner * v).map(f64::sin) * self.scale)
    }

    fn lipschitz(&self) -> f64 {
        self.scale * linalg::op_norm(&self.outer) * linalg::op_norm(&self.inner)
    }

    fn label(&self) -> String {
        format!("sine(scale={:e})", self.scale)
    }
}

/// One block of the system: the splitting of `E_i` and the linear parts of
/// the map to `E_{i+1}` in those bases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Block {
    #[serde(with = "linalg::serde_mat")]
    pub stable: DMatrix<f64>,
    #[serde(with = "linalg::serde_mat")]
    pub unstable: DMatrix<f64>,
    /// `A_i`: stable coordinates at `i` to stable coordinates at `i + 1`.
    #[serde(with = "linalg::serde_mat")]
    pub a: DMatrix<f64>,
    /// `D_i`, invertible.
    #[serde(with = "linalg::serde_mat")]
    pub d: DMatrix<f64>,
}

impl Block {
    fn decomposer(&self) -> Result<DMatrix<f64>> {
        let basis = linalg::columns_to_matrix(
            &linalg::matrix_columns(&self.stable)
                .into_iter()
                .chain(linalg::matrix_columns(&self.unstable))
                .collect::<Vec<_>>(),
            self.stable.nrows(),
        );
        basis
            .pseudo_inverse(1e-14)
            .map_err(|e| FlowError::Invalid(format!("block basis has no pseudo-inverse: {e}")))
    }
}

/// Truncated system on indices `first ..= first + blocks.len() - 1`. The map
/// of the last block is not used by the truncated equations.
#[derive(Debug)]
pub struct BlockSequenceSystem<'a> {
    pub first: i64,
    pub blocks: Vec<Block>,
    /// `phi_i` for every block but the last.
    pub perturbations: Vec<Box<dyn BlockMap + 'a>>,
    pub eta: f64,
    pub alpha: f64,
    pub xi: f64,
    decomposers: Vec<DMatrix<f64>>,
    d_inverses: Vec<DMatrix<f64>>,
}

/// Serializable view of a system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSummary {
    pub first: i64,
    pub last: i64,
    pub eta: f64,
    pub alpha: f64,
    pub xi: f64,
    pub kappa: f64,
    pub blocks: Vec<Block>,
    pub perturbations: Vec<String>,
    pub perturbation_lipschitz: Vec<f64>,
}

/// A sequence of block vectors, indexed from `first`.
pub type Sequence = Vec<DVector<f64>>;

pub fn sup_norm(v: &[DVector<f64>]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

impl<'a> BlockSequenceSystem<'a> {
    pub fn new(
        first: i64,
        blocks: Vec<Block>,
        perturbations: Vec<Box<dyn BlockMap + 'a>>,
        eta: f64,
        alpha: f64,
        xi: f64,
    ) -> Result<Self> {
        if blocks.len() < 2 {
            return Err(FlowError::Invalid("a system needs at least two blocks".into()));
        }
        if perturbations.len() + 1 != blocks.len() {
            return Err(FlowError::Invalid("expected one perturbation per block but the last".into()));
        }
        if !(eta > 0.0 && eta < 1.0 && alpha > 0.0 && xi >= 0.0) {
            return Err(FlowError::Invalid("need 0 < eta < 1, alpha > 0, xi >= 0".into()));
        }
        let decomposers = blocks.iter().map(Block::decomposer).collect::<Result<Vec<_>>>()?;
        let d_inverses = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                b.d.clone().try_inverse().ok_or_else(|| FlowError::Invalid(format!("D at block {i} is singular")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockSequenceSystem {
            first,
            blocks,
            perturbations,
            eta,
            alpha,
            xi,
            decomposers,
            d_inverses,
        })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn last(&self) -> i64 {
        self.first + self.blocks.len() as i64 - 1
    }

    pub fn kappa(&self) -> f64 {
        contraction_bound(self.eta, self.alpha, self.xi)
    }

    pub fn summary(&self) -> SystemSummary {
        SystemSummary {
            first: self.first,
            last: self.last(),
            eta: self.eta,
            alpha: self.alpha,
            xi: self.xi,
            kappa: self.kappa(),
            blocks: self.blocks.clone(),
            perturbations: self.perturbations.iter().map(|p| p.label()).collect(),
            perturbation_lipschitz: self.perturbations.iter().map(|p| p.lipschitz()).collect(),
        }
    }

    /// Measured `max(|A_i|, |D_i^{-1}|)`, smallest angle and largest
    /// perturbation Lipschitz bound over the blocks that enter the equations.
    pub fn measured_constants(&self) -> (f64, f64, f64) {
        let n = self.len() - 1;
        let eta = (0..n)
            .map(|i| linalg::op_norm(&self.blocks[i].a).max(linalg::op_norm(&self.d_inverses[i])))
            .fold(0.0, f64::max);
        let alpha = self
            .blocks
            .iter()
            .map(|b| angle(&b.stable, &b.unstable).angle)
            .fold(f64::INFINITY, f64::min);
        let xi = self.perturbations.iter().map(|p| p.lipschitz()).fold(0.0, f64::max);
        (eta, alpha, xi)
    }

    /// Stable and unstable coordinates of a vector of block `i` (0-based).
    pub fn split(&self, i: usize, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let c = &self.decomposers[i] * v;
        let s = self.blocks[i].stable.ncols();
        let u = self.blocks[i].unstable.ncols();
        (c.rows(0, s).into_owned(), c.rows(s, u).into_owned())
    }

    fn join(&self, i: usize, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        &self.blocks[i].stable * a + &self.blocks[i].unstable * b
    }

    /// `(L v)_i = L_{i-1} v_{i-1}`, zero at the first index.
    pub fn apply_l(&self, v: &[DVector<f64>]) -> Sequence {
        let mut out = vec![DVector::zeros(self.blocks[0].stable.nrows())];
        for i in 1..self.len() {
            let (a, b) = self.split(i - 1, &v[i - 1]);
            let blk = &self.blocks[i - 1];
            out.push(self.join(i, &(&blk.a * a), &(&blk.d * b)));
        }
        out
    }

    /// Bounded inverse of `I - L` on the truncated range: stable parts by
    /// forward recursion from zero inflow, unstable parts by backward
    /// recursion from zero past the last index.
    pub fn inverse_l(&self, z: &[DVector<f64>]) -> Sequence {
        let n = self.len();
        let parts: Vec<(DVector<f64>, DVector<f64>)> = (0..n).map(|i| self.split(i, &z[i])).collect();
        let mut s_part = Vec::with_capacity(n);
        s_part.push(parts[0].0.clone());
        for i in 1..n {
            let next = &self.blocks[i - 1].a * &s_part[i - 1] + &parts[i].0;
            s_part.push(next);
        }
        let mut u_part = vec![DVector::zeros(self.blocks[n - 1].unstable.ncols()); n];
        for i in (0..n - 1).rev() {
            u_part[i] = &self.d_inverses[i] * (&u_part[i + 1] - &parts[i + 1].1);
        }
        (0..n).map(|i| self.join(i, &s_part[i], &u_part[i])).collect()
    }

    /// `phi(v)_i = phi_{i-1}(v_{i-1})`, zero at the first index.
    pub fn apply_phi(&self, v: &[DVector<f64>]) -> Result<Sequence> {
        let rest: Vec<DVector<f64>> = self
            .perturbations
            .par_iter()
            .enumerate()
            .map(|(i, p)| p.apply(&v[i]))
            .collect::<Result<_>>()?;
        let mut out = vec![DVector::zeros(self.blocks[0].stable.nrows())];
        out.extend(rest);
        Ok(out)
    }

    /// One step of `v <- (I - L)^{-1} phi(v)`.
    pub fn step(&self, v: &[DVector<f64>]) -> Result<Sequence> {
        Ok(self.inverse_l(&self.apply_phi(v)?))
    }

    /// `v_{i+1} - L_i v_i - phi_i(v_i)` over the truncated equations.
    pub fn residual(&self, v: &[DVector<f64>]) -> Result<f64> {
        let lv = self.apply_l(v);
        let pv = self.apply_phi(v)?;
        Ok((1..self.len()).map(|i| (&v[i] - &lv[i] - &pv[i]).norm()).fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub norm: f64,
    /// Ratio of consecutive step sizes; `None` on the first step.
    pub factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub kappa: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_norm: f64,
    pub max_factor: f64,
    pub trace: Vec<TraceRow>,
    #[serde(with = "linalg::serde_vecs")]
    pub solution: Vec<DVector<f64>>,
}

impl FixedPointReport {
    /// `iter,norm,factor` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| FlowError::Invalid(format!("csv output failed: {e}"));
        w.write_record(["iter", "norm", "factor"]).map_err(io)?;
        for r in &self.trace {
            let factor = r.factor.map(|f| format!("{f:e}")).unwrap_or_default();
            w.write_record([r.iteration.to_string(), format!("{:e}", r.norm), factor]).map_err(io)?;
        }
        w.flush().map_err(|e| FlowError::Invalid(format!("csv output failed: {e}")))
    }
}

/// Iterates `v <- (I - L)^{-1} phi(v)` until the step falls below `tol`.
pub fn solve_fixed_point(
    system: &BlockSequenceSystem<'_>,
    initial: &[DVector<f64>],
    max_iter: usize,
    tol: f64,
) -> Result<FixedPointReport> {
    let kappa = system.kappa();
    if !(kappa < 1.0) {
        return Err(FlowError::NoCertificate { kappa });
    }
    if initial.len() != system.len() {
        return Err(FlowError::Invalid(format!(
            "initial sequence has {} blocks, system has {}",
            initial.len(),
            system.len()
        )));
    }
    let mut v: Sequence = initial.to_vec();
    let mut trace = Vec::new();
    let mut last_step: Option<f64> = None;
    let mut max_factor: f64 = 0.0;
    let mut growth_run = 0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iter {
        let next = system.step(&v)?;
        let diff: Vec<DVector<f64>> = next.iter().zip(&v).map(|(a, b)| a - b).collect();
        let step = sup_norm(&diff);
        let factor = last_step.filter(|s| *s > 0.0).map(|s| step / s);
        if let Some(f) = factor {
            max_factor = max_factor.max(f);
            growth_run = if f > 1.0 { growth_run + 1 } else { 0 };
            if growth_run >= DIVERGENCE_RUN {
                return Err(FlowError::Divergence { iteration: it });
            }
        }
        v = next;
        iterations = it;
        trace.push(TraceRow {
            iteration: it,
            norm: sup_norm(&v),
            factor,
        });
        last_step = Some(step);
        if step <= tol {
            converged = true;
            break;
        }
    }
    Ok(FixedPointReport {
        kappa,
        iterations,
        converged,
        final_norm: sup_norm(&v),
        max_factor,
        trace,
        solution: v,
    })
}

/// Sup-norm gap between two solutions over their common indices.
pub fn truncation_gap(a: &[DVector<f64>], a_first: i64, b: &[DVector<f64>], b_first: i64) -> f64 {
    let lo = a_first.max(b_first);
    let hi = (a_first + a.len() as i64).min(b_first + b.len() as i64);
    (lo..hi)
        .map(|i| (&a[(i - a_first) as usize] - &b[(i - b_first) as usize]).norm())
        .fold(0.0, f64::max)
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    linalg::orthonormal_columns(&raw)
}

/// Parameters of a random system; the perturbation scale is set so that the
/// contraction bound equals `kappa` for the measured angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomSystemSpec {
    pub half_range: usize,
    pub dim: usize,
    pub dim_s: usize,
    pub eta: f64,
    pub kappa: f64,
}

/// Random block system with `|A_i| <= eta`, `|D_i^{-1}| <= eta`, sine
/// perturbations and `contraction_bound = kappa`.
pub fn random_system(spec: &RandomSystemSpec, seed: u64) -> Result<BlockSequenceSystem<'static>> {
    let RandomSystemSpec {
        half_range,
        dim,
        dim_s,
        eta,
        kappa,
    } = *spec;
    if dim_s == 0 || dim_s >= dim {
        return Err(FlowError::Invalid("need 0 < dim_s < dim".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * half_range + 1;
    let dim_u = dim - dim_s;
    let mut blocks = Vec::with_capacity(n);
    for _ in 0..n {
        // tilt the unstable span toward the stable one to get angles below 1
        let q = random_orthogonal(&mut rng, dim);
        let stable = q.columns(0, dim_s).into_owned();
        let tilt: f64 = rng.gen_range(0.0..0.8);
        let mut unstable = q.columns(dim_s, dim_u).into_owned();
        for j in 0..dim_u {
            let mix = stable.column(j % dim_s) * tilt;
            let col = unstable.column(j) + mix;
            unstable.set_column(j, &col);
        }
        let unstable = linalg::orthonormal_columns(&unstable);
        let a = random_orthogonal(&mut rng, dim_s)
            * DMatrix::from_diagonal(&DVector::from_fn(dim_s, |_, _| eta * rng.gen_range(0.0..=1.0)));
        let d = random_orthogonal(&mut rng, dim_u)
            * DMatrix::from_diagonal(&DVector::from_fn(dim_u, |_, _| rng.gen_range(1.0..2.0) / eta));
        blocks.push(Block {
            stable,
            unstable,
            a,
            d,
        });
    }
    let alpha = blocks
        .iter()
        .map(|b| angle(&b.stable, &b.unstable).angle)
        .fold(f64::INFINITY, f64::min);
    let xi = kappa * alpha * (1.0 - eta) / (1.0 + eta);
    let perturbations: Vec<Box<dyn BlockMap>> = (0..n - 1)
        .map(|_| {
            Box::new(SineMap {
                scale: xi,
                outer: random_orthogonal(&mut rng, dim),
                inner: random_orthogonal(&mut rng, dim),
            }) as Box<dyn BlockMap>
        })
        .collect();
    BlockSequenceSystem::new(-(half_range as i64), blocks, perturbations, eta, alpha, xi)
}

/// Random sequence with sup norm `radius`, deterministic in `seed`.
pub fn random_sequence(system: &BlockSequenceSystem<'_>, radius: f64, seed: u64) -> Sequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // combinations of the splitting bases, so each entry lies in its block's space
    let raw: Sequence = system
        .blocks
        .iter()
        .map(|b| {
            let s = DVector::from_fn(b.stable.ncols(), |_, _| rng.gen_range(-1.0..1.0));
            let u = DVector::from_fn(b.unstable.ncols(), |_, _| rng.gen_range(-1.0..1.0));
            &b.stable * s + &b.unstable * u
        })
        .collect();
    let scale = radius / sup_norm(&raw);
    raw.into_iter().map(|v| v * scale).collect()
}

/// `phi_i = G_i - L_i` for `G_i(v) = b_{i+1} P_i(b_i^{-1} v)`, where `P_i`
/// blends the sectional map into `psi_T` through the bump.
#[derive(Debug)]
pub struct RescaledSectionMap<'a> {
    section: SectionalPoincare<'a>,
    psi: DMatrix<f64>,
    linear: DMatrix<f64>,
    b_here: f64,
    b_next: f64,
    /// `3 eps |X(phi_{iT}(x))|`.
    bump_scale: f64,
    lipschitz: f64,
}

impl<'a> RescaledSectionMap<'a> {
    /// `P_i(w)`.
    pub fn extended_section(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let beta = bump(w.norm() / self.bump_scale);
        let linear = &self.psi * w;
        if beta == 0.0 {
            return Ok(linear);
        }
        let nonlinear = self.section.apply(w)?;
        Ok(nonlinear * beta + linear * (1.0 - beta))
    }

    /// `G_i(v)`.
    pub fn rescaled(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.extended_section(&(v / self.b_here))? * self.b_next)
    }

    /// Support radius of `phi_i` in block coordinates.
    pub fn support(&self) -> f64 {
        self.b_here * self.bump_scale * 2.0 / 3.0
    }
}

impl BlockMap for RescaledSectionMap<'_> {
    fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.rescaled(v)? - &self.linear * v)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn label(&self) -> String {
        format!("rescaled-section(b={:e})", self.b_here)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub epsilon: f64,
    pub block_time: f64,
    pub measured_eta: f64,
    pub measured_alpha: f64,
    /// Largest of the sampled difference quotients and the derivative bound.
    pub measured_xi: f64,
    pub sampled_xi: Vec<f64>,
    pub derivative_xi: Vec<f64>,
    /// `alpha (1 - eta) / (1 + eta)`: any smaller `xi` certifies contraction.
    pub required_xi: f64,
    pub feasible: bool,
    /// Largest off-diagonal part of `c_i psi_T` in the splitting bases.
    pub off_diagonal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub epsilon: f64,
    pub section: SectionOptions,
    pub lipschitz_pairs: usize,
    pub derivative_samples: usize,
    pub seed: u64,
}

/// Blocks `E_i = N_{phi_{iT}(x)}` along the splitting's orbit with linear
/// parts `c_i psi_T` and perturbations from the rescaled sectional maps.
/// Block `k` of the orbit carries index `rebalance.c[0].0 + k`.
pub fn assemble_sequence_system<'a>(
    field: &'a VectorFieldSpec,
    splitting: &NormalSplitting,
    rebalance: &RebalanceReport,
    options: &AssemblyOptions,
) -> Result<(BlockSequenceSystem<'a>, AssemblyReport)> {
    let orbit = &splitting.orbit;
    let n_blocks = orbit.len();
    if rebalance.c.len() + 1 != n_blocks || rebalance.b.len() != n_blocks {
        return Err(FlowError::Invalid(format!(
            "rebalance covers {} maps, orbit has {} nodes",
            rebalance.c.len(),
            n_blocks
        )));
    }
    let block_time = orbit.times[1] - orbit.times[0];
    let eps = options.epsilon;
    let r1 = r1_for(options.section.lipschitz, block_time);
    if 3.0 * eps > r1 {
        return Err(FlowError::Precondition(format!("3 eps = {:e} exceeds r1(T) = {r1:e}", 3.0 * eps)));
    }
    let maps = splitting.block_maps(field)?;
    let first = rebalance.c[0].0;
    let mut blocks = Vec::with_capacity(n_blocks);
    let mut off_diagonal: f64 = 0.0;
    for k in 0..n_blocks {
        let stable = splitting.stable[k].clone();
        let unstable = splitting.unstable[k].clone();
        let (s, u) = (stable.ncols(), unstable.ncols());
        let (a, d) = if k + 1 < n_blocks {
            let c = rebalance.c[k].1;
            let next = Block {
                stable: splitting.stable[k + 1].clone(),
                unstable: splitting.unstable[k + 1].clone(),
                a: DMatrix::zeros(s, s),
                d: DMatrix::identity(u, u),
            };
            let dec = next.decomposer()?;
            let img_s = &dec * (&maps[k] * &stable) * c;
            let img_u = &dec * (&maps[k] * &unstable) * c;
            off_diagonal = off_diagonal
                .max(linalg::op_norm(&img_s.rows(s, u).into_owned()))
                .max(linalg::op_norm(&img_u.rows(0, s).into_owned()));
            (img_s.rows(0, s).into_owned(), img_u.rows(s, u).into_owned())
        } else {
            (DMatrix::zeros(s, s), DMatrix::identity(u, u))
        };
        blocks.push(Block {
            stable,
            unstable,
            a,
            d,
        });
    }
    // ambient L_i = S' A (stable coords) + U' D (unstable coords)
    let linears: Vec<(DMatrix<f64>, f64)> = (0..n_blocks - 1)
        .map(|k| {
            let blk = &blocks[k];
            let (s, u) = (blk.stable.ncols(), blk.unstable.ncols());
            let coords = blk.decomposer()?;
            let lin = &blocks[k + 1].stable * &blk.a * coords.rows(0, s)
                + &blocks[k + 1].unstable * &blk.d * coords.rows(s, u);
            Ok((lin, rebalance.c[k].1))
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut perturbations: Vec<Box<dyn BlockMap + 'a>> = Vec::with_capacity(n_blocks - 1);
    let mut sampled_xi = Vec::with_capacity(n_blocks - 1);
    let mut derivative_xi = Vec::with_capacity(n_blocks - 1);
    for (k, (linear, c)) in linears.into_iter().enumerate() {
        let x = &orbit.states[k];
        let section = SectionalPoincare::new(field, x, block_time, options.section)?;
        let speed = section.speed;
        let mut map = RescaledSectionMap {
            psi: maps[k].clone(),
            section,
            linear,
            b_here: rebalance.b[k].1,
            b_next: rebalance.b[k + 1].1,
            bump_scale: 3.0 * eps * speed,
            lipschitz: 0.0,
        };
        let basis = linalg::orthonormal_complement(&field.value(x));
        let radius = map.support() * 1.25;
        let mut draw = |r: f64| -> DVector<f64> {
            let mut v = DVector::zeros(x.len());
            for b in &basis {
                v += b * rng.gen_range(-1.0..1.0);
            }
            let norm = v.norm();
            if norm == 0.0 {
                v
            } else {
                v * (r * rng.gen_range(0.0..1.0) / norm)
            }
        };
        let pairs: Vec<(DVector<f64>, DVector<f64>)> = (0..options.lipschitz_pairs)
            .map(|j| {
                let p = draw(radius);
                // alternate far pairs with close ones for local slopes
                let q = if j % 2 == 0 { draw(radius) } else { &p + draw(radius * 1e-2) };
                (p, q)
            })
            .collect();
        let quotients: Vec<f64> = pairs
            .par_iter()
            .map(|(p, q)| {
                let gap = (p - q).norm();
                if gap == 0.0 {
                    return Ok(0.0);
                }
                Ok((map.apply(p)? - map.apply(q)?).norm() / gap)
            })
            .collect::<Result<_>>()?;
        let sampled = quotients.into_iter().fold(0.0, f64::max);
        let points: Vec<DVector<f64>> = (0..options.derivative_samples).map(|_| draw(map.support())).collect();
        let derivative = points
            .par_iter()
            .map(|v| derivative_gap(&map, v).map(|g| g * c))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let projector = linalg::projector(&linalg::columns_to_matrix(&basis, x.len()));
        let residue = linalg::op_norm(&(&map.psi * &projector * c - &map.linear * &projector));
        let derivative = derivative + residue;
        map.lipschitz = sampled.max(derivative);
        sampled_xi.push(sampled);
        derivative_xi.push(derivative);
        perturbations.push(Box::new(map));
    }
    let xi = sampled_xi.iter().chain(&derivative_xi).copied().fold(0.0, f64::max);
    let eta = (0..n_blocks - 1)
        .map(|k| {
            let inv = blocks[k].d.clone().try_inverse().map(|m| linalg::op_norm(&m)).unwrap_or(f64::INFINITY);
            linalg::op_norm(&blocks[k].a).max(inv)
        })
        .fold(0.0, f64::max);
    let alpha = blocks
        .iter()
        .map(|b| angle(&b.stable, &b.unstable).angle)
        .fold(f64::INFINITY, f64::min);
    if !(eta < 1.0) {
        return Err(FlowError::RebalanceInfeasible {
            index: first,
            reason: format!("measured eta = {eta:e} is not below 1"),
        });
    }
    let required = alpha * (1.0 - eta) / (1.0 + eta);
    let report = AssemblyReport {
        epsilon: eps,
        block_time,
        measured_eta: eta,
        measured_alpha: alpha,
        measured_xi: xi,
        sampled_xi,
        derivative_xi,
        required_xi: required,
        feasible: xi < required,
        off_diagonal,
    };
    let system = BlockSequenceSystem::new(first, blocks, perturbations, eta, alpha, xi)?;
    Ok((system, report))
}

/// `|D_w P_i - psi_T|` at `w = v / b_i`, with the bump derivative term.
fn derivative_gap(map: &RescaledSectionMap<'_>, v: &DVector<f64>) -> Result<f64> {
    let w = v / map.b_here;
    let beta = bump(w.norm() / map.bump_scale);
    if beta == 0.0 {
        return Ok(0.0);
    }
    let (p, dp) = map.section.apply_with_derivative(&w)?;
    let src = map.section.source.matrix();
    let tgt = map.section.target().matrix();
    let dp_ambient = &tgt * dp * src.transpose();
    let psi_ambient = &map.psi * &src * src.transpose();
    let slope = if beta < 1.0 { 3.0 / map.bump_scale } else { 0.0 };
    let diff = p - &map.psi * &w;
    Ok(beta * linalg::op_norm(&(dp_ambient - psi_ambient)) + slope * diff.norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planar_system(xi: f64, half: usize) -> BlockSequenceSystem<'static> {
        let n = 2 * half + 1;
        let blocks = (0..n)
            .map(|_| Block {
                stable: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
                unstable: DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
                a: DMatrix::from_element(1, 1, 0.5),
                d: DMatrix::from_element(1, 1, 2.0),
            })
            .collect();
        let perturbations: Vec<Box<dyn BlockMap>> = (0..n - 1)
            .map(|_| Box::new(SineMap::diagonal(xi, 2)) as Box<dyn BlockMap>)
            .collect();
        BlockSequenceSystem::new(-(half as i64), blocks, perturbations, 0.5, 1.0, xi).unwrap()
    }

    #[test]
    fn angle_examples() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!((angle(&e1, &e2).angle - 1.0).abs() < 1e-15);
        let g: f64 = 0.3;
        let tilted = DMatrix::from_column_slice(2, 1, &[g.cos(), g.sin()]);
        let a = angle(&e1, &tilted);
        assert!((a.angle - g.sin()).abs() < 1e-14);
        assert!((a.principal_sine - g.sin()).abs() < 1e-14);
        let same = angle(&e1, &e1);
        assert!(same.degenerate && same.angle == 0.0);
    }

    #[test]
    fn kappa_examples() {
        assert!((contraction_bound(0.5, 1.0, 0.1) - 0.3).abs() < 1e-15);
        assert_eq!(contraction_bound(0.5, 1.0, 0.0), 0.0);
        assert!((contraction_bound(0.5, 0.5, 0.2) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn bump_properties() {
        for t in [0.0, 0.1, 1.0 / 3.0] {
            assert_eq!(bump(t), 1.0);
        }
        for t in [2.0 / 3.0, 0.9, 5.0] {
            assert_eq!(bump(t), 0.0);
        }
        assert!((bump(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn linear_system_collapses_in_one_step() {
        let sys = planar_system(0.0, 5);
        let v0 = random_sequence(&sys, 1.0, 1);
        let rep = solve_fixed_point(&sys, &v0, 10, 1e-12).unwrap();
        assert_eq!(rep.trace[0].norm, 0.0);
        assert!(rep.converged);
    }

    #[test]
    fn sine_system_contracts_at_kappa() {
        let sys = planar_system(0.01, 10);
        assert!((sys.kappa() - 0.03).abs() < 1e-15);
        let v0 = random_sequence(&sys, 1.0, 2);
        let rep = solve_fixed_point(&sys, &v0, 100, 1e-13).unwrap();
        assert!(rep.converged && rep.final_norm <= 1e-10);
        assert!(rep.max_factor <= 0.03 * (1.0 + 1e-6));
    }

    #[test]
    fn inverse_solves_the_truncated_equations() {
        let spec = RandomSystemSpec {
            half_range: 20,
            dim: 4,
            dim_s: 2,
            eta: 0.6,
            kappa: 0.5,
        };
        let sys = random_system(&spec, 9).unwrap();
        let z = random_sequence(&sys, 1.0, 4);
        let w = sys.inverse_l(&z);
        let lw = sys.apply_l(&w);
        for i in 1..sys.len() {
            assert!((&w[i] - &lw[i] - &z[i]).norm() < 1e-10);
        }
        let (ws, _) = sys.split(0, &w[0]);
        let (zs, _) = sys.split(0, &z[0]);
        assert!((ws - zs).norm() < 1e-12);
    }

    #[test]
    fn no_certificate_above_one() {
        let sys = planar_system(0.4, 2);
        let v0 = random_sequence(&sys, 1.0, 0);
        assert!(matches!(solve_fixed_point(&sys, &v0, 10, 1e-10), Err(FlowError::NoCertificate { .. })));
    }

    #[test]
    fn divergence_is_detected() {
        // claimed constants certify contraction that the maps do not have
        let n = 7;
        let blocks: Vec<Block> = (0..n)
            .map(|_| Block {
                stable: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
                unstable: DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
                a: DMatrix::from_element(1, 1, 0.5),
                d: DMatrix::from_element(1, 1, 2.0),
            })
            .collect();
        #[derive(Debug)]
        struct Blowup;
        impl BlockMap for Blowup {
            fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(v * 3.0 + DVector::from_element(v.len(), 1.0))
            }
            fn lipschitz(&self) -> f64 {
                0.01
            }
            fn label(&self) -> String {
                "blowup".into()
            }
        }
        let perturbations: Vec<Box<dyn BlockMap>> = (0..n - 1).map(|_| Box::new(Blowup) as Box<dyn BlockMap>).collect();
        let sys = BlockSequenceSystem::new(-3, blocks, perturbations, 0.5, 1.0, 0.01).unwrap();
        let v0 = random_sequence(&sys, 1.0, 0);
        assert!(matches!(solve_fixed_point(&sys, &v0, 100, 1e-10), Err(FlowError::Divergence { .. })));
    }
}
