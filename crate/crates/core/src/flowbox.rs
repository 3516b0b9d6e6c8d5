//! Rescaled tangent boxes and the flowbox embedding `F_x(v + t X(x)) = phi_t(x + v)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::field::{effective_lipschitz, VectorFieldSpec};
use crate::integrate::{flow, flow_point};
use crate::linalg;

pub const DEV_BOUND: f64 = 0.5;
pub const MININORM_BOUND: f64 = 0.5;
pub const NORM_BOUND: f64 = 2.0;
pub const FD_SLACK: f64 = 1e-3;

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_RESIDUAL: f64 = 1e-10;
const BOX_SLACK: f64 = 1e-9;

/// `r0 = 1 / (10 L_eff)`.
pub fn r0_for(lipschitz: f64) -> f64 {
    1.0 / (10.0 * effective_lipschitz(lipschitz))
}

/// Whether box membership is enforced on the chart's arguments and preimages.
///
/// `Relaxed` keeps the chart geometry but only requires Newton convergence.
/// It is needed for fields with large Lipschitz constants, where the radii
/// derived from `r0` fall below anything floating point can resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartBounds {
    #[default]
    Enforced,
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowboxChart {
    #[serde(with = "linalg::serde_vec")]
    pub base: DVector<f64>,
    pub lipschitz: f64,
    pub r0: f64,
    pub speed: f64,
    #[serde(with = "linalg::serde_vec")]
    pub flow_dir: DVector<f64>,
    #[serde(with = "linalg::serde_vecs")]
    pub normal_frame: Vec<DVector<f64>>,
    pub tol: f64,
    pub bounds: ChartBounds,
}

impl FlowboxChart {
    pub fn new(field: &VectorFieldSpec, x: &DVector<f64>, lipschitz: f64, tol: f64) -> Result<Self> {
        let (value, _) = field.evaluate(x)?;
        let speed = value.norm();
        if speed <= field.singularity_tolerance() {
            return Err(FlowError::Singularity { time: 0.0, speed });
        }
        if !(tol > 0.0) {
            return Err(FlowError::Invalid(format!("tolerance must be positive, got {tol}")));
        }
        let flow_dir = value / speed;
        let normal_frame = linalg::orthonormal_complement(&flow_dir);
        Ok(FlowboxChart {
            base: x.clone(),
            lipschitz,
            r0: r0_for(lipschitz),
            speed,
            flow_dir,
            normal_frame,
            tol,
            bounds: ChartBounds::Enforced,
        })
    }

    pub fn with_bounds(mut self, bounds: ChartBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    /// Normal radius `r0 ||X(x)||`.
    pub fn normal_radius(&self) -> f64 {
        self.r0 * self.speed
    }

    /// Coordinates of `v` in the normal frame.
    pub fn coords(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.normal_frame.len(), self.normal_frame.iter().map(|n| n.dot(v)))
    }

    /// Normal vector with the given frame coordinates.
    pub fn vector(&self, coords: &DVector<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        for (c, n) in coords.iter().zip(&self.normal_frame) {
            v.axpy(*c, n, 1.0);
        }
        v
    }

    /// Orthogonal projection `pi_x` onto `N_x`.
    pub fn project(&self, w: &DVector<f64>) -> DVector<f64> {
        w - &self.flow_dir * self.flow_dir.dot(w)
    }

    /// Columns `n_1, .., n_{d-1}, e` as an orthogonal matrix.
    pub fn frame_matrix(&self) -> DMatrix<f64> {
        let mut cols = self.normal_frame.clone();
        cols.push(self.flow_dir.clone());
        linalg::columns_to_matrix(&cols, self.dim())
    }

    fn check_args(&self, v: &DVector<f64>, t: f64) -> Result<()> {
        if v.len() != self.dim() {
            return Err(FlowError::BoxBounds("normal vector has the wrong dimension".into()));
        }
        let along = self.flow_dir.dot(v).abs();
        if along > 1e-9 * (v.norm() + self.speed) {
            return Err(FlowError::BoxBounds(format!(
                "vector is not normal to the flow (component {along:e})"
            )));
        }
        if self.bounds == ChartBounds::Relaxed {
            return Ok(());
        }
        let radius = self.normal_radius();
        if v.norm() > radius * (1.0 + BOX_SLACK) {
            return Err(FlowError::BoxBounds(format!(
                "|v| = {:e} exceeds r0 |X(x)| = {radius:e}",
                v.norm()
            )));
        }
        if t.abs() > self.r0 * (1.0 + BOX_SLACK) {
            return Err(FlowError::BoxBounds(format!("|t| = {:e} exceeds r0 = {:e}", t.abs(), self.r0)));
        }
        Ok(())
    }

    /// `F_x(v + t X(x)) = phi_t(x + v)`.
    pub fn map(&self, field: &VectorFieldSpec, v: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        self.check_args(v, t)?;
        self.map_unchecked(field, v, t)
    }

    pub(crate) fn map_unchecked(&self, field: &VectorFieldSpec, v: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        flow_point(field, &(&self.base + v), t, self.tol)
    }

    /// `D_p F_x` in standard coordinates, from the variational flow.
    pub fn derivative(&self, field: &VectorFieldSpec, v: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let (y, phi) = flow(field, &(&self.base + v), t, self.tol)?;
        let mut cols: Vec<DVector<f64>> = self.normal_frame.iter().map(|n| &phi * n).collect();
        cols.push(field.value(&y) / self.speed);
        Ok(linalg::columns_to_matrix(&cols, self.dim()) * self.frame_matrix().transpose())
    }

    /// `D_p F_x` by central differences with steps `1e-5 r0 |X(x)|` in the
    /// normal directions and `1e-5 r0` in time.
    pub fn derivative_fd(&self, field: &VectorFieldSpec, v: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let hs = 1e-5 * self.r0 * self.speed;
        let ht = 1e-5 * self.r0;
        let mut cols = Vec::with_capacity(self.dim());
        for n in &self.normal_frame {
            let plus = self.map_unchecked(field, &(v + n * hs), t)?;
            let minus = self.map_unchecked(field, &(v - n * hs), t)?;
            cols.push((plus - minus) / (2.0 * hs));
        }
        let plus = self.map_unchecked(field, v, t + ht)?;
        let minus = self.map_unchecked(field, v, t - ht)?;
        cols.push((plus - minus) / (2.0 * ht * self.speed));
        Ok(linalg::columns_to_matrix(&cols, self.dim()) * self.frame_matrix().transpose())
    }

    /// Preimage `(v, t)` of `y` by Newton's method on the frame coordinates
    /// of `v` and on `t`.
    pub fn invert(&self, field: &VectorFieldSpec, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        if y.len() != self.dim() {
            return Err(FlowError::NotInBox("point has the wrong dimension".into()));
        }
        let k = self.normal_frame.len();
        let offset = y - &self.base;
        let mut coords = self.coords(&offset);
        let mut t = self.flow_dir.dot(&offset) / self.speed;
        let target = NEWTON_RESIDUAL * self.speed;
        let mut residual = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITER {
            let v = self.vector(&coords);
            let (image, phi) = match flow(field, &(&self.base + &v), t, self.tol) {
                Ok(r) => r,
                Err(FlowError::Escape { .. }) | Err(FlowError::Domain(_)) => {
                    return Err(FlowError::NotInBox("Newton iterate left the domain".into()))
                }
                Err(e) => return Err(e),
            };
            let r = &image - y;
            residual = r.norm();
            if residual <= target {
                return self.accept(v, t);
            }
            let mut cols: Vec<DVector<f64>> = self.normal_frame.iter().map(|n| &phi * n).collect();
            cols.push(field.value(&image));
            let jac = linalg::columns_to_matrix(&cols, self.dim());
            let step = jac
                .lu()
                .solve(&r)
                .ok_or_else(|| FlowError::NotInBox("singular Newton system".into()))?;
            for i in 0..k {
                coords[i] -= step[i];
            }
            t -= step[k];
            if !t.is_finite() || coords.iter().any(|c| !c.is_finite()) {
                break;
            }
        }
        Err(FlowError::NotInBox(format!(
            "Newton did not converge in {NEWTON_MAX_ITER} steps (residual {residual:e})"
        )))
    }

    fn accept(&self, v: DVector<f64>, t: f64) -> Result<(DVector<f64>, f64)> {
        if self.bounds == ChartBounds::Enforced
            && (v.norm() > self.normal_radius() * (1.0 + BOX_SLACK) || t.abs() > self.r0 * (1.0 + BOX_SLACK))
        {
            return Err(FlowError::NotInBox(format!(
                "preimage (|v| = {:e}, t = {t:e}) lies outside the box (r0 = {:e})",
                v.norm(),
                self.r0
            )));
        }
        Ok((v, t))
    }

    /// Grid nodes `(v, t)` of the box: `grid` points per axis, normal cube
    /// nodes pulled radially into the ball.
    pub fn grid_nodes(&self, grid: usize) -> Vec<(DVector<f64>, f64)> {
        let k = self.normal_frame.len();
        let axis: Vec<f64> = (0..grid)
            .map(|i| -1.0 + 2.0 * i as f64 / (grid - 1) as f64)
            .collect();
        let total = grid.pow(k as u32 + 1);
        let radius = self.normal_radius();
        (0..total)
            .map(|mut idx| {
                let mut c = DVector::zeros(k);
                for j in 0..k {
                    c[j] = axis[idx % grid];
                    idx /= grid;
                }
                let t = axis[idx % grid] * self.r0;
                let l2 = c.norm();
                if l2 > 0.0 {
                    c *= c.amax() / l2;
                }
                (self.vector(&(c * radius)), t)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxBound {
    DeviationFromIdentity,
    Mininorm,
    Norm,
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundWitness {
    pub bound: BoxBound,
    #[serde(with = "linalg::serde_vec")]
    pub v: DVector<f64>,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBoundsReport {
    #[serde(with = "linalg::serde_vec")]
    pub base: DVector<f64>,
    pub r0: f64,
    pub nodes: usize,
    pub max_dev: f64,
    pub min_mininorm: f64,
    pub max_norm: f64,
    pub no_singularity: bool,
    pub witnesses: Vec<BoundWitness>,
}

impl BoxBoundsReport {
    pub fn passed(&self) -> bool {
        self.witnesses.is_empty()
    }
}

/// Finite-difference check of `|DF - id| <= 1/2`, `m(DF) >= 1/2`, `|DF| <= 2`
/// and absence of singular image points over a `grid^d` node grid.
pub fn verify_box_bounds(field: &VectorFieldSpec, chart: &FlowboxChart, grid: usize) -> Result<BoxBoundsReport> {
    if grid < 2 {
        return Err(FlowError::Invalid("grid must have at least 2 points per axis".into()));
    }
    let nodes = chart.grid_nodes(grid);
    let sing_tol = field.singularity_tolerance();
    let id = DMatrix::identity(chart.dim(), chart.dim());
    let samples: Vec<(f64, f64, f64, f64)> = nodes
        .par_iter()
        .map(|(v, t)| {
            let df = chart.derivative_fd(field, v, *t)?;
            let image = chart.map_unchecked(field, v, *t)?;
            Ok((
                linalg::op_norm(&(&df - &id)),
                linalg::mininorm(&df),
                linalg::op_norm(&df),
                field.speed(&image),
            ))
        })
        .collect::<Result<_>>()?;
    let mut report = BoxBoundsReport {
        base: chart.base.clone(),
        r0: chart.r0,
        nodes: nodes.len(),
        max_dev: 0.0,
        min_mininorm: f64::INFINITY,
        max_norm: 0.0,
        no_singularity: true,
        witnesses: Vec::new(),
    };
    for ((v, t), (dev, mini, norm, speed)) in nodes.iter().zip(samples) {
        report.max_dev = report.max_dev.max(dev);
        report.min_mininorm = report.min_mininorm.min(mini);
        report.max_norm = report.max_norm.max(norm);
        let mut flag = |bound, value| {
            report.witnesses.push(BoundWitness {
                bound,
                v: v.clone(),
                t: *t,
                value,
            })
        };
        if dev > DEV_BOUND + FD_SLACK {
            flag(BoxBound::DeviationFromIdentity, dev);
        }
        if mini < MININORM_BOUND - FD_SLACK {
            flag(BoxBound::Mininorm, mini);
        }
        if norm > NORM_BOUND + FD_SLACK {
            flag(BoxBound::Norm, norm);
        }
        if speed <= sing_tol {
            flag(BoxBound::Singular, speed);
            report.no_singularity = false;
        }
    }
    Ok(report)
}
