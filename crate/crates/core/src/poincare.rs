//! Linear Poincare flow, extended linear Poincare flow and sectional
//! Poincare maps between normal sections.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::field::{effective_lipschitz, VectorFieldSpec};
use crate::flowbox::{r0_for, ChartBounds, FlowboxChart};
use crate::integrate::{flow, OrbitSegment};
use crate::linalg;

/// Orthonormal basis of the hyperplane orthogonal to a unit direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFrame {
    #[serde(with = "linalg::serde_vec")]
    pub point: DVector<f64>,
    #[serde(with = "linalg::serde_vec")]
    pub direction: DVector<f64>,
    #[serde(with = "linalg::serde_vecs")]
    pub basis: Vec<DVector<f64>>,
}

impl NormalFrame {
    /// Frame of `N_x` with the deterministic canonical basis.
    pub fn at(field: &VectorFieldSpec, x: &DVector<f64>) -> Result<Self> {
        let value = field.value(x);
        let speed = value.norm();
        if speed <= field.singularity_tolerance() {
            return Err(FlowError::Singularity { time: 0.0, speed });
        }
        Ok(Self::for_direction(x, &(value / speed)))
    }

    /// Frame of `N_e` at `point`; `e` is normalized.
    pub fn for_direction(point: &DVector<f64>, e: &DVector<f64>) -> Self {
        let direction = linalg::unit(e);
        let basis = linalg::orthonormal_complement(&direction);
        NormalFrame {
            point: point.clone(),
            direction,
            basis,
        }
    }

    /// Frame at a new point and direction whose basis is the projection of
    /// this one, re-orthonormalized and completed canonically if needed.
    pub fn transport(&self, point: &DVector<f64>, e: &DVector<f64>) -> Self {
        let direction = linalg::unit(e);
        let projected: Vec<DVector<f64>> = self
            .basis
            .iter()
            .map(|b| b - &direction * direction.dot(b))
            .collect();
        let mut basis = linalg::gram_schmidt(&projected, std::slice::from_ref(&direction), 1e-6);
        if basis.len() < self.basis.len() {
            let canonical = linalg::orthonormal_complement(&direction);
            let mut against = vec![direction.clone()];
            against.extend(basis.iter().cloned());
            let extra = linalg::gram_schmidt(&canonical, &against, 1e-8);
            basis.extend(extra);
            basis.truncate(self.basis.len());
        }
        NormalFrame {
            point: point.clone(),
            direction,
            basis,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Basis as a `d x (d-1)` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        linalg::columns_to_matrix(&self.basis, self.point.len())
    }

    pub fn coords(&self, v: &DVector<f64>) -> DVector<f64> {
        self.matrix().transpose() * v
    }

    pub fn vector(&self, coords: &DVector<f64>) -> DVector<f64> {
        self.matrix() * coords
    }

    /// Largest deviation from orthonormality and orthogonality to the direction.
    pub fn defect(&self) -> f64 {
        let mut worst = (self.direction.norm() - 1.0).abs();
        for (i, a) in self.basis.iter().enumerate() {
            worst = worst.max(a.dot(&self.direction).abs());
            for (j, b) in self.basis.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((a.dot(b) - expect).abs());
            }
        }
        worst
    }
}

/// Linear map between two normal spaces, written in their bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalMap {
    #[serde(rename = "source_frame")]
    pub source: NormalFrame,
    #[serde(rename = "target_frame")]
    pub target: NormalFrame,
    #[serde(with = "linalg::serde_mat")]
    pub matrix: DMatrix<f64>,
}

impl NormalMap {
    /// Restriction of the ambient map `m` to the source space, followed by
    /// orthogonal projection onto the target space.
    pub fn from_ambient(source: NormalFrame, target: NormalFrame, m: &DMatrix<f64>) -> Self {
        let matrix = target.matrix().transpose() * m * source.matrix();
        NormalMap { source, target, matrix }
    }

    pub fn identity(frame: NormalFrame) -> Self {
        let k = frame.dim();
        NormalMap {
            source: frame.clone(),
            target: frame,
            matrix: DMatrix::identity(k, k),
        }
    }

    /// Ambient `d x d` form, zero on the source direction.
    pub fn ambient(&self) -> DMatrix<f64> {
        self.target.matrix() * &self.matrix * self.source.matrix().transpose()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.target.vector(&(&self.matrix * self.source.coords(v)))
    }

    pub fn norm(&self) -> f64 {
        linalg::op_norm(&self.matrix)
    }

    pub fn mininorm(&self) -> f64 {
        linalg::mininorm(&self.matrix)
    }

    /// `self o earlier`. The intermediate spaces must coincide; a change of
    /// basis reconciles their frames.
    pub fn compose(&self, earlier: &NormalMap) -> Result<NormalMap> {
        let a = &earlier.target;
        let b = &self.source;
        let scale = 1.0 + a.point.norm();
        if (&a.point - &b.point).norm() > 1e-6 * scale || (1.0 - a.direction.dot(&b.direction)).abs() > 1e-6 {
            return Err(FlowError::Invalid("composed normal maps do not share a space".into()));
        }
        let change = b.matrix().transpose() * a.matrix();
        Ok(NormalMap {
            source: earlier.source.clone(),
            target: self.target.clone(),
            matrix: &self.matrix * change * &earlier.matrix,
        })
    }

    /// Same map written in other bases of the same spaces.
    pub fn reframe(&self, source: &NormalFrame, target: &NormalFrame) -> NormalMap {
        NormalMap::from_ambient(source.clone(), target.clone(), &self.ambient())
    }
}

fn projector_off(e: &DVector<f64>) -> DMatrix<f64> {
    let d = e.len();
    DMatrix::identity(d, d) - e * e.transpose()
}

/// `psi_t` at a regular point, in canonical frames at both ends.
pub fn linear_poincare(field: &VectorFieldSpec, x: &DVector<f64>, t: f64, tol: f64) -> Result<NormalMap> {
    let source = NormalFrame::at(field, x)?;
    let (y, phi) = flow(field, x, t, tol)?;
    let target = match NormalFrame::at(field, &y) {
        Err(FlowError::Singularity { speed, .. }) => return Err(FlowError::Singularity { time: t, speed }),
        other => other?,
    };
    Ok(psi_between(source, target, &phi))
}

/// `psi` from a variational matrix, written in the given frames.
pub fn psi_between(source: NormalFrame, target: NormalFrame, phi: &DMatrix<f64>) -> NormalMap {
    let p = projector_off(&target.direction);
    NormalMap::from_ambient(source, target, &(p * phi))
}

/// `(Phi_t^#(e), psi~_t)` over the pair `(x, e)`.
pub fn extended_linear_poincare(
    field: &VectorFieldSpec,
    x: &DVector<f64>,
    e: &DVector<f64>,
    t: f64,
    tol: f64,
) -> Result<(DVector<f64>, NormalMap)> {
    let n = e.norm();
    if (n - 1.0).abs() > 1e-9 {
        return Err(FlowError::Invalid(format!("direction must be a unit vector (norm {n})")));
    }
    let source = NormalFrame::for_direction(x, e);
    let (y, phi) = flow(field, x, t, tol)?;
    let image = &phi * e;
    let image_norm = image.norm();
    if image_norm == 0.0 {
        return Err(FlowError::Invalid("direction annihilated by the tangent flow".into()));
    }
    let e_new = image / image_norm;
    let target = NormalFrame::for_direction(&y, &e_new);
    Ok((e_new, psi_between(source, target, &phi)))
}

/// Frames along the nodes of an orbit, each obtained by transporting the
/// previous one. Node 0 carries the canonical frame.
pub fn transported_frames(field: &VectorFieldSpec, orbit: &OrbitSegment) -> Result<Vec<NormalFrame>> {
    let mut frames: Vec<NormalFrame> = Vec::with_capacity(orbit.len());
    for (i, x) in orbit.states.iter().enumerate() {
        let frame = match frames.last() {
            None => NormalFrame::at(field, x),
            Some(prev) => {
                let value = field.value(x);
                if value.norm() <= field.singularity_tolerance() {
                    Err(FlowError::Singularity {
                        time: orbit.times[i],
                        speed: value.norm(),
                    })
                } else {
                    Ok(prev.transport(x, &value))
                }
            }
        };
        frames.push(frame?);
    }
    Ok(frames)
}

/// Node-to-node `psi` maps along an orbit with variational transitions.
pub fn node_maps(orbit: &OrbitSegment, frames: &[NormalFrame]) -> Result<Vec<NormalMap>> {
    let transitions = orbit
        .transitions
        .as_ref()
        .ok_or_else(|| FlowError::Invalid("orbit segment has no variational data".into()))?;
    Ok(transitions
        .iter()
        .enumerate()
        .map(|(i, phi)| psi_between(frames[i].clone(), frames[i + 1].clone(), phi))
        .collect())
}

/// `r1(t) = e^{-2 L |t|} r0 / 3` with `L = L_eff`.
pub fn r1_for(lipschitz: f64, t: f64) -> f64 {
    let l = effective_lipschitz(lipschitz);
    (-2.0 * l * t.abs()).exp() * r0_for(lipschitz) / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum DerivativeMethod {
    /// Central differences with step `relative_step * |X(x)|`.
    FiniteDifference { relative_step: f64 },
    /// Chain rule through the variational flow and the inverse flowbox
    /// derivative.
    Variational,
}

impl Default for DerivativeMethod {
    fn default() -> Self {
        DerivativeMethod::FiniteDifference { relative_step: 1e-5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionOptions {
    pub lipschitz: f64,
    pub tol: f64,
    #[serde(default)]
    pub bounds: ChartBounds,
    #[serde(default)]
    pub derivative: DerivativeMethod,
}

impl SectionOptions {
    pub fn new(lipschitz: f64, tol: f64) -> Self {
        SectionOptions {
            lipschitz,
            tol,
            bounds: ChartBounds::Enforced,
            derivative: DerivativeMethod::default(),
        }
    }

    pub fn relaxed(mut self) -> Self {
        self.bounds = ChartBounds::Relaxed;
        self
    }

    pub fn variational(mut self) -> Self {
        self.derivative = DerivativeMethod::Variational;
        self
    }
}

/// `P_{x,T}` from `N_x` to `N_{phi_T(x)}`: flow `x + v` for time `T`, then
/// project along the flow through the flowbox chart at `phi_T(x)`.
#[derive(Debug, Clone)]
pub struct SectionalPoincare<'a> {
    field: &'a VectorFieldSpec,
    pub source: NormalFrame,
    pub chart: FlowboxChart,
    pub time: f64,
    pub speed: f64,
    pub options: SectionOptions,
}

impl<'a> SectionalPoincare<'a> {
    pub fn new(field: &'a VectorFieldSpec, x: &DVector<f64>, time: f64, options: SectionOptions) -> Result<Self> {
        let source = NormalFrame::at(field, x)?;
        let speed = field.speed(x);
        let y = crate::integrate::flow_point(field, x, time, options.tol)?;
        let chart = match FlowboxChart::new(field, &y, options.lipschitz, options.tol) {
            Err(FlowError::Singularity { speed, .. }) => return Err(FlowError::Singularity { time, speed }),
            other => other?,
        }
        .with_bounds(options.bounds);
        Ok(SectionalPoincare {
            field,
            source,
            chart,
            time,
            speed,
            options,
        })
    }

    /// Frame of the target section (the chart's normal frame).
    pub fn target(&self) -> NormalFrame {
        NormalFrame {
            point: self.chart.base.clone(),
            direction: self.chart.flow_dir.clone(),
            basis: self.chart.normal_frame.clone(),
        }
    }

    /// `r1(T) |X(x)|`.
    pub fn radius(&self) -> f64 {
        r1_for(self.options.lipschitz, self.time) * self.speed
    }

    fn check_radius(&self, v: &DVector<f64>) -> Result<()> {
        if self.source.direction.dot(v).abs() > 1e-9 * (v.norm() + self.speed) {
            return Err(FlowError::BoxBounds("section argument is not a normal vector".into()));
        }
        if self.options.bounds == ChartBounds::Enforced {
            let radius = self.radius();
            if v.norm() > radius * (1.0 + 1e-9) {
                return Err(FlowError::Radius {
                    rescaled: v.norm() / self.speed,
                    radius: radius / self.speed,
                });
            }
        }
        Ok(())
    }

    fn raw(&self, v: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let start = &self.source.point + v;
        let y = crate::integrate::flow_point(self.field, &start, self.time, self.options.tol)?;
        self.chart.invert(self.field, &y)
    }

    /// `P_{x,T}(v)` as an ambient vector in `N_{phi_T(x)}`.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_radius(v)?;
        Ok(self.raw(v)?.0)
    }

    /// `(P_{x,T}(v), D_v P_{x,T})`, the derivative in the source and target frames.
    pub fn apply_with_derivative(&self, v: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_radius(v)?;
        match self.options.derivative {
            DerivativeMethod::FiniteDifference { relative_step } => {
                let (u, _) = self.raw(v)?;
                let h = relative_step * self.speed;
                let k = self.source.dim();
                let mut d = DMatrix::zeros(k, k);
                for (j, n) in self.source.basis.iter().enumerate() {
                    let (up, _) = self.raw(&(v + n * h))?;
                    let (um, _) = self.raw(&(v - n * h))?;
                    let col = self.chart.coords(&((up - um) / (2.0 * h)));
                    d.set_column(j, &col);
                }
                Ok((u, d))
            }
            DerivativeMethod::Variational => {
                let start = &self.source.point + v;
                let (y, phi_t) = flow(self.field, &start, self.time, self.options.tol)?;
                let (u, s) = self.chart.invert(self.field, &y)?;
                let (image, phi_s) = flow(self.field, &(&self.chart.base + &u), s, self.options.tol)?;
                let mut cols: Vec<DVector<f64>> = self.chart.normal_frame.iter().map(|n| &phi_s * n).collect();
                cols.push(self.field.value(&image));
                let jac = linalg::columns_to_matrix(&cols, self.chart.dim());
                let lu = jac.lu();
                let k = self.source.dim();
                let mut d = DMatrix::zeros(k, k);
                for (j, n) in self.source.basis.iter().enumerate() {
                    let w = &phi_t * n;
                    let sol = lu
                        .solve(&w)
                        .ok_or_else(|| FlowError::NotInBox("singular flowbox derivative".into()))?;
                    d.set_column(j, &sol.rows(0, k).into_owned());
                }
                Ok((u, d))
            }
        }
    }

    /// `psi_T` in the same frames as the derivative.
    pub fn psi(&self) -> Result<NormalMap> {
        let (_, phi) = flow(self.field, &self.source.point, self.time, self.options.tol)?;
        Ok(psi_between(self.source.clone(), self.target(), &phi))
    }
}

/// One-shot `(P_{x,T}(v), D_v P_{x,T})`.
pub fn sectional_poincare(
    field: &VectorFieldSpec,
    x: &DVector<f64>,
    time: f64,
    v: &DVector<f64>,
    options: SectionOptions,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    SectionalPoincare::new(field, x, time, options)?.apply_with_derivative(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, d: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    }

    #[test]
    fn psi_on_saddle_contracts_normal_axis() {
        let f = VectorFieldSpec::diagonal(&[1.0, -1.0], 10.0);
        let x = e(0, 2);
        let m = linear_poincare(&f, &x, 1.0, 1e-11).unwrap();
        let image = m.apply(&e(1, 2));
        assert!((image.norm() - (-1.0f64).exp()).abs() < 1e-9);
        let id = linear_poincare(&f, &x, 0.0, 1e-11).unwrap();
        assert!((id.matrix.clone() - DMatrix::identity(1, 1)).norm() < 1e-15);
    }

    #[test]
    fn rotation_psi_is_isometric() {
        let f = VectorFieldSpec::rotation(3.0);
        for t in [0.3, 1.0, 2.5] {
            let m = linear_poincare(&f, &e(0, 2), t, 1e-11).unwrap();
            assert!((m.norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn extended_at_linear_singularity() {
        let f = VectorFieldSpec::diagonal(&[-3.0, -1.0, 2.0], 5.0);
        let t = 0.7;
        let (dir, m) = extended_linear_poincare(&f, &DVector::zeros(3), &e(2, 3), t, 1e-12).unwrap();
        assert!((dir - e(2, 3)).norm() < 1e-12);
        let a = m.ambient();
        assert!((a[(0, 0)] - (-3.0 * t).exp()).abs() < 1e-9);
        assert!((a[(1, 1)] - (-t).exp()).abs() < 1e-9);
        assert!(a[(2, 2)].abs() < 1e-12);
    }

    #[test]
    fn extended_agrees_with_psi_on_flow_direction() {
        let f = VectorFieldSpec::lorenz_standard();
        let x = DVector::from_vec(vec![1.0, 3.0, 18.0]);
        let e = linalg::unit(&f.value(&x));
        let (_, ext) = extended_linear_poincare(&f, &x, &e, 0.4, 1e-12).unwrap();
        let psi = linear_poincare(&f, &x, 0.4, 1e-12).unwrap();
        let diff = (ext.ambient() - psi.ambient()).norm() / psi.ambient().norm();
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn psi_cocycle_through_transported_frames() {
        let f = VectorFieldSpec::lorenz_standard();
        let x = DVector::from_vec(vec![1.0, 3.0, 18.0]);
        let tol = 1e-11;
        let first = linear_poincare(&f, &x, 0.2, tol).unwrap();
        let y = first.target.point.clone();
        let second = linear_poincare(&f, &y, 0.3, tol).unwrap();
        let whole = linear_poincare(&f, &x, 0.5, tol).unwrap();
        let chained = second.compose(&first).unwrap();
        let diff = (chained.ambient() - whole.ambient()).norm() / whole.ambient().norm();
        assert!(diff < 10.0 * 1e-9, "{diff}");
    }

    #[test]
    fn transport_keeps_frames_orthonormal() {
        let f = VectorFieldSpec::lorenz_standard();
        let x = DVector::from_vec(vec![1.0, 3.0, 18.0]);
        let orbit = OrbitSegment::uniform(&f, &x, 0.05, 20, 1e-10, true).unwrap();
        let frames = transported_frames(&f, &orbit).unwrap();
        for fr in &frames {
            assert!(fr.defect() < 1e-12);
        }
        let maps = node_maps(&orbit, &frames).unwrap();
        assert_eq!(maps.len(), 20);
    }

    #[test]
    fn sectional_map_on_saddle_is_exact() {
        let f = VectorFieldSpec::diagonal(&[1.0, -1.0], 10.0);
        let opts = SectionOptions::new(1.05, 1e-12);
        let sec = SectionalPoincare::new(&f, &e(0, 2), 1.0, opts).unwrap();
        let a = 0.5 * sec.radius();
        let (u, d) = sec.apply_with_derivative(&(e(1, 2) * a)).unwrap();
        assert!((u[1] - a * (-1.0f64).exp()).abs() < 1e-12);
        assert!((d[(0, 0)].abs() - (-1.0f64).exp()).abs() < 1e-8);
        let too_far = e(1, 2) * (2.0 * sec.radius());
        assert!(matches!(sec.apply(&too_far), Err(FlowError::Radius { .. })));
    }

    #[test]
    fn variational_derivative_matches_fd_on_lorenz() {
        let f = VectorFieldSpec::lorenz_standard();
        let x = DVector::from_vec(vec![1.0, 3.0, 18.0]);
        let opts = SectionOptions::new(60.0, 1e-11).relaxed();
        let fd = SectionalPoincare::new(&f, &x, 0.3, opts).unwrap();
        let var = SectionalPoincare::new(&f, &x, 0.3, opts.variational()).unwrap();
        let v = &fd.source.basis[0] * (1e-3 * fd.speed);
        let (u1, d1) = fd.apply_with_derivative(&v).unwrap();
        let (u2, d2) = var.apply_with_derivative(&v).unwrap();
        assert!((u1 - u2).norm() < 1e-8 * fd.speed);
        assert!((&d1 - &d2).norm() / d2.norm() < 1e-4);
    }
}
