//! Adaptive Dormand-Prince 5(4) integration of the flow jointly with its
//! variational equation `dPhi/dt = DX(phi_t x) Phi`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::field::VectorFieldSpec;
use crate::linalg;

// The fields are autonomous, so the stage times never enter.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const MAX_STEPS: usize = 1_000_000;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// One accepted step with its dense-output polynomial.
#[derive(Debug, Clone)]
struct DenseStep {
    t0: f64,
    h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseStep {
    fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
    }
}

/// Augmented right-hand side: state followed by a row-major d x d matrix.
struct System<'a> {
    field: &'a VectorFieldSpec,
    d: usize,
    variational: bool,
    jac: Vec<f64>,
}

impl<'a> System<'a> {
    fn new(field: &'a VectorFieldSpec, variational: bool) -> Self {
        let d = field.dim();
        System {
            field,
            d,
            variational,
            jac: vec![0.0; d * d],
        }
    }

    fn len(&self) -> usize {
        if self.variational {
            self.d + self.d * self.d
        } else {
            self.d
        }
    }

    fn rhs(&mut self, y: &[f64], out: &mut [f64]) {
        let d = self.d;
        self.field.value_into(&y[..d], &mut out[..d]);
        if self.variational {
            self.field.jacobian_into(&y[..d], &mut self.jac);
            let phi = &y[d..];
            let dphi = &mut out[d..];
            for i in 0..d {
                for j in 0..d {
                    let mut s = 0.0;
                    for k in 0..d {
                        s += self.jac[i * d + k] * phi[k * d + j];
                    }
                    dphi[i * d + j] = s;
                }
            }
        }
    }
}

/// Dormand-Prince stepper in one time direction.
struct Stepper<'a> {
    sys: System<'a>,
    tol: f64,
    dir: f64,
    t: f64,
    y: Vec<f64>,
    h: f64,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    steps: usize,
}

impl<'a> Stepper<'a> {
    fn new(field: &'a VectorFieldSpec, x: &[f64], tol: f64, dir: f64, variational: bool) -> Self {
        let mut sys = System::new(field, variational);
        let n = sys.len();
        let d = field.dim();
        let mut y = vec![0.0; n];
        y[..d].copy_from_slice(x);
        if variational {
            for i in 0..d {
                y[d + i * d + i] = 1.0;
            }
        }
        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        sys.rhs(&y, &mut k[0]);
        let mut s = Stepper {
            sys,
            tol,
            dir,
            t: 0.0,
            y,
            h: 0.0,
            k,
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
            steps: 0,
        };
        s.h = s.initial_step();
        s
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.tol + self.tol * a.abs().max(b.abs())
    }

    fn initial_step(&mut self) -> f64 {
        let n = self.y.len();
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..n {
            let sk = self.scale(self.y[i], 0.0);
            dnf += (self.k[0][i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            0.01 * (dny / dnf).sqrt()
        };
        h = h.min(1.0);
        for i in 0..n {
            self.ytmp[i] = self.y[i] + self.dir * h * self.k[0][i];
        }
        let ytmp = self.ytmp.clone();
        self.sys.rhs(&ytmp, &mut self.k[1]);
        let mut der2 = 0.0;
        for i in 0..n {
            let sk = self.scale(self.y[i], 0.0);
            der2 += ((self.k[1][i] - self.k[0][i]) / sk).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (1e-6f64).max(h * 1e-3)
        } else {
            (0.01 / der12).powf(0.2)
        };
        (100.0 * h).min(h1).min(1.0)
    }

    /// Attempts steps until one is accepted. `limit` caps the step length.
    fn advance(&mut self, limit: Option<f64>) -> Result<DenseStep> {
        let n = self.y.len();
        loop {
            self.steps += 1;
            if self.steps > MAX_STEPS {
                return Err(FlowError::Stiffness { time: self.t });
            }
            if self.h < 1e-14 * self.t.abs().max(1.0) {
                return Err(FlowError::Stiffness { time: self.t });
            }
            let h = limit.map_or(self.h, |l| self.h.min(l));
            let hs = self.dir * h;
            let (k_first, k_rest) = self.k.split_at_mut(1);
            let k1 = &k_first[0];
            let y = &self.y;
            let ytmp = &mut self.ytmp;
            for i in 0..n {
                ytmp[i] = y[i] + hs * A21 * k1[i];
            }
            self.sys.rhs(ytmp, &mut k_rest[0]);
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k_rest[0][i]);
            }
            self.sys.rhs(ytmp, &mut k_rest[1]);
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k_rest[0][i] + A43 * k_rest[1][i]);
            }
            self.sys.rhs(ytmp, &mut k_rest[2]);
            for i in 0..n {
                ytmp[i] = y[i]
                    + hs * (A51 * k1[i] + A52 * k_rest[0][i] + A53 * k_rest[1][i] + A54 * k_rest[2][i]);
            }
            self.sys.rhs(ytmp, &mut k_rest[3]);
            for i in 0..n {
                ytmp[i] = y[i]
                    + hs * (A61 * k1[i]
                        + A62 * k_rest[0][i]
                        + A63 * k_rest[1][i]
                        + A64 * k_rest[2][i]
                        + A65 * k_rest[3][i]);
            }
            self.sys.rhs(ytmp, &mut k_rest[4]);
            for i in 0..n {
                self.ynew[i] = y[i]
                    + hs * (A71 * k1[i]
                        + A73 * k_rest[1][i]
                        + A74 * k_rest[2][i]
                        + A75 * k_rest[3][i]
                        + A76 * k_rest[4][i]);
            }
            let ynew = &self.ynew;
            self.sys.rhs(ynew, &mut k_rest[5]);

            let mut err = 0.0;
            for i in 0..n {
                let e = hs
                    * (E1 * k1[i]
                        + E3 * k_rest[1][i]
                        + E4 * k_rest[2][i]
                        + E5 * k_rest[3][i]
                        + E6 * k_rest[4][i]
                        + E7 * k_rest[5][i]);
                let sk = self.tol + self.tol * y[i].abs().max(ynew[i].abs());
                err += (e / sk).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                self.h = h * FAC_MIN;
                continue;
            }
            let fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            if err <= 1.0 {
                let mut rcont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
                for i in 0..n {
                    let ydiff = ynew[i] - y[i];
                    let bspl = hs * k1[i] - ydiff;
                    rcont[0][i] = y[i];
                    rcont[1][i] = ydiff;
                    rcont[2][i] = bspl;
                    rcont[3][i] = ydiff - hs * k_rest[5][i] - bspl;
                    rcont[4][i] = hs
                        * (D1 * k1[i]
                            + D3 * k_rest[1][i]
                            + D4 * k_rest[2][i]
                            + D5 * k_rest[3][i]
                            + D6 * k_rest[4][i]
                            + D7 * k_rest[5][i]);
                }
                let step = DenseStep {
                    t0: self.t,
                    h: hs,
                    rcont,
                };
                self.t += hs;
                self.y.copy_from_slice(&self.ynew);
                let last = self.k[6].clone();
                self.k[0].copy_from_slice(&last);
                self.h = h * fac;
                return Ok(step);
            }
            self.h = h * fac.min(1.0);
        }
    }
}

fn exit_time(field: &VectorFieldSpec, step: &DenseStep) -> f64 {
    let d = field.dim();
    let n = step.rcont[0].len();
    let mut buf = vec![0.0; n];
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        step.eval_into(step.t0 + mid * step.h, &mut buf);
        if field.domain.contains(&buf[..d]) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    step.t0 + hi * step.h
}

fn split_state(d: usize, y: &[f64], variational: bool) -> (DVector<f64>, DMatrix<f64>) {
    let x = DVector::from_column_slice(&y[..d]);
    let phi = if variational {
        DMatrix::from_row_slice(d, d, &y[d..d + d * d])
    } else {
        DMatrix::identity(d, d)
    };
    (x, phi)
}

fn check_inputs(field: &VectorFieldSpec, x: &DVector<f64>, tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(FlowError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    if x.len() != field.dim() {
        return Err(FlowError::Domain("point dimension differs from the field".into()));
    }
    if !field.domain.contains(x.as_slice()) {
        return Err(FlowError::Domain(format!(
            "initial point {:?} outside the domain",
            x.as_slice()
        )));
    }
    Ok(())
}

fn integrate(
    field: &VectorFieldSpec,
    x: &DVector<f64>,
    t: f64,
    tol: f64,
    variational: bool,
) -> Result<Vec<f64>> {
    check_inputs(field, x, tol)?;
    let d = field.dim();
    let dir = if t < 0.0 { -1.0 } else { 1.0 };
    let mut st = Stepper::new(field, x.as_slice(), tol, dir, variational);
    if t == 0.0 {
        return Ok(st.y);
    }
    let target = t.abs();
    loop {
        let remaining = target - st.t.abs();
        if remaining <= 1e-15 * target.max(1.0) {
            break;
        }
        let step = st.advance(Some(remaining))?;
        if !field.domain.contains(&st.y[..d]) {
            return Err(FlowError::Escape {
                time: exit_time(field, &step),
            });
        }
    }
    Ok(st.y)
}

/// `(phi_t(x), Phi_t(x))`, hitting `t` exactly.
pub fn flow(
    field: &VectorFieldSpec,
    x: &DVector<f64>,
    t: f64,
    tol: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let y = integrate(field, x, t, tol, true)?;
    Ok(split_state(field.dim(), &y, true))
}

/// `phi_t(x)` without the variational equation.
pub fn flow_point(field: &VectorFieldSpec, x: &DVector<f64>, t: f64, tol: f64) -> Result<DVector<f64>> {
    let y = integrate(field, x, t, tol, false)?;
    Ok(DVector::from_column_slice(&y[..field.dim()]))
}

/// Dense orbit of one point over `[t_min, t_max]` (with `t_min <= 0 <= t_max`).
///
/// Steps are never clipped at the window ends, so the step sequence and the
/// interpolated values do not depend on the requested window.
#[derive(Debug, Clone)]
pub struct Trajectory {
    base: DVector<f64>,
    dim: usize,
    variational: bool,
    forward: Vec<DenseStep>,
    backward: Vec<DenseStep>,
    t_min: f64,
    t_max: f64,
}

impl Trajectory {
    pub fn new(
        field: &VectorFieldSpec,
        x: &DVector<f64>,
        t_min: f64,
        t_max: f64,
        tol: f64,
        variational: bool,
    ) -> Result<Self> {
        check_inputs(field, x, tol)?;
        if !(t_min <= 0.0 && t_max >= 0.0) {
            return Err(FlowError::Invalid("trajectory window must contain 0".into()));
        }
        let forward = Self::piece(field, x, t_max, tol, 1.0, variational)?;
        let backward = Self::piece(field, x, -t_min, tol, -1.0, variational)?;
        Ok(Trajectory {
            base: x.clone(),
            dim: field.dim(),
            variational,
            forward,
            backward,
            t_min,
            t_max,
        })
    }

    fn piece(
        field: &VectorFieldSpec,
        x: &DVector<f64>,
        span: f64,
        tol: f64,
        dir: f64,
        variational: bool,
    ) -> Result<Vec<DenseStep>> {
        let d = field.dim();
        let mut steps = Vec::new();
        if span <= 0.0 {
            return Ok(steps);
        }
        let mut st = Stepper::new(field, x.as_slice(), tol, dir, variational);
        while st.t.abs() < span {
            let step = st.advance(None)?;
            if !field.domain.contains(&st.y[..d]) {
                let te = exit_time(field, &step);
                if te.abs() < span {
                    return Err(FlowError::Escape { time: te });
                }
                steps.push(step);
                break;
            }
            steps.push(step);
        }
        Ok(steps)
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.base
    }

    fn raw(&self, t: f64) -> Result<Vec<f64>> {
        let n = if self.variational {
            self.dim + self.dim * self.dim
        } else {
            self.dim
        };
        let mut out = vec![0.0; n];
        if t == 0.0 {
            out[..self.dim].copy_from_slice(self.base.as_slice());
            if self.variational {
                for i in 0..self.dim {
                    out[self.dim + i * self.dim + i] = 1.0;
                }
            }
            return Ok(out);
        }
        let steps = if t > 0.0 { &self.forward } else { &self.backward };
        let within = |s: &DenseStep| {
            let (a, b) = (s.t0.min(s.t1()), s.t0.max(s.t1()));
            t >= a && t <= b
        };
        let idx = if t > 0.0 {
            steps.partition_point(|s| s.t1() < t)
        } else {
            steps.partition_point(|s| s.t1() > t)
        };
        match steps.get(idx) {
            Some(s) if within(s) => {
                s.eval_into(t, &mut out);
                Ok(out)
            }
            _ => Err(FlowError::Domain(format!(
                "time {t} outside the trajectory window [{}, {}]",
                self.t_min, self.t_max
            ))),
        }
    }

    pub fn state(&self, t: f64) -> Result<DVector<f64>> {
        let y = self.raw(t)?;
        Ok(DVector::from_column_slice(&y[..self.dim]))
    }

    /// `(phi_t(x), Phi_t(x))`; requires a variational trajectory.
    pub fn state_and_variational(&self, t: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if !self.variational {
            return Err(FlowError::Invalid("trajectory was built without variational data".into()));
        }
        let y = self.raw(t)?;
        Ok(split_state(self.dim, &y, true))
    }
}

/// Samples of one orbit on a time grid, with optional variational matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    #[serde(with = "linalg::serde_vec")]
    pub base: DVector<f64>,
    pub times: Vec<f64>,
    #[serde(with = "linalg::serde_vecs")]
    pub states: Vec<DVector<f64>>,
    pub speeds: Vec<f64>,
    /// `Phi_{t_i}(base)` per node.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_mats")]
    pub variational: Option<Vec<DMatrix<f64>>>,
    /// `Phi_{t_{i+1} - t_i}(states[i])` per interval.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_mats")]
    pub transitions: Option<Vec<DMatrix<f64>>>,
}

mod opt_mats {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Vec<DMatrix<f64>>>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref()
            .map(|v| v.iter().map(crate::linalg::matrix_to_rows).collect::<Vec<_>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<DMatrix<f64>>>, D::Error> {
        use serde::de::Error;
        let raw = Option::<Vec<Vec<Vec<f64>>>>::deserialize(d)?;
        raw.map(|all| {
            all.iter()
                .map(|r| crate::linalg::matrix_from_rows(r).ok_or_else(|| D::Error::custom("ragged matrix")))
                .collect()
        })
        .transpose()
    }
}

impl OrbitSegment {
    /// Integrates node to node through `times`, which must be strictly
    /// increasing and contain 0; `base` is the state at time 0.
    pub fn compute(
        field: &VectorFieldSpec,
        base: &DVector<f64>,
        times: &[f64],
        tol: f64,
        variational: bool,
    ) -> Result<Self> {
        check_inputs(field, base, tol)?;
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FlowError::Invalid("time grid must be strictly increasing".into()));
        }
        let zero = times
            .iter()
            .position(|t| *t == 0.0)
            .ok_or_else(|| FlowError::Invalid("time grid must contain 0".into()))?;
        let n = times.len();
        let d = field.dim();
        let mut states = vec![DVector::zeros(d); n];
        let mut cumulative = vec![DMatrix::identity(d, d); n];
        let mut transitions = vec![DMatrix::identity(d, d); n.saturating_sub(1)];
        states[zero] = base.clone();
        for i in zero..n - 1 {
            let y = integrate(field, &states[i], times[i + 1] - times[i], tol, variational)?;
            let (x, phi) = split_state(d, &y, variational);
            states[i + 1] = x;
            cumulative[i + 1] = &phi * &cumulative[i];
            transitions[i] = phi;
        }
        for i in (0..zero).rev() {
            let y = integrate(field, &states[i + 1], times[i] - times[i + 1], tol, variational)?;
            let (x, phi_back) = split_state(d, &y, variational);
            states[i] = x;
            cumulative[i] = &phi_back * &cumulative[i + 1];
            // forward transition is the inverse of the backward one
            transitions[i] = if variational {
                let y = integrate(field, &states[i], times[i + 1] - times[i], tol, true)?;
                split_state(d, &y, true).1
            } else {
                DMatrix::identity(d, d)
            };
        }
        let speeds = states.iter().map(|s| field.speed(s)).collect();
        Ok(OrbitSegment {
            base: base.clone(),
            times: times.to_vec(),
            states,
            speeds,
            variational: variational.then_some(cumulative),
            transitions: variational.then_some(transitions),
        })
    }

    /// Uniform grid `0, step, ..., n_steps * step`.
    pub fn uniform(
        field: &VectorFieldSpec,
        base: &DVector<f64>,
        step: f64,
        n_steps: usize,
        tol: f64,
        variational: bool,
    ) -> Result<Self> {
        let times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * step).collect();
        Self::compute(field, base, &times, tol, variational)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn min_speed(&self) -> f64 {
        self.speeds.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_speed(&self) -> f64 {
        self.speeds.iter().copied().fold(0.0, f64::max)
    }

    /// Largest relative defect of the stored speeds and of the variational
    /// cocycle relation `Phi_{t_{i+1}} = Phi_{t_{i+1}-t_i}(x_i) Phi_{t_i}`.
    pub fn invariant_defects(&self, field: &VectorFieldSpec) -> (f64, f64) {
        let speed_defect = self
            .states
            .iter()
            .zip(&self.speeds)
            .map(|(s, v)| {
                let r = field.speed(s);
                (r - v).abs() / r.max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max);
        let cocycle_defect = match (&self.variational, &self.transitions) {
            (Some(cum), Some(tr)) => (0..tr.len())
                .map(|i| {
                    let lhs = &cum[i + 1];
                    let rhs = &tr[i] * &cum[i];
                    (lhs - &rhs).norm() / lhs.norm()
                })
                .fold(0.0, f64::max),
            _ => 0.0,
        };
        (speed_defect, cocycle_defect)
    }

    /// CSV with columns `t, x_1..x_d, speed`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.base.len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        header.push("speed".into());
        w.write_record(&header).map_err(io_err)?;
        for ((t, s), v) in self.times.iter().zip(&self.states).zip(&self.speeds) {
            let mut row = vec![format!("{t:e}")];
            row.extend(s.iter().map(|c| format!("{c:e}")));
            row.push(format!("{v:e}"));
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(|e| FlowError::Invalid(e.to_string()))?;
        Ok(())
    }
}

fn io_err(e: csv::Error) -> FlowError {
    FlowError::Invalid(format!("csv output failed: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_saddle_closed_form() {
        let f = VectorFieldSpec::diagonal(&[1.0, -1.0], 10.0);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let (y, phi) = flow(&f, &x, 2f64.ln(), 1e-11).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-9 && y[1].abs() < 1e-12);
        assert!((phi[(0, 0)] - 2.0).abs() < 1e-9);
        assert!((phi[(1, 1)] - 0.5).abs() < 1e-9);
        assert!(phi[(0, 1)].abs() < 1e-14 && phi[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn zero_time_is_identity() {
        let f = VectorFieldSpec::lorenz_standard();
        let x = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let (y, phi) = flow(&f, &x, 0.0, 1e-9).unwrap();
        assert_eq!(y, x);
        assert_eq!(phi, DMatrix::identity(3, 3));
    }

    #[test]
    fn escape_reports_exit_time() {
        let f = VectorFieldSpec::diagonal(&[1.0, -1.0], 2.0);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        match flow(&f, &x, 2.0, 1e-10) {
            Err(FlowError::Escape { time }) => assert!((time - 2f64.ln()).abs() < 1e-6, "{time}"),
            other => panic!("expected escape, got {other:?}"),
        }
    }

    #[test]
    fn backward_flow_inverts_forward() {
        let f = VectorFieldSpec::lorenz_standard();
        let x = DVector::from_vec(vec![1.0, 1.0, 20.0]);
        let y = flow_point(&f, &x, 0.3, 1e-11).unwrap();
        let z = flow_point(&f, &y, -0.3, 1e-11).unwrap();
        assert!((z - x).norm() < 1e-7);
    }

    #[test]
    fn trajectory_matches_exact_flow() {
        let f = VectorFieldSpec::rotation(3.0);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let tr = Trajectory::new(&f, &x, -2.0, 5.0, 1e-10, true).unwrap();
        for t in [-1.7, -0.2, 0.0, 0.4, 3.3, 5.0] {
            let (y, phi) = tr.state_and_variational(t).unwrap();
            assert!((y[0] - t.cos()).abs() < 1e-8 && (y[1] - t.sin()).abs() < 1e-8);
            assert!((phi[(0, 0)] - t.cos()).abs() < 1e-8);
        }
        assert!(tr.state(5.5).is_err() || tr.state(5.5).is_ok());
    }

    #[test]
    fn orbit_segment_invariants() {
        let f = VectorFieldSpec::lorenz_standard();
        let x = DVector::from_vec(vec![1.0, 1.0, 20.0]);
        let times: Vec<f64> = (-3..=6).map(|i| i as f64 * 0.1).collect();
        let seg = OrbitSegment::compute(&f, &x, &times, 1e-10, true).unwrap();
        let (speed, cocycle) = seg.invariant_defects(&f);
        assert!(speed <= 1e-9);
        assert!(cocycle <= 1e-9, "{cocycle}");
        let mut buf = Vec::new();
        seg.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x_1,x_2,x_3,speed"));
        let json = serde_json::to_string(&seg).unwrap();
        let back: OrbitSegment = serde_json::from_str(&json).unwrap();
        assert_eq!(back, seg);
    }
}
