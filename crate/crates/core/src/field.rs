//! Vector fields on axis-aligned boxes of R^d with analytic Jacobians.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::linalg;

/// Safety factor applied to sampled Jacobian norms.
pub const LIPSCHITZ_SAFETY: f64 = 1.05;

/// Floor applied to Lipschitz constants before they enter `r0 = 1/(10 L)`.
pub const LIPSCHITZ_FLOOR: f64 = 1e-2;

/// Relative singularity tolerance: `|X(x)| <= 1e-12 * diam(domain)`.
pub const SINGULARITY_RELATIVE: f64 = 1e-12;

/// `max(L, LIPSCHITZ_FLOOR)`.
pub fn effective_lipschitz(l: f64) -> f64 {
    l.max(LIPSCHITZ_FLOOR)
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = Domain { lower, upper };
        d.validate()?;
        Ok(d)
    }

    pub fn cube(dim: usize, half_width: f64) -> Self {
        Domain {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(FlowError::Domain("box bounds have mismatched dimension".into()));
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
        {
            return Err(FlowError::Domain("empty or unbounded box".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)),
        )
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| rng.gen_range(*l..*u)),
        )
    }

    /// Signed box distance: negative inside, zero on the boundary.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| {
                let c = 0.5 * (l + u);
                let h = 0.5 * (u - l);
                (v - c).abs() - h
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn intersects(&self, other: &Domain) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(other.lower.iter().zip(&other.upper))
            .all(|((l1, u1), (l2, u2))| l1 <= u2 && l2 <= u1)
    }
}

/// The builtin field families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldKind {
    /// `X(x) = A x`.
    Linear { matrix: Vec<Vec<f64>> },
    /// Planar rigid rotation `X(x, y) = (-y, x)`.
    Rotation,
    /// Lorenz system; all three parameters are required.
    Lorenz { sigma: f64, rho: f64, beta: f64 },
    /// Suspension of a planar saddle by a constant vertical drift,
    /// `X(x, y, z) = (expanding * x, -contracting * y, drift)`. Nonsingular
    /// whenever `drift != 0`.
    SaddleSuspension {
        expanding: f64,
        contracting: f64,
        drift: f64,
    },
}

impl FieldKind {
    pub fn registry() -> &'static [(&'static str, &'static str)] {
        &[
            ("linear", "X(x) = A x for a square matrix A (any dimension >= 2)"),
            ("rotation", "planar rotation X(x, y) = (-y, x)"),
            ("lorenz", "Lorenz system with explicit sigma, rho, beta (dimension 3)"),
            (
                "saddle-suspension",
                "X(x, y, z) = (expanding x, -contracting y, drift) (dimension 3)",
            ),
        ]
    }
}

/// A named C^1 vector field on a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
    pub domain: Domain,
    #[serde(skip)]
    matrix_cache: Option<DMatrix<f64>>,
}

impl VectorFieldSpec {
    pub fn new(name: impl Into<String>, kind: FieldKind, domain: Domain) -> Result<Self> {
        domain.validate()?;
        let mut spec = VectorFieldSpec {
            name: name.into(),
            kind,
            domain,
            matrix_cache: None,
        };
        spec.prepare()?;
        Ok(spec)
    }

    /// Validates the parameters and caches derived data. Called by `new`;
    /// call again after deserializing.
    pub fn prepare(&mut self) -> Result<()> {
        self.domain.validate()?;
        let d = self.domain.dim();
        match &self.kind {
            FieldKind::Linear { matrix } => {
                let a = linalg::matrix_from_rows(matrix)
                    .ok_or_else(|| FlowError::Invalid("ragged linear matrix".into()))?;
                if a.nrows() != a.ncols() || a.nrows() != d {
                    return Err(FlowError::Invalid(format!(
                        "linear matrix must be {d}x{d} to match the domain"
                    )));
                }
                if d < 2 {
                    return Err(FlowError::Invalid("dimension must be >= 2".into()));
                }
                self.matrix_cache = Some(a);
            }
            FieldKind::Rotation => {
                if d != 2 {
                    return Err(FlowError::Invalid("rotation field is planar".into()));
                }
            }
            FieldKind::Lorenz { sigma, rho, beta } => {
                if d != 3 {
                    return Err(FlowError::Invalid("lorenz field has dimension 3".into()));
                }
                if ![sigma, rho, beta].iter().all(|p| p.is_finite()) {
                    return Err(FlowError::Invalid("lorenz parameters must be finite".into()));
                }
            }
            FieldKind::SaddleSuspension { .. } => {
                if d != 3 {
                    return Err(FlowError::Invalid(
                        "saddle-suspension field has dimension 3".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn linear(name: &str, a: DMatrix<f64>, domain: Domain) -> Result<Self> {
        Self::new(
            name,
            FieldKind::Linear {
                matrix: linalg::matrix_to_rows(&a),
            },
            domain,
        )
    }

    pub fn diagonal(entries: &[f64], half_width: f64) -> Self {
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(entries));
        Self::linear("linear", a, Domain::cube(entries.len(), half_width))
            .expect("diagonal field is valid")
    }

    pub fn rotation(half_width: f64) -> Self {
        Self::new("rotation", FieldKind::Rotation, Domain::cube(2, half_width))
            .expect("rotation field is valid")
    }

    pub fn lorenz(sigma: f64, rho: f64, beta: f64, domain: Domain) -> Result<Self> {
        Self::new("lorenz", FieldKind::Lorenz { sigma, rho, beta }, domain)
    }

    /// Lorenz field on the box `[-25,25] x [-30,30] x [0,55]` widened slightly
    /// below `z = 0` so that the origin is interior.
    pub fn lorenz_standard() -> Self {
        Self::lorenz(
            10.0,
            28.0,
            8.0 / 3.0,
            Domain {
                lower: vec![-25.0, -30.0, -5.0],
                upper: vec![25.0, 30.0, 55.0],
            },
        )
        .expect("lorenz field is valid")
    }

    pub fn saddle_suspension(expanding: f64, contracting: f64, drift: f64, domain: Domain) -> Result<Self> {
        Self::new(
            "saddle-suspension",
            FieldKind::SaddleSuspension {
                expanding,
                contracting,
                drift,
            },
            domain,
        )
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn params(&self) -> Vec<f64> {
        match &self.kind {
            FieldKind::Linear { matrix } => matrix.iter().flatten().copied().collect(),
            FieldKind::Rotation => Vec::new(),
            FieldKind::Lorenz { sigma, rho, beta } => vec![*sigma, *rho, *beta],
            FieldKind::SaddleSuspension {
                expanding,
                contracting,
                drift,
            } => vec![*expanding, *contracting, *drift],
        }
    }

    pub fn singularity_tolerance(&self) -> f64 {
        SINGULARITY_RELATIVE * self.domain.diameter()
    }

    /// Field value without domain checks.
    pub fn value_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            FieldKind::Linear { .. } => {
                let a = self.matrix_cache.as_ref().expect("prepared linear field");
                let d = a.nrows();
                for i in 0..d {
                    let mut s = 0.0;
                    for j in 0..d {
                        s += a[(i, j)] * x[j];
                    }
                    out[i] = s;
                }
            }
            FieldKind::Rotation => {
                out[0] = -x[1];
                out[1] = x[0];
            }
            FieldKind::Lorenz { sigma, rho, beta } => {
                out[0] = sigma * (x[1] - x[0]);
                out[1] = x[0] * (rho - x[2]) - x[1];
                out[2] = x[0] * x[1] - beta * x[2];
            }
            FieldKind::SaddleSuspension {
                expanding,
                contracting,
                drift,
            } => {
                out[0] = expanding * x[0];
                out[1] = -contracting * x[1];
                out[2] = *drift;
            }
        }
    }

    /// Row-major Jacobian without domain checks.
    pub fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        out[..d * d].iter_mut().for_each(|v| *v = 0.0);
        match &self.kind {
            FieldKind::Linear { .. } => {
                let a = self.matrix_cache.as_ref().expect("prepared linear field");
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = a[(i, j)];
                    }
                }
            }
            FieldKind::Rotation => {
                out[1] = -1.0;
                out[2] = 1.0;
            }
            FieldKind::Lorenz { sigma, rho, beta } => {
                out[0] = -sigma;
                out[1] = *sigma;
                out[3] = rho - x[2];
                out[4] = -1.0;
                out[5] = -x[0];
                out[6] = x[1];
                out[7] = x[0];
                out[8] = -beta;
            }
            FieldKind::SaddleSuspension {
                expanding,
                contracting,
                ..
            } => {
                out[0] = *expanding;
                out[4] = -contracting;
            }
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.value_into(x.as_slice(), out.as_mut_slice());
        out
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut buf = vec![0.0; d * d];
        self.jacobian_into(x.as_slice(), &mut buf);
        DMatrix::from_row_slice(d, d, &buf)
    }

    pub fn speed(&self, x: &DVector<f64>) -> f64 {
        self.value(x).norm()
    }

    pub fn is_regular(&self, x: &DVector<f64>) -> bool {
        self.speed(x) > self.singularity_tolerance()
    }

    /// `X(x)` and `DX(x)` for a point of the domain.
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if !self.domain.contains(x.as_slice()) {
            return Err(FlowError::Domain(format!(
                "point {:?} outside the domain of {}",
                x.as_slice(),
                self.name
            )));
        }
        Ok((self.value(x), self.jacobian(x)))
    }

    /// Known zeros of the builtin fields.
    pub fn singularities(&self) -> Vec<DVector<f64>> {
        let d = self.dim();
        match &self.kind {
            FieldKind::Linear { .. } => {
                // only isolated zeros are listed
                let a = self.matrix_cache.as_ref().expect("prepared linear field");
                if a.clone().lu().determinant().abs() > 0.0 {
                    vec![DVector::zeros(d)]
                } else {
                    Vec::new()
                }
            }
            FieldKind::Rotation => vec![DVector::zeros(2)],
            FieldKind::Lorenz { rho, beta, .. } => {
                let mut s = vec![DVector::zeros(3)];
                if *rho > 1.0 {
                    let q = (beta * (rho - 1.0)).sqrt();
                    s.push(DVector::from_vec(vec![q, q, rho - 1.0]));
                    s.push(DVector::from_vec(vec![-q, -q, rho - 1.0]));
                }
                s
            }
            FieldKind::SaddleSuspension { drift, .. } => {
                if *drift == 0.0 {
                    // a line of zeros; none isolated in the listing sense
                    Vec::new()
                } else {
                    Vec::new()
                }
            }
        }
    }
}

/// Sampled local Lipschitz constant `1.05 * max ||DX(x)||` over `region`.
///
/// Deterministic for a given seed. The region's center is always included.
pub fn estimate_lipschitz(
    field: &VectorFieldSpec,
    region: &Domain,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    region.validate()?;
    if region.dim() != field.dim() {
        return Err(FlowError::Domain("region dimension differs from the field".into()));
    }
    if samples == 0 {
        return Err(FlowError::Invalid("at least one sample is required".into()));
    }
    Ok(LIPSCHITZ_SAFETY * max_jacobian_norm(field, region, samples, seed))
}

/// Raw `max ||DX||` over `samples` random points plus the region center.
pub fn max_jacobian_norm(field: &VectorFieldSpec, region: &Domain, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = linalg::op_norm(&field.jacobian(&region.center()));
    for _ in 0..samples {
        let x = region.sample(&mut rng);
        best = best.max(linalg::op_norm(&field.jacobian(&x)));
    }
    best
}
