//! Kinetic energies on the cotangent fibers: Riemannian metrics and the
//! Gaussian / Student-t fiber distributions they induce, plus momentum
//! sampling along a fiber.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::target::{Position, TargetDensity};

/// Cotangent coordinates `p₁…pₙ`.
pub type Momentum = DVector<f64>;

pub const DEFAULT_SOFTABS_ALPHA: f64 = 1e6;

/// Regularized eigenvalue map `λ·coth(αλ)`.
///
/// Near zero the map is replaced by its limit `1/α`, so the result is always
/// strictly positive and never smaller than `|λ|`.
pub fn softabs_eigmap(lambda: f64, alpha: f64) -> f64 {
    let x = alpha * lambda;
    if x.abs() < 1e-8 {
        1.0 / alpha
    } else {
        lambda / x.tanh()
    }
}

/// Derivative of [`softabs_eigmap`] in `λ`.
fn softabs_eigmap_slope(lambda: f64, alpha: f64) -> f64 {
    let x = alpha * lambda;
    if x.abs() < 1e-4 {
        2.0 * x / 3.0
    } else if x.abs() > 40.0 {
        x.signum()
    } else {
        1.0 / x.tanh() - x / x.sinh().powi(2)
    }
}

/// How `∂g/∂q_k` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativePolicy {
    Analytic,
    FiniteDifference,
}

type DiagFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type DiagJacFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Position-dependent diagonal metric with analytic derivatives.
#[derive(Clone)]
pub struct DiagonalMetric {
    dim: usize,
    diag: Arc<DiagFn>,
    /// Entry `(i, k)` is `∂g_ii/∂q_k`.
    jacobian: Arc<DiagJacFn>,
}

impl DiagonalMetric {
    pub fn new<D, J>(dim: usize, diag: D, jacobian: J) -> Self
    where
        D: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            diag: Arc::new(diag),
            jacobian: Arc::new(jacobian),
        }
    }

    /// `g(q) = diag(1 + q_i²)`.
    pub fn one_plus_square(dim: usize) -> Self {
        Self::new(
            dim,
            |q| q.map(|x| 1.0 + x * x),
            |q| DMatrix::from_diagonal(&q.map(|x| 2.0 * x)),
        )
    }
}

#[derive(Clone)]
pub struct SoftAbsMetric {
    alpha: f64,
    target: TargetDensity,
}

impl SoftAbsMetric {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

#[derive(Clone)]
pub enum Metric {
    Identity {
        dim: usize,
    },
    Dense {
        g: DMatrix<f64>,
        factor: DMatrix<f64>,
        inverse: DMatrix<f64>,
        log_det: f64,
    },
    DiagonalFn(DiagonalMetric),
    SoftAbs(SoftAbsMetric),
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Identity { dim } => write!(f, "Identity({dim})"),
            Metric::Dense { g, .. } => write!(f, "Dense({}x{})", g.nrows(), g.ncols()),
            Metric::DiagonalFn(d) => write!(f, "DiagonalFn({})", d.dim),
            Metric::SoftAbs(s) => write!(f, "SoftAbs(alpha={}, target={})", s.alpha, s.target.label()),
        }
    }
}

/// A metric evaluated at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricEval {
    pub g: DMatrix<f64>,
    /// Lower-triangular Cholesky factor, `g = L·Lᵀ`.
    pub factor: DMatrix<f64>,
    pub log_det: f64,
}

/// Quantities shared by the energy and its gradients at one `(q, p)`.
struct Contraction {
    /// `pᵀ g⁻¹ p`
    quad: f64,
    /// `g⁻¹ p`
    velocity: DVector<f64>,
    log_det: f64,
}

impl Metric {
    pub fn identity(dim: usize) -> Self {
        Metric::Identity { dim }
    }

    pub fn dense(g: DMatrix<f64>) -> Result<Self> {
        if g.nrows() != g.ncols() || g.nrows() == 0 {
            return Err(Error::Construction(
                "dense metric must be a non-empty square matrix".into(),
            ));
        }
        if (&g - g.transpose()).amax() > 1e-12 * (1.0 + g.amax()) {
            return Err(Error::Construction("dense metric is not symmetric".into()));
        }
        let chol = g.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite {
            context: "dense metric".into(),
        })?;
        let factor = chol.l();
        let log_det = 2.0 * factor.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let inverse = chol.inverse();
        Ok(Metric::Dense {
            g,
            factor,
            inverse,
            log_det,
        })
    }

    pub fn diagonal_fn(metric: DiagonalMetric) -> Self {
        Metric::DiagonalFn(metric)
    }

    pub fn softabs(target: TargetDensity, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Construction(format!(
                "softabs alpha must be positive, got {alpha}"
            )));
        }
        Ok(Metric::SoftAbs(SoftAbsMetric { alpha, target }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Metric::Identity { dim } => *dim,
            Metric::Dense { g, .. } => g.nrows(),
            Metric::DiagonalFn(d) => d.dim,
            Metric::SoftAbs(s) => s.target.dim(),
        }
    }

    /// Constant metrics have `∂g/∂q_k = 0` identically.
    pub fn is_constant(&self) -> bool {
        matches!(self, Metric::Identity { .. } | Metric::Dense { .. })
    }

    pub fn derivative_policy(&self) -> DerivativePolicy {
        match self {
            Metric::SoftAbs(_) => DerivativePolicy::FiniteDifference,
            _ => DerivativePolicy::Analytic,
        }
    }

    fn diag_values(d: &DiagonalMetric, q: &Position) -> Result<DVector<f64>> {
        let vals = (d.diag)(q);
        check_dim(d.dim, vals.len())?;
        if vals.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(vals)
        } else {
            Err(Error::NotPositiveDefinite {
                context: format!("diagonal metric at q = {:?}", q.as_slice()),
            })
        }
    }

    fn softabs_eigen(s: &SoftAbsMetric, q: &Position) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let h = s.target.hessian(q)?;
        let eig = SymmetricEigen::new(h);
        let mapped = eig.eigenvalues.map(|l| softabs_eigmap(l, s.alpha));
        if mapped.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok((eig.eigenvectors, mapped))
        } else {
            Err(Error::NotPositiveDefinite {
                context: format!("softabs metric at q = {:?}", q.as_slice()),
            })
        }
    }

    /// `g(q)` as a dense matrix.
    pub fn matrix(&self, q: &Position) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), q.len())?;
        match self {
            Metric::Identity { dim } => Ok(DMatrix::identity(*dim, *dim)),
            Metric::Dense { g, .. } => Ok(g.clone()),
            Metric::DiagonalFn(d) => Ok(DMatrix::from_diagonal(&Self::diag_values(d, q)?)),
            Metric::SoftAbs(s) => {
                let (vecs, vals) = Self::softabs_eigen(s, q)?;
                Ok(&vecs * DMatrix::from_diagonal(&vals) * vecs.transpose())
            }
        }
    }

    /// `g(q)`, its Cholesky factor and `log|g(q)|`.
    pub fn metric_eval(&self, q: &Position) -> Result<MetricEval> {
        check_dim(self.dim(), q.len())?;
        match self {
            Metric::Identity { dim } => Ok(MetricEval {
                g: DMatrix::identity(*dim, *dim),
                factor: DMatrix::identity(*dim, *dim),
                log_det: 0.0,
            }),
            Metric::Dense { g, factor, log_det, .. } => Ok(MetricEval {
                g: g.clone(),
                factor: factor.clone(),
                log_det: *log_det,
            }),
            _ => {
                let g = self.matrix(q)?;
                let factor = g
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::NotPositiveDefinite {
                        context: format!("metric factorization at q = {:?}", q.as_slice()),
                    })?
                    .l();
                let log_det = 2.0 * factor.diagonal().iter().map(|x| x.ln()).sum::<f64>();
                Ok(MetricEval { g, factor, log_det })
            }
        }
    }

    fn contract(&self, q: &Position, p: &Momentum) -> Result<Contraction> {
        check_dim(self.dim(), q.len())?;
        check_dim(self.dim(), p.len())?;
        match self {
            Metric::Identity { .. } => Ok(Contraction {
                quad: p.norm_squared(),
                velocity: p.clone(),
                log_det: 0.0,
            }),
            Metric::Dense { inverse, log_det, .. } => {
                let velocity = inverse * p;
                Ok(Contraction {
                    quad: p.dot(&velocity),
                    velocity,
                    log_det: *log_det,
                })
            }
            Metric::DiagonalFn(d) => {
                let vals = Self::diag_values(d, q)?;
                let velocity = p.component_div(&vals);
                Ok(Contraction {
                    quad: p.dot(&velocity),
                    velocity,
                    log_det: vals.iter().map(|x| x.ln()).sum(),
                })
            }
            Metric::SoftAbs(s) => {
                let (vecs, vals) = Self::softabs_eigen(s, q)?;
                let rotated = vecs.transpose() * p;
                let velocity = &vecs * rotated.component_div(&vals);
                Ok(Contraction {
                    quad: p.dot(&velocity),
                    velocity,
                    log_det: vals.iter().map(|x| x.ln()).sum(),
                })
            }
        }
    }

    /// `∂g/∂q_k` for every `k`; empty for constant metrics.
    pub fn derivatives(&self, q: &Position) -> Result<Vec<DMatrix<f64>>> {
        check_dim(self.dim(), q.len())?;
        match self {
            Metric::Identity { .. } | Metric::Dense { .. } => Ok(Vec::new()),
            Metric::DiagonalFn(d) => {
                let jac = (d.jacobian)(q);
                Ok((0..d.dim)
                    .map(|k| DMatrix::from_diagonal(&jac.column(k).clone_owned()))
                    .collect())
            }
            Metric::SoftAbs(s) => {
                // Central differences of the Hessian, mapped through the
                // first-order perturbation of the eigenvalue map.
                let n = q.len();
                let h0 = s.target.hessian(q)?;
                let eig = SymmetricEigen::new(h0);
                let (vecs, lams) = (eig.eigenvectors, eig.eigenvalues);
                let mapped = lams.map(|l| softabs_eigmap(l, s.alpha));
                let divided = DMatrix::from_fn(n, n, |i, j| {
                    let gap = lams[i] - lams[j];
                    if gap.abs() <= 1e-10 * (1.0 + lams[i].abs()) {
                        softabs_eigmap_slope(0.5 * (lams[i] + lams[j]), s.alpha)
                    } else {
                        (mapped[i] - mapped[j]) / gap
                    }
                });
                let mut x = q.clone();
                let mut out = Vec::with_capacity(n);
                for k in 0..n {
                    let h = 1e-4 * (1.0 + q[k].abs());
                    x[k] = q[k] + h;
                    let up = s.target.hessian(&x)?;
                    x[k] = q[k] - h;
                    let down = s.target.hessian(&x)?;
                    x[k] = q[k];
                    let dh = (up - down) / (2.0 * h);
                    let rotated = vecs.transpose() * dh * &vecs;
                    out.push(&vecs * rotated.component_mul(&divided) * vecs.transpose());
                }
                Ok(out)
            }
        }
    }

    /// Applies a square root of `g(q)` to `z`, so that `z ∼ N(0, I)` maps to `N(0, g)`.
    fn apply_sqrt(&self, q: &Position, z: DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Metric::Identity { .. } => Ok(z),
            Metric::Dense { factor, .. } => Ok(factor * z),
            Metric::DiagonalFn(d) => Ok(z.component_mul(&Self::diag_values(d, q)?.map(f64::sqrt))),
            Metric::SoftAbs(s) => {
                let (vecs, vals) = Self::softabs_eigen(s, q)?;
                Ok(vecs * z.component_mul(&vals.map(f64::sqrt)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KineticFamily {
    Gaussian,
    StudentT { nu: f64 },
}

/// Negative log density of the fiber distribution, constants dropped.
#[derive(Debug, Clone)]
pub struct KineticEnergy {
    family: KineticFamily,
    metric: Metric,
}

impl KineticEnergy {
    pub fn new(family: KineticFamily, metric: Metric) -> Result<Self> {
        if let KineticFamily::StudentT { nu } = family {
            if !(nu > 2.0) || !nu.is_finite() {
                return Err(Error::Construction(format!(
                    "student_t kinetic energy needs nu > 2, got {nu}"
                )));
            }
        }
        Ok(Self { family, metric })
    }

    pub fn gaussian(metric: Metric) -> Self {
        Self {
            family: KineticFamily::Gaussian,
            metric,
        }
    }

    pub fn family(&self) -> KineticFamily {
        self.family
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn kinetic_energy(&self, q: &Position, p: &Momentum) -> Result<f64> {
        let c = self.metric.contract(q, p)?;
        Ok(match self.family {
            KineticFamily::Gaussian => 0.5 * c.quad + 0.5 * c.log_det,
            KineticFamily::StudentT { nu } => {
                let n = p.len() as f64;
                0.5 * (nu + n) * (c.quad / nu).ln_1p() + 0.5 * c.log_det
            }
        })
    }

    /// Scale applied to `g⁻¹p` by the family: 1 for Gaussian,
    /// `(ν+n)/(ν + pᵀg⁻¹p)` for Student-t.
    fn family_scale(&self, quad: f64, n: usize) -> f64 {
        match self.family {
            KineticFamily::Gaussian => 1.0,
            KineticFamily::StudentT { nu } => (nu + n as f64) / (nu + quad),
        }
    }

    /// `∂T/∂p`.
    pub fn grad_kinetic_p(&self, q: &Position, p: &Momentum) -> Result<DVector<f64>> {
        let c = self.metric.contract(q, p)?;
        let scale = self.family_scale(c.quad, p.len());
        Ok(if scale == 1.0 { c.velocity } else { c.velocity * scale })
    }

    /// `∂T/∂q`; identically zero for constant metrics.
    pub fn grad_kinetic_q(&self, q: &Position, p: &Momentum) -> Result<DVector<f64>> {
        check_dim(self.dim(), q.len())?;
        check_dim(self.dim(), p.len())?;
        if self.metric.is_constant() {
            return Ok(DVector::zeros(q.len()));
        }
        let c = self.metric.contract(q, p)?;
        let scale = self.family_scale(c.quad, p.len());
        let derivs = self.metric.derivatives(q)?;
        let g_inv = match &self.metric {
            Metric::DiagonalFn(d) => DMatrix::from_diagonal(&Metric::diag_values(d, q)?.map(|x| 1.0 / x)),
            _ => {
                let g = self.metric.matrix(q)?;
                g.cholesky()
                    .ok_or_else(|| Error::NotPositiveDefinite {
                        context: format!("metric at q = {:?}", q.as_slice()),
                    })?
                    .inverse()
            }
        };
        let v = &c.velocity;
        let grad = DVector::from_iterator(
            q.len(),
            derivs.iter().map(|dg| {
                let quad_term = v.dot(&(dg * v));
                let trace_term = (&g_inv * dg).trace();
                -0.5 * scale * quad_term + 0.5 * trace_term
            }),
        );
        Ok(grad)
    }

    /// Draws `p` from the fiber distribution over `q`.
    pub fn sample_momentum<R: Rng + ?Sized>(&self, q: &Position, rng: &mut R) -> Result<Momentum> {
        check_dim(self.dim(), q.len())?;
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let p = self.metric.apply_sqrt(q, z)?;
        Ok(match self.family {
            KineticFamily::Gaussian => p,
            KineticFamily::StudentT { nu } => {
                let w: f64 = ChiSquared::new(nu).expect("nu validated at construction").sample(rng);
                p * (nu / w).sqrt()
            }
        })
    }
}
