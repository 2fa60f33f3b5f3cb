//! Target distributions expressed as potential energies `V = -log density`
//! in a chart, together with chart transforms that carry the log-Jacobian
//! correction.
//!
//! Potentials are unnormalized: additive constants are dropped everywhere and
//! only differences and gradients are ever consumed.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};

/// Chart coordinates `q¹…qⁿ`.
pub type Position = DVector<f64>;

/// Evaluators behind a [`TargetDensity`]. Implementations must be pure.
pub trait PotentialModel: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, q: &DVector<f64>) -> f64;

    fn gradient(&self, q: &DVector<f64>) -> DVector<f64>;

    /// Analytic Hessian, if one is available.
    fn hessian(&self, _q: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// An exact independent draw from the normalized target, if the model
    /// admits one.
    fn exact_sample(&self, _rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        None
    }

    /// Per-coordinate `(mean, variance)` of the target, if known in closed form.
    fn moments(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        None
    }
}

/// Which family a target came from. Some integrators and checks are only
/// valid for particular families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    IidGaussian,
    Gaussian,
    WarpedGaussian,
    Charted,
    Custom,
}

/// A target measure `e^{-V} dq` in some chart.
#[derive(Clone)]
pub struct TargetDensity {
    label: String,
    kind: TargetKind,
    model: Arc<dyn PotentialModel>,
}

impl fmt::Debug for TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetDensity")
            .field("label", &self.label)
            .field("kind", &self.kind)
            .field("dim", &self.dim())
            .finish()
    }
}

impl TargetDensity {
    pub fn new(label: impl Into<String>, kind: TargetKind, model: Arc<dyn PotentialModel>) -> Self {
        Self {
            label: label.into(),
            kind,
            model,
        }
    }

    /// Builds a custom target from a potential and its gradient.
    pub fn from_fns<V, G>(label: impl Into<String>, dim: usize, value: V, gradient: G) -> Self
    where
        V: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self::new(
            label,
            TargetKind::Custom,
            Arc::new(FnModel {
                dim,
                value: Box::new(value),
                gradient: Box::new(gradient),
            }),
        )
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn model(&self) -> &Arc<dyn PotentialModel> {
        &self.model
    }

    /// `V(q)`.
    pub fn potential(&self, q: &Position) -> Result<f64> {
        check_dim(self.dim(), q.len())?;
        let v = self.model.value(q);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                what: "potential",
                at: q.iter().copied().collect(),
            })
        }
    }

    /// `∇V(q)`.
    pub fn grad_potential(&self, q: &Position) -> Result<DVector<f64>> {
        check_dim(self.dim(), q.len())?;
        let g = self.model.gradient(q);
        if g.iter().all(|x| x.is_finite()) {
            Ok(g)
        } else {
            Err(Error::NonFinite {
                what: "potential gradient",
                at: q.iter().copied().collect(),
            })
        }
    }

    /// Hessian of `V`: analytic when the model provides one, otherwise central
    /// differences of the gradient with step `1e-4·(1+|q_i|)`, symmetrized.
    pub fn hessian(&self, q: &Position) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), q.len())?;
        let h = match self.model.hessian(q) {
            Some(h) => h,
            None => fd_hessian(self.model.as_ref(), q),
        };
        if h.iter().all(|x| x.is_finite()) {
            Ok(h)
        } else {
            Err(Error::NonFinite {
                what: "potential hessian",
                at: q.iter().copied().collect(),
            })
        }
    }

    pub fn has_analytic_hessian(&self, q: &Position) -> bool {
        self.model.hessian(q).is_some()
    }

    pub fn exact_sample(&self, rng: &mut dyn RngCore) -> Option<Position> {
        self.model.exact_sample(rng)
    }

    pub fn moments(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        self.model.moments()
    }
}

fn fd_hessian(model: &dyn PotentialModel, q: &DVector<f64>) -> DMatrix<f64> {
    let n = q.len();
    let mut h = DMatrix::zeros(n, n);
    let mut x = q.clone();
    for j in 0..n {
        let step = 1e-4 * (1.0 + q[j].abs());
        x[j] = q[j] + step;
        let up = model.gradient(&x);
        x[j] = q[j] - step;
        let down = model.gradient(&x);
        x[j] = q[j];
        h.set_column(j, &((up - down) / (2.0 * step)));
    }
    (&h + h.transpose()) * 0.5
}

type ValueFn = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradientFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

struct FnModel {
    dim: usize,
    value: ValueFn,
    gradient: GradientFn,
}

impl PotentialModel for FnModel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, q: &DVector<f64>) -> f64 {
        (self.value)(q)
    }
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(q)
    }
}

/// Built-in target families.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    IidGaussian {
        dim: usize,
    },
    Gaussian {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    },
    /// Banana-shaped Gaussian with curvature `b` and scale `sigma2` on the
    /// first coordinate.
    WarpedGaussian {
        dim: usize,
        sigma2: f64,
        b: f64,
    },
}

impl TargetSpec {
    pub fn warped_default(dim: usize) -> Self {
        TargetSpec::WarpedGaussian {
            dim,
            sigma2: 100.0,
            b: 0.1,
        }
    }
}

pub fn make_target(spec: &TargetSpec) -> Result<TargetDensity> {
    match spec {
        TargetSpec::IidGaussian { dim } => {
            if *dim == 0 {
                return Err(Error::Construction("iid_gaussian needs dim >= 1".into()));
            }
            Ok(TargetDensity::new(
                format!("iid_gaussian({dim})"),
                TargetKind::IidGaussian,
                Arc::new(IidGaussian { dim: *dim }),
            ))
        }
        TargetSpec::Gaussian { mean, cov } => {
            let n = mean.len();
            if n == 0 || cov.nrows() != n || cov.ncols() != n {
                return Err(Error::Construction(format!(
                    "gaussian mean has length {n} but covariance is {}x{}",
                    cov.nrows(),
                    cov.ncols()
                )));
            }
            if (cov - cov.transpose()).amax() > 1e-12 * (1.0 + cov.amax()) {
                return Err(Error::Construction("covariance is not symmetric".into()));
            }
            let chol = cov.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite {
                context: "gaussian covariance".into(),
            })?;
            let precision = chol.inverse();
            Ok(TargetDensity::new(
                format!("gaussian({n})"),
                TargetKind::Gaussian,
                Arc::new(Gaussian {
                    mean: mean.clone(),
                    cov: cov.clone(),
                    cov_factor: chol.l(),
                    precision,
                }),
            ))
        }
        TargetSpec::WarpedGaussian { dim, sigma2, b } => {
            if *dim < 2 {
                return Err(Error::Construction("warped_gaussian needs dim >= 2".into()));
            }
            if !(*sigma2 > 0.0) || !b.is_finite() {
                return Err(Error::Construction(format!(
                    "warped_gaussian needs sigma2 > 0 and finite b (got {sigma2}, {b})"
                )));
            }
            Ok(TargetDensity::new(
                format!("warped_gaussian({dim},{sigma2},{b})"),
                TargetKind::WarpedGaussian,
                Arc::new(WarpedGaussian {
                    dim: *dim,
                    sigma2: *sigma2,
                    b: *b,
                }),
            ))
        }
    }
}

struct IidGaussian {
    dim: usize,
}

impl PotentialModel for IidGaussian {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, q: &DVector<f64>) -> f64 {
        0.5 * q.norm_squared()
    }
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        q.clone()
    }
    fn hessian(&self, _q: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.dim, self.dim))
    }
    fn exact_sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        Some(DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng)))
    }
    fn moments(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        Some((DVector::zeros(self.dim), DVector::repeat(self.dim, 1.0)))
    }
}

struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    cov_factor: DMatrix<f64>,
    precision: DMatrix<f64>,
}

impl PotentialModel for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn value(&self, q: &DVector<f64>) -> f64 {
        let d = q - &self.mean;
        0.5 * d.dot(&(&self.precision * &d))
    }
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.precision * (q - &self.mean)
    }
    fn hessian(&self, _q: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.precision.clone())
    }
    fn exact_sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let z = DVector::from_fn(self.mean.len(), |_, _| StandardNormal.sample(rng));
        Some(&self.mean + &self.cov_factor * z)
    }
    fn moments(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        Some((self.mean.clone(), self.cov.diagonal()))
    }
}

/// `V(q) = q₁²/(2σ²) + ½(q₂ + b·q₁² − σ²·b)² + ½Σ_{i>2} q_i²`.
struct WarpedGaussian {
    dim: usize,
    sigma2: f64,
    b: f64,
}

impl WarpedGaussian {
    fn twist(&self, q: &DVector<f64>) -> f64 {
        q[1] + self.b * q[0] * q[0] - self.sigma2 * self.b
    }
}

impl PotentialModel for WarpedGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, q: &DVector<f64>) -> f64 {
        let u = self.twist(q);
        let tail: f64 = q.iter().skip(2).map(|x| x * x).sum();
        q[0] * q[0] / (2.0 * self.sigma2) + 0.5 * u * u + 0.5 * tail
    }

    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let u = self.twist(q);
        let mut g = q.clone();
        g[0] = q[0] / self.sigma2 + 2.0 * self.b * q[0] * u;
        g[1] = u;
        g
    }

    fn hessian(&self, q: &DVector<f64>) -> Option<DMatrix<f64>> {
        let u = self.twist(q);
        let mut h = DMatrix::identity(self.dim, self.dim);
        h[(0, 0)] = 1.0 / self.sigma2 + 2.0 * self.b * u + 4.0 * self.b * self.b * q[0] * q[0];
        h[(0, 1)] = 2.0 * self.b * q[0];
        h[(1, 0)] = h[(0, 1)];
        Some(h)
    }

    fn exact_sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let mut q = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
        q[0] *= self.sigma2.sqrt();
        q[1] += self.sigma2 * self.b - self.b * q[0] * q[0];
        Some(q)
    }

    fn moments(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        // q₂ = σ²b − b·q₁² + z, so E[q₂] = 0 and Var[q₂] = 1 + 2b²σ⁴.
        let mut var = DVector::repeat(self.dim, 1.0);
        var[0] = self.sigma2;
        var[1] = 1.0 + 2.0 * self.b * self.b * self.sigma2 * self.sigma2;
        Some((DVector::zeros(self.dim), var))
    }
}

/// A diffeomorphism `q = forward(q′)` between charts.
pub trait ChartMap: Send + Sync {
    fn dim(&self) -> usize;
    fn forward(&self, q_new: &DVector<f64>) -> DVector<f64>;
    fn inverse(&self, q: &DVector<f64>) -> DVector<f64>;
    /// `log|∂q/∂q′|` at `q′`.
    fn log_jacobian(&self, q_new: &DVector<f64>) -> f64;
    /// `∂q/∂q′` at `q′`.
    fn jacobian(&self, q_new: &DVector<f64>) -> DMatrix<f64>;
    fn grad_log_jacobian(&self, q_new: &DVector<f64>) -> DVector<f64>;
}

#[derive(Clone)]
pub struct ChartTransform {
    label: String,
    map: Arc<dyn ChartMap>,
}

impl fmt::Debug for ChartTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChartTransform({})", self.label)
    }
}

impl ChartTransform {
    pub fn new(label: impl Into<String>, map: Arc<dyn ChartMap>) -> Self {
        Self {
            label: label.into(),
            map,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaling(DVector::repeat(dim, 1.0)).expect("unit scales are valid")
    }

    /// `q = s ⊙ q′`.
    pub fn scaling(scales: DVector<f64>) -> Result<Self> {
        if scales.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            return Err(Error::Construction("scaling chart needs finite non-zero scales".into()));
        }
        Ok(Self::new("scaling", Arc::new(Scaling { scales })))
    }

    /// `q = sinh(q′)` componentwise; a nonlinear bijection of ℝⁿ.
    pub fn sinh(dim: usize) -> Self {
        Self::new("sinh", Arc::new(SinhChart { dim }))
    }

    /// The chart running the other way: its forward map is this chart's inverse.
    pub fn inverse(&self) -> Self {
        Self::new(
            format!("inverse({})", self.label),
            Arc::new(InverseChart {
                inner: self.map.clone(),
            }),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn dim(&self) -> usize {
        self.map.dim()
    }
    pub fn forward(&self, q_new: &DVector<f64>) -> DVector<f64> {
        self.map.forward(q_new)
    }
    pub fn inverse_map(&self, q: &DVector<f64>) -> DVector<f64> {
        self.map.inverse(q)
    }
    pub fn log_jacobian(&self, q_new: &DVector<f64>) -> f64 {
        self.map.log_jacobian(q_new)
    }
    pub fn jacobian(&self, q_new: &DVector<f64>) -> DMatrix<f64> {
        self.map.jacobian(q_new)
    }
    pub fn grad_log_jacobian(&self, q_new: &DVector<f64>) -> DVector<f64> {
        self.map.grad_log_jacobian(q_new)
    }
}

struct Scaling {
    scales: DVector<f64>,
}

impl ChartMap for Scaling {
    fn dim(&self) -> usize {
        self.scales.len()
    }
    fn forward(&self, q_new: &DVector<f64>) -> DVector<f64> {
        q_new.component_mul(&self.scales)
    }
    fn inverse(&self, q: &DVector<f64>) -> DVector<f64> {
        q.component_div(&self.scales)
    }
    fn log_jacobian(&self, _q_new: &DVector<f64>) -> f64 {
        self.scales.iter().map(|s| s.abs().ln()).sum()
    }
    fn jacobian(&self, _q_new: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.scales)
    }
    fn grad_log_jacobian(&self, _q_new: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.scales.len())
    }
}

struct SinhChart {
    dim: usize,
}

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl ChartMap for SinhChart {
    fn dim(&self) -> usize {
        self.dim
    }
    fn forward(&self, q_new: &DVector<f64>) -> DVector<f64> {
        q_new.map(f64::sinh)
    }
    fn inverse(&self, q: &DVector<f64>) -> DVector<f64> {
        q.map(f64::asinh)
    }
    fn log_jacobian(&self, q_new: &DVector<f64>) -> f64 {
        q_new.iter().copied().map(ln_cosh).sum()
    }
    fn jacobian(&self, q_new: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&q_new.map(f64::cosh))
    }
    fn grad_log_jacobian(&self, q_new: &DVector<f64>) -> DVector<f64> {
        q_new.map(f64::tanh)
    }
}

struct InverseChart {
    inner: Arc<dyn ChartMap>,
}

impl ChartMap for InverseChart {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn forward(&self, q_new: &DVector<f64>) -> DVector<f64> {
        self.inner.inverse(q_new)
    }
    fn inverse(&self, q: &DVector<f64>) -> DVector<f64> {
        self.inner.forward(q)
    }
    fn log_jacobian(&self, q_new: &DVector<f64>) -> f64 {
        -self.inner.log_jacobian(&self.inner.inverse(q_new))
    }
    fn jacobian(&self, q_new: &DVector<f64>) -> DMatrix<f64> {
        let inner = self.inner.jacobian(&self.inner.inverse(q_new));
        inner
            .try_inverse()
            .unwrap_or_else(|| DMatrix::from_element(q_new.len(), q_new.len(), f64::NAN))
    }
    fn grad_log_jacobian(&self, q_new: &DVector<f64>) -> DVector<f64> {
        // d/dq [−L(f⁻¹(q))] = −J_{f⁻¹}(q)ᵀ ∇L(f⁻¹(q))
        let x = self.inner.inverse(q_new);
        let j_inv = self.jacobian(q_new);
        -(j_inv.transpose() * self.inner.grad_log_jacobian(&x))
    }
}

/// Re-expresses `target` in the chart `q = chart.forward(q′)`.
///
/// The returned potential is `V′(q′) = V(forward(q′)) − log|∂q/∂q′|(q′)`, i.e.
/// minus the log of the pushed-back density, so that sampling `q′` from
/// `e^{−V′}` and mapping forward reproduces the original target.
pub fn apply_chart(target: &TargetDensity, chart: &ChartTransform) -> Result<TargetDensity> {
    check_dim(target.dim(), chart.dim())?;
    Ok(TargetDensity::new(
        format!("{}∘{}", target.label(), chart.label()),
        TargetKind::Charted,
        Arc::new(Charted {
            base: target.model.clone(),
            chart: chart.map.clone(),
            corrected: true,
        }),
    ))
}

/// Like [`apply_chart`] but drops the log-Jacobian term. The result is the
/// wrong density whenever the Jacobian is not constant; exposed for negative
/// controls.
pub fn apply_chart_uncorrected(target: &TargetDensity, chart: &ChartTransform) -> Result<TargetDensity> {
    check_dim(target.dim(), chart.dim())?;
    Ok(TargetDensity::new(
        format!("{}∘{}(uncorrected)", target.label(), chart.label()),
        TargetKind::Charted,
        Arc::new(Charted {
            base: target.model.clone(),
            chart: chart.map.clone(),
            corrected: false,
        }),
    ))
}

struct Charted {
    base: Arc<dyn PotentialModel>,
    chart: Arc<dyn ChartMap>,
    corrected: bool,
}

impl PotentialModel for Charted {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, q_new: &DVector<f64>) -> f64 {
        let v = self.base.value(&self.chart.forward(q_new));
        if self.corrected {
            v - self.chart.log_jacobian(q_new)
        } else {
            v
        }
    }

    fn gradient(&self, q_new: &DVector<f64>) -> DVector<f64> {
        let q = self.chart.forward(q_new);
        let g = self.chart.jacobian(q_new).transpose() * self.base.gradient(&q);
        if self.corrected {
            g - self.chart.grad_log_jacobian(q_new)
        } else {
            g
        }
    }

    fn exact_sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        if !self.corrected {
            return None;
        }
        self.base.exact_sample(rng).map(|q| self.chart.inverse(&q))
    }
}
