//! Hamiltonian systems `H = T + V` on phase space and their numerical flows.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::fiber::{KineticEnergy, KineticFamily, Metric, Momentum};
use crate::target::{Position, TargetDensity, TargetKind};

/// Trajectories whose energy drifts further than this from the start are
/// marked divergent.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1000.0;

pub const DEFAULT_GLF_TOL: f64 = 1e-10;
pub const DEFAULT_GLF_MAX_ITERS: usize = 100;

/// Step used by the finite-difference Jacobian probe.
pub const JACOBIAN_FD_STEP: f64 = 1e-5;

/// A point `z = (q, p)` on the cotangent bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Position,
    pub p: Momentum,
}

impl PhasePoint {
    pub fn new(q: Position, p: Momentum) -> Result<Self> {
        check_dim(q.len(), p.len())?;
        Ok(Self { q, p })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn flipped(&self) -> Self {
        Self {
            q: self.q.clone(),
            p: -&self.p,
        }
    }

    fn sup_distance(&self, other: &PhasePoint) -> f64 {
        (&self.q - &other.q).amax().max((&self.p - &other.p).amax())
    }

    fn sup_norm(&self) -> f64 {
        self.q.amax().max(self.p.amax())
    }

    fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|x| x.is_finite())
    }
}

/// Parity inversion `R(q, p) = (q, −p)`.
pub fn momentum_flip(z: &PhasePoint) -> PhasePoint {
    z.flipped()
}

/// `H(q, p) = V(q) + T(q, p)` with unit inverse temperature.
#[derive(Debug, Clone)]
pub struct HamiltonianSystem {
    target: TargetDensity,
    kinetic: KineticEnergy,
}

impl HamiltonianSystem {
    pub fn new(target: TargetDensity, kinetic: KineticEnergy) -> Result<Self> {
        check_dim(target.dim(), kinetic.dim())?;
        Ok(Self { target, kinetic })
    }

    /// Euclidean system with identity metric and Gaussian kinetic energy.
    pub fn euclidean(target: TargetDensity) -> Self {
        let kinetic = KineticEnergy::gaussian(Metric::identity(target.dim()));
        Self { target, kinetic }
    }

    pub fn target(&self) -> &TargetDensity {
        &self.target
    }

    pub fn kinetic(&self) -> &KineticEnergy {
        &self.kinetic
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn hamiltonian(&self, z: &PhasePoint) -> Result<f64> {
        Ok(self.target.potential(&z.q)? + self.kinetic.kinetic_energy(&z.q, &z.p)?)
    }

    /// `∂H/∂q`.
    pub fn grad_q(&self, q: &Position, p: &Momentum) -> Result<DVector<f64>> {
        let mut g = self.target.grad_potential(q)?;
        if !self.kinetic.metric().is_constant() {
            g += self.kinetic.grad_kinetic_q(q, p)?;
        }
        Ok(g)
    }

    /// `∂H/∂p`.
    pub fn grad_p(&self, q: &Position, p: &Momentum) -> Result<DVector<f64>> {
        self.kinetic.grad_kinetic_p(q, p)
    }

    /// True when the closed-form harmonic-oscillator flow is the exact flow.
    pub fn supports_exact_flow(&self) -> bool {
        self.target.kind() == TargetKind::IidGaussian
            && matches!(self.kinetic.metric(), Metric::Identity { .. })
            && self.kinetic.family() == KineticFamily::Gaussian
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Leapfrog,
    GeneralizedLeapfrog { tol: f64, max_iters: usize },
    Euler,
    ExactGaussian,
}

impl Scheme {
    pub fn generalized_default() -> Self {
        Scheme::GeneralizedLeapfrog {
            tol: DEFAULT_GLF_TOL,
            max_iters: DEFAULT_GLF_MAX_ITERS,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Leapfrog => "leapfrog",
            Scheme::GeneralizedLeapfrog { .. } => "glf",
            Scheme::Euler => "euler",
            Scheme::ExactGaussian => "exact",
        }
    }
}

/// Numerical flow `Φ_{ε,t}` with `t = ε·L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSpec {
    pub scheme: Scheme,
    pub step_size: f64,
    pub steps: usize,
}

impl IntegratorSpec {
    pub fn new(scheme: Scheme, step_size: f64, steps: usize) -> Self {
        Self {
            scheme,
            step_size,
            steps,
        }
    }

    pub fn with_steps(self, steps: usize) -> Self {
        Self { steps, ..self }
    }

    pub fn integration_time(&self) -> f64 {
        self.step_size * self.steps as f64
    }

    pub fn validate(&self, sys: &HamiltonianSystem) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Argument(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.steps == 0 {
            return Err(Error::Argument("integrator needs at least one step".into()));
        }
        match self.scheme {
            Scheme::Leapfrog | Scheme::Euler if !sys.kinetic().metric().is_constant() => Err(Error::Contract(format!(
                "{} requires a constant metric; use the generalized leapfrog",
                self.scheme.name()
            ))),
            Scheme::ExactGaussian if !sys.supports_exact_flow() => Err(Error::Contract(
                "exact flow needs an iid Gaussian target, identity metric and Gaussian kinetic energy".into(),
            )),
            Scheme::GeneralizedLeapfrog { tol, max_iters } if !(tol > 0.0) || max_iters == 0 => Err(Error::Argument(
                "generalized leapfrog needs tol > 0 and max_iters >= 1".into(),
            )),
            _ => Ok(()),
        }
    }
}

fn divergent(detail: impl Into<String>) -> Error {
    Error::Divergent {
        step: 0,
        detail: detail.into(),
    }
}

fn finite_or_divergent(z: PhasePoint) -> Result<PhasePoint> {
    if z.is_finite() {
        Ok(z)
    } else {
        Err(divergent("non-finite phase point"))
    }
}

/// Numeric failures inside a step are reported as divergence.
fn as_divergence(e: Error) -> Error {
    if e.is_numeric() && !matches!(e, Error::NonConvergence { .. } | Error::Divergent { .. }) {
        divergent(e.to_string())
    } else {
        e
    }
}

fn require_constant_metric(sys: &HamiltonianSystem) -> Result<()> {
    if sys.kinetic().metric().is_constant() {
        Ok(())
    } else {
        Err(Error::Contract(
            "explicit leapfrog requires a constant metric; use the generalized leapfrog".into(),
        ))
    }
}

/// One leapfrog step given `∇V(q)`; returns the new point and `∇V(q′)`.
fn leapfrog_cached(
    sys: &HamiltonianSystem,
    z: &PhasePoint,
    grad_v: &DVector<f64>,
    eps: f64,
) -> Result<(PhasePoint, DVector<f64>)> {
    let half = 0.5 * eps;
    let p_half = &z.p - grad_v * half;
    let velocity = sys.grad_p(&z.q, &p_half).map_err(as_divergence)?;
    let q = &z.q + velocity * eps;
    let grad_new = sys.target().grad_potential(&q).map_err(as_divergence)?;
    let p = p_half - &grad_new * half;
    Ok((finite_or_divergent(PhasePoint { q, p })?, grad_new))
}

/// Split leapfrog for constant metrics: half kick, drift, half kick.
pub fn leapfrog_step(sys: &HamiltonianSystem, z: &PhasePoint, eps: f64) -> Result<PhasePoint> {
    require_constant_metric(sys)?;
    let grad_v = sys.target().grad_potential(&z.q).map_err(as_divergence)?;
    leapfrog_cached(sys, z, &grad_v, eps).map(|(z, _)| z)
}

/// Iteration counts of the two implicit solves in a generalized leapfrog step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImplicitStats {
    pub momentum_iters: usize,
    pub position_iters: usize,
}

fn converged(resid: f64, scale: f64, tol: f64) -> bool {
    resid <= tol * scale.max(1.0)
}

/// Implicit Störmer–Verlet step for position-dependent metrics.
pub fn generalized_leapfrog_step(
    sys: &HamiltonianSystem,
    z: &PhasePoint,
    eps: f64,
    tol: f64,
    max_iters: usize,
) -> Result<PhasePoint> {
    generalized_leapfrog_step_with_stats(sys, z, eps, tol, max_iters).map(|(z, _)| z)
}

pub fn generalized_leapfrog_step_with_stats(
    sys: &HamiltonianSystem,
    z: &PhasePoint,
    eps: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(PhasePoint, ImplicitStats)> {
    let half = 0.5 * eps;
    let (q, p) = (&z.q, &z.p);

    // p½ = p − (ε/2)·∂_qH(q, p½)
    let mut p_half = p.clone();
    let mut momentum_iters = 0;
    let mut resid = f64::INFINITY;
    while momentum_iters < max_iters {
        momentum_iters += 1;
        let next = p - sys.grad_q(q, &p_half).map_err(as_divergence)? * half;
        resid = (&next - &p_half).amax();
        p_half = next;
        if !resid.is_finite() {
            return Err(divergent("non-finite momentum in implicit solve"));
        }
        if converged(resid, p_half.amax(), tol) {
            break;
        }
    }
    if !converged(resid, p_half.amax(), tol) {
        return Err(Error::NonConvergence {
            iters: max_iters,
            residual: resid,
        });
    }

    // q′ = q + (ε/2)·[∂_pH(q, p½) + ∂_pH(q′, p½)]
    let v0 = sys.grad_p(q, &p_half).map_err(as_divergence)?;
    let mut q_new = q + &v0 * eps;
    let mut position_iters = 0;
    resid = f64::INFINITY;
    while position_iters < max_iters {
        position_iters += 1;
        let v1 = sys.grad_p(&q_new, &p_half).map_err(as_divergence)?;
        let next = q + (&v0 + v1) * half;
        resid = (&next - &q_new).amax();
        q_new = next;
        if !resid.is_finite() {
            return Err(divergent("non-finite position in implicit solve"));
        }
        if converged(resid, q_new.amax(), tol) {
            break;
        }
    }
    if !converged(resid, q_new.amax(), tol) {
        return Err(Error::NonConvergence {
            iters: max_iters,
            residual: resid,
        });
    }

    let p_new = &p_half - sys.grad_q(&q_new, &p_half).map_err(as_divergence)? * half;
    let z_new = finite_or_divergent(PhasePoint { q: q_new, p: p_new })?;
    Ok((
        z_new,
        ImplicitStats {
            momentum_iters,
            position_iters,
        },
    ))
}

/// Explicit Euler step; not volume-preserving.
pub fn euler_step(sys: &HamiltonianSystem, z: &PhasePoint, eps: f64) -> Result<PhasePoint> {
    let dq = sys.grad_p(&z.q, &z.p).map_err(as_divergence)?;
    let dp = sys.grad_q(&z.q, &z.p).map_err(as_divergence)?;
    finite_or_divergent(PhasePoint {
        q: &z.q + dq * eps,
        p: &z.p - dp * eps,
    })
}

/// Closed-form flow of `H = ½(‖q‖² + ‖p‖²)` for time `t`.
pub fn exact_gaussian_flow(z: &PhasePoint, t: f64) -> PhasePoint {
    let (s, c) = t.sin_cos();
    PhasePoint {
        q: &z.q * c + &z.p * s,
        p: &z.p * c - &z.q * s,
    }
}

/// A recorded numerical trajectory `z₀…z_L` with the energy at each point.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<PhasePoint>,
    pub energies: Vec<f64>,
    pub divergent: bool,
    /// Step index at which divergence was detected.
    pub divergent_step: Option<usize>,
}

impl Trajectory {
    pub fn last(&self) -> &PhasePoint {
        self.points.last().expect("trajectory holds at least the initial point")
    }

    pub fn max_energy_error(&self) -> f64 {
        let h0 = self.energies[0];
        self.energies.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max)
    }
}

/// Final state of an integration that did not keep intermediate points.
#[derive(Debug, Clone)]
pub struct Endpoint {
    pub z: PhasePoint,
    pub h_start: f64,
    pub h_end: f64,
    pub max_energy_error: f64,
    pub divergent: bool,
    pub divergent_step: Option<usize>,
    /// Gradient evaluations spent, counting `∂H/∂q` calls.
    pub grad_evals: u64,
}

/// Options controlling [`integrate_with`].
#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    pub record: bool,
    pub divergence_threshold: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            record: true,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

struct Run {
    trajectory: Trajectory,
    endpoint: Endpoint,
}

fn run(sys: &HamiltonianSystem, z0: &PhasePoint, spec: &IntegratorSpec, opts: IntegrateOptions) -> Result<Run> {
    spec.validate(sys)?;
    check_dim(sys.dim(), z0.dim())?;
    let h0 = sys.hamiltonian(z0)?;
    let eps = spec.step_size;

    let mut points = Vec::new();
    let mut energies = Vec::new();
    if opts.record {
        points.reserve(spec.steps + 1);
        energies.reserve(spec.steps + 1);
        points.push(z0.clone());
        energies.push(h0);
    }

    let mut z = z0.clone();
    let mut h = h0;
    let mut max_err = 0.0f64;
    let mut divergent_step = None;
    let mut grad_evals = 0u64;
    let mut grad_v = match spec.scheme {
        Scheme::Leapfrog => {
            grad_evals += 1;
            Some(sys.target().grad_potential(&z.q).map_err(as_divergence))
        }
        _ => None,
    };

    for k in 1..=spec.steps {
        let step = match spec.scheme {
            Scheme::Leapfrog => match grad_v.take().expect("cached gradient") {
                Ok(g) => leapfrog_cached(sys, &z, &g, eps).map(|(z, g)| {
                    grad_v = Some(Ok(g));
                    z
                }),
                Err(e) => Err(e),
            },
            Scheme::GeneralizedLeapfrog { tol, max_iters } => {
                generalized_leapfrog_step_with_stats(sys, &z, eps, tol, max_iters).map(|(z, stats)| {
                    grad_evals += stats.momentum_iters as u64;
                    z
                })
            }
            Scheme::Euler => euler_step(sys, &z, eps),
            Scheme::ExactGaussian => Ok(exact_gaussian_flow(&z, eps)),
        };
        if matches!(
            spec.scheme,
            Scheme::Leapfrog | Scheme::Euler | Scheme::GeneralizedLeapfrog { .. }
        ) {
            grad_evals += 1;
        }
        let next = match step.and_then(|z| sys.hamiltonian(&z).map(|h| (z, h)).map_err(as_divergence)) {
            Ok(v) => v,
            Err(e) if e.is_numeric() => {
                divergent_step = Some(k);
                break;
            }
            Err(e) => return Err(e),
        };
        z = next.0;
        h = next.1;
        let err = (h - h0).abs();
        max_err = max_err.max(err);
        if opts.record {
            points.push(z.clone());
            energies.push(h);
        }
        if err > opts.divergence_threshold {
            divergent_step = Some(k);
            break;
        }
    }

    let divergent = divergent_step.is_some();
    if !opts.record {
        points.push(z.clone());
        energies.push(h);
    }
    Ok(Run {
        trajectory: Trajectory {
            points,
            energies,
            divergent,
            divergent_step,
        },
        endpoint: Endpoint {
            z,
            h_start: h0,
            h_end: h,
            max_energy_error: if divergent { f64::INFINITY } else { max_err },
            divergent,
            divergent_step,
            grad_evals,
        },
    })
}

/// Applies the scheme `spec.steps` times from `z0`, recording every point.
///
/// Divergence is data: the trajectory is cut at the failing step and flagged.
pub fn integrate(sys: &HamiltonianSystem, z0: &PhasePoint, spec: &IntegratorSpec) -> Result<Trajectory> {
    integrate_with(sys, z0, spec, IntegrateOptions::default())
}

pub fn integrate_with(
    sys: &HamiltonianSystem,
    z0: &PhasePoint,
    spec: &IntegratorSpec,
    opts: IntegrateOptions,
) -> Result<Trajectory> {
    run(sys, z0, spec, opts).map(|r| r.trajectory)
}

/// Integrates without storing intermediate points.
pub fn integrate_endpoint(
    sys: &HamiltonianSystem,
    z0: &PhasePoint,
    spec: &IntegratorSpec,
    divergence_threshold: f64,
) -> Result<Endpoint> {
    run(
        sys,
        z0,
        spec,
        IntegrateOptions {
            record: false,
            divergence_threshold,
        },
    )
    .map(|r| r.endpoint)
}

fn flow_map(sys: &HamiltonianSystem, z: &PhasePoint, spec: &IntegratorSpec) -> Result<PhasePoint> {
    let end = integrate_endpoint(sys, z, spec, f64::INFINITY)?;
    match end.divergent_step {
        Some(step) => Err(Error::Divergent {
            step,
            detail: "flow map evaluation failed".into(),
        }),
        None => Ok(end.z),
    }
}

/// Determinant of the central-difference Jacobian of `Φ` at `z`.
pub fn jacobian_det_fd(sys: &HamiltonianSystem, z: &PhasePoint, spec: &IntegratorSpec) -> Result<f64> {
    let n = z.dim();
    let h = JACOBIAN_FD_STEP;
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..2 * n {
        let mut up = z.clone();
        let mut down = z.clone();
        if j < n {
            up.q[j] += h;
            down.q[j] -= h;
        } else {
            up.p[j - n] += h;
            down.p[j - n] -= h;
        }
        let fu = flow_map(sys, &up, spec)?;
        let fd = flow_map(sys, &down, spec)?;
        for i in 0..n {
            jac[(i, j)] = (fu.q[i] - fd.q[i]) / (2.0 * h);
            jac[(n + i, j)] = (fu.p[i] - fd.p[i]) / (2.0 * h);
        }
    }
    let det = jac.determinant();
    if det.is_finite() {
        Ok(det)
    } else {
        Err(Error::NonFinite {
            what: "jacobian determinant",
            at: z.q.iter().chain(z.p.iter()).copied().collect(),
        })
    }
}

/// `‖R(Φ(R(Φ(z)))) − z‖∞`.
pub fn reversibility_defect(sys: &HamiltonianSystem, z: &PhasePoint, spec: &IntegratorSpec) -> Result<f64> {
    let forward = flow_map(sys, z, spec)?;
    let back = flow_map(sys, &forward.flipped(), spec)?.flipped();
    Ok(back.sup_distance(z))
}

/// Reversibility defect scaled by `1 + ‖z‖∞`.
pub fn relative_reversibility_defect(sys: &HamiltonianSystem, z: &PhasePoint, spec: &IntegratorSpec) -> Result<f64> {
    Ok(reversibility_defect(sys, z, spec)? / (1.0 + z.sup_norm()))
}

/// Period of the 1-D harmonic oscillator, handy for choosing integration times.
pub const HARMONIC_PERIOD: f64 = 2.0 * PI;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::DiagonalMetric;
    use crate::target::{make_target, TargetSpec};
    use approx::assert_relative_eq;

    fn gauss1() -> HamiltonianSystem {
        HamiltonianSystem::euclidean(make_target(&TargetSpec::IidGaussian { dim: 1 }).unwrap())
    }

    fn z1(q: f64, p: f64) -> PhasePoint {
        PhasePoint::new(DVector::from_element(1, q), DVector::from_element(1, p)).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        assert_eq!(gauss1().hamiltonian(&z1(1.0, 0.0)).unwrap(), 0.5);
        let sys = HamiltonianSystem::euclidean(make_target(&TargetSpec::IidGaussian { dim: 2 }).unwrap());
        let z = PhasePoint::new(
            DVector::from_row_slice(&[3.0, 4.0]),
            DVector::from_row_slice(&[3.0, 4.0]),
        )
        .unwrap();
        assert_relative_eq!(sys.hamiltonian(&z).unwrap(), 25.0, epsilon = 1e-12);
    }

    #[test]
    fn flip_is_an_involution() {
        let z = z1(1.5, -2.0);
        assert_eq!(momentum_flip(&z), z1(1.5, 2.0));
        assert_eq!(momentum_flip(&momentum_flip(&z)), z);
    }

    #[test]
    fn leapfrog_hand_example() {
        let sys = gauss1();
        let z = leapfrog_step(&sys, &z1(1.0, 0.0), 0.1).unwrap();
        assert_relative_eq!(z.q[0], 0.995, epsilon = 1e-15);
        assert_relative_eq!(z.p[0], -0.09975, epsilon = 1e-15);
        let dh = sys.hamiltonian(&z).unwrap() - 0.5;
        assert_relative_eq!(dh, 0.49998753125 - 0.5, epsilon = 1e-12);
        assert!((dh.abs() - 1.25e-5).abs() < 1e-7);
    }

    #[test]
    fn tiny_step_barely_moves() {
        let sys = gauss1();
        let z0 = z1(1.0, 0.3);
        let z = leapfrog_step(&sys, &z0, 1e-8).unwrap();
        assert!(z.sup_distance(&z0) < 1e-7);
    }

    #[test]
    fn euler_examples() {
        let sys = gauss1();
        assert_eq!(euler_step(&sys, &z1(1.0, 0.0), 0.1).unwrap(), z1(1.0, -0.1));
        assert_eq!(euler_step(&sys, &z1(0.7, 0.2), 0.0).unwrap(), z1(0.7, 0.2));
    }

    #[test]
    fn exact_flow_examples() {
        assert_eq!(exact_gaussian_flow(&z1(0.3, -0.4), 0.0), z1(0.3, -0.4));
        let z = exact_gaussian_flow(&z1(1.0, 0.0), PI / 2.0);
        assert!(z.q[0].abs() < 1e-15);
        assert_relative_eq!(z.p[0], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn leapfrog_rejects_position_dependent_metric() {
        let t = make_target(&TargetSpec::IidGaussian { dim: 2 }).unwrap();
        let sys = HamiltonianSystem::new(
            t,
            KineticEnergy::gaussian(Metric::diagonal_fn(DiagonalMetric::one_plus_square(2))),
        )
        .unwrap();
        let z = PhasePoint::new(DVector::zeros(2), DVector::zeros(2)).unwrap();
        assert!(matches!(leapfrog_step(&sys, &z, 0.1), Err(Error::Contract(_))));
        let spec = IntegratorSpec::new(Scheme::Leapfrog, 0.1, 3);
        assert!(matches!(integrate(&sys, &z, &spec), Err(Error::Contract(_))));
    }

    #[test]
    fn exact_flow_requires_iid_gaussian() {
        let sys = HamiltonianSystem::euclidean(make_target(&TargetSpec::warped_default(2)).unwrap());
        let z = PhasePoint::new(DVector::zeros(2), DVector::zeros(2)).unwrap();
        let spec = IntegratorSpec::new(Scheme::ExactGaussian, 0.1, 3);
        assert!(matches!(integrate(&sys, &z, &spec), Err(Error::Contract(_))));
    }

    #[test]
    fn single_step_integration_matches_step() {
        let sys = HamiltonianSystem::euclidean(make_target(&TargetSpec::warped_default(3)).unwrap());
        let z = PhasePoint::new(
            DVector::from_row_slice(&[1.0, 2.0, -0.5]),
            DVector::from_row_slice(&[0.3, -0.2, 1.0]),
        )
        .unwrap();
        let traj = integrate(&sys, &z, &IntegratorSpec::new(Scheme::Leapfrog, 0.1, 1)).unwrap();
        assert_eq!(traj.points.len(), 2);
        assert_eq!(traj.last(), &leapfrog_step(&sys, &z, 0.1).unwrap());
        let traj = integrate(&sys, &z, &IntegratorSpec::new(Scheme::Euler, 0.1, 1)).unwrap();
        assert_eq!(traj.last(), &euler_step(&sys, &z, 0.1).unwrap());
    }

    #[test]
    fn blow_up_is_flagged_not_raised() {
        let sys = gauss1();
        // ε = 2.5 is outside the leapfrog stability region of the oscillator.
        let traj = integrate(&sys, &z1(1.0, 0.0), &IntegratorSpec::new(Scheme::Leapfrog, 2.5, 200)).unwrap();
        assert!(traj.divergent);
        assert!(traj.divergent_step.unwrap() < 200);
        assert!(traj.points.len() < 201);
    }

    #[test]
    fn glf_non_convergence_is_reported() {
        let t = make_target(&TargetSpec::IidGaussian { dim: 1 }).unwrap();
        let sys = HamiltonianSystem::new(
            t,
            KineticEnergy::gaussian(Metric::diagonal_fn(DiagonalMetric::one_plus_square(1))),
        )
        .unwrap();
        let err = generalized_leapfrog_step(&sys, &z1(3.0, 4.0), 0.5, 1e-14, 2).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iters: 2, .. }));
    }
}
