//! Markov transitions induced by measure-preserving maps.
//!
//! The HMC transition composes a lift onto the fiber (momentum sampling), a
//! numerical Hamiltonian flow, a momentum flip and a projection back to `q`,
//! with a Metropolis correction for the integrator's energy error. Random
//! walk Metropolis, random-scan Gibbs and Langevin kernels are the baselines.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{
    integrate_endpoint, HamiltonianSystem, IntegratorSpec, PhasePoint, DEFAULT_DIVERGENCE_THRESHOLD,
};
use crate::error::{check_dim, Error, Result};
use crate::target::{Position, TargetDensity};

pub const DEFAULT_GIBBS_TOL: f64 = 1e-10;
pub const DEFAULT_GIBBS_HALFWIDTH: f64 = 50.0;

/// Distribution of the integration time `t` for each HMC transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeDist {
    Fixed { t: f64 },
    Uniform { t_max: f64 },
}

/// Draws `t` and the number of steps `L = max(1, round(t/ε))`.
pub fn sample_integration_time<R: Rng + ?Sized>(time: &TimeDist, eps: f64, rng: &mut R) -> Result<(f64, usize)> {
    let t = match *time {
        TimeDist::Fixed { t } => {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Argument(format!(
                    "fixed integration time must be positive, got {t}"
                )));
            }
            t
        }
        TimeDist::Uniform { t_max } => {
            if !(t_max > 0.0) || !t_max.is_finite() {
                return Err(Error::Argument(format!("t_max must be positive, got {t_max}")));
            }
            rng.random::<f64>() * t_max
        }
    };
    let steps = ((t / eps).round() as usize).max(1);
    Ok((t, steps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RwmConfig {
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl RwmConfig {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() || cov.nrows() == 0 {
            return Err(Error::Construction("proposal covariance must be square".into()));
        }
        let factor = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite {
                context: "random walk proposal covariance".into(),
            })?
            .l();
        Ok(Self { cov, factor })
    }

    pub fn isotropic(dim: usize, sigma: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * (sigma * sigma))
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsConfig {
    pub bisection_tol: f64,
    pub bracket_halfwidth: f64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            bisection_tol: DEFAULT_GIBBS_TOL,
            bracket_halfwidth: DEFAULT_GIBBS_HALFWIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelConfig {
    /// `integrator.steps` is ignored; the step count comes from `time`.
    Hmc {
        integrator: IntegratorSpec,
        time: TimeDist,
    },
    Rwm(RwmConfig),
    Gibbs(GibbsConfig),
    Mala {
        eps: f64,
    },
    Ula {
        eps: f64,
    },
}

impl KernelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            KernelConfig::Hmc { .. } => "hmc",
            KernelConfig::Rwm(_) => "rwm",
            KernelConfig::Gibbs(_) => "gibbs",
            KernelConfig::Mala { .. } => "mala",
            KernelConfig::Ula { .. } => "ula",
        }
    }
}

/// What happened in one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionInfo {
    pub accepted: bool,
    /// `H(z′) − H(z)` for HMC; the negative log acceptance ratio for
    /// Metropolis kernels; zero for kernels without a correction.
    pub delta_h: f64,
    pub accept_prob: f64,
    pub divergent: bool,
    pub proposal: Position,
    /// `H` at the momentum refresh (HMC only).
    pub energy: Option<f64>,
    /// New gradient or density evaluations spent on this transition.
    pub evals: u64,
}

/// A kernel bound to the system it targets.
#[derive(Debug, Clone)]
pub struct Kernel {
    config: KernelConfig,
    system: HamiltonianSystem,
    divergence_threshold: f64,
    metropolis: bool,
}

impl Kernel {
    pub fn new(config: KernelConfig, system: HamiltonianSystem) -> Result<Self> {
        match &config {
            KernelConfig::Hmc { integrator, time } => {
                integrator.with_steps(1).validate(&system)?;
                let mut probe = ChaCha8Rng::seed_from_u64(0);
                sample_integration_time(time, integrator.step_size, &mut probe)?;
            }
            KernelConfig::Rwm(rwm) => check_dim(system.dim(), rwm.cov.nrows())?,
            KernelConfig::Gibbs(g) => {
                if !(g.bisection_tol > 0.0) || !(g.bracket_halfwidth > 0.0) {
                    return Err(Error::Argument("gibbs tolerance and bracket must be positive".into()));
                }
            }
            KernelConfig::Mala { eps } | KernelConfig::Ula { eps } => {
                if !(*eps > 0.0) || !eps.is_finite() {
                    return Err(Error::Argument(format!("step size must be positive, got {eps}")));
                }
            }
        }
        Ok(Self {
            config,
            system,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
            metropolis: true,
        })
    }

    pub fn hmc(system: HamiltonianSystem, integrator: IntegratorSpec, time: TimeDist) -> Result<Self> {
        Self::new(KernelConfig::Hmc { integrator, time }, system)
    }

    pub fn rwm(target: TargetDensity, rwm: RwmConfig) -> Result<Self> {
        Self::new(KernelConfig::Rwm(rwm), HamiltonianSystem::euclidean(target))
    }

    pub fn gibbs(target: TargetDensity, gibbs: GibbsConfig) -> Result<Self> {
        Self::new(KernelConfig::Gibbs(gibbs), HamiltonianSystem::euclidean(target))
    }

    pub fn mala(target: TargetDensity, eps: f64) -> Result<Self> {
        Self::new(KernelConfig::Mala { eps }, HamiltonianSystem::euclidean(target))
    }

    pub fn ula(target: TargetDensity, eps: f64) -> Result<Self> {
        Self::new(KernelConfig::Ula { eps }, HamiltonianSystem::euclidean(target))
    }

    pub fn with_divergence_threshold(mut self, threshold: f64) -> Self {
        self.divergence_threshold = threshold;
        self
    }

    /// Accepts every non-divergent HMC proposal. The resulting chain is
    /// biased; exposed for negative controls.
    pub fn without_metropolis(mut self) -> Self {
        self.metropolis = false;
        self
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn system(&self) -> &HamiltonianSystem {
        &self.system
    }

    pub fn target(&self) -> &TargetDensity {
        self.system.target()
    }

    pub fn label(&self) -> String {
        match &self.config {
            KernelConfig::Hmc { integrator, time } => {
                let time = match time {
                    TimeDist::Fixed { t } => format!("t={t}"),
                    TimeDist::Uniform { t_max } => format!("t~U(0,{t_max})"),
                };
                format!("hmc[{},eps={},{time}]", integrator.scheme.name(), integrator.step_size)
            }
            KernelConfig::Rwm(r) => format!("rwm[sigma^2={}]", r.cov[(0, 0)]),
            KernelConfig::Gibbs(_) => "gibbs".to_string(),
            KernelConfig::Mala { eps } => format!("mala[eps={eps}]"),
            KernelConfig::Ula { eps } => format!("ula[eps={eps}]"),
        }
    }

    pub fn transition<R: Rng + ?Sized>(&self, q: &Position, rng: &mut R) -> Result<(Position, TransitionInfo)> {
        match &self.config {
            KernelConfig::Hmc { .. } => hmc_transition_with(
                &self.system,
                q,
                &self.config,
                self.divergence_threshold,
                self.metropolis,
                rng,
            ),
            KernelConfig::Rwm(_) => rwm_transition(self.target(), q, &self.config, rng),
            KernelConfig::Gibbs(_) => gibbs_transition(self.target(), q, &self.config, rng),
            KernelConfig::Mala { .. } => mala_transition(self.target(), q, &self.config, rng),
            KernelConfig::Ula { eps } => ula_transition(self.target(), q, *eps, rng),
        }
    }
}

fn wrong_variant(expected: &str, cfg: &KernelConfig) -> Error {
    Error::Contract(format!("expected a {expected} configuration, got {}", cfg.name()))
}

/// Probability `min(1, e^{−Δ})`.
pub fn metropolis_accept_prob(delta: f64) -> f64 {
    if delta.is_nan() {
        0.0
    } else if delta <= 0.0 {
        1.0
    } else {
        (-delta).exp()
    }
}

/// HMC transition: lift, flow, flip, Metropolis correction, projection.
pub fn hmc_transition<R: Rng + ?Sized>(
    sys: &HamiltonianSystem,
    q: &Position,
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<(Position, TransitionInfo)> {
    hmc_transition_with(sys, q, cfg, DEFAULT_DIVERGENCE_THRESHOLD, true, rng)
}

fn hmc_transition_with<R: Rng + ?Sized>(
    sys: &HamiltonianSystem,
    q: &Position,
    cfg: &KernelConfig,
    threshold: f64,
    metropolis: bool,
    rng: &mut R,
) -> Result<(Position, TransitionInfo)> {
    let KernelConfig::Hmc { integrator, time } = cfg else {
        return Err(wrong_variant("hmc", cfg));
    };
    check_dim(sys.dim(), q.len())?;
    let p = sys.kinetic().sample_momentum(q, rng)?;
    let (_, steps) = sample_integration_time(time, integrator.step_size, rng)?;
    let spec = integrator.with_steps(steps);
    let z = PhasePoint { q: q.clone(), p };
    let end = integrate_endpoint(sys, &z, &spec, threshold)?;
    let u: f64 = rng.random();

    if end.divergent {
        return Ok((
            q.clone(),
            TransitionInfo {
                accepted: false,
                delta_h: f64::INFINITY,
                accept_prob: 0.0,
                divergent: true,
                proposal: end.z.q,
                energy: Some(end.h_start),
                evals: end.grad_evals,
            },
        ));
    }

    // H is even in p, so the flip leaves H(z′) unchanged.
    let proposal = end.z.flipped();
    let delta_h = end.h_end - end.h_start;
    let accept_prob = metropolis_accept_prob(delta_h);
    let accepted = !metropolis || u < accept_prob;
    let next = if accepted { proposal.q.clone() } else { q.clone() };
    Ok((
        next,
        TransitionInfo {
            accepted,
            delta_h,
            accept_prob,
            divergent: false,
            proposal: proposal.q,
            energy: Some(end.h_start),
            evals: end.grad_evals,
        },
    ))
}

fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Gaussian random walk Metropolis: translate by `ε ∼ N(0, Σ)` iff
/// `η < f(q+ε)/f(q)`.
pub fn rwm_transition<R: Rng + ?Sized>(
    target: &TargetDensity,
    q: &Position,
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<(Position, TransitionInfo)> {
    let KernelConfig::Rwm(rwm) = cfg else {
        return Err(wrong_variant("rwm", cfg));
    };
    check_dim(target.dim(), q.len())?;
    let step = &rwm.factor * standard_normal_vector(q.len(), rng);
    let eta: f64 = rng.random();
    let proposal = q + step;
    let v0 = target.potential(q)?;
    // Leaving the support has zero density and is rejected.
    let delta = match target.potential(&proposal) {
        Ok(v1) => v1 - v0,
        Err(Error::NonFinite { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let accepted = eta < (-delta).exp();
    let next = if accepted { proposal.clone() } else { q.clone() };
    Ok((
        next,
        TransitionInfo {
            accepted,
            delta_h: delta,
            accept_prob: metropolis_accept_prob(delta),
            divergent: false,
            proposal,
            energy: None,
            evals: 1,
        },
    ))
}

struct Leaf {
    a: f64,
    b: f64,
    fa: f64,
    mass: f64,
}

/// The CDF of coordinate `i` of the target conditioned on the other
/// coordinates, tabulated by adaptive Simpson quadrature over a finite
/// bracket.
pub struct ConditionalCdf {
    leaves: Vec<Leaf>,
    /// `cumulative[j]` is the mass to the left of leaf `j`.
    cumulative: Vec<f64>,
    total: f64,
    scratch: DVector<f64>,
    index: usize,
    target: TargetDensity,
    offset: f64,
    evals: u64,
}

const COARSE_PANELS: usize = 128;
const MAX_DEPTH: u32 = 40;

impl ConditionalCdf {
    pub fn build(target: &TargetDensity, q: &Position, i: usize, halfwidth: f64) -> Result<Self> {
        check_dim(target.dim(), q.len())?;
        if i >= q.len() {
            return Err(Error::Argument(format!(
                "coordinate {i} out of range for dimension {}",
                q.len()
            )));
        }
        if !(halfwidth > 0.0) || !halfwidth.is_finite() {
            return Err(Error::Argument(format!(
                "bracket halfwidth must be positive, got {halfwidth}"
            )));
        }
        let lo = q[i] - halfwidth;
        let hi = q[i] + halfwidth;
        let mut cdf = Self {
            leaves: Vec::new(),
            cumulative: Vec::new(),
            total: 0.0,
            scratch: q.clone(),
            index: i,
            target: target.clone(),
            offset: 0.0,
            evals: 0,
        };

        let width = (hi - lo) / COARSE_PANELS as f64;
        let grid: Vec<f64> = (0..=COARSE_PANELS).map(|k| lo + width * k as f64).collect();
        let potentials = grid.iter().map(|&x| cdf.potential_at(x)).collect::<Result<Vec<_>>>()?;
        let vmin = potentials.iter().copied().fold(f64::INFINITY, f64::min);
        if !vmin.is_finite() {
            return Err(Error::NonFinite {
                what: "conditional density over the whole bracket",
                at: q.iter().copied().collect(),
            });
        }
        cdf.offset = vmin;
        let dens: Vec<f64> = potentials.iter().map(|v| (vmin - v).exp()).collect();

        let mids: Vec<f64> = (0..COARSE_PANELS)
            .map(|k| cdf.density((grid[k] + grid[k + 1]) / 2.0))
            .collect::<Result<Vec<_>>>()?;
        let coarse: f64 = (0..COARSE_PANELS)
            .map(|k| width / 6.0 * (dens[k] + 4.0 * mids[k] + dens[k + 1]))
            .sum();
        if !(coarse > 0.0) || !coarse.is_finite() {
            return Err(Error::NonFinite {
                what: "conditional normalizer",
                at: q.iter().copied().collect(),
            });
        }
        let tol = 1e-13 * coarse;
        for k in 0..COARSE_PANELS {
            let (a, b) = (grid[k], grid[k + 1]);
            let whole = width / 6.0 * (dens[k] + 4.0 * mids[k] + dens[k + 1]);
            cdf.adapt(a, b, dens[k], mids[k], dens[k + 1], whole, tol, 0)?;
        }

        let mut acc = 0.0;
        cdf.cumulative.reserve(cdf.leaves.len());
        for leaf in &cdf.leaves {
            cdf.cumulative.push(acc);
            acc += leaf.mass;
        }
        cdf.total = acc;

        // Mass beyond the bracket must be negligible.
        let edge = dens[0].max(dens[COARSE_PANELS]);
        if edge * (hi - lo) > 1e-9 * cdf.total {
            return Err(Error::Bracket { lo, hi });
        }
        Ok(cdf)
    }

    fn potential_at(&mut self, x: f64) -> Result<f64> {
        self.scratch[self.index] = x;
        self.evals += 1;
        let v = self.target.model().value(&self.scratch);
        if v.is_nan() {
            return Err(Error::NonFinite {
                what: "conditional potential",
                at: self.scratch.iter().copied().collect(),
            });
        }
        // +∞ means outside the support: zero density.
        Ok(v)
    }

    fn density(&mut self, x: f64) -> Result<f64> {
        let v = self.potential_at(x)?;
        Ok((self.offset - v).exp())
    }

    #[allow(clippy::too_many_arguments)]
    fn adapt(&mut self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<()> {
        let m = (a + b) / 2.0;
        let lm = (a + m) / 2.0;
        let rm = (m + b) / 2.0;
        let flm = self.density(lm)?;
        let frm = self.density(rm)?;
        let h = b - a;
        let left = h / 12.0 * (fa + 4.0 * flm + fm);
        let right = h / 12.0 * (fm + 4.0 * frm + fb);
        if depth >= MAX_DEPTH || (left + right - whole).abs() <= 15.0 * tol {
            self.leaves.push(Leaf {
                a,
                b: m,
                fa,
                mass: left,
            });
            self.leaves.push(Leaf {
                a: m,
                b,
                fa: fm,
                mass: right,
            });
            return Ok(());
        }
        self.adapt(a, m, fa, flm, fm, left, tol / 2.0, depth + 1)?;
        self.adapt(m, b, fm, frm, fb, right, tol / 2.0, depth + 1)
    }

    /// Number of conditional-density evaluations spent so far.
    pub fn evals(&self) -> u64 {
        self.evals
    }

    pub fn bracket(&self) -> (f64, f64) {
        (self.leaves[0].a, self.leaves[self.leaves.len() - 1].b)
    }

    fn leaf_index(&self, x: f64) -> usize {
        self.leaves.partition_point(|l| l.b < x).min(self.leaves.len() - 1)
    }

    /// Mass of `[leaf.a, x]` by Simpson's rule.
    fn partial(&mut self, j: usize, x: f64) -> Result<f64> {
        let a = self.leaves[j].a;
        let fa = self.leaves[j].fa;
        if x <= a {
            return Ok(0.0);
        }
        let fm = self.density((a + x) / 2.0)?;
        let fx = self.density(x)?;
        Ok((x - a) / 6.0 * (fa + 4.0 * fm + fx))
    }

    /// `P_i(x)`.
    pub fn cdf(&mut self, x: f64) -> Result<f64> {
        let (lo, hi) = self.bracket();
        if x <= lo {
            return Ok(0.0);
        }
        if x >= hi {
            return Ok(1.0);
        }
        let j = self.leaf_index(x);
        let mass = self.cumulative[j] + self.partial(j, x)?;
        Ok((mass / self.total).clamp(0.0, 1.0))
    }

    /// `P_i⁻¹(η)` by bisection to width `tol`.
    pub fn quantile(&mut self, eta: f64, tol: f64) -> Result<f64> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Argument(format!("quantile level must lie in (0, 1), got {eta}")));
        }
        let mass = eta * self.total;
        let j = self.cumulative.partition_point(|c| *c <= mass).saturating_sub(1);
        let want = mass - self.cumulative[j];
        let (mut a, mut b) = (self.leaves[j].a, self.leaves[j].b);
        while b - a > tol {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.partial(j, m)? < want {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }
}

/// Inverts the conditional CDF of coordinate `i` at level `eta`.
pub fn conditional_cdf_invert(
    target: &TargetDensity,
    q: &Position,
    i: usize,
    eta: f64,
    cfg: &GibbsConfig,
) -> Result<f64> {
    let mut cdf = ConditionalCdf::build(target, q, i, cfg.bracket_halfwidth)?;
    cdf.quantile(eta, cfg.bisection_tol)
}

/// Random-scan Gibbs: pick `i` uniformly, replace `q_i` by `P_i⁻¹(η)`.
pub fn gibbs_transition<R: Rng + ?Sized>(
    target: &TargetDensity,
    q: &Position,
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<(Position, TransitionInfo)> {
    let KernelConfig::Gibbs(gibbs) = cfg else {
        return Err(wrong_variant("gibbs", cfg));
    };
    check_dim(target.dim(), q.len())?;
    let i = rng.random_range(0..q.len());
    let eta = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let mut cdf = ConditionalCdf::build(target, q, i, gibbs.bracket_halfwidth)?;
    let x = cdf.quantile(eta, gibbs.bisection_tol)?;
    let mut next = q.clone();
    next[i] = x;
    Ok((
        next.clone(),
        TransitionInfo {
            accepted: true,
            delta_h: 0.0,
            accept_prob: 1.0,
            divergent: false,
            proposal: next,
            energy: None,
            evals: cdf.evals(),
        },
    ))
}

fn mala_log_proposal(to: &Position, from: &Position, grad_from: &DVector<f64>, eps: f64) -> f64 {
    let mean = from - grad_from * (0.5 * eps * eps);
    -(to - mean).norm_squared() / (2.0 * eps * eps)
}

/// Metropolis-adjusted Langevin transition.
pub fn mala_transition<R: Rng + ?Sized>(
    target: &TargetDensity,
    q: &Position,
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<(Position, TransitionInfo)> {
    let KernelConfig::Mala { eps } = *cfg else {
        return Err(wrong_variant("mala", cfg));
    };
    check_dim(target.dim(), q.len())?;
    let grad = target.grad_potential(q)?;
    let noise = standard_normal_vector(q.len(), rng);
    let u: f64 = rng.random();
    let proposal = q - &grad * (0.5 * eps * eps) + noise * eps;
    let v0 = target.potential(q)?;
    let delta = match (target.potential(&proposal), target.grad_potential(&proposal)) {
        (Ok(v1), Ok(g1)) => {
            let log_ratio =
                v0 - v1 + mala_log_proposal(q, &proposal, &g1, eps) - mala_log_proposal(&proposal, q, &grad, eps);
            -log_ratio
        }
        (Err(Error::NonFinite { .. }), _) | (_, Err(Error::NonFinite { .. })) => f64::INFINITY,
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let accept_prob = metropolis_accept_prob(delta);
    let accepted = u < accept_prob;
    let next = if accepted { proposal.clone() } else { q.clone() };
    Ok((
        next,
        TransitionInfo {
            accepted,
            delta_h: delta,
            accept_prob,
            divergent: false,
            proposal,
            energy: None,
            evals: 1,
        },
    ))
}

fn ula_step<R: Rng + ?Sized>(target: &TargetDensity, q: &Position, eps: f64, rng: &mut R) -> Result<Position> {
    let grad = target.grad_potential(q)?;
    let noise = standard_normal_vector(q.len(), rng);
    Ok(q - grad * (0.5 * eps) + noise * eps.sqrt())
}

/// One unadjusted Euler–Maruyama step, always accepted. Not an exact kernel.
pub fn ula_transition<R: Rng + ?Sized>(
    target: &TargetDensity,
    q: &Position,
    eps: f64,
    rng: &mut R,
) -> Result<(Position, TransitionInfo)> {
    check_dim(target.dim(), q.len())?;
    let next = ula_step(target, q, eps, rng)?;
    Ok((
        next.clone(),
        TransitionInfo {
            accepted: true,
            delta_h: 0.0,
            accept_prob: 1.0,
            divergent: false,
            proposal: next,
            energy: None,
            evals: 1,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct LangevinPath {
    pub states: Vec<Position>,
    pub divergent: bool,
}

/// Unadjusted Langevin path `q_{k+1} = q_k − (ε/2)∇V(q_k) + √ε·ξ_k`,
/// including `q0`. Stops early and flags divergence on non-finite values.
pub fn langevin_path<R: Rng + ?Sized>(
    target: &TargetDensity,
    q0: &Position,
    eps: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<LangevinPath> {
    check_dim(target.dim(), q0.len())?;
    if !(eps >= 0.0) {
        return Err(Error::Argument(format!(
            "langevin step must be non-negative, got {eps}"
        )));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(q0.clone());
    let mut q = q0.clone();
    for _ in 0..n_steps {
        match ula_step(target, &q, eps, rng) {
            Ok(next) if next.iter().all(|x| x.is_finite()) => {
                q = next;
                states.push(q.clone());
            }
            Ok(_) | Err(Error::NonFinite { .. }) => {
                return Ok(LangevinPath {
                    states,
                    divergent: true,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(LangevinPath {
        states,
        divergent: false,
    })
}

/// Sequence of states produced by repeated transitions.
#[derive(Debug, Clone)]
pub struct Chain {
    pub states: Vec<Position>,
    pub infos: Vec<TransitionInfo>,
    pub seed: u64,
    pub chain_index: u64,
    pub label: String,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.infos.is_empty() {
            return 0.0;
        }
        self.infos.iter().filter(|i| i.accepted).count() as f64 / self.infos.len() as f64
    }

    pub fn divergences(&self) -> usize {
        self.infos.iter().filter(|i| i.divergent).count()
    }

    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[i]).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.infos.iter().filter_map(|i| i.energy).collect()
    }

    pub fn total_evals(&self) -> u64 {
        self.infos.iter().map(|i| i.evals).sum()
    }
}

/// Independent random stream for chain `index` under master `seed`.
pub fn chain_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `n` transitions from `q0` using stream 0 of `seed`.
pub fn run_chain(kernel: &Kernel, q0: &Position, n: usize, seed: u64) -> Result<Chain> {
    run_chain_indexed(kernel, q0, n, seed, 0)
}

pub fn run_chain_indexed(kernel: &Kernel, q0: &Position, n: usize, seed: u64, chain_index: u64) -> Result<Chain> {
    let mut rng = chain_rng(seed, chain_index);
    run_chain_with_rng(kernel, q0, n, &mut rng, seed, chain_index)
}

pub fn run_chain_with_rng<R: Rng + ?Sized>(
    kernel: &Kernel,
    q0: &Position,
    n: usize,
    rng: &mut R,
    seed: u64,
    chain_index: u64,
) -> Result<Chain> {
    if n == 0 {
        return Err(Error::Argument("a chain needs at least one transition".into()));
    }
    check_dim(kernel.target().dim(), q0.len())?;
    let mut states = Vec::with_capacity(n);
    let mut infos = Vec::with_capacity(n);
    let mut q = q0.clone();
    for _ in 0..n {
        let (next, info) = kernel.transition(&q, rng)?;
        q = next;
        states.push(q.clone());
        infos.push(info);
    }
    Ok(Chain {
        states,
        infos,
        seed,
        chain_index,
        label: kernel.label(),
    })
}

/// A chain recorded at fixed evaluation-cost checkpoints.
#[derive(Debug, Clone)]
pub struct BudgetedChain {
    /// State at each checkpoint, with the info of the transition that crossed it.
    pub chain: Chain,
    pub transitions: usize,
    pub acceptance_rate: f64,
    pub divergences: usize,
    pub total_evals: u64,
}

/// Runs `kernel` until `samples` checkpoints spaced `evals_per_sample`
/// evaluations apart have been recorded.
pub fn run_chain_budgeted(
    kernel: &Kernel,
    q0: &Position,
    samples: usize,
    evals_per_sample: f64,
    seed: u64,
    chain_index: u64,
) -> Result<BudgetedChain> {
    if samples == 0 || !(evals_per_sample > 0.0) {
        return Err(Error::Argument(
            "budgeted chain needs samples >= 1 and a positive budget".into(),
        ));
    }
    let mut rng = chain_rng(seed, chain_index);
    let mut states = Vec::with_capacity(samples);
    let mut infos = Vec::with_capacity(samples);
    let mut q = q0.clone();
    let (mut spent, mut transitions, mut accepted, mut divergences) = (0u64, 0usize, 0usize, 0usize);
    let mut next_checkpoint = evals_per_sample;
    while states.len() < samples {
        let (next, info) = kernel.transition(&q, &mut rng)?;
        q = next;
        spent += info.evals.max(1);
        transitions += 1;
        accepted += info.accepted as usize;
        divergences += info.divergent as usize;
        if spent as f64 >= next_checkpoint {
            while spent as f64 >= next_checkpoint && states.len() < samples {
                states.push(q.clone());
                infos.push(info.clone());
                next_checkpoint += evals_per_sample;
            }
        }
    }
    Ok(BudgetedChain {
        chain: Chain {
            states,
            infos,
            seed,
            chain_index,
            label: kernel.label(),
        },
        transitions,
        acceptance_rate: accepted as f64 / transitions as f64,
        divergences,
        total_evals: spent,
    })
}
