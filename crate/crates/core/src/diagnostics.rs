//! Estimators and correctness oracles over chains: MCMC averages, lag
//! autocorrelation and effective sample size, energy-distribution checks and
//! gradient hygiene.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{HamiltonianSystem, IntegratorSpec, Scheme};
use crate::error::{Error, Result};
use crate::fiber::KineticEnergy;
use crate::kernels::{chain_rng, run_chain_budgeted, run_chain_indexed, Chain, Kernel, TimeDist};
use crate::target::{make_target, Position, TargetDensity, TargetSpec};

/// Square-integrable test function `f: Q → ℝ`.
#[derive(Clone)]
pub struct TestFunction {
    label: String,
    f: Arc<dyn Fn(&Position) -> f64 + Send + Sync>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunction({})", self.label)
    }
}

impl TestFunction {
    pub fn new(label: impl Into<String>, f: impl Fn(&Position) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    /// `q ↦ q_i` (zero-based index, labelled one-based).
    pub fn coordinate(i: usize) -> Self {
        Self::new(format!("q{}", i + 1), move |q| q[i])
    }

    /// `q ↦ q_i²`.
    pub fn coordinate_squared(i: usize) -> Self {
        Self::new(format!("q{}^2", i + 1), move |q| q[i] * q[i])
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, q: &Position) -> f64 {
        (self.f)(q)
    }

    pub fn values(&self, chain: &Chain) -> Vec<f64> {
        chain.states.iter().map(|q| self.eval(q)).collect()
    }
}

/// `f̂_N = (1/N) Σ f(q_n)`.
pub fn mcmc_estimator(chain: &Chain, f: &TestFunction) -> Result<f64> {
    if chain.is_empty() {
        return Err(Error::Argument("estimator needs a non-empty chain".into()));
    }
    Ok(f.values(chain).iter().sum::<f64>() / chain.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrResult {
    pub rho1: f64,
    /// `ρ_k` for `k = 1, 2, …` up to (excluding) the first negative lag.
    pub rho: Vec<f64>,
    pub ess: f64,
    pub n: usize,
}

impl AutocorrResult {
    /// Lag-1 autocorrelation with anti-correlation clipped to zero, used to
    /// rank kernels.
    pub fn ranking_rho(&self) -> f64 {
        self.rho1.max(0.0)
    }
}

pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Autocorrelation of a raw series.
pub fn autocorrelation_series(xs: &[f64]) -> Result<AutocorrResult> {
    let n = xs.len();
    if n < 10 {
        return Err(Error::Argument(format!(
            "autocorrelation needs at least 10 values, got {n}"
        )));
    }
    let (mean, var) = mean_and_variance(xs);
    if !(var > 0.0) {
        return Err(Error::Degenerate("series has zero empirical variance".into()));
    }
    let centered: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let lag = |k: usize| -> f64 {
        centered[..n - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * var)
    };
    let rho1 = lag(1);
    let mut rho = Vec::new();
    for k in 1..n / 2 {
        let r = lag(k);
        if r < 0.0 {
            break;
        }
        rho.push(r);
    }
    let ess = (n as f64 / (1.0 + 2.0 * rho.iter().sum::<f64>())).min(n as f64);
    Ok(AutocorrResult { rho1, rho, ess, n })
}

/// Empirical `ρ[f]` of the kernel that generated `chain`.
pub fn autocorrelation_rho(chain: &Chain, f: &TestFunction) -> Result<AutocorrResult> {
    autocorrelation_series(&f.values(chain))
}

/// Sample mean with its autocorrelation-adjusted standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ess: f64,
}

pub fn mean_estimate(xs: &[f64]) -> Result<MeanEstimate> {
    let ac = autocorrelation_series(xs)?;
    let (mean, var) = mean_and_variance(xs);
    Ok(MeanEstimate {
        mean,
        std_error: (var / ac.ess).sqrt(),
        ess: ac.ess,
    })
}

/// Outcome of a moment comparison against analytic values.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCheck {
    pub coordinate: usize,
    pub mean: MeanEstimate,
    pub expected_mean: f64,
    /// Estimate of `E[(q_i − μ_i)²]` with its adjusted standard error.
    pub second: MeanEstimate,
    pub expected_variance: f64,
    pub pass: bool,
}

impl MomentCheck {
    pub fn mean_z(&self) -> f64 {
        (self.mean.mean - self.expected_mean) / self.mean.std_error
    }
    pub fn variance_z(&self) -> f64 {
        (self.second.mean - self.expected_variance) / self.second.std_error
    }
}

/// Compares the mean and variance of every coordinate with the target's
/// analytic moments, within `z_max` autocorrelation-adjusted standard errors.
pub fn stationarity_check(chain: &Chain, target: &TargetDensity, z_max: f64) -> Result<Vec<MomentCheck>> {
    let (means, vars) = target
        .moments()
        .ok_or_else(|| Error::Contract(format!("target {} has no analytic moments", target.label())))?;
    (0..chain.dim())
        .map(|i| {
            let xs = chain.coordinate(i);
            let mean = mean_estimate(&xs)?;
            let sq: Vec<f64> = xs.iter().map(|x| (x - means[i]).powi(2)).collect();
            let second = mean_estimate(&sq)?;
            let mut check = MomentCheck {
                coordinate: i,
                mean,
                expected_mean: means[i],
                second,
                expected_variance: vars[i],
                pass: false,
            };
            check.pass = check.mean_z().abs() <= z_max && check.variance_z().abs() <= z_max;
            Ok(check)
        })
        .collect()
}

/// Regularized lower incomplete gamma `P(n, x)` for integer shape `n`.
pub fn gamma_cdf_integer_shape(n: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    // 1 − e^{−x} Σ_{k<n} x^k / k!, summed in log space.
    let ln_x = x.ln();
    let mut ln_term = -x;
    let mut tail = 0.0;
    for k in 0..n {
        if k > 0 {
            ln_term += ln_x - (k as f64).ln();
        }
        tail += ln_term.exp();
    }
    (1.0 - tail).clamp(0.0, 1.0)
}

pub const ENERGY_BIN_WIDTH: f64 = 0.5;

/// Coefficient of the 1% Kolmogorov–Smirnov critical value `c/√N`.
pub const KS_CRITICAL_1PCT: f64 = 1.628;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyStats {
    pub energies: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
    /// KS distance to the exact energy law, when one is known.
    pub ks_statistic: Option<f64>,
    pub ks_critical: Option<f64>,
}

impl EnergyStats {
    fn from_energies(energies: &[f64]) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::Argument("no energies supplied".into()));
        }
        if let Some(bad) = energies.iter().find(|e| !e.is_finite()) {
            return Err(Error::NonFinite {
                what: "energy sample",
                at: vec![*bad],
            });
        }
        let (mean, variance) = mean_and_variance(energies);
        let lo = energies.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
        let hi = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bins = (((hi - lo) / ENERGY_BIN_WIDTH).floor() as usize) + 1;
        let mut counts = vec![0usize; bins];
        for e in energies {
            let b = (((e - lo) / ENERGY_BIN_WIDTH).floor() as usize).min(bins - 1);
            counts[b] += 1;
        }
        Ok(Self {
            energies: energies.to_vec(),
            mean,
            variance,
            bin_width: ENERGY_BIN_WIDTH,
            counts,
            ks_statistic: None,
            ks_critical: None,
        })
    }

    pub fn count_above(&self, e: f64) -> usize {
        self.energies.iter().filter(|x| **x > e).count()
    }

    pub fn ks_pass(&self) -> Option<bool> {
        Some(self.ks_statistic? <= self.ks_critical?)
    }
}

/// Kolmogorov–Smirnov distance between samples and a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn require_gaussian_system(sys: &HamiltonianSystem) -> Result<()> {
    if sys.supports_exact_flow() {
        Ok(())
    } else {
        Err(Error::Contract(
            "energy law is only known for an iid Gaussian target with identity metric and Gaussian kinetic energy"
                .into(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCheck {
    pub stats: EnergyStats,
    pub shape: usize,
    pub mean_tolerance: f64,
    pub variance_tolerance: f64,
    pub pass: bool,
}

/// Checks that energies at momentum refreshes follow `Gamma(n, 1)`.
///
/// Mean must lie within `n ± 4√(n/N)`. The variance must lie within
/// `n·(1 ± c/√N)` with `c = max(5, 4·√(2 + 6/n))`, the second term being four
/// standard deviations of the sample variance of a Gamma(n, 1) variable.
pub fn energy_gamma_check(sys: &HamiltonianSystem, energies: &[f64]) -> Result<EnergyCheck> {
    require_gaussian_system(sys)?;
    let stats = EnergyStats::from_energies(energies)?;
    let n = sys.dim();
    let nf = n as f64;
    let count = energies.len() as f64;
    let mean_tolerance = 4.0 * (nf / count).sqrt();
    let c = 5f64.max(4.0 * (2.0 + 6.0 / nf).sqrt());
    let variance_tolerance = nf * c / count.sqrt();
    let pass = (stats.mean - nf).abs() <= mean_tolerance && (stats.variance - nf).abs() <= variance_tolerance;
    Ok(EnergyCheck {
        stats,
        shape: n,
        mean_tolerance,
        variance_tolerance,
        pass,
    })
}

/// Histogram of `H` values. For the Euclidean Gaussian system the density of
/// states is a power of `E`, so energies follow `Gamma(n, 1)`; that law is
/// compared by a KS test.
pub fn density_of_states_histogram(sys: &HamiltonianSystem, energies: &[f64]) -> Result<EnergyStats> {
    if energies.len() < 1000 {
        return Err(Error::Argument(format!(
            "density of states needs at least 1000 samples, got {}",
            energies.len()
        )));
    }
    let mut stats = EnergyStats::from_energies(energies)?;
    if sys.supports_exact_flow() {
        let n = sys.dim();
        stats.ks_statistic = Some(ks_statistic(energies, |e| gamma_cdf_integer_shape(n, e)));
        stats.ks_critical = Some(KS_CRITICAL_1PCT / (energies.len() as f64).sqrt());
    }
    Ok(stats)
}

pub const GRADIENT_FD_STEP: f64 = 1e-5;
pub const GRADIENT_FD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub label: String,
    pub points: usize,
    pub components: usize,
    /// Largest `|analytic − fd| / (1 + |analytic|)` seen.
    pub max_rel_dev: f64,
    pub pass: bool,
}

fn central_difference(f: &dyn Fn(&DVector<f64>) -> Result<f64>, x: &DVector<f64>, i: usize) -> Result<f64> {
    let mut up = x.clone();
    let mut down = x.clone();
    up[i] += GRADIENT_FD_STEP;
    down[i] -= GRADIENT_FD_STEP;
    Ok((f(&up)? - f(&down)?) / (2.0 * GRADIENT_FD_STEP))
}

/// Central difference at `h` and `h/2` combined by Richardson extrapolation,
/// accurate to `O(h⁴)`.
fn extrapolated_difference(f: &dyn Fn(&DVector<f64>) -> Result<f64>, x: &DVector<f64>, i: usize) -> Result<f64> {
    let at = |h: f64| -> Result<f64> {
        let mut up = x.clone();
        let mut down = x.clone();
        up[i] += h;
        down[i] -= h;
        Ok((f(&up)? - f(&down)?) / (2.0 * h))
    };
    let coarse = at(GRADIENT_FD_STEP)?;
    let fine = at(0.5 * GRADIENT_FD_STEP)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

fn rel_dev(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / (1.0 + analytic.abs())
}

fn probe_point(target: &TargetDensity, rng: &mut ChaCha8Rng) -> Position {
    target
        .exact_sample(rng)
        .unwrap_or_else(|| DVector::from_fn(target.dim(), |_, _| StandardNormal.sample(rng)))
}

/// Compares `∇V` against central differences at 100 random points.
pub fn gradient_fd_check(target: &TargetDensity, seed: u64) -> Result<GradientReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = target.dim();
    let points = 100;
    let mut worst = 0.0f64;
    let potential = |x: &DVector<f64>| target.potential(x);
    for _ in 0..points {
        let q = probe_point(target, &mut rng);
        let g = target.grad_potential(&q)?;
        for i in 0..n {
            worst = worst.max(rel_dev(g[i], central_difference(&potential, &q, i)?));
        }
    }
    Ok(GradientReport {
        label: target.label().to_string(),
        points,
        components: n,
        max_rel_dev: worst,
        pass: worst <= GRADIENT_FD_TOL,
    })
}

/// Compares `∂T/∂p` and `∂T/∂q` against extrapolated central differences at
/// 100 random `(q, p)`, with `q` drawn from `target` when given.
pub fn kinetic_fd_check(kinetic: &KineticEnergy, target: Option<&TargetDensity>, seed: u64) -> Result<GradientReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = kinetic.dim();
    let points = 100;
    let mut worst = 0.0f64;
    for _ in 0..points {
        let q = match target {
            Some(t) => probe_point(t, &mut rng),
            None => DVector::from_fn(n, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                2.0 * z
            }),
        };
        let p = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let gp = kinetic.grad_kinetic_p(&q, &p)?;
        let gq = kinetic.grad_kinetic_q(&q, &p)?;
        let in_p = |x: &DVector<f64>| kinetic.kinetic_energy(&q, x);
        let in_q = |x: &DVector<f64>| kinetic.kinetic_energy(x, &p);
        for i in 0..n {
            worst = worst.max(rel_dev(gp[i], extrapolated_difference(&in_p, &p, i)?));
            worst = worst.max(rel_dev(gq[i], extrapolated_difference(&in_q, &q, i)?));
        }
    }
    Ok(GradientReport {
        label: format!("{:?}/{:?}", kinetic.family(), kinetic.metric()),
        points,
        components: n,
        max_rel_dev: worst,
        pass: worst <= GRADIENT_FD_TOL,
    })
}

/// Kernels compared on a shared target at a matched evaluation budget.
#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub kernels: Vec<Kernel>,
    pub test_functions: Vec<TestFunction>,
    pub start: Position,
    /// Recorded samples per kernel.
    pub samples: usize,
    /// Gradient (or density) evaluations between recorded samples.
    pub evals_per_sample: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub kernel: String,
    pub f: String,
    pub rho1: f64,
    pub ess: f64,
    pub accept_rate: f64,
    pub divergences: usize,
}

pub fn kernel_comparison(bench: &BenchSpec) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for (k, kernel) in bench.kernels.iter().enumerate() {
        let run = run_chain_budgeted(
            kernel,
            &bench.start,
            bench.samples,
            bench.evals_per_sample,
            bench.seed,
            k as u64,
        )?;
        for f in &bench.test_functions {
            let ac = autocorrelation_rho(&run.chain, f)?;
            rows.push(ComparisonRow {
                kernel: kernel.label(),
                f: f.label().to_string(),
                rho1: ac.rho1,
                ess: ac.ess,
                accept_rate: run.acceptance_rate,
                divergences: run.divergences,
            });
        }
    }
    Ok(rows)
}

/// Mean acceptance of one integrator at one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub dim: usize,
    pub integrator: String,
    pub accept_rate: f64,
    pub mean_accept_prob: f64,
}

/// HMC acceptance on iid Gaussians of each dimension in `dims`, for each
/// scheme, with fixed step size and integration time. Chains start from an
/// exact draw.
pub fn acceptance_scaling(
    dims: &[usize],
    schemes: &[Scheme],
    eps: f64,
    t: f64,
    transitions: usize,
    seed: u64,
) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::new();
    for (d, &dim) in dims.iter().enumerate() {
        let target = make_target(&TargetSpec::IidGaussian { dim })?;
        let mut rng = chain_rng(seed, u64::MAX - d as u64);
        let q0 = target
            .exact_sample(&mut rng)
            .ok_or_else(|| Error::Contract("iid Gaussian has an exact sampler".into()))?;
        for (s, scheme) in schemes.iter().enumerate() {
            let spec = IntegratorSpec::new(*scheme, eps, 1);
            let kernel = Kernel::hmc(
                HamiltonianSystem::euclidean(target.clone()),
                spec,
                TimeDist::Fixed { t },
            )?;
            let index = (d * schemes.len() + s) as u64;
            let chain = run_chain_indexed(&kernel, &q0, transitions, seed, index)?;
            let mean_accept_prob = chain.infos.iter().map(|i| i.accept_prob).sum::<f64>() / chain.infos.len() as f64;
            rows.push(ScalingRow {
                dim,
                integrator: scheme.name().to_string(),
                accept_rate: chain.acceptance_rate(),
                mean_accept_prob,
            });
        }
    }
    Ok(rows)
}
