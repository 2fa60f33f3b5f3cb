//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use geohmc::prelude::*;
use std::result::Result;

use crate::CliError;

/// Every accepted key with its default ("" when there is none).
pub const KEYS: &[(&str, &str)] = &[
    ("target", ""),
    ("target.dim", "2"),
    ("target.sigma2", "100"),
    ("target.b", "0.1"),
    ("target.mean", ""),
    ("target.cov", ""),
    ("metric", "identity"),
    ("metric.alpha", "1e6"),
    ("metric.matrix", ""),
    ("kinetic", "gaussian"),
    ("kinetic.nu", "5"),
    ("integrator", "leapfrog"),
    ("step_size", "0.1"),
    ("glf.tol", "1e-10"),
    ("glf.max_iters", "100"),
    ("kernel", "hmc"),
    ("hmc.t_max", "6.3"),
    ("hmc.t_fixed", ""),
    ("rwm.sigma", "1"),
    ("gibbs.tol", "1e-10"),
    ("gibbs.halfwidth", "50"),
    ("mala.eps", "0.5"),
    ("chains", "1"),
    ("iterations", "1000"),
    ("check.iterations", "20000"),
    ("seed", "0"),
    ("init", ""),
    ("output_dir", "."),
    ("scaling.dims", "1 10 100"),
    ("scaling.t", "1"),
    ("scaling.transitions", "1000"),
    ("bench.kernels", "hmc rwm"),
    ("bench.samples", "5000"),
    ("bench.budget", "200"),
    ("bench.f", "q1 q2"),
    ("trajectory.kind", "hamiltonian"),
    ("trajectory.steps", "100"),
    ("trajectory.q0", ""),
    ("trajectory.p0", ""),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetChoice {
    IidGaussian,
    Gaussian,
    WarpedGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricChoice {
    Identity,
    Dense,
    SoftAbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelChoice {
    Hmc,
    Rwm,
    Gibbs,
    Mala,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Hamiltonian,
    Langevin,
}

impl KernelChoice {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "hmc" => Some(KernelChoice::Hmc),
            "rwm" => Some(KernelChoice::Rwm),
            "gibbs" => Some(KernelChoice::Gibbs),
            "mala" => Some(KernelChoice::Mala),
            _ => None,
        }
    }
}

/// A validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub target: TargetChoice,
    pub dim: usize,
    pub sigma2: f64,
    pub b: f64,
    pub mean: Option<Vec<f64>>,
    pub cov: Option<PathBuf>,
    pub metric: MetricChoice,
    pub alpha: f64,
    pub metric_matrix: Option<PathBuf>,
    pub student_t: bool,
    pub nu: f64,
    pub scheme: Scheme,
    pub step_size: f64,
    pub kernel: KernelChoice,
    pub t_max: f64,
    pub t_fixed: Option<f64>,
    pub rwm_sigma: f64,
    pub gibbs_tol: f64,
    pub gibbs_halfwidth: f64,
    pub mala_eps: f64,
    pub chains: usize,
    pub iterations: usize,
    pub check_iterations: usize,
    pub seed: u64,
    pub init: Option<Vec<f64>>,
    pub output_dir: PathBuf,
    pub scaling_dims: Vec<usize>,
    pub scaling_t: f64,
    pub scaling_transitions: usize,
    pub bench_kernels: Vec<KernelChoice>,
    pub bench_samples: usize,
    pub bench_budget: f64,
    pub bench_f: Vec<usize>,
    pub trajectory_kind: TrajectoryKind,
    pub trajectory_steps: usize,
    pub trajectory_q0: Option<Vec<f64>>,
    pub trajectory_p0: Option<Vec<f64>>,
    /// `(key, value, from file)` for every key, in table order.
    pub resolved: Vec<(String, String, bool)>,
}

struct Raw {
    values: BTreeMap<String, (String, usize)>,
}

impl Raw {
    fn line(&self, key: &str) -> usize {
        self.values.get(key).map_or(0, |v| v.1)
    }

    fn text(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|v| v.0.as_str()).or_else(|| {
            KEYS.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, d)| *d)
                .filter(|d| !d.is_empty())
        })
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> CliError {
        CliError::Config {
            line: self.line(key),
            msg: format!("{key}: {}", msg.into()),
        }
    }

    fn parsed<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, CliError> {
        match self.text(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| self.err(key, format!("expected {what}, got {s:?}"))),
        }
    }

    fn real(&self, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.parsed(key, "a real number")?.expect("key has a default");
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(key, "must be finite"))
        }
    }

    fn positive(&self, key: &str) -> Result<f64, CliError> {
        let v = self.real(key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.err(key, format!("must be positive, got {v}")))
        }
    }

    fn count(&self, key: &str) -> Result<usize, CliError> {
        let v: usize = self.parsed(key, "a non-negative integer")?.expect("key has a default");
        if v >= 1 {
            Ok(v)
        } else {
            Err(self.err(key, "must be at least 1"))
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(s) = self.text(key) else { return Ok(None) };
        s.split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.err(key, format!("expected a list of reals, got {t:?}")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn words(&self, key: &str) -> Vec<&str> {
        self.text(key).map_or_else(Vec::new, |s| {
            s.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .collect()
        })
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)]) -> Result<T, CliError> {
        let s = self.text(key).ok_or_else(|| self.err(key, "required key is missing"))?;
        options
            .iter()
            .find(|(name, _)| *name == s)
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.err(key, format!("expected one of {}, got {s:?}", names.join("|")))
            })
    }

    fn path(&self, key: &str, base: &Path) -> Option<PathBuf> {
        self.text(key).map(|s| base.join(s))
    }
}

fn tokenize(text: &str) -> Result<Raw, CliError> {
    let mut values = BTreeMap::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(CliError::Config {
                line,
                msg: format!("expected `key = value`, got {content:?}"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(CliError::Config {
                line,
                msg: format!("unknown key {key:?}"),
            });
        }
        if value.is_empty() {
            return Err(CliError::Config {
                line,
                msg: format!("{key}: empty value"),
            });
        }
        if let Some((_, first)) = values.insert(key.to_string(), (value.to_string(), line)) {
            return Err(CliError::Config {
                line,
                msg: format!("{key}: duplicate key (first set on line {first})"),
            });
        }
    }
    Ok(Raw { values })
}

/// Parses config text. Relative file paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, CliError> {
    let raw = tokenize(text)?;

    let target = raw.choice(
        "target",
        &[
            ("iid_gaussian", TargetChoice::IidGaussian),
            ("gaussian", TargetChoice::Gaussian),
            ("warped_gaussian", TargetChoice::WarpedGaussian),
        ],
    )?;
    let metric = raw.choice(
        "metric",
        &[
            ("identity", MetricChoice::Identity),
            ("dense", MetricChoice::Dense),
            ("softabs", MetricChoice::SoftAbs),
        ],
    )?;
    let student_t = raw.choice("kinetic", &[("gaussian", false), ("student_t", true)])?;
    let nu = raw.real("kinetic.nu")?;
    if student_t && !(nu > 2.0) {
        return Err(raw.err(
            "kinetic.nu",
            format!("must exceed 2 so the momentum variance is finite, got {nu}"),
        ));
    }
    let glf_tol = raw.positive("glf.tol")?;
    let glf_max_iters = raw.count("glf.max_iters")?;
    let scheme = raw.choice(
        "integrator",
        &[
            ("leapfrog", Scheme::Leapfrog),
            (
                "glf",
                Scheme::GeneralizedLeapfrog {
                    tol: glf_tol,
                    max_iters: glf_max_iters,
                },
            ),
            ("euler", Scheme::Euler),
            ("exact", Scheme::ExactGaussian),
        ],
    )?;
    let kernel = raw.choice(
        "kernel",
        &[
            ("hmc", KernelChoice::Hmc),
            ("rwm", KernelChoice::Rwm),
            ("gibbs", KernelChoice::Gibbs),
            ("mala", KernelChoice::Mala),
        ],
    )?;
    let t_fixed = match raw.values.contains_key("hmc.t_fixed") {
        true => Some(raw.positive("hmc.t_fixed")?),
        false => None,
    };
    let seed: u64 = raw
        .parsed("seed", "a non-negative integer")?
        .expect("key has a default");

    let scaling_dims = raw
        .words("scaling.dims")
        .iter()
        .map(|w| {
            w.parse::<usize>()
                .ok()
                .filter(|d| *d >= 1)
                .ok_or_else(|| raw.err("scaling.dims", format!("expected positive integers, got {w:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let bench_kernels = raw
        .words("bench.kernels")
        .iter()
        .map(|w| KernelChoice::parse(w).ok_or_else(|| raw.err("bench.kernels", format!("unknown kernel {w:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let dim = raw.count("target.dim")?;
    let bench_f = raw
        .words("bench.f")
        .iter()
        .map(|w| {
            w.strip_prefix('q')
                .and_then(|i| i.parse::<usize>().ok())
                .filter(|i| (1..=dim).contains(i))
                .map(|i| i - 1)
                .ok_or_else(|| raw.err("bench.f", format!("expected coordinates q1..q{dim}, got {w:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if bench_kernels.is_empty() || bench_f.is_empty() || scaling_dims.is_empty() {
        let key = if bench_kernels.is_empty() {
            "bench.kernels"
        } else if bench_f.is_empty() {
            "bench.f"
        } else {
            "scaling.dims"
        };
        return Err(raw.err(key, "list must not be empty"));
    }

    let check_len = |key: &str, v: Option<Vec<f64>>| -> Result<Option<Vec<f64>>, CliError> {
        match v {
            Some(v) if v.len() != dim => Err(raw.err(key, format!("expected {dim} values, got {}", v.len()))),
            other => Ok(other),
        }
    };

    let cfg = RunConfig {
        target,
        dim,
        sigma2: raw.positive("target.sigma2")?,
        b: raw.real("target.b")?,
        mean: check_len("target.mean", raw.list("target.mean")?)?,
        cov: raw.path("target.cov", base),
        metric,
        alpha: raw.positive("metric.alpha")?,
        metric_matrix: raw.path("metric.matrix", base),
        student_t,
        nu,
        scheme,
        step_size: raw.positive("step_size")?,
        kernel,
        t_max: raw.positive("hmc.t_max")?,
        t_fixed,
        rwm_sigma: raw.positive("rwm.sigma")?,
        gibbs_tol: raw.positive("gibbs.tol")?,
        gibbs_halfwidth: raw.positive("gibbs.halfwidth")?,
        mala_eps: raw.positive("mala.eps")?,
        chains: raw.count("chains")?,
        iterations: raw.count("iterations")?,
        check_iterations: raw.count("check.iterations")?,
        seed,
        init: check_len("init", raw.list("init")?)?,
        output_dir: raw.path("output_dir", base).unwrap_or_else(|| base.to_path_buf()),
        scaling_dims,
        scaling_t: raw.positive("scaling.t")?,
        scaling_transitions: raw.count("scaling.transitions")?,
        bench_kernels,
        bench_samples: raw.count("bench.samples")?,
        bench_budget: raw.positive("bench.budget")?,
        bench_f,
        trajectory_kind: raw.choice(
            "trajectory.kind",
            &[
                ("hamiltonian", TrajectoryKind::Hamiltonian),
                ("langevin", TrajectoryKind::Langevin),
            ],
        )?,
        trajectory_steps: raw.count("trajectory.steps")?,
        trajectory_q0: check_len("trajectory.q0", raw.list("trajectory.q0")?)?,
        trajectory_p0: check_len("trajectory.p0", raw.list("trajectory.p0")?)?,
        resolved: KEYS
            .iter()
            .map(|(k, d)| match raw.values.get(*k) {
                Some((v, _)) => (k.to_string(), v.clone(), true),
                None => (k.to_string(), d.to_string(), false),
            })
            .collect(),
    };
    if cfg.target == TargetChoice::Gaussian && cfg.cov.is_none() {
        return Err(raw.err("target", "gaussian target needs target.cov"));
    }
    if cfg.metric == MetricChoice::Dense && cfg.metric_matrix.is_none() {
        return Err(raw.err("metric", "dense metric needs metric.matrix"));
    }
    Ok(cfg)
}

/// Reads a config file; relative paths inside it resolve against its directory.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base)
}

/// Reads a whitespace-separated square matrix.
pub fn read_matrix(path: &Path, dim: usize) -> Result<DMatrix<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(str::parse).collect::<Result<Vec<f64>, _>>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(CliError::Invalid(format!(
            "{}: expected a {dim}x{dim} matrix",
            path.display()
        )));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

impl RunConfig {
    /// Records a command-line override in the banner.
    pub fn set_override(&mut self, key: &str, value: String) {
        if let Some(entry) = self.resolved.iter_mut().find(|(k, _, _)| k == key) {
            entry.1 = value;
            entry.2 = true;
        }
    }

    /// Text listing every key and its value; defaults are marked.
    pub fn banner(&self) -> String {
        let width = self.resolved.iter().map(|(k, _, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v, set) in &self.resolved {
            let shown = if v.is_empty() { "(unset)" } else { v.as_str() };
            let origin = if *set { "" } else { "  # default" };
            let _ = writeln!(out, "# {k:<width$} = {shown}{origin}");
        }
        out
    }

    pub fn build_target(&self) -> Result<TargetDensity, CliError> {
        let spec = match self.target {
            TargetChoice::IidGaussian => TargetSpec::IidGaussian { dim: self.dim },
            TargetChoice::WarpedGaussian => TargetSpec::WarpedGaussian {
                dim: self.dim,
                sigma2: self.sigma2,
                b: self.b,
            },
            TargetChoice::Gaussian => TargetSpec::Gaussian {
                mean: DVector::from_vec(self.mean.clone().unwrap_or_else(|| vec![0.0; self.dim])),
                cov: read_matrix(self.cov.as_ref().expect("validated"), self.dim)?,
            },
        };
        make_target(&spec).map_err(CliError::from_build)
    }

    pub fn build_system(&self, target: &TargetDensity) -> Result<HamiltonianSystem, CliError> {
        let metric = match self.metric {
            MetricChoice::Identity => Metric::identity(self.dim),
            MetricChoice::Dense => {
                Metric::dense(read_matrix(self.metric_matrix.as_ref().expect("validated"), self.dim)?)
                    .map_err(CliError::from_build)?
            }
            MetricChoice::SoftAbs => Metric::softabs(target.clone(), self.alpha).map_err(CliError::from_build)?,
        };
        let family = if self.student_t {
            KineticFamily::StudentT { nu: self.nu }
        } else {
            KineticFamily::Gaussian
        };
        let kinetic = KineticEnergy::new(family, metric).map_err(CliError::from_build)?;
        HamiltonianSystem::new(target.clone(), kinetic).map_err(CliError::from_build)
    }

    pub fn integrator(&self) -> IntegratorSpec {
        IntegratorSpec::new(self.scheme, self.step_size, 1)
    }

    pub fn time_dist(&self) -> TimeDist {
        match self.t_fixed {
            Some(t) => TimeDist::Fixed { t },
            None => TimeDist::Uniform { t_max: self.t_max },
        }
    }

    pub fn build_kernel(&self, choice: KernelChoice, system: &HamiltonianSystem) -> Result<Kernel, CliError> {
        let target = system.target().clone();
        let kernel = match choice {
            KernelChoice::Hmc => Kernel::hmc(system.clone(), self.integrator(), self.time_dist()),
            KernelChoice::Rwm => {
                RwmConfig::isotropic(self.dim, self.rwm_sigma).and_then(|rwm| Kernel::rwm(target, rwm))
            }
            KernelChoice::Gibbs => Kernel::gibbs(
                target,
                GibbsConfig {
                    bisection_tol: self.gibbs_tol,
                    bracket_halfwidth: self.gibbs_halfwidth,
                },
            ),
            KernelChoice::Mala => Kernel::mala(target, self.mala_eps),
        };
        kernel.map_err(CliError::from_build)
    }
}
