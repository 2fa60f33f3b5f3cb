//! Subcommand implementations. Each returns the files it wrote.

use std::path::PathBuf;
use std::thread;

use geohmc::prelude::*;
use std::result::Result;

use crate::config::{RunConfig, TargetChoice, TrajectoryKind};
use crate::output::{flag, header, real, Stage};
use crate::CliError;

/// Stream offset for start-point draws, kept apart from chain streams.
const INIT_STREAM: u64 = 1 << 32;

fn start_point(cfg: &RunConfig, target: &TargetDensity, index: u64) -> Position {
    if let Some(v) = &cfg.init {
        return DVector::from_vec(v.clone());
    }
    let mut rng = chain_rng(cfg.seed, INIT_STREAM + index);
    target
        .exact_sample(&mut rng)
        .unwrap_or_else(|| DVector::zeros(target.dim()))
}

pub fn sample(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let target = cfg.build_target()?;
    let system = cfg.build_system(&target)?;
    let kernel = cfg.build_kernel(cfg.kernel, &system)?;
    let starts: Vec<Position> = (0..cfg.chains as u64).map(|k| start_point(cfg, &target, k)).collect();

    let chains: Vec<Chain> = thread::scope(|s| {
        let handles: Vec<_> = starts
            .iter()
            .enumerate()
            .map(|(k, q0)| {
                let kernel = &kernel;
                s.spawn(move || run_chain_indexed(kernel, q0, cfg.iterations, cfg.seed, k as u64))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect::<geohmc::Result<Vec<_>>>()
    })
    .map_err(CliError::from_run)?;

    let n = cfg.dim;
    let mut stage = Stage::new(&cfg.output_dir)?;
    let mut staged = Vec::new();
    for (k, chain) in chains.iter().enumerate() {
        let rows = chain.states.iter().zip(&chain.infos).enumerate().map(|(i, (q, info))| {
            [
                k.to_string(),
                i.to_string(),
                flag(info.accepted).to_string(),
                flag(info.divergent).to_string(),
                real(info.delta_h),
            ]
            .into_iter()
            .chain(q.iter().map(|x| real(*x)))
            .collect::<Vec<_>>()
        });
        let file = stage.write_csv(
            &format!("chain_{k}.csv"),
            &header(&["chain", "iter", "accepted", "divergent", "delta_h"], "q", n),
            rows,
        )?;
        staged.push(file.temp_path().to_path_buf());
    }

    let mut summary = Vec::new();
    for (k, path) in staged.iter().enumerate() {
        let stats = ChainFileStats::read(path, n)?;
        for (i, col) in stats.coords.iter().enumerate() {
            let ac = autocorrelation_series(col).map_err(CliError::from_run)?;
            summary.push(vec![
                k.to_string(),
                format!("q{}", i + 1),
                real(stats.accept_rate),
                stats.divergences.to_string(),
                real(ac.rho1),
                real(ac.ess),
            ]);
        }
    }
    println!(
        "{:<6} {:<6} {:>12} {:>12} {:>10} {:>12}",
        "chain", "coord", "accept_rate", "divergences", "rho1", "ess"
    );
    for row in &summary {
        let num = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
        println!(
            "{:<6} {:<6} {:>12.4} {:>12} {:>10.4} {:>12.1}",
            row[0],
            row[1],
            num(&row[2]),
            row[3],
            num(&row[4]),
            num(&row[5])
        );
    }
    stage.write_csv(
        "summary.csv",
        &["chain", "coordinate", "accept_rate", "divergences", "rho1", "ess"].map(String::from),
        summary,
    )?;
    stage.commit()
}

/// Columns of a chain file, recomputed from the file itself.
struct ChainFileStats {
    accept_rate: f64,
    divergences: usize,
    coords: Vec<Vec<f64>>,
}

impl ChainFileStats {
    fn read(path: &std::path::Path, n: usize) -> Result<Self, CliError> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut coords = vec![Vec::new(); n];
        let (mut rows, mut accepted, mut divergences) = (0usize, 0usize, 0usize);
        let bad = |what: &str| CliError::Io(format!("{}: malformed {what}", path.display()));
        for record in reader.records() {
            let record = record?;
            rows += 1;
            accepted += (record.get(2) == Some("1")) as usize;
            divergences += (record.get(3) == Some("1")) as usize;
            for (i, col) in coords.iter_mut().enumerate() {
                let v: f64 = record
                    .get(5 + i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("coordinate"))?;
                col.push(v);
            }
        }
        Ok(Self {
            accept_rate: accepted as f64 / rows.max(1) as f64,
            divergences,
            coords,
        })
    }
}

struct Check {
    name: String,
    value: f64,
    threshold: f64,
    pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    fn failed(name: impl Into<String>, err: &Error) -> Self {
        eprintln!("check error: {err}");
        Self {
            name: name.into(),
            value: f64::NAN,
            threshold: f64::NAN,
            pass: false,
        }
    }
}

/// Warped states mapped back to their standard normal preimage. Raw warped
/// moments are too heavy-tailed for a z-test at practical chain lengths.
fn whitened(cfg: &RunConfig, chain: &Chain) -> geohmc::Result<(Chain, Option<TargetDensity>)> {
    if cfg.target != TargetChoice::WarpedGaussian {
        return Ok((chain.clone(), None));
    }
    let mut out = chain.clone();
    for q in &mut out.states {
        q[1] += cfg.b * (q[0] * q[0] - cfg.sigma2);
        q[0] /= cfg.sigma2.sqrt();
    }
    let reference = make_target(&TargetSpec::IidGaussian { dim: cfg.dim })?;
    Ok((out, Some(reference)))
}

fn run_check(name: &str, f: impl FnOnce() -> geohmc::Result<Check>) -> Check {
    f().unwrap_or_else(|e| Check::failed(name, &e))
}

pub fn check(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let target = cfg.build_target()?;
    let system = cfg.build_system(&target)?;
    let kernel = cfg.build_kernel(cfg.kernel, &system)?;
    let spec = cfg.integrator();
    spec.validate(&system).map_err(CliError::from_build)?;
    let mut rng = chain_rng(cfg.seed, INIT_STREAM - 1);
    let mut phase_points = Vec::with_capacity(100);
    for _ in 0..100 {
        let q = target
            .exact_sample(&mut rng)
            .unwrap_or_else(|| DVector::zeros(target.dim()));
        let p = system
            .kinetic()
            .sample_momentum(&q, &mut rng)
            .map_err(CliError::from_run)?;
        phase_points.push(PhasePoint::new(q, p).map_err(CliError::from_run)?);
    }
    let reversibility_tol = match cfg.scheme {
        Scheme::GeneralizedLeapfrog { .. } => 1e-8,
        _ => 1e-10,
    };

    let mut checks = vec![
        run_check("target gradient", || {
            let r = gradient_fd_check(&target, cfg.seed)?;
            Ok(Check::at_most("target gradient", r.max_rel_dev, GRADIENT_FD_TOL))
        }),
        run_check("kinetic gradient", || {
            let r = kinetic_fd_check(system.kinetic(), Some(&target), cfg.seed)?;
            Ok(Check::at_most("kinetic gradient", r.max_rel_dev, GRADIENT_FD_TOL))
        }),
        run_check("volume", || {
            let mut worst = 0.0f64;
            for z in &phase_points {
                worst = worst.max((jacobian_det_fd(&system, z, &spec)? - 1.0).abs());
            }
            Ok(Check::at_most("volume", worst, 1e-6))
        }),
    ];
    for steps in [1, 10, 100] {
        let name = format!("reversibility L={steps}");
        checks.push(run_check(&name, || {
            let mut worst = 0.0f64;
            for z in phase_points.iter().take(20) {
                worst = worst.max(relative_reversibility_defect(&system, z, &spec.with_steps(steps))?);
            }
            Ok(Check::at_most(name.clone(), worst, reversibility_tol))
        }));
    }
    if cfg.scheme != Scheme::ExactGaussian {
        checks.push(run_check("energy-error order", || {
            let z = &phase_points[0];
            let mut pts = Vec::new();
            for k in 0..4 {
                let eps = cfg.step_size / f64::from(1 << k);
                let steps = ((1.0 / eps).round() as usize).max(1);
                let traj = integrate(&system, z, &IntegratorSpec::new(cfg.scheme, eps, steps))?;
                pts.push((eps.ln(), traj.max_energy_error().ln()));
            }
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            Ok(Check::at_most(
                "energy-error order |slope-2|",
                (sxy / sxx - 2.0).abs(),
                0.2,
            ))
        }));
    }
    let chain = run_chain(&kernel, &start_point(cfg, &target, 0), cfg.check_iterations, cfg.seed);
    checks.push(match &chain {
        Ok(chain) => run_check("stationarity", || {
            let (chain, reference) = whitened(cfg, chain)?;
            let worst = stationarity_check(&chain, reference.as_ref().unwrap_or(&target), 4.0)?
                .iter()
                .map(|c| c.mean_z().abs().max(c.variance_z().abs()))
                .fold(0.0, f64::max);
            Ok(Check::at_most("stationarity max |z|", worst, 4.0))
        }),
        Err(e) => Check::failed("stationarity", e),
    });
    if let (Ok(chain), true) = (
        &chain,
        system.supports_exact_flow() && !chain.as_ref().map_or(true, |c| c.energies().is_empty()),
    ) {
        checks.push(run_check("energy gamma", || {
            let e = energy_gamma_check(&system, &chain.energies())?;
            Ok(Check {
                name: "energy gamma |mean-n|".into(),
                value: (e.stats.mean - e.shape as f64).abs(),
                threshold: e.mean_tolerance,
                pass: e.pass,
            })
        }));
    }

    let failed = checks.iter().filter(|c| !c.pass).count();
    for c in &checks {
        println!(
            "[{}] {}: {:.3e} (threshold {:.3e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    let mut stage = Stage::new(&cfg.output_dir)?;
    stage.write_csv(
        "check.csv",
        &["check", "value", "threshold", "pass"].map(String::from),
        checks.iter().map(|c| {
            vec![
                c.name.clone(),
                real(c.value),
                real(c.threshold),
                flag(c.pass).to_string(),
            ]
        }),
    )?;
    let files = stage.commit()?;
    if failed > 0 {
        Err(CliError::ChecksFailed(failed))
    } else {
        Ok(files)
    }
}

pub fn bench(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let target = cfg.build_target()?;
    let system = cfg.build_system(&target)?;
    let kernels = cfg
        .bench_kernels
        .iter()
        .map(|k| cfg.build_kernel(*k, &system))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = BenchSpec {
        kernels,
        test_functions: cfg.bench_f.iter().map(|i| TestFunction::coordinate(*i)).collect(),
        start: start_point(cfg, &target, 0),
        samples: cfg.bench_samples,
        evals_per_sample: cfg.bench_budget,
        seed: cfg.seed,
    };
    let rows = kernel_comparison(&spec).map_err(CliError::from_run)?;
    println!(
        "{:<40} {:<4} {:>8} {:>10} {:>12} {:>12}",
        "kernel", "f", "rho1", "ess", "accept_rate", "divergences"
    );
    for r in &rows {
        println!(
            "{:<40} {:<4} {:>8.4} {:>10.1} {:>12.4} {:>12}",
            r.kernel, r.f, r.rho1, r.ess, r.accept_rate, r.divergences
        );
    }
    let mut stage = Stage::new(&cfg.output_dir)?;
    stage.write_csv(
        "comparison.csv",
        &["kernel", "f", "rho1", "ess", "accept_rate", "divergences"].map(String::from),
        rows.iter().map(|r| {
            vec![
                r.kernel.clone(),
                r.f.clone(),
                real(r.rho1),
                real(r.ess),
                real(r.accept_rate),
                r.divergences.to_string(),
            ]
        }),
    )?;
    stage.commit()
}

pub fn scaling(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    if cfg.target != TargetChoice::IidGaussian {
        return Err(CliError::Invalid("scaling runs on target = iid_gaussian".into()));
    }
    let rows = acceptance_scaling(
        &cfg.scaling_dims,
        &[Scheme::Leapfrog, Scheme::Euler],
        cfg.step_size,
        cfg.scaling_t,
        cfg.scaling_transitions,
        cfg.seed,
    )
    .map_err(CliError::from_run)?;
    println!(
        "{:>6} {:<10} {:>12} {:>16}",
        "dim", "integrator", "accept_rate", "mean_accept_prob"
    );
    for r in &rows {
        println!(
            "{:>6} {:<10} {:>12.4} {:>16.4}",
            r.dim, r.integrator, r.accept_rate, r.mean_accept_prob
        );
    }
    let mut stage = Stage::new(&cfg.output_dir)?;
    stage.write_csv(
        "scaling.csv",
        &["dim", "integrator", "accept_rate", "mean_accept_prob"].map(String::from),
        rows.iter().map(|r| {
            vec![
                r.dim.to_string(),
                r.integrator.clone(),
                real(r.accept_rate),
                real(r.mean_accept_prob),
            ]
        }),
    )?;
    stage.commit()
}

pub fn trajectory(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let target = cfg.build_target()?;
    let system = cfg.build_system(&target)?;
    let n = cfg.dim;
    let q0 = match &cfg.trajectory_q0 {
        Some(v) => DVector::from_vec(v.clone()),
        None => start_point(cfg, &target, 0),
    };
    let mut rng = chain_rng(cfg.seed, 0);
    let rows: Vec<Vec<String>> = match cfg.trajectory_kind {
        TrajectoryKind::Hamiltonian => {
            let p0 = match &cfg.trajectory_p0 {
                Some(v) => DVector::from_vec(v.clone()),
                None => system
                    .kinetic()
                    .sample_momentum(&q0, &mut rng)
                    .map_err(CliError::from_run)?,
            };
            let z0 = PhasePoint::new(q0, p0).map_err(CliError::from_run)?;
            let spec = cfg.integrator().with_steps(cfg.trajectory_steps);
            let traj = integrate(&system, &z0, &spec).map_err(CliError::from_build)?;
            if traj.divergent {
                eprintln!("warning: trajectory diverged at step {:?}", traj.divergent_step);
            }
            traj.points
                .iter()
                .zip(&traj.energies)
                .enumerate()
                .map(|(k, (z, h))| {
                    [k.to_string(), real(*h)]
                        .into_iter()
                        .chain(z.q.iter().chain(z.p.iter()).map(|x| real(*x)))
                        .collect()
                })
                .collect()
        }
        TrajectoryKind::Langevin => {
            let path = langevin_path(&target, &q0, cfg.step_size, cfg.trajectory_steps, &mut rng)
                .map_err(CliError::from_run)?;
            if path.divergent {
                eprintln!("warning: langevin path diverged after {} steps", path.states.len() - 1);
            }
            path.states
                .iter()
                .enumerate()
                .map(|(k, q)| {
                    let v = target.potential(q).map_err(CliError::from_run)?;
                    Ok([k.to_string(), real(v)]
                        .into_iter()
                        .chain(q.iter().map(|x| real(*x)))
                        .chain((0..n).map(|_| real(0.0)))
                        .collect())
                })
                .collect::<Result<_, CliError>>()?
        }
    };
    let mut head = header(&["step", "h"], "q", n);
    head.extend((1..=n).map(|i| format!("p{i}")));
    let mut stage = Stage::new(&cfg.output_dir)?;
    stage.write_csv("trajectory.csv", &head, rows)?;
    stage.commit()
}
