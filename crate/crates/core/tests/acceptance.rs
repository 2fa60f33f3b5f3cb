//! Acceptance suite: one pass/fail line per criterion.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use geohmc::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = Result<(bool, String)>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn warped(dim: usize) -> TargetDensity {
    make_target(&TargetSpec::warped_default(dim)).unwrap()
}

fn iid(dim: usize) -> TargetDensity {
    make_target(&TargetSpec::IidGaussian { dim }).unwrap()
}

fn correlated(eta: f64) -> TargetDensity {
    make_target(&TargetSpec::Gaussian {
        mean: DVector::zeros(2),
        cov: DMatrix::from_row_slice(2, 2, &[1.0, eta, eta, 1.0]),
    })
    .unwrap()
}

fn shifted_normal_1d() -> TargetDensity {
    make_target(&TargetSpec::Gaussian {
        mean: DVector::from_element(1, 1.0),
        cov: DMatrix::from_element(1, 1, 1.0),
    })
    .unwrap()
}

fn start_point(target: &TargetDensity, rng: &mut ChaCha8Rng) -> DVector<f64> {
    target
        .exact_sample(rng)
        .unwrap_or_else(|| normal_vec(target.dim(), rng))
}

fn symplectic_volume() -> Outcome {
    let target = warped(2);
    let sys = HamiltonianSystem::euclidean(target.clone());
    let leapfrog = IntegratorSpec::new(Scheme::Leapfrog, 0.1, 1);
    let euler = IntegratorSpec::new(Scheme::Euler, 0.1, 1);
    let mut r = rng(101);
    let (mut worst, mut euler_off) = (0.0f64, 0);
    for _ in 0..100 {
        let q = target.exact_sample(&mut r).unwrap();
        let z = PhasePoint::new(q, normal_vec(2, &mut r))?;
        worst = worst.max((jacobian_det_fd(&sys, &z, &leapfrog)? - 1.0).abs());
        if (jacobian_det_fd(&sys, &z, &euler)? - 1.0).abs() > 1e-3 {
            euler_off += 1;
        }
    }
    Ok((
        worst <= 1e-6 && euler_off >= 50,
        format!("leapfrog max |det-1| = {worst:.2e}; euler |det-1| > 1e-3 at {euler_off}/100"),
    ))
}

fn builtin_targets() -> Vec<TargetDensity> {
    let gauss3 = make_target(&TargetSpec::Gaussian {
        mean: DVector::from_vec(vec![1.0, -2.0, 0.5]),
        cov: DMatrix::from_row_slice(3, 3, &[2.0, 0.6, 0.1, 0.6, 1.0, -0.3, 0.1, -0.3, 0.5]),
    })
    .unwrap();
    vec![
        iid(1),
        iid(5),
        gauss3.clone(),
        warped(2),
        warped(5),
        apply_chart(&iid(2), &ChartTransform::sinh(2)).unwrap(),
        apply_chart(
            &gauss3,
            &ChartTransform::scaling(DVector::from_vec(vec![2.0, 0.5, 3.0])).unwrap(),
        )
        .unwrap(),
    ]
}

fn reversibility() -> Outcome {
    let mut r = rng(202);
    let mut worst = 0.0f64;
    for target in builtin_targets() {
        let sys = HamiltonianSystem::euclidean(target.clone());
        for steps in [1, 10, 100] {
            let spec = IntegratorSpec::new(Scheme::Leapfrog, 0.1, steps);
            for _ in 0..20 {
                let q = start_point(&target, &mut r);
                let z = PhasePoint::new(q, normal_vec(target.dim(), &mut r))?;
                worst = worst.max(relative_reversibility_defect(&sys, &z, &spec)?);
            }
        }
    }
    Ok((
        worst <= 1e-10,
        format!("max relative defect = {worst:.2e} (tolerance 1e-10)"),
    ))
}

fn energy_error_order() -> Outcome {
    let sys = HamiltonianSystem::euclidean(iid(1));
    let starts = [(1.0, 0.5), (-0.3, 1.2), (2.0, -0.7)];
    let steps = [0.2, 0.1, 0.05, 0.025];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for eps in steps {
        let spec = IntegratorSpec::new(Scheme::Leapfrog, eps, (1.0 / eps).round() as usize);
        let mut worst = 0.0f64;
        for (q, p) in starts {
            let z = PhasePoint::new(DVector::from_element(1, q), DVector::from_element(1, p))?;
            worst = worst.max(integrate(&sys, &z, &spec)?.max_energy_error());
        }
        xs.push(eps.ln());
        ys.push(worst.ln());
    }
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(((slope - 2.0).abs() <= 0.2, format!("log-log slope = {slope:.4}")))
}

fn exact_flow_hmc() -> Outcome {
    let n = 10;
    let target = iid(n);
    let sys = HamiltonianSystem::euclidean(target.clone());
    let spec = IntegratorSpec::new(Scheme::ExactGaussian, PI / 20.0, 1);
    let kernel = Kernel::hmc(sys.clone(), spec, TimeDist::Fixed { t: PI / 2.0 })?;
    let q0 = target.exact_sample(&mut rng(303)).unwrap();
    let transitions = 100_000;
    let chain = run_chain(&kernel, &q0, transitions, 304)?;
    let accept = chain.acceptance_rate();
    let bound = 4.0 / (transitions as f64).sqrt();
    let (mut max_rho, mut max_var_dev) = (0.0f64, 0.0f64);
    for i in 0..n {
        let xs = chain.coordinate(i);
        max_rho = max_rho.max(autocorrelation_series(&xs)?.rho1.abs());
        let (_, var) = mean_and_variance(&xs);
        max_var_dev = max_var_dev.max((var - 1.0).abs());
    }
    let energy = energy_gamma_check(&sys, &chain.energies())?;
    let mean_ok = (energy.stats.mean - n as f64).abs() <= 0.04 * 4.0;
    let pass = accept == 1.0 && max_rho <= bound && max_var_dev <= 0.05 && mean_ok && energy.pass;
    Ok((
        pass,
        format!(
            "accept = {accept}; max |rho1| = {max_rho:.4} (bound {bound:.4}); max |var-1| = {max_var_dev:.4}; energy mean = {:.4}, var = {:.3}",
            energy.stats.mean, energy.stats.variance
        ),
    ))
}

fn stationarity() -> Outcome {
    let target = iid(1);
    let sys = HamiltonianSystem::euclidean(target.clone());
    let kernels = [
        Kernel::hmc(
            sys,
            IntegratorSpec::new(Scheme::Leapfrog, 0.2, 1),
            TimeDist::Uniform { t_max: 3.0 },
        )?,
        Kernel::rwm(target.clone(), RwmConfig::isotropic(1, 2.4)?)?,
        Kernel::gibbs(target.clone(), GibbsConfig::default())?,
        Kernel::mala(target.clone(), 1.0)?,
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for (k, kernel) in kernels.iter().enumerate() {
        let q0 = target.exact_sample(&mut rng(400 + k as u64)).unwrap();
        let chain = run_chain(kernel, &q0, 100_000, 410 + k as u64)?;
        let check = &stationarity_check(&chain, &target, 4.0)?[0];
        pass &= check.pass;
        notes.push(format!(
            "{} z(mean) = {:+.2}, z(var) = {:+.2}",
            kernel.config().name(),
            check.mean_z(),
            check.variance_z()
        ));
    }
    Ok((pass, notes.join("; ")))
}

fn acceptance_calibration() -> Outcome {
    let dim = 20;
    let target = iid(dim);
    let kernel = Kernel::hmc(
        HamiltonianSystem::euclidean(target.clone()),
        IntegratorSpec::new(Scheme::Leapfrog, 0.6, 1),
        TimeDist::Fixed { t: 1.8 },
    )?;
    let q0 = target.exact_sample(&mut rng(500)).unwrap();
    let chain = run_chain(&kernel, &q0, 100_000, 501)?;
    let mut pairs: Vec<(f64, bool)> = chain
        .infos
        .iter()
        .filter(|i| !i.divergent)
        .map(|i| (i.delta_h, i.accepted))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let bins = 20;
    let per_bin = pairs.len() / bins;
    let mut worst = 0.0f64;
    let mut pass = true;
    for b in 0..bins {
        let end = if b + 1 == bins { pairs.len() } else { (b + 1) * per_bin };
        let slice = &pairs[b * per_bin..end];
        let observed = slice.iter().filter(|(_, a)| *a).count() as f64;
        let probs: Vec<f64> = slice.iter().map(|(d, _)| (-d).exp().min(1.0)).collect();
        let expected: f64 = probs.iter().sum();
        let sd = probs.iter().map(|p| p * (1.0 - p)).sum::<f64>().sqrt();
        if sd > 0.0 {
            worst = worst.max((observed - expected).abs() / sd);
        }
        pass &= (observed - expected).abs() <= 4.0 * sd + 1e-9;
    }
    Ok((
        pass,
        format!(
            "{bins} quantile bins over {} transitions; accept rate {:.3}; worst deviation {worst:.2} sigma",
            pairs.len(),
            chain.acceptance_rate()
        ),
    ))
}

fn scaling() -> Outcome {
    let rows = acceptance_scaling(&[1, 10, 100], &[Scheme::Leapfrog, Scheme::Euler], 0.1, 1.0, 1000, 600)?;
    let rate = |dim: usize, name: &str| {
        rows.iter()
            .find(|r| r.dim == dim && r.integrator == name)
            .map(|r| r.accept_rate)
            .unwrap()
    };
    let leap = Scheme::Leapfrog.name();
    let euler = Scheme::Euler.name();
    let leap_ok = [1, 10, 100].iter().all(|&d| rate(d, leap) >= 0.95);
    let euler_ok = rate(100, euler) < 0.5 * rate(1, euler);
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("{}@{}={:.3}", r.integrator, r.dim, r.accept_rate))
        .collect();
    Ok((leap_ok && euler_ok, table.join(" ")))
}

fn pilot_rate(kernel: &Kernel, q0: &DVector<f64>, n: usize, seed: u64) -> Result<f64> {
    Ok(run_chain(kernel, q0, n, seed)?.acceptance_rate())
}

fn kernel_ordering() -> Outcome {
    let sigma2 = 100.0;
    let target = warped(2);
    let q_pilot = target.exact_sample(&mut rng(700)).unwrap();
    let t_max = 2.0 * PI * f64::sqrt(sigma2);
    let hmc_with = |eps: f64| {
        Kernel::hmc(
            HamiltonianSystem::euclidean(target.clone()),
            IntegratorSpec::new(Scheme::Leapfrog, eps, 1),
            TimeDist::Uniform { t_max },
        )
    };
    let rwm_with = |sigma: f64| Kernel::rwm(target.clone(), RwmConfig::isotropic(2, sigma)?);

    let mut eps = 0.0;
    for e in [
        0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.8,
    ] {
        if pilot_rate(&hmc_with(e)?, &q_pilot, 2000, 701)? >= 0.8 {
            eps = e;
        }
    }
    let mut sigma = 0.0;
    let mut best_gap = f64::INFINITY;
    for s in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0] {
        let gap = (pilot_rate(&rwm_with(s)?, &q_pilot, 20_000, 702)? - 0.234).abs();
        if gap < best_gap {
            best_gap = gap;
            sigma = s;
        }
    }
    if eps == 0.0 {
        return Ok((false, "no HMC step size reached 0.8 pilot acceptance".into()));
    }

    let mut draws = rng(703);
    let mut pass = true;
    let mut notes = Vec::new();
    for seed in 0..5u64 {
        let bench = BenchSpec {
            kernels: vec![hmc_with(eps)?, rwm_with(sigma)?],
            test_functions: vec![TestFunction::coordinate(1)],
            start: target.exact_sample(&mut draws).unwrap(),
            samples: 5000,
            evals_per_sample: 200.0,
            seed: 710 + seed,
        };
        let rows = kernel_comparison(&bench)?;
        pass &= rows[0].rho1 < rows[1].rho1;
        notes.push(format!("{:.3}<{:.3}", rows[0].rho1, rows[1].rho1));
    }
    Ok((
        pass,
        format!(
            "hmc eps={eps}, t~U(0,{t_max:.1}); rwm sigma={sigma}; rho1(q2) hmc<rwm per seed: {}",
            notes.join(" ")
        ),
    ))
}

fn gibbs_inversion() -> Outcome {
    let cfg = GibbsConfig::default();
    let mut worst = 0.0f64;
    for eta in [0.1, 0.5, 0.9] {
        let target = correlated(eta);
        let cond_sd = (1.0 - eta * eta).sqrt();
        for other in [-2.0, 0.0, 1.5] {
            for i in 0..2 {
                let mut q = DVector::from_element(2, other);
                q[i] = 0.3;
                let law = Normal::new(eta * other, cond_sd).unwrap();
                for level in [0.1, 0.5, 0.9] {
                    let got = conditional_cdf_invert(&target, &q, i, level, &cfg)?;
                    worst = worst.max((got - law.inverse_cdf(level)).abs());
                }
            }
        }
    }
    Ok((worst <= 1e-6, format!("max quantile error = {worst:.2e}")))
}

struct Moments {
    mean: MeanEstimate,
    second: MeanEstimate,
}

fn chart_moments(charted: &TargetDensity, chart: &ChartTransform, eps: f64, t_max: f64, seed: u64) -> Result<Moments> {
    let kernel = Kernel::hmc(
        HamiltonianSystem::euclidean(charted.clone()),
        IntegratorSpec::new(Scheme::Leapfrog, eps, 1),
        TimeDist::Uniform { t_max },
    )?;
    let q0 = chart.inverse_map(&DVector::from_element(1, 1.0));
    let chain = run_chain(&kernel, &q0, 100_000, seed)?;
    let q: Vec<f64> = chain.states.iter().map(|s| chart.forward(s)[0]).collect();
    let q2: Vec<f64> = q.iter().map(|x| x * x).collect();
    Ok(Moments {
        mean: mean_estimate(&q)?,
        second: mean_estimate(&q2)?,
    })
}

fn agree(a: &MeanEstimate, b: &MeanEstimate) -> (bool, f64) {
    let z = (a.mean - b.mean).abs() / (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    (z <= 4.0, z)
}

fn chart_invariance() -> Outcome {
    let base = shifted_normal_1d();
    let mut r = rng(800);
    let q: Vec<f64> = (0..100_000).map(|_| base.exact_sample(&mut r).unwrap()[0]).collect();
    let q2: Vec<f64> = q.iter().map(|x| x * x).collect();
    let direct = Moments {
        mean: mean_estimate(&q)?,
        second: mean_estimate(&q2)?,
    };
    let compare = |m: &Moments| {
        let (ok1, z1) = agree(&direct.mean, &m.mean);
        let (ok2, z2) = agree(&direct.second, &m.second);
        (ok1 && ok2, z1, z2)
    };

    let scaling = ChartTransform::scaling(DVector::from_element(1, 3.0))?;
    let scaled = chart_moments(&apply_chart(&base, &scaling)?, &scaling, 0.1, 1.5, 801)?;
    let sinh = ChartTransform::sinh(1);
    let warped_chart = chart_moments(&apply_chart(&base, &sinh)?, &sinh, 0.1, 3.0, 802)?;
    let uncorrected = chart_moments(&apply_chart_uncorrected(&base, &sinh)?, &sinh, 0.1, 3.0, 803)?;

    let (s_ok, s1, s2) = compare(&scaled);
    let (w_ok, w1, w2) = compare(&warped_chart);
    let (u_ok, u1, u2) = compare(&uncorrected);
    Ok((
        s_ok && w_ok && !u_ok,
        format!(
            "z(q), z(q^2): scaling {s1:.2}, {s2:.2}; sinh {w1:.2}, {w2:.2}; sinh uncorrected {u1:.1}, {u2:.1} (must fail)"
        ),
    ))
}

fn student_t_fibers() -> Outcome {
    let n = 3;
    let kinetic = KineticEnergy::new(KineticFamily::StudentT { nu: 5.0 }, Metric::identity(n))?;
    let q = DVector::zeros(n);
    let mut r = rng(900);
    let draws: Vec<DVector<f64>> = (0..100_000)
        .map(|_| kinetic.sample_momentum(&q, &mut r))
        .collect::<Result<_>>()?;
    let target = 5.0 / 3.0;
    let mut worst = 0.0f64;
    for i in 0..n {
        let xs: Vec<f64> = draws.iter().map(|p| p[i]).collect();
        let (_, var) = mean_and_variance(&xs);
        worst = worst.max((var / target - 1.0).abs());
    }
    Ok((worst <= 0.1, format!("max relative variance deviation = {worst:.4}")))
}

fn gradient_hygiene() -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut seed = 1000;
    for target in builtin_targets() {
        seed += 1;
        let report = gradient_fd_check(&target, seed)?;
        worst = worst.max(report.max_rel_dev);
        if !report.pass {
            failures.push(report.label);
        }
    }
    let w2 = warped(2);
    let spd = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let metrics = vec![
        (Metric::identity(2), None),
        (Metric::dense(spd)?, None),
        (Metric::diagonal_fn(DiagonalMetric::one_plus_square(2)), None),
        (Metric::softabs(w2.clone(), DEFAULT_SOFTABS_ALPHA)?, Some(&w2)),
    ];
    for family in [KineticFamily::Gaussian, KineticFamily::StudentT { nu: 5.0 }] {
        for (metric, on) in &metrics {
            seed += 1;
            let kinetic = KineticEnergy::new(family, metric.clone())?;
            let report = kinetic_fd_check(&kinetic, *on, seed)?;
            worst = worst.max(report.max_rel_dev);
            if !report.pass {
                failures.push(report.label);
            }
        }
    }
    Ok((
        failures.is_empty(),
        format!("worst relative deviation = {worst:.2e}; failing: {failures:?}"),
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("symplectic volume", symplectic_volume),
        ("reversibility", reversibility),
        ("energy-error order", energy_error_order),
        ("exact-flow HMC", exact_flow_hmc),
        ("stationarity of exact kernels", stationarity),
        ("acceptance-rule calibration", acceptance_calibration),
        ("dimension scaling", scaling),
        ("kernel ordering", kernel_ordering),
        ("Gibbs inversion", gibbs_inversion),
        ("chart invariance", chart_invariance),
        ("Student-t fiber sampling", student_t_fibers),
        ("gradient hygiene", gradient_hygiene),
    ];
    let results: Vec<(Outcome, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|(_, run)| {
                s.spawn(move || {
                    let start = Instant::now();
                    let out = run();
                    (out, start.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("criterion panicked"))
            .collect()
    });
    let mut failed = 0;
    for (k, ((name, _), (outcome, secs))) in criteria.iter().zip(results).enumerate() {
        let (pass, detail) = match outcome {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !pass as usize;
        println!(
            "[{}] criterion {:>2} {name}: {detail} ({secs:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            k + 1
        );
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
