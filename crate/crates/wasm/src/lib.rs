//! Browser bindings for the 2-D warped Gaussian demo page.
//!
//! The plain functions return `Result<_, String>` and are usable natively;
//! the `#[wasm_bindgen]` wrappers convert errors into JS exceptions.

use geohmc::prelude::*;
use std::result::Result;
use wasm_bindgen::prelude::*;

const START_STREAM: u64 = 1 << 32;

/// Integration horizon for the demo's HMC kernel, `t ~ U(0, T_MAX)`.
pub const T_MAX: f64 = 6.3;

fn warped() -> Result<TargetDensity, String> {
    make_target(&TargetSpec::warped_default(2)).map_err(|e| e.to_string())
}

fn scheme(name: &str) -> Result<Scheme, String> {
    match name {
        "leapfrog" => Ok(Scheme::Leapfrog),
        "euler" => Ok(Scheme::Euler),
        other => Err(format!("unknown integrator {other:?}, expected leapfrog or euler")),
    }
}

/// One trajectory on the warped Gaussian, flattened as `[q1, q2, H]` per step.
pub fn trajectory_points(
    integrator: &str,
    q: [f64; 2],
    p: [f64; 2],
    eps: f64,
    steps: usize,
) -> Result<Vec<f64>, String> {
    let system = HamiltonianSystem::euclidean(warped()?);
    let z0 = PhasePoint::new(DVector::from_row_slice(&q), DVector::from_row_slice(&p)).map_err(|e| e.to_string())?;
    let spec = IntegratorSpec::new(scheme(integrator)?, eps, steps);
    spec.validate(&system).map_err(|e| e.to_string())?;
    let traj = integrate(&system, &z0, &spec).map_err(|e| e.to_string())?;
    Ok(traj
        .points
        .iter()
        .zip(&traj.energies)
        .flat_map(|(z, h)| [z.q[0], z.q[1], *h])
        .collect())
}

/// Draws from one chain on the warped Gaussian.
#[wasm_bindgen]
pub struct Samples {
    points: Vec<f64>,
    accept_rate: f64,
    divergences: u32,
}

#[wasm_bindgen]
impl Samples {
    /// States flattened as `[q1, q2]` pairs.
    #[wasm_bindgen(getter)]
    pub fn points(&self) -> Vec<f64> {
        self.points.clone()
    }

    #[wasm_bindgen(getter, js_name = acceptRate)]
    pub fn accept_rate(&self) -> f64 {
        self.accept_rate
    }

    #[wasm_bindgen(getter)]
    pub fn divergences(&self) -> u32 {
        self.divergences
    }
}

/// Runs `n` transitions of `kernel` (`hmc`, `rwm` or `mala`) from an exact
/// draw. `step` is the leapfrog step, the RWM scale or the MALA step.
pub fn sample_points(kernel: &str, step: f64, n: usize, seed: u64) -> Result<Samples, String> {
    let target = warped()?;
    let kernel = match kernel {
        "hmc" => Kernel::hmc(
            HamiltonianSystem::euclidean(target.clone()),
            IntegratorSpec::new(Scheme::Leapfrog, step, 1),
            TimeDist::Uniform { t_max: T_MAX },
        ),
        "rwm" => RwmConfig::isotropic(2, step).and_then(|c| Kernel::rwm(target.clone(), c)),
        "mala" => Kernel::mala(target.clone(), step),
        other => return Err(format!("unknown kernel {other:?}, expected hmc, rwm or mala")),
    }
    .map_err(|e| e.to_string())?;
    let q0 = target
        .exact_sample(&mut chain_rng(seed, START_STREAM))
        .ok_or("warped target has no exact sampler")?;
    let chain = run_chain(&kernel, &q0, n, seed).map_err(|e| e.to_string())?;
    Ok(Samples {
        points: chain.states.iter().flat_map(|q| [q[0], q[1]]).collect(),
        accept_rate: chain.acceptance_rate(),
        divergences: chain.divergences() as u32,
    })
}

/// Leapfrog and Euler HMC acceptance on iid Gaussians, flattened as
/// `[dim, leapfrog rate, euler rate]` rows.
pub fn scaling_rates(dims: &[usize], eps: f64, t: f64, transitions: usize, seed: u64) -> Result<Vec<f64>, String> {
    let rows = acceptance_scaling(dims, &[Scheme::Leapfrog, Scheme::Euler], eps, t, transitions, seed)
        .map_err(|e| e.to_string())?;
    Ok(rows
        .chunks(2)
        .flat_map(|pair| [pair[0].dim as f64, pair[0].accept_rate, pair[1].accept_rate])
        .collect())
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
pub fn trajectory(
    integrator: &str,
    q1: f64,
    q2: f64,
    p1: f64,
    p2: f64,
    eps: f64,
    steps: usize,
) -> Result<Vec<f64>, JsError> {
    trajectory_points(integrator, [q1, q2], [p1, p2], eps, steps).map_err(js)
}

#[wasm_bindgen]
pub fn sample(kernel: &str, step: f64, n: usize, seed: u32) -> Result<Samples, JsError> {
    sample_points(kernel, step, n, u64::from(seed)).map_err(js)
}

#[wasm_bindgen]
pub fn scaling(dims: Vec<u32>, eps: f64, t: f64, transitions: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    let dims: Vec<usize> = dims.into_iter().map(|d| d as usize).collect();
    scaling_rates(&dims, eps, t, transitions, u64::from(seed)).map_err(js)
}
