//! Stochastic Landau-Lifshitz-Gilbert dynamics of the multiplier soft layer.
//!
//! The macrospin obeys
//! `dm/dt = −γ/(1+α²)·[m × H + α·m × (m × H)]` with `H = H_eff + H_th`,
//! integrated with the stochastic Heun scheme (one thermal draw per step
//! shared by predictor and corrector, Stratonovich-consistent). `m` is
//! renormalized after every step.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{ParamError, SllgError};
use crate::magnet::{thermal_energy, MagnetParams, GYROMAGNETIC_RATIO, MU0};
use crate::rng;

/// Unit magnetization of the soft layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetizationState(Vector3<f64>);

impl MagnetizationState {
    /// Normalizes `v`; panics on a zero vector.
    pub fn new(v: Vector3<f64>) -> Self {
        let n = v.norm();
        assert!(n > 0.0 && n.is_finite(), "magnetization must be non-zero and finite");
        Self(v / n)
    }

    pub fn from_angles(theta: f64, phi: f64) -> Self {
        Self(Vector3::new(
            theta.sin() * phi.cos(),
            theta.sin() * phi.sin(),
            theta.cos(),
        ))
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn theta(&self) -> f64 {
        self.0.z.clamp(-1.0, 1.0).acos()
    }

    /// Azimuth in `[0, 2π)`.
    pub fn phi(&self) -> f64 {
        let p = self.0.y.atan2(self.0.x);
        if p < 0.0 {
            p + 2.0 * PI
        } else {
            p
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Integrator step (s).
    pub dt: f64,
    /// Simulated horizon after the gate turns on (s).
    pub t_max: f64,
    /// Temperature of the thermal field (K).
    pub temperature: f64,
    pub trajectories: usize,
    pub seed: u64,
    /// Final window over which `θ` must be steady (s).
    pub steady_window: f64,
    /// Maximum standard deviation of `θ` within the window (rad).
    pub steady_tol: f64,
    /// Spacing of recorded samples (s); rounded to a whole number of steps.
    pub sample_interval: f64,
    /// Deterministic in-plane tilt away from `θ = π` at `t = 0` (rad).
    pub initial_tilt: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-12,
            t_max: 20e-9,
            temperature: 300.0,
            trajectories: 100,
            seed: 0,
            steady_window: 2e-9,
            steady_tol: 1f64.to_radians(),
            sample_interval: 10e-12,
            initial_tilt: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ParamError::invalid("sllg.dt", "must be positive"));
        }
        if !(self.steady_window > 0.0 && self.t_max >= self.steady_window) {
            return Err(ParamError::invalid("sllg.t_max", "need t_max >= steady_window > 0"));
        }
        if self.trajectories == 0 {
            return Err(ParamError::invalid("sllg.trajectories", "must be at least 1"));
        }
        if !(self.temperature >= 0.0) {
            return Err(ParamError::invalid("sllg.temperature", "must be >= 0"));
        }
        if !(self.steady_tol > 0.0) {
            return Err(ParamError::invalid("sllg.steady_tol", "must be positive"));
        }
        if !(self.sample_interval >= self.dt) {
            return Err(ParamError::invalid("sllg.sample_interval", "must be >= dt"));
        }
        Ok(())
    }

    fn steps(&self) -> u64 {
        (self.t_max / self.dt).round() as u64
    }

    fn sample_every(&self) -> u64 {
        ((self.sample_interval / self.dt).round() as u64).max(1)
    }
}

/// Linear coefficients of the deterministic effective field at fixed gate
/// voltage: `H = (kx·mx, ky·my, kz·mz + hz)`.
#[derive(Debug, Clone, Copy)]
struct FieldCoefficients {
    kx: f64,
    ky: f64,
    kz: f64,
    hz: f64,
}

impl FieldCoefficients {
    fn new(params: &MagnetParams, v_gate: f64) -> Self {
        let ms = params.material.saturation_magnetization;
        let d = &params.demag;
        let stress = 3.0 * params.material.magnetostriction * params.stress(v_gate) / (MU0 * ms);
        Self {
            kx: -ms * d.nxx,
            ky: -ms * d.nyy,
            kz: -ms * d.nzz + stress,
            hz: -params.dipole.magnitude,
        }
    }

    #[inline]
    fn field(&self, m: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(self.kx * m.x, self.ky * m.y, self.kz * m.z + self.hz)
    }
}

/// Effective field `−(1/μ0·Ms·Ω)·∂E/∂m` plus the supplied thermal field (A/m).
pub fn effective_field(
    m: &MagnetizationState,
    v_gate: f64,
    params: &MagnetParams,
    thermal: &Vector3<f64>,
) -> Vector3<f64> {
    FieldCoefficients::new(params, v_gate).field(m.vector()) + thermal
}

/// Per-component standard deviation of the Brown thermal field (A/m).
pub fn thermal_sigma(dt: f64, temperature: f64, params: &MagnetParams) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    let ms = params.material.saturation_magnetization;
    let var = 2.0 * params.material.damping * thermal_energy(temperature)
        / (GYROMAGNETIC_RATIO * MU0 * ms * params.volume() * dt);
    var.sqrt()
}

pub fn thermal_field_sample<R: Rng + ?Sized>(
    dt: f64,
    temperature: f64,
    params: &MagnetParams,
    rng: &mut R,
) -> Vector3<f64> {
    let sigma = thermal_sigma(dt, temperature, params);
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    Vector3::new(
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    /// Time since the gate turned on (s).
    pub t: f64,
    pub theta: f64,
    pub phi: f64,
    /// Magnetization vector after the step renormalization.
    pub m: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    /// Samples within the final `window` seconds.
    pub fn tail(&self, window: f64) -> &[TrajectorySample] {
        let Some(end) = self.samples.last().map(|s| s.t) else {
            return &[];
        };
        let cut = end - window * (1.0 + 1e-9);
        let start = self.samples.partition_point(|s| s.t < cut);
        &self.samples[start..]
    }

    /// CSV with columns `t_ns,theta_deg,phi_deg`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t_ns,theta_deg,phi_deg")?;
        for s in &self.samples {
            writeln!(
                w,
                "{:.6},{:.6},{:.6}",
                s.t * 1e9,
                s.theta.to_degrees(),
                s.phi.to_degrees()
            )?;
        }
        Ok(())
    }
}

/// Rest state before the gate turns on: `θ = π` plus the configured tilt
/// toward `+y` and a Gaussian perturbation drawn from the thermal
/// equilibrium of the zero-stress well.
pub fn initial_state<R: Rng + ?Sized>(
    params: &MagnetParams,
    cfg: &SolverConfig,
    rng: &mut R,
) -> MagnetizationState {
    let ms = params.material.saturation_magnetization;
    let hd = params.dipole.magnitude;
    let d = &params.demag;
    let kt = thermal_energy(cfg.temperature);
    let moment = MU0 * ms * params.volume();
    let spread = |stiffness: f64| {
        if kt > 0.0 && stiffness > 0.0 {
            (kt / (moment * stiffness)).sqrt()
        } else {
            0.0
        }
    };
    let sx = spread(ms * (d.nxx - d.nzz) + hd);
    let sy = spread(ms * (d.nyy - d.nzz) + hd);
    let dx = if sx > 0.0 { sx * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
    let dy = if sy > 0.0 { sy * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
    MagnetizationState::new(Vector3::new(dx, dy + cfg.initial_tilt, -1.0))
}

/// Integrates one trajectory with the gate switched on at `t = 0`.
pub fn integrate<R: Rng + ?Sized>(
    initial: MagnetizationState,
    v_gate: f64,
    params: &MagnetParams,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<Trajectory, SllgError> {
    cfg.validate()?;
    let coeffs = FieldCoefficients::new(params, v_gate);
    let alpha = params.material.damping;
    let pref = -GYROMAGNETIC_RATIO / (1.0 + alpha * alpha);
    let sigma = thermal_sigma(cfg.dt, cfg.temperature, params);
    let dt = cfg.dt;
    let steps = cfg.steps();
    let every = cfg.sample_every();

    let rhs = |m: &Vector3<f64>, h: &Vector3<f64>| {
        let mxh = m.cross(h);
        (mxh + alpha * m.cross(&mxh)) * pref
    };

    let mut m = *initial.vector();
    let mut traj = Trajectory {
        samples: Vec::with_capacity((steps / every) as usize + 1),
    };
    let record = |m: &Vector3<f64>, t: f64, traj: &mut Trajectory| {
        let s = MagnetizationState(*m);
        traj.samples.push(TrajectorySample {
            t,
            theta: s.theta(),
            phi: s.phi(),
            m: *m,
        });
    };
    record(&m, 0.0, &mut traj);

    for step in 1..=steps {
        let h_th = if sigma > 0.0 {
            Vector3::new(
                sigma * rng.sample::<f64, _>(StandardNormal),
                sigma * rng.sample::<f64, _>(StandardNormal),
                sigma * rng.sample::<f64, _>(StandardNormal),
            )
        } else {
            Vector3::zeros()
        };
        let k1 = rhs(&m, &(coeffs.field(&m) + h_th));
        let mut pred = m + k1 * dt;
        pred /= pred.norm();
        let k2 = rhs(&pred, &(coeffs.field(&pred) + h_th));
        let next = m + (k1 + k2) * (0.5 * dt);
        let norm = next.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(SllgError::NonFinite {
                step,
                time: step as f64 * dt,
            });
        }
        m = next / norm;
        if step % every == 0 {
            record(&m, step as f64 * dt, &mut traj);
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryOutcome {
    /// Mean `θ` over the final steady window (rad).
    pub theta_ss: f64,
    /// Standard deviation of `θ` within that window (rad).
    pub window_std: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// Ensemble mean of the per-trajectory steady angles (rad).
    pub mean: f64,
    /// Ensemble standard deviation (rad); zero for a single trajectory.
    pub std: f64,
    pub outcomes: Vec<TrajectoryOutcome>,
}

impl SteadyState {
    pub fn non_converged(&self) -> Vec<usize> {
        self.outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.converged)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn require_converged(&self) -> Result<&Self, SllgError> {
        let failed = self.non_converged();
        match failed.first() {
            None => Ok(self),
            Some(&first) => Err(SllgError::NotConverged {
                failed: failed.len(),
                total: self.outcomes.len(),
                first,
            }),
        }
    }
}

fn outcome(traj: &Trajectory, cfg: &SolverConfig) -> TrajectoryOutcome {
    let tail = traj.tail(cfg.steady_window);
    let n = tail.len() as f64;
    let mean = tail.iter().map(|s| s.theta).sum::<f64>() / n;
    let var = tail.iter().map(|s| (s.theta - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    TrajectoryOutcome {
        theta_ss: mean,
        window_std: std,
        converged: std < cfg.steady_tol,
    }
}

/// Ensemble steady-state angle at one gate voltage.
///
/// Trajectory `k` draws from stream `(cfg.seed, domain, k)`; results are
/// reduced in index order, so the answer is independent of thread count.
pub fn steady_state_ensemble(
    v_gate: f64,
    params: &MagnetParams,
    cfg: &SolverConfig,
    domain: u64,
) -> Result<SteadyState, SllgError> {
    cfg.validate()?;
    let outcomes = (0..cfg.trajectories)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(cfg.seed, domain, k as u64);
            let init = initial_state(params, cfg, &mut r);
            integrate(init, v_gate, params, cfg, &mut r).map(|t| outcome(&t, cfg))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = outcomes.len() as f64;
    let mean = outcomes.iter().map(|o| o.theta_ss).sum::<f64>() / n;
    let std = if outcomes.len() > 1 {
        (outcomes.iter().map(|o| (o.theta_ss - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SteadyState {
        mean,
        std,
        outcomes,
    })
}

pub fn steady_state_angle(
    v_gate: f64,
    params: &MagnetParams,
    cfg: &SolverConfig,
) -> Result<SteadyState, SllgError> {
    steady_state_ensemble(v_gate, params, cfg, 0)
}
