//! Straintronic MTJ multiplier: conductance model, transfer characteristic,
//! linear-region extraction and the four-terminal product circuit.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{FitError, MultiplierError, ParamError, SllgError};
use crate::magnet::{theta_ss_analytic, LandscapeConstants, MagnetParams};
use crate::sllg::{steady_state_ensemble, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtjResistancePair {
    /// Parallel-state resistance (Ω).
    pub r_p: f64,
    /// Antiparallel-state resistance (Ω).
    pub r_ap: f64,
}

impl MtjResistancePair {
    pub fn new(r_p: f64, r_ap: f64) -> Result<Self, ParamError> {
        if !(r_p > 0.0 && r_ap > r_p && r_ap.is_finite()) {
            return Err(ParamError::invalid("mtj", "need R_AP > R_P > 0"));
        }
        Ok(Self { r_p, r_ap })
    }

    pub fn g_p(&self) -> f64 {
        1.0 / self.r_p
    }

    pub fn g_ap(&self) -> f64 {
        1.0 / self.r_ap
    }
}

/// `R = R_P + (R_AP − R_P)/2·(1 − cos θ)`.
pub fn resistance_from_angle(theta: f64, pair: &MtjResistancePair) -> f64 {
    pair.r_p + 0.5 * (pair.r_ap - pair.r_p) * (1.0 - theta.cos())
}

/// Where the steady angles of a transfer curve come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TransferSource {
    Analytic,
    Sllg(SolverConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Sllg,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Analytic => "analytic",
            Provenance::Sllg => "sllg",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferSample {
    /// Gate voltage (V).
    pub v_gate: f64,
    /// s-MTJ conductance (S).
    pub conductance: f64,
    /// Steady angle (rad); the ensemble mean for sLLG curves.
    pub theta: f64,
    /// Ensemble standard deviation of the steady angle (rad).
    pub theta_std: f64,
    /// Standard error of the mean conductance (S), propagated from the
    /// angle spread.
    pub conductance_sem: f64,
    /// Trajectories whose final window fluctuated more than the tolerance.
    pub unsettled: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferCharacteristic {
    provenance: Provenance,
    /// Ensemble size behind each sample (1 for analytic curves).
    trajectories: usize,
    samples: Vec<TransferSample>,
}

impl TransferCharacteristic {
    pub fn new(
        provenance: Provenance,
        trajectories: usize,
        samples: Vec<TransferSample>,
    ) -> Result<Self, ParamError> {
        if samples.windows(2).any(|w| !(w[1].v_gate > w[0].v_gate)) {
            return Err(ParamError::invalid("v_gate", "grid must be strictly increasing"));
        }
        if trajectories == 0 {
            return Err(ParamError::invalid("trajectories", "must be at least 1"));
        }
        Ok(Self {
            provenance,
            trajectories,
            samples,
        })
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn trajectories(&self) -> usize {
        self.trajectories
    }

    pub fn samples(&self) -> &[TransferSample] {
        &self.samples
    }

    /// Conductance at `v_gate` by linear interpolation, clamped to the end
    /// samples outside the sampled range.
    pub fn conductance_at(&self, v_gate: f64) -> f64 {
        let s = &self.samples;
        if v_gate <= s[0].v_gate {
            return s[0].conductance;
        }
        if v_gate >= s[s.len() - 1].v_gate {
            return s[s.len() - 1].conductance;
        }
        let i = s.partition_point(|p| p.v_gate <= v_gate);
        let (a, b) = (&s[i - 1], &s[i]);
        let f = (v_gate - a.v_gate) / (b.v_gate - a.v_gate);
        a.conductance + f * (b.conductance - a.conductance)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "vg_volts,conductance_siemens,theta_deg,theta_std_deg")?;
        for s in &self.samples {
            writeln!(
                w,
                "{:.6},{:.9e},{:.6},{:.6}",
                s.v_gate,
                s.conductance,
                s.theta.to_degrees(),
                s.theta_std.to_degrees()
            )?;
        }
        Ok(())
    }
}

/// Inclusive grid `lo, lo+step, ...` up to `hi`.
pub fn voltage_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, ParamError> {
    if !(step > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) {
        return Err(ParamError::invalid("grid", "need step > 0 and hi >= lo"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

/// Samples `G(V_G)` over `grid`.
///
/// For the sLLG source, grid point `i` uses RNG domain `i`, so every point
/// has its own reproducible ensemble.
pub fn transfer_curve(
    grid: &[f64],
    source: &TransferSource,
    params: &MagnetParams,
    pair: &MtjResistancePair,
) -> Result<TransferCharacteristic, SllgError> {
    let (provenance, trajectories, samples) = match source {
        TransferSource::Analytic => {
            let consts = params.landscape_constants()?;
            let samples = grid
                .iter()
                .map(|&v| {
                    let theta = theta_ss_analytic(v, &consts).theta();
                    TransferSample {
                        v_gate: v,
                        conductance: 1.0 / resistance_from_angle(theta, pair),
                        theta,
                        theta_std: 0.0,
                        conductance_sem: 0.0,
                        unsettled: 0,
                    }
                })
                .collect();
            (Provenance::Analytic, 1, samples)
        }
        TransferSource::Sllg(cfg) => {
            let params = MagnetParams {
                temperature: cfg.temperature,
                ..params.clone()
            };
            let samples = grid
                .par_iter()
                .enumerate()
                .map(|(i, &v)| {
                    let ss = steady_state_ensemble(v, &params, cfg, i as u64)?;
                    let g = 1.0 / resistance_from_angle(ss.mean, pair);
                    let dg_dtheta = g * g * 0.5 * (pair.r_ap - pair.r_p) * ss.mean.sin();
                    Ok(TransferSample {
                        v_gate: v,
                        conductance: g,
                        conductance_sem: dg_dtheta.abs() * ss.std / (cfg.trajectories as f64).sqrt(),
                        theta: ss.mean,
                        theta_std: ss.std,
                        unsettled: ss.non_converged().len(),
                    })
                })
                .collect::<Result<Vec<_>, SllgError>>()?;
            (Provenance::Sllg, cfg.trajectories, samples)
        }
    };
    Ok(TransferCharacteristic::new(provenance, trajectories, samples)?)
}

/// Rules for choosing the linear window of a transfer curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitPolicy {
    /// Bound on `max|G − line| / G_AP` inside the window.
    pub max_residual_rel: f64,
    /// Bound on `max|G − line|` as a fraction of the conductance swing
    /// across the window; this is what limits the window growth.
    pub linearity_tol: f64,
    /// Half-width of the neighborhood around the knee used to locate `δ` (V).
    pub knee_halfwidth: f64,
    /// Smallest number of sloped-branch samples in an accepted window.
    pub min_window_points: usize,
}

impl Default for FitPolicy {
    fn default() -> Self {
        Self {
            max_residual_rel: 0.05,
            linearity_tol: 0.03,
            knee_halfwidth: 0.015,
            min_window_points: 3,
        }
    }
}

impl FitPolicy {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.max_residual_rel > 0.0) {
            return Err(ParamError::invalid("fit.max_residual_rel", "must be positive"));
        }
        if !(self.linearity_tol > 0.0) {
            return Err(ParamError::invalid("fit.linearity_tol", "must be positive"));
        }
        if !(self.knee_halfwidth > 0.0) {
            return Err(ParamError::invalid("fit.knee_halfwidth_v", "must be positive"));
        }
        if self.min_window_points < 2 {
            return Err(ParamError::invalid("fit.min_window_points", "must be at least 2"));
        }
        Ok(())
    }
}

/// `G = G_AP + κ·(V_G − δ)` over `[window_lo, window_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    /// Slope (S/V).
    pub kappa: f64,
    /// Knee voltage (V).
    pub delta: f64,
    /// Flat-branch conductance the line is anchored to (S).
    pub g_ap: f64,
    pub window_lo: f64,
    pub window_hi: f64,
    /// Largest `|G − line| / G_AP` in the window.
    pub residual: f64,
    /// Standard error of `κ` from the ensemble spread (S/V); zero for
    /// noiseless curves.
    pub kappa_std: f64,
    /// Standard error of `δ` (V).
    pub delta_std: f64,
}

impl LinearFit {
    pub fn predict(&self, v_gate: f64) -> f64 {
        self.g_ap + self.kappa * (v_gate - self.delta)
    }

    pub fn contains(&self, v_gate: f64) -> bool {
        let eps = 1e-12;
        v_gate >= self.window_lo - eps && v_gate <= self.window_hi + eps
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "kappa_s_per_v = {:.6e}", self.kappa)?;
        writeln!(w, "kappa_per_kohm_v = {:.6}", self.kappa * 1e3)?;
        writeln!(w, "kappa_std_per_kohm_v = {:.6}", self.kappa_std * 1e3)?;
        writeln!(w, "delta_v = {:.6}", self.delta)?;
        writeln!(w, "delta_std_v = {:.6}", self.delta_std)?;
        writeln!(w, "window_lo_v = {:.6}", self.window_lo)?;
        writeln!(w, "window_hi_v = {:.6}", self.window_hi)?;
        writeln!(w, "residual = {:.6}", self.residual)
    }
}

/// Least-squares flat-plus-ramp model: `G = g0` on the flat side of the
/// hinge `d`, `G = g0 + k·(V − d)` on side `s` (±1)
/// at a fixed hinge `d`; returns `(sse, g0, k)`.
fn hinge_at(v: &[f64], g: &[f64], d: f64, s: f64) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let u: Vec<f64> = v.iter().map(|&x| if s * (x - d) > 0.0 { x - d } else { 0.0 }).collect();
    let su: f64 = u.iter().sum();
    let suu: f64 = u.iter().map(|x| x * x).sum();
    let sg: f64 = g.iter().sum();
    let sug: f64 = u.iter().zip(g).map(|(a, b)| a * b).sum();
    let det = n * suu - su * su;
    let (g0, k) = if det.abs() < 1e-300 {
        (sg / n, 0.0)
    } else {
        ((sg * suu - su * sug) / det, (n * sug - su * sg) / det)
    };
    let sse = v
        .iter()
        .zip(&u)
        .zip(g)
        .map(|((_, &ui), &gi)| (gi - g0 - k * ui).powi(2))
        .sum();
    (sse, g0, k)
}

/// Extracts `κ`, `δ` and the linear window from a transfer curve.
///
/// The knee is the sample with the largest second divided difference.
/// `δ` and the flat level come from a flat-plus-ramp fit in a small
/// neighborhood of the knee. `κ` is then fitted through the anchor
/// `(δ, G_AP)` on the sloped branch, and the window grows away from `δ`
/// one sample at a time while the policy holds.
pub fn fit_linear_region(
    curve: &TransferCharacteristic,
    policy: &FitPolicy,
) -> Result<LinearFit, FitError> {
    const MIN_POINTS: usize = 10;
    policy
        .validate()
        .map_err(|e| FitError::NoLinearWindow(e.to_string()))?;
    let s = curve.samples();
    if s.len() < MIN_POINTS {
        return Err(FitError::TooFewPoints {
            needed: MIN_POINTS,
            got: s.len(),
        });
    }
    let v: Vec<f64> = s.iter().map(|p| p.v_gate).collect();
    let g: Vec<f64> = s.iter().map(|p| p.conductance).collect();

    let g_max = g.iter().cloned().fold(f64::MIN, f64::max);
    let g_min = g.iter().cloned().fold(f64::MAX, f64::min);
    let g_mean = g.iter().sum::<f64>() / g.len() as f64;
    if !(g_max - g_min > 1e-9 * g_mean.abs()) {
        return Err(FitError::NoLinearWindow(
            "slope indistinguishable from zero".into(),
        ));
    }

    let mut knee = 1;
    let mut best = 0.0;
    for i in 1..v.len() - 1 {
        let d1 = (g[i] - g[i - 1]) / (v[i] - v[i - 1]);
        let d2 = (g[i + 1] - g[i]) / (v[i + 1] - v[i]);
        let c = ((d2 - d1) / (v[i + 1] - v[i - 1])).abs();
        if c > best {
            best = c;
            knee = i;
        }
    }

    // The sloped branch is the side whose far end departs more from the knee.
    let left = (g[0] - g[knee]).abs();
    let right = (g[g.len() - 1] - g[knee]).abs();
    let side = if left >= right { -1.0 } else { 1.0 };

    let lo = v[knee] - policy.knee_halfwidth;
    let hi = v[knee] + policy.knee_halfwidth;
    let (nv, ng): (Vec<f64>, Vec<f64>) = v
        .iter()
        .zip(&g)
        .filter(|(&x, _)| x >= lo - 1e-12 && x <= hi + 1e-12)
        .map(|(&x, &y)| (x, y))
        .unzip();
    if nv.len() < 4 {
        return Err(FitError::NoLinearWindow(format!(
            "only {} samples within ±{} V of the knee",
            nv.len(),
            policy.knee_halfwidth
        )));
    }
    let sse = |d: f64| hinge_at(&nv, &ng, d, side).0;
    let (a, b) = (nv[0], nv[nv.len() - 1]);
    let steps = 400;
    let mut d_best = a;
    let mut e_best = f64::INFINITY;
    for i in 0..=steps {
        let d = a + (b - a) * i as f64 / steps as f64;
        let e = sse(d);
        if e < e_best {
            e_best = e;
            d_best = d;
        }
    }
    let h = (b - a) / steps as f64;
    let delta = golden_min(sse, (d_best - h).max(a), (d_best + h).min(b));
    let (_, g_ap, _) = hinge_at(&nv, &ng, delta, side);

    // Sloped-branch samples ordered outward from δ.
    let branch: Vec<usize> = if side < 0.0 {
        (0..v.len()).rev().filter(|&i| v[i] < delta).collect()
    } else {
        (0..v.len()).filter(|&i| v[i] > delta).collect()
    };

    let mut accepted: Option<(usize, f64, f64)> = None;
    for count in policy.min_window_points..=branch.len() {
        let idx = &branch[..count];
        let suu: f64 = idx.iter().map(|&i| (v[i] - delta).powi(2)).sum();
        let sug: f64 = idx.iter().map(|&i| (v[i] - delta) * (g[i] - g_ap)).sum();
        let kappa = sug / suu;
        let dev = idx
            .iter()
            .map(|&i| (g[i] - g_ap - kappa * (v[i] - delta)).abs())
            .fold(0.0, f64::max);
        let swing = idx
            .iter()
            .map(|&i| (g[i] - g_ap).abs())
            .fold(0.0, f64::max);
        if swing <= 0.0 {
            break;
        }
        let residual = dev / g_ap;
        if dev / swing <= policy.linearity_tol && residual <= policy.max_residual_rel {
            accepted = Some((count, kappa, residual));
        } else if accepted.is_some() {
            break;
        }
    }
    let (count, kappa, residual) = accepted.ok_or_else(|| {
        FitError::NoLinearWindow(format!(
            "no window of at least {} samples beside the knee at {:.4} V meets the policy",
            policy.min_window_points, delta
        ))
    })?;
    if kappa == 0.0 {
        return Err(FitError::NoLinearWindow(
            "slope indistinguishable from zero".into(),
        ));
    }
    let far = v[branch[count - 1]];
    let (window_lo, window_hi) = if side < 0.0 { (far, delta) } else { (delta, far) };

    let var = |i: usize| s[i].conductance_sem.powi(2);
    let suu: f64 = branch[..count].iter().map(|&i| (v[i] - delta).powi(2)).sum();
    let kappa_std = branch[..count]
        .iter()
        .map(|&i| (v[i] - delta).powi(2) * var(i))
        .sum::<f64>()
        .sqrt()
        / suu;
    let near: Vec<usize> = (0..v.len()).filter(|&i| (v[i] - delta).abs() <= policy.knee_halfwidth).collect();
    let delta_std = (near.iter().map(|&i| var(i)).sum::<f64>() / near.len().max(1) as f64).sqrt()
        / kappa.abs();
    Ok(LinearFit {
        kappa,
        delta,
        g_ap,
        window_lo,
        window_hi,
        residual,
        kappa_std,
        delta_std,
    })
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..80 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}

/// How the multiplier s-MTJ maps gate voltage to conductance.
#[derive(Debug, Clone, PartialEq)]
pub enum TransferModel {
    Analytic(LandscapeConstants),
    /// A sampled curve, interpolated and clamped at its ends.
    Tabulated(TransferCharacteristic),
}

impl TransferModel {
    pub fn conductance(&self, v_gate: f64, pair: &MtjResistancePair) -> f64 {
        match self {
            TransferModel::Analytic(c) => {
                1.0 / resistance_from_angle(theta_ss_analytic(v_gate, c).theta(), pair)
            }
            TransferModel::Tabulated(curve) => curve.conductance_at(v_gate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    /// The product law `I = κ·V_in1·V_in2`.
    Ideal,
    /// `V_in2/(R_series + R_sMTJ(V_G))` with no approximation.
    Exact,
    /// Exact current minus the reference branch `V_in2/(R_series + R_AP)`.
    ExactCompensated,
}

impl std::str::FromStr for Fidelity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ideal" => Ok(Fidelity::Ideal),
            "exact" => Ok(Fidelity::Exact),
            "exact-compensated" => Ok(Fidelity::ExactCompensated),
            other => Err(format!(
                "unknown fidelity `{other}` (expected ideal, exact or exact-compensated)"
            )),
        }
    }
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fidelity::Ideal => "ideal",
            Fidelity::Exact => "exact",
            Fidelity::ExactCompensated => "exact-compensated",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierCircuit {
    pub pair: MtjResistancePair,
    pub model: TransferModel,
    /// Series resistance of the heavy-metal strip (Ω).
    pub r_series: f64,
    pub fit: LinearFit,
    /// Largest allowed input amplitude (V).
    pub v_max: f64,
}

impl MultiplierCircuit {
    pub fn new(
        pair: MtjResistancePair,
        model: TransferModel,
        r_series: f64,
        fit: LinearFit,
        v_max: f64,
    ) -> Result<Self, ParamError> {
        if !(r_series > 0.0 && r_series.is_finite()) {
            return Err(ParamError::invalid("r_series", "must be positive"));
        }
        if !(v_max > 0.0) {
            return Err(ParamError::invalid("v_max", "must be positive"));
        }
        Ok(Self {
            pair,
            model,
            r_series,
            fit,
            v_max,
        })
    }

    /// Output current for a given conductance-side resistance, used for
    /// both the signal and the reference branch.
    fn branch_current(&self, v_in2: f64, r_mtj: f64) -> f64 {
        v_in2 / (self.r_series + r_mtj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierOutput {
    /// Output current (A).
    pub current: f64,
    /// Gate voltage applied to the s-MTJ (V).
    pub v_gate: f64,
    /// The gate voltage fell outside the fitted linear window.
    pub out_of_window: bool,
}

/// Output current of the four-terminal multiplier for gate input `v_in1`
/// (applied on top of the bias `δ`) and drive input `v_in2`.
///
/// Ideal mode rejects gate voltages outside the linear window; the physical
/// modes evaluate the device model anyway and flag the sample.
pub fn multiplier_output(
    v_in1: f64,
    v_in2: f64,
    circuit: &MultiplierCircuit,
    fidelity: Fidelity,
) -> Result<MultiplierOutput, MultiplierError> {
    for v in [v_in1, v_in2] {
        if v.abs() > circuit.v_max * (1.0 + 1e-12) {
            return Err(MultiplierError::AmplitudeTooLarge {
                value: v,
                limit: circuit.v_max,
            });
        }
    }
    let fit = &circuit.fit;
    let v_gate = v_in1 + fit.delta;
    let out_of_window = !fit.contains(v_gate);
    if out_of_window && fidelity == Fidelity::Ideal {
        return Err(MultiplierError::OutOfWindow {
            v_gate,
            lo: fit.window_lo,
            hi: fit.window_hi,
        });
    }
    let current = match fidelity {
        Fidelity::Ideal => fit.kappa * v_in1 * v_in2,
        Fidelity::Exact | Fidelity::ExactCompensated => {
            let g = circuit.model.conductance(v_gate, &circuit.pair);
            let exact = circuit.branch_current(v_in2, 1.0 / g);
            if fidelity == Fidelity::Exact {
                exact
            } else {
                exact - circuit.branch_current(v_in2, circuit.pair.r_ap)
            }
        }
    };
    Ok(MultiplierOutput {
        current,
        v_gate,
        out_of_window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn pair() -> MtjResistancePair {
        MtjResistancePair::new(1e3, 2e3).unwrap()
    }

    fn analytic_curve(params: &MagnetParams) -> TransferCharacteristic {
        let grid = voltage_grid(-0.40, -0.10, 0.005).unwrap();
        transfer_curve(&grid, &TransferSource::Analytic, params, &pair()).unwrap()
    }

    #[test]
    fn resistance_endpoints() {
        let p = pair();
        assert_relative_eq!(resistance_from_angle(0.0, &p), 1e3);
        assert_relative_eq!(resistance_from_angle(PI, &p), 2e3);
        assert_relative_eq!(resistance_from_angle(PI / 2.0, &p), 1.5e3, max_relative = 1e-12);
    }

    #[test]
    fn rejects_inverted_pair() {
        assert!(MtjResistancePair::new(2e3, 1e3).is_err());
        assert!(MtjResistancePair::new(0.0, 1e3).is_err());
    }

    #[test]
    fn analytic_curve_flat_below_threshold() {
        let params = MagnetParams::nominal();
        let curve = analytic_curve(&params);
        for s in curve.samples() {
            assert!(s.conductance >= 0.5e-3 - 1e-15 && s.conductance <= 1e-3 + 1e-15);
            if s.v_gate > -0.26 {
                assert_eq!(s.conductance, 0.5e-3);
            }
        }
    }

    #[test]
    fn analytic_curve_matches_linearization_near_knee() {
        // Expanding R(V) to first order in ε = V − δ gives
        // G ≈ G_AP − (R_AP − R_P)/(2ΓR_AP²)·ε near the knee.
        let params = MagnetParams::nominal();
        let c = params.landscape_constants().unwrap();
        let p = pair();
        let slope = -(p.r_ap - p.r_p) / (2.0 * c.big_gamma * p.r_ap * p.r_ap);
        let model = TransferModel::Analytic(c);
        for eps in [1e-4, 5e-4, 1e-3, 2e-3] {
            let v = c.threshold_voltage() - eps;
            let got = model.conductance(v, &p) - p.g_ap();
            let lin = slope * (-eps);
            assert!((got - lin).abs() / lin.abs() < 0.05, "eps {eps}: {got} vs {lin}");
        }
    }

    #[test]
    fn fit_finds_threshold_and_slope() {
        let params = MagnetParams::nominal();
        let c = params.landscape_constants().unwrap();
        let fit = fit_linear_region(&analytic_curve(&params), &FitPolicy::default()).unwrap();
        assert!((fit.delta - c.threshold_voltage()).abs() < 1e-3, "delta {}", fit.delta);
        assert_relative_eq!(fit.g_ap, 0.5e-3, max_relative = 1e-6);
        // The slope lies between the chord over the window and the tangent
        // at the knee.
        let p = pair();
        let knee_slope = -(p.r_ap - p.r_p) / (2.0 * c.big_gamma * p.r_ap * p.r_ap);
        let model = TransferModel::Analytic(c);
        let chord = (model.conductance(fit.window_lo, &p) - p.g_ap()) / (fit.window_lo - fit.delta);
        assert!(fit.kappa < chord && fit.kappa > knee_slope, "{} {} {}", chord, fit.kappa, knee_slope);
        assert!(fit.window_hi - fit.window_lo >= 0.05);
        assert!(fit.residual < 0.05);
        assert_eq!(fit.kappa_std, 0.0);
    }

    #[test]
    fn pinned_gamma_moves_delta() {
        let params = MagnetParams::nominal().pin_gamma(-0.001).unwrap();
        let c = params.landscape_constants().unwrap();
        let fit = fit_linear_region(&analytic_curve(&params), &FitPolicy::default()).unwrap();
        assert!((fit.delta - (c.small_gamma - c.big_gamma)).abs() < 1e-3);
    }

    #[test]
    fn constant_curve_has_no_window() {
        let samples = (0..20)
            .map(|i| TransferSample {
                v_gate: i as f64 * 0.01,
                conductance: 1e-3,
                theta: 0.0,
                theta_std: 0.0,
                conductance_sem: 0.0,
                unsettled: 0,
            })
            .collect();
        let curve = TransferCharacteristic::new(Provenance::Analytic, 1, samples).unwrap();
        let err = fit_linear_region(&curve, &FitPolicy::default()).unwrap_err();
        assert!(err.to_string().contains("no linear window"));
    }

    #[test]
    fn short_curve_rejected() {
        let grid = voltage_grid(-0.3, -0.26, 0.01).unwrap();
        let curve =
            transfer_curve(&grid, &TransferSource::Analytic, &MagnetParams::nominal(), &pair()).unwrap();
        assert!(matches!(
            fit_linear_region(&curve, &FitPolicy::default()),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn sllg_cold_curve_tracks_analytic() {
        let params = MagnetParams::nominal();
        let cfg = SolverConfig {
            temperature: 0.0,
            trajectories: 1,
            t_max: 10e-9,
            ..SolverConfig::default()
        };
        let grid = [-0.34, -0.30, -0.20];
        let a = transfer_curve(&grid, &TransferSource::Analytic, &params, &pair()).unwrap();
        let s = transfer_curve(&grid, &TransferSource::Sllg(cfg), &params, &pair()).unwrap();
        for (x, y) in a.samples().iter().zip(s.samples()) {
            assert!((x.theta - y.theta).abs() < 1f64.to_radians());
        }
        assert_eq!(s.provenance(), Provenance::Sllg);
    }

    fn circuit(r_series: f64) -> MultiplierCircuit {
        let params = MagnetParams::nominal();
        let fit = fit_linear_region(&analytic_curve(&params), &FitPolicy::default()).unwrap();
        let model = TransferModel::Analytic(params.landscape_constants().unwrap());
        MultiplierCircuit::new(pair(), model, r_series, fit, 0.05).unwrap()
    }

    #[test]
    fn zero_gate_input() {
        let c = circuit(816.0);
        let v2 = 0.03;
        let ideal = multiplier_output(0.0, v2, &c, Fidelity::Ideal).unwrap();
        assert_eq!(ideal.current, 0.0);
        let exact = multiplier_output(0.0, v2, &c, Fidelity::Exact).unwrap();
        assert_relative_eq!(exact.current, v2 / (816.0 + 2e3), max_relative = 1e-6);
        let comp = multiplier_output(0.0, v2, &c, Fidelity::ExactCompensated).unwrap();
        assert!(comp.current.abs() < 1e-6 * exact.current);
    }

    #[test]
    fn ideal_full_scale_current() {
        let mut c = circuit(816.0);
        c.fit.kappa = -0.4e-3;
        c.fit.window_lo = c.fit.delta - 0.06;
        let out = multiplier_output(-0.05, 0.05, &c, Fidelity::Ideal).unwrap();
        assert_relative_eq!(out.current, 1e-6, max_relative = 1e-12);
    }

    #[test]
    fn exact_current_bounded_by_parallel_state() {
        let c = circuit(1.0);
        let out = multiplier_output(-0.05, 0.05, &c, Fidelity::Exact).unwrap();
        assert!(out.current < 0.05 / 1e3);
        assert!(out.current > 0.05 / (2e3 + 1.0));
    }

    #[test]
    fn ideal_rejects_out_of_window() {
        let c = circuit(816.0);
        let v1 = c.fit.window_lo - c.fit.delta - 0.005;
        let err = multiplier_output(v1.max(-0.05), 0.01, &c, Fidelity::Ideal);
        if v1 >= -0.05 {
            assert!(matches!(err, Err(MultiplierError::OutOfWindow { .. })));
        }
        let out = multiplier_output(0.01, 0.01, &c, Fidelity::Exact).unwrap();
        assert!(out.out_of_window);
        assert!(matches!(
            multiplier_output(0.01, 0.01, &c, Fidelity::Ideal),
            Err(MultiplierError::OutOfWindow { .. })
        ));
    }

    #[test]
    fn amplitude_cap() {
        let c = circuit(816.0);
        assert!(matches!(
            multiplier_output(-0.06, 0.01, &c, Fidelity::Exact),
            Err(MultiplierError::AmplitudeTooLarge { .. })
        ));
    }

    #[test]
    fn compensated_tracks_ideal_on_encoding_grid() {
        let c = circuit(1.0);
        let step = 0.00407;
        let sign = c.fit.kappa.signum();
        for a in 1..=12 {
            for b in 1..=12 {
                let v1 = sign * a as f64 * step;
                let v2 = b as f64 * step;
                let ideal = multiplier_output(v1, v2, &c, Fidelity::Ideal).unwrap().current;
                let comp = multiplier_output(v1, v2, &c, Fidelity::ExactCompensated)
                    .unwrap()
                    .current;
                assert!(ideal > 0.0);
                assert!((comp - ideal).abs() / ideal < 0.15, "{a}x{b}: {comp} vs {ideal}");
            }
        }
    }

    #[test]
    fn csv_and_summary_format() {
        let params = MagnetParams::nominal();
        let curve = analytic_curve(&params);
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("vg_volts,conductance_siemens,theta_deg,theta_std_deg\n"));
        assert_eq!(text.lines().count(), curve.samples().len() + 1);
        let fit = fit_linear_region(&curve, &FitPolicy::default()).unwrap();
        let mut buf = Vec::new();
        fit.write_summary(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for key in ["kappa_per_kohm_v", "delta_v", "window_lo_v", "window_hi_v", "residual"] {
            assert!(text.contains(key));
        }
    }
}
