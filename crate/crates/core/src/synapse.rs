//! Domain-wall synapse used as the accumulator.
//!
//! A current pulse in the heavy-metal strip pushes the wall by an amount
//! proportional to the pulse amplitude; the p-MTJ conductance is affine in
//! the wall position, so it tracks the running sum of the pulse currents.

use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::ParamError;

/// Default calibration table shipped with the crate.
pub const DEFAULT_MOBILITY_TABLE: &str = include_str!("../data/mobility_table.csv");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavyMetalStrip {
    /// Resistivity (Ω·m).
    pub resistivity: f64,
    /// Width (m).
    pub width: f64,
    /// Thickness (m).
    pub thickness: f64,
    /// Length (m).
    pub length: f64,
    pub spin_hall_angle: f64,
}

impl HeavyMetalStrip {
    pub fn new(
        resistivity: f64,
        width: f64,
        thickness: f64,
        length: f64,
        spin_hall_angle: f64,
    ) -> Result<Self, ParamError> {
        for (name, v) in [
            ("strip.resistivity", resistivity),
            ("strip.width", width),
            ("strip.thickness", thickness),
            ("strip.length", length),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ParamError::invalid(name, "must be positive"));
            }
        }
        Ok(Self {
            resistivity,
            width,
            thickness,
            length,
            spin_hall_angle,
        })
    }

    pub fn cross_section(&self) -> f64 {
        self.width * self.thickness
    }

    pub fn current_density(&self, current: f64) -> f64 {
        current / self.cross_section()
    }
}

/// `R = ρ·length/(width·thickness)`.
pub fn strip_resistance(strip: &HeavyMetalStrip) -> f64 {
    strip.resistivity * strip.length / strip.cross_section()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwSynapseState {
    /// Soft-layer length `L` (m).
    pub length: f64,
    /// Domain-wall width `w` (m).
    pub wall_width: f64,
    /// Wall position `x` (m), measured from the reset edge.
    pub x: f64,
    pub g_p: f64,
    pub g_ap: f64,
    /// Conductance of the wall region per unit of its share of the layer (S).
    pub g_dw: f64,
    /// Set once a pulse has been clipped at the far end.
    pub saturated: bool,
}

impl DwSynapseState {
    pub fn new(length: f64, wall_width: f64, g_p: f64, g_ap: f64, g_dw: f64) -> Result<Self, ParamError> {
        if !(length > 0.0 && wall_width >= 0.0 && wall_width < length) {
            return Err(ParamError::invalid("synapse.wall_width", "need 0 <= w < L"));
        }
        if !(g_p > g_ap && g_ap > 0.0) {
            return Err(ParamError::invalid("synapse", "need G_P > G_AP > 0"));
        }
        if !(g_dw > 0.0) {
            return Err(ParamError::invalid("synapse.g_dw", "must be positive"));
        }
        Ok(Self {
            length,
            wall_width,
            x: 0.0,
            g_p,
            g_ap,
            g_dw,
            saturated: false,
        })
    }

    /// Furthest wall position, `L − w` (m).
    pub fn x_max(&self) -> f64 {
        self.length - self.wall_width
    }
}

/// Parallel combination of the AP, wall and P regions.
pub fn synapse_conductance(state: &DwSynapseState) -> f64 {
    let l = state.length;
    state.g_ap * state.x / l
        + state.g_dw * state.wall_width / l
        + state.g_p * (l - state.x - state.wall_width) / l
}

/// `(A, B)` with `G = A − B·x`.
pub fn ab_constants(state: &DwSynapseState) -> (f64, f64) {
    let l = state.length;
    let a = state.g_dw * state.wall_width / l + state.g_p * (1.0 - state.wall_width / l);
    let b = (state.g_p - state.g_ap) / l;
    (a, b)
}

pub fn reset(state: &mut DwSynapseState) {
    state.x = 0.0;
    state.saturated = false;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRow {
    /// Current density (A/m²).
    pub j: f64,
    /// Mean displacement per reference pulse (m).
    pub mean_dx: f64,
    /// Standard deviation of the displacement (m).
    pub std_dx: f64,
}

/// Displacement statistics versus current density, interpolated linearly
/// from an implicit `(0, 0, 0)` row.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    rows: Vec<CalibrationRow>,
}

impl CalibrationTable {
    pub fn new(rows: Vec<CalibrationRow>) -> Result<Self, ParamError> {
        if rows.is_empty() {
            return Err(ParamError::invalid("mobility.table", "table is empty"));
        }
        if rows[0].j <= 0.0 {
            return Err(ParamError::invalid("mobility.table", "current densities must be positive"));
        }
        if rows.windows(2).any(|w| !(w[1].j > w[0].j)) {
            return Err(ParamError::invalid(
                "mobility.table",
                "current density must be strictly increasing",
            ));
        }
        if rows.iter().any(|r| !(r.mean_dx >= 0.0 && r.std_dx >= 0.0)) {
            return Err(ParamError::invalid("mobility.table", "displacements must be >= 0"));
        }
        if rows.windows(2).any(|w| w[1].mean_dx < w[0].mean_dx) {
            return Err(ParamError::invalid(
                "mobility.table",
                "mean displacement must not decrease with current density",
            ));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[CalibrationRow] {
        &self.rows
    }

    /// Mean and standard deviation at `j`. Beyond the last row both scale
    /// proportionally with `j`.
    pub fn lookup(&self, j: f64) -> (f64, f64) {
        let last = self.rows[self.rows.len() - 1];
        if j >= last.j {
            let f = j / last.j;
            return (last.mean_dx * f, last.std_dx * f);
        }
        let i = self.rows.partition_point(|r| r.j <= j);
        let (a, b) = if i == 0 {
            (
                CalibrationRow {
                    j: 0.0,
                    mean_dx: 0.0,
                    std_dx: 0.0,
                },
                self.rows[0],
            )
        } else {
            (self.rows[i - 1], self.rows[i])
        };
        let f = (j - a.j) / (b.j - a.j);
        (
            a.mean_dx + f * (b.mean_dx - a.mean_dx),
            a.std_dx + f * (b.std_dx - a.std_dx),
        )
    }
}

impl FromStr for CalibrationTable {
    type Err = ParamError;

    /// Parses rows of `J_A_per_m2, mean_dx_m, std_dx_m`; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || ParamError::invalid("mobility.table", format!("line {}: expected 3 numbers", n + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            let mut nums = [0.0; 3];
            for (k, f) in fields.iter().enumerate() {
                nums[k] = f.parse().map_err(|_| bad())?;
            }
            rows.push(CalibrationRow {
                j: nums[0],
                mean_dx: nums[1],
                std_dx: nums[2],
            });
        }
        Self::new(rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MobilityMode {
    /// `Δx = η·J`, multiplicative Gaussian noise of relative std `noise_std_rel`.
    Linear,
    /// Mean and std interpolated from a calibration table.
    Table(CalibrationTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwMobilityModel {
    /// Displacement per unit current density for one reference pulse (m per A/m²).
    pub eta: f64,
    /// Pulse width the displacements were calibrated at (s).
    pub reference_pulse: f64,
    pub noise_std_rel: f64,
    pub mode: MobilityMode,
}

impl DwMobilityModel {
    /// Linear model through the origin and one calibration point.
    pub fn through_point(
        j: f64,
        dx: f64,
        reference_pulse: f64,
        noise_std_rel: f64,
    ) -> Result<Self, ParamError> {
        if !(j > 0.0 && dx > 0.0) {
            return Err(ParamError::invalid("mobility", "calibration point must be positive"));
        }
        let m = Self {
            eta: dx / j,
            reference_pulse,
            noise_std_rel,
            mode: MobilityMode::Linear,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(ParamError::invalid("mobility.eta", "must be positive"));
        }
        if !(self.noise_std_rel >= 0.0) {
            return Err(ParamError::invalid("mobility.noise_std_rel", "must be >= 0"));
        }
        if !(self.reference_pulse > 0.0) {
            return Err(ParamError::invalid("mobility.reference_pulse", "must be positive"));
        }
        Ok(())
    }

    /// Mean and standard deviation of the displacement for one pulse of
    /// density `j` and width `pulse_width`. The wall moves at constant
    /// velocity while driven, so both scale with the pulse width.
    pub fn displacement_stats(&self, j: f64, pulse_width: f64) -> (f64, f64) {
        let scale = pulse_width / self.reference_pulse;
        match &self.mode {
            MobilityMode::Linear => {
                let mean = self.eta * j * scale;
                (mean, self.noise_std_rel * mean)
            }
            MobilityMode::Table(t) => {
                let (m, s) = t.lookup(j);
                (m * scale, s * scale)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseTiming {
    /// Drive pulse width `Δt` (s).
    pub pulse_width: f64,
    /// Rest period after each pulse (s).
    pub rest_period: f64,
}

impl PulseTiming {
    pub fn new(pulse_width: f64, rest_period: f64) -> Result<Self, ParamError> {
        if !(pulse_width > 0.0 && rest_period > 0.0) {
            return Err(ParamError::invalid("timing", "pulse width and rest period must be positive"));
        }
        Ok(Self {
            pulse_width,
            rest_period,
        })
    }

    pub fn cycle(&self) -> f64 {
        self.pulse_width + self.rest_period
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseOutcome {
    /// Displacement actually applied (m).
    pub dx: f64,
    /// The wall hit an end of the layer during this pulse.
    pub clipped: bool,
}

/// Drives one current pulse of magnitude `current` (A) through the strip.
///
/// With `noisy` false the mean displacement is applied.
pub fn apply_pulse<R: Rng + ?Sized>(
    state: &mut DwSynapseState,
    current: f64,
    strip: &HeavyMetalStrip,
    mobility: &DwMobilityModel,
    timing: &PulseTiming,
    noisy: bool,
    rng: &mut R,
) -> Result<PulseOutcome, ParamError> {
    if !(current >= 0.0 && current.is_finite()) {
        return Err(ParamError::invalid("current", "pulse magnitude must be finite and >= 0"));
    }
    if current == 0.0 {
        return Ok(PulseOutcome {
            dx: 0.0,
            clipped: false,
        });
    }
    let j = strip.current_density(current);
    let (mean, std) = mobility.displacement_stats(j, timing.pulse_width);
    let dx = if noisy && std > 0.0 {
        mean + std * rng.sample::<f64, _>(StandardNormal)
    } else {
        mean
    };
    let target = state.x + dx;
    let x_max = state.x_max();
    let x = target.clamp(0.0, x_max);
    // Landing on the far end up to rounding is a full, not an overflowing, wall.
    let clipped = target < 0.0 || target > x_max * (1.0 + 1e-9);
    if clipped && target > 0.0 {
        state.saturated = true;
    }
    let applied = x - state.x;
    state.x = x;
    Ok(PulseOutcome {
        dx: applied,
        clipped,
    })
}
