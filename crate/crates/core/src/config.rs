//! Simulation configuration: a TOML document with one table per subsystem
//! and unit-suffixed keys. Every key has a default, unknown keys are
//! rejected, and building the device objects re-checks their invariants.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::accounting::{CostModel, ExecutionMode};
use crate::engine::{Accelerator, EncodingScheme, MacUnit};
use crate::error::{ConfigError, ParamError};
use crate::magnet::{
    DemagFactors, DipoleField, MagnetMaterial, MagnetParams, PiezoStack, SoftLayerGeometry,
};
use crate::multiplier::{
    fit_linear_region, transfer_curve, voltage_grid, Fidelity, FitPolicy, LinearFit,
    MtjResistancePair, MultiplierCircuit, TransferCharacteristic, TransferModel, TransferSource,
};
use crate::readout::ReadoutCircuit;
use crate::sllg::SolverConfig;
use crate::synapse::{
    strip_resistance, CalibrationTable, DwMobilityModel, DwSynapseState, HeavyMetalStrip,
    MobilityMode, PulseTiming, DEFAULT_MOBILITY_TABLE,
};

const NM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftLayerSection {
    pub major_axis_nm: f64,
    pub minor_axis_nm: f64,
    pub thickness_nm: f64,
}

impl Default for SoftLayerSection {
    fn default() -> Self {
        Self {
            major_axis_nm: 800.0,
            minor_axis_nm: 700.0,
            thickness_nm: 2.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagnetSection {
    pub saturation_magnetization_a_per_m: f64,
    pub magnetostriction: f64,
    pub youngs_modulus_pa: f64,
    pub damping: f64,
    pub dipole_field_oe: f64,
    pub temperature_k: f64,
    /// Overrides the computed demag factors; all three or none.
    pub demag_nxx: Option<f64>,
    pub demag_nyy: Option<f64>,
    pub demag_nzz: Option<f64>,
    /// Adjusts `N_yy − N_zz` so that `γ` equals this value.
    pub pinned_gamma_v: Option<f64>,
}

impl Default for MagnetSection {
    fn default() -> Self {
        Self {
            saturation_magnetization_a_per_m: 8.5e5,
            magnetostriction: 600e-6,
            youngs_modulus_pa: 120e9,
            damping: 0.1,
            dipole_field_oe: 1000.0,
            temperature_k: 300.0,
            demag_nxx: None,
            demag_nyy: None,
            demag_nzz: None,
            pinned_gamma_v: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiezoSection {
    pub d33_m_per_v: f64,
    pub thickness_nm: f64,
}

impl Default for PiezoSection {
    fn default() -> Self {
        Self {
            d33_m_per_v: 1.5e-9,
            thickness_nm: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SllgSection {
    pub dt_ps: f64,
    pub t_max_ns: f64,
    pub temperature_k: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub steady_window_ns: f64,
    pub steady_tol_deg: f64,
    pub sample_interval_ps: f64,
    pub initial_tilt_rad: f64,
}

impl Default for SllgSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            dt_ps: d.dt * 1e12,
            t_max_ns: d.t_max * 1e9,
            temperature_k: d.temperature,
            trajectories: d.trajectories,
            seed: d.seed,
            steady_window_ns: d.steady_window * 1e9,
            steady_tol_deg: d.steady_tol.to_degrees(),
            sample_interval_ps: d.sample_interval * 1e12,
            initial_tilt_rad: d.initial_tilt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtjSection {
    pub r_p_ohm: f64,
    pub r_ap_ohm: f64,
    /// Probe current of a resistance characterization sweep.
    pub bias_current_ua: f64,
}

impl Default for MtjSection {
    fn default() -> Self {
        Self {
            r_p_ohm: 1000.0,
            r_ap_ohm: 2000.0,
            bias_current_ua: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    /// `analytic` or `sllg`: where the multiplier's transfer model comes from.
    pub source: String,
    pub vg_min_v: f64,
    pub vg_max_v: f64,
    pub vg_step_v: f64,
    pub max_residual_rel: f64,
    pub linearity_tol: f64,
    pub knee_halfwidth_v: f64,
    pub min_window_points: usize,
}

impl Default for TransferSection {
    fn default() -> Self {
        let p = FitPolicy::default();
        Self {
            source: "analytic".into(),
            vg_min_v: -0.40,
            vg_max_v: -0.20,
            vg_step_v: 0.005,
            max_residual_rel: p.max_residual_rel,
            linearity_tol: p.linearity_tol,
            knee_halfwidth_v: p.knee_halfwidth,
            min_window_points: p.min_window_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StripSection {
    pub resistivity_ohm_m: f64,
    pub width_nm: f64,
    pub thickness_nm: f64,
    /// Defaults to `N_max` full-scale steps.
    pub length_nm: Option<f64>,
    pub spin_hall_angle: f64,
}

impl Default for StripSection {
    fn default() -> Self {
        Self {
            resistivity_ohm_m: 1e-7,
            width_nm: 50.0,
            thickness_nm: 5.0,
            length_nm: None,
            spin_hall_angle: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynapseSection {
    pub length_nm: f64,
    pub wall_width_nm: f64,
    pub r_p_ohm: f64,
    pub r_ap_ohm: f64,
    /// Defaults to the conductance midway between P and AP.
    pub r_dw_ohm: Option<f64>,
}

impl Default for SynapseSection {
    fn default() -> Self {
        Self {
            length_nm: 2060.0,
            wall_width_nm: 20.0,
            r_p_ohm: 1000.0,
            r_ap_ohm: 2000.0,
            r_dw_ohm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilitySection {
    /// `linear` or `table`.
    pub mode: String,
    pub calibration_current_density_a_per_m2: f64,
    pub calibration_displacement_nm: f64,
    pub reference_pulse_ns: f64,
    pub noise_std_rel: f64,
    /// Calibration table file; the shipped table when absent.
    pub table_path: Option<String>,
}

impl Default for MobilitySection {
    fn default() -> Self {
        Self {
            mode: "linear".into(),
            calibration_current_density_a_per_m2: 2e11,
            calibration_displacement_nm: 120.0,
            reference_pulse_ns: 0.5,
            noise_std_rel: 0.2,
            table_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSection {
    pub pulse_width_ns: f64,
    pub rest_period_ns: f64,
    pub reset_time_ns: f64,
}

impl Default for TimingSection {
    fn default() -> Self {
        Self {
            pulse_width_ns: 0.5,
            rest_period_ns: 4.0,
            reset_time_ns: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingSection {
    pub c_in_ff: f64,
    pub temperature_k: f64,
    pub v_max_mv: f64,
    /// Defaults to the thermal minimum `2·√(kT/C_in)`.
    pub step_mv: Option<f64>,
}

impl Default for EncodingSection {
    fn default() -> Self {
        Self {
            c_in_ff: 1.0,
            temperature_k: 300.0,
            v_max_mv: 50.0,
            step_mv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutSection {
    pub g0_ratio: f64,
    pub ratio_min: f64,
    pub max_sense_current_ua: f64,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        Self {
            g0_ratio: 100.0,
            ratio_min: 100.0,
            max_sense_current_ua: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccountingSection {
    pub crossbar_xi_aj: f64,
    /// Worst-case pulse current of the cost report; defaults to the
    /// amplitude cap over the multiplier's `R_P`.
    pub max_current_ua: Option<f64>,
}

impl Default for AccountingSection {
    fn default() -> Self {
        Self {
            crossbar_xi_aj: 1000.0,
            max_current_ua: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub mode: String,
    pub fidelity: String,
    pub noise: bool,
}

impl Default for EngineSection {
    fn default() -> Self {
        Self {
            mode: "sequential".into(),
            fidelity: "exact-compensated".into(),
            noise: true,
        }
    }
}

/// Values produced by `calibrate`; when present they replace the fitted
/// line, the mobility slope and the decode unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub kappa_s_per_v: f64,
    pub delta_v: f64,
    pub g_ap_s: f64,
    pub window_lo_v: f64,
    pub window_hi_v: f64,
    pub eta_m_per_a_per_m2: f64,
    pub decode_unit_m: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub soft_layer: SoftLayerSection,
    pub magnet: MagnetSection,
    pub piezo: PiezoSection,
    pub sllg: SllgSection,
    pub mtj: MtjSection,
    pub transfer: TransferSection,
    pub strip: StripSection,
    pub synapse: SynapseSection,
    pub mobility: MobilitySection,
    pub timing: TimingSection,
    pub encoding: EncodingSection,
    pub readout: ReadoutSection,
    pub accounting: AccountingSection,
    pub engine: EngineSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSection>,
}

fn parse_choice<T: std::str::FromStr<Err = String>>(name: &str, v: &str) -> Result<T, ParamError> {
    v.parse().map_err(|e: String| ParamError::invalid(name, e))
}

impl SimulationConfig {
    /// Parses and validates a TOML document; `origin` names it in errors.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Builds every device object once, so invariant violations surface at
    /// load time.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.magnet_params()?;
        self.solver()?;
        self.pair()?;
        self.fit_policy().validate()?;
        self.transfer_grid()?;
        self.transfer_source()?;
        self.mode()?;
        self.fidelity()?;
        self.synapse_state()?;
        self.mobility_model()?;
        self.timing()?;
        self.encoding()?;
        Ok(())
    }

    pub fn magnet_params(&self) -> Result<MagnetParams, ParamError> {
        let s = &self.soft_layer;
        let m = &self.magnet;
        let geometry = SoftLayerGeometry::new(s.major_axis_nm * NM, s.minor_axis_nm * NM, s.thickness_nm * NM)?;
        let material = MagnetMaterial {
            saturation_magnetization: m.saturation_magnetization_a_per_m,
            magnetostriction: m.magnetostriction,
            youngs_modulus: m.youngs_modulus_pa,
            damping: m.damping,
        };
        let piezo = PiezoStack {
            d33: self.piezo.d33_m_per_v,
            thickness: self.piezo.thickness_nm * NM,
        };
        let dipole = DipoleField::from_oersted(m.dipole_field_oe)?;
        let params = match (m.demag_nxx, m.demag_nyy, m.demag_nzz) {
            (None, None, None) => MagnetParams::new(geometry, material, piezo, dipole, m.temperature_k)?,
            (Some(x), Some(y), Some(z)) => MagnetParams::with_demag(
                geometry,
                material,
                piezo,
                dipole,
                DemagFactors::new(x, y, z)?,
                m.temperature_k,
            )?,
            _ => {
                return Err(ParamError::invalid(
                    "magnet.demag_n*",
                    "set all three demag factors or none",
                ))
            }
        };
        match m.pinned_gamma_v {
            Some(g) => params.pin_gamma(g),
            None => Ok(params),
        }
    }

    pub fn solver(&self) -> Result<SolverConfig, ParamError> {
        let s = &self.sllg;
        let cfg = SolverConfig {
            dt: s.dt_ps * 1e-12,
            t_max: s.t_max_ns * 1e-9,
            temperature: s.temperature_k,
            trajectories: s.trajectories,
            seed: s.seed,
            steady_window: s.steady_window_ns * 1e-9,
            steady_tol: s.steady_tol_deg.to_radians(),
            sample_interval: s.sample_interval_ps * 1e-12,
            initial_tilt: s.initial_tilt_rad,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pair(&self) -> Result<MtjResistancePair, ParamError> {
        MtjResistancePair::new(self.mtj.r_p_ohm, self.mtj.r_ap_ohm)
    }

    pub fn fit_policy(&self) -> FitPolicy {
        let t = &self.transfer;
        FitPolicy {
            max_residual_rel: t.max_residual_rel,
            linearity_tol: t.linearity_tol,
            knee_halfwidth: t.knee_halfwidth_v,
            min_window_points: t.min_window_points,
        }
    }

    pub fn transfer_grid(&self) -> Result<Vec<f64>, ParamError> {
        let t = &self.transfer;
        voltage_grid(t.vg_min_v, t.vg_max_v, t.vg_step_v)
    }

    pub fn transfer_source(&self) -> Result<TransferSource, ParamError> {
        match self.transfer.source.as_str() {
            "analytic" => Ok(TransferSource::Analytic),
            "sllg" => Ok(TransferSource::Sllg(self.solver()?)),
            other => Err(ParamError::invalid(
                "transfer.source",
                format!("unknown source `{other}` (expected analytic or sllg)"),
            )),
        }
    }

    pub fn mode(&self) -> Result<ExecutionMode, ParamError> {
        parse_choice("engine.mode", &self.engine.mode)
    }

    pub fn fidelity(&self) -> Result<Fidelity, ParamError> {
        parse_choice("engine.fidelity", &self.engine.fidelity)
    }

    pub fn transfer_characteristic(&self) -> Result<TransferCharacteristic, ConfigError> {
        let source = self.transfer_source()?;
        Ok(transfer_curve(&self.transfer_grid()?, &source, &self.magnet_params()?, &self.pair()?)?)
    }

    pub fn synapse_state(&self) -> Result<DwSynapseState, ParamError> {
        let s = &self.synapse;
        let g_p = 1.0 / s.r_p_ohm;
        let g_ap = 1.0 / s.r_ap_ohm;
        let g_dw = s.r_dw_ohm.map_or(0.5 * (g_p + g_ap), |r| 1.0 / r);
        DwSynapseState::new(s.length_nm * NM, s.wall_width_nm * NM, g_p, g_ap, g_dw)
    }

    pub fn mobility_model(&self) -> Result<DwMobilityModel, ParamError> {
        let m = &self.mobility;
        let mut model = DwMobilityModel::through_point(
            m.calibration_current_density_a_per_m2,
            m.calibration_displacement_nm * NM,
            m.reference_pulse_ns * 1e-9,
            m.noise_std_rel,
        )?;
        if let Some(c) = &self.calibration {
            model.eta = c.eta_m_per_a_per_m2;
            model.validate()?;
        }
        model.mode = match m.mode.as_str() {
            "linear" => MobilityMode::Linear,
            "table" => {
                let text = match &m.table_path {
                    Some(p) => fs::read_to_string(p).map_err(|e| {
                        ParamError::invalid("mobility.table_path", format!("cannot read `{p}`: {e}"))
                    })?,
                    None => DEFAULT_MOBILITY_TABLE.to_string(),
                };
                MobilityMode::Table(text.parse::<CalibrationTable>()?)
            }
            other => {
                return Err(ParamError::invalid(
                    "mobility.mode",
                    format!("unknown mode `{other}` (expected linear or table)"),
                ))
            }
        };
        Ok(model)
    }

    pub fn timing(&self) -> Result<PulseTiming, ParamError> {
        PulseTiming::new(self.timing.pulse_width_ns * 1e-9, self.timing.rest_period_ns * 1e-9)
    }

    pub fn encoding(&self) -> Result<EncodingScheme, ParamError> {
        let e = &self.encoding;
        EncodingScheme::new(e.temperature_k, e.c_in_ff * 1e-15, e.v_max_mv * 1e-3, e.step_mv.map(|s| s * 1e-3))
    }

    /// Strip current at the amplitude cap, `v_max/R_P` (A).
    pub fn full_scale_current(&self) -> f64 {
        self.encoding.v_max_mv * 1e-3 / self.mtj.r_p_ohm
    }

    /// Largest matrix dimension the synapse supports.
    pub fn n_max(&self) -> Result<usize, ConfigError> {
        let strip = self.strip_with_length(1.0)?;
        let mobility = self.mobility_model()?;
        let timing = self.timing()?;
        let j = strip.current_density(self.full_scale_current());
        let (step, _) = mobility.displacement_stats(j, timing.pulse_width);
        Ok((self.synapse.length_nm * NM / step + 1e-9).floor() as usize)
    }

    /// Strip with its configured length, or `n_max` full-scale steps.
    fn strip_with_length(&self, default_length: f64) -> Result<HeavyMetalStrip, ParamError> {
        let s = &self.strip;
        HeavyMetalStrip::new(
            s.resistivity_ohm_m,
            s.width_nm * NM,
            s.thickness_nm * NM,
            s.length_nm.map_or(default_length, |l| l * NM),
            s.spin_hall_angle,
        )
    }

    /// Strip sized for matrices up to `n_max`.
    pub fn strip_for(&self, n_max: usize) -> Result<HeavyMetalStrip, ConfigError> {
        let probe = self.strip_with_length(1.0)?;
        let j = probe.current_density(self.full_scale_current());
        let (step, _) = self
            .mobility_model()?
            .displacement_stats(j, self.timing()?.pulse_width);
        Ok(self.strip_with_length(n_max as f64 * step)?)
    }

    /// Cost model for the report: a strip sized for `n_max` and the
    /// configured worst-case current.
    pub fn cost_model(&self, n_max: usize) -> Result<CostModel, ConfigError> {
        let strip = self.strip_for(n_max)?;
        let t = self.timing()?;
        let cost = CostModel {
            pulse_width: t.pulse_width,
            rest_period: t.rest_period,
            reset_time: self.timing.reset_time_ns * 1e-9,
            strip_resistance: strip_resistance(&strip),
            i_max: self
                .accounting
                .max_current_ua
                .map_or(self.full_scale_current(), |i| i * 1e-6),
            xi: self.accounting.crossbar_xi_aj * 1e-18,
        };
        cost.validate()?;
        Ok(cost)
    }

    /// The fitted linear region, from the calibration block if present.
    pub fn linear_fit(&self) -> Result<LinearFit, ConfigError> {
        if let Some(c) = &self.calibration {
            return Ok(LinearFit {
                kappa: c.kappa_s_per_v,
                delta: c.delta_v,
                g_ap: c.g_ap_s,
                window_lo: c.window_lo_v,
                window_hi: c.window_hi_v,
                residual: 0.0,
                kappa_std: 0.0,
                delta_std: 0.0,
            });
        }
        let curve = self.transfer_characteristic()?;
        Ok(fit_linear_region(&curve, &self.fit_policy())?)
    }

    pub fn accelerator(&self) -> Result<Accelerator, ConfigError> {
        let fit = self.linear_fit()?;
        self.accelerator_with_fit(fit)
    }

    pub fn accelerator_with_fit(&self, fit: LinearFit) -> Result<Accelerator, ConfigError> {
        let params = self.magnet_params()?;
        let pair = self.pair()?;
        let model = match self.transfer_source()? {
            TransferSource::Analytic => TransferModel::Analytic(params.landscape_constants()?),
            src @ TransferSource::Sllg(_) => {
                TransferModel::Tabulated(transfer_curve(&self.transfer_grid()?, &src, &params, &pair)?)
            }
        };
        let n_max = self.n_max()?;
        let strip = self.strip_for(n_max)?;
        let encoding = self.encoding()?;
        let multiplier = MultiplierCircuit::new(pair, model, strip_resistance(&strip), fit, encoding.v_max)?;
        let synapse = self.synapse_state()?;
        let r = &self.readout;
        let readout = ReadoutCircuit::for_synapse(&synapse, r.g0_ratio, r.ratio_min, r.max_sense_current_ua * 1e-6)?;
        let unit = MacUnit {
            multiplier,
            strip,
            synapse,
            mobility: self.mobility_model()?,
            timing: self.timing()?,
            readout,
        };
        let mut accel = Accelerator::new(
            unit,
            encoding,
            self.full_scale_current(),
            self.timing.reset_time_ns * 1e-9,
            self.accounting.crossbar_xi_aj * 1e-18,
        )?;
        if let Some(c) = &self.calibration {
            accel.x_unit = c.decode_unit_m;
        }
        Ok(accel)
    }

    /// Calibration block for the current configuration.
    pub fn calibrate(&self) -> Result<CalibrationSection, ConfigError> {
        let uncalibrated = Self {
            calibration: None,
            ..self.clone()
        };
        let fit = uncalibrated.linear_fit()?;
        let accel = uncalibrated.accelerator_with_fit(fit)?;
        Ok(CalibrationSection {
            kappa_s_per_v: fit.kappa,
            delta_v: fit.delta,
            g_ap_s: fit.g_ap,
            window_lo_v: fit.window_lo,
            window_hi_v: fit.window_hi,
            eta_m_per_a_per_m2: accel.unit.mobility.eta,
            decode_unit_m: accel.x_unit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = SimulationConfig::from_toml_str("", "<empty>").unwrap();
        assert_eq!(cfg, SimulationConfig::default());
        let got = cfg.magnet_params().unwrap().landscape_constants().unwrap();
        let want = MagnetParams::nominal().landscape_constants().unwrap();
        assert_relative_eq!(got.big_gamma, want.big_gamma, max_relative = 1e-12);
        assert_relative_eq!(got.small_gamma, want.small_gamma, max_relative = 1e-9);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = SimulationConfig::default();
        let back = SimulationConfig::from_toml_str(&cfg.to_toml(), "<rt>").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_rejected_with_location() {
        let err = SimulationConfig::from_toml_str("[magnet]\ndamping = 0.1\nbogus_key = 3\n", "cfg.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cfg.toml") && msg.contains("bogus_key"), "{msg}");
        assert!(msg.contains("line 3") || msg.contains("3 |"), "{msg}");
    }

    #[test]
    fn invariant_violations_rejected() {
        assert!(SimulationConfig::from_toml_str("[mtj]\nr_p_ohm = 3000\n", "x").is_err());
        assert!(SimulationConfig::from_toml_str("[magnet]\ndemag_nxx = 0.9\n", "x").is_err());
        assert!(SimulationConfig::from_toml_str("[engine]\nfidelity = \"fuzzy\"\n", "x").is_err());
        assert!(SimulationConfig::from_toml_str("[sllg]\ntrajectories = 0\n", "x").is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = SimulationConfig::from_path(Path::new("/nonexistent/spinmac.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/spinmac.toml"));
    }

    #[test]
    fn derived_sizes() {
        let cfg = SimulationConfig::default();
        assert_eq!(cfg.n_max().unwrap(), 17);
        let strip = cfg.strip_for(17).unwrap();
        assert_relative_eq!(strip_resistance(&strip), 816.0, max_relative = 1e-12);
        assert_relative_eq!(cfg.full_scale_current(), 50e-6, max_relative = 1e-12);
        let enc = cfg.encoding().unwrap();
        assert_eq!(enc.n_max, 12);
    }

    #[test]
    fn calibration_block_round_trip() {
        let cfg = SimulationConfig::default();
        let cal = cfg.calibrate().unwrap();
        let merged = SimulationConfig {
            calibration: Some(cal.clone()),
            ..cfg.clone()
        };
        let text = merged.to_toml();
        assert!(text.contains("[calibration]"));
        let back = SimulationConfig::from_toml_str(&text, "<cal>").unwrap();
        let a = cfg.accelerator().unwrap();
        let b = back.accelerator().unwrap();
        assert_eq!(a.x_unit, b.x_unit);
        assert_eq!(a.unit.multiplier.fit.kappa, b.unit.multiplier.fit.kappa);
    }

    #[test]
    fn pinned_gamma_shifts_delta() {
        let cfg = SimulationConfig::from_toml_str("[magnet]\npinned_gamma_v = -0.001\n", "x").unwrap();
        let cal = cfg.calibrate().unwrap();
        let c = cfg.magnet_params().unwrap().landscape_constants().unwrap();
        assert_relative_eq!(c.small_gamma, -0.001, max_relative = 1e-9);
        assert!((cal.delta_v - c.threshold_voltage()).abs() < 1e-3);
    }
}
