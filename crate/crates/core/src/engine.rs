//! Integer matrix multiplication through the device pipeline.
//!
//! Each element `c_ij` is produced by one MAC unit: for `m = 1..N` the pair
//! `(a_im, b_mj)` is encoded as two voltages, the multiplier turns them
//! into a current pulse, the pulse moves the synapse wall, and after the
//! last pulse the readout converts the wall position back into a number.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::accounting::{self, CostModel, ExecutionMode};
use crate::error::{EngineError, ParamError};
use crate::magnet::thermal_energy;
use crate::multiplier::{multiplier_output, Fidelity, MultiplierCircuit};
use crate::readout::{self, CrossbarColumn, CrossbarRecovery, NonvolatilityReport, ReadoutCircuit, ReadoutPath};
use crate::rng;
use crate::synapse::{apply_pulse, reset, DwMobilityModel, DwSynapseState, HeavyMetalStrip, PulseTiming};

/// RNG domain of the synapse noise, kept apart from the sLLG grid domains.
pub const SYNAPSE_DOMAIN: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerMatrix {
    n: usize,
    data: Vec<i64>,
}

impl IntegerMatrix {
    pub fn new(n: usize, data: Vec<i64>) -> Result<Self, EngineError> {
        if n == 0 {
            return Err(EngineError::Dimension("matrix dimension must be at least 1".into()));
        }
        if data.len() != n * n {
            return Err(EngineError::Dimension(format!(
                "expected {} entries for N = {n}, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self, EngineError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(EngineError::Dimension("matrix must be square".into()));
        }
        Self::new(n, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vec<i64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.data
    }
}

impl FromStr for IntegerMatrix {
    type Err = EngineError;

    /// First line `N`, then `N` rows of `N` whitespace-separated integers.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| EngineError::Parse("empty matrix file".into()))?;
        let n: usize = first
            .trim()
            .parse()
            .map_err(|_| EngineError::Parse(format!("line 1: expected N, got `{}`", first.trim())))?;
        let mut data = Vec::with_capacity(n * n);
        let mut rows = 0;
        for (k, line) in lines {
            let row = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<i64>()
                        .map_err(|_| EngineError::Parse(format!("line {}: `{t}` is not an integer", k + 1)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != n {
                return Err(EngineError::Parse(format!(
                    "line {}: expected {n} entries, got {}",
                    k + 1,
                    row.len()
                )));
            }
            data.extend(row);
            rows += 1;
        }
        if rows != n {
            return Err(EngineError::Parse(format!("expected {n} rows, got {rows}")));
        }
        Self::new(n, data)
    }
}

impl fmt::Display for IntegerMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.n)?;
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Exact integer product by the textbook triple loop.
pub fn oracle_matmul(a: &IntegerMatrix, b: &IntegerMatrix) -> Result<IntegerMatrix, EngineError> {
    if a.n != b.n {
        return Err(EngineError::Dimension(format!("{}×{} times {}×{}", a.n, a.n, b.n, b.n)));
    }
    let n = a.n;
    let mut c = vec![0i64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0i64;
            for m in 0..n {
                s += a.get(i, m) * b.get(m, j);
            }
            c[i * n + j] = s;
        }
    }
    IntegerMatrix::new(n, c)
}

/// Voltage encoding of non-negative integers as multiples of a step `ΔV`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodingScheme {
    /// Quantization step (V).
    pub step: f64,
    /// Amplitude cap (V).
    pub v_max: f64,
    /// Largest encodable integer.
    pub n_max: i64,
    /// Input capacitance (F).
    pub c_in: f64,
    /// Temperature (K).
    pub temperature: f64,
}

/// Smallest step distinguishable above thermal voltage noise,
/// `2·√(kT/C_in)`.
pub fn thermal_step(temperature: f64, c_in: f64) -> f64 {
    2.0 * (thermal_energy(temperature) / c_in).sqrt()
}

impl EncodingScheme {
    /// Uses the thermal minimum step unless `step` is given.
    pub fn new(temperature: f64, c_in: f64, v_max: f64, step: Option<f64>) -> Result<Self, ParamError> {
        if !(c_in > 0.0 && temperature >= 0.0 && v_max > 0.0) {
            return Err(ParamError::invalid("encoding", "need C_in > 0, T >= 0, v_max > 0"));
        }
        let floor = thermal_step(temperature, c_in);
        let step = step.unwrap_or(floor);
        if !(step > 0.0 && step >= floor * (1.0 - 1e-12)) {
            return Err(ParamError::invalid(
                "encoding.step",
                format!("step must be >= 2·sqrt(kT/C_in) = {floor:.4e} V"),
            ));
        }
        let n_max = (v_max / step + 1e-9).floor() as i64;
        if n_max < 1 {
            return Err(ParamError::invalid("encoding.v_max", "cap is below one step"));
        }
        Ok(Self {
            step,
            v_max,
            n_max,
            c_in,
            temperature,
        })
    }

    /// Smallest integer accepted at `fidelity`: 0 is only meaningful for the
    /// ideal product law.
    pub fn n_min(&self, fidelity: Fidelity) -> i64 {
        if fidelity == Fidelity::Ideal {
            0
        } else {
            1
        }
    }

    pub fn encode(&self, n: i64, fidelity: Fidelity) -> Option<f64> {
        (self.n_min(fidelity)..=self.n_max)
            .contains(&n)
            .then_some(n as f64 * self.step)
    }
}

/// One multiplier, strip, synapse and readout.
#[derive(Debug, Clone, PartialEq)]
pub struct MacUnit {
    pub multiplier: MultiplierCircuit,
    pub strip: HeavyMetalStrip,
    pub synapse: DwSynapseState,
    pub mobility: DwMobilityModel,
    pub timing: PulseTiming,
    pub readout: ReadoutCircuit,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ElementResult {
    /// Decoded real value of `c_ij`.
    pub value: f64,
    pub saturated: bool,
    /// Pulses whose gate voltage fell outside the linear window.
    pub out_of_window: usize,
    /// Strip current of each pulse used for dissipation, `V_in2/R_P` (A).
    pub dissipation_currents: Vec<f64>,
    /// Current that actually drove the wall on each pulse (A).
    pub drive_currents: Vec<f64>,
}

/// A configured accelerator: the MAC unit template plus everything derived
/// from it once.
#[derive(Debug, Clone, PartialEq)]
pub struct Accelerator {
    pub unit: MacUnit,
    pub encoding: EncodingScheme,
    /// Largest supported matrix dimension.
    pub n_max: usize,
    /// Mean wall travel of a full-scale pulse (m).
    pub full_scale_step: f64,
    /// Wall travel of one unit product through the ideal pipeline (m).
    pub x_unit: f64,
    pub cost: CostModel,
}

impl Accelerator {
    /// `full_scale_current` is the strip current at the amplitude cap, which
    /// fixes the largest per-pulse step and hence `N_max`.
    pub fn new(
        unit: MacUnit,
        encoding: EncodingScheme,
        full_scale_current: f64,
        reset_time: f64,
        xi: f64,
    ) -> Result<Self, EngineError> {
        unit.mobility.validate()?;
        let j = unit.strip.current_density(full_scale_current);
        let (step, _) = unit.mobility.displacement_stats(j, unit.timing.pulse_width);
        if !(step > 0.0) {
            return Err(ParamError::invalid("mobility", "full-scale pulse does not move the wall").into());
        }
        let n_max = (unit.synapse.length / step + 1e-9).floor() as usize;
        if n_max == 0 {
            return Err(ParamError::invalid("synapse.length", "shorter than one full-scale step").into());
        }
        if n_max as f64 * step > unit.synapse.x_max() * (1.0 + 1e-9) {
            return Err(ParamError::invalid(
                "synapse.wall_width",
                "N_max full-scale steps do not fit in L − w",
            )
            .into());
        }
        if unit.strip.length < n_max as f64 * step * (1.0 - 1e-9) {
            return Err(ParamError::invalid(
                "strip.length",
                format!("strip must cover N_max = {n_max} full-scale steps of {:.1} nm", step * 1e9),
            )
            .into());
        }
        let r_p = unit.multiplier.pair.r_p;
        let cost = CostModel {
            pulse_width: unit.timing.pulse_width,
            rest_period: unit.timing.rest_period,
            reset_time,
            strip_resistance: crate::synapse::strip_resistance(&unit.strip),
            i_max: encoding.n_max as f64 * encoding.step / r_p,
            xi,
        };
        cost.validate()?;
        let mut accel = Self {
            unit,
            encoding,
            n_max,
            full_scale_step: step,
            x_unit: 1.0,
            cost,
        };
        let mut unit = accel.unit.clone();
        let mut rng = rng::stream(0, SYNAPSE_DOMAIN, 0);
        let unit_travel = accel.compute_element(&mut unit, &[1], &[1], Fidelity::Ideal, false, &mut rng)?;
        if !(unit_travel.value > 0.0) {
            return Err(ParamError::invalid("decode", "unit product does not move the wall").into());
        }
        accel.x_unit = unit_travel.value;
        Ok(accel)
    }

    /// Product current of one unit pair, `|κ|·ΔV²` (A).
    pub fn unit_current(&self) -> f64 {
        self.unit.multiplier.fit.kappa.abs() * self.encoding.step.powi(2)
    }

    fn encode(&self, n: i64, fidelity: Fidelity, row: usize, col: usize) -> Result<f64, EngineError> {
        self.encoding
            .encode(n, fidelity)
            .ok_or(EngineError::OutOfRange {
                value: n,
                row,
                col,
                min: self.encoding.n_min(fidelity),
                max: self.encoding.n_max,
            })
    }

    /// Drives the pulses of one row·column product into `unit.synapse`,
    /// starting from a reset wall, without reading it out.
    fn accumulate<R: Rng + ?Sized>(
        &self,
        unit: &mut MacUnit,
        row: &[i64],
        col: &[i64],
        fidelity: Fidelity,
        noisy: bool,
        rng: &mut R,
    ) -> Result<ElementResult, EngineError> {
        if row.len() != col.len() {
            return Err(EngineError::Dimension(format!(
                "row has {} entries, column has {}",
                row.len(),
                col.len()
            )));
        }
        reset(&mut unit.synapse);
        let sign = self.unit.multiplier.fit.kappa.signum();
        let r_p = unit.multiplier.pair.r_p;
        let mut res = ElementResult::default();
        for (m, (&a, &b)) in row.iter().zip(col).enumerate() {
            let v1 = sign * self.encode(a, fidelity, 0, m)?;
            let v2 = self.encode(b, fidelity, m, 0)?;
            let out = multiplier_output(v1, v2, &unit.multiplier, fidelity)?;
            if out.out_of_window {
                res.out_of_window += 1;
            }
            let drive = out.current.abs();
            let pulse = apply_pulse(
                &mut unit.synapse,
                drive,
                &unit.strip,
                &unit.mobility,
                &unit.timing,
                noisy,
                rng,
            )?;
            res.saturated |= pulse.clipped && unit.synapse.saturated;
            res.dissipation_currents.push(v2 / r_p);
            res.drive_currents.push(drive);
        }
        Ok(res)
    }

    fn readout_path(fidelity: Fidelity) -> ReadoutPath {
        if fidelity == Fidelity::Ideal {
            ReadoutPath::Direct
        } else {
            ReadoutPath::Sense
        }
    }

    /// Computes one element on `unit`, which is reset before and after.
    pub fn compute_element<R: Rng + ?Sized>(
        &self,
        unit: &mut MacUnit,
        row: &[i64],
        col: &[i64],
        fidelity: Fidelity,
        noisy: bool,
        rng: &mut R,
    ) -> Result<ElementResult, EngineError> {
        let mut res = self.accumulate(unit, row, col, fidelity, noisy, rng)?;
        res.value = readout::read_synapse(&unit.synapse, &unit.readout, Self::readout_path(fidelity), self.x_unit);
        reset(&mut unit.synapse);
        Ok(res)
    }

    fn check_operands(&self, a: &IntegerMatrix, b: &IntegerMatrix, fidelity: Fidelity) -> Result<(), EngineError> {
        if a.n != b.n {
            return Err(EngineError::Dimension(format!("{}×{} times {}×{}", a.n, a.n, b.n, b.n)));
        }
        if a.n > self.n_max {
            return Err(EngineError::TooLarge {
                n: a.n,
                n_max: self.n_max,
                length_nm: self.unit.synapse.length * 1e9,
                step_nm: self.full_scale_step * 1e9,
            });
        }
        let (lo, hi) = (self.encoding.n_min(fidelity), self.encoding.n_max);
        for m in [a, b] {
            for i in 0..m.n {
                for j in 0..m.n {
                    let v = m.get(i, j);
                    if !(lo..=hi).contains(&v) {
                        return Err(EngineError::OutOfRange {
                            value: v,
                            row: i,
                            col: j,
                            min: lo,
                            max: hi,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Full product `A·B`. Element `(i, j)` always draws from stream
    /// `(seed, SYNAPSE_DOMAIN, i·N + j)`, so both modes give identical
    /// reports.
    pub fn matmul(
        &self,
        a: &IntegerMatrix,
        b: &IntegerMatrix,
        mode: ExecutionMode,
        fidelity: Fidelity,
        noisy: bool,
        seed: u64,
    ) -> Result<RunReport, EngineError> {
        self.check_operands(a, b, fidelity)?;
        let n = a.n;
        let cols: Vec<Vec<i64>> = (0..n).map(|j| b.column(j)).collect();
        let element = |unit: &mut MacUnit, idx: usize| {
            let (i, j) = (idx / n, idx % n);
            let mut r = rng::stream(seed, SYNAPSE_DOMAIN, idx as u64);
            self.compute_element(unit, a.row(i), &cols[j], fidelity, noisy, &mut r)
        };
        let elements: Vec<ElementResult> = match mode {
            ExecutionMode::Sequential => {
                let mut unit = self.unit.clone();
                (0..n * n)
                    .map(|idx| element(&mut unit, idx))
                    .collect::<Result<_, _>>()?
            }
            ExecutionMode::Parallel => (0..n * n)
                .into_par_iter()
                .map(|idx| element(&mut self.unit.clone(), idx))
                .collect::<Result<_, _>>()?,
        };
        let oracle = oracle_matmul(a, b)?;
        let r = self.cost.strip_resistance;
        let dt = self.cost.pulse_width;
        let mut diagnostics = self.unit.readout.diagnostics();
        let saturated = elements.iter().filter(|e| e.saturated).count();
        if saturated > 0 {
            diagnostics.push(format!("{saturated} element(s) saturated the synapse"));
        }
        let oow: usize = elements.iter().map(|e| e.out_of_window).sum();
        if oow > 0 {
            diagnostics.push(format!("{oow} pulse(s) outside the multiplier linear window"));
        }
        Ok(RunReport {
            n,
            mode,
            fidelity,
            noisy,
            seed,
            decoded: elements.iter().map(|e| e.value).collect(),
            rounded: elements.iter().map(|e| e.value.round_ties_even() as i64).collect(),
            oracle,
            saturated: elements.iter().map(|e| e.saturated).collect(),
            out_of_window: elements.iter().map(|e| e.out_of_window).collect(),
            energy: elements
                .iter()
                .map(|e| accounting::actual_run_energy(&e.dissipation_currents, r, dt))
                .collect(),
            worst_energy: self.cost.worst_mac_energy() * (n as f64).powi(3),
            latency: accounting::latency(n, mode, &self.cost),
            devices: match mode {
                ExecutionMode::Sequential => accounting::device_count(1),
                ExecutionMode::Parallel => accounting::device_count(n),
            },
            diagnostics,
        })
    }

    /// Accumulates every element, power-cycles each synapse and compares the
    /// decoded value before and after. Also reports the same test on a
    /// crossbar column holding the same products.
    pub fn nonvolatility(
        &self,
        a: &IntegerMatrix,
        b: &IntegerMatrix,
        fidelity: Fidelity,
        seed: u64,
    ) -> Result<(Vec<NonvolatilityReport>, Vec<CrossbarRecovery>), EngineError> {
        self.check_operands(a, b, fidelity)?;
        let n = a.n;
        let mut unit = self.unit.clone();
        let mut wall = Vec::with_capacity(n * n);
        let mut crossbar = Vec::with_capacity(n * n);
        for idx in 0..n * n {
            let (i, j) = (idx / n, idx % n);
            let mut r = rng::stream(seed, SYNAPSE_DOMAIN, idx as u64);
            let col = b.column(j);
            self.accumulate(&mut unit, a.row(i), &col, fidelity, false, &mut r)?;
            wall.push(readout::nonvolatility_check(&unit.synapse, &unit.readout, self.x_unit));
            reset(&mut unit.synapse);
            let column = CrossbarColumn {
                conductances: a.row(i).iter().map(|&v| v as f64 * 1e-6).collect(),
                inputs: col.iter().map(|&v| v as f64 * self.encoding.step).collect(),
            };
            crossbar.push(readout::crossbar_power_cycle(&column));
        }
        Ok((wall, crossbar))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub n: usize,
    pub mode: ExecutionMode,
    pub fidelity: Fidelity,
    pub noisy: bool,
    pub seed: u64,
    /// Decoded reals, row-major.
    pub decoded: Vec<f64>,
    /// Decoded values rounded to the nearest integer, ties to even.
    pub rounded: Vec<i64>,
    pub oracle: IntegerMatrix,
    pub saturated: Vec<bool>,
    pub out_of_window: Vec<usize>,
    /// Strip energy of each element (J).
    pub energy: Vec<f64>,
    /// Worst-case strip energy of the whole product (J).
    pub worst_energy: f64,
    /// Time to produce the product (s).
    pub latency: f64,
    pub devices: u64,
    pub diagnostics: Vec<String>,
}

impl RunReport {
    pub fn abs_error(&self, idx: usize) -> f64 {
        (self.decoded[idx] - self.oracle.as_slice()[idx] as f64).abs()
    }

    /// Signed error of each element, decoded minus oracle.
    pub fn bias(&self) -> Vec<f64> {
        self.decoded
            .iter()
            .zip(self.oracle.as_slice())
            .map(|(d, &o)| d - o as f64)
            .collect()
    }

    pub fn rounded_errors(&self) -> usize {
        self.rounded
            .iter()
            .zip(self.oracle.as_slice())
            .filter(|(r, o)| r != o)
            .count()
    }

    pub fn error_rate(&self) -> f64 {
        self.rounded_errors() as f64 / self.rounded.len() as f64
    }

    pub fn total_energy(&self) -> f64 {
        self.energy.iter().sum()
    }

    pub fn mean_abs_error(&self) -> f64 {
        (0..self.decoded.len()).map(|i| self.abs_error(i)).sum::<f64>() / self.decoded.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "row,col,decoded,rounded,oracle,abs_error,saturated,out_of_window_pulses,energy_j"
        )?;
        for idx in 0..self.decoded.len() {
            writeln!(
                w,
                "{},{},{:.9},{},{},{:.9},{},{},{:.6e}",
                idx / self.n,
                idx % self.n,
                self.decoded[idx],
                self.rounded[idx],
                self.oracle.as_slice()[idx],
                self.abs_error(idx),
                self.saturated[idx],
                self.out_of_window[idx],
                self.energy[idx]
            )?;
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n = {}", self.n)?;
        writeln!(w, "mode = {}", self.mode)?;
        writeln!(w, "fidelity = {}", self.fidelity)?;
        writeln!(w, "noise = {}", if self.noisy { "on" } else { "off" })?;
        writeln!(w, "seed = {}", self.seed)?;
        writeln!(w, "rounded_errors = {}", self.rounded_errors())?;
        writeln!(w, "error_rate = {:.6}", self.error_rate())?;
        writeln!(w, "mean_abs_error = {:.9}", self.mean_abs_error())?;
        writeln!(w, "saturated_elements = {}", self.saturated.iter().filter(|&&s| s).count())?;
        writeln!(w, "out_of_window_pulses = {}", self.out_of_window.iter().sum::<usize>())?;
        writeln!(w, "energy_j = {:.6e}", self.total_energy())?;
        writeln!(w, "worst_case_energy_j = {:.6e}", self.worst_energy)?;
        writeln!(w, "latency_ns = {:.6}", self.latency * 1e9)?;
        writeln!(w, "devices = {}", self.devices)?;
        for d in &self.diagnostics {
            writeln!(w, "diagnostic = {d}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimulationConfig;
    use approx::assert_relative_eq;

    fn accel() -> Accelerator {
        SimulationConfig::default().accelerator().unwrap()
    }

    fn m(rows: &[&[i64]]) -> IntegerMatrix {
        IntegerMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn encoding_examples() {
        let e = EncodingScheme::new(300.0, 1e-15, 0.05, None).unwrap();
        assert_relative_eq!(e.step, 4.07e-3, max_relative = 2e-3);
        assert_eq!(e.n_max, 12);
        assert!(e.encode(12, Fidelity::Exact).unwrap() <= 0.05);
        assert_relative_eq!(e.encode(12, Fidelity::Exact).unwrap(), 12.0 * e.step, max_relative = 1e-15);
        // The rounded 4 mV step sits below the thermal floor.
        assert!(EncodingScheme::new(300.0, 1e-15, 0.05, Some(4e-3)).is_err());
        assert_eq!(e.encode(0, Fidelity::Ideal), Some(0.0));
        assert_eq!(e.encode(0, Fidelity::Exact), None);
        assert_eq!(e.encode(13, Fidelity::Ideal), None);
        assert!(EncodingScheme::new(300.0, 1e-15, 0.05, Some(1e-3)).is_err());
    }

    #[test]
    fn matrix_text_round_trip() {
        let a = m(&[&[1, 2], &[3, 4]]);
        let text = a.to_string();
        assert_eq!(text, "2\n1 2\n3 4\n");
        assert_eq!(text.parse::<IntegerMatrix>().unwrap(), a);
        assert!("2\n1 2\n3\n".parse::<IntegerMatrix>().is_err());
        assert!("2\n1 2\n".parse::<IntegerMatrix>().is_err());
        assert!("x\n".parse::<IntegerMatrix>().is_err());
    }

    #[test]
    fn oracle_examples() {
        let a = m(&[&[3]]);
        let b = m(&[&[5]]);
        assert_eq!(oracle_matmul(&a, &b).unwrap().as_slice(), &[15]);
        let i2 = m(&[&[2, 0], &[0, 2]]);
        let x = m(&[&[1, 7], &[4, 9]]);
        assert_eq!(oracle_matmul(&i2, &x).unwrap(), m(&[&[2, 14], &[8, 18]]));
        assert!(oracle_matmul(&a, &x).is_err());
    }

    #[test]
    fn unit_product_calibrates_to_one() {
        let acc = accel();
        let mut unit = acc.unit.clone();
        let mut r = rng::stream(0, 0, 0);
        let e = acc.compute_element(&mut unit, &[1], &[1], Fidelity::Ideal, false, &mut r).unwrap();
        assert_relative_eq!(e.value, 1.0, epsilon = 1e-9);
        let e = acc
            .compute_element(&mut unit, &[3, 4], &[2, 5], Fidelity::Ideal, false, &mut r)
            .unwrap();
        assert_relative_eq!(e.value, 26.0, epsilon = 1e-9);
        assert_eq!(unit.synapse.x, 0.0);
    }

    #[test]
    fn exact_mode_bias_tracks_reference_current() {
        let acc = accel();
        let mut unit = acc.unit.clone();
        let mut r = rng::stream(0, 0, 0);
        let (row, col) = ([2, 5, 7], [3, 1, 4]);
        let e = acc.compute_element(&mut unit, &row, &col, Fidelity::Exact, false, &mut r).unwrap();
        let rs = acc.unit.multiplier.r_series;
        let r_ap = acc.unit.multiplier.pair.r_ap;
        let offset: f64 = col
            .iter()
            .map(|&b| b as f64 * acc.encoding.step / (rs + r_ap) / acc.unit_current())
            .sum();
        let bias = e.value - 43.0;
        assert!((bias - offset).abs() / offset < 0.05, "{bias} vs {offset}");
    }

    #[test]
    fn too_large_rejected_with_explanation() {
        let acc = accel();
        assert_eq!(acc.n_max, 17);
        let big = IntegerMatrix::new(18, vec![1; 18 * 18]).unwrap();
        let err = acc
            .matmul(&big, &big, ExecutionMode::Sequential, Fidelity::Ideal, false, 0)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2060") && msg.contains("120"), "{msg}");
    }

    #[test]
    fn zero_rejected_in_physical_modes() {
        let acc = accel();
        let a = m(&[&[1, 0], &[2, 3]]);
        let err = acc
            .matmul(&a, &a, ExecutionMode::Sequential, Fidelity::Exact, false, 0)
            .unwrap_err();
        assert!(matches!(err, EngineError::OutOfRange { value: 0, row: 0, col: 1, .. }));
        let ok = acc
            .matmul(&a, &a, ExecutionMode::Sequential, Fidelity::Ideal, false, 0)
            .unwrap();
        assert_eq!(ok.rounded_errors(), 0);
    }

    #[test]
    fn modes_agree_and_devices_differ() {
        let acc = accel();
        let a = m(&[&[1, 12, 5], &[7, 3, 9], &[2, 2, 11]]);
        let b = m(&[&[4, 6, 1], &[12, 8, 3], &[5, 10, 7]]);
        let s = acc
            .matmul(&a, &b, ExecutionMode::Sequential, Fidelity::ExactCompensated, true, 9)
            .unwrap();
        let p = acc
            .matmul(&a, &b, ExecutionMode::Parallel, Fidelity::ExactCompensated, true, 9)
            .unwrap();
        assert_eq!(s.decoded, p.decoded);
        assert_eq!(s.energy, p.energy);
        assert_eq!((s.devices, p.devices), (2, 18));
        let mut b1 = Vec::new();
        let mut b2 = Vec::new();
        s.write_csv(&mut b1).unwrap();
        acc.matmul(&a, &b, ExecutionMode::Sequential, Fidelity::ExactCompensated, true, 9)
            .unwrap()
            .write_csv(&mut b2)
            .unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn no_saturation_at_full_scale() {
        let acc = accel();
        let n = acc.n_max;
        let a = IntegerMatrix::new(n, vec![12; n * n]).unwrap();
        for fidelity in [Fidelity::Ideal, Fidelity::Exact, Fidelity::ExactCompensated] {
            let r = acc.matmul(&a, &a, ExecutionMode::Parallel, fidelity, false, 0).unwrap();
            assert!(r.saturated.iter().all(|&s| !s), "{fidelity}");
        }
    }

    #[test]
    fn worst_case_energy_is_tight_for_max_operands() {
        let acc = accel();
        let a = IntegerMatrix::new(3, vec![12; 9]).unwrap();
        let r = acc.matmul(&a, &a, ExecutionMode::Sequential, Fidelity::Exact, false, 0).unwrap();
        assert_relative_eq!(r.total_energy(), r.worst_energy, max_relative = 1e-12);
        let ones = IntegerMatrix::new(3, vec![1; 9]).unwrap();
        let r1 = acc.matmul(&ones, &ones, ExecutionMode::Sequential, Fidelity::Exact, false, 0).unwrap();
        assert_relative_eq!(r1.total_energy(), r.worst_energy / 144.0, max_relative = 1e-12);
    }

    #[test]
    fn power_cycle_keeps_products() {
        let acc = accel();
        let a = m(&[&[1, 2], &[3, 4]]);
        let (wall, crossbar) = acc.nonvolatility(&a, &a, Fidelity::ExactCompensated, 0).unwrap();
        assert!(wall.iter().all(|r| r.preserved));
        assert!(crossbar.iter().all(|r| !r.recoverable));
    }
}
