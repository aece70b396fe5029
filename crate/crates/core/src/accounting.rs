//! Energy, latency and footprint of the accelerator, and the comparison
//! with a resistive crossbar that needs one device per scalar product.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use crate::error::ParamError;

/// Dissipation terms left out of the totals.
pub const EXCLUDED_TERMS: [&str; 3] = [
    "strain-induced rotation of the multiplier soft layer (~1 aJ per operation)",
    "passive resistors and the readout branch",
    "viscous dissipation of domain-wall motion",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    /// One MAC unit, reused for every element.
    Sequential,
    /// One MAC unit per element of the product.
    Parallel,
}

impl FromStr for ExecutionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(ExecutionMode::Sequential),
            "parallel" | "parallel-array" => Ok(ExecutionMode::Parallel),
            other => Err(format!("unknown mode `{other}` (expected sequential or parallel)")),
        }
    }
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecutionMode::Sequential => "sequential",
            ExecutionMode::Parallel => "parallel",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    /// Drive pulse width (s).
    pub pulse_width: f64,
    /// Rest period after each pulse (s).
    pub rest_period: f64,
    /// Time to reset one synapse (s).
    pub reset_time: f64,
    /// Heavy-metal strip resistance (Ω).
    pub strip_resistance: f64,
    /// Largest strip current of a single pulse (A).
    pub i_max: f64,
    /// Largest energy of one crossbar device per scalar product (J).
    pub xi: f64,
}

impl CostModel {
    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, v) in [
            ("timing.pulse_width", self.pulse_width),
            ("timing.rest_period", self.rest_period),
            ("strip.resistance", self.strip_resistance),
            ("accounting.max_current", self.i_max),
            ("accounting.crossbar_xi", self.xi),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ParamError::invalid(name, "must be positive"));
            }
        }
        if !(self.reset_time >= 0.0) {
            return Err(ParamError::invalid("timing.reset_time", "must be >= 0"));
        }
        Ok(())
    }

    pub fn per_mac_latency(&self) -> f64 {
        self.pulse_width + self.rest_period
    }

    /// Worst-case energy of one MAC (J).
    pub fn worst_mac_energy(&self) -> f64 {
        energy_per_mac(self.i_max, self.strip_resistance, self.pulse_width)
    }
}

/// Strip dissipation of one pulse, `I²·R·Δt` (J).
pub fn energy_per_mac(current: f64, resistance: f64, pulse_width: f64) -> f64 {
    current * current * resistance * pulse_width
}

/// Sum of `I²·R·Δt` over a trace of pulse currents (J).
pub fn actual_run_energy(currents: &[f64], resistance: f64, pulse_width: f64) -> f64 {
    currents
        .iter()
        .map(|&i| energy_per_mac(i, resistance, pulse_width))
        .sum()
}

/// Wall-clock time to produce an `n × n` product (s).
pub fn latency(n: usize, mode: ExecutionMode, cost: &CostModel) -> f64 {
    let n = n as f64;
    match mode {
        ExecutionMode::Sequential => n.powi(3) * cost.per_mac_latency() + n * n * cost.reset_time,
        ExecutionMode::Parallel => n * cost.per_mac_latency() + cost.reset_time,
    }
}

/// Devices in an array that produces the whole product at once: one
/// multiplier and one accumulator per element.
pub fn device_count(n: usize) -> u64 {
    2 * (n as u64).pow(2)
}

pub fn crossbar_device_count(n: usize) -> u64 {
    (n as u64).pow(3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossbarComparison {
    pub n: usize,
    pub n_max: usize,
    pub devices: u64,
    pub crossbar_devices: u64,
    /// Worst-case energy of the full product on this architecture (J).
    pub energy: f64,
    /// Crossbar energy `Ξ·N³` (J).
    pub crossbar_energy: f64,
    /// `Ξ` at which both energies match (J).
    pub breakeven_xi: f64,
    pub xi: f64,
    pub latency_parallel: f64,
    pub latency_sequential: f64,
    pub nonvolatile: bool,
    pub crossbar_nonvolatile: bool,
}

impl CrossbarComparison {
    pub const CSV_HEADER: &'static str = "n,n_max,devices,crossbar_devices,energy_j,crossbar_energy_j,\
breakeven_xi_j,xi_j,latency_parallel_s,latency_sequential_s,nonvolatile,crossbar_nonvolatile";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{},{}",
            self.n,
            self.n_max,
            self.devices,
            self.crossbar_devices,
            self.energy,
            self.crossbar_energy,
            self.breakeven_xi,
            self.xi,
            self.latency_parallel,
            self.latency_sequential,
            self.nonvolatile,
            self.crossbar_nonvolatile
        )
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n = {}", self.n)?;
        writeln!(w, "n_max = {}", self.n_max)?;
        writeln!(w, "devices = {}", self.devices)?;
        writeln!(w, "crossbar_devices = {}", self.crossbar_devices)?;
        writeln!(w, "energy_j = {:.6e}", self.energy)?;
        writeln!(w, "crossbar_energy_j = {:.6e}", self.crossbar_energy)?;
        writeln!(w, "breakeven_xi_aj = {:.6}", self.breakeven_xi * 1e18)?;
        writeln!(w, "xi_aj = {:.6}", self.xi * 1e18)?;
        writeln!(w, "latency_parallel_ns = {:.6}", self.latency_parallel * 1e9)?;
        writeln!(w, "latency_sequential_ns = {:.6}", self.latency_sequential * 1e9)?;
        writeln!(w, "nonvolatile = {}", self.nonvolatile)?;
        writeln!(w, "crossbar_nonvolatile = {}", self.crossbar_nonvolatile)?;
        for term in EXCLUDED_TERMS {
            writeln!(w, "excluded = {term}")?;
        }
        Ok(())
    }
}

/// Compares an `n × n` product against a crossbar whose devices each
/// dissipate up to `cost.xi` per scalar product.
pub fn crossbar_compare(n: usize, n_max: usize, cost: &CostModel) -> CrossbarComparison {
    let macs = (n as f64).powi(3);
    let per_mac = cost.worst_mac_energy();
    CrossbarComparison {
        n,
        n_max,
        devices: device_count(n),
        crossbar_devices: crossbar_device_count(n),
        energy: per_mac * macs,
        crossbar_energy: cost.xi * macs,
        breakeven_xi: per_mac,
        xi: cost.xi,
        latency_parallel: latency(n, ExecutionMode::Parallel, cost),
        latency_sequential: latency(n, ExecutionMode::Sequential, cost),
        nonvolatile: true,
        crossbar_nonvolatile: false,
    }
}
