//! Composite readout: a source `V_s` drives the p-MTJ and a reference
//! conductance `A` into a shared sense conductor `G_0`, so the sense
//! current is proportional to `A − G_pMTJ` and hence to the accumulated sum.

use crate::error::ParamError;
use crate::synapse::{ab_constants, synapse_conductance, DwSynapseState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutCircuit {
    /// Source voltage (V).
    pub v_s: f64,
    /// Reference conductance `A` (S).
    pub a_ref: f64,
    /// Sense conductance (S).
    pub g0: f64,
    /// Smallest acceptable `G_0/A`.
    pub ratio_min: f64,
}

impl ReadoutCircuit {
    pub fn new(v_s: f64, a_ref: f64, g0: f64, ratio_min: f64) -> Result<Self, ParamError> {
        if !(v_s != 0.0 && v_s.is_finite()) {
            return Err(ParamError::invalid("readout.v_s", "must be non-zero"));
        }
        if !(a_ref > 0.0 && g0 > 0.0) {
            return Err(ParamError::invalid("readout", "A and G_0 must be positive"));
        }
        if !(ratio_min > 0.0) {
            return Err(ParamError::invalid("readout.ratio_min", "must be positive"));
        }
        Ok(Self {
            v_s,
            a_ref,
            g0,
            ratio_min,
        })
    }

    /// Sizes the circuit for a synapse: `A` from the synapse, `G_0 =
    /// g0_ratio·A`, and `V_s` so the sense current at full wall travel is
    /// `i_cap`.
    pub fn for_synapse(
        state: &DwSynapseState,
        g0_ratio: f64,
        ratio_min: f64,
        i_cap: f64,
    ) -> Result<Self, ParamError> {
        let (a, b) = ab_constants(state);
        if !(b > 0.0) {
            return Err(ParamError::invalid("synapse", "B must be positive"));
        }
        if !(i_cap > 0.0) {
            return Err(ParamError::invalid("readout.max_sense_current", "must be positive"));
        }
        Self::new(i_cap / (b * state.x_max()), a, g0_ratio * a, ratio_min)
    }

    /// Warnings about approximations this circuit degrades.
    pub fn diagnostics(&self) -> Vec<String> {
        let ratio = self.g0 / self.a_ref;
        if ratio < self.ratio_min {
            vec![format!(
                "G_0/A = {ratio:.3} is below {:.3}; sense current is no longer proportional to A − G",
                self.ratio_min
            )]
        } else {
            Vec::new()
        }
    }
}

/// Exact two-branch sense current
/// `−V_s·G·G_0/(G + G_0) + V_s·A·G_0/(A + G_0)` (A).
pub fn sense_current(g: f64, circuit: &ReadoutCircuit) -> f64 {
    let c = circuit;
    -c.v_s * g * c.g0 / (g + c.g0) + c.v_s * c.a_ref * c.g0 / (c.a_ref + c.g0)
}

/// Inverts [`sense_current`] for the p-MTJ conductance.
pub fn conductance_from_sense(current: f64, circuit: &ReadoutCircuit) -> f64 {
    let c = circuit;
    let k = c.v_s * c.a_ref * c.g0 / (c.a_ref + c.g0) - current;
    k * c.g0 / (c.v_s * c.g0 - k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutPath {
    /// Read the conductance from the device model.
    Direct,
    /// Measure the sense current and invert the circuit.
    Sense,
}

/// Accumulated product estimate `(A − G)/B / x_unit`, where `x_unit` is the
/// wall travel produced by one unit product.
pub fn decode_element(g: f64, ab: (f64, f64), x_unit: f64) -> f64 {
    (ab.0 - g) / ab.1 / x_unit
}

/// Decodes the value stored in a synapse through the chosen path.
pub fn read_synapse(
    state: &DwSynapseState,
    circuit: &ReadoutCircuit,
    path: ReadoutPath,
    x_unit: f64,
) -> f64 {
    let g_true = synapse_conductance(state);
    let g = match path {
        ReadoutPath::Direct => g_true,
        ReadoutPath::Sense => conductance_from_sense(sense_current(g_true, circuit), circuit),
    };
    decode_element(g, ab_constants(state), x_unit)
}

/// `V_s·(A − G)`, the large-`G_0` limit of the sense current.
pub fn sense_current_limit(g: f64, circuit: &ReadoutCircuit) -> f64 {
    circuit.v_s * (circuit.a_ref - g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonvolatilityReport {
    pub before: f64,
    pub after: f64,
    pub preserved: bool,
}

/// Powers the readout down and back up and decodes again.
///
/// The stored value is the wall position, which no source holds, so the
/// decode must come back bit-identical.
pub fn nonvolatility_check(
    state: &DwSynapseState,
    circuit: &ReadoutCircuit,
    x_unit: f64,
) -> NonvolatilityReport {
    let before = read_synapse(state, circuit, ReadoutPath::Sense, x_unit);
    let off = ReadoutCircuit {
        v_s: 0.0,
        ..*circuit
    };
    // With every source at zero no current flows and nothing moves the wall.
    let powered_off_current = sense_current(synapse_conductance(state), &off);
    debug_assert_eq!(powered_off_current, 0.0);
    let restored = *state;
    let after = read_synapse(&restored, circuit, ReadoutPath::Sense, x_unit);
    NonvolatilityReport {
        before,
        after,
        preserved: before.to_bits() == after.to_bits(),
    }
}

/// One output column of a resistive crossbar: stored conductances and the
/// input voltages currently applied to the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarColumn {
    pub conductances: Vec<f64>,
    pub inputs: Vec<f64>,
}

impl CrossbarColumn {
    /// Column current `Σ G_m·V_m` (A).
    pub fn output(&self) -> f64 {
        self.conductances
            .iter()
            .zip(&self.inputs)
            .map(|(g, v)| g * v)
            .sum()
    }

    /// Power cycle: the conductances are non-volatile, the row voltages are
    /// not.
    pub fn power_cycle(&mut self) {
        self.inputs.iter_mut().for_each(|v| *v = 0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossbarRecovery {
    pub before: f64,
    pub after: f64,
    pub recoverable: bool,
}

pub fn crossbar_power_cycle(column: &CrossbarColumn) -> CrossbarRecovery {
    let before = column.output();
    let mut c = column.clone();
    c.power_cycle();
    let after = c.output();
    CrossbarRecovery {
        before,
        after,
        recoverable: before.to_bits() == after.to_bits(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn synapse() -> DwSynapseState {
        DwSynapseState::new(2060e-9, 20e-9, 1e-3, 0.5e-3, 0.75e-3).unwrap()
    }

    fn circuit() -> ReadoutCircuit {
        ReadoutCircuit::for_synapse(&synapse(), 100.0, 100.0, 1e-6).unwrap()
    }

    #[test]
    fn balanced_bridge_is_silent() {
        let c = circuit();
        assert_eq!(sense_current(c.a_ref, &c), 0.0);
    }

    #[test]
    fn large_g0_limit() {
        let c = circuit();
        let g = 0.7e-3;
        let huge = ReadoutCircuit { g0: 1e9 * c.a_ref, ..c };
        assert_relative_eq!(sense_current(g, &huge), sense_current_limit(g, &c), max_relative = 1e-6);
        let rel = (sense_current(g, &c) - sense_current_limit(g, &c)).abs() / sense_current_limit(g, &c).abs();
        assert!(rel < 0.02, "{rel}");
    }

    #[test]
    fn full_travel_current_below_cap() {
        let mut s = synapse();
        let c = circuit();
        s.x = s.x_max();
        let i = sense_current(synapse_conductance(&s), &c);
        assert!(i > 0.0 && i <= 1e-6 * (1.0 + 1e-12));
    }

    #[test]
    fn monotone_in_conductance() {
        let c = circuit();
        let mut prev = f64::INFINITY;
        for k in 0..=100 {
            let g = 0.4e-3 + k as f64 * 0.7e-3 / 100.0;
            let i = sense_current(g, &c);
            assert!(i < prev);
            prev = i;
        }
    }

    #[test]
    fn inversion_round_trips() {
        let c = circuit();
        for g in [0.5e-3, 0.63e-3, 0.99e-3] {
            assert_relative_eq!(conductance_from_sense(sense_current(g, &c), &c), g, max_relative = 1e-10);
        }
    }

    #[test]
    fn decode_examples() {
        let s = synapse();
        let ab = ab_constants(&s);
        assert_eq!(decode_element(ab.0, ab, 1e-9), 0.0);
        let x = 345e-9;
        let x_unit = 5e-9;
        assert_relative_eq!(decode_element(ab.0 - ab.1 * x, ab, x_unit), 69.0, max_relative = 1e-9);
    }

    #[test]
    fn sense_and_direct_paths_agree() {
        let mut s = synapse();
        let c = circuit();
        s.x = 1234e-9;
        let d = read_synapse(&s, &c, ReadoutPath::Direct, 1e-9);
        let r = read_synapse(&s, &c, ReadoutPath::Sense, 1e-9);
        assert!((d - r).abs() / d < 0.02);
    }

    #[test]
    fn power_cycle_preserves_wall_but_not_crossbar() {
        let mut s = synapse();
        let c = circuit();
        s.x = 777e-9;
        let rep = nonvolatility_check(&s, &c, 7e-9);
        assert!(rep.preserved);
        s.x = 0.0;
        let rep = nonvolatility_check(&s, &c, 7e-9);
        assert!(rep.after.abs() < 1e-9 && rep.after.round_ties_even() == 0.0);

        let col = CrossbarColumn {
            conductances: vec![1e-3, 2e-3],
            inputs: vec![0.01, 0.02],
        };
        let rec = crossbar_power_cycle(&col);
        assert!(!rec.recoverable);
        assert_eq!(rec.after, 0.0);
    }

    #[test]
    fn ratio_diagnostic() {
        let c = circuit();
        assert!(c.diagnostics().is_empty());
        let weak = ReadoutCircuit { g0: 10.0 * c.a_ref, ..c };
        assert_eq!(weak.diagnostics().len(), 1);
    }
}
