//! Soft-layer magnetostatics of the straintronic MTJ.
//!
//! Axis convention: `x` is out of plane, `y` lies along the minor (hard)
//! axis of the ellipse and `z` along the major (easy) axis. The polar angle
//! `θ` is measured from `+z`, which is also the direction of the hard-layer
//! magnetization, so `θ = π` is the antiparallel rest state enforced by the
//! dipole field. The in-plane landscape is the `φ = 90°` cut.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::ParamError;

/// Vacuum permeability (T·m/A).
pub const MU0: f64 = 4.0e-7 * PI;
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Gyromagnetic ratio in field units, γ·μ0 (m/(A·s)).
pub const GYROMAGNETIC_RATIO: f64 = 2.211e5;

/// Converts a field in oersted to A/m.
pub fn oersted_to_a_per_m(oe: f64) -> f64 {
    oe * 1.0e3 / (4.0 * PI)
}

/// Thermal energy `kT` in joules.
pub fn thermal_energy(temperature: f64) -> f64 {
    BOLTZMANN * temperature
}

/// Elliptical soft layer: full axis lengths in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftLayerGeometry {
    major_axis: f64,
    minor_axis: f64,
    thickness: f64,
}

impl SoftLayerGeometry {
    pub fn new(major_axis: f64, minor_axis: f64, thickness: f64) -> Result<Self, ParamError> {
        for (name, v) in [
            ("major_axis", major_axis),
            ("minor_axis", minor_axis),
            ("thickness", thickness),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ParamError::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if major_axis < minor_axis || minor_axis < thickness {
            return Err(ParamError::invalid(
                "soft_layer",
                format!(
                    "axes must satisfy L >= W >= d (got L={major_axis:e}, W={minor_axis:e}, d={thickness:e})"
                ),
            ));
        }
        Ok(Self {
            major_axis,
            minor_axis,
            thickness,
        })
    }

    pub fn major_axis(&self) -> f64 {
        self.major_axis
    }

    pub fn minor_axis(&self) -> f64 {
        self.minor_axis
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    /// Volume of the elliptic cylinder, `π·L·W·d/4`.
    pub fn volume(&self) -> f64 {
        PI * self.major_axis * self.minor_axis * self.thickness / 4.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetMaterial {
    /// Saturation magnetization (A/m).
    pub saturation_magnetization: f64,
    /// Saturation magnetostriction (dimensionless).
    pub magnetostriction: f64,
    /// Young's modulus (Pa).
    pub youngs_modulus: f64,
    /// Gilbert damping.
    pub damping: f64,
}

impl MagnetMaterial {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.saturation_magnetization > 0.0) {
            return Err(ParamError::invalid("saturation_magnetization", "must be positive"));
        }
        if !(self.youngs_modulus > 0.0) {
            return Err(ParamError::invalid("youngs_modulus", "must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(ParamError::invalid("gilbert_damping", "must lie in (0, 1]"));
        }
        if !self.magnetostriction.is_finite() {
            return Err(ParamError::invalid("magnetostriction", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiezoStack {
    /// Piezoelectric coefficient (C/N).
    pub d33: f64,
    /// Piezoelectric film thickness (m).
    pub thickness: f64,
}

impl PiezoStack {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.thickness > 0.0) {
            return Err(ParamError::invalid("piezo.thickness", "must be positive"));
        }
        if !self.d33.is_finite() {
            return Err(ParamError::invalid("piezo.d33", "must be finite"));
        }
        Ok(())
    }
}

/// Dipole coupling field from the hard layer, pointing along `-z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleField {
    /// Magnitude in A/m.
    pub magnitude: f64,
}

impl DipoleField {
    pub fn from_oersted(oe: f64) -> Result<Self, ParamError> {
        Self::new(oersted_to_a_per_m(oe))
    }

    pub fn new(magnitude: f64) -> Result<Self, ParamError> {
        if !(magnitude >= 0.0 && magnitude.is_finite()) {
            return Err(ParamError::invalid("dipole_field", "must be finite and >= 0"));
        }
        Ok(Self { magnitude })
    }
}

/// Demagnetization factors along the device axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemagFactors {
    pub nxx: f64,
    pub nyy: f64,
    pub nzz: f64,
}

impl DemagFactors {
    pub fn new(nxx: f64, nyy: f64, nzz: f64) -> Result<Self, ParamError> {
        let f = Self { nxx, nyy, nzz };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, v) in [("nxx", self.nxx), ("nyy", self.nyy), ("nzz", self.nzz)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ParamError::invalid(name, format!("demag factor {v} outside [0, 1]")));
            }
        }
        let sum = self.nxx + self.nyy + self.nzz;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ParamError::invalid("demag", format!("factors sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Keeps `N_xx` and the in-plane sum fixed and moves `N_zz − N_yy` to
    /// `difference`.
    pub fn with_in_plane_difference(&self, difference: f64) -> Result<Self, ParamError> {
        let mean = 0.5 * (self.nyy + self.nzz);
        Self::new(self.nxx, mean - 0.5 * difference, mean + 0.5 * difference)
    }
}

/// Carlson's symmetric elliptic integral of the second kind, `R_D(x, y, z)`.
///
/// Duplication algorithm; `x, y ≥ 0` with at most one zero, `z > 0`.
pub fn carlson_rd(x: f64, y: f64, z: f64) -> f64 {
    const ERRTOL: f64 = 0.0015;
    const C1: f64 = 3.0 / 14.0;
    const C2: f64 = 1.0 / 6.0;
    const C3: f64 = 9.0 / 22.0;
    const C4: f64 = 3.0 / 26.0;
    const C5: f64 = 0.25 * C3;
    const C6: f64 = 1.5 * C4;

    let (mut xt, mut yt, mut zt) = (x, y, z);
    let mut sum = 0.0;
    let mut fac = 1.0;
    loop {
        let (sx, sy, sz) = (xt.sqrt(), yt.sqrt(), zt.sqrt());
        let lambda = sx * (sy + sz) + sy * sz;
        sum += fac / (sz * (zt + lambda));
        fac *= 0.25;
        xt = 0.25 * (xt + lambda);
        yt = 0.25 * (yt + lambda);
        zt = 0.25 * (zt + lambda);
        let ave = 0.2 * (xt + yt + 3.0 * zt);
        let dx = (ave - xt) / ave;
        let dy = (ave - yt) / ave;
        let dz = (ave - zt) / ave;
        if dx.abs().max(dy.abs()).max(dz.abs()) < ERRTOL {
            let ea = dx * dy;
            let eb = dz * dz;
            let ec = ea - eb;
            let ed = ea - 6.0 * eb;
            let ee = ed + ec + ec;
            return 3.0 * sum
                + fac
                    * (1.0 + ed * (-C1 + C5 * ed - C6 * dz * ee)
                        + dz * (C2 * ee + dz * (-C3 * ec + dz * C4 * ea)))
                    / (ave * ave.sqrt());
        }
    }
}

/// Demagnetization factors of the ellipsoid inscribed in the soft layer.
///
/// Uses the exact ellipsoid integrals `N_i = (abc/3)·R_D(a_j², a_k², a_i²)`
/// with semi-axes `d/2`, `W/2`, `L/2`. For the thin elliptical disks used
/// here this matches the thin-film series within a few percent and keeps the
/// sum rule exact.
pub fn compute_demag_factors(geom: &SoftLayerGeometry) -> Result<DemagFactors, ParamError> {
    // Normalized to the major semi-axis so R_D sees O(1) arguments.
    let a = 1.0;
    let sx = geom.thickness / geom.major_axis;
    let sy = geom.minor_axis / geom.major_axis;
    let (x2, y2, z2) = (sx * sx, sy * sy, a * a);
    let pref = sx * sy * a / 3.0;
    let nxx = pref * carlson_rd(y2, z2, x2);
    let nyy = pref * carlson_rd(x2, z2, y2);
    let nzz = pref * carlson_rd(x2, y2, z2);
    DemagFactors::new(nxx, nyy, nzz)
}

/// Uniaxial stress transferred to the soft layer, `σ = Y·d33·V_G/T`.
pub fn stress_from_gate(v_gate: f64, mat: &MagnetMaterial, pz: &PiezoStack) -> f64 {
    mat.youngs_modulus * pz.d33 * v_gate / pz.thickness
}

/// `Γ` and `γ` of the steady-state relation `cos θ_ss = Γ/(V_G − γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapeConstants {
    /// Threshold voltage scale set by the dipole field (V).
    pub big_gamma: f64,
    /// Shape-anisotropy offset (V).
    pub small_gamma: f64,
}

impl LandscapeConstants {
    /// Gate voltage where the antiparallel state first loses stability,
    /// `γ − Γ`. This is the `δ` of the linearized transfer law.
    pub fn threshold_voltage(&self) -> f64 {
        self.small_gamma - self.big_gamma
    }

    /// Closed-form slope of the linearization around the threshold,
    /// `κ = −1/(2·R_AP·Γ)` in S/V.
    pub fn linearized_kappa(&self, r_ap: f64) -> f64 {
        -1.0 / (2.0 * r_ap * self.big_gamma)
    }
}

/// Analytic steady state of the in-plane landscape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteadyAngle {
    /// Tilted minimum at the given polar angle (rad).
    Tilted(f64),
    /// No tilted minimum exists; the magnetization rests at `θ = π`.
    Collinear,
}

impl SteadyAngle {
    pub fn theta(&self) -> f64 {
        match *self {
            SteadyAngle::Tilted(t) => t,
            SteadyAngle::Collinear => PI,
        }
    }
}

/// Steady-state angle from `cos θ_ss = Γ/(V_G − γ)`.
///
/// Only the branch where this stationary point is a minimum
/// (`V_G − γ ≤ −Γ`) yields a tilted state; otherwise the antiparallel state
/// at `θ = π` is the minimum.
pub fn theta_ss_analytic(v_gate: f64, consts: &LandscapeConstants) -> SteadyAngle {
    let denom = v_gate - consts.small_gamma;
    if denom >= 0.0 {
        return SteadyAngle::Collinear;
    }
    let c = consts.big_gamma / denom;
    if c.abs() <= 1.0 {
        if c <= -1.0 {
            return SteadyAngle::Collinear;
        }
        SteadyAngle::Tilted(c.acos())
    } else {
        SteadyAngle::Collinear
    }
}

/// Complete parameter set of the multiplier soft layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetParams {
    pub geometry: SoftLayerGeometry,
    pub material: MagnetMaterial,
    pub piezo: PiezoStack,
    pub dipole: DipoleField,
    pub demag: DemagFactors,
    /// Temperature (K).
    pub temperature: f64,
}

impl MagnetParams {
    /// Builds a parameter set with demag factors computed from the geometry.
    pub fn new(
        geometry: SoftLayerGeometry,
        material: MagnetMaterial,
        piezo: PiezoStack,
        dipole: DipoleField,
        temperature: f64,
    ) -> Result<Self, ParamError> {
        let demag = compute_demag_factors(&geometry)?;
        Self::with_demag(geometry, material, piezo, dipole, demag, temperature)
    }

    pub fn with_demag(
        geometry: SoftLayerGeometry,
        material: MagnetMaterial,
        piezo: PiezoStack,
        dipole: DipoleField,
        demag: DemagFactors,
        temperature: f64,
    ) -> Result<Self, ParamError> {
        material.validate()?;
        piezo.validate()?;
        demag.validate()?;
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(ParamError::invalid("temperature", "must be finite and >= 0"));
        }
        Ok(Self {
            geometry,
            material,
            piezo,
            dipole,
            demag,
            temperature,
        })
    }

    /// Terfenol-D soft layer on a PMN-PT stack at 300 K.
    pub fn nominal() -> Self {
        let geometry = SoftLayerGeometry::new(800e-9, 700e-9, 2.2e-9).expect("static geometry");
        let material = MagnetMaterial {
            saturation_magnetization: 8.5e5,
            magnetostriction: 600e-6,
            youngs_modulus: 120e9,
            damping: 0.1,
        };
        let piezo = PiezoStack {
            d33: 1.5e-9,
            thickness: 1e-6,
        };
        let dipole = DipoleField::from_oersted(1000.0).expect("static field");
        Self::new(geometry, material, piezo, dipole, 300.0).expect("static parameters")
    }

    /// Replaces the demag factors so that `γ` equals `gamma` exactly.
    pub fn pin_gamma(mut self, gamma: f64) -> Result<Self, ParamError> {
        let coupling = self.coupling_coefficient()?;
        let ms = self.material.saturation_magnetization;
        let diff = gamma * 3.0 * coupling / (MU0 * ms * ms);
        self.demag = self.demag.with_in_plane_difference(diff)?;
        Ok(self)
    }

    pub fn volume(&self) -> f64 {
        self.geometry.volume()
    }

    pub fn kt(&self) -> f64 {
        thermal_energy(self.temperature)
    }

    pub fn stress(&self, v_gate: f64) -> f64 {
        stress_from_gate(v_gate, &self.material, &self.piezo)
    }

    /// `λ_s·Y·d33/T` in Pa/V; zero means the gate cannot strain the magnet.
    fn coupling_coefficient(&self) -> Result<f64, ParamError> {
        let c = self.material.magnetostriction * self.material.youngs_modulus * self.piezo.d33
            / self.piezo.thickness;
        if c == 0.0 || !c.is_finite() {
            return Err(ParamError::invalid(
                "magnetostriction",
                "λ_s·Y·d33 vanishes; the gate has no magnetoelastic lever",
            ));
        }
        Ok(c)
    }

    /// In-plane (`φ = 90°`) energy at polar angle `theta` (J).
    pub fn energy(&self, theta: f64, v_gate: f64) -> f64 {
        let ms = self.material.saturation_magnetization;
        let omega = self.volume();
        let sigma = self.stress(v_gate);
        let lam = self.material.magnetostriction;
        let aniso = 0.5 * MU0 * ms * ms * omega * (self.demag.nyy - self.demag.nzz)
            + 1.5 * lam * sigma * omega;
        let s = theta.sin();
        aniso * s * s + 0.5 * MU0 * ms * ms * omega * self.demag.nzz - 1.5 * lam * sigma * omega
            + MU0 * ms * omega * self.dipole.magnitude * theta.cos()
    }

    /// Energy for an arbitrary unit vector `m` (J): shape anisotropy along all
    /// three axes, stress anisotropy along `z`, dipole field along `−z`.
    pub fn energy_vector(&self, m: &Vector3<f64>, v_gate: f64) -> f64 {
        let ms = self.material.saturation_magnetization;
        let omega = self.volume();
        let sigma = self.stress(v_gate);
        let lam = self.material.magnetostriction;
        let d = &self.demag;
        omega
            * (0.5 * MU0 * ms * ms * (d.nxx * m.x * m.x + d.nyy * m.y * m.y + d.nzz * m.z * m.z)
                - 1.5 * lam * sigma * m.z * m.z
                + MU0 * ms * self.dipole.magnitude * m.z)
    }

    pub fn landscape_constants(&self) -> Result<LandscapeConstants, ParamError> {
        let coupling = self.coupling_coefficient()?;
        let ms = self.material.saturation_magnetization;
        let big_gamma = MU0 * ms * self.dipole.magnitude / (3.0 * coupling);
        let small_gamma = MU0 * ms * ms * (self.demag.nzz - self.demag.nyy) / (3.0 * coupling);
        Ok(LandscapeConstants {
            big_gamma,
            small_gamma,
        })
    }

    /// Locates the in-plane minimum on `[0, π]` and its escape barrier.
    pub fn potential_well(&self, v_gate: f64) -> WellReport {
        const GRID: usize = 36_000;
        let step = PI / GRID as f64;
        let energies: Vec<f64> = (0..=GRID).map(|i| self.energy(i as f64 * step, v_gate)).collect();
        let (imin, _) = energies
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &e)| if e < acc.1 { (i, e) } else { acc });

        let lo = (imin.saturating_sub(1)) as f64 * step;
        let hi = ((imin + 1).min(GRID)) as f64 * step;
        let theta_min = golden_min(|t| self.energy(t, v_gate), lo, hi);
        let e_min = self.energy(theta_min, v_gate);

        // The landscape is mirror-symmetric about θ = π; a tilted minimum is
        // separated from its mirror by the barrier at π and from θ = 0 by the
        // maximum on the other side.
        let toward_zero = energies[..=imin].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let barrier = if imin >= GRID - 1 {
            toward_zero
        } else {
            let toward_pi = energies[imin..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            toward_pi.min(toward_zero)
        };
        let depth = (barrier - e_min).max(0.0);
        let kt = self.kt();
        WellReport {
            theta_min,
            energy_min: e_min,
            barrier,
            depth,
            depth_kt: if kt > 0.0 { depth / kt } else { f64::INFINITY },
        }
    }
}

/// Location and depth of the in-plane energy minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellReport {
    /// Polar angle of the minimum (rad).
    pub theta_min: f64,
    pub energy_min: f64,
    pub barrier: f64,
    /// Barrier minus minimum (J).
    pub depth: f64,
    /// Depth in units of `kT`.
    pub depth_kt: f64,
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
