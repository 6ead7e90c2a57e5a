//! Persistent-current qubit device model.
//!
//! Energies are in units of the Josephson energy `E_J` unless stated
//! otherwise. Axis angles are degrees, measured clockwise from `z` in the
//! `xz`-plane of the Bloch sphere.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Axis of the computational (ĉ) basis.
pub const AXIS_C_DEG: f64 = 19.0;
/// Axis of the dummy-dummy coupling (d̂).
pub const AXIS_D_DEG: f64 = 16.0;
/// Dummy-side axis of the computational-dummy coupling (ê).
pub const AXIS_E_DEG: f64 = 24.0;
pub const AXIS_X_DEG: f64 = 90.0;

pub const CC_STRENGTH: f64 = 0.029;
pub const DD_COUPLING: f64 = -3.6e-3;
pub const DD_XX_COUPLING: f64 = 5.4e-5;
pub const CD_COUPLING: f64 = -0.013;
pub const CC_RATIO: f64 = 90.0;

pub const COMPUTATIONAL_POINT: FrustrationOffset = FrustrationOffset {
    d_top: -0.0124,
    d_bot: 0.0200,
};
pub const DUMMY_POINT: FrustrationOffset = FrustrationOffset {
    d_top: -0.0171,
    d_bot: 0.0152,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Josephson energy as a frequency, THz.
    #[serde(rename = "E_J")]
    pub e_j: f64,
    /// Critical current, µA.
    #[serde(rename = "I_c")]
    pub i_c: f64,
    /// Mutual inductance, pH.
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "EJ_over_EC")]
    pub ej_over_ec: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Base flux frustration, units of Φ0.
    pub f_base: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        DeviceParams {
            e_j: 0.60,
            i_c: 1.2,
            m: 3.1,
            ej_over_ec: 80.0,
            beta: 0.8,
            gamma: 0.02,
            f_base: 0.330,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("E_J", self.e_j),
            ("I_c", self.i_c),
            ("M", self.m),
            ("EJ_over_EC", self.ej_over_ec),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("f_base", self.f_base),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Flux offsets `(δ^top, δ^bot)` from the base frustration, units of Φ0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrustrationOffset {
    pub d_top: f64,
    pub d_bot: f64,
}

impl FrustrationOffset {
    pub fn new(d_top: f64, d_bot: f64) -> Self {
        FrustrationOffset { d_top, d_bot }
    }

    pub fn lerp(self, to: FrustrationOffset, s: f64) -> FrustrationOffset {
        FrustrationOffset {
            d_top: (1.0 - s) * self.d_top + s * to.d_top,
            d_bot: (1.0 - s) * self.d_bot + s * to.d_bot,
        }
    }
}

impl std::ops::Add for FrustrationOffset {
    type Output = FrustrationOffset;
    fn add(self, o: FrustrationOffset) -> FrustrationOffset {
        FrustrationOffset::new(self.d_top + o.d_top, self.d_bot + o.d_bot)
    }
}

/// `H_Q / E_J = K_z σ_z + K_x σ_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitCoefficients {
    pub k_z: f64,
    pub k_x: f64,
}

impl QubitCoefficients {
    pub fn magnitude(&self) -> f64 {
        self.k_z.hypot(self.k_x)
    }

    /// Angle of the effective field, degrees clockwise from `z`, matching
    /// [`axis_operator`]'s convention: `K_z σ_z + K_x σ_x = |K| A(θ)`.
    pub fn axis_deg(&self) -> f64 {
        (-self.k_x).atan2(self.k_z).to_degrees()
    }
}

pub fn qubit_coefficients(o: FrustrationOffset) -> QubitCoefficients {
    QubitCoefficients {
        k_z: -0.025 + 3.8 * o.d_bot + 2.0 * o.d_top,
        k_x: 0.0049 - 1.2 * o.d_bot - 0.81 * o.d_top,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeReport {
    /// `δ^bot + ½δ^top`.
    pub window_a_value: f64,
    pub window_a: bool,
    /// `δ^top + ½δ^bot`.
    pub window_b_value: f64,
    pub window_b: bool,
    pub two_level_valid: bool,
}

pub fn validate_regime(o: FrustrationOffset) -> RegimeReport {
    // Window A is 0.485 ≤ f_bot + ½ f_top ≤ 0.515 with f = 0.330 + δ.
    let a = o.d_bot + 0.5 * o.d_top;
    let b = o.d_top + 0.5 * o.d_bot;
    let window_a = (-0.010..=0.020).contains(&a);
    let window_b = b.abs() <= 0.015;
    RegimeReport {
        window_a_value: a,
        window_a,
        window_b_value: b,
        window_b,
        two_level_valid: window_a && window_b,
    }
}

/// Circulating-current magnitude in units of `I_c`.
pub fn circulating_current(d_top: f64) -> f64 {
    1.4 * (std::f64::consts::PI * (0.330 + d_top)).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PairKind {
    Cc,
    Dd,
    Cd,
}

impl std::str::FromStr for PairKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CC" => Ok(PairKind::Cc),
            "DD" => Ok(PairKind::Dd),
            "CD" => Ok(PairKind::Cd),
            _ => Err(Error::param(format!("unknown pair kind `{s}`"))),
        }
    }
}

/// One term of a two-qubit Hamiltonian: `coefficient · A(axis1) ⊗ A(axis2)`,
/// or a single-qubit term on qubit `qubit` when `axis2` is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub coefficient: f64,
    /// Qubit carrying `axis1` for single-qubit terms (0 or 1).
    pub qubit: usize,
    pub axis1: f64,
    pub axis2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairHamiltonian {
    pub kind: PairKind,
    pub terms: Vec<PairTerm>,
    pub operating_point: FrustrationOffset,
    /// Required `E_J / (M I_c²)`, recorded for the computational pair.
    pub required_ratio: Option<f64>,
}

pub fn pair_hamiltonian(kind: PairKind) -> PairHamiltonian {
    let single = |q, c| PairTerm {
        coefficient: c,
        qubit: q,
        axis1: AXIS_C_DEG,
        axis2: None,
    };
    let coupling = |c, a1, a2| PairTerm {
        coefficient: c,
        qubit: 0,
        axis1: a1,
        axis2: Some(a2),
    };
    match kind {
        PairKind::Cc => PairHamiltonian {
            kind,
            terms: vec![
                single(0, CC_STRENGTH),
                single(1, CC_STRENGTH),
                coupling(CC_STRENGTH, AXIS_C_DEG, AXIS_C_DEG),
            ],
            operating_point: COMPUTATIONAL_POINT,
            required_ratio: Some(CC_RATIO),
        },
        PairKind::Dd => PairHamiltonian {
            kind,
            terms: vec![
                coupling(DD_COUPLING, AXIS_D_DEG, AXIS_D_DEG),
                coupling(DD_XX_COUPLING, AXIS_X_DEG, AXIS_X_DEG),
            ],
            operating_point: DUMMY_POINT,
            required_ratio: None,
        },
        // Qubit 0 is computational, qubit 1 the dummy.
        PairKind::Cd => PairHamiltonian {
            kind,
            terms: vec![
                single(0, CC_STRENGTH),
                coupling(CD_COUPLING, AXIS_C_DEG, AXIS_E_DEG),
            ],
            operating_point: DUMMY_POINT,
            required_ratio: None,
        },
    }
}

/// `(cos θ, sin θ)` with exact values at multiples of 90°.
pub fn axis_components(theta_deg: f64) -> (f64, f64) {
    let r = theta_deg.rem_euclid(360.0);
    if r == 0.0 {
        (1.0, 0.0)
    } else if r == 90.0 {
        (0.0, 1.0)
    } else if r == 180.0 {
        (-1.0, 0.0)
    } else if r == 270.0 {
        (0.0, -1.0)
    } else {
        let t = theta_deg.to_radians();
        (t.cos(), t.sin())
    }
}

/// `cos θ σ_z − sin θ σ_x`.
pub fn axis_operator(theta_deg: f64) -> Matrix2<Complex64> {
    let (c, s) = axis_components(theta_deg);
    let re = |v: f64| Complex64::new(v, 0.0);
    Matrix2::new(re(c), re(-s), re(-s), re(-c))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub ratio: Option<f64>,
    pub target: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Compares `E_J / (M I_c²)` against the 90 ± 5 % needed for the
/// computational coupling.
pub fn check_physical_consistency(p: &DeviceParams) -> ConsistencyReport {
    let e_j = energy_convert(p.e_j, EnergyUnit::THz, EnergyUnit::Joule, None)
        .expect("THz to J needs no params");
    let m = p.m * 1e-12;
    let i_c = p.i_c * 1e-6;
    let denom = m * i_c * i_c;
    let mut checks = Vec::new();
    let ratio = if denom > 0.0 && denom.is_finite() {
        let r = e_j / denom;
        checks.push(Check {
            name: "E_J/(M*I_c^2)".into(),
            value: Some(r),
            pass: ((r - CC_RATIO) / CC_RATIO).abs() <= 0.05,
            note: None,
        });
        Some(r)
    } else {
        checks.push(Check {
            name: "E_J/(M*I_c^2)".into(),
            value: None,
            pass: false,
            note: Some("M*I_c^2 is zero or not finite; ratio undefined".into()),
        });
        None
    };
    let pass = checks.iter().all(|c| c.pass);
    ConsistencyReport {
        ratio,
        target: CC_RATIO,
        checks,
        pass,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MutualInductance {
    pub m_qq: f64,
    /// Qubit self-inductance correction, treated as suppressed.
    pub l_q: f64,
}

/// `M_QQ ≈ M_TQ² / L_T`, all in pH.
pub fn effective_mutual_inductance(m_tq: f64, l_t: f64) -> Result<MutualInductance> {
    if !(l_t > 0.0) {
        return Err(Error::param(format!("L_T must be positive, got {l_t}")));
    }
    Ok(MutualInductance {
        m_qq: m_tq * m_tq / l_t,
        l_q: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyUnit {
    /// Multiples of `E_J`.
    EjUnits,
    GHz,
    THz,
    Kelvin,
    MilliKelvin,
    Joule,
}

impl std::str::FromStr for EnergyUnit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ej" | "e_j" | "ej-units" => Ok(EnergyUnit::EjUnits),
            "ghz" => Ok(EnergyUnit::GHz),
            "thz" => Ok(EnergyUnit::THz),
            "k" | "kelvin" => Ok(EnergyUnit::Kelvin),
            "mk" | "millikelvin" => Ok(EnergyUnit::MilliKelvin),
            "j" | "joule" => Ok(EnergyUnit::Joule),
            _ => Err(Error::param(format!("unknown energy unit `{s}`"))),
        }
    }
}

fn joules_per_unit(unit: EnergyUnit, params: Option<&DeviceParams>) -> Result<f64> {
    Ok(match unit {
        EnergyUnit::Joule => 1.0,
        EnergyUnit::GHz => PLANCK * 1e9,
        EnergyUnit::THz => PLANCK * 1e12,
        EnergyUnit::Kelvin => BOLTZMANN,
        EnergyUnit::MilliKelvin => BOLTZMANN * 1e-3,
        EnergyUnit::EjUnits => {
            let p = params.ok_or_else(|| Error::param("E_J units need device parameters"))?;
            PLANCK * 1e12 * p.e_j
        }
    })
}

/// Converts between energy scales via `h f = k_B T`. This is the only
/// conversion path in the crate.
pub fn energy_convert(
    value: f64,
    from: EnergyUnit,
    to: EnergyUnit,
    params: Option<&DeviceParams>,
) -> Result<f64> {
    if from == to {
        return Ok(value);
    }
    Ok(value * joules_per_unit(from, params)? / joules_per_unit(to, params)?)
}

/// Which energy the quoted single-qubit gap `Δ_1` stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapConvention {
    /// `Δ_1` is the single-qubit field strength (0.029 E_J ≈ 18 GHz).
    #[default]
    FieldStrength,
    /// `Δ_1` is the eigenvalue splitting, twice the field strength.
    FullSplitting,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NmaxReport {
    pub n_max: u64,
    /// `Δ_1 / (k_B T)` with the convention applied.
    pub ratio: f64,
    pub delta1_kelvin: f64,
    pub temperature_kelvin: f64,
    pub convention: GapConvention,
    /// `exp(−Δ_min(n_max) / k_B T)` under `Δ_min(n) = Δ_1 / n`.
    pub boltzmann_weight: f64,
}

/// Largest `n` with `Δ_1 / n > k_B T`.
pub fn nmax_estimate(
    delta1: f64,
    delta1_unit: EnergyUnit,
    temperature_kelvin: f64,
    convention: GapConvention,
    params: Option<&DeviceParams>,
) -> Result<NmaxReport> {
    if !(temperature_kelvin > 0.0 && temperature_kelvin.is_finite()) {
        return Err(Error::param(format!(
            "temperature must be positive, got {temperature_kelvin} K"
        )));
    }
    if !(delta1 > 0.0 && delta1.is_finite()) {
        return Err(Error::param(format!("Δ_1 must be positive, got {delta1}")));
    }
    let mut d1 = energy_convert(delta1, delta1_unit, EnergyUnit::Kelvin, params)?;
    if convention == GapConvention::FullSplitting {
        d1 *= 2.0;
    }
    let ratio = d1 / temperature_kelvin;
    let n_max = (ratio.ceil() - 1.0).max(0.0) as u64;
    let boltzmann_weight = if n_max == 0 {
        0.0
    } else {
        (-(d1 / n_max as f64) / temperature_kelvin).exp()
    };
    Ok(NmaxReport {
        n_max,
        ratio,
        delta1_kelvin: d1,
        temperature_kelvin,
        convention,
        boltzmann_weight,
    })
}
