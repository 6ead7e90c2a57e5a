//! Symbolic Hamiltonians and the schedules that deform them.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::device::{
    self, circulating_current, qubit_coefficients, validate_regime, FrustrationOffset, RegimeReport,
    AXIS_C_DEG, AXIS_D_DEG, AXIS_E_DEG, AXIS_X_DEG, CC_STRENGTH, CD_COUPLING, COMPUTATIONAL_POINT,
    DD_COUPLING, DD_XX_COUPLING,
};
use crate::error::{Error, Result};
use crate::ising::IsingModel;
use crate::lattice::{validate_embedding, CouplingState, Embedding, Role};

/// `coefficient · Π A(θ_k)` on distinct sites, with `A(θ) = cos θ σ_z − sin θ σ_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coefficient: f64,
    /// `(site, axis degrees)`, sorted by site.
    pub factors: Vec<(usize, f64)>,
}

impl Term {
    pub fn new(coefficient: f64, mut factors: Vec<(usize, f64)>) -> Self {
        factors.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        Term {
            coefficient,
            factors,
        }
    }

    fn canonical_cmp(&self, other: &Term) -> Ordering {
        let key = |t: &Term| t.factors.len();
        key(self)
            .cmp(&key(other))
            .then_with(|| {
                for (a, b) in self.factors.iter().zip(&other.factors) {
                    let o = a.0.cmp(&b.0).then(a.1.total_cmp(&b.1));
                    if o != Ordering::Equal {
                        return o;
                    }
                }
                Ordering::Equal
            })
            .then(self.coefficient.total_cmp(&other.coefficient))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermList {
    pub site_count: usize,
    pub terms: Vec<Term>,
}

impl TermList {
    pub fn new(site_count: usize, terms: Vec<Term>) -> Result<Self> {
        for t in &terms {
            for w in t.factors.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Contract(format!(
                        "term repeats site {} within one product",
                        w[0].0
                    )));
                }
            }
            if let Some(&(s, _)) = t.factors.iter().find(|f| f.0 >= site_count) {
                return Err(Error::Shape(format!("site {s} outside 0..{site_count}")));
            }
        }
        let mut list = TermList { site_count, terms };
        list.canonicalize();
        Ok(list)
    }

    pub fn empty(site_count: usize) -> Self {
        TermList {
            site_count,
            terms: Vec::new(),
        }
    }

    fn canonicalize(&mut self) {
        self.terms.sort_by(Term::canonical_cmp);
    }

    pub fn scaled(&self, c: f64) -> TermList {
        TermList {
            site_count: self.site_count,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coefficient: t.coefficient * c,
                    factors: t.factors.clone(),
                })
                .collect(),
        }
    }

    /// Formal sum `Σ c_k · list_k`; terms are concatenated, not merged.
    pub fn combine(parts: &[(f64, &TermList)]) -> Result<TermList> {
        let n = parts.first().map_or(0, |p| p.1.site_count);
        let mut terms = Vec::new();
        for (c, list) in parts {
            if list.site_count != n {
                return Err(Error::Shape("combining term lists of different sizes".into()));
            }
            if *c == 0.0 {
                continue;
            }
            terms.extend(list.scaled(*c).terms);
        }
        let mut out = TermList { site_count: n, terms };
        out.canonicalize();
        Ok(out)
    }
}

/// Ideal z-axis realisation of a spin model.
pub fn terms_from_ising(m: &IsingModel) -> TermList {
    let mut terms: Vec<Term> = m
        .fields
        .iter()
        .enumerate()
        .filter(|(_, h)| **h != 0.0)
        .map(|(i, &h)| Term::new(h, vec![(i, 0.0)]))
        .collect();
    terms.extend(
        m.couplings
            .iter()
            .map(|&(i, j, c)| Term::new(c, vec![(i, 0.0), (j, 0.0)])),
    );
    TermList::new(m.n, terms).expect("spin model indices are in range")
}

// ---------------------------------------------------------------------------
// Problem Hamiltonian from the pair Hamiltonians

fn check_embedding(e: &Embedding) -> Result<()> {
    let report = validate_embedding(e);
    if report.pass {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "embedding is invalid: {}",
            report.violations.join("; ")
        )))
    }
}

/// Coupling term kinds carried by lattice edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EdgeKind {
    Antiferro,
    DummyDummy,
    /// Computational site first.
    CompDummy,
}

#[derive(Debug, Clone)]
struct LatticeTerms {
    site_count: usize,
    computational: Vec<usize>,
    is_computational: Vec<bool>,
    edges: Vec<(usize, usize, EdgeKind)>,
}

impl LatticeTerms {
    fn new(e: &Embedding) -> Result<Self> {
        check_embedding(e)?;
        let index = e.site_index();
        let roles: Vec<Role> = e.roles.values().copied().collect();
        let is_computational: Vec<bool> = roles.iter().map(|r| *r == Role::Computational).collect();
        let computational = (0..roles.len()).filter(|&i| is_computational[i]).collect();
        let mut edges = Vec::new();
        for (&(a, b), c) in &e.edge_states {
            let (ia, ib) = (index[&a], index[&b]);
            match c.state {
                CouplingState::Off => {}
                CouplingState::AfOn => edges.push((ia, ib, EdgeKind::Antiferro)),
                CouplingState::FmOn => match (roles[ia], roles[ib]) {
                    (Role::Dummy, Role::Dummy) => edges.push((ia, ib, EdgeKind::DummyDummy)),
                    (Role::Computational, Role::Dummy) => {
                        edges.push((ia, ib, EdgeKind::CompDummy))
                    }
                    (Role::Dummy, Role::Computational) => {
                        edges.push((ib, ia, EdgeKind::CompDummy))
                    }
                    (Role::Computational, Role::Computational) => {
                        return Err(Error::Contract(format!(
                            "FM coupling {a}-{b} joins two computational sites"
                        )))
                    }
                },
            }
        }
        Ok(LatticeTerms {
            site_count: roles.len(),
            computational,
            is_computational,
            edges,
        })
    }

    fn single_terms(&self, strength: f64, axis: f64) -> Vec<Term> {
        self.computational
            .iter()
            .map(|&i| Term::new(strength, vec![(i, axis)]))
            .collect()
    }

    /// Coupling terms with each edge's coefficient multiplied by `scale(i, j)`.
    fn coupling_terms(&self, scale: impl Fn(usize, usize) -> f64) -> Vec<Term> {
        let mut out = Vec::new();
        for &(i, j, kind) in &self.edges {
            let f = scale(i, j);
            match kind {
                EdgeKind::Antiferro => {
                    out.push(Term::new(CC_STRENGTH * f, vec![(i, AXIS_C_DEG), (j, AXIS_C_DEG)]))
                }
                EdgeKind::DummyDummy => {
                    out.push(Term::new(DD_COUPLING * f, vec![(i, AXIS_D_DEG), (j, AXIS_D_DEG)]));
                    out.push(Term::new(DD_XX_COUPLING * f, vec![(i, AXIS_X_DEG), (j, AXIS_X_DEG)]));
                }
                EdgeKind::CompDummy => {
                    out.push(Term::new(CD_COUPLING * f, vec![(i, AXIS_C_DEG), (j, AXIS_E_DEG)]))
                }
            }
        }
        out
    }

    fn problem(&self) -> TermList {
        let mut terms = self.single_terms(CC_STRENGTH, AXIS_C_DEG);
        terms.extend(self.coupling_terms(|_, _| 1.0));
        TermList::new(self.site_count, terms).expect("indices from the embedding")
    }
}

/// Device problem Hamiltonian of an embedding, in units of `E_J`.
pub fn assemble_problem(e: &Embedding) -> Result<TermList> {
    Ok(LatticeTerms::new(e)?.problem())
}

// ---------------------------------------------------------------------------
// Schedules

/// Default transverse start field, five times the strongest coupling.
pub const DEFAULT_START_FIELD: f64 = 0.145;
pub const DEFAULT_DEVICE_START: FrustrationOffset = FrustrationOffset {
    d_top: 0.035,
    d_bot: 0.0,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ScheduleModel {
    /// `H(s) = (1 − s) h0 Σ_comp σ_z + s H_problem`.
    IdealInterpolation { start_field: f64 },
    /// Computational offsets move linearly from `start_offset` to the
    /// operating point; dummies stay at theirs.
    DevicePath { start_offset: FrustrationOffset },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(flatten)]
    pub model: ScheduleModel,
    /// Total evolution time in units of `ħ / E_J`.
    pub total_time: f64,
    pub steps: usize,
}

impl Schedule {
    pub fn ideal(total_time: f64, steps: usize) -> Self {
        Schedule {
            model: ScheduleModel::IdealInterpolation {
                start_field: DEFAULT_START_FIELD,
            },
            total_time,
            steps,
        }
    }

    pub fn device(total_time: f64, steps: usize) -> Self {
        Schedule {
            model: ScheduleModel::DevicePath {
                start_offset: DEFAULT_DEVICE_START,
            },
            total_time,
            steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_time > 0.0 && self.total_time.is_finite()) {
            return Err(Error::param(format!(
                "total_time must be positive, got {}",
                self.total_time
            )));
        }
        if self.steps < 2 {
            return Err(Error::param(format!("steps must be at least 2, got {}", self.steps)));
        }
        match self.model {
            ScheduleModel::IdealInterpolation { start_field } => {
                if !start_field.is_finite() {
                    return Err(Error::param("start_field must be finite"));
                }
            }
            ScheduleModel::DevicePath { start_offset } => {
                let b = start_offset.d_top + 0.5 * start_offset.d_bot;
                if b < 0.015 {
                    return Err(Error::param(format!(
                        "device path must start with d_top + d_bot/2 >= 0.015, got {b:.4}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn s_values(&self) -> Vec<f64> {
        uniform_grid(self.steps)
    }
}

pub fn uniform_grid(points: usize) -> Vec<f64> {
    let last = (points.max(2) - 1) as f64;
    (0..points.max(2)).map(|k| k as f64 / last).collect()
}

/// A one-parameter family `H(s)`, `s ∈ [0, 1]`, with its derivative.
pub trait HamiltonianPath: Sync {
    fn site_count(&self) -> usize;
    fn at(&self, s: f64) -> Result<TermList>;
    /// `dH/ds`, evaluated analytically term by term.
    fn derivative(&self, s: f64) -> Result<TermList>;
}

fn check_s(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::param(format!("s = {s} outside [0, 1]")))
    }
}

/// Straight-line interpolation between two fixed Hamiltonians.
#[derive(Debug, Clone)]
pub struct LinearPath {
    pub start: TermList,
    pub end: TermList,
}

impl HamiltonianPath for LinearPath {
    fn site_count(&self) -> usize {
        self.start.site_count
    }

    fn at(&self, s: f64) -> Result<TermList> {
        check_s(s)?;
        TermList::combine(&[(1.0 - s, &self.start), (s, &self.end)])
    }

    fn derivative(&self, s: f64) -> Result<TermList> {
        check_s(s)?;
        TermList::combine(&[(-1.0, &self.start), (1.0, &self.end)])
    }
}

/// Device path built on the effective single-qubit model.
///
/// The single-qubit field `(K_z, K_x)(δ(s))` is mapped by one fixed rotation
/// and scale so that at the operating point it coincides with the pair
/// Hamiltonians' `0.029 σ_ĉ`. Couplings carry the product of the two sites'
/// circulating currents, normalised to 1 at the operating point.
#[derive(Debug, Clone)]
pub struct DevicePathModel {
    lattice: LatticeTerms,
    start: FrustrationOffset,
    scale: f64,
    rotation_deg: f64,
    current_at_point: f64,
}

impl DevicePathModel {
    fn new(lattice: LatticeTerms, start: FrustrationOffset) -> Self {
        let k_c = qubit_coefficients(COMPUTATIONAL_POINT);
        DevicePathModel {
            lattice,
            start,
            scale: CC_STRENGTH / k_c.magnitude(),
            rotation_deg: AXIS_C_DEG - k_c.axis_deg(),
            current_at_point: circulating_current(COMPUTATIONAL_POINT.d_top),
        }
    }

    pub fn offset(&self, s: f64) -> FrustrationOffset {
        self.start.lerp(COMPUTATIONAL_POINT, s)
    }

    fn single_term_polar(&self, s: f64) -> (f64, f64) {
        let k = qubit_coefficients(self.offset(s));
        let k_c = qubit_coefficients(COMPUTATIONAL_POINT);
        // Written relative to the operating point so s = 1 is exact.
        let magnitude = CC_STRENGTH * (k.magnitude() / k_c.magnitude());
        let axis = AXIS_C_DEG + (k.axis_deg() - k_c.axis_deg());
        (magnitude, axis)
    }

    fn site_factor(&self, i: usize, s: f64) -> f64 {
        if self.lattice.is_computational[i] {
            circulating_current(self.offset(s).d_top) / self.current_at_point
        } else {
            1.0
        }
    }

    fn site_factor_derivative(&self, i: usize, s: f64) -> f64 {
        if !self.lattice.is_computational[i] {
            return 0.0;
        }
        let dd_top = COMPUTATIONAL_POINT.d_top - self.start.d_top;
        let phase = std::f64::consts::PI * (0.330 + self.offset(s).d_top);
        -1.4 * std::f64::consts::PI * phase.sin() * dd_top / self.current_at_point
    }

    pub fn regime(&self, s: f64) -> RegimeReport {
        validate_regime(self.offset(s))
    }
}

impl HamiltonianPath for DevicePathModel {
    fn site_count(&self) -> usize {
        self.lattice.site_count
    }

    fn at(&self, s: f64) -> Result<TermList> {
        check_s(s)?;
        let (magnitude, axis) = self.single_term_polar(s);
        let mut terms = self.lattice.single_terms(magnitude, axis);
        terms.extend(
            self.lattice
                .coupling_terms(|i, j| self.site_factor(i, s) * self.site_factor(j, s)),
        );
        TermList::new(self.lattice.site_count, terms)
    }

    fn derivative(&self, s: f64) -> Result<TermList> {
        check_s(s)?;
        // dK/ds is constant because K is affine in δ and δ is linear in s.
        let k0 = qubit_coefficients(self.start);
        let k1 = qubit_coefficients(COMPUTATIONAL_POINT);
        let (dkz, dkx) = (k1.k_z - k0.k_z, k1.k_x - k0.k_x);
        let (cphi, sphi) = device::axis_components(self.rotation_deg);
        let dz = self.scale * (dkz * cphi + dkx * sphi);
        let dx = self.scale * (dkx * cphi - dkz * sphi);
        let mut terms = self.lattice.single_terms(dz, 0.0);
        // σ_x = −A(90°).
        terms.extend(self.lattice.single_terms(-dx, AXIS_X_DEG));
        terms.extend(self.lattice.coupling_terms(|i, j| {
            self.site_factor_derivative(i, s) * self.site_factor(j, s)
                + self.site_factor(i, s) * self.site_factor_derivative(j, s)
        }));
        TermList::new(self.lattice.site_count, terms)
    }
}

/// The time-dependent Hamiltonian an embedding follows under a schedule.
#[derive(Debug, Clone)]
pub enum ScheduledPath {
    Ideal(LinearPath),
    Device(DevicePathModel),
}

impl ScheduledPath {
    pub fn new(e: &Embedding, sched: &Schedule) -> Result<Self> {
        sched.validate()?;
        let lattice = LatticeTerms::new(e)?;
        Ok(match sched.model {
            ScheduleModel::IdealInterpolation { start_field } => {
                let start = TermList::new(lattice.site_count, lattice.single_terms(start_field, 0.0))?;
                ScheduledPath::Ideal(LinearPath {
                    start,
                    end: lattice.problem(),
                })
            }
            ScheduleModel::DevicePath { start_offset } => {
                ScheduledPath::Device(DevicePathModel::new(lattice, start_offset))
            }
        })
    }

    /// Two-level validity flags along the path (device model only).
    pub fn regime(&self, s: f64) -> Option<RegimeReport> {
        match self {
            ScheduledPath::Ideal(_) => None,
            ScheduledPath::Device(d) => Some(d.regime(s)),
        }
    }
}

impl HamiltonianPath for ScheduledPath {
    fn site_count(&self) -> usize {
        match self {
            ScheduledPath::Ideal(p) => p.site_count(),
            ScheduledPath::Device(p) => p.site_count(),
        }
    }

    fn at(&self, s: f64) -> Result<TermList> {
        match self {
            ScheduledPath::Ideal(p) => p.at(s),
            ScheduledPath::Device(p) => p.at(s),
        }
    }

    fn derivative(&self, s: f64) -> Result<TermList> {
        match self {
            ScheduledPath::Ideal(p) => p.derivative(s),
            ScheduledPath::Device(p) => p.derivative(s),
        }
    }
}

pub fn assemble_at(e: &Embedding, sched: &Schedule, s: f64) -> Result<TermList> {
    check_s(s)?;
    ScheduledPath::new(e, sched)?.at(s)
}

/// Raw single-qubit coefficients at the dummy operating point; the assembled
/// Hamiltonians treat these as renormalised to zero.
pub fn dummy_residual_field() -> device::QubitCoefficients {
    qubit_coefficients(device::DUMMY_POINT)
}
