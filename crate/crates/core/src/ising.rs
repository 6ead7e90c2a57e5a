//! MIS to Ising mapping and exhaustive ground-state checks.
//!
//! With `x_i = (1 + s_i) / 2` (spin `+1` marks membership), the penalty QUBO
//! `-Σ x_i + A Σ_{ij∈E} x_i x_j` becomes, up to a constant,
//!
//! ```text
//! H = Σ_i h_i s_i + Σ_{ij∈E} J s_i s_j,   J = A/4,   h_i = (A d_i - 2)/4
//! ```
//!
//! For `A > 1` the ground states are exactly the maximum independent sets.
//! `A = 1` on a degree-3 graph gives equal field and coupling coefficients,
//! which sits on the degeneracy threshold.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{max_independent_sets, Graph};

pub const IN_SET_CONVENTION: &str = "in_set=+1";
pub const DEFAULT_PENALTY: f64 = 2.0;
pub const GROUND_STATE_CAP: usize = 24;
/// Absolute tolerance for treating two energies as tied.
pub const ENERGY_TIE_TOL: f64 = 1e-12;

/// Spin Hamiltonian `Σ h_i s_i + Σ J_ij s_i s_j` along an abstract axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingModel {
    pub n: usize,
    pub penalty: f64,
    pub fields: Vec<f64>,
    /// `(i, j, J)` with `i < j`, sorted.
    pub couplings: Vec<(usize, usize, f64)>,
    pub convention: String,
}

impl IsingModel {
    /// Assembles a model from raw parts. No sign constraint is placed on the
    /// couplings, which lets embedded models carry ferromagnetic chains.
    pub fn from_parts(
        fields: Vec<f64>,
        couplings: impl IntoIterator<Item = (usize, usize, f64)>,
        penalty: f64,
    ) -> Result<Self> {
        let n = fields.len();
        let mut cs: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, c) in couplings {
            if i == j || i >= n || j >= n {
                return Err(Error::Shape(format!("coupling ({i},{j}) invalid for {n} spins")));
            }
            cs.push((i.min(j), i.max(j), c));
        }
        cs.sort_by_key(|a| (a.0, a.1));
        Ok(IsingModel {
            n,
            penalty,
            fields,
            couplings: cs,
            convention: IN_SET_CONVENTION.into(),
        })
    }

    /// Constant dropped by the spin substitution, so that
    /// `energy + offset` equals the QUBO objective `-|S| + A·(violations)`.
    /// Meaningful only for models built by [`mis_to_ising`].
    pub fn qubo_offset(&self) -> f64 {
        -(self.n as f64) / 2.0 + self.penalty * self.couplings.len() as f64 / 4.0
    }

    /// Multiplies every field and coupling by `c`.
    pub fn scaled(&self, c: f64) -> IsingModel {
        IsingModel {
            fields: self.fields.iter().map(|h| h * c).collect(),
            couplings: self.couplings.iter().map(|&(i, j, v)| (i, j, v * c)).collect(),
            ..self.clone()
        }
    }

    fn energy_of_mask(&self, mask: u64) -> f64 {
        let spin = |i: usize| if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
        let mut e = 0.0;
        for (i, h) in self.fields.iter().enumerate() {
            e += h * spin(i);
        }
        for &(i, j, c) in &self.couplings {
            e += c * spin(i) * spin(j);
        }
        e
    }
}

pub fn mis_to_ising(g: &Graph, penalty: f64) -> Result<IsingModel> {
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::param(format!("penalty must be positive, got {penalty}")));
    }
    let coupling = penalty / 4.0;
    let fields = g
        .degrees()
        .into_iter()
        .map(|d| (penalty * d as f64 - 2.0) / 4.0)
        .collect();
    IsingModel::from_parts(fields, g.edges().iter().map(|&(u, v)| (u, v, coupling)), penalty)
}

pub fn ising_energy(m: &IsingModel, config: &[i8]) -> Result<f64> {
    if config.len() != m.n {
        return Err(Error::Shape(format!(
            "config has {} spins, model has {}",
            config.len(),
            m.n
        )));
    }
    let mut e = 0.0;
    for (h, &s) in m.fields.iter().zip(config) {
        e += h * f64::from(s);
    }
    for &(i, j, c) in &m.couplings {
        e += c * f64::from(config[i]) * f64::from(config[j]);
    }
    Ok(e)
}

/// Degenerate lowest-energy configurations of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundManifold {
    pub energy: f64,
    /// Spin assignments, ordered by their bitmask (bit `i` set ⇔ spin `+1`).
    pub configs: Vec<Vec<i8>>,
    pub degeneracy: usize,
}

pub fn config_from_mask(mask: u64, n: usize) -> Vec<i8> {
    (0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect()
}

pub fn ising_ground_states(m: &IsingModel) -> Result<GroundManifold> {
    if m.n > GROUND_STATE_CAP {
        return Err(Error::SizeLimit {
            what: "spin count",
            actual: m.n,
            limit: GROUND_STATE_CAP,
        });
    }
    let total = 1u64 << m.n;
    const CHUNK: u64 = 1 << 14;
    let chunks = total.div_ceil(CHUNK);
    let partial: Vec<(f64, Vec<u64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(total);
            let mut best = f64::INFINITY;
            let mut masks = Vec::new();
            for mask in lo..hi {
                let e = m.energy_of_mask(mask);
                if e < best - ENERGY_TIE_TOL {
                    best = e;
                    masks.clear();
                    masks.push(mask);
                } else if (e - best).abs() <= ENERGY_TIE_TOL {
                    masks.push(mask);
                }
            }
            (best, masks)
        })
        .collect();

    let energy = partial.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let masks: Vec<u64> = partial
        .into_iter()
        .flat_map(|(_, ms)| ms)
        .filter(|&mask| (m.energy_of_mask(mask) - energy).abs() <= ENERGY_TIE_TOL)
        .collect();
    let configs: Vec<Vec<i8>> = masks.iter().map(|&mk| config_from_mask(mk, m.n)).collect();
    Ok(GroundManifold {
        energy,
        degeneracy: configs.len(),
        configs,
    })
}

/// Members of the set encoded by a spin configuration.
pub fn in_set(config: &[i8]) -> Vec<usize> {
    config
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 1)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingReport {
    pub is_exact: bool,
    /// Ground configurations whose in-set vertices are not a maximum
    /// independent set.
    pub spurious_configs: Vec<Vec<i8>>,
    /// Maximum independent sets with no matching ground configuration.
    pub missing_mis: Vec<Vec<usize>>,
    pub in_set_convention: String,
    pub ground_energy: f64,
    pub degeneracy: usize,
    pub mis_size: usize,
}

pub fn verify_mis_encoding(g: &Graph, m: &IsingModel) -> Result<EncodingReport> {
    if m.n != g.vertex_count() {
        return Err(Error::Shape(format!(
            "model has {} spins, graph has {} vertices",
            m.n,
            g.vertex_count()
        )));
    }
    let ground = ising_ground_states(m)?;
    let mis = max_independent_sets(g)?;
    let mis_sets: BTreeSet<Vec<usize>> = mis.sets.iter().cloned().collect();
    let mut seen = BTreeSet::new();
    let mut spurious = Vec::new();
    for cfg in &ground.configs {
        let set = in_set(cfg);
        if mis_sets.contains(&set) {
            seen.insert(set);
        } else {
            spurious.push(cfg.clone());
        }
    }
    let missing: Vec<Vec<usize>> = mis_sets.difference(&seen).cloned().collect();
    Ok(EncodingReport {
        is_exact: spurious.is_empty() && missing.is_empty(),
        spurious_configs: spurious,
        missing_mis: missing,
        in_set_convention: m.convention.clone(),
        ground_energy: ground.energy,
        degeneracy: ground.degeneracy,
        mis_size: mis.size,
    })
}
