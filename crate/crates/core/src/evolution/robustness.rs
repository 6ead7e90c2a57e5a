//! Sensitivity of the ground space to stray local terms.

use rand::Rng;
use serde::Serialize;

use super::operator::{dot, realize};
use super::spectrum::spectrum;
use super::terms::{Term, TermList};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessTrial {
    pub term: Term,
    /// `tr(P0 P1) / d` for the unperturbed and perturbed ground projectors.
    pub fidelity: f64,
    pub energy_shift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessReport {
    pub site_count: usize,
    pub epsilon: f64,
    pub ground_degeneracy: usize,
    pub mean_fidelity: f64,
    pub min_fidelity: f64,
    pub mean_energy_shift: f64,
    pub max_energy_shift: f64,
    pub trials: Vec<RobustnessTrial>,
}

fn random_term(rng: &mut impl Rng, n: usize, epsilon: f64) -> Term {
    let k = if n >= 2 && rng.gen_bool(0.5) { 2 } else { 1 };
    let first = rng.gen_range(0..n);
    let mut factors = vec![(first, rng.gen_range(0.0..360.0))];
    if k == 2 {
        let mut second = rng.gen_range(0..n - 1);
        if second >= first {
            second += 1;
        }
        factors.push((second, rng.gen_range(0.0..360.0)));
    }
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    Term::new(sign * epsilon, factors)
}

/// Adds one random one- or two-site term of magnitude `epsilon` per trial
/// and compares ground spaces.
pub fn perturb_and_refit(t: &TermList, epsilon: f64, trials: usize, seed: u64) -> Result<RobustnessReport> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!("epsilon must be non-negative, got {epsilon}")));
    }
    if t.site_count == 0 {
        return Err(Error::param("term list has no sites"));
    }
    let op = realize(t)?;
    let dim = op.dim();
    let mut k = 4.min(dim);
    let base = loop {
        let sp = spectrum(&op, k)?;
        if sp.ground_degeneracy() < k || k == dim {
            break sp;
        }
        k = (2 * k).min(dim);
    };
    let d = base.ground_degeneracy();
    let mut out = Vec::with_capacity(trials);
    for i in 0..trials {
        let mut rng = seed::stream(seed, "perturb", i as u64);
        let term = random_term(&mut rng, t.site_count, epsilon);
        let mut terms = t.terms.clone();
        terms.push(term.clone());
        let perturbed = realize(&TermList::new(t.site_count, terms)?)?;
        let sp = spectrum(&perturbed, d)?;
        let mut overlap = 0.0;
        for a in base.vectors.iter().take(d) {
            for b in sp.vectors.iter().take(d) {
                overlap += dot(a, b).powi(2);
            }
        }
        out.push(RobustnessTrial {
            term,
            fidelity: (overlap / d as f64).min(1.0),
            energy_shift: (sp.values[0] - base.values[0]).abs(),
        });
    }
    let n = out.len().max(1) as f64;
    Ok(RobustnessReport {
        site_count: t.site_count,
        epsilon,
        ground_degeneracy: d,
        mean_fidelity: out.iter().map(|x| x.fidelity).sum::<f64>() / n,
        min_fidelity: out.iter().map(|x| x.fidelity).fold(1.0, f64::min),
        mean_energy_shift: out.iter().map(|x| x.energy_shift).sum::<f64>() / n,
        max_energy_shift: out.iter().map(|x| x.energy_shift).fold(0.0, f64::max),
        trials: out,
    })
}
