//! Gap traces and the adiabatic criterion.

use rayon::prelude::*;
use serde::Serialize;

use super::operator::{realize, Operator};
use super::spectrum::{spectrum, Spectrum, DEGENERACY_TOL};
use super::terms::{HamiltonianPath, Schedule, ScheduledPath, TermList};
use crate::error::{Error, Result};
use crate::lattice::Embedding;

/// Evolution and gap traces are limited to this many sites.
pub const EVOLUTION_MAX_SITES: usize = 20;
/// Step of the central difference used for `dH/ds`.
pub const FD_STEP: f64 = 1e-6;

pub(crate) fn check_evolution_size(n: usize) -> Result<()> {
    if n > EVOLUTION_MAX_SITES {
        Err(Error::SizeLimit {
            what: "sites",
            actual: n,
            limit: EVOLUTION_MAX_SITES,
        })
    } else {
        Ok(())
    }
}

pub(crate) fn operator_at(path: &dyn HamiltonianPath, s: f64) -> Result<Operator> {
    realize(&path.at(s)?)
}

/// Spectrum at `s = 1` with enough levels to see past the ground manifold.
pub fn final_spectrum(path: &dyn HamiltonianPath) -> Result<(usize, Spectrum)> {
    let op = operator_at(path, 1.0)?;
    let dim = op.dim();
    let mut k = 4.min(dim);
    loop {
        let sp = spectrum(&op, k)?;
        let d = sp.ground_degeneracy();
        if d < k || k == dim {
            return Ok((d, sp));
        }
        k = (2 * k).min(dim);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumTrace {
    pub s_values: Vec<f64>,
    pub levels: Vec<Vec<f64>>,
    pub min_gap: f64,
    pub min_gap_location: f64,
    pub ground_degeneracy_final: usize,
}

impl SpectrumTrace {
    pub fn gap_at(&self, i: usize) -> f64 {
        let d = self.ground_degeneracy_final;
        self.levels[i][d] - self.levels[i][0]
    }

    /// `s, E0, ..., Ek` rows with a header line.
    pub fn to_csv(&self) -> String {
        let k = self.levels.first().map_or(0, Vec::len);
        let mut out = String::from("s");
        for j in 0..k {
            out.push_str(&format!(",E{j}"));
        }
        out.push('\n');
        for (s, lv) in self.s_values.iter().zip(&self.levels) {
            out.push_str(&format!("{s}"));
            for e in lv {
                out.push_str(&format!(",{e}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn gap_trace_path(path: &dyn HamiltonianPath, s_values: &[f64], k: usize) -> Result<SpectrumTrace> {
    check_evolution_size(path.site_count())?;
    let (d, _) = final_spectrum(path)?;
    if k < d + 1 {
        return Err(Error::param(format!(
            "k = {k} cannot resolve the gap above a {d}-fold ground level"
        )));
    }
    let levels: Vec<Vec<f64>> = s_values
        .par_iter()
        .map(|&s| Ok(spectrum(&operator_at(path, s)?, k)?.values))
        .collect::<Result<_>>()?;
    if levels.iter().any(|l| l.len() <= d) {
        return Err(Error::param(format!("k = {k} exceeds the state-space dimension")));
    }
    let (mut min_gap, mut at) = (f64::INFINITY, 0.0);
    for (s, lv) in s_values.iter().zip(&levels) {
        let g = lv[d] - lv[0];
        if g < min_gap {
            min_gap = g;
            at = *s;
        }
    }
    Ok(SpectrumTrace {
        s_values: s_values.to_vec(),
        levels,
        min_gap,
        min_gap_location: at,
        ground_degeneracy_final: d,
    })
}

pub fn gap_trace(e: &Embedding, sched: &Schedule, k: usize) -> Result<SpectrumTrace> {
    let path = ScheduledPath::new(e, sched)?;
    gap_trace_path(&path, &sched.s_values(), k)
}

/// Central difference of `H(s)`; one-sided within `h` of the endpoints.
pub fn finite_difference(path: &dyn HamiltonianPath, s: f64, h: f64) -> Result<TermList> {
    let lo = (s - h).max(0.0);
    let hi = (s + h).min(1.0);
    let a = path.at(lo)?;
    let b = path.at(hi)?;
    TermList::combine(&[(-1.0 / (hi - lo), &a), (1.0 / (hi - lo), &b)])
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionSample {
    pub s: f64,
    /// `max_n |⟨n|dH/ds|0⟩| / (T Δ_n0²)` over levels above the final ground manifold.
    pub matrix_element: f64,
    /// `|⟨0|d(H²)/dt|0⟩| / Δ²`.
    pub expectation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub total_time: f64,
    /// Headline value: maximum of the matrix-element form.
    pub matrix_element_max: f64,
    pub matrix_element_location: f64,
    pub expectation_max: f64,
    /// Levels inspected per sample for the matrix-element form.
    pub levels_used: usize,
    /// Samples where the gap closes to within tolerance and both forms are undefined.
    pub gapless_samples: usize,
    pub samples: Vec<CriterionSample>,
}

fn criterion_sample(
    path: &dyn HamiltonianPath,
    s: f64,
    total_time: f64,
    d: usize,
    levels: usize,
) -> Result<Option<CriterionSample>> {
    let op = operator_at(path, s)?;
    let sp = spectrum(&op, levels)?;
    let dh = realize(&finite_difference(path, s, FD_STEP)?)?;
    let e0 = sp.values[0];
    let tol = DEGENERACY_TOL * e0.abs().max(1.0);
    let gap = sp.values.get(d).map_or(f64::INFINITY, |e| e - e0);
    if gap <= tol {
        return Ok(None);
    }
    let dh0 = dh.apply(&sp.vectors[0]);
    let mut a: f64 = 0.0;
    for n in d..sp.values.len() {
        let delta = sp.values[n] - e0;
        if delta <= tol {
            continue;
        }
        let m: f64 = sp.vectors[n].iter().zip(&dh0).map(|(x, y)| x * y).sum();
        a = a.max(m.abs() / (total_time * delta * delta));
    }
    let expect: f64 = sp.vectors[0].iter().zip(&dh0).map(|(x, y)| x * y).sum();
    // For an eigenstate ⟨0|H H' + H' H|0⟩ = 2 E0 ⟨0|H'|0⟩.
    let b = (2.0 * e0 * expect).abs() / (total_time * gap * gap);
    Ok(Some(CriterionSample {
        s,
        matrix_element: a,
        expectation: b,
    }))
}

/// Both criterion forms sampled along `path` for total time `total_time`.
pub fn criterion_path(
    path: &dyn HamiltonianPath,
    total_time: f64,
    s_values: &[f64],
) -> Result<CriterionReport> {
    check_evolution_size(path.site_count())?;
    if !(total_time > 0.0) {
        return Err(Error::param("total_time must be positive"));
    }
    let (d, _) = final_spectrum(path)?;
    let dim = 1usize << path.site_count();
    let levels = if dim <= 256 { dim } else { (d + 8).min(dim) };
    let samples: Vec<Option<CriterionSample>> = s_values
        .par_iter()
        .map(|&s| criterion_sample(path, s, total_time, d, levels))
        .collect::<Result<_>>()?;
    let gapless_samples = samples.iter().filter(|x| x.is_none()).count();
    let samples: Vec<CriterionSample> = samples.into_iter().flatten().collect();
    let (mut a_max, mut at, mut b_max) = (0.0f64, 0.0, 0.0f64);
    for x in &samples {
        if x.matrix_element > a_max {
            a_max = x.matrix_element;
            at = x.s;
        }
        b_max = b_max.max(x.expectation);
    }
    Ok(CriterionReport {
        total_time,
        matrix_element_max: a_max,
        matrix_element_location: at,
        expectation_max: b_max,
        levels_used: levels,
        gapless_samples,
        samples,
    })
}

pub fn adiabatic_criterion(e: &Embedding, sched: &Schedule) -> Result<CriterionReport> {
    let path = ScheduledPath::new(e, sched)?;
    criterion_path(&path, sched.total_time, &sched.s_values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::terms::{assemble_at, LinearPath, Term};
    use crate::graph::Graph;
    use crate::lattice::{embed_graph, EmbedOptions, TriangularLattice};

    fn single_vertex() -> Embedding {
        let g = Graph::new(1, []).unwrap();
        embed_graph(&g, &TriangularLattice::new(1, 1), &EmbedOptions::default()).unwrap()
    }

    #[test]
    fn single_qubit_gap_at_end() {
        let tr = gap_trace(&single_vertex(), &Schedule::ideal(1.0, 11), 2).unwrap();
        assert_eq!(tr.ground_degeneracy_final, 1);
        assert!((tr.gap_at(10) - 0.058).abs() < 1e-12);
        for i in 0..tr.s_values.len() {
            assert!(tr.min_gap <= tr.gap_at(i));
        }
        assert!(tr.to_csv().starts_with("s,E0,E1\n0,"));
    }

    #[test]
    fn k_too_small() {
        let g = Graph::new(2, []).unwrap();
        let e = embed_graph(&g, &TriangularLattice::new(1, 3), &EmbedOptions::default()).unwrap();
        // Two uncoupled vertices: non-degenerate ground level, so k = 1 fails.
        assert!(matches!(
            gap_trace(&e, &Schedule::ideal(1.0, 3), 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn constant_path_has_zero_criterion() {
        let h = TermList::new(
            2,
            vec![
                Term::new(0.1, vec![(0, 19.0)]),
                Term::new(0.2, vec![(1, 90.0)]),
                Term::new(0.05, vec![(0, 0.0), (1, 0.0)]),
            ],
        )
        .unwrap();
        let path = LinearPath {
            start: h.clone(),
            end: h,
        };
        let r = criterion_path(&path, 10.0, &[0.0, 0.5, 1.0]).unwrap();
        // Only rounding in the finite difference remains.
        assert!(r.matrix_element_max < 1e-9);
        assert!(r.expectation_max < 1e-9);
    }

    #[test]
    fn criterion_scales_inversely_with_time() {
        let e = single_vertex();
        let a = adiabatic_criterion(&e, &Schedule::ideal(10.0, 21)).unwrap();
        let b = adiabatic_criterion(&e, &Schedule::ideal(100.0, 21)).unwrap();
        assert!(a.matrix_element_max > 0.0);
        assert!((a.matrix_element_max / b.matrix_element_max - 10.0).abs() < 1e-9);
        assert!((a.expectation_max / b.expectation_max - 10.0).abs() < 1e-9);
    }

    #[test]
    fn decoupled_spectrum_is_sum_of_single_site_spectra() {
        let g = Graph::new(3, []).unwrap();
        let e = embed_graph(&g, &TriangularLattice::new(3, 3), &EmbedOptions::default()).unwrap();
        let sched = Schedule::ideal(1.0, 5);
        let single = gap_trace(&single_vertex(), &sched, 2).unwrap();
        let triple = gap_trace(&e, &sched, 8).unwrap();
        for i in 0..5 {
            let (a, b) = (single.levels[i][0], single.levels[i][1]);
            let mut sums: Vec<f64> = (0..8)
                .map(|m: u32| (0..3).map(|k| if m >> k & 1 == 0 { a } else { b }).sum())
                .collect();
            sums.sort_by(f64::total_cmp);
            for (x, y) in sums.iter().zip(&triple.levels[i]) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let _ = assemble_at(&e, &sched, 0.5).unwrap();
    }
}
