//! Time evolution along an adiabatic path.
//!
//! Each step applies a fourth-order commutator-free Magnus integrator built
//! from two exponentials, each evaluated with a Lanczos (Krylov) projection.
//! Step sizes are chosen by step doubling.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use super::analysis::{check_evolution_size, criterion_path, final_spectrum, operator_at};
use super::operator::{realize, Operator};
use super::spectrum::{spectrum, DEGENERACY_TOL};
use super::terms::{HamiltonianPath, Schedule, ScheduledPath, TermList};
use crate::device::RegimeReport;
use crate::error::{Error, Result};
use crate::lattice::Embedding;

pub const DEFAULT_TRACE_POINTS: usize = 101;
pub const DEFAULT_STEP_TOL: f64 = 1e-9;
/// Norm drift above this aborts the run.
pub const NORM_FAILURE: f64 = 1e-6;
/// Largest ground manifold of a diagonal start Hamiltonian that is resolved
/// by degenerate perturbation theory.
pub const MAX_START_MANIFOLD: usize = 4096;

const MAX_KRYLOV: usize = 40;
const MAX_STEPS: usize = 5_000_000;

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub trace_points: usize,
    pub step_tol: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            trace_points: DEFAULT_TRACE_POINTS,
            step_tol: DEFAULT_STEP_TOL,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionResult {
    pub final_state: Vec<Complex64>,
    pub ground_overlap_trace: Vec<(f64, f64)>,
    pub norm_drift: f64,
    pub success_probability: f64,
    /// Headline (matrix-element) adiabatic criterion.
    pub criterion_max: f64,
    /// Literal expectation form of the criterion.
    pub criterion_expectation_max: f64,
    pub ground_degeneracy_final: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Two-level validity along a device path, `None` for ideal paths.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<Vec<(f64, RegimeReport)>>,
}

fn cnorm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn cdot_real(a: &[f64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, z)| z * *x).sum()
}

fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `exp(−i τ H) ψ` by Lanczos projection. Returns the result and an a
/// posteriori error estimate.
fn expm_krylov(op: &Operator, psi: &[Complex64], tau: f64) -> (Vec<Complex64>, f64) {
    let dim = psi.len();
    let norm0 = cnorm(psi);
    if norm0 == 0.0 {
        return (psi.to_vec(), 0.0);
    }
    let scale = op.norm_bound().max(1e-300);
    let m_max = dim.min(MAX_KRYLOV);
    let mut basis: Vec<Vec<Complex64>> = vec![psi.iter().map(|z| z / norm0).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut tail = 0.0;
    loop {
        let j = basis.len() - 1;
        let mut w = op.apply(&basis[j]);
        alpha.push(cdot(&basis[j], &w).re);
        for _ in 0..2 {
            for b in &basis {
                let p = cdot(b, &w);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let b = cnorm(&w);
        if b <= 1e-14 * scale {
            break;
        }
        if basis.len() == m_max {
            tail = b;
            break;
        }
        w.iter_mut().for_each(|x| *x /= b);
        beta.push(b);
        basis.push(w);
    }
    let m = basis.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    // y = Q exp(−iτΛ) Qᵀ e1
    let mut y = vec![Complex64::default(); m];
    for k in 0..m {
        let phase = Complex64::from_polar(1.0, -tau * eig.eigenvalues[k]);
        let w = phase * eig.eigenvectors[(0, k)];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += w * eig.eigenvectors[(i, k)];
        }
    }
    let err = norm0 * tail * y[m - 1].norm() * tau.abs();
    let mut out = vec![Complex64::default(); dim];
    for (yi, v) in y.iter().zip(&basis) {
        let c = yi * norm0;
        out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
    }
    (out, err)
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// One CFM4 step from `t` to `t + h`.
fn cfm4_step(
    path: &dyn HamiltonianPath,
    total_time: f64,
    psi: &[Complex64],
    t: f64,
    h: f64,
) -> Result<(Vec<Complex64>, f64)> {
    let a1 = (3.0 - 2.0 * SQRT3) / 12.0;
    let a2 = (3.0 + 2.0 * SQRT3) / 12.0;
    let s1 = ((t + h * (0.5 - SQRT3 / 6.0)) / total_time).clamp(0.0, 1.0);
    let s2 = ((t + h * (0.5 + SQRT3 / 6.0)) / total_time).clamp(0.0, 1.0);
    let h1 = path.at(s1)?;
    let h2 = path.at(s2)?;
    let first = realize(&TermList::combine(&[(a2, &h1), (a1, &h2)])?)?;
    let second = realize(&TermList::combine(&[(a1, &h1), (a2, &h2)])?)?;
    let (mid, e1) = expm_krylov(&first, psi, h);
    let (out, e2) = expm_krylov(&second, &mid, h);
    Ok((out, e1 + e2))
}

/// Exact ground state of `H(0)`.
///
/// A degenerate diagonal start (for example dummies carrying no field) is
/// resolved by diagonalising `dH/ds` inside the ground manifold, which picks
/// the state the adiabatic path actually continues.
pub fn start_state(path: &dyn HamiltonianPath) -> Result<Vec<f64>> {
    let h0 = operator_at(path, 0.0)?;
    let dim = h0.dim();
    let diagonal = h0.strings().all(|(x, _, _)| x == 0);
    if diagonal {
        let ones = vec![1.0; dim];
        // H applied to the all-ones vector gives the diagonal when H is diagonal.
        let diag = h0.apply(&ones);
        let e0 = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = DEGENERACY_TOL * e0.abs().max(1.0);
        let manifold: Vec<usize> = (0..dim).filter(|&i| diag[i] - e0 <= tol).collect();
        if manifold.len() == 1 {
            let mut v = vec![0.0; dim];
            v[manifold[0]] = 1.0;
            return Ok(v);
        }
        if manifold.len() > MAX_START_MANIFOLD {
            return Err(Error::SizeLimit {
                what: "degenerate start manifold",
                actual: manifold.len(),
                limit: MAX_START_MANIFOLD,
            });
        }
        let dh = realize(&path.derivative(0.0)?)?;
        let g = manifold.len();
        let mut m = DMatrix::zeros(g, g);
        let mut unit = vec![0.0; dim];
        for (b, &jb) in manifold.iter().enumerate() {
            unit[jb] = 1.0;
            let col = dh.apply(&unit);
            unit[jb] = 0.0;
            for (a, &ja) in manifold.iter().enumerate() {
                m[(a, b)] = col[ja];
            }
        }
        let eig = SymmetricEigen::new(m);
        let lo = (0..g)
            .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
            .expect("non-empty manifold");
        let mut v = vec![0.0; dim];
        for (a, &ja) in manifold.iter().enumerate() {
            v[ja] = eig.eigenvectors[(a, lo)];
        }
        let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        return Ok(v);
    }
    let sp = spectrum(&h0, 2)?;
    if sp.ground_degeneracy() > 1 {
        return Err(Error::Contract(
            "start Hamiltonian has a degenerate, non-diagonal ground level".into(),
        ));
    }
    Ok(sp.vectors[0].clone())
}

/// Probability weight of `psi` in the lowest `d` eigenvectors of `op`.
fn ground_weight(op: &Operator, psi: &[Complex64], d: usize) -> Result<f64> {
    let sp = spectrum(op, d)?;
    let w: f64 = sp
        .vectors
        .iter()
        .take(d)
        .map(|v| cdot_real(v, psi).norm_sqr())
        .sum();
    Ok(w.clamp(0.0, 1.0))
}

/// Evolves from the ground state of `H(0)` over total time `total_time`.
/// `criterion_s` are the sample points for the adiabatic criterion.
pub fn evolve_path(
    path: &dyn HamiltonianPath,
    total_time: f64,
    criterion_s: &[f64],
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    check_evolution_size(path.site_count())?;
    if !(total_time > 0.0 && total_time.is_finite()) {
        return Err(Error::param(format!("total_time must be positive, got {total_time}")));
    }
    if opts.trace_points < 2 || !(opts.step_tol > 0.0) {
        return Err(Error::param("need at least 2 trace points and a positive step tolerance"));
    }
    let (d, _) = final_spectrum(path)?;
    let start = start_state(path)?;
    let mut psi: Vec<Complex64> = start.iter().map(|&x| Complex64::new(x, 0.0)).collect();

    let bound = operator_at(path, 0.0)?
        .norm_bound()
        .max(operator_at(path, 1.0)?.norm_bound())
        .max(1e-12);
    let mut dt = (total_time / 10.0).min(1.0 / bound);
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut t = 0.0;
    let grid = super::terms::uniform_grid(opts.trace_points);
    let mut trace = Vec::with_capacity(grid.len());

    for (k, &s) in grid.iter().enumerate() {
        let target = if k + 1 == grid.len() { total_time } else { s * total_time };
        while t < target {
            let h = dt.min(target - t);
            let (big, e0) = cfm4_step(path, total_time, &psi, t, h)?;
            let (half, e1) = cfm4_step(path, total_time, &psi, t, h / 2.0)?;
            let (fine, e2) = cfm4_step(path, total_time, &half, t + h / 2.0, h / 2.0)?;
            let diff = big
                .iter()
                .zip(&fine)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let err = diff / 15.0 + e0 + e1 + e2;
            if err <= opts.step_tol || h <= 1e-14 * total_time {
                psi = fine;
                t = if h == target - t { target } else { t + h };
                accepted += 1;
                let grow = if err == 0.0 { 4.0 } else { 0.9 * (opts.step_tol / err).powf(0.2) };
                dt = h * grow.clamp(0.2, 4.0);
            } else {
                rejected += 1;
                dt = h * (0.9 * (opts.step_tol / err).powf(0.2)).clamp(0.1, 0.9);
            }
            if accepted + rejected > MAX_STEPS {
                return Err(Error::Numerical {
                    message: "step budget exhausted".into(),
                    residual: err,
                });
            }
            let drift = (cnorm(&psi) - 1.0).abs();
            if drift > NORM_FAILURE {
                return Err(Error::Numerical {
                    message: format!("norm drift {drift:.3e} at t = {t}"),
                    residual: drift,
                });
            }
        }
        let op = operator_at(path, s)?;
        trace.push((s, ground_weight(&op, &psi, d)?));
    }

    let success_probability = trace.last().map_or(0.0, |x| x.1);
    let criterion = criterion_path(path, total_time, criterion_s)?;
    Ok(EvolutionResult {
        norm_drift: (cnorm(&psi) - 1.0).abs(),
        final_state: psi,
        ground_overlap_trace: trace,
        success_probability,
        criterion_max: criterion.matrix_element_max,
        criterion_expectation_max: criterion.expectation_max,
        ground_degeneracy_final: d,
        accepted_steps: accepted,
        rejected_steps: rejected,
        regime: None,
    })
}

pub fn evolve_with(e: &Embedding, sched: &Schedule, opts: &EvolveOptions) -> Result<EvolutionResult> {
    let path = ScheduledPath::new(e, sched)?;
    let mut r = evolve_path(&path, sched.total_time, &sched.s_values(), opts)?;
    if matches!(path, ScheduledPath::Device(_)) {
        r.regime = Some(
            sched
                .s_values()
                .into_iter()
                .filter_map(|s| path.regime(s).map(|x| (s, x)))
                .collect(),
        );
    }
    Ok(r)
}

pub fn evolve(e: &Embedding, sched: &Schedule) -> Result<EvolutionResult> {
    evolve_with(e, sched, &EvolveOptions::default())
}
