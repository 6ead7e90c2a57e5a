//! Low-lying eigenpairs of real symmetric operators.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use super::operator::{dot, Operator};
use crate::error::{Error, Result};
use crate::seed;

/// Above this many sites the spectrum is computed iteratively.
pub const DENSE_MAX_SITES: usize = 10;
/// Relative tolerance for counting degenerate ground levels.
pub const DEGENERACY_TOL: f64 = 1e-9;

const MAX_KRYLOV: usize = 160;
const MAX_RESTARTS: usize = 400;

#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    /// Ascending.
    pub values: Vec<f64>,
    /// Unit vectors; the largest-magnitude component of each is positive.
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

impl Spectrum {
    /// Number of levels within the degeneracy tolerance of the lowest.
    pub fn ground_degeneracy(&self) -> usize {
        degeneracy(&self.values)
    }

    /// `E_d − E_0`, or `None` when fewer than `d + 1` levels are known.
    pub fn gap_above(&self, d: usize) -> Option<f64> {
        Some(self.values.get(d)? - self.values[0])
    }
}

pub fn degeneracy(values: &[f64]) -> usize {
    let Some(&e0) = values.first() else { return 0 };
    let tol = DEGENERACY_TOL * e0.abs().max(1.0);
    values.iter().take_while(|&&e| e - e0 <= tol).count()
}

fn fix_gauge(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // Two passes keep the basis orthogonal to working precision.
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
    }
}

fn residual(op: &Operator, value: f64, v: &[f64]) -> f64 {
    let hv = op.apply(v);
    hv.iter()
        .zip(v)
        .map(|(h, x)| (h - value * x).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// The `k` lowest eigenpairs of `op` (fewer if the space is smaller).
pub fn spectrum(op: &Operator, k: usize) -> Result<Spectrum> {
    let k = k.min(op.dim()).max(1);
    if op.site_count <= DENSE_MAX_SITES {
        dense_spectrum(op, k)
    } else {
        lanczos_spectrum(op, k)
    }
}

fn dense_spectrum(op: &Operator, k: usize) -> Result<Spectrum> {
    let eig = SymmetricEigen::new(op.to_dense());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut out = Spectrum {
        values: Vec::with_capacity(k),
        vectors: Vec::with_capacity(k),
        residuals: Vec::with_capacity(k),
    };
    for &j in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        fix_gauge(&mut v);
        out.residuals.push(residual(op, eig.eigenvalues[j], &v));
        out.values.push(eig.eigenvalues[j]);
        out.vectors.push(v);
    }
    Ok(out)
}

fn lanczos_spectrum(op: &Operator, k: usize) -> Result<Spectrum> {
    let tol = 1e-10 * op.norm_bound().max(1e-3);
    let mut locked: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for j in 0..k {
        let mut rng = seed::stream(0, "lanczos-start", j as u64);
        let start: Vec<f64> = (0..op.dim()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let (value, v, r) = lowest_deflated(op, &locked, start, tol)?;
        values.push(value);
        residuals.push(r);
        locked.push(v);
    }
    // Deflation can return near-degenerate pairs out of order.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut vectors = Vec::with_capacity(k);
    for &i in &order {
        let mut v = std::mem::take(&mut locked[i]);
        fix_gauge(&mut v);
        vectors.push(v);
    }
    Ok(Spectrum {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors,
        residuals: order.iter().map(|&i| residuals[i]).collect(),
    })
}

/// Lowest eigenpair of `op` restricted to the complement of `locked`.
fn lowest_deflated(
    op: &Operator,
    locked: &[Vec<f64>],
    mut start: Vec<f64>,
    tol: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    let free = op.dim() - locked.len();
    let m_max = free.min(MAX_KRYLOV);
    let mut last = (f64::NAN, f64::INFINITY);
    for _ in 0..MAX_RESTARTS {
        orthogonalize(&mut start, locked);
        if normalize(&mut start) == 0.0 {
            return Err(Error::Numerical {
                message: "Lanczos start vector vanished after deflation".into(),
                residual: f64::NAN,
            });
        }
        let mut basis: Vec<Vec<f64>> = vec![start];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        loop {
            let j = basis.len() - 1;
            let mut w = op.apply(&basis[j]);
            alpha.push(dot(&w, &basis[j]));
            orthogonalize(&mut w, locked);
            orthogonalize(&mut w, &basis);
            let b = dot(&w, &w).sqrt();
            if basis.len() == m_max || b <= 1e-14 * op.norm_bound().max(1e-300) {
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
        let lo = (0..m)
            .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
            .expect("non-empty");
        let theta = eig.eigenvalues[lo];
        let mut x = vec![0.0; op.dim()];
        for (i, v) in basis.iter().enumerate() {
            let c = eig.eigenvectors[(i, lo)];
            x.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
        }
        orthogonalize(&mut x, locked);
        normalize(&mut x);
        let r = residual(op, theta, &x);
        if r <= tol {
            return Ok((theta, x, r));
        }
        last = (theta, r);
        start = x;
    }
    Err(Error::Numerical {
        message: format!("Lanczos did not converge (last Ritz value {})", last.0),
        residual: last.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::operator::realize;
    use crate::evolution::terms::{Term, TermList};

    fn chain(n: usize) -> TermList {
        let mut terms = Vec::new();
        for i in 0..n {
            terms.push(Term::new(0.3 + 0.01 * i as f64, vec![(i, 90.0)]));
            terms.push(Term::new(0.1, vec![(i, 0.0)]));
            if i + 1 < n {
                terms.push(Term::new(1.0, vec![(i, 0.0), (i + 1, 0.0)]));
            }
        }
        TermList::new(n, terms).unwrap()
    }

    #[test]
    fn dense_and_lanczos_agree() {
        let op = realize(&chain(9)).unwrap();
        let dense = dense_spectrum(&op, 4).unwrap();
        let iter = lanczos_spectrum(&op, 4).unwrap();
        for j in 0..4 {
            assert!((dense.values[j] - iter.values[j]).abs() < 1e-9);
            assert!(iter.residuals[j] <= 1e-8);
        }
        let overlap = dot(&dense.vectors[0], &iter.vectors[0]);
        assert!((overlap - 1.0).abs() < 1e-8, "{overlap}");
    }

    #[test]
    fn lanczos_vectors_orthonormal_on_degenerate_levels() {
        // Classical Ising ring: every level is degenerate.
        let n = 11;
        let terms = (0..n)
            .map(|i| Term::new(1.0, vec![(i, 0.0), ((i + 1) % n, 0.0)]))
            .collect();
        let op = realize(&TermList::new(n, terms).unwrap()).unwrap();
        let s = spectrum(&op, 6).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let d = dot(&s.vectors[i], &s.vectors[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-10);
            }
        }
        // Odd frustrated ring: ground energy −(n − 2), degeneracy 2n.
        assert!((s.values[0] + (n as f64 - 2.0)).abs() < 1e-9);
    }

    #[test]
    fn degeneracy_count() {
        assert_eq!(degeneracy(&[-1.0, -1.0 + 1e-12, -0.5]), 2);
        assert_eq!(degeneracy(&[]), 0);
    }
}
