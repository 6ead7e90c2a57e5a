//! Matrix-free real Pauli-string operators.

use std::collections::BTreeMap;
use std::ops::{AddAssign, Mul};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::terms::TermList;
use crate::device::axis_components;
use crate::error::{Error, Result};

/// Largest number of sites a realised operator may act on.
pub const MAX_SITES: usize = 24;

const PARALLEL_MIN_DIM: usize = 1 << 12;

/// Amplitude types the operator can act on.
pub trait Amplitude: Copy + Send + Sync + AddAssign + Mul<f64, Output = Self> + Default {}
impl Amplitude for f64 {}
impl Amplitude for Complex64 {}

/// Pauli strings sharing one X-mask.
#[derive(Debug, Clone, PartialEq)]
struct FlipGroup {
    x: u64,
    /// `(z-mask, coefficient)`.
    phases: Vec<(u64, f64)>,
}

/// `Σ c · X^x Z^z` over bit-masked Pauli strings. Basis index bit `k` is
/// site `k`; bit value 0 is spin +1 (`σ_z = +1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub site_count: usize,
    groups: Vec<FlipGroup>,
}

impl Operator {
    pub fn dim(&self) -> usize {
        1 << self.site_count
    }

    /// `(x-mask, z-mask, coefficient)` in canonical order.
    pub fn strings(&self) -> impl Iterator<Item = (u64, u64, f64)> + '_ {
        self.groups
            .iter()
            .flat_map(|g| g.phases.iter().map(move |&(z, c)| (g.x, z, c)))
    }

    /// Upper bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        self.strings().map(|(_, _, c)| c.abs()).sum()
    }

    #[inline]
    fn row<T: Amplitude>(&self, i: usize, v: &[T]) -> T {
        let mut acc = T::default();
        for g in &self.groups {
            let mut w = 0.0;
            for &(z, c) in &g.phases {
                if (i as u64 & z).count_ones() & 1 == 0 {
                    w += c;
                } else {
                    w -= c;
                }
            }
            if w != 0.0 {
                acc += v[i ^ g.x as usize] * w;
            }
        }
        acc
    }

    /// `out = H v`.
    pub fn apply_into<T: Amplitude>(&self, v: &[T], out: &mut [T]) {
        assert_eq!(v.len(), self.dim());
        assert_eq!(out.len(), self.dim());
        if self.dim() >= PARALLEL_MIN_DIM {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(i, o)| *o = self.row(i, v));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.row(i, v);
            }
        }
    }

    pub fn apply<T: Amplitude>(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); v.len()];
        self.apply_into(v, &mut out);
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (x, z, c) in self.strings() {
            for i in 0..d {
                let sign = if (i as u64 & z).count_ones() & 1 == 0 { 1.0 } else { -1.0 };
                m[(i, i ^ x as usize)] += sign * c;
            }
        }
        m
    }

    /// Expectation value `⟨a|H|b⟩` for real vectors.
    pub fn matrix_element(&self, a: &[f64], b: &[f64]) -> f64 {
        let hb = self.apply(b);
        dot(a, &hb)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Turns a symbolic term list into a Pauli-string operator.
pub fn realize(terms: &TermList) -> Result<Operator> {
    let n = terms.site_count;
    if n > MAX_SITES {
        return Err(Error::SizeLimit {
            what: "sites",
            actual: n,
            limit: MAX_SITES,
        });
    }
    let mut acc: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    for t in &terms.terms {
        if t.coefficient == 0.0 {
            continue;
        }
        // Expand Π (cos θ Z − sin θ X) factor by factor.
        let mut partial: Vec<(u64, u64, f64)> = vec![(0, 0, t.coefficient)];
        for &(site, theta) in &t.factors {
            let (cz, sx) = axis_components(theta);
            let bit = 1u64 << site;
            let mut next = Vec::with_capacity(partial.len() * 2);
            for &(x, z, c) in &partial {
                if cz != 0.0 {
                    next.push((x, z | bit, c * cz));
                }
                if sx != 0.0 {
                    next.push((x | bit, z, -c * sx));
                }
            }
            partial = next;
        }
        for (x, z, c) in partial {
            *acc.entry((x, z)).or_insert(0.0) += c;
        }
    }
    let mut groups: Vec<FlipGroup> = Vec::new();
    for ((x, z), c) in acc {
        if c == 0.0 {
            continue;
        }
        match groups.last_mut() {
            Some(g) if g.x == x => g.phases.push((z, c)),
            _ => groups.push(FlipGroup {
                x,
                phases: vec![(z, c)],
            }),
        }
    }
    Ok(Operator {
        site_count: n,
        groups,
    })
}

/// `true` when the dense matrix equals its transpose within `tol`.
pub fn is_hermitian(op: &Operator, tol: f64) -> bool {
    let m = op.to_dense();
    (&m - m.transpose()).abs().max() <= tol
}
