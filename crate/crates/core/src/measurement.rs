//! Flux (z-basis) readout, the basis-mismatch error floor and repetition
//! decoding statistics.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::AXIS_C_DEG;
use crate::error::{Error, Result};
use crate::graph::{max_independent_sets, Graph};
use crate::lattice::{DecodedConfig, Decoder, Embedding, LogicalSpin};
use crate::seed;

/// Tolerance on `‖ψ‖ − 1` accepted by the sampler.
pub const NORM_TOL: f64 = 1e-6;

/// A state over the active sites. Basis index bit `k` is active site `k`,
/// with bit 0 meaning spin +1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateVector {
    Dense(Vec<Complex64>),
    Sparse {
        site_count: usize,
        amplitudes: Vec<(u64, Complex64)>,
    },
}

impl StateVector {
    pub fn site_count(&self) -> Result<usize> {
        match self {
            StateVector::Dense(v) => {
                if v.is_empty() || !v.len().is_power_of_two() {
                    Err(Error::Shape(format!("state length {} is not a power of two", v.len())))
                } else {
                    Ok(v.len().trailing_zeros() as usize)
                }
            }
            StateVector::Sparse { site_count, .. } => Ok(*site_count),
        }
    }

    fn support(&self) -> Box<dyn Iterator<Item = (u64, Complex64)> + '_> {
        match self {
            StateVector::Dense(v) => Box::new(v.iter().enumerate().map(|(i, a)| (i as u64, *a))),
            StateVector::Sparse { amplitudes, .. } => Box::new(amplitudes.iter().copied()),
        }
    }

    pub fn norm(&self) -> f64 {
        self.support().map(|(_, a)| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Equal-weight superposition of the embedded images of logical configs.
    pub fn embedded_superposition(e: &Embedding, configs: &[Vec<i8>]) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::param("no configurations to superpose"));
        }
        let amp = Complex64::new(1.0 / (configs.len() as f64).sqrt(), 0.0);
        let mut amplitudes: Vec<(u64, Complex64)> = configs
            .iter()
            .map(|c| Ok((embedded_basis_index(e, c)?, amp)))
            .collect::<Result<_>>()?;
        amplitudes.sort_by_key(|a| a.0);
        amplitudes.dedup_by_key(|a| a.0);
        if amplitudes.len() != configs.len() {
            return Err(Error::param("duplicate configurations"));
        }
        Ok(StateVector::Sparse {
            site_count: e.roles.len(),
            amplitudes,
        })
    }
}

/// Basis index of the lattice state where every site copies its vertex's spin.
pub fn embedded_basis_index(e: &Embedding, config: &[i8]) -> Result<u64> {
    if config.len() != e.graph.vertex_count() {
        return Err(Error::Shape(format!(
            "{} spins for {} vertices",
            config.len(),
            e.graph.vertex_count()
        )));
    }
    if e.roles.len() > 64 {
        return Err(Error::SizeLimit {
            what: "active sites for a basis index",
            actual: e.roles.len(),
            limit: 64,
        });
    }
    let mut index = 0u64;
    for (k, s) in e.roles.keys().enumerate() {
        let v = e.logical_of[s];
        if config[v] < 0 {
            index |= 1 << k;
        }
    }
    Ok(index)
}

pub fn spins_of(index: u64, n: usize) -> Vec<i8> {
    (0..n).map(|k| if index >> k & 1 == 0 { 1 } else { -1 }).collect()
}

/// Born-rule samples as basis indices.
pub fn sample_indices(state: &StateVector, shots: usize, seed: u64) -> Result<Vec<u64>> {
    let n = state.site_count()?;
    if n > 64 {
        return Err(Error::SizeLimit {
            what: "sites",
            actual: n,
            limit: 64,
        });
    }
    let norm = state.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::Contract(format!("state norm {norm} is not 1")));
    }
    let mut index = Vec::new();
    let mut cumulative = Vec::new();
    let mut acc = 0.0;
    for (i, a) in state.support() {
        let p = a.norm_sqr();
        if p > 0.0 {
            acc += p;
            index.push(i);
            cumulative.push(acc);
        }
    }
    Ok((0..shots)
        .into_par_iter()
        .map(|shot| {
            let u: f64 = seed::stream(seed, "born", shot as u64).gen::<f64>() * acc;
            let k = cumulative.partition_point(|&c| c <= u).min(index.len() - 1);
            index[k]
        })
        .collect())
}

/// Born-rule samples as spin assignments over the active sites.
pub fn sample_z(state: &StateVector, shots: usize, seed: u64) -> Result<Vec<Vec<i8>>> {
    let n = state.site_count()?;
    Ok(sample_indices(state, shots, seed)?
        .into_iter()
        .map(|i| spins_of(i, n))
        .collect())
}

/// `sin²(angle)`: flip probability of a z-basis readout of a qubit whose
/// eigenbasis is tilted by `angle` degrees.
pub fn error_floor(angle_deg: f64) -> f64 {
    angle_deg.to_radians().sin().powi(2)
}

fn check_probability(p: f64, max: f64) -> Result<()> {
    if (0.0..=max).contains(&p) {
        Ok(())
    } else {
        Err(Error::param(format!("probability {p} outside [0, {max}]")))
    }
}

/// Flips each spin independently with probability `p`; shot `i` draws from
/// its own stream so the result does not depend on scheduling.
pub fn apply_flip_noise(samples: &[Vec<i8>], p: f64, seed: u64) -> Result<Vec<Vec<i8>>> {
    check_probability(p, 0.5)?;
    Ok(samples
        .par_iter()
        .enumerate()
        .map(|(i, shot)| {
            let mut out = shot.clone();
            if p > 0.0 {
                let mut rng = seed::stream(seed, "flip", i as u64);
                for s in &mut out {
                    if rng.gen_bool(p) {
                        *s = -*s;
                    }
                }
            }
            out
        })
        .collect())
}

/// Probability that a majority vote over `r` copies is wrong.
pub fn repetition_logical_error(p: f64, r: usize) -> Result<f64> {
    check_probability(p, 1.0)?;
    if r.is_multiple_of(2) {
        return Err(Error::param(format!("repetition length must be odd, got {r}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let mut ln_choose = 0.0; // ln C(r, 0)
    let mut total = 0.0;
    for k in 0..=r {
        if k > 0 {
            ln_choose += ((r - k + 1) as f64).ln() - (k as f64).ln();
        }
        if 2 * k > r {
            total += (ln_choose + k as f64 * p.ln() + (r - k) as f64 * (1.0 - p).ln()).exp();
        }
    }
    Ok(total.min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    pub mismatch_angle: f64,
    pub extra_flip_prob: f64,
    pub shots: usize,
    pub seed: u64,
    /// Spin value that marks a vertex as in the set: `+1` for states built
    /// from the Ising map, `-1` for states evolved under the device
    /// Hamiltonians, whose positive fields favour `σ = −1` for set members.
    pub in_set_spin: i8,
}

impl Default for MeasurementModel {
    fn default() -> Self {
        MeasurementModel {
            mismatch_angle: AXIS_C_DEG,
            extra_flip_prob: 0.0,
            shots: 1000,
            seed: 0,
            in_set_spin: 1,
        }
    }
}

impl MeasurementModel {
    pub fn flip_probability(&self) -> f64 {
        (error_floor(self.mismatch_angle) + self.extra_flip_prob).min(0.5)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.extra_flip_prob, 0.5)?;
        if !self.mismatch_angle.is_finite() {
            return Err(Error::param("mismatch angle must be finite"));
        }
        if self.in_set_spin.abs() != 1 {
            return Err(Error::param("in_set_spin must be +1 or -1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ShotRecord {
    pub spins: Vec<i8>,
    pub decoded: DecodedConfig,
    pub valid_mis: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasurementStats {
    pub shots: usize,
    pub fraction_valid: f64,
    /// Largest independent set among decoded shots, if any shot decoded to one.
    pub best_size: Option<usize>,
    pub mis_size: usize,
    /// Decoded logical spins that differ from the noiseless readout, per vertex and shot.
    pub logical_error_rate_observed: f64,
    pub physical_flip_rate_observed: f64,
    pub flip_probability: f64,
    /// `"agreeing/cluster size"` → count over all vertices and shots.
    pub per_cluster_agreement: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasurementOutcome {
    pub stats: MeasurementStats,
    #[serde(skip)]
    pub records: Vec<ShotRecord>,
}

/// Samples, adds readout noise, decodes each vertex by majority and checks
/// the decoded set against the graph's maximum independent sets.
pub fn measure_and_decode(
    e: &Embedding,
    state: &StateVector,
    model: &MeasurementModel,
    graph: &Graph,
) -> Result<MeasurementOutcome> {
    model.validate()?;
    if graph != &e.graph {
        return Err(Error::Contract("graph differs from the embedded graph".into()));
    }
    let n = state.site_count()?;
    if n != e.roles.len() {
        return Err(Error::Shape(format!(
            "state has {n} sites, embedding has {} active sites",
            e.roles.len()
        )));
    }
    let mis_size = max_independent_sets(graph)?.size;
    let p = model.flip_probability();
    let clean = sample_z(state, model.shots, model.seed)?;
    let noisy = apply_flip_noise(&clean, p, seed::child(model.seed, "readout"))?;
    let decoder = Decoder::new(e);
    let orient = |spins: &[i8]| -> Vec<i8> { spins.iter().map(|&x| x * model.in_set_spin).collect() };

    let records: Vec<(ShotRecord, usize, usize)> = clean
        .par_iter()
        .zip(noisy)
        .map(|(c, spins)| {
            let reference = decoder.decode(&orient(c))?;
            let decoded = decoder.decode(&orient(&spins))?;
            let flips = c.iter().zip(&spins).filter(|(a, b)| a != b).count();
            let wrong = reference
                .logical_spins
                .iter()
                .zip(&decoded.logical_spins)
                .filter(|(a, b)| a != b || **b == LogicalSpin::Inconsistent)
                .count();
            let valid_mis = decoded
                .in_set()
                .is_some_and(|set| set.len() == mis_size && graph.is_independent(&set));
            Ok((
                ShotRecord {
                    spins,
                    decoded,
                    valid_mis,
                },
                flips,
                wrong,
            ))
        })
        .collect::<Result<_>>()?;

    let shots = records.len();
    let mut histogram = BTreeMap::new();
    let (mut valid, mut flips, mut wrong) = (0usize, 0usize, 0usize);
    let mut best: Option<usize> = None;
    for (r, f, w) in &records {
        valid += r.valid_mis as usize;
        flips += f;
        wrong += w;
        for (a, s) in r.decoded.agree_counts.iter().zip(&r.decoded.group_sizes) {
            *histogram.entry(format!("{a}/{s}")).or_insert(0) += 1;
        }
        if let Some(set) = r.decoded.in_set() {
            if graph.is_independent(&set) {
                best = Some(best.map_or(set.len(), |b| b.max(set.len())));
            }
        }
    }
    let denom = |x: usize| if x == 0 { 1.0 } else { x as f64 };
    let stats = MeasurementStats {
        shots,
        fraction_valid: valid as f64 / denom(shots),
        best_size: best,
        mis_size,
        logical_error_rate_observed: wrong as f64 / denom(shots * graph.vertex_count()),
        physical_flip_rate_observed: flips as f64 / denom(shots * n),
        flip_probability: p,
        per_cluster_agreement: histogram,
    };
    Ok(MeasurementOutcome {
        stats,
        records: records.into_iter().map(|x| x.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::{ising_ground_states, mis_to_ising};
    use crate::lattice::{embed_with_redundancy, EmbedOptions, TriangularLattice};

    fn basis(n: usize, index: usize) -> StateVector {
        let mut v = vec![Complex64::default(); 1 << n];
        v[index] = Complex64::new(1.0, 0.0);
        StateVector::Dense(v)
    }

    #[test]
    fn all_up_state() {
        let shots = sample_z(&basis(2, 0), 50, 1).unwrap();
        assert!(shots.iter().all(|s| s == &vec![1, 1]));
    }

    #[test]
    fn uniform_superposition() {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let s = StateVector::Dense(vec![a, a]);
        let shots = sample_z(&s, 10_000, 3).unwrap();
        let up = shots.iter().filter(|x| x[0] == 1).count() as f64 / 1e4;
        assert!((up - 0.5).abs() < 0.02, "{up}");
    }

    #[test]
    fn chi_square_on_random_states() {
        for trial in 0..5u64 {
            let mut rng = seed::stream(99, "state", trial);
            let mut v: Vec<Complex64> = (0..8)
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            v.iter_mut().for_each(|z| *z /= n);
            let probs: Vec<f64> = v.iter().map(|z| z.norm_sqr()).collect();
            let shots = 10_000;
            let idx = sample_indices(&StateVector::Dense(v), shots, trial).unwrap();
            let mut counts = [0usize; 8];
            idx.iter().for_each(|&i| counts[i as usize] += 1);
            let chi2: f64 = (0..8)
                .map(|i| {
                    let e = probs[i] * shots as f64;
                    (counts[i] as f64 - e).powi(2) / e
                })
                .sum();
            // 99.9th percentile of chi-square with 7 degrees of freedom.
            assert!(chi2 < 24.32, "trial {trial}: chi2 = {chi2}");
        }
    }

    #[test]
    fn unnormalized_state_rejected() {
        let s = StateVector::Dense(vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
        assert!(matches!(sample_z(&s, 1, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn floors() {
        assert!((error_floor(19.0) - 0.106).abs() < 5e-4);
        assert_eq!(error_floor(0.0), 0.0);
        assert!((error_floor(45.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn flip_noise() {
        let samples = vec![vec![1i8; 1000]; 100];
        assert_eq!(apply_flip_noise(&samples, 0.0, 1).unwrap(), samples);
        let half = apply_flip_noise(&samples, 0.5, 1).unwrap();
        let flipped = half.iter().flatten().filter(|&&s| s == -1).count() as f64 / 1e5;
        assert!((flipped - 0.5).abs() < 0.005);
        let other = apply_flip_noise(&samples, 0.5, 2).unwrap();
        assert_ne!(half, other);
        let flipped2 = other.iter().flatten().filter(|&&s| s == -1).count() as f64 / 1e5;
        assert!((flipped2 - 0.5).abs() < 0.005);
        assert!(apply_flip_noise(&samples, 0.6, 1).is_err());
    }

    #[test]
    fn repetition() {
        assert!((repetition_logical_error(0.11, 7).unwrap() - 3.9e-3).abs() < 1e-4);
        assert_eq!(repetition_logical_error(0.0, 5).unwrap(), 0.0);
        assert!((repetition_logical_error(0.5, 7).unwrap() - 0.5).abs() < 1e-12);
        assert!((repetition_logical_error(0.2, 1).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(repetition_logical_error(0.1, 4), Err(Error::Parameter(_))));
    }

    fn k4_setup() -> (Embedding, StateVector) {
        let g = Graph::new(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        let e = embed_with_redundancy(&g, &TriangularLattice::new(12, 12), &EmbedOptions::default(), 7)
            .unwrap();
        let ground = ising_ground_states(&mis_to_ising(&g, 2.0).unwrap()).unwrap();
        let state = StateVector::embedded_superposition(&e, &ground.configs).unwrap();
        (e, state)
    }

    #[test]
    fn k4_ground_state_decodes_to_mis() {
        let (e, state) = k4_setup();
        let model = MeasurementModel {
            mismatch_angle: 0.0,
            shots: 500,
            ..Default::default()
        };
        let out = measure_and_decode(&e, &state, &model, &e.graph.clone()).unwrap();
        assert_eq!(out.stats.fraction_valid, 1.0);
        assert_eq!(out.stats.best_size, Some(1));
        assert_eq!(out.stats.physical_flip_rate_observed, 0.0);
        // Chain dummies vote too, so groups can exceed the redundancy.
        for key in out.stats.per_cluster_agreement.keys() {
            let (a, s) = key.split_once('/').unwrap();
            assert_eq!(a, s);
        }

        let noisy = MeasurementModel {
            shots: 2000,
            ..Default::default()
        };
        let out = measure_and_decode(&e, &state, &noisy, &e.graph.clone()).unwrap();
        assert!((out.stats.physical_flip_rate_observed - 0.106).abs() < 0.01);
    }

    #[test]
    fn inverted_orientation_reads_flipped_states() {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let e = embed_with_redundancy(&g, &TriangularLattice::new(8, 8), &EmbedOptions::default(), 3).unwrap();
        // {0, 2} written with set members as -1.
        let state = StateVector::embedded_superposition(&e, &[vec![-1, 1, -1]]).unwrap();
        let model = |in_set_spin| MeasurementModel {
            mismatch_angle: 0.0,
            shots: 50,
            in_set_spin,
            ..Default::default()
        };
        assert_eq!(measure_and_decode(&e, &state, &model(-1), &g).unwrap().stats.fraction_valid, 1.0);
        assert_eq!(measure_and_decode(&e, &state, &model(1), &g).unwrap().stats.fraction_valid, 0.0);
        assert!(model(0).validate().is_err());
    }

    #[test]
    fn deterministic_records() {
        let (e, state) = k4_setup();
        let model = MeasurementModel {
            shots: 50,
            seed: 11,
            ..Default::default()
        };
        let a = measure_and_decode(&e, &state, &model, &e.graph.clone()).unwrap();
        let b = measure_and_decode(&e, &state, &model, &e.graph.clone()).unwrap();
        let spins = |o: &MeasurementOutcome| o.records.iter().map(|r| r.spins.clone()).collect::<Vec<_>>();
        assert_eq!(spins(&a), spins(&b));
    }
}
