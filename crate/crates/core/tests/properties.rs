use std::collections::BTreeSet;

use aqc::device::{axis_operator, nmax_estimate, EnergyUnit, GapConvention};
use aqc::evolution::{
    finite_difference, is_hermitian, perturb_and_refit, realize, spectrum, terms_from_ising,
    HamiltonianPath, Schedule,
    ScheduledPath, Term, TermList,
};
use aqc::graph::{
    max_independent_sets, max_independent_sets_with, parse_graph, serialize_graph, validate, Graph,
    MisOptions, Planarity,
};
use aqc::ising::{
    ising_energy, ising_ground_states, mis_to_ising, verify_mis_encoding, IsingModel,
};
use aqc::lattice::{
    decode_config, default_chain_strength, embed_graph, ideal_embedded_model, validate_embedding,
    EmbedOptions, Site, TriangularLattice,
};
use aqc::seed;
use proptest::prelude::*;
use rand::Rng;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        let m = pairs.len();
        proptest::collection::vec(any::<bool>(), m).prop_map(move |mask| {
            let edges = pairs.iter().zip(&mask).filter(|(_, &k)| k).map(|(e, _)| *e);
            Graph::new(n, edges).unwrap()
        })
    })
}

/// Random graph with max degree 3, built by rejection on each candidate edge.
fn random_degree3_graph(rng: &mut impl Rng, n: usize, density: f64) -> Graph {
    let mut deg = vec![0; n];
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if deg[u] < 3 && deg[v] < 3 && rng.gen_bool(density) {
                deg[u] += 1;
                deg[v] += 1;
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

fn brute_force_mis(g: &Graph) -> (usize, BTreeSet<Vec<usize>>) {
    let n = g.vertex_count();
    let mut best = 0;
    let mut sets = BTreeSet::new();
    for mask in 0u32..(1 << n) {
        let set: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        if !g.is_independent(&set) {
            continue;
        }
        if set.len() > best {
            best = set.len();
            sets.clear();
        }
        if set.len() == best {
            sets.insert(set);
        }
    }
    (best, sets)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn mis_matches_brute_force(g in graph_strategy(16)) {
        let fast = max_independent_sets(&g).unwrap();
        let (size, sets) = brute_force_mis(&g);
        prop_assert_eq!(fast.size, size);
        prop_assert_eq!(fast.sets.iter().cloned().collect::<BTreeSet<_>>(), sets);
        let exhaustive = max_independent_sets_with(&g, &MisOptions { verify_exhaustive: true, ..Default::default() }).unwrap();
        prop_assert_eq!(exhaustive.sets, fast.sets);
    }

    #[test]
    fn degrees_match_recount(g in graph_strategy(12)) {
        let r = validate(&g);
        let mut deg = vec![0usize; g.vertex_count()];
        for &(u, v) in g.edges() {
            deg[u] += 1;
            deg[v] += 1;
        }
        prop_assert_eq!(r.max_degree, deg.iter().copied().max().unwrap_or(0));
        prop_assert_eq!(r.is_degree3_ok, r.max_degree <= 3);
        prop_assert!(r.planarity != Planarity::NotChecked);
    }

    #[test]
    fn graph_text_round_trip(g in graph_strategy(12)) {
        prop_assert_eq!(parse_graph(&serialize_graph(&g)).unwrap(), g.clone());
        let json = serde_json::to_string(&g).unwrap();
        prop_assert_eq!(serde_json::from_str::<Graph>(&json).unwrap(), g);
    }

    #[test]
    fn encoding_is_exact_for_strict_penalties(g in graph_strategy(9), pick in 0usize..3) {
        let a = [1.5, 2.0, 4.0][pick];
        let m = mis_to_ising(&g, a).unwrap();
        prop_assert!(verify_mis_encoding(&g, &m).unwrap().is_exact);
    }

    #[test]
    fn ground_states_invariant_under_positive_scaling(g in graph_strategy(8), c in 0.01f64..50.0) {
        let m = mis_to_ising(&g, 2.0).unwrap();
        let a = ising_ground_states(&m).unwrap();
        let b = ising_ground_states(&m.scaled(c)).unwrap();
        prop_assert_eq!(a.configs, b.configs);
    }

    #[test]
    fn energy_is_sum_of_parts(g in graph_strategy(8), mask in any::<u32>()) {
        let m = mis_to_ising(&g, 2.0).unwrap();
        let n = m.n;
        let s: Vec<i8> = (0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
        let field: f64 = (0..n).map(|i| m.fields[i] * s[i] as f64).sum();
        let coupling: f64 = m.couplings.iter().map(|&(i, j, c)| c * (s[i] * s[j]) as f64).sum();
        prop_assert!((ising_energy(&m, &s).unwrap() - field - coupling).abs() < 1e-12);
    }

    #[test]
    fn penalty_enters_fields_affinely(g in graph_strategy(8), a in 0.5f64..5.0) {
        let m1 = mis_to_ising(&g, a).unwrap();
        let m2 = mis_to_ising(&g, 2.0 * a).unwrap();
        let m0 = mis_to_ising(&g, 1e-9).unwrap();
        for i in 0..g.vertex_count() {
            // h(A) = h(0) + A d/4
            let slope = g.degree(i) as f64 / 4.0;
            prop_assert!((m1.fields[i] - (m0.fields[i] + (a - 1e-9) * slope)).abs() < 1e-9);
            prop_assert!((m2.fields[i] - m1.fields[i] - a * slope).abs() < 1e-9);
        }
    }

    #[test]
    fn axis_operators_are_hermitian(theta in -720.0f64..720.0) {
        let a = axis_operator(theta);
        prop_assert!((a - a.adjoint()).norm() < 1e-15);
        let sq = a * a;
        prop_assert!((sq[(0, 0)].re - 1.0).abs() < 1e-12 && sq[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn realized_operators_are_hermitian(
        raw in proptest::collection::vec((-1.0f64..1.0, 0usize..4, 0usize..4, 0.0f64..360.0, 0.0f64..360.0), 1..8)
    ) {
        let terms = raw.into_iter().map(|(c, i, j, a, b)| {
            if i == j { Term::new(c, vec![(i, a)]) } else { Term::new(c, vec![(i, a), (j, b)]) }
        }).collect();
        let op = realize(&TermList::new(4, terms).unwrap()).unwrap();
        prop_assert!(is_hermitian(&op, 1e-14));
    }

    #[test]
    fn nmax_decreases_with_temperature(t1 in 0.001f64..1.0, f in 1.01f64..10.0) {
        let a = nmax_estimate(18.0, EnergyUnit::GHz, t1, GapConvention::FieldStrength, None).unwrap();
        let b = nmax_estimate(18.0, EnergyUnit::GHz, t1 * f, GapConvention::FieldStrength, None).unwrap();
        prop_assert!(b.n_max <= a.n_max);
    }
}

#[test]
fn random_planar_corpus_embeds() {
    let mut embedded = 0;
    let mut rng = seed::stream(2024, "corpus", 0);
    let mut tried = 0;
    while embedded < 100 {
        tried += 1;
        assert!(tried < 1000, "could not generate enough planar graphs");
        let n = rng.gen_range(1..=10);
        let g = random_degree3_graph(&mut rng, n, 0.4);
        if validate(&g).planarity != Planarity::Planar {
            continue;
        }
        let opts = EmbedOptions { seed: tried, ..Default::default() };
        let e = embed_graph(&g, &TriangularLattice::new(16, 16), &opts)
            .unwrap_or_else(|err| panic!("graph {:?}: {err}", g.edges()));
        let report = validate_embedding(&e);
        assert!(report.pass, "{:?}", report.violations);
        embedded += 1;
    }
}

#[test]
fn embeddings_avoid_defects() {
    for trial in 0..20u64 {
        let mut rng = seed::stream(5, "defects", trial);
        let n = rng.gen_range(2..=6);
        let g = random_degree3_graph(&mut rng, n, 0.5);
        let defects: Vec<Site> = (0..25)
            .map(|_| Site::new(rng.gen_range(0..14), rng.gen_range(0..14)))
            .collect();
        let lattice = TriangularLattice::new(14, 14).with_defects(defects.iter().copied());
        let e = embed_graph(&g, &lattice, &EmbedOptions { seed: trial, ..Default::default() }).unwrap();
        assert!(validate_embedding(&e).pass);
        for d in &defects {
            assert!(!e.roles.contains_key(d), "site {d} is defective but used");
        }
    }
}

/// Small logical graphs whose ideal embedded model has at most 16 sites.
pub fn small_embedded_instances(count: usize) -> Vec<(Graph, aqc::lattice::Embedding)> {
    let mut out = Vec::new();
    let mut rng = seed::stream(77, "small-instances", 0);
    let mut attempt = 0u64;
    while out.len() < count {
        attempt += 1;
        assert!(attempt < 5000);
        let n = rng.gen_range(1..=4);
        let g = random_degree3_graph(&mut rng, n, 0.6);
        let opts = EmbedOptions { seed: attempt, ..Default::default() };
        let Ok(e) = embed_graph(&g, &TriangularLattice::new(5, 5), &opts) else { continue };
        if e.roles.len() <= 16 {
            out.push((g, e));
        }
    }
    out
}

#[test]
fn embedded_ground_states_decode_to_logical_ground_states() {
    for (g, e) in small_embedded_instances(20) {
        let logical = mis_to_ising(&g, 2.0).unwrap();
        let lm = ising_ground_states(&logical).unwrap();
        let em = ideal_embedded_model(&e, &logical, None).unwrap();
        let eg = ising_ground_states(&em).unwrap();
        let sites = e.active_sites();
        let mut decoded = BTreeSet::new();
        for cfg in &eg.configs {
            let spins = sites.iter().copied().zip(cfg.iter().copied()).collect();
            let d = decode_config(&e, &spins).unwrap();
            assert!(d.chain_agreement.iter().all(|&a| a == 1.0), "broken chain in a ground state");
            decoded.insert(d.logical_spins.iter().map(|s| s.value().unwrap()).collect::<Vec<i8>>());
        }
        let expected: BTreeSet<Vec<i8>> = lm.configs.iter().cloned().collect();
        assert_eq!(decoded, expected, "graph {:?}", g.edges());
    }
}

#[test]
fn embedded_spectrum_matches_ising_oracle() {
    for (g, e) in small_embedded_instances(8) {
        let logical = mis_to_ising(&g, 2.0).unwrap();
        let k = default_chain_strength(&logical);
        let em: IsingModel = ideal_embedded_model(&e, &logical, Some(k)).unwrap();
        let op = realize(&terms_from_ising(&em)).unwrap();
        let lowest = spectrum(&op, 1).unwrap().values[0];
        let expected = ising_ground_states(&logical).unwrap().energy - k * e.fm_edge_count() as f64;
        assert!(
            (lowest - expected).abs() <= 1e-9 * expected.abs().max(1.0),
            "{lowest} vs {expected}"
        );
    }
}

#[test]
fn finite_difference_matches_analytic_derivative() {
    let (_, e) = small_embedded_instances(8)
        .into_iter()
        .find(|(_, e)| e.dummy_count() > 0)
        .expect("an instance with a chain");
    let mut rng = seed::stream(3, "fd", 0);
    for sched in [Schedule::ideal(1.0, 2), Schedule::device(1.0, 2)] {
        let path = ScheduledPath::new(&e, &sched).unwrap();
        for _ in 0..10 {
            let s: f64 = rng.gen_range(0.0..1.0);
            let fd = realize(&finite_difference(&path, s, 1e-6).unwrap()).unwrap().to_dense();
            let an = realize(&path.derivative(s).unwrap()).unwrap().to_dense();
            let scale = an.abs().max().max(1e-12);
            assert!((fd - &an).abs().max() <= 1e-6 * scale, "s = {s}");
        }
    }
}

#[test]
fn robustness_degrades_with_size_under_transverse_field() {
    let mut losses = Vec::new();
    for n in [2usize, 4, 6, 8] {
        let g = Graph::new(n, (0..n - 1).map(|i| (i, i + 1))).unwrap();
        let mut terms = terms_from_ising(&mis_to_ising(&g, 2.0).unwrap()).terms;
        terms.extend((0..n).map(|i| Term::new(0.3, vec![(i, 90.0)])));
        let t = TermList::new(n, terms).unwrap();
        let r = perturb_and_refit(&t, 0.05, 200, 5).unwrap();
        assert_eq!(r.ground_degeneracy, 1);
        losses.push(1.0 - r.mean_fidelity);
    }
    assert!(losses.windows(2).all(|w| w[1] > w[0]), "{losses:?}");
}
