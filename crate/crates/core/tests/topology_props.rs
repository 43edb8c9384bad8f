use dmgda_core::topology::{build_mixing, validate_mixing, GraphFamily, MixingMatrix, Weighting};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn family(kind: usize, m: usize, chords: &[(usize, usize)]) -> GraphFamily {
    match kind {
        0 => GraphFamily::Complete,
        1 => GraphFamily::Ring,
        2 => GraphFamily::Path,
        3 => {
            let rows = (1..=m).rev().find(|r| m.is_multiple_of(*r) && r * r <= m).unwrap_or(1);
            GraphFamily::Grid2d { rows, cols: m / rows }
        }
        _ => {
            // path backbone keeps it connected
            let mut edges: Vec<(usize, usize)> = (1..m).map(|i| (i - 1, i)).collect();
            edges.extend(chords.iter().map(|&(a, b)| (a % m, b % m)));
            GraphFamily::Custom { edges }
        }
    }
}

fn weighting(lazy: bool) -> Weighting {
    if lazy {
        Weighting::LazyUniform
    } else {
        Weighting::Metropolis
    }
}

fn mean(vs: &[DVector<f64>]) -> DVector<f64> {
    vs.iter().fold(DVector::zeros(vs[0].len()), |a, v| a + v) / vs.len() as f64
}

fn deviation(vs: &[DVector<f64>]) -> f64 {
    let c = mean(vs);
    vs.iter().map(|v| (v - &c).norm_squared()).sum::<f64>().sqrt()
}

fn arb_graph() -> impl Strategy<Value = (MixingMatrix, usize)> {
    (1usize..=16, 0usize..5, any::<bool>(), prop::collection::vec((0usize..16, 0usize..16), 0..8)).prop_map(
        |(m, kind, lazy, chords)| {
            let w = build_mixing(&family(kind, m, &chords), m, weighting(lazy)).unwrap();
            (w, m)
        },
    )
}

fn arb_vectors(m: usize) -> impl Strategy<Value = Vec<DVector<f64>>> {
    (1usize..=4).prop_flat_map(move |dim| {
        prop::collection::vec(prop::collection::vec(-1e3f64..1e3, dim), m)
            .prop_map(|rows| rows.into_iter().map(DVector::from_vec).collect())
    })
}

proptest! {
    #[test]
    fn constructed_matrices_validate((w, _) in arb_graph()) {
        let report = validate_mixing(w.weights());
        prop_assert!(report.passed(), "{:?}", report.failures());
        for i in 0..w.m() {
            prop_assert!((w.weights().row(i).sum() - 1.0).abs() <= 1e-12);
            prop_assert!((w.weights().column(i).sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn mixing_preserves_mean_and_contracts(
        (w, vs) in arb_graph().prop_flat_map(|(w, m)| (Just(w), arb_vectors(m)))
    ) {
        let mixed = w.mix(&vs).unwrap();
        let before = mean(&vs);
        let scale = vs.iter().map(|v| v.amax()).fold(1.0, f64::max);
        prop_assert!((mean(&mixed) - &before).norm() <= 1e-12 * scale);
        let (d0, d1) = (deviation(&vs), deviation(&mixed));
        prop_assert!(d1 <= w.nu() * d0 + 1e-9 * (1.0 + d0));
    }

    #[test]
    fn nu_is_invariant_under_relabeling(
        m in 2usize..=12,
        kind in 0usize..5,
        lazy in any::<bool>(),
        chords in prop::collection::vec((0usize..16, 0usize..16), 0..6),
        perm_seed in any::<u64>(),
    ) {
        let w = build_mixing(&family(kind, m, &chords), m, weighting(lazy)).unwrap();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut s = perm_seed;
        for i in (1..m).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted = DMatrix::from_fn(m, m, |i, j| w.weights()[(perm[i], perm[j])]);
        let wp = MixingMatrix::from_weights(permuted).unwrap();
        prop_assert!((wp.nu() - w.nu()).abs() <= 1e-12);
    }
}

#[test]
fn ring_spectrum_matches_circulant_formula() {
    for m in 3..=12 {
        let w = build_mixing(&GraphFamily::Ring, m, Weighting::Metropolis).unwrap();
        // eigenvalues 1/3 + 2/3 cos(2 pi k / m)
        let nu = (1..m)
            .map(|k| (1.0 / 3.0 + 2.0 / 3.0 * (2.0 * std::f64::consts::PI * k as f64 / m as f64).cos()).abs())
            .fold(0.0, f64::max);
        assert!((w.nu() - nu).abs() < 1e-12, "m = {m}");
    }
}

#[test]
fn complete_graph_averages_exactly() {
    for m in 1..=16 {
        let w = build_mixing(&GraphFamily::Complete, m, Weighting::Metropolis).unwrap();
        assert_eq!(w.nu(), 0.0, "m = {m}");
    }
}

#[test]
fn disconnected_custom_graph_is_rejected() {
    let g = GraphFamily::Custom { edges: vec![(0, 1), (2, 3)] };
    assert!(build_mixing(&g, 4, Weighting::Metropolis).is_err());
}
