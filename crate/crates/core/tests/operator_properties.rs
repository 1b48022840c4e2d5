use drude_te::media::{DrudeMedium, Geometry};
use drude_te::operator1d::{assemble, eigendecompose, free_evolution, Grid1D, DEFAULT_DENSE_CAP};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

/// Slab grid with the interfaces ±L on nodes: X = qL, N = 2qr.
fn slab_grid(l: f64, q: usize, r: usize) -> Grid1D {
    Grid1D::new(q as f64 * l, 2 * q * r, Geometry::Slab, l).unwrap()
}

fn random_vector(len: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    (0..len).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn norm(op: &drude_te::operator1d::DiscreteOperator, u: &[Complex64]) -> f64 {
    op.inner(u, u).re.sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assembled_operators_are_self_adjoint(
        oe in 0.3..3.0f64,
        om in 0.3..3.0f64,
        l in 0.3..3.0f64,
        k in -5.0..5.0f64,
        q in 2usize..5,
        r in 2usize..8,
        bilayer in any::<bool>(),
    ) {
        let m = DrudeMedium::new(1.3, 0.7, oe, om, l).unwrap();
        let grid = if bilayer {
            Grid1D::new(q as f64 * l, 2 * q * r, Geometry::Bilayer, l).unwrap()
        } else {
            slab_grid(l, q, r)
        };
        let op = assemble(&m, k, &grid).unwrap();
        prop_assert!(op.weighted_asymmetry() <= 1e-12);
    }

    #[test]
    fn sturm_counts_match_the_dense_spectrum(
        oe in 0.3..3.0f64,
        om in 0.3..3.0f64,
        k in 0.0..4.0f64,
        sigma in -4.0..4.0f64,
    ) {
        let m = DrudeMedium::new(1.0, 1.0, oe, om, 1.0).unwrap();
        let op = assemble(&m, k, &slab_grid(1.0, 3, 5)).unwrap();
        let evd = eigendecompose(&op, DEFAULT_DENSE_CAP).unwrap();
        let gap = evd.eigenvalues.iter().map(|l| (l - sigma).abs()).fold(f64::INFINITY, f64::min);
        prop_assume!(gap > 1e-8);
        let dense = evd.eigenvalues.iter().filter(|&&l| l < sigma).count();
        prop_assert_eq!(op.count_below(sigma), dense);
    }
}

#[test]
fn decomposition_is_orthonormal_with_small_residuals() {
    let m = DrudeMedium::normalized(1.0, 2.0).unwrap();
    let op = assemble(&m, 1.5, &slab_grid(1.0, 4, 10)).unwrap();
    let evd = eigendecompose(&op, DEFAULT_DENSE_CAP).unwrap();
    let bound = op.norm_bound();
    let mut worst_orth = 0.0_f64;
    for i in 0..evd.len() {
        let vi = evd.vector(i);
        assert!(op.scaled_residual(evd.eigenvalues[i], &vi) <= 1e-10 * bound);
        for j in i..evd.len() {
            let d: f64 = vi.iter().zip(evd.vector(j)).map(|(a, b)| a * b).sum();
            worst_orth = worst_orth.max((d - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    assert!(worst_orth <= 1e-10, "{worst_orth:e}");
}

#[test]
fn spectrum_is_symmetric_and_traceless() {
    let m = DrudeMedium::normalized(1.0, 2.0).unwrap();
    let op = assemble(&m, 0.8, &Grid1D::new(6.0, 60, Geometry::Bilayer, 1.0).unwrap()).unwrap();
    let evd = eigendecompose(&op, DEFAULT_DENSE_CAP).unwrap();
    let scale = op.norm_bound();
    let ev = &evd.eigenvalues;
    for (a, b) in ev.iter().zip(ev.iter().rev()) {
        assert!((a + b).abs() <= 1e-12 * scale, "{a} vs {b}");
    }
    assert!(evd.trace().abs() <= 1e-8 * scale);
}

#[test]
fn homogeneous_evolution_preserves_the_energy() {
    let m = DrudeMedium::normalized(1.5, 1.0).unwrap();
    let op = assemble(&m, 1.2, &slab_grid(1.0, 4, 12)).unwrap();
    let evd = eigendecompose(&op, DEFAULT_DENSE_CAP).unwrap();
    let u0 = random_vector(op.size(), 3);
    let n0 = norm(&op, &u0);
    for u in free_evolution(&op, &evd, &u0, &[0.5, 7.0, 130.0, 2500.0]) {
        assert!((norm(&op, &u) / n0 - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn conjugation_reverses_time() {
    // conj(A_k) = -A_{-k}, so conj(e^{-iA_k t} u) = e^{-iA_{-k} t} conj(u)
    let m = DrudeMedium::normalized(1.0, 2.0).unwrap();
    let grid = slab_grid(1.0, 4, 10);
    let (op, op_rev) = (assemble(&m, 1.1, &grid).unwrap(), assemble(&m, -1.1, &grid).unwrap());
    let (evd, evd_rev) = (eigendecompose(&op, DEFAULT_DENSE_CAP).unwrap(), eigendecompose(&op_rev, DEFAULT_DENSE_CAP).unwrap());
    let u0 = random_vector(op.size(), 5);
    let conj0: Vec<Complex64> = u0.iter().map(|z| z.conj()).collect();
    let times = [0.3, 4.0, 55.0];
    let forward = free_evolution(&op, &evd, &u0, &times);
    let reversed = free_evolution(&op_rev, &evd_rev, &conj0, &times);
    for (f, r) in forward.iter().zip(&reversed) {
        let diff: Vec<Complex64> = f.iter().zip(r).map(|(a, b)| a.conj() - b).collect();
        assert!(norm(&op, &diff) <= 1e-10 * norm(&op, f));
    }
}

#[test]
fn decomposition_is_deterministic() {
    let m = DrudeMedium::normalized(1.0, 2.0).unwrap();
    let op = assemble(&m, 0.9, &slab_grid(1.0, 3, 12)).unwrap();
    let a = eigendecompose(&op, DEFAULT_DENSE_CAP).unwrap();
    let b = eigendecompose(&op, DEFAULT_DENSE_CAP).unwrap();
    assert_eq!(a.eigenvalues, b.eigenvalues);
    assert_eq!(a.vectors, b.vectors);
}

#[test]
fn oversized_problems_are_refused() {
    let m = DrudeMedium::normalized(1.0, 2.0).unwrap();
    let op = assemble(&m, 0.9, &slab_grid(1.0, 3, 12)).unwrap();
    assert!(matches!(eigendecompose(&op, 10), Err(drude_te::Error::Capacity { .. })));
}
