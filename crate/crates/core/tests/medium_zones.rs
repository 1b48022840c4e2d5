use drude_te::media::{DrudeMedium, Side};
use drude_te::zones::{classify_zone, dispersion_squares, transverse_roots, SpectralPoint, ZoneLabel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn medium() -> impl Strategy<Value = DrudeMedium> {
    (0.2..5.0f64, 0.2..5.0f64, 0.1..10.0f64, 0.1..10.0f64, 0.1..10.0f64)
        .prop_map(|(e, m, oe, om, l)| DrudeMedium::new(e, m, oe, om, l).unwrap())
}

fn nonzero(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1e-6
    } else {
        x
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn material_laws_are_even(m in medium(), w in -50.0..50.0f64) {
        let w = nonzero(w);
        for side in [Side::Vacuum, Side::Drude] {
            prop_assert_eq!(m.permittivity(w, side).unwrap(), m.permittivity(-w, side).unwrap());
            prop_assert_eq!(m.permeability(w, side).unwrap(), m.permeability(-w, side).unwrap());
        }
    }

    #[test]
    fn sign_chart(m in medium(), w in -50.0..50.0f64) {
        let w = nonzero(w);
        let eps = m.permittivity(w, Side::Drude).unwrap();
        let mu = m.permeability(w, Side::Drude).unwrap();
        // skip the measure-zero sign changes themselves
        prop_assume!((w.abs() - m.omega_e).abs() > 1e-9 && (w.abs() - m.omega_m).abs() > 1e-9);
        prop_assert_eq!(eps < 0.0, w.abs() < m.omega_e);
        prop_assert_eq!(mu < 0.0, w.abs() < m.omega_m);
    }

    #[test]
    fn derived_constants_agree(m in medium()) {
        let d = m.derived_constants();
        let wp = m.omega_m / 2f64.sqrt();
        let wc = m.omega_e * m.omega_m / (m.omega_e.powi(2) + m.omega_m.powi(2)).sqrt();
        prop_assert!((d.omega_p - wp).abs() <= 1e-14 * wp);
        prop_assert!((m.omega_c() - wc).abs() <= 1e-14 * wc);
        prop_assert!((d.kappa_c - (m.eps0 * m.mu0).sqrt() * m.omega_c()).abs() <= 1e-14 * d.kappa_c);
        let expect = if d.critical { 3 } else { 5 };
        prop_assert_eq!(d.sigma_exc.len(), expect);
    }

    #[test]
    fn critical_media_have_coincident_frequencies(e in 0.2..5.0f64, mu in 0.2..5.0f64, om in 0.1..10.0f64) {
        let m = DrudeMedium::new(e, mu, om, om, 1.0).unwrap();
        prop_assert!(m.is_critical());
        let d = m.derived_constants();
        prop_assert!((d.omega_p - d.omega_c).abs() <= 1e-12 * m.omega_m);
        prop_assert!(d.sigma_exc.iter().all(|s| *s == 0.0 || (s.abs() - m.omega_m).abs() <= 1e-15 * m.omega_m));
    }

    #[test]
    fn zones_have_quadrant_symmetry(m in medium(), k in -20.0..20.0f64, w in -20.0..20.0f64) {
        let z = classify_zone(&m, SpectralPoint::new(k.abs(), w.abs()));
        for (sk, sw) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
            prop_assert_eq!(classify_zone(&m, SpectralPoint::new(sk * k, sw * w)), z);
        }
    }
}

#[test]
fn nearly_critical_media_are_not_flagged() {
    let m = DrudeMedium::normalized(1.0 + 1e-9, 1.0).unwrap();
    assert!(!m.is_critical());
    assert_eq!(m.derived_constants().sigma_exc.len(), 5);
}

fn random_point(rng: &mut impl Rng, m: &DrudeMedium) -> SpectralPoint {
    let scale = m.omega_m.max(m.omega_e);
    let k = rng.gen_range(-4.0..4.0) * scale * (m.eps0 * m.mu0).sqrt();
    let w = rng.gen_range(-3.0..3.0) * scale;
    SpectralPoint::new(k, w)
}

#[test]
fn roots_square_to_the_dispersion_values() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 10_000 {
        let m = DrudeMedium::new(
            rng.gen_range(0.2..5.0),
            rng.gen_range(0.2..5.0),
            rng.gen_range(0.1..10.0),
            rng.gen_range(0.1..10.0),
            1.0,
        )
        .unwrap();
        let p = random_point(&mut rng, &m);
        let Ok(r) = transverse_roots(&m, p) else { continue };
        checked += 1;
        for (xi, d) in [(r.xi_minus, r.d_minus), (r.xi_plus, r.d_plus)] {
            let sq = xi * xi;
            let scale = d.abs().max(f64::MIN_POSITIVE);
            assert!((sq.re - d).abs() <= 1e-12 * scale && sq.im.abs() <= 1e-12 * scale, "{p:?}: {xi} vs {d}");
            assert!(xi.re == 0.0 || (xi.im == 0.0 && xi.re >= 0.0), "{p:?}: {xi}");
        }
    }
}

#[test]
fn zone_labels_match_root_character() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(12);
    let m = DrudeMedium::normalized(1.0, 2.0).unwrap();
    let mut seen = std::collections::HashSet::new();
    for _ in 0..10_000 {
        let p = random_point(&mut rng, &m);
        let z = classify_zone(&m, p);
        let Ok(r) = transverse_roots(&m, p) else { continue };
        let (im_minus, im_plus) = (r.d_minus < 0.0, r.d_plus < 0.0);
        match z {
            ZoneLabel::DD | ZoneLabel::DI => assert!(im_minus && im_plus, "{p:?} {z}"),
            ZoneLabel::DE => assert!(im_minus && !im_plus, "{p:?} {z}"),
            ZoneLabel::EI => assert!(!im_minus && im_plus, "{p:?} {z}"),
            ZoneLabel::EE | ZoneLabel::EvanescentBoth => assert!(!im_minus && !im_plus, "{p:?} {z}"),
            ZoneLabel::Boundary | ZoneLabel::Stationary => continue,
        }
        seen.insert(z);
    }
    for z in [ZoneLabel::DD, ZoneLabel::DI, ZoneLabel::DE, ZoneLabel::EI, ZoneLabel::EvanescentBoth] {
        assert!(seen.contains(&z), "zone {z} never sampled");
    }
}

#[test]
fn stationary_frequencies() {
    let m = DrudeMedium::normalized(1.0, 2.0).unwrap();
    for k in [0.1, 1.0, 10.0] {
        assert_eq!(classify_zone(&m, SpectralPoint::new(k, 0.0)), ZoneLabel::Stationary);
        assert_eq!(classify_zone(&m, SpectralPoint::new(k, -2.0)), ZoneLabel::Stationary);
        assert_ne!(classify_zone(&m, SpectralPoint::new(k, 2.0f64.sqrt())), ZoneLabel::Stationary);
    }
}

#[test]
fn both_squares_vanish_at_the_cross_point() {
    for (oe, om) in [(1.0, 2.0), (2.0, 1.0), (0.3, 5.0)] {
        let m = DrudeMedium::normalized(oe, om).unwrap();
        let (dm, dp) = dispersion_squares(&m, SpectralPoint::new(m.kappa_c(), m.omega_c())).unwrap();
        let scale = m.kappa_c().powi(2);
        assert!(dm.abs() <= 1e-12 * scale && dp.abs() <= 1e-12 * scale, "{dm} {dp}");
    }
}
