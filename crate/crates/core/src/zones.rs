//! Spectral zones of the (k, omega) plane, transverse roots and the bilayer
//! plasmonic curve.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::DrudeMedium;
use crate::roots::{brent, RootOptions};

const ZONE_RTOL: f64 = 1e-10;
const JACOBIAN_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub k: f64,
    pub omega: f64,
}

impl SpectralPoint {
    pub fn new(k: f64, omega: f64) -> Self {
        Self { k, omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ZoneLabel {
    DD,
    DI,
    EI,
    DE,
    EE,
    EvanescentBoth,
    Boundary,
    Stationary,
}

impl ZoneLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ZoneLabel::DD => "DD",
            ZoneLabel::DI => "DI",
            ZoneLabel::EI => "EI",
            ZoneLabel::DE => "DE",
            ZoneLabel::EE => "EE",
            ZoneLabel::EvanescentBoth => "EvanescentBoth",
            ZoneLabel::Boundary => "Boundary",
            ZoneLabel::Stationary => "Stationary",
        }
    }

    pub fn is_surface(&self) -> bool {
        matches!(self, ZoneLabel::DD | ZoneLabel::DI | ZoneLabel::EI | ZoneLabel::DE)
    }

    /// Admissible generalized-eigenfunction indices j for this zone.
    pub fn branch_set(&self) -> &'static [i32] {
        match self {
            ZoneLabel::DD | ZoneLabel::DI => &[-1, 1],
            ZoneLabel::DE => &[1],
            ZoneLabel::EI => &[-1],
            ZoneLabel::EE => &[0],
            _ => &[],
        }
    }
}

impl std::fmt::Display for ZoneLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransverseRoots {
    pub xi_minus: Complex64,
    pub xi_plus: Complex64,
    pub d_minus: f64,
    pub d_plus: f64,
}

pub fn dispersion_squares(m: &DrudeMedium, p: SpectralPoint) -> Result<(f64, f64)> {
    if p.omega == 0.0 {
        return Err(Error::Domain("dispersion squares are undefined at omega = 0".into()));
    }
    let w2 = p.omega * p.omega;
    let k2 = p.k * p.k;
    Ok((k2 - m.eps0 * m.mu0 * w2, k2 - m.eps_drude(p.omega) * m.mu_drude(p.omega) * w2))
}

fn omega_atol(m: &DrudeMedium) -> f64 {
    ZONE_RTOL * m.omega_m
}

fn k_atol(m: &DrudeMedium) -> f64 {
    ZONE_RTOL * m.omega_m / m.c()
}

fn is_stationary(m: &DrudeMedium, w: f64) -> bool {
    let tol = omega_atol(m);
    w.abs() <= tol || (w.abs() - m.omega_m).abs() <= tol
}

pub fn classify_zone(m: &DrudeMedium, p: SpectralPoint) -> ZoneLabel {
    let k = p.k.abs();
    let w = p.omega.abs();
    if !(k.is_finite() && w.is_finite()) {
        return ZoneLabel::Boundary;
    }
    if is_stationary(m, w) {
        return ZoneLabel::Stationary;
    }
    let katol = k_atol(m);
    let kc = m.kappa_c();
    if k > kc + katol {
        if let Ok(we) = plasmonic_curve(m, k) {
            if (w - we).abs() <= omega_atol(m) {
                return ZoneLabel::EE;
            }
        }
    }
    let k0 = w / m.c();
    let n2 = m.eps_drude(w) * m.mu_drude(w) / (m.eps0 * m.mu0);
    let on_cut = (k - k0).abs() <= katol || (n2 >= 0.0 && (k - n2.sqrt() * k0).abs() <= katol);
    if on_cut {
        return ZoneLabel::Boundary;
    }
    let (dm, dp) = dispersion_squares(m, SpectralPoint::new(k, w)).expect("omega is nonzero here");
    let vacuum_propagative = dm < 0.0;
    match (vacuum_propagative, dp < 0.0) {
        (true, true) if m.eps_drude(w) > 0.0 => ZoneLabel::DD,
        (true, true) => ZoneLabel::DI,
        (false, true) if m.eps_drude(w) < 0.0 => ZoneLabel::EI,
        (false, true) => ZoneLabel::Boundary,
        (true, false) => ZoneLabel::DE,
        (false, false) => ZoneLabel::EvanescentBoth,
    }
}

pub fn transverse_roots(m: &DrudeMedium, p: SpectralPoint) -> Result<TransverseRoots> {
    if is_stationary(m, p.omega) {
        return Err(Error::Domain(format!("omega = {} is a stationary frequency", p.omega)));
    }
    let (d_minus, d_plus) = dispersion_squares(m, p)?;
    let s = p.omega.signum();
    let xi_minus = if d_minus < 0.0 {
        Complex64::new(0.0, -s * (-d_minus).sqrt())
    } else {
        Complex64::new(d_minus.sqrt(), 0.0)
    };
    let xi_plus = if d_plus < 0.0 {
        // direct (eps > 0) versus inverse (eps < 0) propagation in the Drude side
        let sign = if m.eps_drude(p.omega) > 0.0 { -s } else { s };
        Complex64::new(0.0, sign * (-d_plus).sqrt())
    } else {
        Complex64::new(d_plus.sqrt(), 0.0)
    };
    Ok(TransverseRoots { xi_minus, xi_plus, d_minus, d_plus })
}

/// 𝒲 = ξ⁻/μ⁻ + ξ⁺/μ⁺; its zeros are the bilayer plasmonic modes.
pub fn bilayer_dispersion_value(m: &DrudeMedium, p: SpectralPoint) -> Result<Complex64> {
    let r = transverse_roots(m, p)?;
    let mu_plus = m.mu_drude(p.omega);
    if mu_plus == 0.0 {
        return Err(Error::Domain("mu+ vanishes".into()));
    }
    Ok(r.xi_minus / m.mu0 + r.xi_plus / mu_plus)
}

/// ω_E(|k|) for |k| ≥ κ_c.
pub fn plasmonic_curve(m: &DrudeMedium, k: f64) -> Result<f64> {
    let k = k.abs();
    let kc = m.kappa_c();
    if k < kc * (1.0 - 1e-14) {
        return Err(Error::Domain(format!("plasmonic curve requires |k| >= kappa_c = {kc}, got {k}")));
    }
    if m.is_critical() {
        return Ok(m.omega_p());
    }
    let big_k = m.eps0 * m.mu0 * (m.omega_m.powi(2) - m.omega_e.powi(2));
    let k2 = k * k;
    // cancellation-free form of 1/2 + k²/K − sgn(K)·sqrt(1/4 + k⁴/K²)
    let u = big_k * big_k / (4.0 * k2 * k2);
    let r = 0.5 - big_k / (4.0 * k2 * (1.0 + (1.0 + u).sqrt()));
    Ok(m.omega_m * r.sqrt())
}

fn plasmonic_band(m: &DrudeMedium) -> (f64, f64) {
    let (wp, wc) = (m.omega_p(), m.omega_c());
    (wp.min(wc), wp.max(wc))
}

/// Inverse k_E of the plasmonic curve and the Jacobian J_E = |k_E'(ω)|.
/// J_E is reported as +inf beyond 1e12.
pub fn plasmonic_inverse_and_jacobian(m: &DrudeMedium, omega: f64) -> Result<(f64, f64)> {
    if m.is_critical() {
        return Err(Error::Domain("the plasmonic curve is flat in the critical case".into()));
    }
    let w = omega.abs();
    let (lo, hi) = plasmonic_band(m);
    if !(w > lo && w < hi) {
        return Err(Error::Domain(format!("|omega| = {w} outside the plasmonic band ({lo}, {hi})")));
    }
    let big_k = m.eps0 * m.mu0 * (m.omega_m.powi(2) - m.omega_e.powi(2));
    let wm2 = m.omega_m * m.omega_m;
    let a = w * w / wm2 - 0.5;
    let k2 = big_k * (a * a - 0.25) / (2.0 * a);
    let mut k = k2.sqrt();
    let ok = k.is_finite()
        && k >= m.kappa_c()
        && plasmonic_curve(m, k).map(|we| (we - w).abs() <= 1e-10 * m.omega_m).unwrap_or(false);
    if !ok {
        let kc = m.kappa_c();
        k = brent(
            |kk| plasmonic_curve(m, kk).unwrap() - w,
            kc,
            1e6 * kc,
            RootOptions::default(),
        )?;
    }
    let jac = (big_k * (1.0 + 1.0 / (4.0 * a * a)) * w / (2.0 * k * wm2)).abs();
    Ok((k, if jac > JACOBIAN_CAP { f64::INFINITY } else { jac }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> DrudeMedium {
        DrudeMedium::normalized(1.0, 1.0).unwrap()
    }

    #[test]
    fn squares_examples() {
        let (dm, dp) = dispersion_squares(&unit(), SpectralPoint::new(0.3, 2.0)).unwrap();
        assert!((dm + 3.91).abs() < 1e-14 && (dp + 2.16).abs() < 1e-14);
        let (dm, dp) = dispersion_squares(&unit(), SpectralPoint::new(1.0, 0.5)).unwrap();
        assert!((dm - 0.75).abs() < 1e-14 && (dp + 1.25).abs() < 1e-14);
        let (dm, _) = dispersion_squares(&unit(), SpectralPoint::new(0.7, 0.7)).unwrap();
        assert_eq!(dm, 0.0);
        assert!(dispersion_squares(&unit(), SpectralPoint::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn zone_examples() {
        let m = unit();
        assert_eq!(classify_zone(&m, SpectralPoint::new(0.3, 2.0)), ZoneLabel::DD);
        assert_eq!(classify_zone(&m, SpectralPoint::new(1.0, 0.5)), ZoneLabel::EI);
        assert_eq!(classify_zone(&m, SpectralPoint::new(2.0, 0.5f64.sqrt())), ZoneLabel::EE);
        assert_eq!(classify_zone(&m, SpectralPoint::new(-2.0, -(0.5f64.sqrt()))), ZoneLabel::EE);
        assert_eq!(classify_zone(&m, SpectralPoint::new(0.2, 0.5)), ZoneLabel::DI);
        assert_eq!(classify_zone(&m, SpectralPoint::new(1.0, 1.0)), ZoneLabel::Stationary);
        assert_eq!(classify_zone(&m, SpectralPoint::new(1.0, 0.0)), ZoneLabel::Stationary);
        assert_eq!(classify_zone(&m, SpectralPoint::new(0.5, 0.5)), ZoneLabel::Boundary);
        let m2 = DrudeMedium::normalized(2.0, 1.0).unwrap();
        // between the plasma frequencies the Drude side is evanescent
        assert_eq!(classify_zone(&m2, SpectralPoint::new(0.5, 1.5)), ZoneLabel::DE);
        assert_eq!(classify_zone(&m2, SpectralPoint::new(3.0, 1.5)), ZoneLabel::EvanescentBoth);
    }

    #[test]
    fn root_examples() {
        let m = unit();
        let r = transverse_roots(&m, SpectralPoint::new(0.3, 2.0)).unwrap();
        assert!((r.xi_minus - Complex64::new(0.0, -3.91f64.sqrt())).norm() < 1e-14);
        assert!((r.xi_plus - Complex64::new(0.0, -2.16f64.sqrt())).norm() < 1e-14);
        assert!((r.xi_minus.im + 1.97737).abs() < 1e-5 && (r.xi_plus.im + 1.46969).abs() < 1e-5);
        let r = transverse_roots(&m, SpectralPoint::new(1.0, 0.5)).unwrap();
        assert!((r.xi_minus.re - 0.86603).abs() < 1e-5 && r.xi_minus.im == 0.0);
        assert!((r.xi_plus.im - 1.11803).abs() < 1e-5 && r.xi_plus.re == 0.0);
        let rn = transverse_roots(&m, SpectralPoint::new(1.0, -0.5)).unwrap();
        assert_eq!(rn.xi_plus, r.xi_plus.conj());
        assert_eq!(rn.xi_minus, r.xi_minus);
        assert!(transverse_roots(&m, SpectralPoint::new(1.0, 1.0)).is_err());
    }

    #[test]
    fn plasmonic_examples() {
        let m = DrudeMedium::normalized(1.0, 2.0).unwrap();
        let we = plasmonic_curve(&m, m.kappa_c()).unwrap();
        assert!((we - 2.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!(plasmonic_curve(&m, 0.5 * m.kappa_c()).is_err());
        let u = unit();
        assert!((plasmonic_curve(&u, 3.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let w = bilayer_dispersion_value(&u, SpectralPoint::new(2.0, 0.5f64.sqrt())).unwrap();
        assert!(w.norm() < 1e-12);
        // O(k^-2) approach to the asymptote
        let r1 = (plasmonic_curve(&m, 100.0).unwrap() - m.omega_p()) * 1e4;
        let r2 = (plasmonic_curve(&m, 200.0).unwrap() - m.omega_p()) * 4e4;
        assert!((r1 / r2 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn inverse_and_jacobian() {
        let m = DrudeMedium::normalized(1.0, 2.0).unwrap();
        let kc = m.kappa_c();
        for i in 0..100 {
            let k = kc * 10f64.powf(0.03 * (i as f64 + 1.0));
            let we = plasmonic_curve(&m, k).unwrap();
            let (ke, j) = plasmonic_inverse_and_jacobian(&m, we).unwrap();
            assert!((ke / k - 1.0).abs() < 1e-9, "k={k} ke={ke}");
            let h = 1e-6 * (m.omega_p() - we);
            let (kp, _) = plasmonic_inverse_and_jacobian(&m, we + h).unwrap();
            let (km, _) = plasmonic_inverse_and_jacobian(&m, we - h).unwrap();
            if j.is_finite() && k < 50.0 {
                assert!(((kp - km) / (2.0 * h) / j - 1.0).abs() < 1e-4, "k={k}");
            }
        }
        let mut prev = 0.0;
        for w in [1.0, 1.2, 1.4, 1.414, std::f64::consts::SQRT_2 - 1e-4] {
            let (ke, j) = plasmonic_inverse_and_jacobian(&m, w).unwrap();
            assert!(ke > prev && j > 0.0);
            prev = ke;
        }
        assert!(plasmonic_inverse_and_jacobian(&unit(), 0.7).is_err());
        assert!(plasmonic_inverse_and_jacobian(&m, 0.5).is_err());
    }
}
