//! Scalar generalized eigenfunctions, their normalizations, the lift to the
//! six-component field (E, Hx, Hy, Ṗ, Ṁx, Ṁy), slab even modes and residual
//! checks of the transverse Sturm-Liouville problem.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{DrudeMedium, Geometry, Side};
use crate::zones::{
    bilayer_dispersion_value, classify_zone, dispersion_squares, plasmonic_curve, transverse_roots,
    SpectralPoint, ZoneLabel,
};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Sample abscissae, uniform within each material region. Interface nodes
/// appear twice, once as the last point of the left region and once as the
/// first point of the right region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentGrid {
    pub geometry: Geometry,
    pub slab_half_width: f64,
    pub segments: Vec<(Side, Vec<f64>)>,
}

impl SegmentGrid {
    /// Spacing in each region is the largest value ≤ `h` that divides it.
    pub fn new(geometry: Geometry, slab_half_width: f64, x_min: f64, x_max: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && x_min < x_max) {
            return Err(Error::Grid(format!("invalid grid [{x_min}, {x_max}] with h = {h}")));
        }
        let interfaces = geometry.interfaces(slab_half_width);
        if interfaces.iter().any(|&s| s <= x_min || s >= x_max) {
            return Err(Error::Grid("every interface must lie strictly inside the sampled interval".into()));
        }
        let mut breaks = vec![x_min];
        breaks.extend(interfaces);
        breaks.push(x_max);
        let segments = breaks
            .windows(2)
            .map(|w| {
                let n = (((w[1] - w[0]) / h).ceil() as usize).max(2);
                let xs: Vec<f64> = (0..=n).map(|i| w[0] + (w[1] - w[0]) * i as f64 / n as f64).collect();
                (geometry.side_at(0.5 * (w[0] + w[1]), slab_half_width), xs)
            })
            .collect();
        Ok(Self { geometry, slab_half_width, segments })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSegment {
    pub side: Side,
    pub x: Vec<f64>,
    pub values: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarProfile {
    pub geometry: Geometry,
    pub segments: Vec<ProfileSegment>,
    pub interface_locations: Vec<f64>,
}

impl ScalarProfile {
    pub fn grid(&self) -> Vec<f64> {
        self.segments.iter().flat_map(|s| s.x.iter().copied()).collect()
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.segments.iter().flat_map(|s| s.values.iter().copied()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.segments.iter().flat_map(|s| s.values.iter()).map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Value at `x` from the region whose sample set contains it.
    pub fn value_at(&self, x: f64) -> Option<Complex64> {
        self.segments.iter().find_map(|s| s.x.iter().position(|&xi| xi == x).map(|i| s.values[i]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSegment {
    pub side: Side,
    pub x: Vec<f64>,
    pub e: Vec<Complex64>,
    pub hx: Vec<Complex64>,
    pub hy: Vec<Complex64>,
    /// Empty in vacuum regions.
    pub p_dot: Vec<Complex64>,
    pub m_dot_x: Vec<Complex64>,
    pub m_dot_y: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeProfile {
    pub point: SpectralPoint,
    pub segments: Vec<ModeSegment>,
}

impl ModeProfile {
    /// Squared weighted 1D energy norm by the trapezoidal rule in each region.
    pub fn energy_norm_sq(&self, m: &DrudeMedium) -> f64 {
        let mut total = 0.0;
        for s in &self.segments {
            let dens: Vec<f64> = (0..s.x.len())
                .map(|i| {
                    let mut d = m.eps0 * s.e[i].norm_sqr() + m.mu0 * (s.hx[i].norm_sqr() + s.hy[i].norm_sqr());
                    if s.side == Side::Drude {
                        d += s.p_dot[i].norm_sqr() / (m.eps0 * m.omega_e.powi(2))
                            + (s.m_dot_x[i].norm_sqr() + s.m_dot_y[i].norm_sqr()) / (m.mu0 * m.omega_m.powi(2));
                    }
                    d
                })
                .collect();
            for i in 1..s.x.len() {
                total += 0.5 * (s.x[i] - s.x[i - 1]) * (dens[i] + dens[i - 1]);
            }
        }
        total
    }
}

/// Even/odd character of the slab problem: in Λ⁻ the Drude layer is
/// propagative (ξ⁺ imaginary), in Λ⁺ it is evanescent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlabRegion {
    LambdaMinus,
    LambdaPlus,
}

/// Transverse roots for the slab problem on Λ = {0 < ω < ck, ω ≠ Ω_m}.
pub fn slab_roots(m: &DrudeMedium, p: SpectralPoint) -> Result<(Complex64, Complex64, SlabRegion)> {
    let w = p.omega;
    if !(w > 0.0 && w < m.c() * p.k) || (w - m.omega_m).abs() <= 1e-14 * m.omega_m {
        return Err(Error::Domain(format!("(k, omega) = ({}, {}) is outside the guided region", p.k, w)));
    }
    let (dm, dp) = dispersion_squares(m, p)?;
    let xm = Complex64::new(dm.sqrt(), 0.0);
    if dp < 0.0 {
        Ok((xm, Complex64::new(0.0, (-dp).sqrt()), SlabRegion::LambdaMinus))
    } else {
        Ok((xm, Complex64::new(dp.sqrt(), 0.0), SlabRegion::LambdaPlus))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModeShape {
    /// j = ±1 in a surface zone of the bilayer.
    Surface { j: i32, xi_minus: Complex64, xi_plus: Complex64, mu_plus: f64 },
    /// j = 0 on the plasmonic curve of the bilayer.
    Plasmonic { xi_minus: Complex64, xi_plus: Complex64 },
    /// Even guided profile of the slab, e(0) = 1 before scaling.
    SlabEven { xi_minus: Complex64, xi_plus: Complex64, half_width: f64 },
}

/// Closed-form scalar mode e(x) = amplitude·ψ(x) with its derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticMode {
    pub point: SpectralPoint,
    pub amplitude: f64,
    pub shape: ModeShape,
    pub mu0: f64,
}

impl AnalyticMode {
    pub fn surface(m: &DrudeMedium, p: SpectralPoint, j: i32) -> Result<Self> {
        let zone = classify_zone(m, p);
        if !zone.is_surface() {
            return Err(Error::Domain(format!("({}, {}) lies in zone {zone}, not a surface zone", p.k, p.omega)));
        }
        if !zone.branch_set().contains(&j) {
            return Err(Error::InvalidBranch { j, zone: zone.to_string() });
        }
        let r = transverse_roots(m, p)?;
        Ok(Self {
            point: p,
            amplitude: normalization_constant(m, p, j)?,
            shape: ModeShape::Surface { j, xi_minus: r.xi_minus, xi_plus: r.xi_plus, mu_plus: m.mu_drude(p.omega) },
            mu0: m.mu0,
        })
    }

    /// Plasmonic mode at (k, ±ω_E(k)); the sign of `omega_sign` picks the branch.
    pub fn plasmonic(m: &DrudeMedium, k: f64, omega_sign: f64) -> Result<Self> {
        let p = SpectralPoint::new(k, omega_sign.signum() * plasmonic_curve(m, k)?);
        if classify_zone(m, p) != ZoneLabel::EE {
            return Err(Error::Domain(format!("k = {k} does not carry a plasmonic mode")));
        }
        let r = transverse_roots(m, p)?;
        Ok(Self {
            point: p,
            amplitude: normalization_constant(m, p, 0)?,
            shape: ModeShape::Plasmonic { xi_minus: r.xi_minus, xi_plus: r.xi_plus },
            mu0: m.mu0,
        })
    }

    pub fn slab_even(m: &DrudeMedium, p: SpectralPoint) -> Result<Self> {
        let (xi_minus, xi_plus, _) = slab_roots(m, p)?;
        Ok(Self {
            point: p,
            amplitude: 1.0,
            shape: ModeShape::SlabEven { xi_minus, xi_plus, half_width: m.slab_half_width },
            mu0: m.mu0,
        })
    }

    pub fn with_amplitude(mut self, a: f64) -> Self {
        self.amplitude = a;
        self
    }

    pub fn geometry(&self) -> Geometry {
        match self.shape {
            ModeShape::SlabEven { .. } => Geometry::Slab,
            _ => Geometry::Bilayer,
        }
    }

    pub fn half_width(&self) -> f64 {
        match self.shape {
            ModeShape::SlabEven { half_width, .. } => half_width,
            _ => 0.0,
        }
    }

    /// (e, e') evaluated with the formula of the region `side`; at an
    /// interface this yields the one-sided limit.
    pub fn eval_on(&self, x: f64, side: Side) -> (Complex64, Complex64) {
        let (v, d) = match self.shape {
            ModeShape::Surface { j, xi_minus, xi_plus, mu_plus } => {
                let (cosh_side, xc, xe, mu_c, mu_e) = if j == 1 {
                    (Side::Vacuum, xi_minus, xi_plus, self.mu0, mu_plus)
                } else {
                    (Side::Drude, xi_plus, xi_minus, mu_plus, self.mu0)
                };
                let s = j as f64;
                if side == cosh_side {
                    let ratio = (xe / mu_e) / (xc / mu_c);
                    let (ch, sh) = ((xc * x).cosh(), (xc * x).sinh());
                    (ch - s * ratio * sh, xc * sh - s * ratio * xc * ch)
                } else {
                    let e = (-s * xe * x).exp();
                    (e, -s * xe * e)
                }
            }
            ModeShape::Plasmonic { xi_minus, xi_plus } => match side {
                Side::Vacuum => {
                    let e = (xi_minus * x).exp();
                    (e, xi_minus * e)
                }
                Side::Drude => {
                    let e = (-xi_plus * x).exp();
                    (e, -xi_plus * e)
                }
            },
            ModeShape::SlabEven { xi_minus, xi_plus, half_width } => match side {
                Side::Drude => ((xi_plus * x).cosh(), xi_plus * (xi_plus * x).sinh()),
                Side::Vacuum => {
                    let e = (xi_plus * half_width).cosh() * (-xi_minus * (x.abs() - half_width)).exp();
                    (e, -x.signum() * xi_minus * e)
                }
            },
        };
        (self.amplitude * v, self.amplitude * d)
    }

    pub fn side_at(&self, x: f64) -> Side {
        self.geometry().side_at(x, self.half_width())
    }

    pub fn eval(&self, x: f64) -> (Complex64, Complex64) {
        self.eval_on(x, self.side_at(x))
    }

    /// Six-component field (E, Hx, Hy, Ṗ, Ṁx, Ṁy) at `x` on `side`; the
    /// Drude-only entries are zero in vacuum.
    pub fn fields_on(&self, m: &DrudeMedium, x: f64, side: Side) -> [Complex64; 6] {
        let (e, de) = self.eval_on(x, side);
        lift(m, self.point, side, e, de)
    }

    pub fn fields(&self, m: &DrudeMedium, x: f64) -> [Complex64; 6] {
        self.fields_on(m, x, self.side_at(x))
    }

    pub fn sample(&self, grid: &SegmentGrid) -> ScalarProfile {
        ScalarProfile {
            geometry: grid.geometry,
            segments: grid
                .segments
                .iter()
                .map(|(side, xs)| ProfileSegment {
                    side: *side,
                    x: xs.clone(),
                    values: xs.iter().map(|&x| self.eval_on(x, *side).0).collect(),
                })
                .collect(),
            interface_locations: grid.geometry.interfaces(grid.slab_half_width),
        }
    }

    /// |[e]| and |[μ⁻¹e']| at every interface, from the closed forms.
    pub fn transmission_residuals(&self, m: &DrudeMedium) -> Vec<(f64, f64)> {
        let w = self.point.omega;
        self.geometry()
            .interfaces(self.half_width())
            .into_iter()
            .map(|s| {
                let (l, r) = if self.geometry().side_at(s - 1e-300_f64.max(s.abs() * 1e-12), self.half_width()) == Side::Drude {
                    (Side::Drude, Side::Vacuum)
                } else {
                    (Side::Vacuum, Side::Drude)
                };
                let mu = |sd: Side| if sd == Side::Drude { m.mu_drude(w) } else { m.mu0 };
                let (el, dl) = self.eval_on(s, l);
                let (er, dr) = self.eval_on(s, r);
                ((el - er).norm(), (dl / mu(l) - dr / mu(r)).norm())
            })
            .collect()
    }
}

/// Vectorizator applied pointwise to (e, e').
pub fn lift(m: &DrudeMedium, p: SpectralPoint, side: Side, e: Complex64, de: Complex64) -> [Complex64; 6] {
    let w = p.omega;
    let mu = if side == Side::Drude { m.mu_drude(w) } else { m.mu0 };
    let hx = p.k * e / (mu * w);
    let hy = I * de / (mu * w);
    if side == Side::Vacuum {
        return [e, hx, hy, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
    }
    let pd = I * m.eps0 * m.omega_e.powi(2) / w * e;
    let f = m.mu0 * m.omega_m.powi(2) / (m.mu_drude(w) * w * w);
    [e, hx, hy, pd, f * I * p.k * e, -f * de]
}

pub fn normalization_constant(m: &DrudeMedium, p: SpectralPoint, j: i32) -> Result<f64> {
    let w = p.omega;
    let r = transverse_roots(m, p)?;
    let mu_plus = m.mu_drude(w);
    match j {
        1 | -1 => {
            let wcal = bilayer_dispersion_value(m, p)?.norm();
            let scale = r.xi_minus.norm() / m.mu0 + r.xi_plus.norm() / mu_plus.abs();
            if wcal <= 1e-10 * scale || !wcal.is_finite() {
                return Err(Error::Domain("surface normalization is singular on the plasmonic curve".into()));
            }
            let (xi, mu) = if j == 1 { (r.xi_minus, m.mu0) } else { (r.xi_plus, mu_plus) };
            Ok((0.5 * w * xi / mu).norm().sqrt() / (PI * wcal))
        }
        0 => {
            let k = p.k;
            let g = 4.0 * k.powi(4) + (m.eps0 * m.mu0).powi(2) * (m.omega_e.powi(2) - m.omega_m.powi(2)).powi(2);
            Ok(w * w * (mu_plus * r.xi_plus).norm().sqrt() / ((2.0 * PI).sqrt() * m.omega_m * g.powf(0.25)))
        }
        _ => Err(Error::InvalidBranch { j, zone: classify_zone(m, p).to_string() }),
    }
}

pub fn surface_mode_scalar(m: &DrudeMedium, p: SpectralPoint, j: i32, grid: &SegmentGrid) -> Result<ScalarProfile> {
    if grid.geometry != Geometry::Bilayer {
        return Err(Error::Grid("surface modes live on the bilayer geometry".into()));
    }
    Ok(AnalyticMode::surface(m, p, j)?.sample(grid))
}

pub fn plasmonic_mode_scalar(m: &DrudeMedium, k: f64, omega_sign: f64, grid: &SegmentGrid) -> Result<ScalarProfile> {
    if grid.geometry != Geometry::Bilayer {
        return Err(Error::Grid("plasmonic modes live on the bilayer geometry".into()));
    }
    Ok(AnalyticMode::plasmonic(m, k, omega_sign)?.sample(grid))
}

pub fn slab_even_mode(m: &DrudeMedium, p: SpectralPoint, grid: &SegmentGrid) -> Result<ScalarProfile> {
    if grid.geometry != Geometry::Slab || grid.slab_half_width != m.slab_half_width {
        return Err(Error::Grid("slab mode requires a slab grid with the medium's half-width".into()));
    }
    Ok(AnalyticMode::slab_even(m, p)?.sample(grid))
}

/// Second-order derivative on a uniform sample set, one-sided at both ends.
fn derivative(x: &[f64], f: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = x.len();
    if n < 3 {
        return Err(Error::Resolution("a region needs at least three samples".into()));
    }
    let h = (x[n - 1] - x[0]) / (n - 1) as f64;
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    Ok(d)
}

pub fn vectorize(m: &DrudeMedium, p: SpectralPoint, scalar: &ScalarProfile) -> Result<ModeProfile> {
    let w = p.omega;
    if w == 0.0 || (w.abs() - m.omega_m).abs() <= 1e-10 * m.omega_m {
        return Err(Error::Domain(format!("omega = {w} is a stationary frequency")));
    }
    let mut segments = Vec::with_capacity(scalar.segments.len());
    for s in &scalar.segments {
        let de = derivative(&s.x, &s.values)?;
        let f: Vec<[Complex64; 6]> = s.values.iter().zip(&de).map(|(&e, &d)| lift(m, p, s.side, e, d)).collect();
        let col = |c: usize| f.iter().map(|v| v[c]).collect::<Vec<_>>();
        let drude = s.side == Side::Drude;
        segments.push(ModeSegment {
            side: s.side,
            x: s.x.clone(),
            e: col(0),
            hx: col(1),
            hy: col(2),
            p_dot: if drude { col(3) } else { Vec::new() },
            m_dot_x: if drude { col(4) } else { Vec::new() },
            m_dot_y: if drude { col(5) } else { Vec::new() },
        });
    }
    Ok(ModeProfile { point: p, segments })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SturmLiouvilleResidual {
    pub interior_residual: f64,
    /// (|[e]|, |[μ⁻¹e']|) per interface, left to right.
    pub jump_residuals: Vec<(f64, f64)>,
}

pub fn sturm_liouville_residual(
    m: &DrudeMedium,
    p: SpectralPoint,
    profile: &ScalarProfile,
    geometry: Geometry,
) -> Result<SturmLiouvilleResidual> {
    if profile.geometry != geometry {
        return Err(Error::Grid("profile geometry does not match".into()));
    }
    let (dm, dp) = dispersion_squares(m, p)?;
    let coef = |side: Side| match side {
        Side::Vacuum => (dm, m.mu0),
        Side::Drude => (dp, m.mu_drude(p.omega)),
    };
    let emax = profile.max_abs();
    let dmax = profile.segments.iter().map(|s| { let (d, mu) = coef(s.side); (d / mu).abs() }).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for s in &profile.segments {
        let n = s.x.len();
        if n < 3 {
            return Err(Error::Resolution("a region needs at least three samples".into()));
        }
        let (d, mu) = coef(s.side);
        let h = (s.x[n - 1] - s.x[0]) / (n - 1) as f64;
        if d != 0.0 && h * d.abs().sqrt() > 2.0 * PI / 8.0 {
            return Err(Error::Resolution(format!(
                "spacing {h} gives fewer than 8 points per transverse length 2π/|𝒟|^½ = {}",
                2.0 * PI / d.abs().sqrt()
            )));
        }
        for i in 1..n - 1 {
            let e2 = (s.values[i + 1] - 2.0 * s.values[i] + s.values[i - 1]) / (h * h);
            worst = worst.max(((-e2 + d * s.values[i]) / mu).norm());
        }
    }
    let scale = emax * dmax;
    let interior_residual = if scale > 0.0 { worst / scale } else { worst };
    let mut jump_residuals = Vec::new();
    for pair in profile.segments.windows(2) {
        let (l, r) = (&pair[0], &pair[1]);
        let dl = derivative(&l.x, &l.values)?;
        let dr = derivative(&r.x, &r.values)?;
        let (_, mul) = coef(l.side);
        let (_, mur) = coef(r.side);
        let jump_e = (l.values[l.values.len() - 1] - r.values[0]).norm();
        let jump_flux = (dl[dl.len() - 1] / mul - dr[0] / mur).norm();
        jump_residuals.push((jump_e, jump_flux));
    }
    Ok(SturmLiouvilleResidual { interior_residual, jump_residuals })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> DrudeMedium {
        DrudeMedium::normalized(1.0, 1.0).unwrap()
    }

    fn bilayer_grid(h: f64) -> SegmentGrid {
        SegmentGrid::new(Geometry::Bilayer, 1.0, -5.0, 5.0, h).unwrap()
    }

    #[test]
    fn surface_mode_basics() {
        let m = unit();
        let p = SpectralPoint::new(0.3, 2.0);
        for j in [-1, 1] {
            let mode = AnalyticMode::surface(&m, p, j).unwrap().with_amplitude(1.0);
            assert!((mode.eval_on(0.0, Side::Vacuum).0 - 1.0).norm() < 1e-15);
            for (je, jf) in mode.transmission_residuals(&m) {
                assert!(je < 1e-12 && jf < 1e-12);
            }
        }
        let prof = surface_mode_scalar(&m, p, 1, &bilayer_grid(1e-2)).unwrap();
        let a = normalization_constant(&m, p, 1).unwrap();
        let r = (1.5f64 / 0.75) / 1.97737f64;
        assert!(prof.max_abs() <= a * (1.0 + r) + 1e-12);
        assert!(matches!(
            AnalyticMode::surface(&m, SpectralPoint::new(1.0, 0.5), 1),
            Err(Error::InvalidBranch { .. })
        ));
        assert!(AnalyticMode::surface(&m, SpectralPoint::new(1.0, 0.5), -1).is_ok());
    }

    #[test]
    fn plasmonic_normalization_example() {
        let m = unit();
        let p = SpectralPoint::new(2.0, 0.5f64.sqrt());
        let a = normalization_constant(&m, p, 0).unwrap();
        assert!((a - 0.09646).abs() < 5e-6, "{a}");
        assert!(normalization_constant(&m, p, 1).is_err());
        let mode = AnalyticMode::plasmonic(&m, 2.0, 1.0).unwrap();
        let prof = mode.sample(&bilayer_grid(1e-2));
        for s in &prof.segments {
            let mags: Vec<f64> = s.values.iter().map(|v| v.norm()).collect();
            let peak = if s.side == Side::Vacuum { mags.len() - 1 } else { 0 };
            assert!((mags[peak] - a).abs() < 1e-14);
        }
        for (je, jf) in mode.transmission_residuals(&m) {
            assert!(je < 1e-14 && jf < 1e-14);
        }
    }

    #[test]
    fn vectorize_examples() {
        let m = DrudeMedium::normalized(1.5, 3.0).unwrap();
        let p = SpectralPoint::new(1.0, 2.0);
        let grid = bilayer_grid(0.1);
        let ones = AnalyticMode::slab_even(&m, SpectralPoint::new(3.0, 0.5)).unwrap().sample(&grid);
        let ones = ScalarProfile {
            segments: ones.segments.into_iter().map(|mut s| { s.values.iter_mut().for_each(|v| *v = Complex64::new(1.0, 0.0)); s }).collect(),
            ..ones
        };
        let v = vectorize(&m, p, &ones).unwrap();
        for s in &v.segments {
            let mu = if s.side == Side::Drude { m.mu_drude(2.0) } else { 1.0 };
            for i in 0..s.x.len() {
                assert!((s.hx[i] - 0.5 / mu).norm() < 1e-12);
                assert!(s.hy[i].norm() < 1e-12);
                if s.side == Side::Drude {
                    assert!((s.p_dot[i] / s.e[i] - I * 1.5 * 1.5 / 2.0).norm() < 1e-14);
                }
            }
            if s.side == Side::Vacuum {
                assert!(s.p_dot.is_empty());
            }
        }
        let zeros = ScalarProfile {
            segments: ones.segments.iter().cloned().map(|mut s| { s.values.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0)); s }).collect(),
            ..ones.clone()
        };
        assert_eq!(vectorize(&m, p, &zeros).unwrap().energy_norm_sq(&m), 0.0);
        assert!(vectorize(&m, SpectralPoint::new(1.0, 3.0), &ones).is_err());
    }

    #[test]
    fn sturm_liouville_residuals() {
        let m = unit();
        let pts = [(0.3, 2.0, 1), (0.3, 2.0, -1), (1.0, 0.5, -1), (0.2, 0.5, 1), (0.2, 0.5, -1)];
        for (k, w, j) in pts {
            let p = SpectralPoint::new(k, w);
            let r1 = sturm_liouville_residual(&m, p, &surface_mode_scalar(&m, p, j, &bilayer_grid(1e-3)).unwrap(), Geometry::Bilayer).unwrap();
            let r2 = sturm_liouville_residual(&m, p, &surface_mode_scalar(&m, p, j, &bilayer_grid(5e-4)).unwrap(), Geometry::Bilayer).unwrap();
            assert!(r1.interior_residual < 1e-6, "{k} {w} {j}: {}", r1.interior_residual);
            let ratio = r1.interior_residual / r2.interior_residual;
            assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
            assert!(r1.jump_residuals[0].0 < 1e-12 && r1.jump_residuals[0].1 < 1e-5);
        }
        // negative control: flip the sign of ξ⁺ on the transmitted side
        let p = SpectralPoint::new(0.2, 0.5);
        let mode = AnalyticMode::surface(&m, p, 1).unwrap().with_amplitude(1.0);
        let mut flipped = mode;
        if let ModeShape::Surface { ref mut xi_plus, .. } = flipped.shape {
            *xi_plus = -*xi_plus;
        }
        let mut bad = mode.sample(&bilayer_grid(1e-3));
        bad.segments[1] = flipped.sample(&bilayer_grid(1e-3)).segments[1].clone();
        let r = sturm_liouville_residual(&m, p, &bad, Geometry::Bilayer).unwrap();
        assert!(r.jump_residuals[0].1 >= 0.1, "{:?}", r.jump_residuals);
        // coarse grid is rejected
        let coarse = surface_mode_scalar(&m, SpectralPoint::new(0.3, 2.0), 1, &bilayer_grid(0.9)).unwrap();
        assert!(matches!(
            sturm_liouville_residual(&m, SpectralPoint::new(0.3, 2.0), &coarse, Geometry::Bilayer),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn vacuum_exponential_residual() {
        let m = unit();
        let p = SpectralPoint::new(2.0, 1.5);
        let xi = (4.0f64 - 2.25).sqrt();
        let x: Vec<f64> = (0..=2000).map(|i| i as f64 * 1e-3).collect();
        let prof = ScalarProfile {
            geometry: Geometry::Bilayer,
            segments: vec![ProfileSegment { side: Side::Vacuum, values: x.iter().map(|&x| Complex64::new((-xi * x).exp(), 0.0)).collect(), x }],
            interface_locations: vec![],
        };
        let r = sturm_liouville_residual(&m, p, &prof, Geometry::Bilayer).unwrap();
        assert!(r.interior_residual < 1e-6);
    }

    #[test]
    fn slab_even_profile() {
        let m = unit();
        let p = SpectralPoint::new(0.5, 0.3);
        let mode = AnalyticMode::slab_even(&m, p).unwrap();
        let (e0, d0) = mode.eval(0.0);
        assert_eq!(e0, Complex64::new(1.0, 0.0));
        assert_eq!(d0.norm(), 0.0);
        let (je, _) = mode.transmission_residuals(&m)[0];
        assert_eq!(je, 0.0);
        assert!(AnalyticMode::slab_even(&m, SpectralPoint::new(0.5, 0.6)).is_err());
        let grid = SegmentGrid::new(Geometry::Slab, 1.0, -4.0, 4.0, 0.01).unwrap();
        let prof = slab_even_mode(&m, p, &grid).unwrap();
        assert_eq!(prof.segments.len(), 3);
        assert_eq!(prof.segments[1].side, Side::Drude);
    }
}
