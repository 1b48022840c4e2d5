//! Guided even modes of the Drude slab: residuals, thresholds, branch
//! solves and continuation, critical points, asymptotics and the ω₀
//! scenario classifier. Also the dielectric slab of the same geometry.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::DrudeMedium;
pub use crate::modes::SlabRegion;
use crate::roots::{bisect_predicate, brent, golden_min, RootOptions};

const POLE_EPS: f64 = 1e-12;
const CSTEP: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabResidual {
    pub value: f64,
    /// |ξ⁺tanh(ξ⁺L)| + |(μ⁺/μ₀)ξ⁻| + |k|: the two competing terms plus the
    /// natural wavenumber unit, which stays meaningful at the light line
    /// where both terms vanish.
    pub scale: f64,
    pub pole: bool,
    pub region: SlabRegion,
}

impl SlabResidual {
    pub fn scaled(&self) -> f64 {
        if self.scale > 0.0 {
            self.value.abs() / self.scale
        } else {
            self.value.abs()
        }
    }
}

/// Region of (k, ω) by the sign of 𝒟⁺, without membership checks.
fn region_of(m: &DrudeMedium, k: f64, w: f64) -> SlabRegion {
    if k * k < m.eps_drude(w) * m.mu_drude(w) * w * w {
        SlabRegion::LambdaMinus
    } else {
        SlabRegion::LambdaPlus
    }
}

/// Even residual continued analytically in (k, ω) within one region.
fn even_complex(m: &DrudeMedium, k: Complex64, w: Complex64, region: SlabRegion) -> Complex64 {
    let w2 = w * w;
    let mu_p = m.mu0 * (1.0 - m.omega_m * m.omega_m / w2);
    let eps_p = m.eps0 * (1.0 - m.omega_e * m.omega_e / w2);
    let xi_m = (k * k - m.eps0 * m.mu0 * w2).sqrt();
    let l = m.slab_half_width;
    let first = match region {
        SlabRegion::LambdaMinus => {
            let tau = (eps_p * mu_p * w2 - k * k).sqrt();
            -tau * (tau * l).tan()
        }
        SlabRegion::LambdaPlus => {
            let xi_p = (k * k - eps_p * mu_p * w2).sqrt();
            xi_p * ctanh(xi_p * l)
        }
    };
    first + mu_p / m.mu0 * xi_m
}

/// Complex tanh that stays finite for large |Re z|.
fn ctanh(z: Complex64) -> Complex64 {
    if z.re.abs() < 1.0 {
        return z.tanh();
    }
    let s = z.re.signum();
    let e = (-2.0 * s * z).exp();
    s * (1.0 - e) / (1.0 + e)
}

/// Real-valued even residual with the two terms separated; no Λ checks.
fn even_parts(m: &DrudeMedium, k: f64, w: f64) -> (f64, f64, bool, SlabRegion) {
    let w2 = w * w;
    let dm = k * k - m.eps0 * m.mu0 * w2;
    let dp = k * k - m.eps_drude(w) * m.mu_drude(w) * w2;
    let xi_m = dm.max(0.0).sqrt();
    let l = m.slab_half_width;
    let second = m.mu_drude(w) / m.mu0 * xi_m;
    if dp < 0.0 {
        let tau = (-dp).sqrt();
        let pole = (tau * l).cos().abs() < POLE_EPS;
        (-tau * (tau * l).tan(), second, pole, SlabRegion::LambdaMinus)
    } else {
        let xp = dp.sqrt();
        (xp * (xp * l).tanh(), second, false, SlabRegion::LambdaPlus)
    }
}

fn check_lambda(m: &DrudeMedium, k: f64, w: f64) -> Result<()> {
    if !(w > 0.0 && w < m.c() * k) || (w - m.omega_m).abs() <= 1e-14 * m.omega_m {
        return Err(Error::Domain(format!("(k, omega) = ({k}, {w}) is outside the guided region")));
    }
    Ok(())
}

pub fn slab_even_residual(m: &DrudeMedium, k: f64, omega: f64) -> Result<SlabResidual> {
    check_lambda(m, k, omega)?;
    let (a, b, pole, region) = even_parts(m, k, omega);
    Ok(SlabResidual { value: a + b, scale: a.abs() + b.abs() + k.abs(), pole, region })
}

/// Odd-mode residual ξ⁺coth(ξ⁺L) + (μ⁺/μ₀)ξ⁻ (τ·cot(τL) form in Λ⁻).
pub fn slab_odd_residual(m: &DrudeMedium, k: f64, omega: f64) -> Result<f64> {
    check_lambda(m, k, omega)?;
    let w2 = omega * omega;
    let dp = k * k - m.eps_drude(omega) * m.mu_drude(omega) * w2;
    let xi_m = (k * k - m.eps0 * m.mu0 * w2).sqrt();
    let l = m.slab_half_width;
    let first = if dp < 0.0 {
        let tau = (-dp).sqrt();
        tau / (tau * l).tan()
    } else {
        let xp = dp.sqrt();
        xp / (xp * l).tanh()
    };
    Ok(first + m.mu_drude(omega) / m.mu0 * xi_m)
}

pub fn threshold_kappa(m: &DrudeMedium, n: usize) -> f64 {
    let c2 = m.c() * m.c();
    let l = m.slab_half_width;
    let pn = PI * n as f64;
    l * m.omega_m * m.omega_e / c2
        / (pn * pn + l * l / c2 * (m.omega_m.powi(2) + m.omega_e.powi(2))).sqrt()
}

/// Frequency below min(Ω_e, Ω_m) at which the Drude transverse wavenumber is τ.
pub fn omega_of_tau(m: &DrudeMedium, k: f64, tau: f64) -> f64 {
    let c2 = m.c() * m.c();
    let p = (m.omega_e * m.omega_m).powi(2);
    let s = m.omega_e.powi(2) + m.omega_m.powi(2) + c2 * (tau * tau + k * k);
    (2.0 * p / (s + (s * s - 4.0 * p).max(0.0).sqrt())).sqrt()
}

/// Transverse wavenumber τ at which the branch meets the light line ω = ck,
/// or 0 when the whole τ > 0 range lies below it (k ≥ κ_c).
fn tau_light_line(m: &DrudeMedium, k: f64) -> f64 {
    let c2 = m.c() * m.c();
    let v = ((m.omega_e * m.omega_m).powi(2) / (c2 * k * k) - m.omega_e.powi(2) - m.omega_m.powi(2)) / c2;
    v.max(0.0).sqrt()
}

/// Vacuum ξ² = k² − ω(τ)²/c² along ω = ω(τ), factored through τ² − τ_ll² so it
/// stays accurate next to the light line.
fn xi_sq_of_tau(m: &DrudeMedium, k: f64, tau: f64) -> f64 {
    let c2 = m.c() * m.c();
    let ab = (m.omega_e * m.omega_m).powi(2);
    let v = (ab / (c2 * k * k) - m.omega_e.powi(2) - m.omega_m.powi(2)) / c2;
    let u = omega_of_tau(m, k, tau).powi(2);
    let u_ll = c2 * k * k;
    let d = if v >= 0.0 { (tau - v.sqrt()) * (tau + v.sqrt()) } else { tau * tau - v };
    d * u * u_ll / (ab - u * u_ll)
}

pub fn branch_solve(m: &DrudeMedium, k: f64, n: usize) -> Result<f64> {
    let kappa = threshold_kappa(m, n);
    if !(k > kappa) {
        return Err(Error::BelowThreshold { n, k, kappa });
    }
    let l = m.slab_half_width;
    let opts = RootOptions::default();
    let (w, certified_by_bracket) = if n == 0 {
        let lo = omega_of_tau(m, k, 0.0);
        let hi = (m.c() * k).min(m.omega_m * (1.0 - 1e-15));
        let f = |w: f64| {
            let (a, b, _, _) = even_parts(m, k, w);
            a + b
        };
        let w = brent(f, lo, hi, opts).map_err(|e| Error::Bracket(format!("branch 0 at k = {k}: {e}")))?;
        (w, ulp_sign_change(f, w, lo, hi))
    } else {
        let nf = n as f64;
        let pole = (nf - 0.5) * PI / l;
        let lo = (pole * (1.0 + POLE_EPS)).max(tau_light_line(m, k));
        let hi = nf * PI / l;
        let g = |tau: f64| {
            let w = omega_of_tau(m, k, tau);
            let xi_m = xi_sq_of_tau(m, k, tau).max(0.0).sqrt();
            -tau * (tau * l).tan() + m.mu_drude(w) / m.mu0 * xi_m
        };
        let tau = brent(g, lo, hi, opts).map_err(|e| Error::Bracket(format!("branch {n} at k = {k}: {e}")))?;
        (omega_of_tau(m, k, tau), ulp_sign_change(g, tau, lo, hi))
    };
    let (a, b, _, _) = even_parts(m, k, w);
    let scaled = (a + b).abs() / (a.abs() + b.abs() + k);
    if !(scaled <= 1e-10 || certified_by_bracket) {
        return Err(Error::Bracket(format!("branch {n} at k = {k}: residual {scaled} not certified (omega = {w})")));
    }
    Ok(w)
}

/// Backward-error certificate: the residual changes sign within a few ulps
/// of the root (clipped to the bracket).
fn ulp_sign_change<F: Fn(f64) -> f64>(f: F, x: f64, lo: f64, hi: f64) -> bool {
    let d = 8.0 * f64::EPSILON * x.abs();
    let (a, b) = ((x - d).max(lo), (x + d).min(hi));
    let (fa, fb) = (f(a), f(b));
    f(x) == 0.0 || (fa.signum() != fb.signum() && fa.is_finite() && fb.is_finite())
}

/// dω/dk along the residual's zero set, by complex-step partial derivatives.
pub fn implicit_group_velocity(m: &DrudeMedium, k: f64, w: f64) -> f64 {
    let region = region_of(m, k, w);
    let hk = CSTEP * k.abs().max(1e-300);
    let hw = CSTEP * w.abs().max(1e-300);
    let fk = even_complex(m, Complex64::new(k, hk), Complex64::new(w, 0.0), region).im / hk;
    let fw = even_complex(m, Complex64::new(k, 0.0), Complex64::new(w, hw), region).im / hw;
    -fk / fw
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// First sample at κ_n·(1 + initial_offset).
    pub initial_offset: f64,
    /// Initial step relative to κ_n.
    pub initial_step: f64,
    /// Step cap relative to the current k.
    pub max_step_rel: f64,
    /// Admissible linear-predictor error relative to ω.
    pub predictor_tol: f64,
    /// Smallest step relative to k before the trace is declared collapsed.
    pub min_step_rel: f64,
    pub max_samples: usize,
    /// |ω'| threshold, relative to c, for a horizontal inflection.
    pub inflection_tol: f64,
    /// Agreement of successive centered-difference group velocities.
    pub group_velocity_rtol: f64,
    /// |ω'|/c below which slopes are treated as unresolved (flat tails).
    pub slope_floor: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            initial_offset: 1e-4,
            initial_step: 1e-6,
            max_step_rel: 0.02,
            predictor_tol: 1e-6,
            min_step_rel: 1e-13,
            max_samples: 200_000,
            inflection_tol: 1e-6,
            group_velocity_rtol: 1e-6,
            slope_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchSample {
    pub k: f64,
    pub omega: f64,
    pub group_velocity: f64,
    /// Scaled residual |f|/(|f₁| + |f₂|) of the dispersion relation.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    Max,
    Min,
    Inflection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub k_cr: f64,
    pub omega_cr: f64,
    pub kind: CriticalKind,
    /// ω'' by centered second differences at k_cr.
    pub second_difference: f64,
    pub second_difference_error: f64,
    pub non_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionBranch {
    pub n: usize,
    pub kappa_n: f64,
    pub samples: Vec<BranchSample>,
    pub critical_points: Vec<CriticalPoint>,
    pub zone: SlabRegion,
}

impl DispersionBranch {
    /// Linear interpolation of ω on the sample set.
    pub fn omega_at(&self, k: f64) -> Option<f64> {
        let i = self.samples.partition_point(|s| s.k < k);
        if i == 0 || i == self.samples.len() {
            return self.samples.iter().find(|s| s.k == k).map(|s| s.omega);
        }
        let (a, b) = (self.samples[i - 1], self.samples[i]);
        Some(a.omega + (b.omega - a.omega) * (k - a.k) / (b.k - a.k))
    }
}

/// A one-parameter family ω(k) with a certified solver and an implicit slope.
pub(crate) trait BranchProblem: Sync {
    fn kappa(&self) -> f64;
    fn solve(&self, k: f64) -> Result<f64>;
    fn slope(&self, k: f64, w: f64) -> f64;
    fn residual(&self, k: f64, w: f64) -> f64;
    fn index(&self) -> usize;
    fn region(&self) -> SlabRegion;
}

struct DrudeBranch<'a> {
    m: &'a DrudeMedium,
    n: usize,
}

impl BranchProblem for DrudeBranch<'_> {
    fn kappa(&self) -> f64 {
        threshold_kappa(self.m, self.n)
    }
    fn solve(&self, k: f64) -> Result<f64> {
        branch_solve(self.m, k, self.n)
    }
    fn slope(&self, k: f64, w: f64) -> f64 {
        implicit_group_velocity(self.m, k, w)
    }
    fn residual(&self, k: f64, w: f64) -> f64 {
        slab_even_residual(self.m, k, w).map(|r| r.scaled()).unwrap_or(f64::INFINITY)
    }
    fn index(&self) -> usize {
        self.n
    }
    fn region(&self) -> SlabRegion {
        if self.n == 0 {
            SlabRegion::LambdaPlus
        } else {
            SlabRegion::LambdaMinus
        }
    }
}

fn fd_group_velocity<P: BranchProblem>(p: &P, k: f64, ctl: &StepControl, scale: f64) -> Result<f64> {
    let kappa = p.kappa();
    let mut h = (1e-3 * k).min(0.5 * (k - kappa));
    let d = |h: f64| -> Result<f64> { Ok((p.solve(k + h)? - p.solve(k - h)?) / (2.0 * h)) };
    let mut prev = d(h)?;
    for _ in 0..30 {
        h *= 0.5;
        let cur = d(h)?;
        if (cur - prev).abs() <= ctl.group_velocity_rtol * (cur.abs() + 1e-3 * scale) {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

fn second_difference<P: BranchProblem>(p: &P, k: f64) -> Result<(f64, f64)> {
    let d2 = |h: f64| -> Result<(f64, f64)> {
        let w0 = p.solve(k)?;
        Ok(((p.solve(k + h)? - 2.0 * w0 + p.solve(k - h)?) / (h * h), w0))
    };
    let h = (1e-3 * k).min(0.25 * (k - p.kappa()));
    let (a, _) = d2(h)?;
    let (b, w0) = d2(0.5 * h)?;
    let err = (a - b).abs() + 4.0 * f64::EPSILON * w0.abs() / (0.25 * h * h);
    Ok((b, err))
}

fn critical_point<P: BranchProblem>(p: &P, k: f64, kind: CriticalKind) -> Result<CriticalPoint> {
    let (d2, err) = second_difference(p, k)?;
    Ok(CriticalPoint {
        k_cr: k,
        omega_cr: p.solve(k)?,
        kind,
        second_difference: d2,
        second_difference_error: err,
        non_degenerate: d2.abs() > 10.0 * err,
    })
}

fn slope_at<P: BranchProblem>(p: &P, k: f64) -> Result<f64> {
    Ok(p.slope(k, p.solve(k)?))
}

fn root_of_slope<P: BranchProblem>(p: &P, a: f64, b: f64, sa: f64, tol: f64) -> Result<f64> {
    let mut err = None;
    let (lo, hi) = bisect_predicate(
        |k| match slope_at(p, k) {
            Ok(s) => s.signum() != sa.signum(),
            Err(e) => {
                err = Some(e);
                true
            }
        },
        a,
        b,
        tol,
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(0.5 * (lo + hi))
}

pub(crate) fn trace_problem<P: BranchProblem>(p: &P, k_max: f64, ctl: &StepControl) -> Result<DispersionBranch> {
    let kappa = p.kappa();
    if !(k_max > kappa) {
        return Err(Error::Range(format!("k_max = {k_max} is not above kappa = {kappa}")));
    }
    let mut ks = vec![kappa * (1.0 + ctl.initial_offset)];
    let mut ws = vec![p.solve(ks[0])?];
    let mut step = ctl.initial_step * kappa;
    while *ks.last().unwrap() < k_max {
        if ks.len() >= ctl.max_samples {
            return Err(Error::Trace(format!("sample budget {} exhausted at k = {}", ctl.max_samples, ks.last().unwrap())));
        }
        let k = *ks.last().unwrap();
        let w = *ws.last().unwrap();
        let k_new = (k + step).min(k_max);
        let w_new = p.solve(k_new)?;
        if ks.len() >= 2 {
            let (kp, wp) = (ks[ks.len() - 2], ws[ws.len() - 2]);
            let pred = w + (w - wp) / (k - kp) * (k_new - k);
            let err = (pred - w_new).abs() / w_new.abs().max(f64::MIN_POSITIVE);
            if err > ctl.predictor_tol {
                step *= 0.5;
                if step < ctl.min_step_rel * k {
                    return Err(Error::Trace(format!("continuation step collapsed at k = {k}")));
                }
                continue;
            }
            if err < 0.25 * ctl.predictor_tol {
                step *= 1.5;
            }
        } else {
            step *= 1.5;
        }
        step = step.min(ctl.max_step_rel * k_new);
        ks.push(k_new);
        ws.push(w_new);
    }
    let scale = ws.iter().cloned().fold(0.0, f64::max) / kappa;
    let slopes: Vec<f64> = ks.iter().zip(&ws).map(|(&k, &w)| p.slope(k, w)).collect();
    let kt = 1e-10 * kappa;
    let floor = ctl.slope_floor * scale;
    let mut crit = Vec::new();
    for i in 1..ks.len() {
        let resolved = slopes[i - 1].abs().max(slopes[i].abs()) > floor;
        if resolved && slopes[i - 1].signum() != slopes[i].signum() && slopes[i - 1] != 0.0 {
            let kc = root_of_slope(p, ks[i - 1], ks[i], slopes[i - 1], kt)?;
            let kind = if slopes[i - 1] > 0.0 { CriticalKind::Max } else { CriticalKind::Min };
            crit.push(critical_point(p, kc, kind)?);
        }
    }
    let c_light = scale;
    for i in 1..ks.len().saturating_sub(1) {
        let (g0, g1, g2) = (slopes[i - 1], slopes[i], slopes[i + 1]);
        let same_sign = g0.signum() == g1.signum() && g1.signum() == g2.signum();
        if !(same_sign && g1.abs() < g0.abs() && g1.abs() < g2.abs() && g0.abs().min(g2.abs()) > floor) {
            continue;
        }
        let s = g1.signum();
        let mut failure = None;
        let (kmin, vmin) = golden_min(
            |k| match slope_at(p, k) {
                Ok(v) => s * v,
                Err(e) => {
                    failure = Some(e);
                    f64::INFINITY
                }
            },
            ks[i - 1],
            ks[i + 1],
            kt,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        if vmin < 0.0 {
            // a max/min pair hidden between two samples
            let a = root_of_slope(p, ks[i - 1], kmin, g0, kt)?;
            let b = root_of_slope(p, kmin, ks[i + 1], -g0, kt)?;
            let (ka, kb) = if s > 0.0 { (CriticalKind::Max, CriticalKind::Min) } else { (CriticalKind::Min, CriticalKind::Max) };
            crit.push(critical_point(p, a, ka)?);
            crit.push(critical_point(p, b, kb)?);
        } else if vmin <= ctl.inflection_tol * c_light {
            crit.push(critical_point(p, kmin, CriticalKind::Inflection)?);
        }
    }
    crit.sort_by(|a, b| a.k_cr.total_cmp(&b.k_cr));
    let samples = ks
        .iter()
        .zip(&ws)
        .map(|(&k, &w)| {
            Ok(BranchSample { k, omega: w, group_velocity: fd_group_velocity(p, k, ctl, c_light)?, residual: p.residual(k, w) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DispersionBranch { n: p.index(), kappa_n: kappa, samples, critical_points: crit, zone: p.region() })
}

pub fn trace_branch(m: &DrudeMedium, n: usize, k_max: f64, ctl: &StepControl) -> Result<DispersionBranch> {
    trace_problem(&DrudeBranch { m, n }, k_max, ctl)
}

/// Independent branches traced concurrently.
pub fn trace_branches(m: &DrudeMedium, ns: &[usize], k_max: f64, ctl: &StepControl) -> Result<Vec<DispersionBranch>> {
    ns.par_iter().map(|&n| trace_branch(m, n, k_max, ctl)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub n: usize,
    pub k_end: f64,
    /// k·ω·c/(Ω_mΩ_e) at k_end (n ≥ 1).
    pub limit_ratio: Option<f64>,
    /// a_n from the fit a + b/k² of k³(Ω_mΩ_e/(ck) − ω) over the top decade (n ≥ 1).
    pub a_n: Option<f64>,
    /// (ω₀ − Ω_p)k² at k_end (n = 0).
    pub a_inf_measured: Option<f64>,
    /// Same quantity extrapolated by a fit a + b/k² over the top decade (n = 0).
    pub a_inf_fitted: Option<f64>,
    pub a_inf_closed_form: Option<f64>,
    pub deviation: f64,
}

pub fn a_infinity(m: &DrudeMedium) -> f64 {
    let c = m.c();
    m.omega_m.powi(3) * (m.rho().powi(2) - 1.0) / (8.0 * c * c * 2f64.sqrt())
}

fn fit_inverse_square(pts: &[(f64, f64)]) -> f64 {
    // least squares of y = a + b·k⁻²
    let n = pts.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(k, y) in pts {
        let x = 1.0 / (k * k);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (sy - b * sx) / n
}

pub fn asymptotics_check(branch: &DispersionBranch, m: &DrudeMedium) -> Result<AsymptoticReport> {
    let last = branch.samples.last().ok_or_else(|| Error::Range("empty branch".into()))?;
    if last.k < 50.0 * branch.kappa_n * (1.0 - 1e-12) {
        return Err(Error::Range(format!("branch traced to {} < 50·kappa_n = {}", last.k, 50.0 * branch.kappa_n)));
    }
    let top: Vec<&BranchSample> = branch.samples.iter().filter(|s| s.k >= 0.1 * last.k).collect();
    let c = m.c();
    let wmwe = m.omega_m * m.omega_e;
    if branch.n >= 1 {
        let pts: Vec<(f64, f64)> = top.iter().map(|s| (s.k, s.k.powi(3) * (wmwe / (c * s.k) - s.omega))).collect();
        let ratio = last.k * last.omega * c / wmwe;
        Ok(AsymptoticReport {
            n: branch.n,
            k_end: last.k,
            limit_ratio: Some(ratio),
            a_n: Some(fit_inverse_square(&pts)),
            a_inf_measured: None,
            a_inf_fitted: None,
            a_inf_closed_form: None,
            deviation: (ratio - 1.0).abs(),
        })
    } else {
        let wp = m.omega_p();
        let closed = a_infinity(m);
        let measured = (last.omega - wp) * last.k * last.k;
        let pts: Vec<(f64, f64)> = top.iter().map(|s| (s.k, (s.omega - wp) * s.k * s.k)).collect();
        let deviation = if closed != 0.0 { (measured / closed - 1.0).abs() } else { measured.abs() };
        Ok(AsymptoticReport {
            n: 0,
            k_end: last.k,
            limit_ratio: None,
            a_n: None,
            a_inf_measured: Some(measured),
            a_inf_fitted: Some(fit_inverse_square(&pts)),
            a_inf_closed_form: Some(closed),
            deviation,
        })
    }
}

/// Parenthesization of 𝒮₀ = 1 ± (β₀/𝛀²)·ρ²·α₀^{-1/2}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum S0Grouping {
    /// 1 + (β₀/𝛀²)·ρ²·α₀^{-1/2}, the displayed form.
    #[default]
    AsPrinted,
    /// 1 − (β₀/𝛀²)·ρ²·α₀^{-1/2}.
    Subtractive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S0Values {
    pub alpha0: f64,
    pub beta0: f64,
    pub s0: f64,
}

pub fn s0_evaluate(m: &DrudeMedium, tau: f64, grouping: S0Grouping) -> Result<S0Values> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    let t = tau.tanh();
    let sech2 = 1.0 - t * t;
    let d = t + tau * sech2;
    let alpha0 = 1.0 / (t * d);
    let beta0 = tau.powi(3) * sech2 / d;
    let big = m.omega_m * m.slab_half_width / m.c();
    let term = beta0 / (big * big) * m.rho().powi(2) / alpha0.sqrt();
    let s0 = match grouping {
        S0Grouping::AsPrinted => 1.0 + term,
        S0Grouping::Subtractive => 1.0 - term,
    };
    Ok(S0Values { alpha0, beta0, s0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Omega0Scenario {
    RhoGe1Max,
    IncreasingOnly,
    InflectionCase,
    MinMaxPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S0Classifier {
    pub rho: f64,
    pub omega_bold: f64,
    pub grouping: S0Grouping,
    pub tau_c: f64,
    pub s_min: f64,
    /// Whether the minimum of 𝒮₀ on (0, 50) is interior.
    pub interior_minimum: bool,
    pub scenario: Omega0Scenario,
    pub critical_points: Vec<CriticalPoint>,
    /// Smallest |ω₀'|/c found along the traced branch.
    pub min_abs_slope: f64,
    pub k_max: f64,
}

pub const TAU_SEARCH_MAX: f64 = 50.0;

pub fn s0_minimum(m: &DrudeMedium, grouping: S0Grouping) -> (f64, f64, bool) {
    let f = |t: f64| s0_evaluate(m, t, grouping).map(|v| v.s0).unwrap_or(f64::INFINITY);
    let (lo, hi) = (1e-6, TAU_SEARCH_MAX);
    let (tau_c, s_min) = golden_min(f, lo, hi, 1e-10);
    let margin = 1e-9 * s_min.abs().max(1.0);
    let interior = s_min < f(lo) - margin && s_min < f(hi) - margin;
    (tau_c, s_min, interior)
}

/// Wavenumber range used for the ω₀ scenario analysis.
pub fn omega0_k_max(m: &DrudeMedium) -> f64 {
    (200.0 * threshold_kappa(m, 0)).max(200.0 / m.slab_half_width)
}

pub fn scenario_of(rho: f64, crit: &[CriticalPoint]) -> Result<Omega0Scenario> {
    let kinds: Vec<CriticalKind> = crit.iter().map(|c| c.kind).collect();
    let s = match (rho >= 1.0, kinds.as_slice()) {
        (true, [CriticalKind::Max]) => Omega0Scenario::RhoGe1Max,
        (false, []) => Omega0Scenario::IncreasingOnly,
        (false, [CriticalKind::Inflection]) => Omega0Scenario::InflectionCase,
        (false, [CriticalKind::Max, CriticalKind::Min]) => Omega0Scenario::MinMaxPair,
        _ => {
            return Err(Error::Trace(format!(
                "critical-point inventory {kinds:?} (rho = {rho}) matches no scenario"
            )))
        }
    };
    Ok(s)
}

pub fn classify_omega0(m: &DrudeMedium, grouping: S0Grouping, ctl: &StepControl) -> Result<S0Classifier> {
    let k_max = omega0_k_max(m);
    let branch = trace_branch(m, 0, k_max, ctl)?;
    let c = m.c();
    let min_abs_slope = branch
        .samples
        .iter()
        .map(|s| implicit_group_velocity(m, s.k, s.omega).abs() / c)
        .fold(f64::INFINITY, f64::min);
    let scenario = scenario_of(m.rho(), &branch.critical_points)?;
    let (tau_c, s_min, interior_minimum) = s0_minimum(m, grouping);
    Ok(S0Classifier {
        rho: m.rho(),
        omega_bold: m.omega_m * m.slab_half_width / c,
        grouping,
        tau_c,
        s_min,
        interior_minimum,
        scenario,
        critical_points: branch.critical_points,
        min_abs_slope,
        k_max,
    })
}

/// A medium on the boundary between the increasing-only and min/max-pair ω₀ scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflectionLocation {
    pub medium: DrudeMedium,
    /// Bracket in ρ that was bisected; `medium` uses the lower end.
    pub rho_bracket: (f64, f64),
    pub classifier: S0Classifier,
}

/// Bisects ρ = Ω_e/Ω_m at fixed Ω_m L/c between an increasing-only medium (`rho_lo`)
/// and a min/max-pair medium (`rho_hi`) until the tracer reports a single inflection.
pub fn locate_omega0_inflection(
    base: &DrudeMedium,
    rho_lo: f64,
    rho_hi: f64,
    ctl: &StepControl,
) -> Result<InflectionLocation> {
    let at = |rho: f64| -> Result<DrudeMedium> {
        let m = DrudeMedium { omega_e: rho * base.omega_m, ..*base };
        m.validate()?;
        Ok(m)
    };
    let classify = |rho: f64| classify_omega0(&at(rho)?, S0Grouping::default(), ctl);
    let lo_c = classify(rho_lo)?;
    let hi_c = classify(rho_hi)?;
    if lo_c.scenario != Omega0Scenario::IncreasingOnly || hi_c.scenario != Omega0Scenario::MinMaxPair {
        return Err(Error::Bracket(format!(
            "rho bracket [{rho_lo}, {rho_hi}] gives {:?} / {:?}, need IncreasingOnly / MinMaxPair",
            lo_c.scenario, hi_c.scenario
        )));
    }
    let (mut lo, mut hi) = (rho_lo, rho_hi);
    let mut best = lo_c;
    for _ in 0..80 {
        if best.scenario == Omega0Scenario::InflectionCase {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let c = classify(mid)?;
        match c.scenario {
            Omega0Scenario::MinMaxPair => hi = mid,
            _ => {
                lo = mid;
                best = c;
            }
        }
    }
    if best.scenario != Omega0Scenario::InflectionCase {
        return Err(Error::Trace(format!(
            "bisection in rho ended at [{lo}, {hi}] without an inflection (min |slope|/c = {:.3e})",
            best.min_abs_slope
        )));
    }
    Ok(InflectionLocation { medium: at(lo)?, rho_bracket: (lo, hi), classifier: best })
}

/// Non-dispersive dielectric slab (ε₁, μ₁) in |x| < L surrounded by vacuum (ε₀, μ₀).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DielectricSlab {
    pub eps1: f64,
    pub mu1: f64,
    pub eps0: f64,
    pub mu0: f64,
    pub slab_half_width: f64,
}

impl DielectricSlab {
    pub fn new(eps1: f64, mu1: f64, eps0: f64, mu0: f64, slab_half_width: f64) -> Result<Self> {
        for (name, v) in [("eps1", eps1), ("mu1", mu1), ("eps0", eps0), ("mu0", mu0), ("slab_half_width", slab_half_width)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let s = Self { eps1, mu1, eps0, mu0, slab_half_width };
        if s.c1() >= s.c() {
            return Err(Error::NoGuiding { c1: s.c1(), c: s.c() });
        }
        Ok(s)
    }

    pub fn c(&self) -> f64 {
        1.0 / (self.eps0 * self.mu0).sqrt()
    }

    pub fn c1(&self) -> f64 {
        1.0 / (self.eps1 * self.mu1).sqrt()
    }

    pub fn kappa(&self, n: usize) -> f64 {
        let (c, c1) = (self.c(), self.c1());
        n as f64 * c1 * PI / (self.slab_half_width * (c * c - c1 * c1).sqrt())
    }

    fn parts(&self, k: Complex64, w: Complex64) -> Complex64 {
        // τ is real on the guided set, so tan stays finite
        let tau = (self.eps1 * self.mu1 * w * w - k * k).sqrt();
        let xi = (k * k - self.eps0 * self.mu0 * w * w).sqrt();
        -tau * (tau * self.slab_half_width).tan() + self.mu1 / self.mu0 * xi
    }

    pub fn residual(&self, k: f64, w: f64) -> f64 {
        self.parts(Complex64::new(k, 0.0), Complex64::new(w, 0.0)).re
    }

    fn scaled_residual(&self, k: f64, w: f64) -> f64 {
        let tau = (self.eps1 * self.mu1 * w * w - k * k).max(0.0).sqrt();
        let xi = (k * k - self.eps0 * self.mu0 * w * w).max(0.0).sqrt();
        let a = -tau * (tau * self.slab_half_width).tan();
        let b = self.mu1 / self.mu0 * xi;
        (a + b).abs() / (a.abs() + b.abs() + k)
    }

    pub fn solve(&self, k: f64, n: usize) -> Result<f64> {
        let kappa = self.kappa(n);
        if !(k > kappa) {
            return Err(Error::BelowThreshold { n, k, kappa });
        }
        let l = self.slab_half_width;
        let c = self.c();
        let c1 = self.c1();
        let tau_ll = k * (c * c - c1 * c1).sqrt() / c1;
        let nf = n as f64;
        let lo = nf * PI / l;
        let hi = tau_ll.min((nf + 0.5) * PI / l * (1.0 - POLE_EPS));
        let w_of = |tau: f64| ((tau * tau + k * k) / (self.eps1 * self.mu1)).sqrt();
        let g = |tau: f64| {
            let w = w_of(tau);
            let xi = (k * k - self.eps0 * self.mu0 * w * w).max(0.0).sqrt();
            -tau * (tau * l).tan() + self.mu1 / self.mu0 * xi
        };
        let tau = brent(&g, lo, hi, RootOptions::default())?;
        let w = w_of(tau);
        if self.scaled_residual(k, w) > 1e-10 && !ulp_sign_change(g, tau, lo, hi) {
            return Err(Error::Bracket(format!("dielectric branch {n} at k = {k}: residual not certified")));
        }
        Ok(w)
    }

    pub fn slope(&self, k: f64, w: f64) -> f64 {
        let hk = CSTEP * k;
        let hw = CSTEP * w;
        let fk = self.parts(Complex64::new(k, hk), Complex64::new(w, 0.0)).im / hk;
        let fw = self.parts(Complex64::new(k, 0.0), Complex64::new(w, hw)).im / hw;
        -fk / fw
    }

    pub fn trace(&self, n: usize, k_max: f64, ctl: &StepControl) -> Result<DispersionBranch> {
        let p = DielectricBranch { s: self, n };
        if n == 0 {
            // κ₀ = 0: start the continuation from a small positive k
            let start = DielectricBranch0 { inner: p, k0: 1e-3 * k_max.min(self.kappa(1).max(1e-3)) };
            let mut b = trace_problem(&start, k_max, ctl)?;
            b.kappa_n = 0.0;
            return Ok(b);
        }
        trace_problem(&p, k_max, ctl)
    }
}

pub fn dielectric_branch(slab: &DielectricSlab, k: f64, n: usize) -> Result<f64> {
    slab.solve(k, n)
}

struct DielectricBranch<'a> {
    s: &'a DielectricSlab,
    n: usize,
}

impl BranchProblem for DielectricBranch<'_> {
    fn kappa(&self) -> f64 {
        self.s.kappa(self.n)
    }
    fn solve(&self, k: f64) -> Result<f64> {
        self.s.solve(k, self.n)
    }
    fn slope(&self, k: f64, w: f64) -> f64 {
        self.s.slope(k, w)
    }
    fn residual(&self, k: f64, w: f64) -> f64 {
        self.s.scaled_residual(k, w)
    }
    fn index(&self) -> usize {
        self.n
    }
    fn region(&self) -> SlabRegion {
        SlabRegion::LambdaMinus
    }
}

struct DielectricBranch0<'a> {
    inner: DielectricBranch<'a>,
    k0: f64,
}

impl BranchProblem for DielectricBranch0<'_> {
    fn kappa(&self) -> f64 {
        self.k0
    }
    fn solve(&self, k: f64) -> Result<f64> {
        self.inner.solve(k)
    }
    fn slope(&self, k: f64, w: f64) -> f64 {
        self.inner.slope(k, w)
    }
    fn residual(&self, k: f64, w: f64) -> f64 {
        self.inner.residual(k, w)
    }
    fn index(&self) -> usize {
        0
    }
    fn region(&self) -> SlabRegion {
        SlabRegion::LambdaMinus
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> DrudeMedium {
        DrudeMedium::normalized(1.0, 1.0).unwrap()
    }

    // Real form of the even residual in Λ⁻, written out independently.
    fn oracle_residual(k: f64, w: f64) -> f64 {
        let mu_p = 1.0 - 1.0 / (w * w);
        let eps_p = 1.0 - 1.0 / (w * w);
        let tau = (eps_p * mu_p * w * w - k * k).sqrt();
        let xi = (k * k - w * w).sqrt();
        -tau * tau.tan() + mu_p * xi
    }

    #[test]
    fn threshold_values() {
        let m = unit();
        assert!((threshold_kappa(&m, 1) - 1.0 / (PI * PI + 2.0).sqrt()).abs() < 1e-15);
        assert!((threshold_kappa(&m, 2) - 0.155_270_485_199_689).abs() < 1e-14);
        assert!((threshold_kappa(&m, 0) - m.kappa_c()).abs() < 1e-15);
        for n in 0..20 {
            assert!(threshold_kappa(&m, n + 1) < threshold_kappa(&m, n));
        }
    }

    #[test]
    fn branch_solve_matches_bracket_oracle() {
        let m = unit();
        let w1 = branch_solve(&m, 0.5, 1).unwrap();
        assert!(w1 > 0.0 && w1 < 0.5);
        assert!(oracle_residual(0.5, w1 - 1e-9) * oracle_residual(0.5, w1 + 1e-9) < 0.0);
        assert!((w1 - 0.360_156_891_481_773_16).abs() < 1e-13);
        let w2 = branch_solve(&m, 0.5, 2).unwrap();
        assert!((w2 - 0.188_333_939_857_814_27).abs() < 1e-13);
        assert!(w2 < w1);
        assert!(slab_even_residual(&m, 0.5, w1).unwrap().scaled() <= 1e-12);
    }

    #[test]
    fn below_threshold_is_rejected() {
        let m = unit();
        let k1 = threshold_kappa(&m, 1);
        assert!(matches!(branch_solve(&m, 0.9 * k1, 1), Err(Error::BelowThreshold { .. })));
        assert!(matches!(branch_solve(&m, 0.5, 0), Err(Error::BelowThreshold { .. })));
    }

    #[test]
    fn tangent_at_threshold() {
        let m = unit();
        for n in 0..4 {
            let kn = threshold_kappa(&m, n);
            let w = branch_solve(&m, kn * (1.0 + 1e-12), n).unwrap();
            assert!((w - kn).abs() <= 1e-10, "n = {n}");
        }
    }

    #[test]
    fn solves_just_above_threshold() {
        let m = DrudeMedium::normalized(1.0, 2.0).unwrap();
        for n in 1..=5 {
            let kn = threshold_kappa(&m, n);
            for off in [1e-14, 1e-12, 1e-9] {
                let k = kn * (1.0 + off);
                let w = branch_solve(&m, k, n).unwrap();
                assert!(w <= k * (1.0 + 1e-15) && (k - w) / kn < 1e-12, "n = {n}, offset {off}");
            }
        }
    }

    #[test]
    fn residual_near_light_line() {
        let m = unit();
        let k = 2.0;
        let w = k * (1.0 - 1e-14);
        let r = slab_even_residual(&m, k, w).unwrap();
        let tau = ((1.0 - 1.0 / (w * w)).powi(2) * w * w - k * k).abs().sqrt();
        // evanescent inside, tanh branch
        assert!((r.value - tau * tau.tanh()).abs() < 1e-5);
    }

    #[test]
    fn n1_has_one_max() {
        let m = unit();
        let b = trace_branch(&m, 1, 20.0 * threshold_kappa(&m, 1), &StepControl::default()).unwrap();
        assert_eq!(b.critical_points.len(), 1);
        let cp = &b.critical_points[0];
        assert_eq!(cp.kind, CriticalKind::Max);
        assert!(cp.non_degenerate && cp.second_difference < 0.0);
        assert!((cp.k_cr - 0.974_424).abs() < 1e-5);
        for w in b.samples.windows(2) {
            assert!(w[0].k < w[1].k);
        }
        for s in &b.samples {
            assert!(s.k > b.kappa_n && s.omega > 0.0 && s.omega < s.k);
            assert!(s.residual <= 1e-10);
        }
    }

    #[test]
    fn s0_limits() {
        let m = unit();
        let v = s0_evaluate(&m, 30.0, S0Grouping::AsPrinted).unwrap();
        assert!((v.alpha0 - 1.0).abs() < 1e-12 && v.beta0.abs() < 1e-20);
        let t = 1e-4;
        let v = s0_evaluate(&m, t, S0Grouping::AsPrinted).unwrap();
        assert!((v.alpha0 * 2.0 * t * t - 1.0).abs() < 1e-7);
        assert!((v.beta0 * 2.0 / (t * t) - 1.0).abs() < 1e-7);
        assert!(s0_evaluate(&m, 0.0, S0Grouping::AsPrinted).is_err());
    }

    #[test]
    fn s0_minimum_interior_only_for_subtractive() {
        let m = unit();
        let (_, _, interior) = s0_minimum(&m, S0Grouping::AsPrinted);
        assert!(!interior);
        let (tau_c, s_min, interior) = s0_minimum(&m, S0Grouping::Subtractive);
        assert!(interior && tau_c > 0.0);
        assert!((tau_c - 1.717_920_5).abs() < 1e-6);
        assert!(s_min < 1.0);
    }

    #[test]
    fn omega0_rho_ge_1_has_one_max() {
        let m = DrudeMedium::new(1.0, 1.0, 1.5, 1.0, 1.0).unwrap();
        let c = classify_omega0(&m, S0Grouping::default(), &StepControl::default()).unwrap();
        assert_eq!(c.scenario, Omega0Scenario::RhoGe1Max);
        assert!(c.critical_points[0].k_cr > threshold_kappa(&m, 0));
    }

    #[test]
    fn omega0_min_max_ordering() {
        let m = DrudeMedium::new(1.0, 1.0, 0.9, 1.0, 1.0).unwrap();
        let c = classify_omega0(&m, S0Grouping::default(), &StepControl::default()).unwrap();
        assert_eq!(c.scenario, Omega0Scenario::MinMaxPair);
        let k0 = threshold_kappa(&m, 0);
        assert!(k0 < c.critical_points[0].k_cr && c.critical_points[0].k_cr < c.critical_points[1].k_cr);
    }

    #[test]
    fn inflection_by_bisection() {
        let base = DrudeMedium::new(1.0, 1.0, 0.6, 1.0, 1.0).unwrap();
        let loc = locate_omega0_inflection(&base, 0.6, 0.9, &StepControl::default()).unwrap();
        assert_eq!(loc.classifier.scenario, Omega0Scenario::InflectionCase);
        assert!(loc.rho_bracket.0 > 0.6 && loc.rho_bracket.1 < 0.9);
        assert_eq!(loc.classifier.critical_points.len(), 1);
    }

    #[test]
    fn scenario_inventory_mismatch_is_an_error() {
        assert!(scenario_of(1.2, &[]).is_err());
    }

    #[test]
    fn dielectric_examples() {
        let d = DielectricSlab::new(4.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((d.kappa(1) - 0.5 * PI / 0.75f64.sqrt()).abs() < 1e-14);
        assert!((d.kappa(1) - 1.813_80).abs() < 1e-5);
        assert_eq!(d.kappa(0), 0.0);
        assert!(dielectric_branch(&d, 1e-3, 0).is_ok());
        let w = dielectric_branch(&d, 3.0, 1).unwrap();
        assert!(w > 1.5 && w < 3.0);
        assert!(matches!(DielectricSlab::new(1.0, 1.0, 1.0, 1.0, 1.0), Err(Error::NoGuiding { .. })));
        // ill-conditioned in ω far from threshold; certified by the sign change in τ
        let k = 100.0 * d.kappa(1);
        for n in 0..4 {
            let w = dielectric_branch(&d, k, n).unwrap();
            assert!((w / k / d.c1() - 1.0).abs() < 1e-2);
        }
    }

    #[test]
    fn dielectric_branches_increase() {
        let d = DielectricSlab::new(4.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        for n in 0..3 {
            let b = d.trace(n, 10.0, &StepControl::default()).unwrap();
            assert!(b.critical_points.is_empty());
            assert!(b.samples.iter().all(|s| s.group_velocity > 0.0));
        }
    }
}
