//! 2D synthesis over k: guided wave packets of the slab, weighted local
//! norms, decay fits, and forced (limiting-amplitude / resonance) runs built
//! on the discrete operator.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dispersion::{branch_solve, threshold_kappa, CriticalPoint};
use crate::error::{Error, Result};
use crate::media::{DrudeMedium, Geometry, Side};
use crate::modes::AnalyticMode;
use crate::operator1d::{assemble, eigendecompose, phi_duhamel, DiscreteOperator, EigenDecomposition, Grid1D};
use crate::quadrature::GaussLegendre;
use crate::zones::SpectralPoint;

pub const MAX_PACKET_NODES: usize = 1 << 16;
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// C² bump (1 − u²)³ on |u| < 1.
pub fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - u * u).powi(3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavePacketSpec {
    pub n: usize,
    pub center: f64,
    pub half_width: f64,
    /// Initial Gauss–Legendre node count (at least 128).
    pub nodes: usize,
}

impl WavePacketSpec {
    pub fn new(n: usize, center: f64, half_width: f64) -> Self {
        Self { n, center, half_width, nodes: 128 }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    pub fn envelope(&self, k: f64) -> f64 {
        bump((k - self.center) / self.half_width)
    }
}

/// Energy norm squared of a slab mode over the whole line.
pub fn slab_mode_energy(m: &DrudeMedium, mode: &AnalyticMode) -> f64 {
    let l = m.slab_half_width;
    let gl = GaussLegendre::new(48);
    let density = |x: f64, side: Side| energy_density(m, &mode.fields_on(m, x, side), side);
    let xi = match mode.shape {
        crate::modes::ModeShape::SlabEven { xi_minus, .. } => xi_minus.re,
        _ => 1.0,
    };
    let tail = 60.0 / xi.max(1e-3);
    let inner = gl.integrate(0.0, l, |x| density(x, Side::Drude));
    let mut outer = 0.0;
    let mut a = l;
    // split the tail so each panel spans a few decay lengths
    let panels = 8;
    for p in 0..panels {
        let b = l + tail * (p + 1) as f64 / panels as f64;
        outer += gl.integrate(a, b, |x| density(x, Side::Vacuum));
        a = b;
    }
    2.0 * (inner + outer)
}

/// Energy density of a six-component field on `side`.
pub fn energy_density(m: &DrudeMedium, f: &[Complex64; 6], side: Side) -> f64 {
    let mut d = m.eps0 * f[0].norm_sqr() + m.mu0 * (f[1].norm_sqr() + f[2].norm_sqr());
    if side == Side::Drude {
        d += f[3].norm_sqr() / (m.eps0 * m.omega_e.powi(2)) + (f[4].norm_sqr() + f[5].norm_sqr()) / (m.mu0 * m.omega_m.powi(2));
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketNode {
    pub k: f64,
    pub omega: f64,
    /// Quadrature weight times χ(k).
    pub weight: f64,
    pub mode: AnalyticMode,
}

/// U(t, x, y) = ∫ χ(k) W_k(x) e^{i(ky − ω_n(k)t)} dk with W_k of unit energy norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavePacket {
    pub medium: DrudeMedium,
    pub spec: WavePacketSpec,
    pub nodes: Vec<PacketNode>,
    /// Critical points of the branch inside the support.
    pub critical_in_support: Vec<CriticalPoint>,
}

impl WavePacket {
    /// `critical` lists the branch's critical points; at most one may lie
    /// in the support. Nodes are doubled until the probe field at t = 0 and
    /// at `t_max` changes by less than 1e-6 relative.
    pub fn build(m: &DrudeMedium, spec: WavePacketSpec, critical: &[CriticalPoint], t_max: f64) -> Result<Self> {
        let (a, b) = spec.support();
        let kappa = threshold_kappa(m, spec.n);
        if !(spec.half_width > 0.0 && a > kappa) {
            return Err(Error::Domain(format!("packet support [{a}, {b}] must lie above kappa_{} = {kappa}", spec.n)));
        }
        let inside: Vec<CriticalPoint> = critical.iter().filter(|c| a < c.k_cr && c.k_cr < b).cloned().collect();
        if inside.len() > 1 {
            return Err(Error::Domain(format!("packet support contains {} critical points", inside.len())));
        }
        let probes = [(0.0, 0.0), (0.5 * m.slab_half_width, 0.3)];
        let mut count = spec.nodes.max(128);
        let mut packet = Self::with_nodes(m, spec, count, inside.clone())?;
        loop {
            let finer = Self::with_nodes(m, spec, 2 * count, inside.clone())?;
            let converged = [0.0, t_max].iter().all(|&t| {
                let change = probes
                    .iter()
                    .map(|&(x, y)| (finer.e_field(t, x, y) - packet.e_field(t, x, y)).norm())
                    .fold(0.0, f64::max);
                let scale = probes.iter().map(|&(x, y)| finer.e_field(t, x, y).norm()).fold(0.0, f64::max);
                change <= 1e-6 * scale
            });
            if converged {
                return Ok(packet);
            }
            count *= 2;
            packet = finer;
            if count > MAX_PACKET_NODES {
                return Err(Error::Quadrature(format!("packet synthesis did not converge with {count} nodes")));
            }
        }
    }

    fn with_nodes(m: &DrudeMedium, spec: WavePacketSpec, count: usize, inside: Vec<CriticalPoint>) -> Result<Self> {
        let (a, b) = spec.support();
        let nodes = GaussLegendre::new(count)
            .on(a, b)
            .into_par_iter()
            .map(|(k, w)| {
                let omega = branch_solve(m, k, spec.n)?;
                let mode = AnalyticMode::slab_even(m, SpectralPoint::new(k, omega))?;
                let norm = slab_mode_energy(m, &mode).sqrt();
                Ok(PacketNode { k, omega, weight: w * spec.envelope(k), mode: mode.with_amplitude(1.0 / norm) })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { medium: *m, spec, nodes, critical_in_support: inside })
    }

    pub fn e_field(&self, t: f64, x: f64, y: f64) -> Complex64 {
        let side = self.nodes[0].mode.side_at(x);
        self.nodes
            .iter()
            .map(|p| p.weight * p.mode.eval_on(x, side).0 * Complex64::from_polar(1.0, p.k * y - p.omega * t))
            .sum()
    }

    pub fn field(&self, t: f64, x: f64, y: f64) -> [Complex64; 6] {
        let side = self.nodes[0].mode.side_at(x);
        let mut out = [ZERO; 6];
        for p in &self.nodes {
            let f = p.mode.fields_on(&self.medium, x, side);
            let ph = p.weight * Complex64::from_polar(1.0, p.k * y - p.omega * t);
            for c in 0..6 {
                out[c] += ph * f[c];
            }
        }
        out
    }

    pub fn sample(&self, t: f64, xs: &[f64], ys: &[f64]) -> Field2D {
        let sides: Vec<Side> = xs.iter().map(|&x| self.nodes[0].mode.side_at(x)).collect();
        let per_x: Vec<Vec<[Complex64; 6]>> = xs
            .iter()
            .zip(&sides)
            .map(|(&x, &s)| {
                self.nodes
                    .iter()
                    .map(|p| {
                        let f = p.mode.fields_on(&self.medium, x, s);
                        let a = p.weight * Complex64::from_polar(1.0, -p.omega * t);
                        f.map(|v| a * v)
                    })
                    .collect()
            })
            .collect();
        let phases: Vec<Vec<Complex64>> =
            ys.iter().map(|&y| self.nodes.iter().map(|p| Complex64::from_polar(1.0, p.k * y)).collect()).collect();
        let values = per_x
            .par_iter()
            .flat_map_iter(|fx| {
                phases.iter().map(move |ph| {
                    let mut out = [ZERO; 6];
                    for (f, e) in fx.iter().zip(ph) {
                        for c in 0..6 {
                            out[c] += f[c] * e;
                        }
                    }
                    out
                })
            })
            .collect();
        Field2D { xs: xs.to_vec(), ys: ys.to_vec(), sides, values }
    }

    /// 2π ∫ χ(k)² dk, the squared energy norm of U by Plancherel in y.
    pub fn plancherel_norm_sq(&self) -> f64 {
        let gl = GaussLegendre::new(self.nodes.len());
        let (a, b) = self.spec.support();
        2.0 * std::f64::consts::PI * gl.integrate(a, b, |k| self.spec.envelope(k).powi(2))
    }
}

/// Six-component field sampled on a tensor grid, x-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field2D {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub sides: Vec<Side>,
    pub values: Vec<[Complex64; 6]>,
}

impl Field2D {
    pub fn zeros(xs: Vec<f64>, ys: Vec<f64>, sides: Vec<Side>) -> Self {
        let n = xs.len() * ys.len();
        Self { xs, ys, sides, values: vec![[ZERO; 6]; n] }
    }

    pub fn at(&self, ix: usize, iy: usize) -> &[Complex64; 6] {
        &self.values[ix * self.ys.len() + iy]
    }

    pub fn scale(&mut self, a: Complex64) {
        for v in &mut self.values {
            for c in v.iter_mut() {
                *c *= a;
            }
        }
    }

    pub fn sub(&self, other: &Field2D) -> Field2D {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| std::array::from_fn(|c| a[c] - b[c])).collect();
        Field2D { xs: self.xs.clone(), ys: self.ys.clone(), sides: self.sides.clone(), values }
    }
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = 0.5 * (x[i] - x[i - 1]);
        w[i - 1] += h;
        w[i] += h;
    }
    w
}

/// ‖η_{−s} U‖ in the energy norm, η_s(x, y) = (1+x²)^{s/2}(1+y²)^{s/2}.
/// `s = 0` gives the plain energy norm over the sampled region.
pub fn weighted_local_norm(m: &DrudeMedium, field: &Field2D, s: f64) -> Result<f64> {
    if s != 0.0 && !(s > 0.5) {
        return Err(Error::Domain(format!("weight exponent s must exceed 1/2, got {s}")));
    }
    let (wx, wy) = (trapezoid_weights(&field.xs), trapezoid_weights(&field.ys));
    let mut total = 0.0;
    for (ix, &x) in field.xs.iter().enumerate() {
        let ex = (1.0 + x * x).powf(-s);
        for (iy, &y) in field.ys.iter().enumerate() {
            let eta2 = ex * (1.0 + y * y).powf(-s);
            total += wx[ix] * wy[iy] * eta2 * energy_density(m, field.at(ix, iy), field.sides[ix]);
        }
    }
    Ok(total.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub window: (f64, f64),
    /// RMS of the log-log residual.
    pub residual: f64,
    pub stderr: f64,
    pub reliable: bool,
    pub expected: Option<f64>,
}

pub const MIN_FIT_DECADES: f64 = 1.5;
pub const FIT_RESIDUAL_LIMIT: f64 = 0.05;

/// Least-squares slope of log v against log t over `window`.
pub fn fit_power_law(times: &[f64], values: &[f64], window: (f64, f64), expected: Option<f64>) -> Result<DecayFit> {
    loglog_fit(times, values, window, expected, MIN_FIT_DECADES)
}

fn loglog_fit(times: &[f64], values: &[f64], window: (f64, f64), expected: Option<f64>, min_decades: f64) -> Result<DecayFit> {
    let (t0, t1) = window;
    if !(t0 > 0.0 && t1 > t0) || (t1 / t0).log10() < min_decades - 1e-12 {
        return Err(Error::Range(format!("fit window [{t0}, {t1}] spans fewer than {min_decades} decades")));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= t0 && **t <= t1 && **v > 0.0)
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Range(format!("only {} samples inside the fit window", pts.len())));
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ss: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let residual = (ss / n).sqrt();
    let stderr = (ss / (n - 2.0).max(1.0) / sxx).sqrt();
    Ok(DecayFit { exponent: slope, window, residual, stderr, reliable: residual <= FIT_RESIDUAL_LIMIT, expected })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub times: Vec<f64>,
    /// Weighted local norms, when a sampling grid was supplied.
    pub local_norms: Vec<f64>,
    /// E at the first probe point.
    pub probe_series: Vec<Complex64>,
    /// max over the probe set of |E|.
    pub probe_max: Vec<f64>,
    pub fitted_exponent: Option<DecayFit>,
}

/// Sampling grid and weight exponent for local norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub s: f64,
}

pub fn evolve_packet(packet: &WavePacket, times: &[f64], probes: &[(f64, f64)], norms: Option<&NormGrid>) -> Result<EvolutionReport> {
    check_times(times)?;
    if probes.is_empty() {
        return Err(Error::InvalidParameter("at least one probe point is required".into()));
    }
    let series: Vec<Vec<Complex64>> =
        times.par_iter().map(|&t| probes.iter().map(|&(x, y)| packet.e_field(t, x, y)).collect()).collect();
    let local_norms = match norms {
        Some(g) => times
            .iter()
            .map(|&t| weighted_local_norm(&packet.medium, &packet.sample(t, &g.xs, &g.ys), g.s))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(EvolutionReport {
        times: times.to_vec(),
        local_norms,
        probe_series: series.iter().map(|v| v[0]).collect(),
        probe_max: series.iter().map(|v| v.iter().map(|z| z.norm()).fold(0.0, f64::max)).collect(),
        fitted_exponent: None,
    })
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("times must be finite, non-negative and strictly increasing".into()));
    }
    Ok(())
}

/// Default fit window in units of 1/Ω_m.
pub const DEFAULT_FIT_WINDOW: (f64, f64) = (20.0, 800.0);

/// Fits the decay of the probe maximum.
pub fn fit_decay(report: &EvolutionReport, window: (f64, f64), expected: Option<f64>) -> Result<DecayFit> {
    fit_power_law(&report.times, &report.probe_max, window, expected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySettings {
    pub t_max: f64,
    pub samples: usize,
    pub window: (f64, f64),
    /// Probe points (x, y); the slab centre and mid-slab by default.
    pub probes: Vec<(f64, f64)>,
}

impl DecaySettings {
    pub fn new(m: &DrudeMedium, window: (f64, f64)) -> Self {
        Self { t_max: window.1, samples: 120, window, probes: vec![(0.0, 0.0), (0.5 * m.slab_half_width, 0.0)] }
    }
}

/// Builds the packet, evolves it on log-spaced times and fits the probe decay.
pub fn decay_experiment(
    m: &DrudeMedium,
    spec: WavePacketSpec,
    critical: &[CriticalPoint],
    settings: &DecaySettings,
    expected: Option<f64>,
) -> Result<(WavePacket, EvolutionReport)> {
    let packet = WavePacket::build(m, spec, critical, settings.t_max)?;
    let t0 = (settings.window.0 / 10.0).min(1.0);
    let times = log_times(t0, settings.t_max, settings.samples);
    let mut report = evolve_packet(&packet, &times, &settings.probes, None)?;
    report.fitted_exponent = Some(fit_decay(&report, settings.window, expected)?);
    Ok((packet, report))
}

/// Geometric time samples on [t0, t1].
pub fn log_times(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    let r = (t1 / t0).ln() / (count - 1) as f64;
    (0..count).map(|i| t0 * (r * i as f64).exp()).collect()
}

/// x-profile of an E-only forcing term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceProfile {
    /// exp(−(x − center)²/width²).
    Gaussian { center: f64, width: f64 },
    /// e^{−ξ|x|}, ξ = √(k² − ε₀μ₀Ω_p²): the interface-mode profile at Ω_p.
    Plasmonic,
}

impl SourceProfile {
    fn value(&self, m: &DrudeMedium, k: f64, x: f64) -> f64 {
        match *self {
            SourceProfile::Gaussian { center, width } => (-((x - center) / width).powi(2)).exp(),
            SourceProfile::Plasmonic => {
                let xi = (k * k - m.eps0 * m.mu0 * m.omega_p().powi(2)).max(0.0).sqrt();
                (-xi * x.abs()).exp()
            }
        }
    }
}

/// G(x, y) = a·g(x)·exp(−y²/(2σ²))·e^{ik₀y}, carried by E only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcedSource {
    pub profile: SourceProfile,
    pub k0: f64,
    pub sigma_y: f64,
    pub amplitude: f64,
}

impl ForcedSource {
    pub fn new(profile: SourceProfile, k0: f64, sigma_y: f64) -> Self {
        Self { profile, k0, sigma_y, amplitude: 1.0 }
    }

    /// Transverse Fourier transform of the y-factor (unitary convention).
    pub fn spectrum(&self, k: f64) -> f64 {
        self.amplitude * self.sigma_y * (-0.5 * (self.sigma_y * (k - self.k0)).powi(2)).exp()
    }

    /// Truncated k-support; the spectrum is below 1e-8 of its peak outside.
    pub fn k_support(&self) -> (f64, f64) {
        let r = 6.1 / self.sigma_y;
        (self.k0 - r, self.k0 + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedSetup {
    pub grid: Grid1D,
    pub source: ForcedSource,
    pub omega_s: f64,
    /// Gauss–Legendre nodes over the source k-support.
    pub k_nodes: usize,
    pub y_half_width: f64,
    /// Trapezoid samples in y for the local norm.
    pub y_count: usize,
    /// Weight exponent of the local norm.
    pub s: f64,
    pub probe: (f64, f64),
    /// Drop eigencomponents within this band of Ω_p from the source.
    pub remove_plasmonic: bool,
    pub dense_cap: usize,
}

impl ForcedSetup {
    pub fn new(grid: Grid1D, source: ForcedSource, omega_s: f64) -> Self {
        Self {
            grid,
            source,
            omega_s,
            k_nodes: 24,
            y_half_width: 3.0 * source.sigma_y,
            y_count: y_count_for(3.0 * source.sigma_y, source.k_support()),
            s: 1.0,
            probe: (0.0, 0.0),
            remove_plasmonic: false,
            dense_cap: crate::operator1d::DEFAULT_DENSE_CAP,
        }
    }
}

/// At least four samples per shortest transverse period, never fewer than 41.
fn y_count_for(half_width: f64, (a, b): (f64, f64)) -> usize {
    let kmax = a.abs().max(b.abs());
    (((4.0 * half_width * kmax) / std::f64::consts::PI).ceil() as usize + 1).max(41)
}

/// Relative width (in units of Ω_m) of the discrete kernels removed from sources.
pub const KERNEL_BAND: f64 = 1e-6;
/// Half-width (in units of Ω_m) of the discrete cluster treated as the Ω_p eigenspace.
pub const PLASMONIC_BAND: f64 = 1e-2;

struct KSlice {
    k: f64,
    weight: f64,
    op: DiscreteOperator,
    evd: EigenDecomposition,
    /// Source coefficients with kernels removed.
    coef: Vec<Complex64>,
    /// Eigencomponents in the +Ω_p cluster.
    plasmonic: Vec<bool>,
}

fn k_slices(m: &DrudeMedium, setup: &ForcedSetup) -> Result<Vec<KSlice>> {
    if setup.k_nodes == 0 || setup.source.sigma_y <= 0.0 {
        return Err(Error::InvalidParameter("forced runs need k_nodes > 0 and sigma_y > 0".into()));
    }
    let (a, b) = setup.source.k_support();
    let gl = GaussLegendre::new(setup.k_nodes);
    let om = m.omega_m;
    let wp = m.omega_p();
    let nodes = gl.on(a, b);
    nodes
        .par_iter()
        .map(|&(k, w)| {
            let op = assemble(m, k, &setup.grid)?;
            let evd = eigendecompose(&op, setup.dense_cap)?;
            let amp = setup.source.spectrum(k);
            let g = op.e_only(|x| Complex64::new(amp * setup.source.profile.value(m, k, x), 0.0));
            let mut coef = evd.coefficients(&op.to_scaled(&g));
            let near_wp = |l: f64| m.is_critical() && (l.abs() - wp).abs() < PLASMONIC_BAND * om;
            let plasmonic: Vec<bool> = evd.eigenvalues.iter().map(|&l| l > 0.0 && near_wp(l)).collect();
            for (j, &l) in evd.eigenvalues.iter().enumerate() {
                let kernel = l.abs() < KERNEL_BAND * om || (l.abs() - om).abs() < KERNEL_BAND * om;
                if kernel || (setup.remove_plasmonic && near_wp(l)) {
                    coef[j] = ZERO;
                }
            }
            Ok(KSlice { k, weight: w, op, evd, coef, plasmonic })
        })
        .collect()
}

/// Physical vectors V·diag(c)·φ(t) for several coefficient columns.
fn synthesize_columns(slice: &KSlice, columns: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let n = slice.evd.len();
    let cols = columns.len();
    let re = faer::Mat::<f64>::from_fn(n, cols, |i, c| columns[c][i].re);
    let im = faer::Mat::<f64>::from_fn(n, cols, |i, c| columns[c][i].im);
    let v = &slice.evd.vectors;
    let pr = v * &re;
    let pi = v * &im;
    (0..cols)
        .map(|c| slice.op.to_physical(&(0..n).map(|i| Complex64::new(pr[(i, c)], pi[(i, c)])).collect::<Vec<_>>()))
        .collect()
}

fn phi_column(slice: &KSlice, omega_s: f64, t: f64) -> Vec<Complex64> {
    slice
        .evd
        .eigenvalues
        .iter()
        .zip(&slice.coef)
        .map(|(&l, &c)| if c == ZERO { ZERO } else { c * phi_duhamel(omega_s, t, l) })
        .collect()
}

fn probe_index(op: &DiscreteOperator, x: f64) -> usize {
    let h = op.grid.h();
    let i = (((x + op.grid.half_width) / h).round() as usize).clamp(1, op.grid.cell_count - 1);
    op.e_index(i)
}

/// Sampled forced field on (t, y, operator entries).
struct ForcedField {
    ys: Vec<f64>,
    y_weights: Vec<f64>,
    /// Entry weights W_a times (1 + x_a²)^{−s}.
    x_weights: Vec<f64>,
    /// One block of ys.len()·size values per time, y-major.
    values: Vec<Vec<Complex64>>,
    size: usize,
}

impl ForcedField {
    fn norm_sq(&self, f: impl Fn(usize, usize) -> Complex64, s: f64) -> f64 {
        let mut total = 0.0;
        for (iy, (&y, &wy)) in self.ys.iter().zip(&self.y_weights).enumerate() {
            let eta = (1.0 + y * y).powf(-s);
            let row: f64 = (0..self.size).map(|a| self.x_weights[a] * f(iy, a).norm_sqr()).sum();
            total += wy * eta * row;
        }
        total
    }

    fn norm(&self, ti: usize, s: f64) -> f64 {
        let v = &self.values[ti];
        self.norm_sq(|iy, a| v[iy * self.size + a], s).sqrt()
    }

    fn diff_norm(&self, ti: usize, a_phase: Complex64, tj: usize, b_phase: Complex64, s: f64) -> f64 {
        let (u, v) = (&self.values[ti], &self.values[tj]);
        self.norm_sq(|iy, a| u[iy * self.size + a] * a_phase - v[iy * self.size + a] * b_phase, s).sqrt()
    }
}

fn y_grid(setup: &ForcedSetup) -> Result<(Vec<f64>, Vec<f64>)> {
    if setup.y_count < 2 || setup.y_half_width <= 0.0 {
        return Err(Error::InvalidParameter("y sampling needs at least 2 points on a positive half-width".into()));
    }
    let n = setup.y_count;
    let dy = 2.0 * setup.y_half_width / (n - 1) as f64;
    let ys = (0..n).map(|i| -setup.y_half_width + dy * i as f64).collect();
    let ws = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * dy } else { dy }).collect();
    Ok((ys, ws))
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Full field samples at `times`; an extra trailing block holds P_{Ω_p}G when requested.
fn forced_field(
    slices: &[KSlice],
    setup: &ForcedSetup,
    times: &[f64],
    s: f64,
    with_plasmonic: bool,
) -> Result<ForcedField> {
    let (ys, y_weights) = y_grid(setup)?;
    let op0 = &slices[0].op;
    let size = op0.size();
    let x_weights: Vec<f64> =
        op0.weights().iter().enumerate().map(|(a, w)| w * (1.0 + op0.position(a).powi(2)).powf(-s)).collect();
    let blocks = times.len() + usize::from(with_plasmonic);
    let mut values = vec![vec![ZERO; ys.len() * size]; blocks];
    for slice in slices {
        let mut columns: Vec<Vec<Complex64>> = times.iter().map(|&t| phi_column(slice, setup.omega_s, t)).collect();
        if with_plasmonic {
            columns.push(slice.coef.iter().zip(&slice.plasmonic).map(|(&c, &p)| if p { c } else { ZERO }).collect());
        }
        let fields = synthesize_columns(slice, &columns);
        let phases: Vec<Complex64> =
            ys.iter().map(|&y| Complex64::from_polar(slice.weight * INV_SQRT_2PI, slice.k * y)).collect();
        values.par_iter_mut().zip(&fields).for_each(|(block, u)| {
            for (iy, &ph) in phases.iter().enumerate() {
                let row = &mut block[iy * size..(iy + 1) * size];
                for (r, &x) in row.iter_mut().zip(u) {
                    *r += ph * x;
                }
            }
        });
    }
    Ok(ForcedField { ys, y_weights, x_weights, values, size })
}

/// E at the probe point for every time; cheap (one matrix row per k).
fn forced_probe(slices: &[KSlice], setup: &ForcedSetup, times: &[f64]) -> Vec<Complex64> {
    let (xp, yp) = setup.probe;
    let mut out = vec![ZERO; times.len()];
    for slice in slices {
        let p = probe_index(&slice.op, xp);
        let scale = slice.op.weights()[p].sqrt().recip();
        let row: Vec<f64> = (0..slice.evd.len()).map(|j| slice.evd.vectors[(p, j)] * scale).collect();
        let ph = Complex64::from_polar(slice.weight * INV_SQRT_2PI, slice.k * yp);
        let contrib: Vec<Complex64> = times
            .par_iter()
            .map(|&t| {
                let mut acc = ZERO;
                for (j, (&l, &c)) in slice.evd.eigenvalues.iter().zip(&slice.coef).enumerate() {
                    if c != ZERO {
                        acc += row[j] * c * phi_duhamel(setup.omega_s, t, l);
                    }
                }
                acc * ph
            })
            .collect();
        for (o, c) in out.iter_mut().zip(contrib) {
            *o += c;
        }
    }
    out
}

/// Global energy norm by Plancherel over k.
fn energy_norms(slices: &[KSlice], setup: &ForcedSetup, times: &[f64]) -> Vec<f64> {
    times
        .iter()
        .map(|&t| {
            slices
                .iter()
                .map(|s| s.weight * phi_column(s, setup.omega_s, t).iter().map(|z| z.norm_sqr()).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn refuse_exceptional(m: &DrudeMedium, omega_s: f64) -> Result<()> {
    let d = m.distance_to_exceptional(omega_s);
    if d < 1e-3 * m.omega_m {
        return Err(Error::Refused { omega_s, distance: d });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyWindow {
    pub t0: f64,
    pub t1: f64,
    /// sup over [t0, t1] of ‖U(t)e^{iω_s t} − U(t1)e^{iω_s t1}‖_{−s}.
    pub sup_difference: f64,
    pub reference_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitingAmplitudeReport {
    pub report: EvolutionReport,
    pub energy_norms: Vec<f64>,
    pub windows: Vec<CauchyWindow>,
    pub monotone: bool,
    /// Last window's sup difference relative to its reference norm.
    pub final_drift: f64,
}

/// Forced run checked against the limiting amplitude behaviour over doubling
/// windows [T, 2T], T = t_first·2^i.
pub fn limiting_amplitude_experiment(
    m: &DrudeMedium,
    setup: &ForcedSetup,
    t_first: f64,
    window_count: usize,
    samples_per_window: usize,
) -> Result<LimitingAmplitudeReport> {
    refuse_exceptional(m, setup.omega_s)?;
    if !(t_first > 0.0) || window_count == 0 || samples_per_window < 2 {
        return Err(Error::InvalidParameter("need t_first > 0, a window and at least 2 samples per window".into()));
    }
    let mut times = Vec::new();
    for w in 0..window_count {
        let t0 = t_first * 2f64.powi(w as i32);
        for i in 0..samples_per_window {
            let t = t0 * (1.0 + i as f64 / (samples_per_window - 1) as f64);
            if times.last().is_none_or(|&l| t > l) {
                times.push(t);
            }
        }
    }
    let slices = k_slices(m, setup)?;
    let field = forced_field(&slices, setup, &times, setup.s, false)?;
    let rot = |t: f64| Complex64::from_polar(1.0, setup.omega_s * t);
    let mut windows = Vec::with_capacity(window_count);
    for w in 0..window_count {
        let t0 = t_first * 2f64.powi(w as i32);
        let t1 = 2.0 * t0;
        let last = times.iter().rposition(|&t| t <= t1 * (1.0 + 1e-12)).unwrap_or(0);
        let sup = times
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= t0 * (1.0 - 1e-12) && t <= t1 * (1.0 + 1e-12))
            .map(|(i, &t)| field.diff_norm(i, rot(t), last, rot(times[last]), setup.s))
            .fold(0.0, f64::max);
        windows.push(CauchyWindow { t0, t1, sup_difference: sup, reference_norm: field.norm(last, setup.s) });
    }
    let monotone = windows.windows(2).all(|w| w[1].sup_difference < w[0].sup_difference);
    let lastw = windows.last().expect("at least one window");
    let final_drift = lastw.sup_difference / lastw.reference_norm;
    let local_norms = (0..times.len()).map(|i| field.norm(i, setup.s)).collect();
    let probe_series = forced_probe(&slices, setup, &times);
    Ok(LimitingAmplitudeReport {
        energy_norms: energy_norms(&slices, setup, &times),
        report: EvolutionReport {
            probe_max: probe_series.iter().map(|z| z.norm()).collect(),
            probe_series,
            local_norms,
            times,
            fitted_exponent: None,
        },
        windows,
        monotone,
        final_drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForcedRegime {
    Resonance,
    Beat,
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSettings {
    pub growth_window: (f64, f64),
    pub growth_samples: usize,
    /// Beat run length and step.
    pub duration: f64,
    pub dt: f64,
    /// Peaks below this fraction of the largest are ignored.
    pub peak_fraction: f64,
}

impl Default for ResonanceSettings {
    fn default() -> Self {
        Self { growth_window: (10.0, 100.0), growth_samples: 40, duration: 400.0, dt: 0.1, peak_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub regime: ForcedRegime,
    pub report: EvolutionReport,
    /// Log-log growth fit of the local norm (resonant forcing only).
    pub growth: Option<DecayFit>,
    /// Least-squares d‖U‖/dt over the growth window.
    pub growth_slope: Option<f64>,
    /// ‖P_{Ω_p}G‖ in the same local norm.
    pub plasmonic_norm: Option<f64>,
    /// Probe spectrum peaks (angular frequency), strongest first.
    pub peaks: Vec<f64>,
    pub frequency_bin: Option<f64>,
}

/// Forcing of a critical bilayer. At ω_s = Ω_p the local norm is fitted for
/// growth; otherwise the probe spectrum is searched for peaks.
pub fn resonance_experiment(m: &DrudeMedium, setup: &ForcedSetup, settings: &ResonanceSettings) -> Result<ResonanceReport> {
    if !m.is_critical() {
        return Err(Error::Misuse(format!(
            "resonance runs need a critical medium (omega_e = omega_m), got omega_e = {}, omega_m = {}",
            m.omega_e, m.omega_m
        )));
    }
    if setup.grid.geometry != Geometry::Bilayer {
        return Err(Error::Misuse("resonance runs use the bilayer geometry".into()));
    }
    refuse_exceptional(m, setup.omega_s)?;
    let slices = k_slices(m, setup)?;
    if (setup.omega_s - m.omega_p()).abs() < 1e-3 * m.omega_m {
        let (t0, t1) = settings.growth_window;
        if !(t0 > 0.0 && t1 > t0) || settings.growth_samples < 3 {
            return Err(Error::InvalidParameter("growth window must satisfy 0 < t0 < t1 with at least 3 samples".into()));
        }
        let times: Vec<f64> = log_times(t0, t1, settings.growth_samples);
        let field = forced_field(&slices, setup, &times, setup.s, true)?;
        let local_norms: Vec<f64> = (0..times.len()).map(|i| field.norm(i, setup.s)).collect();
        let plasmonic_norm = field.norm(times.len(), setup.s);
        let growth = loglog_fit(&times, &local_norms, (t0, t1), Some(1.0), 0.0)?;
        let slope = linear_slope(&times, &local_norms);
        let probe_series = forced_probe(&slices, setup, &times);
        let regime = if growth.exponent > 0.5 { ForcedRegime::Resonance } else { ForcedRegime::Stationary };
        return Ok(ResonanceReport {
            regime,
            report: EvolutionReport {
                probe_max: probe_series.iter().map(|z| z.norm()).collect(),
                probe_series,
                local_norms,
                times,
                fitted_exponent: Some(growth.clone()),
            },
            growth: Some(growth),
            growth_slope: Some(slope),
            plasmonic_norm: Some(plasmonic_norm),
            peaks: Vec::new(),
            frequency_bin: None,
        });
    }
    if !(settings.dt > 0.0 && settings.duration > 10.0 * settings.dt) {
        return Err(Error::InvalidParameter("beat run needs dt > 0 and duration > 10 dt".into()));
    }
    let count = (settings.duration / settings.dt).round() as usize;
    let times: Vec<f64> = (0..count).map(|i| i as f64 * settings.dt).collect();
    let probe_series = forced_probe(&slices, setup, &times);
    let (peaks, bin) = spectral_peaks(&probe_series, settings.dt, settings.peak_fraction);
    let regime = if peaks.len() >= 2 { ForcedRegime::Beat } else { ForcedRegime::Stationary };
    Ok(ResonanceReport {
        regime,
        report: EvolutionReport {
            probe_max: probe_series.iter().map(|z| z.norm()).collect(),
            probe_series,
            local_norms: Vec::new(),
            times,
            fitted_exponent: None,
        },
        growth: None,
        growth_slope: None,
        plasmonic_norm: None,
        peaks,
        frequency_bin: Some(bin),
    })
}

/// Local maxima of the Hann-windowed spectrum of conj(series), as angular
/// frequencies ≥ 0, strongest first, with the bin width.
pub fn spectral_peaks(series: &[Complex64], dt: f64, fraction: f64) -> (Vec<f64>, f64) {
    let n = series.len();
    let mut buf: Vec<Complex64> = series
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
            z.conj() * w
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bin = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    let mag: Vec<f64> = buf[..n / 2].iter().map(|z| z.norm()).collect();
    let top = mag.iter().cloned().fold(0.0, f64::max);
    let mut peaks: Vec<(f64, f64)> = (1..mag.len().saturating_sub(1))
        .filter(|&i| mag[i] >= fraction * top && mag[i] > mag[i - 1] && mag[i] >= mag[i + 1])
        .map(|i| (mag[i], i as f64 * bin))
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    (peaks.into_iter().map(|p| p.1).collect(), bin)
}

fn linear_slope(t: &[f64], v: &[f64]) -> f64 {
    let n = t.len() as f64;
    let (mt, mv) = (t.iter().sum::<f64>() / n, v.iter().sum::<f64>() / n);
    let sxy: f64 = t.iter().zip(v).map(|(a, b)| (a - mt) * (b - mv)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn critical_setup(omega_s: f64) -> (DrudeMedium, ForcedSetup) {
        let m = DrudeMedium::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let grid = Grid1D::new(20.0, 100, Geometry::Bilayer, 1.0).unwrap();
        let src = ForcedSource::new(SourceProfile::Plasmonic, 2.0 * m.kappa_c(), 10.0);
        let mut setup = ForcedSetup::new(grid, src, omega_s);
        setup.k_nodes = 4;
        (m, setup)
    }

    #[test]
    fn bump_is_compact_and_smooth_at_the_edge() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump(-1.5), 0.0);
        assert!(bump(0.999) < 1e-8);
        let spec = WavePacketSpec::new(1, 2.0, 0.5);
        assert_eq!(spec.support(), (1.5, 2.5));
        assert_eq!(spec.envelope(2.6), 0.0);
    }

    #[test]
    fn local_norm_rejects_small_weights_and_scales() {
        let m = DrudeMedium::normalized(1.0, 1.0).unwrap();
        let xs = vec![-1.0, 0.0, 1.0];
        let ys = vec![0.0, 1.0];
        let mut f = Field2D::zeros(xs.clone(), ys, vec![Side::Vacuum, Side::Drude, Side::Drude]);
        assert_eq!(weighted_local_norm(&m, &f, 1.0).unwrap(), 0.0);
        assert!(matches!(weighted_local_norm(&m, &f, 0.4), Err(Error::Domain(_))));
        for v in f.values.iter_mut() {
            v[0] = Complex64::new(1.0, 2.0);
            v[4] = Complex64::new(-0.5, 0.0);
        }
        let n1 = weighted_local_norm(&m, &f, 1.0).unwrap();
        assert!(n1 > 0.0);
        f.scale(Complex64::new(0.0, -3.0));
        assert_relative_eq!(weighted_local_norm(&m, &f, 1.0).unwrap(), 3.0 * n1, max_relative = 1e-14);
    }

    #[test]
    fn power_law_fit_recovers_exponent() {
        let t = log_times(1.0, 1e3, 60);
        let v: Vec<f64> = t.iter().map(|x| 2.5 * x.powf(-0.7)).collect();
        let fit = fit_power_law(&t, &v, (10.0, 1e3), Some(-0.7)).unwrap();
        assert_relative_eq!(fit.exponent, -0.7, epsilon = 1e-12);
        assert!(fit.reliable && fit.residual < 1e-12);
        assert!(matches!(fit_power_law(&t, &v, (20.0, 400.0), None), Err(Error::Range(_))));
        let wobble: Vec<f64> = t.iter().map(|x| x.powf(-1.0) * (2.0 + (3.0 * x.ln()).sin())).collect();
        assert!(!fit_power_law(&t, &wobble, (1.0, 1e3), None).unwrap().reliable);
    }

    #[test]
    fn peaks_of_two_tones() {
        let dt = 0.1;
        let s: Vec<Complex64> = (0..4000)
            .map(|i| {
                let t = i as f64 * dt;
                Complex64::from_polar(1.0, -0.7 * t) + Complex64::from_polar(0.5, -0.3 * t)
            })
            .collect();
        let (p, bin) = spectral_peaks(&s, dt, 0.1);
        assert_eq!(p.len(), 2);
        assert!((p[0] - 0.7).abs() <= bin && (p[1] - 0.3).abs() <= bin);
    }

    #[test]
    fn resonance_needs_a_critical_medium() {
        let (_, setup) = critical_setup(0.7);
        let m = DrudeMedium::new(1.0, 1.0, 1.2, 1.0, 1.0).unwrap();
        assert!(matches!(resonance_experiment(&m, &setup, &ResonanceSettings::default()), Err(Error::Misuse(_))));
    }

    #[test]
    fn forcing_at_exceptional_frequencies_is_refused() {
        let (m, mut setup) = critical_setup(1.0 + 5e-4);
        assert!(matches!(resonance_experiment(&m, &setup, &ResonanceSettings::default()), Err(Error::Refused { .. })));
        setup.omega_s = 2e-4;
        assert!(matches!(limiting_amplitude_experiment(&m, &setup, 1.0, 1, 4), Err(Error::Refused { .. })));
    }

    #[test]
    fn zero_source_gives_zero_field() {
        let (_, mut setup) = critical_setup(0.3);
        let m = DrudeMedium::new(1.0, 1.0, 1.2, 1.0, 1.0).unwrap();
        setup.source.amplitude = 0.0;
        let r = limiting_amplitude_experiment(&m, &setup, 2.0, 2, 4).unwrap();
        assert!(r.report.local_norms.iter().all(|&v| v == 0.0));
        assert!(r.report.probe_series.iter().all(|z| *z == ZERO));
        assert!(r.energy_norms.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn resonant_growth_tracks_the_plasmonic_projection() {
        let (m, setup) = critical_setup(DrudeMedium::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap().omega_p());
        let settings = ResonanceSettings { growth_window: (10.0, 60.0), growth_samples: 12, ..Default::default() };
        let r = resonance_experiment(&m, &setup, &settings).unwrap();
        assert_eq!(r.regime, ForcedRegime::Resonance);
        let slope = r.growth_slope.unwrap();
        let p = r.plasmonic_norm.unwrap();
        assert!((slope - p).abs() <= 0.1 * p, "slope {slope} vs projection {p}");
    }

    #[test]
    fn removing_plasmonic_content_bounds_the_response() {
        let (m, mut setup) = critical_setup(DrudeMedium::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap().omega_p());
        setup.remove_plasmonic = true;
        let settings = ResonanceSettings { growth_window: (10.0, 60.0), growth_samples: 12, ..Default::default() };
        let r = resonance_experiment(&m, &setup, &settings).unwrap();
        assert_eq!(r.regime, ForcedRegime::Stationary);
        assert!(r.plasmonic_norm.unwrap() < 1e-12);
    }
}
