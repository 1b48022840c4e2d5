use drude_te::dispersion::{trace_branch, CriticalKind, StepControl};
use drude_te::dynamics::{
    decay_experiment, limiting_amplitude_experiment, resonance_experiment, DecaySettings, ForcedRegime, ForcedSetup,
    ForcedSource, LimitingAmplitudeReport, ResonanceSettings, SourceProfile, WavePacketSpec, DEFAULT_FIT_WINDOW,
};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::config::{GeometryConfig, RunConfig};
use crate::output::{fmt, num, nums, opt_num, Sink};
use crate::CliError;

fn one() -> f64 {
    1.0
}

fn default_profile() -> SourceProfile {
    SourceProfile::Gaussian { center: 0.0, width: 1.0 }
}

/// Source, operator sampling and time grid shared by `forced`, `amplitude` and `resonance`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForcedExp {
    omega_s: f64,
    k0: f64,
    sigma_y: f64,
    #[serde(default = "one")]
    amplitude: f64,
    #[serde(default = "default_profile")]
    profile: SourceProfile,
    k_nodes: Option<usize>,
    s: Option<f64>,
    y_half_width: Option<f64>,
    y_count: Option<usize>,
    probe: Option<[f64; 2]>,
    #[serde(default)]
    remove_plasmonic: bool,
    dense_cap: Option<usize>,
    t_first: Option<f64>,
    windows: Option<usize>,
    samples: Option<usize>,
    /// Drift bound for the `amplitude` verdict.
    tolerance: Option<f64>,
    growth_window: Option<[f64; 2]>,
    growth_samples: Option<usize>,
    duration: Option<f64>,
    dt: Option<f64>,
    peak_fraction: Option<f64>,
}

fn setup(cfg: &RunConfig, e: &ForcedExp, command: &str) -> Result<ForcedSetup, CliError> {
    let grid = cfg.grid_1d(command)?;
    let mut source = ForcedSource::new(e.profile, e.k0, e.sigma_y);
    source.amplitude = e.amplitude;
    let mut s = ForcedSetup::new(grid, source, e.omega_s);
    if let Some(v) = e.k_nodes {
        s.k_nodes = v;
    }
    if let Some(v) = e.s {
        s.s = v;
    }
    if let Some(v) = e.y_half_width {
        s.y_half_width = v;
    }
    if let Some(v) = e.y_count {
        s.y_count = v;
    }
    if let Some([x, y]) = e.probe {
        s.probe = (x, y);
    }
    if let Some(v) = e.dense_cap {
        s.dense_cap = v;
    }
    s.remove_plasmonic = e.remove_plasmonic;
    Ok(s)
}

const SERIES_HEADER: [&str; 5] =
    ["t [time]", "local_norm [energy^1/2]", "energy_norm [energy^1/2]", "re_probe [field]", "im_probe [field]"];

fn run_amplitude(cfg: &RunConfig, e: &ForcedExp, command: &str) -> Result<LimitingAmplitudeReport, CliError> {
    let m = cfg.drude()?;
    let s = setup(cfg, e, command)?;
    Ok(limiting_amplitude_experiment(&m, &s, e.t_first.unwrap_or(10.0), e.windows.unwrap_or(4), e.samples.unwrap_or(12))?)
}

fn series_rows(la: &LimitingAmplitudeReport) -> Vec<Vec<String>> {
    let r = &la.report;
    (0..r.times.len())
        .map(|i| {
            vec![fmt(r.times[i]), fmt(r.local_norms[i]), fmt(la.energy_norms[i]), fmt(r.probe_series[i].re), fmt(r.probe_series[i].im)]
        })
        .collect()
}

pub fn forced(cfg: &RunConfig, sink: &mut Sink) -> Result<Map<String, Value>, CliError> {
    let e: ForcedExp = cfg.experiment()?;
    let la = run_amplitude(cfg, &e, "forced")?;
    sink.csv("forced.csv", &SERIES_HEADER, series_rows(&la))?;
    let mut out = Map::new();
    out.insert("samples".into(), la.report.times.len().into());
    out.insert("final_local_norm".into(), opt_num(la.report.local_norms.last().copied()));
    out.insert("final_energy_norm".into(), opt_num(la.energy_norms.last().copied()));
    Ok(out)
}

pub fn amplitude(cfg: &RunConfig, sink: &mut Sink) -> Result<Map<String, Value>, CliError> {
    let e: ForcedExp = cfg.experiment()?;
    let la = run_amplitude(cfg, &e, "amplitude")?;
    sink.csv("amplitude.csv", &SERIES_HEADER, series_rows(&la))?;
    let rows = la.windows.iter().map(|w| {
        vec![fmt(w.t0), fmt(w.t1), fmt(w.sup_difference), fmt(w.reference_norm), fmt(w.sup_difference / w.reference_norm)]
    });
    sink.csv(
        "windows.csv",
        &["t0 [time]", "t1 [time]", "sup_difference [energy^1/2]", "reference_norm [energy^1/2]", "relative [-]"],
        rows,
    )?;
    let tolerance = e.tolerance.unwrap_or(0.05);
    let mut out = Map::new();
    out.insert("monotone".into(), la.monotone.into());
    out.insert("final_drift".into(), num(la.final_drift));
    out.insert("tolerance".into(), num(tolerance));
    out.insert("converged".into(), (la.monotone && la.final_drift <= tolerance).into());
    Ok(out)
}

pub fn resonance(cfg: &RunConfig, sink: &mut Sink) -> Result<Map<String, Value>, CliError> {
    let e: ForcedExp = cfg.experiment()?;
    let m = cfg.drude()?;
    let s = setup(cfg, &e, "resonance")?;
    let d = ResonanceSettings::default();
    let settings = ResonanceSettings {
        growth_window: e.growth_window.map_or(d.growth_window, |[a, b]| (a, b)),
        growth_samples: e.growth_samples.unwrap_or(d.growth_samples),
        duration: e.duration.unwrap_or(d.duration),
        dt: e.dt.unwrap_or(d.dt),
        peak_fraction: e.peak_fraction.unwrap_or(d.peak_fraction),
    };
    let r = resonance_experiment(&m, &s, &settings)?;
    let rep = &r.report;
    let rows = (0..rep.times.len()).map(|i| {
        let z = rep.probe_series[i];
        vec![fmt(rep.times[i]), fmt(z.re), fmt(z.im), fmt(z.norm())]
    });
    sink.csv("resonance.csv", &["t [time]", "re_probe [field]", "im_probe [field]", "abs_probe [field]"], rows)?;
    if !rep.local_norms.is_empty() {
        let rows = rep.times.iter().zip(&rep.local_norms).map(|(t, n)| vec![fmt(*t), fmt(*n)]);
        sink.csv("growth.csv", &["t [time]", "local_norm [energy^1/2]"], rows)?;
    }
    let regime = match r.regime {
        ForcedRegime::Resonance => "resonance",
        ForcedRegime::Beat => "beat",
        ForcedRegime::Stationary => "stationary",
    };
    let mut out = Map::new();
    out.insert("regime".into(), regime.into());
    out.insert("growth_exponent".into(), opt_num(r.growth.as_ref().map(|g| g.exponent)));
    out.insert("growth_slope".into(), opt_num(r.growth_slope));
    out.insert("plasmonic_norm".into(), opt_num(r.plasmonic_norm));
    out.insert("peaks".into(), nums(&r.peaks));
    out.insert("frequency_bin".into(), opt_num(r.frequency_bin));
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecayExp {
    #[serde(default = "first_branch")]
    n: usize,
    center: f64,
    half_width: f64,
    window: Option<[f64; 2]>,
    samples: Option<usize>,
    probes: Option<Vec<[f64; 2]>>,
    expected: Option<f64>,
    nodes: Option<usize>,
    /// Range traced for critical points; defaults to twice the support's end.
    k_max: Option<f64>,
}

fn first_branch() -> usize {
    1
}

pub fn decay(cfg: &RunConfig, sink: &mut Sink) -> Result<Map<String, Value>, CliError> {
    let e: DecayExp = cfg.experiment()?;
    if cfg.geometry != GeometryConfig::Slab {
        return Err(CliError::Config("`decay` needs geometry.kind = \"slab\"".into()));
    }
    let m = cfg.drude()?;
    let mut spec = WavePacketSpec::new(e.n, e.center, e.half_width);
    if let Some(v) = e.nodes {
        spec.nodes = v;
    }
    let branch = trace_branch(&m, e.n, e.k_max.unwrap_or(2.0 * spec.support().1), &StepControl::default())?;
    let window = e.window.map_or(DEFAULT_FIT_WINDOW, |[a, b]| (a, b));
    let mut settings = DecaySettings::new(&m, window);
    if let Some(v) = e.samples {
        settings.samples = v;
    }
    if let Some(p) = &e.probes {
        settings.probes = p.iter().map(|&[x, y]| (x, y)).collect();
    }
    let (packet, report) = decay_experiment(&m, spec, &branch.critical_points, &settings, e.expected)?;
    let rows = (0..report.times.len()).map(|i| {
        let z = report.probe_series[i];
        vec![fmt(report.times[i]), fmt(report.probe_max[i]), fmt(z.re), fmt(z.im)]
    });
    sink.csv("decay.csv", &["t [time]", "probe_max [field]", "re_probe [field]", "im_probe [field]"], rows)?;
    let fit = report.fitted_exponent.as_ref().expect("decay runs always fit");
    let kinds: Vec<&str> = packet
        .critical_in_support
        .iter()
        .map(|c| match c.kind {
            CriticalKind::Max => "max",
            CriticalKind::Min => "min",
            CriticalKind::Inflection => "inflection",
        })
        .collect();
    let mut out = Map::new();
    out.insert(
        "fit".into(),
        json!({
            "exponent": num(fit.exponent),
            "window": nums(&[fit.window.0, fit.window.1]),
            "residual": num(fit.residual),
            "stderr": num(fit.stderr),
            "reliable": fit.reliable,
            "expected": opt_num(fit.expected),
        }),
    );
    out.insert("critical_in_support".into(), json!(kinds));
    out.insert("packet_nodes".into(), packet.nodes.len().into());
    Ok(out)
}
