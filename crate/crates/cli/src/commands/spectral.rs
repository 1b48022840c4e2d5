use drude_te::dispersion::{
    asymptotics_check, classify_omega0, locate_omega0_inflection, scenario_of, trace_branches, CriticalKind, CriticalPoint,
    DispersionBranch, Omega0Scenario, S0Classifier, S0Grouping, SlabRegion, StepControl,
};
use drude_te::dynamics::{slab_mode_energy, KERNEL_BAND, PLASMONIC_BAND};
use drude_te::modes::AnalyticMode;
use drude_te::operator1d::{assemble, eigendecompose, DiscreteOperator, DEFAULT_DENSE_CAP};
use drude_te::zones::{classify_zone, plasmonic_curve, plasmonic_inverse_and_jacobian, transverse_roots, SpectralPoint};
use drude_te::DrudeMedium;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::config::{GeometryConfig, RunConfig};
use crate::output::{fmt, num, nums, opt_num, Sink};
use crate::CliError;

fn missing(key: &str) -> CliError {
    CliError::Config(format!("missing key experiment.{key}"))
}

fn derived(m: &DrudeMedium) -> Value {
    let d = m.derived_constants();
    json!({
        "c": num(d.c),
        "omega_p": num(d.omega_p),
        "omega_c": num(d.omega_c),
        "kappa_c": num(d.kappa_c),
        "rho": num(m.rho()),
        "critical": d.critical,
        "sigma_exc": nums(&d.sigma_exc),
    })
}

#[derive(Debug, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ZonesExp {
    k_min: f64,
    k_max: Option<f64>,
    omega_min: f64,
    omega_max: Option<f64>,
    nk: Option<usize>,
    nomega: Option<usize>,
}

pub fn zones(cfg: &RunConfig, sink: &mut Sink) -> Result<Map<String, Value>, CliError> {
    let e: ZonesExp = cfg.experiment()?;
    let m = cfg.drude()?;
    let k_max = e.k_max.unwrap_or(3.0 * m.kappa_c());
    let w_max = e.omega_max.unwrap_or(1.5 * m.omega_e.max(m.omega_m));
    let (nk, nw) = (e.nk.unwrap_or(101), e.nomega.unwrap_or(101));
    if nk < 2 || nw < 2 || !(k_max > e.k_min) || !(w_max > e.omega_min) {
        return Err(CliError::Config("experiment: zones raster needs nk, nomega >= 2 and max > min".into()));
    }
    let mut counts = std::collections::BTreeMap::<&str, usize>::new();
    let mut rows = Vec::with_capacity(nk * nw);
    for i in 0..nk {
        let k = e.k_min + (k_max - e.k_min) * i as f64 / (nk - 1) as f64;
        for j in 0..nw {
            let w = e.omega_min + (w_max - e.omega_min) * j as f64 / (nw - 1) as f64;
            let p = SpectralPoint::new(k, w);
            let z = classify_zone(&m, p);
            *counts.entry(z.as_str()).or_default() += 1;
            let (xm, xp) = transverse_roots(&m, p).map_or((Complex64::new(f64::NAN, f64::NAN), Complex64::new(f64::NAN, f64::NAN)), |r| {
                (r.xi_minus, r.xi_plus)
            });
            rows.push(vec![fmt(k), fmt(w), z.to_string(), fmt(xm.re), fmt(xm.im), fmt(xp.re), fmt(xp.im)]);
        }
    }
    sink.csv(
        "zones.csv",
        &[
            "k [1/length]",
            "omega [1/time]",
            "zone [-]",
            "re_xi_minus [1/length]",
            "im_xi_minus [1/length]",
            "re_xi_plus [1/length]",
            "im_xi_plus [1/length]",
        ],
        rows,
    )?;
    let mut out = Map::new();
    out.insert("derived".into(), derived(&m));
    out.insert("zone_counts".into(), json!(counts));
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TraceExp {
    ns: Vec<usize>,
    k_max: Option<f64>,
    /// Samples of the plasmonic curve (bilayer only).
    nk: usize,
    asymptotics: bool,
}

impl Default for TraceExp {
    fn default() -> Self {
        Self { ns: (0..=5).collect(), k_max: None, nk: 200, asymptotics: false }
    }
}

fn kind_str(k: CriticalKind) -> &'static str {
    match k {
        CriticalKind::Max => "max",
        CriticalKind::Min => "min",
        CriticalKind::Inflection => "inflection",
    }
}

fn critical_json(c: &[CriticalPoint]) -> Value {
    Value::Array(
        c.iter()
            .map(|c| {
                json!({
                    "kind": kind_str(c.kind),
                    "k_cr": num(c.k_cr),
                    "omega_cr": num(c.omega_cr),
                    "second_difference": num(c.second_difference),
                    "second_difference_error": num(c.second_difference_error),
                    "non_degenerate": c.non_degenerate,
                })
            })
            .collect(),
    )
}

fn scenario_str(s: Omega0Scenario) -> &'static str {
    match s {
        Omega0Scenario::RhoGe1Max => "rho_ge_1_max",
        Omega0Scenario::IncreasingOnly => "increasing_only",
        Omega0Scenario::InflectionCase => "inflection",
        Omega0Scenario::MinMaxPair => "min_max_pair",
    }
}

fn region_str(r: SlabRegion) -> &'static str {
    match r {
        SlabRegion::LambdaMinus => "lambda_minus",
        SlabRegion::LambdaPlus => "lambda_plus",
    }
}

fn branch_rows(b: &DispersionBranch, zone: &str) -> Vec<Vec<String>> {
    b.samples
        .iter()
        .map(|s| {
            vec![
                b.n.to_string(),
                fmt(b.kappa_n),
                fmt(s.k),
                fmt(s.omega),
                fmt(s.group_velocity),
                fmt(s.residual),
                zone.to_string(),
            ]
        })
        .collect()
}

const BRANCH_HEADER: [&str; 7] = [
    "n [-]",
    "kappa_n [1/length]",
    "k [1/length]",
    "omega [1/time]",
    "group_velocity [length/time]",
    "residual [-]",
    "zone [-]",
];

pub fn trace(cfg: &RunConfig, sink: &mut Sink) -> Result<Map<String, Value>, CliError> {
    let e: TraceExp = cfg.experiment()?;
    let ctl = StepControl::default();
    let l = cfg.medium.slab_half_width;
    let c = 1.0 / (cfg.medium.eps0 * cfg.medium.mu0).sqrt();
    let k_max = e.k_max.unwrap_or(20.0 / (c * l));
    let mut out = Map::new();
    match cfg.geometry {
        GeometryConfig::Slab => {
            let m = cfg.drude()?;
            if e.ns.is_empty() {
                return Err(missing("ns"));
            }
            let branches = trace_branches(&m, &e.ns, k_max, &ctl)?;
            let mut summaries = Vec::new();
            for b in &branches {
                sink.csv(&format!("branch_{:03}.csv", b.n), &BRANCH_HEADER, branch_rows(b, region_str(b.zone)))?;
                let mut s = json!({
                    "n": b.n,
                    "kappa_n": num(b.kappa_n),
                    "samples": b.samples.len(),
                    "critical_points": critical_json(&b.critical_points),
                });
                if e.asymptotics {
                    let a = asymptotics_check(b, &m)?;
                    s["asymptotics"] = json!({
                        "k_end": num(a.k_end),
                        "limit_ratio": opt_num(a.limit_ratio),
                        "a_n": opt_num(a.a_n),
                        "a_inf_measured": opt_num(a.a_inf_measured),
                        "a_inf_fitted": opt_num(a.a_inf_fitted),
                        "a_inf_closed_form": opt_num(a.a_inf_closed_form),
                        "deviation": num(a.deviation),
                    });
                }
                if b.n == 0 {
                    // the inventory may be incomplete if k_max stops short of the critical points
                    out.insert(
                        "omega0_scenario".into(),
                        scenario_of(m.rho(), &b.critical_points).map_or(Value::Null, |s| scenario_str(s).into()),
                    );
                }
                summaries.push(s);
            }
            out.insert("derived".into(), derived(&m));
            out.insert("branches".into(), Value::Array(summaries));
        }
        GeometryConfig::DielectricSlab { .. } => {
            let d = cfg.dielectric()?;
            let branches = e.ns.par_iter().map(|&n| d.trace(n, k_max, &ctl)).collect::<Result<Vec<_>, _>>()?;
            let mut summaries = Vec::new();
            for b in &branches {
                sink.csv(&format!("branch_{:03}.csv", b.n), &BRANCH_HEADER, branch_rows(b, "guided"))?;
                summaries.push(json!({"n": b.n, "kappa_n": num(b.kappa_n), "samples": b.samples.len()}));
            }
            out.insert("c1".into(), num(d.c1()));
            out.insert("branches".into(), Value::Array(summaries));
        }
        GeometryConfig::Bilayer => {
            let m = cfg.drude()?;
            let kc = m.kappa_c();
            if !(k_max > kc) || e.nk < 2 {
                return Err(CliError::Config(format!("experiment: need k_max > kappa_c = {kc} and nk >= 2")));
            }
            let mut rows = Vec::with_capacity(e.nk);
            for i in 0..e.nk {
                let k = kc + (k_max - kc) * i as f64 / (e.nk - 1) as f64;
                let w = plasmonic_curve(&m, k)?;
                let vg = if m.is_critical() {
                    0.0
                } else {
                    plasmonic_inverse_and_jacobian(&m, w).map_or(f64::NAN, |(_, j)| 1.0 / j)
                };
                rows.push(vec!["0".into(), fmt(kc), fmt(k), fmt(w), fmt(vg), fmt(0.0), "EE".into()]);
            }
            sink.csv("plasmonic.csv", &BRANCH_HEADER, rows)?;
            out.insert("derived".into(), derived(&m));
        }
    }
    Ok(out)
}

#[derive(Debug, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ModeExp {
    k: Option<f64>,
    n: usize,
    omega: Option<f64>,
    j: Option<i32>,
    /// Sign of ω for the plasmonic mode.
    omega_sign: Option<f64>,
}

pub fn mode(cfg: &RunConfig, sink: &mut Sink) -> Result<Map<String, Value>, CliError> {
    let e: ModeExp = cfg.experiment()?;
    let m = cfg.drude()?;
    let grid = cfg.grid_1d("mode")?;
    let k = e.k.ok_or_else(|| missing("k"))?;
    let mode = match cfg.drude_geometry("mode")? {
        drude_te::media::Geometry::Slab => {
            let w = drude_te::dispersion::branch_solve(&m, k, e.n)?;
            let raw = AnalyticMode::slab_even(&m, SpectralPoint::new(k, w))?;
            let energy = slab_mode_energy(&m, &raw);
            raw.with_amplitude(1.0 / energy.sqrt())
        }
        drude_te::media::Geometry::Bilayer => match e.omega {
            None => AnalyticMode::plasmonic(&m, k, e.omega_sign.unwrap_or(1.0))?,
            Some(w) => {
                let p = SpectralPoint::new(k, w);
                let j = match e.j {
                    Some(j) => j,
                    None => *classify_zone(&m, p).branch_set().first().ok_or_else(|| {
                        CliError::Config(format!("experiment: (k, omega) = ({k}, {w}) is not in a surface zone"))
                    })?,
                };
                AnalyticMode::surface(&m, p, j)?
            }
        },
    };
    let rows: Vec<Vec<String>> = (0..=grid.cell_count)
        .map(|i| {
            let x = grid.node(i);
            let side = mode.side_at(x);
            let f = mode.fields(&m, x);
            let mut row = vec![fmt(x), format!("{side:?}").to_lowercase()];
            for z in f {
                row.push(fmt(z.re));
                row.push(fmt(z.im));
            }
            row
        })
        .collect();
    let mut header = vec!["x [length]".to_string(), "side [-]".to_string()];
    for c in ["e", "hx", "hy", "p_dot", "m_dot_x", "m_dot_y"] {
        header.push(format!("re_{c} [field]"));
        header.push(format!("im_{c} [field]"));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    sink.csv("mode.csv", &header, rows)?;
    let mut out = Map::new();
    out.insert("k".into(), num(mode.point.k));
    out.insert("omega".into(), num(mode.point.omega));
    out.insert("zone".into(), classify_zone(&m, mode.point).to_string().into());
    out.insert("amplitude".into(), num(mode.amplitude));
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SpectrumExp {
    k: Option<f64>,
    ks: Vec<f64>,
    window: Option<[f64; 2]>,
    vectors: bool,
    dense_cap: usize,
}

impl Default for SpectrumExp {
    fn default() -> Self {
        Self { k: None, ks: Vec::new(), window: None, vectors: false, dense_cap: DEFAULT_DENSE_CAP }
    }
}

fn eigen_class(m: &DrudeMedium, l: f64) -> &'static str {
    let om = m.omega_m;
    if l.abs() < KERNEL_BAND * om {
        "kernel"
    } else if (l.abs() - om).abs() < KERNEL_BAND * om {
        "stationary"
    } else if m.is_critical() && (l.abs() - m.omega_p()).abs() < PLASMONIC_BAND * om {
        "plasmonic"
    } else {
        "regular"
    }
}

struct KSpectrum {
    k: f64,
    op: DiscreteOperator,
    pairs: Vec<(f64, Option<Vec<f64>>)>,
}

pub fn spectrum(cfg: &RunConfig, sink: &mut Sink) -> Result<Map<String, Value>, CliError> {
    let e: SpectrumExp = cfg.experiment()?;
    let m = cfg.drude()?;
    let grid = cfg.grid_1d("spectrum")?;
    let ks = if e.ks.is_empty() { vec![e.k.ok_or_else(|| missing("k"))?] } else { e.ks.clone() };
    if e.vectors && e.window.is_none() {
        return Err(CliError::Config("experiment.vectors needs experiment.window".into()));
    }
    let spectra = ks
        .par_iter()
        .map(|&k| -> Result<KSpectrum, CliError> {
            let op = assemble(&m, k, &grid)?;
            let pairs = match e.window {
                Some([a, b]) if e.vectors => op.eigenpairs_in(a, b)?.into_iter().map(|(l, v)| (l, Some(v))).collect(),
                Some([a, b]) => op.eigenvalues_in(a, b)?.into_iter().map(|l| (l, None)).collect(),
                None => eigendecompose(&op, e.dense_cap)?.eigenvalues.into_iter().map(|l| (l, None)).collect(),
            };
            Ok(KSpectrum { k, op, pairs })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut per_k = Vec::new();
    for (ki, s) in spectra.iter().enumerate() {
        let mut kernel = 0;
        for (j, (l, v)) in s.pairs.iter().enumerate() {
            let class = eigen_class(&m, *l);
            kernel += usize::from(class == "kernel");
            rows.push(vec![fmt(s.k), j.to_string(), fmt(*l), class.to_string()]);
            if let Some(v) = v {
                let scaled: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
                let u = s.op.to_physical(&scaled);
                let profile = (1..grid.cell_count).map(|i| {
                    let z = u[s.op.e_index(i)];
                    vec![fmt(grid.node(i)), fmt(z.re), fmt(z.im)]
                });
                sink.csv(&format!("eigvec_{ki:03}_{j:03}.csv"), &["x [length]", "re_e [field]", "im_e [field]"], profile)?;
            }
        }
        per_k.push(json!({
            "k": num(s.k),
            "count": s.pairs.len(),
            "kernel_count": kernel,
            "operator_size": s.op.size(),
            "weighted_asymmetry": num(s.op.weighted_asymmetry()),
        }));
    }
    sink.csv("spectrum.csv", &["k [1/length]", "index [-]", "omega [1/time]", "class [-]"], rows)?;
    let mut out = Map::new();
    out.insert("h".into(), num(grid.h()));
    out.insert("per_k".into(), Value::Array(per_k));
    Ok(out)
}

#[derive(Debug, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ClassifyExp {
    grouping: S0Grouping,
    rho: Vec<f64>,
    big_omega: Vec<f64>,
    locate_inflection: bool,
}

fn classify_row(c: &S0Classifier, source: &str) -> Vec<String> {
    let kinds: Vec<&str> = c.critical_points.iter().map(|p| kind_str(p.kind)).collect();
    vec![
        fmt(c.rho),
        fmt(c.omega_bold),
        scenario_str(c.scenario).into(),
        kinds.join(";"),
        fmt(c.tau_c),
        fmt(c.s_min),
        c.interior_minimum.to_string(),
        fmt(c.min_abs_slope),
        source.into(),
    ]
}

pub fn classify(cfg: &RunConfig, sink: &mut Sink) -> Result<Map<String, Value>, CliError> {
    let e: ClassifyExp = cfg.experiment()?;
    if cfg.geometry != GeometryConfig::Slab {
        return Err(CliError::Config("`classify` needs geometry.kind = \"slab\"".into()));
    }
    let base = cfg.drude()?;
    let ctl = StepControl::default();
    let c = base.c();
    let at = |rho: f64, big: f64| -> Result<DrudeMedium, CliError> {
        DrudeMedium::new(base.eps0, base.mu0, rho * base.omega_m, base.omega_m, big * c / base.omega_m)
            .map_err(|e| CliError::Config(format!("experiment: scan medium (rho = {rho}, big_omega = {big}): {e}")))
    };
    let mut points: Vec<(f64, f64)> = if e.rho.is_empty() && e.big_omega.is_empty() {
        vec![(base.rho(), base.omega_m * base.slab_half_width / c)]
    } else if e.rho.is_empty() || e.big_omega.is_empty() {
        return Err(missing(if e.rho.is_empty() { "rho" } else { "big_omega" }));
    } else {
        e.big_omega.iter().flat_map(|&b| e.rho.iter().map(move |&r| (r, b))).collect()
    };
    // the seed only fixes the evaluation order
    points.shuffle(&mut rand::rngs::StdRng::seed_from_u64(cfg.seed));
    let media = points.iter().map(|&(r, b)| at(r, b)).collect::<Result<Vec<_>, _>>()?;
    let results = media.par_iter().map(|m| classify_omega0(m, e.grouping, &ctl)).collect::<Result<Vec<_>, _>>()?;
    let mut rows: Vec<Vec<String>> = results.iter().map(|r| classify_row(r, "scan")).collect();
    let mut realized: std::collections::BTreeSet<&str> = results.iter().map(|r| scenario_str(r.scenario)).collect();
    let mut inflections = Vec::new();
    if e.locate_inflection {
        for &big in &e.big_omega {
            let mut column: Vec<(f64, Omega0Scenario)> =
                points.iter().zip(&results).filter(|((_, b), _)| *b == big).map(|((r, _), c)| (*r, c.scenario)).collect();
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in column.windows(2) {
                if w[0].1 == Omega0Scenario::IncreasingOnly && w[1].1 == Omega0Scenario::MinMaxPair {
                    let loc = locate_omega0_inflection(&at(w[0].0, big)?, w[0].0, w[1].0, &ctl)?;
                    rows.push(classify_row(&loc.classifier, "bisection"));
                    realized.insert(scenario_str(loc.classifier.scenario));
                    inflections.push(json!({"big_omega": num(big), "rho_bracket": nums(&[loc.rho_bracket.0, loc.rho_bracket.1])}));
                }
            }
        }
    }
    sink.csv(
        "classify.csv",
        &[
            "rho [-]",
            "big_omega [-]",
            "scenario [-]",
            "critical_kinds [-]",
            "tau_c [-]",
            "s0_min [-]",
            "s0_interior_minimum [-]",
            "min_abs_slope [c]",
            "source [-]",
        ],
        rows,
    )?;
    let mut out = Map::new();
    out.insert("grouping".into(), if e.grouping == S0Grouping::AsPrinted { "as_printed" } else { "subtractive" }.into());
    out.insert("scenarios_realized".into(), json!(realized));
    out.insert("inflections".into(), Value::Array(inflections));
    Ok(out)
}
