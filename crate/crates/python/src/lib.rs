//! Python module `drude_te`.

use drude_te::dispersion::{self, CriticalKind, CriticalPoint, DispersionBranch, Omega0Scenario, S0Grouping, StepControl};
use drude_te::dynamics::{
    self, DecaySettings, ForcedRegime, ForcedSetup, ForcedSource, ResonanceSettings, SourceProfile, WavePacketSpec,
};
use drude_te::media::Geometry;
use drude_te::modes::AnalyticMode;
use drude_te::operator1d::{self, Grid1D, DEFAULT_DENSE_CAP};
use drude_te::{Error, Side, SpectralPoint};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_)
        | Error::Domain(_)
        | Error::InvalidBranch { .. }
        | Error::BelowThreshold { .. }
        | Error::Misuse(_)
        | Error::Refused { .. }
        | Error::NoGuiding { .. }
        | Error::Grid(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn side(s: &str) -> PyResult<Side> {
    match s {
        "vacuum" => Ok(Side::Vacuum),
        "drude" => Ok(Side::Drude),
        _ => Err(PyValueError::new_err(format!("side must be \"vacuum\" or \"drude\", got {s:?}"))),
    }
}

fn geometry(s: &str) -> PyResult<Geometry> {
    match s {
        "bilayer" => Ok(Geometry::Bilayer),
        "slab" => Ok(Geometry::Slab),
        _ => Err(PyValueError::new_err(format!("geometry must be \"bilayer\" or \"slab\", got {s:?}"))),
    }
}

fn grouping(s: &str) -> PyResult<S0Grouping> {
    match s {
        "as_printed" => Ok(S0Grouping::AsPrinted),
        "subtractive" => Ok(S0Grouping::Subtractive),
        _ => Err(PyValueError::new_err(format!("grouping must be \"as_printed\" or \"subtractive\", got {s:?}"))),
    }
}

fn kind_str(k: CriticalKind) -> &'static str {
    match k {
        CriticalKind::Max => "max",
        CriticalKind::Min => "min",
        CriticalKind::Inflection => "inflection",
    }
}

fn scenario_str(s: Omega0Scenario) -> &'static str {
    match s {
        Omega0Scenario::RhoGe1Max => "rho_ge_1_max",
        Omega0Scenario::IncreasingOnly => "increasing_only",
        Omega0Scenario::InflectionCase => "inflection",
        Omega0Scenario::MinMaxPair => "min_max_pair",
    }
}

fn critical_dicts<'py>(py: Python<'py>, cs: &[CriticalPoint]) -> PyResult<Vec<Bound<'py, PyDict>>> {
    cs.iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("kind", kind_str(c.kind))?;
            d.set_item("k_cr", c.k_cr)?;
            d.set_item("omega_cr", c.omega_cr)?;
            d.set_item("second_difference", c.second_difference)?;
            d.set_item("non_degenerate", c.non_degenerate)?;
            Ok(d)
        })
        .collect()
}

/// Vacuum/Drude pair with Drude-law permittivity and permeability.
#[pyclass(name = "DrudeMedium", module = "drude_te", frozen)]
struct PyDrudeMedium {
    inner: drude_te::DrudeMedium,
}

#[pymethods]
impl PyDrudeMedium {
    #[new]
    #[pyo3(signature = (omega_e, omega_m, eps0 = 1.0, mu0 = 1.0, slab_half_width = 1.0, critical = None))]
    fn new(omega_e: f64, omega_m: f64, eps0: f64, mu0: f64, slab_half_width: f64, critical: Option<bool>) -> PyResult<Self> {
        let inner = drude_te::DrudeMedium::new(eps0, mu0, omega_e, omega_m, slab_half_width).map_err(err)?;
        Ok(Self { inner: inner.with_critical_override(critical) })
    }

    #[getter]
    fn eps0(&self) -> f64 {
        self.inner.eps0
    }
    #[getter]
    fn mu0(&self) -> f64 {
        self.inner.mu0
    }
    #[getter]
    fn omega_e(&self) -> f64 {
        self.inner.omega_e
    }
    #[getter]
    fn omega_m(&self) -> f64 {
        self.inner.omega_m
    }
    #[getter]
    fn slab_half_width(&self) -> f64 {
        self.inner.slab_half_width
    }
    #[getter]
    fn c(&self) -> f64 {
        self.inner.c()
    }
    #[getter]
    fn omega_p(&self) -> f64 {
        self.inner.omega_p()
    }
    #[getter]
    fn omega_c(&self) -> f64 {
        self.inner.omega_c()
    }
    #[getter]
    fn kappa_c(&self) -> f64 {
        self.inner.kappa_c()
    }
    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho()
    }
    #[getter]
    fn is_critical(&self) -> bool {
        self.inner.is_critical()
    }

    #[pyo3(signature = (omega, side = "drude"))]
    fn permittivity(&self, omega: f64, side: &str) -> PyResult<f64> {
        self.inner.permittivity(omega, self::side(side)?).map_err(err)
    }

    #[pyo3(signature = (omega, side = "drude"))]
    fn permeability(&self, omega: f64, side: &str) -> PyResult<f64> {
        self.inner.permeability(omega, self::side(side)?).map_err(err)
    }

    /// Zone label of (k, ω) for the vacuum/Drude interface.
    fn zone(&self, k: f64, omega: f64) -> String {
        drude_te::zones::classify_zone(&self.inner, SpectralPoint::new(k, omega)).to_string()
    }

    /// (ξ⁻, ξ⁺) with Re ≥ 0, Im ≤ 0 on the cut.
    fn transverse_roots(&self, k: f64, omega: f64) -> PyResult<(Complex64, Complex64)> {
        let r = drude_te::zones::transverse_roots(&self.inner, SpectralPoint::new(k, omega)).map_err(err)?;
        Ok((r.xi_minus, r.xi_plus))
    }

    fn plasmonic_curve(&self, k: f64) -> PyResult<f64> {
        drude_te::zones::plasmonic_curve(&self.inner, k).map_err(err)
    }

    fn threshold_kappa(&self, n: usize) -> f64 {
        dispersion::threshold_kappa(&self.inner, n)
    }

    /// Frequency of slab branch `n` at wavenumber `k`.
    fn branch_solve(&self, k: f64, n: usize) -> PyResult<f64> {
        dispersion::branch_solve(&self.inner, k, n).map_err(err)
    }

    fn trace_branch(&self, py: Python<'_>, n: usize, k_max: f64) -> PyResult<Branch> {
        let b = py.detach(|| dispersion::trace_branch(&self.inner, n, k_max, &StepControl::default())).map_err(err)?;
        Ok(Branch { inner: b })
    }

    /// Shape scenario of the lowest slab branch.
    #[pyo3(signature = (grouping = "as_printed"))]
    fn classify_omega0<'py>(&self, py: Python<'py>, grouping: &str) -> PyResult<Bound<'py, PyDict>> {
        let g = self::grouping(grouping)?;
        let c = py.detach(|| dispersion::classify_omega0(&self.inner, g, &StepControl::default())).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("scenario", scenario_str(c.scenario))?;
        d.set_item("rho", c.rho)?;
        d.set_item("omega_bold", c.omega_bold)?;
        d.set_item("tau_c", c.tau_c)?;
        d.set_item("s_min", c.s_min)?;
        d.set_item("interior_minimum", c.interior_minimum)?;
        d.set_item("min_abs_slope", c.min_abs_slope)?;
        d.set_item("critical_points", critical_dicts(py, &c.critical_points)?)?;
        Ok(d)
    }

    /// Eigenvalues of the discrete reduced operator on [-X, X] with N cells.
    #[pyo3(signature = (k, half_width, cells, geometry = "slab", window = None))]
    fn spectrum(
        &self,
        py: Python<'_>,
        k: f64,
        half_width: f64,
        cells: usize,
        geometry: &str,
        window: Option<(f64, f64)>,
    ) -> PyResult<Vec<f64>> {
        let grid = Grid1D::new(half_width, cells, self::geometry(geometry)?, self.inner.slab_half_width).map_err(err)?;
        py.detach(|| {
            let op = operator1d::assemble(&self.inner, k, &grid)?;
            match window {
                Some((a, b)) => op.eigenvalues_in(a, b),
                None => operator1d::eigendecompose(&op, DEFAULT_DENSE_CAP).map(|d| d.eigenvalues),
            }
        })
        .map_err(err)
    }

    /// Energy-normalized even slab mode of branch `n`: six field components at each x.
    fn slab_mode(&self, k: f64, n: usize, xs: Vec<f64>) -> PyResult<(f64, Vec<[Complex64; 6]>)> {
        let m = &self.inner;
        let w = dispersion::branch_solve(m, k, n).map_err(err)?;
        let raw = AnalyticMode::slab_even(m, SpectralPoint::new(k, w)).map_err(err)?;
        let mode = raw.with_amplitude(1.0 / dynamics::slab_mode_energy(m, &raw).sqrt());
        Ok((w, xs.iter().map(|&x| mode.fields(m, x)).collect()))
    }

    /// Packet on slab branch `n` with bump envelope on [center ± half_width]; fits the decay exponent.
    #[pyo3(signature = (n, center, half_width, window, k_max = None, expected = None))]
    #[allow(clippy::too_many_arguments)]
    fn decay<'py>(
        &self,
        py: Python<'py>,
        n: usize,
        center: f64,
        half_width: f64,
        window: (f64, f64),
        k_max: Option<f64>,
        expected: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let m = &self.inner;
        let spec = WavePacketSpec::new(n, center, half_width);
        let (packet, report) = py
            .detach(|| {
                let b = dispersion::trace_branch(m, n, k_max.unwrap_or(2.0 * spec.support().1), &StepControl::default())?;
                dynamics::decay_experiment(m, spec, &b.critical_points, &DecaySettings::new(m, window), expected)
            })
            .map_err(err)?;
        let d = PyDict::new(py);
        let fit = report.fitted_exponent.as_ref();
        d.set_item("exponent", fit.map(|f| f.exponent))?;
        d.set_item("reliable", fit.map(|f| f.reliable))?;
        d.set_item("times", &report.times)?;
        d.set_item("probe_max", &report.probe_max)?;
        d.set_item("critical_in_support", critical_dicts(py, &packet.critical_in_support)?)?;
        Ok(d)
    }

    /// Time-harmonic forcing from rest on the bilayer, checked for a limiting amplitude.
    #[pyo3(signature = (omega_s, k0, sigma_y, half_width, cells, gaussian_width = 1.0, k_nodes = 48, s = 2.0, t_first = 12.5, windows = 5, samples = 12))]
    #[allow(clippy::too_many_arguments)]
    fn limiting_amplitude<'py>(
        &self,
        py: Python<'py>,
        omega_s: f64,
        k0: f64,
        sigma_y: f64,
        half_width: f64,
        cells: usize,
        gaussian_width: f64,
        k_nodes: usize,
        s: f64,
        t_first: f64,
        windows: usize,
        samples: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let m = &self.inner;
        let grid = Grid1D::new(half_width, cells, Geometry::Bilayer, m.slab_half_width).map_err(err)?;
        let src = ForcedSource::new(SourceProfile::Gaussian { center: 0.0, width: gaussian_width }, k0, sigma_y);
        let mut setup = ForcedSetup::new(grid, src, omega_s);
        setup.k_nodes = k_nodes;
        setup.s = s;
        let la = py
            .detach(|| dynamics::limiting_amplitude_experiment(m, &setup, t_first, windows, samples))
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("times", &la.report.times)?;
        d.set_item("local_norms", &la.report.local_norms)?;
        d.set_item("monotone", la.monotone)?;
        d.set_item("final_drift", la.final_drift)?;
        Ok(d)
    }

    /// Plasmonic-profile forcing on the bilayer; regime and growth of the response.
    #[pyo3(signature = (omega_s, k0, sigma_y, half_width, cells, k_nodes = 16))]
    #[allow(clippy::too_many_arguments)]
    fn resonance<'py>(
        &self,
        py: Python<'py>,
        omega_s: f64,
        k0: f64,
        sigma_y: f64,
        half_width: f64,
        cells: usize,
        k_nodes: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let m = &self.inner;
        let grid = Grid1D::new(half_width, cells, Geometry::Bilayer, m.slab_half_width).map_err(err)?;
        let mut setup = ForcedSetup::new(grid, ForcedSource::new(SourceProfile::Plasmonic, k0, sigma_y), omega_s);
        setup.k_nodes = k_nodes;
        let r = py
            .detach(|| dynamics::resonance_experiment(m, &setup, &ResonanceSettings::default()))
            .map_err(err)?;
        let d = PyDict::new(py);
        let regime = match r.regime {
            ForcedRegime::Resonance => "resonance",
            ForcedRegime::Beat => "beat",
            ForcedRegime::Stationary => "stationary",
        };
        d.set_item("regime", regime)?;
        d.set_item("growth_exponent", r.growth.as_ref().map(|g| g.exponent))?;
        d.set_item("peaks", &r.peaks)?;
        d.set_item("frequency_bin", r.frequency_bin)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        let m = &self.inner;
        format!(
            "DrudeMedium(omega_e={}, omega_m={}, eps0={}, mu0={}, slab_half_width={})",
            m.omega_e, m.omega_m, m.eps0, m.mu0, m.slab_half_width
        )
    }
}

/// A traced dispersion branch.
#[pyclass(module = "drude_te", frozen)]
struct Branch {
    inner: DispersionBranch,
}

#[pymethods]
impl Branch {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }
    #[getter]
    fn kappa_n(&self) -> f64 {
        self.inner.kappa_n
    }
    #[getter]
    fn k(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.k).collect()
    }
    #[getter]
    fn omega(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.omega).collect()
    }
    #[getter]
    fn group_velocity(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.group_velocity).collect()
    }
    #[getter]
    fn critical_points<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        critical_dicts(py, &self.inner.critical_points)
    }

    fn omega_at(&self, k: f64) -> Option<f64> {
        self.inner.omega_at(k)
    }

    fn __len__(&self) -> usize {
        self.inner.samples.len()
    }
}

/// Dielectric slab in a uniform cladding.
#[pyclass(name = "DielectricSlab", module = "drude_te", frozen)]
struct PyDielectricSlab {
    inner: dispersion::DielectricSlab,
}

#[pymethods]
impl PyDielectricSlab {
    #[new]
    #[pyo3(signature = (eps1, mu1, eps0 = 1.0, mu0 = 1.0, slab_half_width = 1.0))]
    fn new(eps1: f64, mu1: f64, eps0: f64, mu0: f64, slab_half_width: f64) -> PyResult<Self> {
        Ok(Self { inner: dispersion::DielectricSlab::new(eps1, mu1, eps0, mu0, slab_half_width).map_err(err)? })
    }

    #[getter]
    fn c1(&self) -> f64 {
        self.inner.c1()
    }

    fn kappa(&self, n: usize) -> f64 {
        self.inner.kappa(n)
    }

    fn solve(&self, k: f64, n: usize) -> PyResult<f64> {
        self.inner.solve(k, n).map_err(err)
    }
}

#[pymodule(name = "drude_te")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDrudeMedium>()?;
    m.add_class::<Branch>()?;
    m.add_class::<PyDielectricSlab>()?;
    Ok(())
}
