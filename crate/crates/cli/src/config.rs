use std::fs;
use std::path::{Path, PathBuf};

use drude_te::dispersion::DielectricSlab;
use drude_te::media::{DrudeMedium, Geometry};
use drude_te::operator1d::Grid1D;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    pub eps0: f64,
    pub mu0: f64,
    pub omega_e: f64,
    pub omega_m: f64,
    pub slab_half_width: f64,
    /// Forces the critical-case flag instead of detecting it.
    #[serde(default)]
    pub critical: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Bilayer,
    Slab,
    DielectricSlab { eps1: f64, mu1: f64 },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "X")]
    pub half_width: f64,
    #[serde(rename = "N")]
    pub cells: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    medium: MediumConfig,
    geometry: GeometryConfig,
    grid: Option<GridConfig>,
    #[serde(default)]
    experiment: toml::Table,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub medium: MediumConfig,
    pub geometry: GeometryConfig,
    pub grid: Option<GridConfig>,
    pub experiment: toml::Table,
    pub output_dir: PathBuf,
    pub seed: u64,
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{key} must be a positive number, got {v}")))
    }
}

impl RunConfig {
    /// Reads and validates `path`; `out` overrides `output_dir`.
    pub fn load(path: &Path, out: Option<&Path>) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let raw: RawConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let output_dir = out
            .map(Path::to_path_buf)
            .or(raw.output_dir)
            .ok_or_else(|| CliError::Config("missing key output_dir (or pass --out)".into()))?;
        let cfg = Self {
            medium: raw.medium,
            geometry: raw.geometry,
            grid: raw.grid,
            experiment: raw.experiment,
            output_dir,
            seed: raw.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let m = &self.medium;
        for (key, v) in [
            ("medium.eps0", m.eps0),
            ("medium.mu0", m.mu0),
            ("medium.omega_e", m.omega_e),
            ("medium.omega_m", m.omega_m),
            ("medium.slab_half_width", m.slab_half_width),
        ] {
            positive(key, v)?;
        }
        if let GeometryConfig::DielectricSlab { eps1, mu1 } = self.geometry {
            positive("geometry.eps1", eps1)?;
            positive("geometry.mu1", mu1)?;
        }
        if let Some(g) = self.grid {
            positive("grid.X", g.half_width)?;
            if g.cells < 4 || g.cells % 2 != 0 {
                return Err(CliError::Config(format!("grid.N must be an even integer >= 4, got {}", g.cells)));
            }
        }
        fs::create_dir_all(&self.output_dir)
            .and_then(|_| {
                let probe = self.output_dir.join(".write-test");
                fs::write(&probe, b"")?;
                fs::remove_file(probe)
            })
            .map_err(|e| CliError::Config(format!("output_dir {} is not writable: {e}", self.output_dir.display())))
    }

    pub fn drude(&self) -> Result<DrudeMedium, CliError> {
        let m = &self.medium;
        let medium = DrudeMedium::new(m.eps0, m.mu0, m.omega_e, m.omega_m, m.slab_half_width)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(medium.with_critical_override(m.critical))
    }

    pub fn dielectric(&self) -> Result<DielectricSlab, CliError> {
        match self.geometry {
            GeometryConfig::DielectricSlab { eps1, mu1 } => {
                let m = &self.medium;
                DielectricSlab::new(eps1, mu1, m.eps0, m.mu0, m.slab_half_width).map_err(|e| CliError::Config(e.to_string()))
            }
            _ => Err(CliError::Config("geometry.kind must be dielectric_slab".into())),
        }
    }

    /// Bilayer or slab geometry for Drude-medium commands.
    pub fn drude_geometry(&self, command: &str) -> Result<Geometry, CliError> {
        match self.geometry {
            GeometryConfig::Bilayer => Ok(Geometry::Bilayer),
            GeometryConfig::Slab => Ok(Geometry::Slab),
            GeometryConfig::DielectricSlab { .. } => {
                Err(CliError::Config(format!("`{command}` needs geometry.kind = \"bilayer\" or \"slab\"")))
            }
        }
    }

    pub fn grid_1d(&self, command: &str) -> Result<Grid1D, CliError> {
        let g = self.grid.ok_or_else(|| CliError::Config(format!("missing key grid (needed by `{command}`)")))?;
        let geometry = self.drude_geometry(command)?;
        Grid1D::new(g.half_width, g.cells, geometry, self.medium.slab_half_width)
            .map_err(|e| CliError::Config(format!("grid: {e}")))
    }

    /// The `[experiment]` table decoded for one subcommand.
    pub fn experiment<T: DeserializeOwned>(&self) -> Result<T, CliError> {
        toml::Value::Table(self.experiment.clone())
            .try_into()
            .map_err(|e| CliError::Config(format!("experiment: {e}")))
    }
}
