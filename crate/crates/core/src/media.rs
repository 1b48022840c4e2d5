//! Vacuum/Drude constitutive laws and the derived spectral constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CRITICAL_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Vacuum,
    Drude,
}

/// Bilayer: Drude half-space `x > 0`. Slab: Drude layer `|x| < L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Bilayer,
    Slab,
}

impl Geometry {
    pub fn interfaces(&self, l: f64) -> Vec<f64> {
        match self {
            Geometry::Bilayer => vec![0.0],
            Geometry::Slab => vec![-l, l],
        }
    }

    /// Material occupying the open set around `x` (x not an interface).
    pub fn side_at(&self, x: f64, l: f64) -> Side {
        let inside = match self {
            Geometry::Bilayer => x > 0.0,
            Geometry::Slab => x.abs() < l,
        };
        if inside {
            Side::Drude
        } else {
            Side::Vacuum
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrudeMedium {
    pub eps0: f64,
    pub mu0: f64,
    pub omega_e: f64,
    pub omega_m: f64,
    /// Half-width L of the Drude slab `|x| < L`; unused by the bilayer.
    pub slab_half_width: f64,
    #[serde(default)]
    pub critical_override: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub c: f64,
    pub omega_p: f64,
    pub omega_c: f64,
    pub kappa_c: f64,
    pub sigma_exc: Vec<f64>,
    pub critical: bool,
}

impl DrudeMedium {
    pub fn new(eps0: f64, mu0: f64, omega_e: f64, omega_m: f64, slab_half_width: f64) -> Result<Self> {
        let m = Self { eps0, mu0, omega_e, omega_m, slab_half_width, critical_override: None };
        m.validate()?;
        Ok(m)
    }

    /// eps0 = mu0 = 1 and L = 1.
    pub fn normalized(omega_e: f64, omega_m: f64) -> Result<Self> {
        Self::new(1.0, 1.0, omega_e, omega_m, 1.0)
    }

    pub fn with_slab_half_width(mut self, l: f64) -> Result<Self> {
        self.slab_half_width = l;
        self.validate()?;
        Ok(self)
    }

    pub fn with_critical_override(mut self, critical: Option<bool>) -> Self {
        self.critical_override = critical;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("eps0", self.eps0),
            ("mu0", self.mu0),
            ("omega_e", self.omega_e),
            ("omega_m", self.omega_m),
            ("slab_half_width", self.slab_half_width),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn c(&self) -> f64 {
        1.0 / (self.eps0 * self.mu0).sqrt()
    }

    pub fn omega_p(&self) -> f64 {
        self.omega_m / 2f64.sqrt()
    }

    pub fn omega_c(&self) -> f64 {
        self.omega_e * self.omega_m / self.omega_e.hypot(self.omega_m)
    }

    pub fn kappa_c(&self) -> f64 {
        (self.eps0 * self.mu0).sqrt() * self.omega_c()
    }

    pub fn rho(&self) -> f64 {
        self.omega_e / self.omega_m
    }

    pub fn is_critical(&self) -> bool {
        self.critical_override.unwrap_or_else(|| {
            (self.omega_e - self.omega_m).abs() <= CRITICAL_RTOL * self.omega_e.max(self.omega_m)
        })
    }

    pub fn derived_constants(&self) -> DerivedConstants {
        let critical = self.is_critical();
        let (wp, wm) = (self.omega_p(), self.omega_m);
        let sigma_exc = if critical {
            vec![-wm, 0.0, wm]
        } else {
            vec![-wm, -wp, 0.0, wp, wm]
        };
        DerivedConstants {
            c: self.c(),
            omega_p: wp,
            omega_c: if critical { wp } else { self.omega_c() },
            kappa_c: self.kappa_c(),
            sigma_exc,
            critical,
        }
    }

    pub fn permittivity(&self, omega: f64, side: Side) -> Result<f64> {
        match side {
            Side::Vacuum => Ok(self.eps0),
            Side::Drude if omega == 0.0 => Err(Error::Domain("Drude permittivity has a pole at omega = 0".into())),
            Side::Drude => Ok(self.eps_drude(omega)),
        }
    }

    pub fn permeability(&self, omega: f64, side: Side) -> Result<f64> {
        match side {
            Side::Vacuum => Ok(self.mu0),
            Side::Drude if omega == 0.0 => Err(Error::Domain("Drude permeability has a pole at omega = 0".into())),
            Side::Drude => Ok(self.mu_drude(omega)),
        }
    }

    pub(crate) fn eps_drude(&self, omega: f64) -> f64 {
        self.eps0 * (1.0 - (self.omega_e / omega).powi(2))
    }

    pub(crate) fn mu_drude(&self, omega: f64) -> f64 {
        self.mu0 * (1.0 - (self.omega_m / omega).powi(2))
    }

    /// Distance from `omega` to the exceptional set.
    pub fn distance_to_exceptional(&self, omega: f64) -> f64 {
        self.derived_constants()
            .sigma_exc
            .iter()
            .map(|s| (omega - s).abs())
            .fold(f64::INFINITY, f64::min)
    }
}
