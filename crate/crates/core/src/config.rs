//! Experiment configuration (JSON) and the geometry derived from it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytic::{airy_radius, fringe_spacing, AiryMode, FringeModel, WireGrid};
use crate::error::{Error, Result};
use crate::field::{Dims, Grid};
use crate::wavepacket::WavepacketConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ImageDistanceMode {
    /// `q` from `1/p + 1/q = 1/f`.
    #[default]
    ThinLens,
    /// `q = image_distance_m` as given.
    Pinned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    /// Wire losses from the closed-form profiles; imaging metrics from the numeric pipeline.
    #[default]
    Analytic,
    /// Everything from the numeric pipeline.
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Samples per axis at the fringe plane.
    pub samples: usize,
    /// Nominal extent per axis at the fringe plane (m); the pitch is
    /// adjusted so that dark fringes fall on cell boundaries.
    pub extent_m: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            samples: 1024,
            extent_m: 0.0325,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossedBeamsConfig {
    /// 1/e² amplitude radius of each beam at the crossing plane Σ₁ (m).
    pub waist_m: f64,
    /// Full crossing angle (rad); default gives a fringe period equal to `u`.
    pub crossing_angle_rad: Option<f64>,
    /// Transverse separation of the two beam centres at Σ₁ (m).
    pub crossing_offset_m: f64,
    /// Σ₁ to Σ₂ distance (m).
    pub sigma2_distance_m: f64,
    pub samples: usize,
    pub extent_m: f64,
}

impl Default for CrossedBeamsConfig {
    fn default() -> Self {
        Self {
            waist_m: 1.5e-3,
            crossing_angle_rad: None,
            crossing_offset_m: 0.0,
            sigma2_distance_m: 40.0,
            samples: 8192,
            extent_m: 0.06,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SetupConfig {
    pub wavelength_m: f64,
    pub pinhole_separation_m: f64,
    pub pinhole_diameter_m: f64,
    pub pinhole_to_sigma1_m: f64,
    pub pinhole_to_lens_m: f64,
    pub focal_length_m: f64,
    pub lens_diameter_m: f64,
    pub image_distance_mode: ImageDistanceMode,
    /// Used when `image_distance_mode` is `pinned`.
    pub image_distance_m: f64,
    pub wire_thickness_m: f64,
    pub wire_count: usize,
    /// Rigid displacement of the whole wire grid (m).
    pub wire_offset_m: f64,
    /// Optional per-wire displacement (m), in ascending wire order.
    pub wire_offsets_m: Option<Vec<f64>>,
    pub airy_mode: AiryMode,
    pub fringe_spacing_override_m: Option<f64>,
    pub grid: GridConfig,
    pub dims: u8,
    /// Additive Gaussian measurement noise, σ as percent of Φ_C.
    pub noise_pct: f64,
    pub seed: u64,
    /// Gaussian illumination radius at the pinholes (m); uniform when absent.
    pub illumination_waist_m: Option<f64>,
    pub report_mode: ReportMode,
    pub crossed_beams: CrossedBeamsConfig,
    pub wavepacket: WavepacketConfig,
}

impl Default for SetupConfig {
    fn default() -> Self {
        Self {
            wavelength_m: 650e-9,
            pinhole_separation_m: 2.0e-3,
            pinhole_diameter_m: 250e-6,
            pinhole_to_sigma1_m: 4.0,
            pinhole_to_lens_m: 4.2,
            focal_length_m: 1.0,
            lens_diameter_m: 30e-3,
            image_distance_mode: ImageDistanceMode::ThinLens,
            image_distance_m: 1.38,
            wire_thickness_m: 127e-6,
            wire_count: 6,
            wire_offset_m: 0.0,
            wire_offsets_m: None,
            airy_mode: AiryMode::FirstZero,
            fringe_spacing_override_m: None,
            grid: GridConfig::default(),
            dims: 2,
            noise_pct: 0.0,
            seed: 42,
            illumination_waist_m: None,
            report_mode: ReportMode::Analytic,
            crossed_beams: CrossedBeamsConfig::default(),
            wavepacket: WavepacketConfig::default(),
        }
    }
}

fn cfg_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Reads a JSON object; absent keys take defaults, unknown keys are rejected.
pub fn load_config(path: &Path) -> Result<SetupConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<SetupConfig> {
    let cfg: SetupConfig = serde_json::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Everything the simulations need, resolved from a [`SetupConfig`].
#[derive(Clone, Debug)]
pub struct Geometry {
    pub dims: Dims,
    pub wavelength: f64,
    pub a: f64,
    pub b: f64,
    pub l: f64,
    pub p: f64,
    pub f: f64,
    pub d: f64,
    pub q: f64,
    /// `q` from the thin-lens equation, for reference.
    pub q_thin_lens: f64,
    pub u: f64,
    pub s: f64,
    pub wires: WireGrid,
    pub source_grid: Grid,
    pub sigma_grid: Grid,
    pub image_grid: Grid,
    pub illumination_waist: Option<f64>,
}

impl Geometry {
    pub fn magnification(&self) -> f64 {
        self.q / self.p
    }

    /// Centre-to-centre distance of the two pinhole images at σ₂.
    pub fn image_separation(&self) -> f64 {
        self.a * self.q / self.p
    }

    /// `1.22 λq/d`.
    pub fn rayleigh(&self) -> f64 {
        rayleigh_limit(self.wavelength, self.q, self.d)
    }

    pub fn fringe_model(&self) -> Result<FringeModel> {
        FringeModel::new(self.u, self.s, 1.0)
    }

    /// Pinhole centres, channel 1 first.
    pub fn pinhole_centers(&self) -> [f64; 2] {
        [-self.a / 2.0, self.a / 2.0]
    }
}

pub fn rayleigh_limit(wavelength: f64, q: f64, d: f64) -> f64 {
    1.22 * wavelength * q / d
}

fn odd_grid(half: f64, pitch: f64, dims: Dims) -> Result<Grid> {
    let n = 2 * (half / pitch).ceil() as usize + 1;
    Grid::centered(n.max(9), pitch, dims)
}

impl SetupConfig {
    pub fn dims(&self) -> Result<Dims> {
        Dims::from_count(self.dims).map_err(|_| cfg_err("dims", format!("must be 1 or 2, got {}", self.dims)))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry().map(|_| ()).map_err(|e| match e {
            Error::InvalidParameter { name, reason } => cfg_err(name, reason),
            other => other,
        })
    }

    pub fn geometry(&self) -> Result<Geometry> {
        let lengths = [
            ("wavelength_m", self.wavelength_m),
            ("pinhole_separation_m", self.pinhole_separation_m),
            ("pinhole_diameter_m", self.pinhole_diameter_m),
            ("pinhole_to_sigma1_m", self.pinhole_to_sigma1_m),
            ("pinhole_to_lens_m", self.pinhole_to_lens_m),
            ("focal_length_m", self.focal_length_m),
            ("lens_diameter_m", self.lens_diameter_m),
            ("image_distance_m", self.image_distance_m),
            ("wire_thickness_m", self.wire_thickness_m),
            ("grid.extent_m", self.grid.extent_m),
        ];
        for (name, v) in lengths {
            if !(v > 0.0) || !v.is_finite() {
                return Err(cfg_err(name, format!("must be a positive length, got {v}")));
            }
        }
        if let Some(w) = self.illumination_waist_m {
            if !(w > 0.0) {
                return Err(cfg_err("illumination_waist_m", "must be > 0"));
            }
        }
        if !(self.noise_pct >= 0.0) {
            return Err(cfg_err("noise_pct", "must be >= 0"));
        }
        let dims = self.dims()?;
        if self.wire_count % 2 != 0 {
            return Err(cfg_err("wire_count", format!("must be even, got {}", self.wire_count)));
        }
        if self.pinhole_diameter_m >= self.pinhole_separation_m {
            return Err(cfg_err("pinhole_diameter_m", "pinholes overlap"));
        }
        if self.pinhole_to_lens_m <= self.pinhole_to_sigma1_m {
            return Err(cfg_err("pinhole_to_lens_m", "lens must lie beyond the fringe plane"));
        }
        let (lam, a, b, l) = (
            self.wavelength_m,
            self.pinhole_separation_m,
            self.pinhole_diameter_m,
            self.pinhole_to_sigma1_m,
        );
        let u = match self.fringe_spacing_override_m {
            Some(u) if u > 0.0 => u,
            Some(u) => return Err(cfg_err("fringe_spacing_override_m", format!("must be > 0, got {u}"))),
            None => fringe_spacing(l, lam, a)?,
        };
        let e = self.wire_thickness_m;
        if e >= u {
            return Err(cfg_err("wire_thickness_m", format!("e < u violated (e = {e:e} m, u = {u:e} m)")));
        }
        let s = airy_radius(l, lam, b, self.airy_mode)?;
        let (p, f) = (self.pinhole_to_lens_m, self.focal_length_m);
        let q_thin_lens = if p > f { 1.0 / (1.0 / f - 1.0 / p) } else { f64::INFINITY };
        let q = match self.image_distance_mode {
            ImageDistanceMode::ThinLens if q_thin_lens.is_finite() => q_thin_lens,
            ImageDistanceMode::ThinLens => {
                return Err(cfg_err("focal_length_m", "object inside the focal length forms no real image"))
            }
            ImageDistanceMode::Pinned => self.image_distance_m,
        };

        let mut wires = WireGrid::at_dark_fringes(u, e, self.wire_count, self.wire_offset_m, lam)
            .map_err(|err| cfg_err("wire_thickness_m", err.to_string()))?;
        if let Some(offs) = &self.wire_offsets_m {
            if offs.len() != self.wire_count {
                return Err(cfg_err("wire_offsets_m", format!("expected {} entries, got {}", self.wire_count, offs.len())));
            }
            let centers = wires.centers().iter().zip(offs).map(|(c, o)| c + o).collect();
            wires = WireGrid::new(centers, e, lam).map_err(|err| cfg_err("wire_offsets_m", err.to_string()))?;
        }

        let n = self.grid.samples;
        if n < 16 {
            return Err(cfg_err("grid.samples", format!("need at least 16, got {n}")));
        }
        let pitch0 = self.grid.extent_m / n as f64;
        let cells = (u / (2.0 * pitch0)).round().max(1.0);
        let pitch = u / (2.0 * cells);
        let sigma_grid = Grid::centered(n, pitch, dims)?;
        if sigma_grid.last() < s * 1.05 {
            return Err(cfg_err(
                "grid.extent_m",
                format!("fringe-plane half extent {:e} m does not cover the aperture stop radius {s:e} m", sigma_grid.last()),
            ));
        }
        for &c in wires.centers() {
            if c.abs() + e / 2.0 > sigma_grid.last() {
                return Err(cfg_err("wire_count", "wires extend beyond the fringe-plane grid"));
            }
        }

        let src_pitch = b / 50.0;
        let source_grid = odd_grid(a / 2.0 + b / 2.0 + 4.0 * src_pitch, src_pitch, dims)?;
        let rayleigh = rayleigh_limit(lam, q, self.lens_diameter_m);
        let image_grid = odd_grid(a * q / p, rayleigh / 8.0, dims)?;

        Ok(Geometry {
            dims,
            wavelength: lam,
            a,
            b,
            l,
            p,
            f,
            d: self.lens_diameter_m,
            q,
            q_thin_lens,
            u,
            s,
            wires,
            source_grid,
            sigma_grid,
            image_grid,
            illumination_waist: self.illumination_waist_m,
        })
    }
}
