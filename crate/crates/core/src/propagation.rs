//! Scalar diffraction: band-limited angular spectrum, single-transform
//! Fresnel onto arbitrary output grids, masks, thin lens, and the
//! pinholes → σ₀ → σ₁ → lens → σ₂ pipeline.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::analytic::WireGrid;
use crate::config::{Geometry, SetupConfig};
use crate::error::{Error, Result};
use crate::field::{apodize, ComplexField, Dims, Grid, IrradianceProfile};

/// Fresnel numbers below this take the far-field branch of [`propagate_free`].
pub const FAR_FIELD_FRESNEL: f64 = 0.05;

/// Largest tolerated spectral power fraction in the outer tenth of the band.
const ALIAS_TOLERANCE: f64 = 1e-3;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub enum ElementKind {
    FreeSpace { distance: f64 },
    AmplitudeMask { grid: Grid, values: Vec<f64> },
    ThinLens { focal_length: f64, aperture_diameter: f64 },
}

#[derive(Clone, Debug)]
pub struct OpticalElement {
    pub kind: ElementKind,
    pub plane: String,
}

impl OpticalElement {
    pub fn free_space(distance: f64, plane: impl Into<String>) -> Result<Self> {
        if !(distance > 0.0) {
            return Err(Error::invalid("distance", format!("must be > 0, got {distance}")));
        }
        Ok(Self {
            kind: ElementKind::FreeSpace { distance },
            plane: plane.into(),
        })
    }

    pub fn mask(grid: Grid, values: Vec<f64>, plane: impl Into<String>) -> Result<Self> {
        if values.len() != grid.sample_count() {
            return Err(Error::GridMismatch("mask length does not match its grid".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("mask", "values must lie in [0, 1]"));
        }
        Ok(Self {
            kind: ElementKind::AmplitudeMask { grid, values },
            plane: plane.into(),
        })
    }

    pub fn thin_lens(focal_length: f64, aperture_diameter: f64, plane: impl Into<String>) -> Result<Self> {
        if focal_length == 0.0 || !focal_length.is_finite() {
            return Err(Error::invalid("focal length", "must be finite and non-zero"));
        }
        if !(aperture_diameter > 0.0) {
            return Err(Error::invalid("aperture diameter", "must be > 0"));
        }
        Ok(Self {
            kind: ElementKind::ThinLens {
                focal_length,
                aperture_diameter,
            },
            plane: plane.into(),
        })
    }
}

fn fft_plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

fn transpose(data: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; n * n];
    const B: usize = 32;
    for bi in (0..n).step_by(B) {
        for bj in (0..n).step_by(B) {
            for i in bi..(bi + B).min(n) {
                for j in bj..(bj + B).min(n) {
                    out[j * n + i] = data[i * n + j];
                }
            }
        }
    }
    out
}

/// Unnormalized forward or inverse FFT along every axis.
fn fft_nd(data: &mut Vec<Complex64>, n: usize, dims: Dims, inverse: bool) {
    let plan = fft_plan(n, inverse);
    plan.process(data);
    if dims == Dims::Two {
        let mut t = transpose(data, n);
        plan.process(&mut t);
        *data = transpose(&t, n);
    }
}

/// Signed DFT frequency of bin `k` for `n` samples at pitch `h`.
fn bin_frequency(k: usize, n: usize, h: f64) -> f64 {
    let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    k / (n as f64 * h)
}

/// Band limit for angular-spectrum transfer over `z` on a window of
/// `extent`: `1/(λ√((2z/extent)² + 1))`.
pub fn band_limit(wavelength: f64, distance: f64, extent: f64) -> f64 {
    1.0 / (wavelength * ((2.0 * distance / extent).powi(2) + 1.0).sqrt())
}

/// `a²/(λz)` with `a` the radius of the region holding the field's power
/// (samples above 1e-12 of the peak).
pub fn fresnel_number(field: &ComplexField, distance: f64) -> f64 {
    let g = field.grid();
    let irr = field.irradiance();
    let peak = irr.peak();
    if peak == 0.0 {
        return f64::INFINITY;
    }
    let n = g.len();
    let mut r2: f64 = 0.0;
    for (k, &v) in irr.values().iter().enumerate() {
        if v > 1e-12 * peak {
            let x = g.coord(k % n);
            let y = if g.dims() == Dims::Two { g.coord(k / n) } else { 0.0 };
            r2 = r2.max(x * x + y * y);
        }
    }
    let r = r2.sqrt() + 0.5 * g.spacing();
    r * r / (field.wavelength() * distance)
}

/// Fraction of spectral power with max(|fx|, |fy|) above 0.9 of Nyquist,
/// and the frequency below which all but 1e-6 of the power lies.
fn spectral_occupancy(spectrum: &[Complex64], grid: &Grid) -> (f64, f64) {
    let n = grid.len();
    let h = grid.spacing();
    let nyq = 0.5 / h;
    let bins = 256;
    let mut hist = vec![0.0; bins + 1];
    let mut total = 0.0;
    let fa: Vec<f64> = (0..n).map(|k| bin_frequency(k, n, h).abs()).collect();
    for (idx, v) in spectrum.iter().enumerate() {
        let f = match grid.dims() {
            Dims::One => fa[idx],
            Dims::Two => fa[idx % n].max(fa[idx / n]),
        };
        let p = v.norm_sqr();
        total += p;
        hist[((f / nyq) * bins as f64).min(bins as f64) as usize] += p;
    }
    if total == 0.0 {
        return (0.0, 0.0);
    }
    let top: f64 = hist[(bins * 9 / 10)..].iter().sum::<f64>() / total;
    let mut acc = 0.0;
    let mut f_sig = nyq;
    for (b, p) in hist.iter().enumerate() {
        acc += p;
        if acc >= total * (1.0 - 1e-6) {
            f_sig = (b + 1) as f64 / bins as f64 * nyq;
            break;
        }
    }
    (top, f_sig)
}

/// Band-limited angular-spectrum propagation on the field's own grid.
pub fn propagate_angular_spectrum(field: &ComplexField, distance: f64) -> Result<ComplexField> {
    let g = *field.grid();
    let n = g.len();
    let lam = field.wavelength();
    let mut data = field.values().to_vec();
    fft_nd(&mut data, n, g.dims(), false);
    let (top, f_sig) = spectral_occupancy(&data, &g);
    if top > ALIAS_TOLERANCE {
        return Err(Error::Undersampled {
            spacing: g.spacing(),
            required: 0.5 / f_sig.max(1.0 / (n as f64 * g.spacing())) * 0.9,
        });
    }
    let h = g.spacing();
    let limit = band_limit(lam, distance.abs(), n as f64 * h);
    let inv_lam = 1.0 / lam;
    let freqs: Vec<f64> = (0..n).map(|k| bin_frequency(k, n, h)).collect();
    // exp(i2πz(√(1/λ² − f²) − 1/λ)); the constant e^{ikz} is dropped
    let transfer = |f2: f64| -> Complex64 {
        let arg = inv_lam * inv_lam - f2;
        if arg <= 0.0 {
            return ZERO;
        }
        let kz = -f2 / (inv_lam + arg.sqrt());
        Complex64::from_polar(1.0, 2.0 * PI * distance * kz)
    };
    match g.dims() {
        Dims::One => {
            for (k, v) in data.iter_mut().enumerate() {
                let f = freqs[k];
                *v *= if f.abs() > limit { ZERO } else { transfer(f * f) };
            }
        }
        Dims::Two => {
            for (idx, v) in data.iter_mut().enumerate() {
                let (fx, fy) = (freqs[idx % n], freqs[idx / n]);
                *v *= if fx.abs() > limit || fy.abs() > limit {
                    ZERO
                } else {
                    transfer(fx * fx + fy * fy)
                };
            }
        }
    }
    fft_nd(&mut data, n, g.dims(), true);
    let norm = 1.0 / g.sample_count() as f64;
    data.iter_mut().for_each(|v| *v *= norm);
    Ok(ComplexField::from_parts_unchecked(g, lam, data))
}

/// `exp(−i2π·x_out·x_in/(λz))` as an `out.len() × in.len()` row-major matrix.
fn fresnel_kernel(x_out: &[f64], x_in: &[f64], lz: f64) -> Vec<Complex64> {
    let mut k = Vec::with_capacity(x_out.len() * x_in.len());
    for &xo in x_out {
        let c = -2.0 * PI * xo / lz;
        k.extend(x_in.iter().map(|&xi| Complex64::from_polar(1.0, c * xi)));
    }
    k
}

/// Single-transform Fresnel integral from the field's grid onto `out`:
/// `U(x) = (iλz)^(-d/2) e^{iπ|x|²/(λz)} ∫ U₀(x') e^{iπ|x'|²/(λz)} e^{−i2πx·x'/(λz)} dx'`,
/// evaluated as a separable matrix DFT (exact for any output pitch).
pub fn fresnel_to_grid(field: &ComplexField, distance: f64, out: Grid) -> Result<ComplexField> {
    let g = *field.grid();
    if out.dims() != g.dims() {
        return Err(Error::GridMismatch("output grid dimensionality differs".into()));
    }
    if distance == 0.0 || !distance.is_finite() {
        return Err(Error::invalid("distance", "must be finite and non-zero"));
    }
    let lam = field.wavelength();
    let lz = lam * distance;
    let xin = g.coords();
    let xout = out.coords();
    let chirp = |x: f64| Complex64::from_polar(1.0, PI * x * x / lz);
    let cin: Vec<Complex64> = xin.iter().map(|&x| chirp(x)).collect();
    let cout: Vec<Complex64> = xout.iter().map(|&x| chirp(x)).collect();
    let kx = fresnel_kernel(&xout, &xin, lz);
    let (ni, no) = (g.len(), out.len());
    let h = g.spacing();
    let values = match g.dims() {
        Dims::One => {
            let src: Vec<Complex64> = field.values().iter().zip(&cin).map(|(v, c)| v * c).collect();
            let pre = (Complex64::new(0.0, lz)).sqrt().inv() * h;
            (0..no)
                .map(|j| {
                    let row = &kx[j * ni..(j + 1) * ni];
                    let s: Complex64 = row.iter().zip(&src).map(|(k, v)| k * v).sum();
                    s * pre * cout[j]
                })
                .collect()
        }
        Dims::Two => {
            // contract x for each non-empty input row
            let mut t: Vec<Option<Vec<Complex64>>> = Vec::with_capacity(ni);
            let mut src_row = vec![ZERO; ni];
            for iy in 0..ni {
                let row = &field.values()[iy * ni..(iy + 1) * ni];
                if row.iter().all(|v| v.re == 0.0 && v.im == 0.0) {
                    t.push(None);
                    continue;
                }
                for (s, (v, c)) in src_row.iter_mut().zip(row.iter().zip(&cin)) {
                    *s = v * c * cin[iy];
                }
                let tr: Vec<Complex64> = (0..no)
                    .map(|jx| kx[jx * ni..(jx + 1) * ni].iter().zip(&src_row).map(|(k, v)| k * v).sum())
                    .collect();
                t.push(Some(tr));
            }
            let pre = Complex64::new(0.0, lz).inv() * (h * h);
            let mut out_vals = vec![ZERO; no * no];
            for jy in 0..no {
                let dst = &mut out_vals[jy * no..(jy + 1) * no];
                let krow = &kx[jy * ni..(jy + 1) * ni];
                for (iy, tr) in t.iter().enumerate() {
                    if let Some(tr) = tr {
                        let w = krow[iy];
                        for (d, s) in dst.iter_mut().zip(tr) {
                            *d += w * s;
                        }
                    }
                }
                for (jx, d) in dst.iter_mut().enumerate() {
                    *d *= pre * cout[jx] * cout[jy];
                }
            }
            out_vals
        }
    };
    Ok(ComplexField::from_parts_unchecked(out, lam, values))
}

/// Free-space propagation by `distance`. Uses the band-limited angular
/// spectrum on the input grid, or, when the Fresnel number is below
/// [`FAR_FIELD_FRESNEL`], a single-transform step onto a rescaled grid of
/// the same size with pitch `λz/(NΔ)`.
pub fn propagate_free(field: &ComplexField, distance: f64) -> Result<ComplexField> {
    if distance.is_nan() {
        return Err(Error::NanInput("propagate_free"));
    }
    if distance == 0.0 {
        return Ok(field.clone());
    }
    if distance > 0.0 && fresnel_number(field, distance) < FAR_FIELD_FRESNEL {
        let g = field.grid();
        let pitch = field.wavelength() * distance / (g.len() as f64 * g.spacing());
        let out = Grid::centered(g.len(), pitch, g.dims())?;
        return fresnel_to_grid(field, distance, out);
    }
    propagate_angular_spectrum(field, distance)
}

/// Maps `mask` onto `target` when the pitches agree and the origins differ
/// by whole cells; errors otherwise or when the mask does not cover the target.
fn resample_mask(grid: &Grid, values: &[f64], target: &Grid) -> Result<Vec<f64>> {
    if grid.matches(target) {
        return Ok(values.to_vec());
    }
    let h = target.spacing();
    let compatible = grid.dims() == target.dims()
        && ((grid.spacing() - h).abs() <= 1e-9 * h)
        && {
            let shift = (target.origin() - grid.origin()) / h;
            (shift - shift.round()).abs() < 1e-6
        };
    if !compatible {
        return Err(Error::GridMismatch("mask grid is not pitch-compatible with the field".into()));
    }
    let shift = ((target.origin() - grid.origin()) / h).round() as i64;
    let (nm, nt) = (grid.len() as i64, target.len());
    let idx = |i: usize| -> Result<usize> {
        let j = i as i64 + shift;
        if j < 0 || j >= nm {
            Err(Error::GridMismatch("mask does not cover the field grid".into()))
        } else {
            Ok(j as usize)
        }
    };
    match target.dims() {
        Dims::One => (0..nt).map(|i| Ok(values[idx(i)?])).collect(),
        Dims::Two => {
            let mut out = Vec::with_capacity(nt * nt);
            for iy in 0..nt {
                let my = idx(iy)?;
                for ix in 0..nt {
                    out.push(values[my * grid.len() + idx(ix)?]);
                }
            }
            Ok(out)
        }
    }
}

pub fn apply_element(field: &ComplexField, element: &OpticalElement) -> Result<ComplexField> {
    match &element.kind {
        ElementKind::FreeSpace { distance } => propagate_free(field, *distance),
        ElementKind::AmplitudeMask { grid, values } => {
            let m = resample_mask(grid, values, field.grid())?;
            field.masked(&m)
        }
        ElementKind::ThinLens {
            focal_length,
            aperture_diameter,
        } => {
            let r_max2 = 0.25 * aperture_diameter * aperture_diameter;
            let c = -PI / (field.wavelength() * focal_length);
            let g = *field.grid();
            let n = g.len();
            let xs = g.coords();
            let values = field
                .values()
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    let x = xs[k % n];
                    let y = if g.dims() == Dims::Two { xs[k / n] } else { 0.0 };
                    let r2 = x * x + y * y;
                    if r2 > r_max2 {
                        ZERO
                    } else {
                        v * Complex64::from_polar(1.0, c * r2)
                    }
                })
                .collect();
            Ok(ComplexField::from_parts_unchecked(g, field.wavelength(), values))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pinhole {
    One,
    Two,
}

impl Pinhole {
    pub fn index(self) -> usize {
        match self {
            Pinhole::One => 0,
            Pinhole::Two => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Pinhole::One => Pinhole::Two,
            Pinhole::Two => Pinhole::One,
        }
    }

    /// Sign of the image-plane half space this pinhole images into
    /// (the image is inverted: pinhole 1 at −a/2 lands at x > 0).
    pub fn image_side(self) -> f64 {
        match self {
            Pinhole::One => 1.0,
            Pinhole::Two => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Both,
    Only(Pinhole),
}

#[derive(Clone, Debug)]
pub struct Mask {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Mask {
    fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> bool) -> Self {
        let xs = grid.coords();
        let values = match grid.dims() {
            Dims::One => xs.iter().map(|&x| f(x, 0.0) as u8 as f64).collect(),
            Dims::Two => {
                let mut v = Vec::with_capacity(grid.sample_count());
                for &y in &xs {
                    for &x in &xs {
                        v.push(f(x, y) as u8 as f64);
                    }
                }
                v
            }
        };
        Self { grid, values }
    }

    pub fn complement(&self) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    pub fn element(&self, plane: &str) -> Result<OpticalElement> {
        OpticalElement::mask(self.grid, self.values.clone(), plane)
    }
}

#[derive(Clone, Debug)]
pub struct Masks {
    pub dual_pinhole: Mask,
    pub pinholes: [Mask; 2],
    pub aperture_stop: Mask,
    pub wire_grid: Mask,
}

impl Masks {
    pub fn single_pinhole(&self, which: Pinhole) -> &Mask {
        &self.pinholes[which.index()]
    }

    pub fn source(&self, source: Source) -> &Mask {
        match source {
            Source::Both => &self.dual_pinhole,
            Source::Only(p) => self.single_pinhole(p),
        }
    }
}

fn pinhole_test(center: f64, radius: f64, dims: Dims) -> impl Fn(f64, f64) -> bool {
    // keeps rim samples that rounding would otherwise drop
    let radius = radius * (1.0 + 1e-9);
    move |x, y| match dims {
        Dims::One => (x - center).abs() <= radius,
        Dims::Two => (x - center).powi(2) + y * y <= radius * radius,
    }
}

/// Binary wire mask: zero on cells whose centre lies within `e/2` of a wire.
pub fn wire_mask(grid: Grid, wires: &WireGrid) -> Mask {
    let h = wires.thickness() / 2.0;
    let centers = wires.centers().to_vec();
    Mask::from_fn(grid, move |x, _| !centers.iter().any(|c| (x - c).abs() <= h))
}

pub fn make_masks(config: &SetupConfig) -> Result<Masks> {
    masks_for(&config.geometry()?)
}

pub fn masks_for(geo: &Geometry) -> Result<Masks> {
    let sg = geo.source_grid;
    let r = geo.b / 2.0;
    let [c1, c2] = geo.pinhole_centers();
    let p1 = pinhole_test(c1, r, geo.dims);
    let p2 = pinhole_test(c2, r, geo.dims);
    let s = geo.s;
    let dims = geo.dims;
    Ok(Masks {
        dual_pinhole: Mask::from_fn(sg, |x, y| p1(x, y) || p2(x, y)),
        pinholes: [Mask::from_fn(sg, &p1), Mask::from_fn(sg, &p2)],
        aperture_stop: Mask::from_fn(geo.sigma_grid, move |x, y| match dims {
            Dims::One => x.abs() <= s,
            Dims::Two => x * x + y * y <= s * s,
        }),
        wire_grid: wire_mask(geo.sigma_grid, &geo.wires),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    NoLens,
    LensOnly,
    Control,
    DecoherentSim,
    CoherentWg,
    CrossedBeams,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::NoLens,
        Variant::LensOnly,
        Variant::Control,
        Variant::DecoherentSim,
        Variant::CoherentWg,
        Variant::CrossedBeams,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NoLens => "no_lens",
            Variant::LensOnly => "lens_only",
            Variant::Control => "control",
            Variant::DecoherentSim => "decoherent_sim",
            Variant::CoherentWg => "coherent_wg",
            Variant::CrossedBeams => "crossed_beams",
        }
    }

    fn source(self) -> Source {
        match self {
            Variant::DecoherentSim => Source::Only(Pinhole::Two),
            _ => Source::Both,
        }
    }

    fn has_wires(self) -> bool {
        matches!(self, Variant::DecoherentSim | Variant::CoherentWg | Variant::CrossedBeams)
    }

    fn has_lens(self) -> bool {
        !matches!(self, Variant::NoLens | Variant::CrossedBeams)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid("variant", format!("unknown variant '{s}'")))
    }
}

/// Fluxes recorded along the pipeline (a.u.).
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PlaneFluxes {
    pub source: f64,
    pub sigma0: f64,
    pub blocked: f64,
    pub sigma1: f64,
    pub lens_entrance: Option<f64>,
    pub lens_exit: Option<f64>,
    pub sigma2: Option<f64>,
}

impl PlaneFluxes {
    pub fn as_map(&self) -> BTreeMap<&'static str, f64> {
        let mut m = BTreeMap::new();
        m.insert("source", self.source);
        m.insert("sigma0", self.sigma0);
        m.insert("wg_blocked", self.blocked);
        m.insert("sigma1", self.sigma1);
        for (k, v) in [("lens_entrance", self.lens_entrance), ("lens_exit", self.lens_exit), ("sigma2", self.sigma2)] {
            if let Some(v) = v {
                m.insert(k, v);
            }
        }
        m
    }
}

/// Fields at the fixed plane sequence σ₀ → σ₁ → lens → σ₂.
#[derive(Clone, Debug)]
pub struct PlaneSet {
    pub variant: Variant,
    pub sigma0: ComplexField,
    pub sigma1: ComplexField,
    /// Field just after the lens (phase and aperture applied).
    pub lens: Option<ComplexField>,
    pub sigma2: Option<ComplexField>,
    pub fluxes: PlaneFluxes,
}

impl PlaneSet {
    pub fn profiles(&self) -> Vec<(&'static str, IrradianceProfile)> {
        let mut v = vec![("sigma0", self.sigma0.irradiance()), ("sigma1", self.sigma1.irradiance())];
        if let Some(l) = &self.lens {
            v.push(("lens", l.irradiance()));
        }
        if let Some(s) = &self.sigma2 {
            v.push(("sigma2", s.irradiance()));
        }
        v
    }
}

/// Pipeline stages bound to one resolved geometry.
pub struct Engine {
    pub geo: Geometry,
    pub masks: Masks,
}

impl Engine {
    pub fn new(config: &SetupConfig) -> Result<Self> {
        let geo = config.geometry()?;
        let masks = masks_for(&geo)?;
        Ok(Self { geo, masks })
    }

    pub fn source_field(&self, source: Source) -> Result<ComplexField> {
        let mask = self.masks.source(source);
        let lam = self.geo.wavelength;
        let base = match self.geo.illumination_waist {
            None => ComplexField::from_fn(mask.grid, lam, |_, _| Complex64::new(1.0, 0.0))?,
            Some(w) => ComplexField::from_fn(mask.grid, lam, |x, y| Complex64::new((-(x * x + y * y) / (w * w)).exp(), 0.0))?,
        };
        base.masked(&mask.values)
    }

    /// Field at the fringe plane before the aperture stop.
    pub fn fringe_plane_raw(&self, source: Source) -> Result<ComplexField> {
        fresnel_to_grid(&self.source_field(source)?, self.geo.l, self.geo.sigma_grid)
    }

    /// σ₀: fringe-plane field after the aperture stop.
    pub fn sigma0(&self, source: Source) -> Result<ComplexField> {
        apodize(&self.fringe_plane_raw(source)?, self.geo.s)
    }

    pub fn apply_wires(&self, sigma0: &ComplexField) -> Result<(ComplexField, f64)> {
        let sigma1 = sigma0.masked(&self.masks.wire_grid.values)?;
        let blocked = sigma0.masked(&self.masks.wire_grid.complement().values)?.total_flux();
        Ok((sigma1, blocked))
    }

    /// σ₁ → lens → σ₂; returns the field after the lens and at σ₂.
    pub fn downstream(&self, sigma1: &ComplexField) -> Result<(ComplexField, ComplexField, f64)> {
        let g = &self.geo;
        let entrance = propagate_free(sigma1, g.p - g.l)?;
        let lens = OpticalElement::thin_lens(g.f, g.d, "lens")?;
        let exit = apply_element(&entrance, &lens)?;
        let image = fresnel_to_grid(&exit, g.q, g.image_grid)?;
        Ok((exit, image, entrance.total_flux()))
    }

    /// Assembles a plane set from a σ₀ field.
    pub fn from_sigma0(&self, variant: Variant, source_flux: f64, sigma0: ComplexField) -> Result<PlaneSet> {
        let (sigma1, blocked) = if variant.has_wires() {
            self.apply_wires(&sigma0)?
        } else {
            (sigma0.clone(), 0.0)
        };
        let mut fluxes = PlaneFluxes {
            source: source_flux,
            sigma0: sigma0.total_flux(),
            blocked,
            sigma1: sigma1.total_flux(),
            ..Default::default()
        };
        let (lens, sigma2) = if variant.has_lens() {
            let (exit, image, entrance) = self.downstream(&sigma1)?;
            fluxes.lens_entrance = Some(entrance);
            fluxes.lens_exit = Some(exit.total_flux());
            fluxes.sigma2 = Some(image.total_flux());
            (Some(exit), Some(image))
        } else {
            (None, None)
        };
        Ok(PlaneSet {
            variant,
            sigma0,
            sigma1,
            lens,
            sigma2,
            fluxes,
        })
    }

    pub fn run(&self, variant: Variant, source: Source) -> Result<PlaneSet> {
        let src = self.source_field(source)?;
        let sigma0 = apodize(&fresnel_to_grid(&src, self.geo.l, self.geo.sigma_grid)?, self.geo.s)?;
        self.from_sigma0(variant, src.total_flux(), sigma0)
    }
}

pub fn run_pipeline(config: &SetupConfig, variant: Variant) -> Result<PlaneSet> {
    if variant == Variant::CrossedBeams {
        return crossed_beams(config, WirePlacement::Minima);
    }
    Engine::new(config)?.run(variant, variant.source())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WirePlacement {
    None,
    Minima,
    Maxima,
}

/// Resolved crossed-beam geometry (1D, x only).
#[derive(Clone, Debug)]
pub struct CrossedBeamsGeometry {
    pub grid: Grid,
    pub angle: f64,
    pub period: f64,
    pub waist: f64,
    pub offset: f64,
    pub distance: f64,
    pub wavelength: f64,
    pub wires: WireGrid,
}

impl CrossedBeamsGeometry {
    pub fn new(config: &SetupConfig) -> Result<Self> {
        let geo = config.geometry()?;
        let cb = &config.crossed_beams;
        let lam = geo.wavelength;
        let angle = cb.crossing_angle_rad.unwrap_or(lam / geo.u);
        if !(angle > 0.0) || !(cb.waist_m > 0.0) || !(cb.sigma2_distance_m > 0.0) {
            return Err(Error::invalid("crossed_beams", "angle, waist and distance must be > 0"));
        }
        if cb.crossing_offset_m.abs() > 2.0 * cb.waist_m {
            return Err(Error::Degenerate("beams do not overlap at the crossing plane"));
        }
        let period = lam / angle;
        let pitch0 = cb.extent_m / cb.samples as f64;
        let cells = (period / (2.0 * pitch0)).round().max(1.0);
        let grid = Grid::centered(cb.samples, period / (2.0 * cells), Dims::One)?;
        let wires = WireGrid::at_dark_fringes(period, config.wire_thickness_m, config.wire_count, config.wire_offset_m, lam)?;
        Ok(Self {
            grid,
            angle,
            period,
            waist: cb.waist_m,
            offset: cb.crossing_offset_m,
            distance: cb.sigma2_distance_m,
            wavelength: lam,
            wires,
        })
    }

    /// Beam `sign` (±1): Gaussian centred at `sign·offset/2`, tilted by `sign·angle/2`.
    pub fn beam(&self, sign: f64) -> Result<ComplexField> {
        let k = 2.0 * PI / self.wavelength;
        let (c, w, th) = (sign * self.offset / 2.0, self.waist, sign * self.angle / 2.0);
        ComplexField::from_fn(self.grid, self.wavelength, |x, _| {
            let env = (-((x - c) / w).powi(2)).exp();
            Complex64::from_polar(env, k * th * x)
        })
    }

    /// Ray-optics beam centres at Σ₂.
    pub fn ray_centers(&self) -> [f64; 2] {
        let spread = self.angle / 2.0 * self.distance;
        [-self.offset / 2.0 - spread, self.offset / 2.0 + spread]
    }
}

/// Two tilted Gaussian beams crossing at Σ₁ (no lens), optional wires at
/// Σ₁, free propagation to Σ₂.
pub fn crossed_beams(config: &SetupConfig, placement: WirePlacement) -> Result<PlaneSet> {
    let cb = CrossedBeamsGeometry::new(config)?;
    crossed_beams_with(&cb, placement)
}

pub fn crossed_beams_with(cb: &CrossedBeamsGeometry, placement: WirePlacement) -> Result<PlaneSet> {
    let sigma0 = cb.beam(-1.0)?.add(&cb.beam(1.0)?)?;
    let wires = match placement {
        WirePlacement::None => None,
        WirePlacement::Minima => Some(cb.wires.clone()),
        WirePlacement::Maxima => Some(cb.wires.shifted(cb.period / 2.0)),
    };
    let (sigma1, blocked) = match &wires {
        None => (sigma0.clone(), 0.0),
        Some(w) => {
            let m = wire_mask(cb.grid, w);
            (sigma0.masked(&m.values)?, sigma0.masked(&m.complement().values)?.total_flux())
        }
    };
    let sigma2 = propagate_free(&sigma1, cb.distance)?;
    let fluxes = PlaneFluxes {
        source: sigma0.total_flux(),
        sigma0: sigma0.total_flux(),
        blocked,
        sigma1: sigma1.total_flux(),
        lens_entrance: None,
        lens_exit: None,
        sigma2: Some(sigma2.total_flux()),
    };
    Ok(PlaneSet {
        variant: Variant::CrossedBeams,
        sigma0,
        sigma1,
        lens: None,
        sigma2: Some(sigma2),
        fluxes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Resolution {
    pub fwhm: f64,
    pub rayleigh: f64,
}

/// Full width at half maximum of the brightest peak along x (through the
/// peak row in 2D), with linearly interpolated half-maximum crossings.
pub fn fwhm(image: &IrradianceProfile) -> Result<f64> {
    let g = image.grid();
    let vals = image.values();
    let (imax, &peak) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::NoFlux("empty image"))?;
    let floor = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if !(peak > 0.0) || peak == floor {
        return Err(Error::NoFlux("flat image has no peak"));
    }
    let n = g.len();
    let (row, ix) = match g.dims() {
        Dims::One => (vals, imax),
        Dims::Two => (&vals[(imax / n) * n..(imax / n + 1) * n], imax % n),
    };
    let half = 0.5 * peak;
    let mut right = g.coord(n - 1);
    for i in ix..n - 1 {
        if row[i + 1] < half {
            right = g.coord(i) + g.spacing() * (row[i] - half) / (row[i] - row[i + 1]);
            break;
        }
    }
    let mut left = g.coord(0);
    for i in (1..=ix).rev() {
        if row[i - 1] < half {
            left = g.coord(i) - g.spacing() * (row[i] - half) / (row[i] - row[i - 1]);
            break;
        }
    }
    Ok(right - left)
}

pub fn resolution_estimate(image: &IrradianceProfile, rayleigh: f64) -> Result<Resolution> {
    Ok(Resolution {
        fwhm: fwhm(image)?,
        rayleigh,
    })
}

/// Fraction of the flux that lands beyond `boundary`, on the side opposite
/// to `own_side` (+1: own region is x > boundary, −1: x < boundary).
pub fn crosstalk(image: &IrradianceProfile, boundary: f64, own_side: f64) -> Result<f64> {
    let g = image.grid();
    let (lo, hi) = (g.origin(), g.last());
    if !(boundary >= lo && boundary <= hi) {
        return Err(Error::invalid("crosstalk boundary", format!("{boundary:e} m lies outside [{lo:e}, {hi:e}]")));
    }
    let total = image.total_flux();
    if total == 0.0 {
        return Err(Error::NoFlux("crosstalk of a dark image"));
    }
    let other = if own_side > 0.0 {
        if boundary > lo { image.flux(lo, boundary)? } else { 0.0 }
    } else if boundary < hi {
        image.flux(boundary, hi)?
    } else {
        0.0
    };
    Ok(other / total)
}

/// Local minima of a 1D profile with parabolic refinement, restricted to `[lo, hi]`.
pub fn local_minima(profile: &IrradianceProfile, lo: f64, hi: f64) -> Vec<f64> {
    let g = profile.grid();
    let v = profile.values();
    let mut out = Vec::new();
    for i in 1..v.len() - 1 {
        let x = g.coord(i);
        if x < lo || x > hi {
            continue;
        }
        if v[i] <= v[i - 1] && v[i] < v[i + 1] {
            let den = v[i - 1] - 2.0 * v[i] + v[i + 1];
            let t = if den > 0.0 { 0.5 * (v[i - 1] - v[i + 1]) / den } else { 0.0 };
            out.push(x + t.clamp(-0.5, 0.5) * g.spacing());
        }
    }
    out
}

/// Flux-weighted centroid of a 1D profile over `[lo, hi]`.
pub fn centroid(profile: &IrradianceProfile, lo: f64, hi: f64) -> Result<f64> {
    let g = profile.grid();
    let xs = g.coords();
    let (mut m0, mut m1) = (0.0, 0.0);
    for (x, v) in xs.iter().zip(profile.values()) {
        if *x >= lo && *x <= hi {
            m0 += v;
            m1 += v * x;
        }
    }
    if m0 == 0.0 {
        return Err(Error::NoFlux("centroid of a dark region"));
    }
    Ok(m1 / m0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{airy_radius, AiryMode, J1_FIRST_ZERO};
    use proptest::prelude::*;

    fn gaussian(grid: Grid, lam: f64, w0: f64) -> ComplexField {
        ComplexField::from_fn(grid, lam, |x, y| Complex64::new((-(x * x + y * y) / (w0 * w0)).exp(), 0.0)).unwrap()
    }

    fn rms_width(f: &ComplexField) -> f64 {
        let p = f.irradiance();
        let g = p.grid();
        let xs = g.coords();
        let n = g.len();
        let (mut m0, mut m2) = (0.0, 0.0);
        for (k, v) in p.values().iter().enumerate() {
            let x = xs[k % n];
            m0 += v;
            m2 += v * x * x;
        }
        (m2 / m0).sqrt()
    }

    #[test]
    fn zero_distance_is_identity() {
        let g = Grid::centered(128, 1e-5, Dims::One).unwrap();
        let f = gaussian(g, 633e-9, 2e-4);
        let same = propagate_free(&f, 0.0).unwrap();
        assert_eq!(same.values(), f.values());
        let tiny = propagate_angular_spectrum(&f, 1e-15).unwrap();
        for (a, b) in tiny.values().iter().zip(f.values()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn gaussian_beam_width_follows_closed_form() {
        let lam = 633e-9;
        let w0 = 2e-4;
        let zr = PI * w0 * w0 / lam;
        for dims in [Dims::One, Dims::Two] {
            let n = if dims == Dims::One { 4096 } else { 512 };
            let g = Grid::centered(n, 8e-6, dims).unwrap();
            let f = gaussian(g, lam, w0);
            let w_num0 = rms_width(&f);
            for frac in [0.5, 1.0, 2.0] {
                let z = frac * zr;
                let out = propagate_angular_spectrum(&f, z).unwrap();
                let expect = w_num0 * (1.0 + (z / zr).powi(2)).sqrt();
                let got = rms_width(&out);
                assert!((got / expect - 1.0).abs() < 0.005, "{dims:?} z={z}: {got} vs {expect}");
                assert!((out.total_flux() / f.total_flux() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn undersampled_field_is_rejected() {
        let g = Grid::centered(256, 1e-5, Dims::One).unwrap();
        let f = ComplexField::from_fn(g, 633e-9, |x, _| Complex64::from_polar(1.0, PI * x / 1e-5 * 0.97)).unwrap();
        match propagate_free(&f, 0.1) {
            Err(Error::Undersampled { spacing, required }) => {
                assert_eq!(spacing, 1e-5);
                assert!(required < spacing);
            }
            other => panic!("expected sampling error, got {other:?}"),
        }
    }

    #[test]
    fn circular_pinhole_first_zero() {
        let lam = 650e-9;
        let b = 250e-6;
        let l = 4.0;
        let src = Grid::centered(101, b / 50.0, Dims::Two).unwrap();
        let f = ComplexField::from_fn(src, lam, |x, y| {
            if x * x + y * y <= b * b / 4.0 { Complex64::new(1.0, 0.0) } else { ZERO }
        })
        .unwrap();
        assert!(fresnel_number(&f, l) < FAR_FIELD_FRESNEL);
        let coarse = propagate_free(&f, l).unwrap();
        assert!((coarse.grid().spacing() - lam * l / (101.0 * b / 50.0)).abs() < 1e-12);
        let far = fresnel_to_grid(&f, l, Grid::centered(201, 2e-4, Dims::Two).unwrap()).unwrap();
        let cut = far.irradiance().x_cut(0.0);
        let g = cut.grid();
        let centre = g.nearest_index(0.0);
        let mut zero = None;
        for i in centre + 1..g.len() - 1 {
            let v = cut.values();
            if v[i] <= v[i - 1] && v[i] < v[i + 1] {
                zero = Some(g.coord(i));
                break;
            }
        }
        let expect = airy_radius(l, lam, b, AiryMode::FirstZero).unwrap();
        let zero = zero.unwrap();
        assert!((zero / expect - 1.0).abs() < 0.02, "{zero} vs {expect}");
        assert!((expect / (1.22 * l * lam / b) - J1_FIRST_ZERO / (1.22 * PI)).abs() < 1e-12);
    }

    #[test]
    fn masks_and_lens_elements() {
        let g = Grid::centered(200, 1e-5, Dims::One).unwrap();
        let f = ComplexField::from_fn(g, 633e-9, |_, _| Complex64::new(2.0, 0.0)).unwrap();
        let ones = OpticalElement::mask(g, vec![1.0; 200], "ones").unwrap();
        assert_eq!(apply_element(&f, &ones).unwrap().values(), f.values());

        let wires = WireGrid::new(vec![-3e-4, 2e-4], 4e-5, 633e-9).unwrap();
        let m = wire_mask(g, &wires);
        let covered = m.values.iter().filter(|v| **v == 0.0).count() as f64;
        let after = f.masked(&m.values).unwrap();
        let sum_before: f64 = f.irradiance().values().iter().sum();
        let sum_after: f64 = after.irradiance().values().iter().sum();
        assert!((1.0 - sum_after / sum_before - covered / 200.0).abs() < 1e-14);

        let shifted = Grid::new(g.origin() - 5e-5, 1e-5, 220, Dims::One).unwrap();
        let wide = OpticalElement::mask(shifted, vec![0.5; 220], "wide").unwrap();
        let half = apply_element(&f, &wide).unwrap();
        assert!(half.values().iter().all(|v| *v == Complex64::new(1.0, 0.0)));
        let off = Grid::new(g.origin() + 3e-6, 1e-5, 220, Dims::One).unwrap();
        let bad = OpticalElement::mask(off, vec![1.0; 220], "bad").unwrap();
        assert!(matches!(apply_element(&f, &bad), Err(Error::GridMismatch(_))));
        assert!(OpticalElement::mask(g, vec![1.5; 200], "x").is_err());
        assert!(OpticalElement::thin_lens(0.0, 1e-2, "l").is_err());
        assert!(OpticalElement::free_space(-1.0, "z").is_err());
    }

    #[test]
    fn lens_focal_spot() {
        let lam = 633e-9;
        let (f, d) = (0.5, 4e-3);
        let g = Grid::centered(512, 10e-6, Dims::Two).unwrap();
        let plane = ComplexField::from_fn(g, lam, |_, _| Complex64::new(1.0, 0.0)).unwrap();
        let lens = OpticalElement::thin_lens(f, d, "lens").unwrap();
        let after = apply_element(&plane, &lens).unwrap();
        let spot_grid = Grid::centered(201, lam * f / d / 20.0, Dims::Two).unwrap();
        let spot = fresnel_to_grid(&after, f, spot_grid).unwrap();
        let w = fwhm(&spot.irradiance()).unwrap();
        let expect = 1.03 * lam * f / d;
        assert!((w / expect - 1.0).abs() < 0.10, "{w} vs {expect}");
    }

    #[test]
    fn resolution_and_crosstalk_basics() {
        let g = Grid::centered(64, 1e-6, Dims::One).unwrap();
        let mut v = vec![0.0; 64];
        v[40] = 1.0;
        let p = IrradianceProfile::new(g, v).unwrap();
        let r = resolution_estimate(&p, 3e-5).unwrap();
        assert!(r.fwhm <= 2.0 * g.spacing());
        assert!(fwhm(&IrradianceProfile::new(g, vec![1.0; 64]).unwrap()).is_err());
        assert_eq!(crosstalk(&p, g.origin(), 1.0).unwrap(), 0.0);
        assert_eq!(crosstalk(&p, g.last(), -1.0).unwrap(), 0.0);
        assert!(crosstalk(&p, 1.0, 1.0).is_err());
    }

    #[test]
    fn rayleigh_scales_inversely_with_aperture() {
        let a = crate::config::rayleigh_limit(650e-9, 1.38, 30e-3);
        let b = crate::config::rayleigh_limit(650e-9, 1.38, 60e-3);
        assert!((a - 36.5e-6).abs() < 0.1e-6);
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn default_masks() {
        let c = SetupConfig { dims: 1, ..Default::default() };
        let m = make_masks(&c).unwrap();
        let g = m.wire_grid.grid;
        let open: Vec<f64> = m.pinholes[0]
            .values
            .iter()
            .zip(m.pinholes[0].grid.coords())
            .filter(|(v, _)| **v == 1.0)
            .map(|(_, x)| x)
            .collect();
        let mid = 0.5 * (open[0] + open[open.len() - 1]);
        assert!((mid + 1e-3).abs() < 1e-9);
        assert!(m.pinholes[1].values.iter().zip(&m.pinholes[0].values).all(|(a, b)| a * b == 0.0));
        assert!(g.len() == 1024);
        let none = SetupConfig { dims: 1, wire_count: 0, ..Default::default() };
        assert!(make_masks(&none).unwrap().wire_grid.values.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("bogus".parse::<Variant>().is_err());
    }

    fn arb_field(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
            .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn binary_mask_energy_split(vals in arb_field(64), bits in proptest::collection::vec(any::<bool>(), 64)) {
            let g = Grid::centered(64, 1e-5, Dims::One).unwrap();
            let f = ComplexField::new(g, 633e-9, vals).unwrap();
            let m: Vec<f64> = bits.iter().map(|b| *b as u8 as f64).collect();
            let c: Vec<f64> = m.iter().map(|v| 1.0 - v).collect();
            let total = f.total_flux();
            let split = f.masked(&m).unwrap().total_flux() + f.masked(&c).unwrap().total_flux();
            prop_assert!((split - total).abs() <= 1e-10 * total.max(1e-300));
        }

        #[test]
        fn free_propagation_is_unitary(w in 0.05f64..0.1, z in 0.01f64..0.1, x0 in -0.2f64..0.2) {
            let g = Grid::centered(256, 1e-5, Dims::One).unwrap();
            let (w, x0) = (w * 2.56e-3, x0 * 2.56e-3);
            let f = ComplexField::from_fn(g, 633e-9, |x, _| Complex64::new((-((x - x0) / w).powi(2)).exp(), 0.0)).unwrap();
            let out = propagate_angular_spectrum(&f, z).unwrap();
            prop_assert!((out.norm_sq() / f.norm_sq() - 1.0).abs() < 1e-6);
        }
    }
}
