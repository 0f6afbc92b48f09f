//! Sampled scalar fields and irradiance profiles on uniform grids.
//!
//! A [`Grid`] is one axis description reused for both axes of a square 2D
//! grid. 2D sample storage is row-major: index `iy * len + ix`. Fluxes are
//! integrals of the piecewise-linear interpolant of the samples (the
//! trapezoid rule on the native grid, tensor product in 2D), which keeps
//! partial-range fluxes exactly additive.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dims {
    One,
    Two,
}

impl Dims {
    pub fn count(self) -> u8 {
        match self {
            Dims::One => 1,
            Dims::Two => 2,
        }
    }

    pub fn from_count(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Dims::One),
            2 => Ok(Dims::Two),
            _ => Err(Error::invalid("dims", format!("expected 1 or 2, got {n}"))),
        }
    }
}

/// Uniform sample positions `origin + i * spacing`, `i < len`, on one or two
/// (identical) axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    origin: f64,
    spacing: f64,
    len: usize,
    dims: Dims,
}

impl Grid {
    pub fn new(origin: f64, spacing: f64, len: usize, dims: Dims) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::invalid("spacing", format!("must be > 0, got {spacing}")));
        }
        if !origin.is_finite() {
            return Err(Error::invalid("origin", "must be finite"));
        }
        if len < MIN_SAMPLES {
            return Err(Error::invalid(
                "samples",
                format!("need at least {MIN_SAMPLES} per axis, got {len}"),
            ));
        }
        Ok(Self {
            origin,
            spacing,
            len,
            dims,
        })
    }

    /// Grid symmetric about zero. Even `len` has no sample at the origin.
    pub fn centered(len: usize, spacing: f64, dims: Dims) -> Result<Self> {
        Self::new(-0.5 * (len as f64 - 1.0) * spacing, spacing, len, dims)
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Samples per axis.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn last(&self) -> f64 {
        self.coord(self.len - 1)
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.coord(i)).collect()
    }

    pub fn sample_count(&self) -> usize {
        match self.dims {
            Dims::One => self.len,
            Dims::Two => self.len * self.len,
        }
    }

    /// `spacing^dims`
    pub fn cell_measure(&self) -> f64 {
        match self.dims {
            Dims::One => self.spacing,
            Dims::Two => self.spacing * self.spacing,
        }
    }

    pub fn nearest_index(&self, x: f64) -> usize {
        let i = ((x - self.origin) / self.spacing).round();
        i.clamp(0.0, (self.len - 1) as f64) as usize
    }

    pub fn matches(&self, other: &Grid) -> bool {
        let tol = 1e-9 * self.spacing;
        self.len == other.len
            && self.dims == other.dims
            && (self.spacing - other.spacing).abs() <= tol
            && (self.origin - other.origin).abs() <= tol
    }

    pub(crate) fn ensure_matches(&self, other: &Grid) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}x{:?} @ {:e} from {:e} vs {}x{:?} @ {:e} from {:e}",
                self.len,
                self.dims,
                self.spacing,
                self.origin,
                other.len,
                other.dims,
                other.spacing,
                other.origin
            )))
        }
    }

    /// Weights `w` such that `sum(w[i] * v[i])` is the integral over
    /// `[lo, hi]` of the piecewise-linear interpolant of `v` on this axis.
    /// The range is clamped to the grid; an empty clamped range gives zeros.
    pub fn range_weights(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        if !(hi > lo) || lo.is_nan() || hi.is_nan() {
            return Err(Error::DegenerateRange { lo, hi });
        }
        let mut w = vec![0.0; self.len];
        let a = lo.max(self.origin);
        let b = hi.min(self.last());
        if b <= a {
            return Ok(w);
        }
        let h = self.spacing;
        let first = (((a - self.origin) / h).floor() as usize).min(self.len - 2);
        let last = (((b - self.origin) / h).ceil() as usize).clamp(first + 1, self.len - 1);
        for i in first..last {
            let x0 = self.coord(i);
            let ta = ((a - x0) / h).clamp(0.0, 1.0);
            let tb = ((b - x0) / h).clamp(0.0, 1.0);
            if tb <= ta {
                continue;
            }
            let half_sq = 0.5 * (tb * tb - ta * ta);
            w[i] += h * ((tb - ta) - half_sq);
            w[i + 1] += h * half_sq;
        }
        Ok(w)
    }

    /// Full-extent trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let mut w = vec![self.spacing; self.len];
        w[0] *= 0.5;
        w[self.len - 1] *= 0.5;
        w
    }
}

/// Weighted sum of real samples with per-axis weights (`wy` ignored in 1D).
fn weighted_sum(grid: &Grid, values: &[f64], wx: &[f64], wy: &[f64]) -> f64 {
    match grid.dims {
        Dims::One => values.iter().zip(wx).map(|(v, w)| v * w).sum(),
        Dims::Two => values
            .chunks_exact(grid.len)
            .zip(wy)
            .filter(|(_, &w)| w != 0.0)
            .map(|(row, w)| w * row.iter().zip(wx).map(|(v, w)| v * w).sum::<f64>())
            .sum(),
    }
}

/// Sampled complex scalar amplitude at one plane.
#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: Grid,
    wavelength: f64,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Grid, wavelength: f64, values: Vec<Complex64>) -> Result<Self> {
        if !(wavelength > 0.0) || !wavelength.is_finite() {
            return Err(Error::invalid("wavelength", format!("must be > 0, got {wavelength}")));
        }
        if values.len() != grid.sample_count() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} samples",
                values.len(),
                grid.sample_count()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("values", "non-finite amplitude"));
        }
        Ok(Self {
            grid,
            wavelength,
            values,
        })
    }

    pub fn zeros(grid: Grid, wavelength: f64) -> Result<Self> {
        Self::new(grid, wavelength, vec![Complex64::new(0.0, 0.0); grid.sample_count()])
    }

    /// Samples `f(x, y)`; in 1D `y` is always 0.
    pub fn from_fn(
        grid: Grid,
        wavelength: f64,
        mut f: impl FnMut(f64, f64) -> Complex64,
    ) -> Result<Self> {
        let xs = grid.coords();
        let values = match grid.dims {
            Dims::One => xs.iter().map(|&x| f(x, 0.0)).collect(),
            Dims::Two => {
                let mut v = Vec::with_capacity(grid.sample_count());
                for &y in &xs {
                    for &x in &xs {
                        v.push(f(x, y));
                    }
                }
                v
            }
        };
        Self::new(grid, wavelength, values)
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, wavelength: f64, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.sample_count());
        Self {
            grid,
            wavelength,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn irradiance(&self) -> IrradianceProfile {
        IrradianceProfile {
            grid: self.grid,
            values: self.values.iter().map(|v| v.norm_sqr()).collect(),
        }
    }

    /// `sum |value|^2 * spacing^dims`, the discrete norm².
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_measure()
    }

    pub fn flux(&self, lo: f64, hi: f64) -> Result<f64> {
        self.irradiance().flux(lo, hi)
    }

    pub fn total_flux(&self) -> f64 {
        self.irradiance().total_flux()
    }

    /// Samplewise product with a real mask on the same grid.
    pub fn masked(&self, mask: &[f64]) -> Result<Self> {
        if mask.len() != self.values.len() {
            return Err(Error::GridMismatch(format!(
                "mask of {} samples for field of {}",
                mask.len(),
                self.values.len()
            )));
        }
        let values = self.values.iter().zip(mask).map(|(v, m)| v * m).collect();
        Ok(Self::from_parts_unchecked(self.grid, self.wavelength, values))
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let values = self.values.iter().map(|v| v * factor).collect();
        Self::from_parts_unchecked(self.grid, self.wavelength, values)
    }

    pub fn add(&self, other: &ComplexField) -> Result<Self> {
        self.grid.ensure_matches(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self::from_parts_unchecked(self.grid, self.wavelength, values))
    }
}

/// Non-negative real samples (arbitrary units).
#[derive(Clone, Debug)]
pub struct IrradianceProfile {
    grid: Grid,
    values: Vec<f64>,
}

impl IrradianceProfile {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.sample_count() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} samples",
                values.len(),
                grid.sample_count()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("irradiance", format!("sample {v} is not finite and >= 0")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Integral over `x in [lo, hi]` (full `y` extent in 2D).
    pub fn flux(&self, lo: f64, hi: f64) -> Result<f64> {
        let wx = self.grid.range_weights(lo, hi)?;
        let wy = self.grid.trapezoid_weights();
        Ok(weighted_sum(&self.grid, &self.values, &wx, &wy))
    }

    pub fn total_flux(&self) -> f64 {
        let w = self.grid.trapezoid_weights();
        weighted_sum(&self.grid, &self.values, &w, &w)
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Row through `y` nearest the given coordinate (the profile itself in 1D).
    pub fn x_cut(&self, y: f64) -> IrradianceProfile {
        match self.grid.dims {
            Dims::One => self.clone(),
            Dims::Two => {
                let iy = self.grid.nearest_index(y);
                let n = self.grid.len;
                IrradianceProfile {
                    grid: Grid { dims: Dims::One, ..self.grid },
                    values: self.values[iy * n..(iy + 1) * n].to_vec(),
                }
            }
        }
    }

    /// Linear interpolation on a 1D profile; zero outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let t = (x - self.grid.origin) / self.grid.spacing;
        if t < 0.0 || t > (self.grid.len - 1) as f64 {
            return 0.0;
        }
        let i = (t.floor() as usize).min(self.grid.len - 2);
        let f = t - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| v * factor).collect())
    }
}

/// Signed real samples, e.g. the interference term.
#[derive(Clone, Debug)]
pub struct SignedProfile {
    pub grid: Grid,
    pub values: Vec<f64>,
}

/// Zeroes every sample outside radius `radius` about the origin (|x| in 1D).
/// Samples inside are copied bit-for-bit.
pub fn apodize(field: &ComplexField, radius: f64) -> Result<ComplexField> {
    if !(radius > 0.0) {
        return Err(Error::invalid("apodization radius", format!("must be > 0, got {radius}")));
    }
    let g = field.grid;
    let zero = Complex64::new(0.0, 0.0);
    let r2 = radius * radius;
    let values = match g.dims {
        Dims::One => field
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| if g.coord(i).abs() > radius { zero } else { v })
            .collect(),
        Dims::Two => {
            let n = g.len;
            field
                .values
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    let (x, y) = (g.coord(k % n), g.coord(k / n));
                    if x * x + y * y > r2 {
                        zero
                    } else {
                        v
                    }
                })
                .collect()
        }
    };
    Ok(ComplexField::from_parts_unchecked(g, field.wavelength, values))
}

/// `|ψ1 + ψ2|²` samplewise.
pub fn combine_coherent(a: &ComplexField, b: &ComplexField) -> Result<IrradianceProfile> {
    a.grid.ensure_matches(&b.grid)?;
    let values = a.values.iter().zip(&b.values).map(|(x, y)| (x + y).norm_sqr()).collect();
    Ok(IrradianceProfile { grid: a.grid, values })
}

/// `|ψ1|² + |ψ2|²` samplewise, no cross term.
pub fn combine_decoherent(a: &ComplexField, b: &ComplexField) -> Result<IrradianceProfile> {
    a.grid.ensure_matches(&b.grid)?;
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x.norm_sqr() + y.norm_sqr())
        .collect();
    Ok(IrradianceProfile { grid: a.grid, values })
}

/// `Γ = ψ1*ψ2 + ψ1ψ2* = 2 Re(ψ1* ψ2)` samplewise.
pub fn interference_term(a: &ComplexField, b: &ComplexField) -> Result<SignedProfile> {
    a.grid.ensure_matches(&b.grid)?;
    let values = a.values.iter().zip(&b.values).map(|(x, y)| 2.0 * (x.conj() * y).re).collect();
    Ok(SignedProfile { grid: a.grid, values })
}
