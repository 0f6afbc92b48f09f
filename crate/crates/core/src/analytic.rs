//! Closed-form fringe models, wire interception integrals and the
//! visibility / which-way / η metrics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Dims, Grid, IrradianceProfile};

/// First positive zero of J₁.
pub const J1_FIRST_ZERO: f64 = 3.831_705_970_207_512_3;

/// Default tolerance above 1 for flagging `V² + K²`.
pub const DUALITY_TOLERANCE: f64 = 0.01;

pub fn bessel_j1(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::NanInput("bessel_j1"));
    }
    Ok(libm::j1(x))
}

/// `J₁(x)/x`, continuous through 0 where it tends to 1/2.
pub fn j1_over_x(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        let x2 = x * x;
        0.5 - x2 / 16.0 + x2 * x2 / 384.0
    } else {
        libm::j1(x) / x
    }
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must be > 0, got {v}")))
    }
}

/// Peak-to-peak fringe spacing `u = lλ/a`.
pub fn fringe_spacing(l: f64, wavelength: f64, a: f64) -> Result<f64> {
    Ok(positive("l", l)? * positive("wavelength", wavelength)? / positive("a", a)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AiryMode {
    /// First zero of the circular-aperture envelope, `(j₁₁/π)·lλ/b ≈ 1.22·lλ/b`.
    #[default]
    FirstZero,
    /// `lλ/b`.
    PaperText,
}

pub fn airy_radius(l: f64, wavelength: f64, b: f64, mode: AiryMode) -> Result<f64> {
    let base = positive("l", l)? * positive("wavelength", wavelength)? / positive("b", b)?;
    Ok(match mode {
        AiryMode::FirstZero => base * J1_FIRST_ZERO / PI,
        AiryMode::PaperText => base,
    })
}

/// `cos(πt)` with exact zeros at half-integer `t` (to a few ulps of `t`).
pub fn cos_pi(t: f64) -> f64 {
    let r = t - 2.0 * (0.5 * t).round();
    let off = (r.abs() - 0.5).abs();
    if off <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
        0.0
    } else {
        (PI * r).cos()
    }
}

/// Two-pinhole far-field model: fringes of spacing `u` under an Airy
/// envelope whose first zero is at `s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeModel {
    pub u: f64,
    pub s: f64,
    pub amplitude_scale: f64,
}

impl FringeModel {
    pub fn new(u: f64, s: f64, amplitude_scale: f64) -> Result<Self> {
        positive("u", u)?;
        positive("s", s)?;
        positive("amplitude_scale", amplitude_scale)?;
        if 2.0 * s / u < 1.0 {
            return Err(Error::invalid("fringe model", format!("fringe count 2s/u = {} < 1", 2.0 * s / u)));
        }
        Ok(Self { u, s, amplitude_scale })
    }

    pub fn beta(&self, r: f64) -> f64 {
        J1_FIRST_ZERO * r / self.s
    }

    /// `[2cos(πx/u)·J₁(β)/β]²·scale²` with β from the radius `r` (`r = |x|` on a cut).
    pub fn coherent_at(&self, x: f64, r: f64) -> f64 {
        let a = 2.0 * cos_pi(x / self.u) * j1_over_x(self.beta(r));
        self.amplitude_scale * self.amplitude_scale * a * a
    }

    /// `2[J₁(β)/β]²·scale²`.
    pub fn decoherent_at(&self, r: f64) -> f64 {
        let e = j1_over_x(self.beta(r));
        2.0 * self.amplitude_scale * self.amplitude_scale * e * e
    }
}

fn sample_profile(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> IrradianceProfile {
    let xs = grid.coords();
    let values = match grid.dims() {
        Dims::One => xs.iter().map(|&x| f(x, x.abs())).collect(),
        Dims::Two => {
            let mut v = Vec::with_capacity(grid.sample_count());
            for &y in &xs {
                for &x in &xs {
                    v.push(f(x, x.hypot(y)));
                }
            }
            v
        }
    };
    IrradianceProfile::new(*grid, values).expect("closed-form profile is finite and non-negative")
}

/// Coherent irradiance sampled on `grid`; in 2D the envelope is radial and
/// the fringes run along y.
pub fn coherent_profile(grid: &Grid, model: &FringeModel) -> IrradianceProfile {
    sample_profile(grid, |x, r| model.coherent_at(x, r))
}

pub fn decoherent_profile(grid: &Grid, model: &FringeModel) -> IrradianceProfile {
    sample_profile(grid, |_, r| model.decoherent_at(r))
}

/// Parallel opaque wires of thickness `e`, running along y.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WireGrid {
    centers: Vec<f64>,
    thickness: f64,
}

impl WireGrid {
    /// `wavelength` enforces the opacity regime `e ≥ 20λ`.
    pub fn new(mut centers: Vec<f64>, thickness: f64, wavelength: f64) -> Result<Self> {
        positive("wire thickness", thickness)?;
        positive("wavelength", wavelength)?;
        if thickness < 20.0 * wavelength {
            return Err(Error::invalid(
                "wire thickness",
                format!("{thickness:e} m is below 20 wavelengths; wires would not be opaque"),
            ));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("wire centers", "non-finite position"));
        }
        centers.sort_by(f64::total_cmp);
        if centers.windows(2).any(|w| w[1] - w[0] < thickness) {
            return Err(Error::invalid("wire centers", "wires overlap"));
        }
        Ok(Self { centers, thickness })
    }

    /// `count` wires (even) at the dark fringes `±(2k+1)u/2`, each displaced by `offset`.
    pub fn at_dark_fringes(u: f64, thickness: f64, count: usize, offset: f64, wavelength: f64) -> Result<Self> {
        positive("u", u)?;
        if count % 2 != 0 {
            return Err(Error::invalid("wire_count", format!("must be even, got {count}")));
        }
        if thickness >= u {
            return Err(Error::invalid("wire thickness", "e < u violated"));
        }
        let mut centers = Vec::with_capacity(count);
        for k in 0..count / 2 {
            let x = (2 * k + 1) as f64 * u / 2.0;
            centers.push(-x + offset);
            centers.push(x + offset);
        }
        Self::new(centers, thickness, wavelength)
    }

    /// Same wires shifted rigidly by `dx`.
    pub fn shifted(&self, dx: f64) -> Self {
        Self {
            centers: self.centers.iter().map(|c| c + dx).collect(),
            thickness: self.thickness,
        }
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn count(&self) -> usize {
        self.centers.len()
    }

    /// `[c − e/2, c + e/2]` per wire.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = self.thickness / 2.0;
        self.centers.iter().map(move |&c| (c - h, c + h))
    }

    pub fn covered_length(&self) -> f64 {
        self.thickness * self.centers.len() as f64
    }
}

/// `∫ max(q, 0) dt` over `[t0, t1]` for `q(t) = c0 + c1 t + c2 t²`.
fn positive_quadratic_integral(c0: f64, c1: f64, c2: f64, t0: f64, t1: f64) -> f64 {
    let prim = |t: f64| t * (c0 + t * (c1 / 2.0 + t * c2 / 3.0));
    let q = |t: f64| c0 + t * (c1 + t * c2);
    let mut cuts = vec![t0];
    if c2 != 0.0 {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc > 0.0 {
            let sq = disc.sqrt();
            // numerically stable pair
            let qq = -0.5 * (c1 + c1.signum() * sq);
            let mut roots = [qq / c2, if qq != 0.0 { c0 / qq } else { -c1 / (2.0 * c2) }];
            roots.sort_by(f64::total_cmp);
            cuts.extend(roots.iter().copied().filter(|&r| r > t0 && r < t1));
        }
    } else if c1 != 0.0 {
        let r = -c0 / c1;
        if r > t0 && r < t1 {
            cuts.push(r);
        }
    }
    cuts.push(t1);
    cuts.windows(2)
        .filter(|w| q(0.5 * (w[0] + w[1])) > 0.0)
        .map(|w| prim(w[1]) - prim(w[0]))
        .sum()
}

/// Integral over `[lo, hi]` of the positive part of the piecewise local
/// quadratic interpolant: sample `i` owns `[x_i − h/2, x_i + h/2]` and uses
/// the parabola through samples `i−1, i, i+1`.
fn quadratic_line_integral(grid: &Grid, row: &[f64], lo: f64, hi: f64) -> f64 {
    let n = row.len();
    let h = grid.spacing();
    let a = lo.max(grid.origin());
    let b = hi.min(grid.last());
    if b <= a {
        return 0.0;
    }
    let first = grid.nearest_index(a);
    let last = grid.nearest_index(b);
    let mut total = 0.0;
    for i in first..=last {
        let xi = grid.coord(i);
        let ca = a.max(xi - 0.5 * h);
        let cb = b.min(xi + 0.5 * h);
        if cb <= ca {
            continue;
        }
        let c = i.clamp(1, n - 2);
        let xc = grid.coord(c);
        let (vm, v0, vp) = (row[c - 1], row[c], row[c + 1]);
        let c1 = 0.5 * (vp - vm);
        let c2 = 0.5 * (vp - 2.0 * v0 + vm);
        total += h * positive_quadratic_integral(v0, c1, c2, (ca - xc) / h, (cb - xc) / h);
    }
    total
}

/// Profile flux intercepted by the wires, `Σ ∫_{c−e/2}^{c+e/2} I dx` (full y
/// extent in 2D, rows weighted by the trapezoid rule).
///
/// Uses the local quadratic interpolant at every width, so the result is
/// resolved below the grid pitch, additive over wires and monotone in `e`.
pub fn wire_loss(profile: &IrradianceProfile, wires: &WireGrid) -> Result<f64> {
    let g = profile.grid();
    let (glo, ghi) = (g.origin(), g.last());
    for (lo, hi) in wires.intervals() {
        if lo < glo || hi > ghi {
            return Err(Error::WireOutsideGrid {
                center: 0.5 * (lo + hi),
                lo: glo,
                hi: ghi,
            });
        }
    }
    let line = |row: &[f64]| -> f64 {
        wires.intervals().map(|(lo, hi)| quadratic_line_integral(g, row, lo, hi)).sum()
    };
    Ok(match g.dims() {
        Dims::One => line(profile.values()),
        Dims::Two => {
            let wy = g.trapezoid_weights();
            profile
                .values()
                .chunks_exact(g.len())
                .zip(wy)
                .map(|(row, w)| w * line(row))
                .sum()
        }
    })
}

/// `(I_max − I_min)/(I_max + I_min)`.
pub fn visibility(i_max: f64, i_min: f64) -> Result<f64> {
    if i_max.is_nan() || i_min.is_nan() {
        return Err(Error::NanInput("visibility"));
    }
    if i_max < 0.0 || i_min < 0.0 {
        return Err(Error::invalid("irradiance", "must be >= 0"));
    }
    if i_max + i_min == 0.0 {
        return Err(Error::NoFlux("visibility of a dark pattern"));
    }
    if i_min > i_max {
        return Err(Error::invalid("visibility", format!("I_min {i_min} exceeds I_max {i_max}")));
    }
    Ok(((i_max - i_min) / (i_max + i_min)).clamp(0.0, 1.0))
}

/// `(I_own − I_cross)/(I_own + I_cross)` clamped to `[0, 1]`.
pub fn which_way_knowledge(i_own: f64, i_cross: f64) -> Result<f64> {
    if i_own.is_nan() || i_cross.is_nan() {
        return Err(Error::NanInput("which_way_knowledge"));
    }
    let total = i_own + i_cross;
    if total == 0.0 {
        return Err(Error::NoFlux("which-way knowledge with zero total"));
    }
    Ok(((i_own - i_cross) / total).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DualitySum {
    pub value: f64,
    pub violation: bool,
}

pub fn duality_sum(v: f64, k: f64) -> Result<DualitySum> {
    duality_sum_with_tolerance(v, k, DUALITY_TOLERANCE)
}

pub fn duality_sum_with_tolerance(v: f64, k: f64, tolerance: f64) -> Result<DualitySum> {
    for (name, x) in [("V", v), ("K", k)] {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::invalid(name, format!("must lie in [0, 1], got {x}")));
        }
    }
    let value = v * v + k * k;
    Ok(DualitySum {
        value,
        violation: value > 1.0 + tolerance,
    })
}

/// `(R̃ − R)/(R̃ + R)`, unclamped.
pub fn eta(r_tilde: f64, r: f64) -> Result<f64> {
    if r_tilde.is_nan() || r.is_nan() {
        return Err(Error::NanInput("eta"));
    }
    let den = r_tilde + r;
    if den == 0.0 {
        return Err(Error::Degenerate("no interception in either run"));
    }
    Ok((r_tilde - r) / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DualityMetrics {
    pub v: f64,
    pub k: f64,
    pub duality_sum: f64,
    pub eta: f64,
}

impl DualityMetrics {
    pub fn new(v: f64, k: f64, eta: f64) -> Result<Self> {
        let v = round_clamp(v);
        let k = round_clamp(k);
        Ok(Self {
            v,
            k,
            duality_sum: duality_sum(v, k)?.value,
            eta,
        })
    }
}

fn round_clamp(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    r.clamp(0.0, 1.0)
}
