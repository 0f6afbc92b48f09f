//! Monte Carlo photon arrivals and likelihood-ratio discrimination of
//! coherent and decoherent fringe-plane ensembles.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analytic::{coherent_profile, decoherent_profile};
use crate::config::SetupConfig;
use crate::error::{Error, Result};
use crate::field::{Dims, Grid, IrradianceProfile};

/// Density floor in the log-likelihood ratio.
pub const DENSITY_FLOOR: f64 = 1e-12;
pub const MIN_TRIALS: usize = 100;
pub const GENERATOR: &str = "ChaCha8Rng";
/// Samples of the closed-form profiles used by [`buildup_study`].
pub const STUDY_SAMPLES: usize = 20_001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Coherent,
    Decoherent,
}

impl SourceKind {
    pub const ALL: [SourceKind; 2] = [SourceKind::Coherent, SourceKind::Decoherent];

    pub fn name(self) -> &'static str {
        match self {
            SourceKind::Coherent => "coherent",
            SourceKind::Decoherent => "decoherent",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhotonSample {
    /// x positions in 1D, `(x, y)` pairs in 2D.
    pub positions: Vec<[f64; 2]>,
    pub dims: Dims,
    pub source: Option<SourceKind>,
    pub seed: u64,
}

impl PhotonSample {
    pub fn count(&self) -> usize {
        self.positions.len()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.positions.iter().map(|p| p[0]).collect()
    }
}

fn cumulative(values: &[f64], h: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    c.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        c.push(acc);
    }
    c
}

/// Position inside the cell `[x0, x0 + h]` at which the linear density
/// `v0 → v1` accumulates `mass`.
fn invert_cell(x0: f64, h: f64, v0: f64, v1: f64, mass: f64) -> f64 {
    let b = 2.0 * mass / h;
    let disc = (v0 * v0 + (v1 - v0) * b).max(0.0);
    let den = v0 + disc.sqrt();
    let t = if den > 0.0 { b / den } else { 0.5 };
    x0 + h * t.clamp(0.0, 1.0)
}

/// One draw from the piecewise-linear density `values` on `grid`'s axis.
fn draw_line(grid: &Grid, values: &[f64], cdf: &[f64], r: f64) -> f64 {
    let target = r * cdf[cdf.len() - 1];
    let i = cdf.partition_point(|&c| c <= target).clamp(1, cdf.len() - 1) - 1;
    invert_cell(grid.coord(i), grid.spacing(), values[i], values[i + 1], target - cdf[i])
}

/// Precomputed inverse-CDF sampler for a profile.
pub struct Sampler {
    profile: IrradianceProfile,
    /// 1D: the x table; 2D: the y marginal table.
    cdf: Vec<f64>,
    row_mass: Vec<f64>,
}

impl Sampler {
    pub fn new(profile: &IrradianceProfile) -> Result<Self> {
        let g = profile.grid();
        let h = g.spacing();
        let (row_mass, cdf) = match g.dims() {
            Dims::One => (Vec::new(), cumulative(profile.values(), h)),
            Dims::Two => {
                let rows: Vec<f64> = profile
                    .values()
                    .chunks_exact(g.len())
                    .map(|r| cumulative(r, h).last().copied().unwrap_or(0.0))
                    .collect();
                let c = cumulative(&rows, h);
                (rows, c)
            }
        };
        if !(cdf.last().copied().unwrap_or(0.0) > 0.0) {
            return Err(Error::NoFlux("photon sampling from a dark profile"));
        }
        Ok(Self {
            profile: profile.clone(),
            cdf,
            row_mass,
        })
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        let g = self.profile.grid();
        match g.dims() {
            Dims::One => [draw_line(g, self.profile.values(), &self.cdf, rng.random()), 0.0],
            Dims::Two => {
                let y = draw_line(g, &self.row_mass, &self.cdf, rng.random());
                let n = g.len();
                let pos = ((y - g.origin()) / g.spacing()).clamp(0.0, (n - 1) as f64);
                let i = (pos.floor() as usize).min(n - 2);
                let t = pos - i as f64;
                let v = self.profile.values();
                let row: Vec<f64> = (0..n).map(|k| (1.0 - t) * v[i * n + k] + t * v[(i + 1) * n + k]).collect();
                let c = cumulative(&row, g.spacing());
                [draw_line(g, &row, &c, rng.random()), y]
            }
        }
    }
}

/// `n` independent draws from the normalized profile.
pub fn sample(profile: &IrradianceProfile, n: usize, seed: u64) -> Result<PhotonSample> {
    let sampler = Sampler::new(profile)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(PhotonSample {
        positions: (0..n).map(|_| sampler.draw(&mut rng)).collect(),
        dims: profile.grid().dims(),
        source: None,
        seed,
    })
}

/// Unit-integral density view of a profile.
pub struct Density {
    profile: IrradianceProfile,
    norm: f64,
}

impl Density {
    pub fn new(profile: &IrradianceProfile) -> Result<Self> {
        let total = profile.total_flux();
        if !(total > 0.0) {
            return Err(Error::NoFlux("density of a dark profile"));
        }
        Ok(Self {
            profile: profile.clone(),
            norm: 1.0 / total,
        })
    }

    pub fn at(&self, p: [f64; 2]) -> Result<f64> {
        let g = self.profile.grid();
        let inside = |v: f64| v >= g.origin() - 1e-12 * g.spacing() && v <= g.last() + 1e-12 * g.spacing();
        if !inside(p[0]) || (g.dims() == Dims::Two && !inside(p[1])) {
            return Err(Error::invalid("photon position", format!("({:e}, {:e}) lies outside the profile support", p[0], p[1])));
        }
        let v = match g.dims() {
            Dims::One => self.profile.interpolate(p[0]),
            Dims::Two => {
                let n = g.len();
                let pos = ((p[1] - g.origin()) / g.spacing()).clamp(0.0, (n - 1) as f64);
                let i = (pos.floor() as usize).min(n - 2);
                let t = pos - i as f64;
                let a = self.profile.x_cut(g.coord(i)).interpolate(p[0]);
                let b = self.profile.x_cut(g.coord(i + 1)).interpolate(p[0]);
                (1.0 - t) * a + t * b
            }
        };
        Ok(v * self.norm)
    }
}

/// `Σ ln(p_coh/p_dec)` with both densities floored at [`DENSITY_FLOOR`].
pub fn log_likelihood_ratio(sample: &PhotonSample, coherent: &IrradianceProfile, decoherent: &IrradianceProfile) -> Result<f64> {
    if sample.positions.is_empty() {
        return Ok(0.0);
    }
    let c = Density::new(coherent)?;
    let d = Density::new(decoherent)?;
    llr_with(&sample.positions, &c, &d)
}

fn llr_with(positions: &[[f64; 2]], c: &Density, d: &Density) -> Result<f64> {
    let mut total = 0.0;
    for &p in positions {
        total += c.at(p)?.max(DENSITY_FLOOR).ln() - d.at(p)?.max(DENSITY_FLOOR).ln();
    }
    Ok(total)
}

/// Per-trial seed from the study seed and the trial coordinates (SplitMix64 mix).
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

#[derive(Clone, Debug, Serialize)]
pub struct AccuracyRow {
    pub source: SourceKind,
    pub n: usize,
    pub trials: usize,
    pub accuracy: f64,
    pub mean_llr: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
    pub seed: u64,
    pub generator: &'static str,
    pub fringe_spacing_m: f64,
    pub support_half_width_m: f64,
}

impl AccuracyTable {
    pub fn accuracy(&self, source: SourceKind, n: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.source == source && r.n == n).map(|r| r.accuracy)
    }

    /// Mean over both sources.
    pub fn balanced_accuracy(&self, n: usize) -> Option<f64> {
        Some(0.5 * (self.accuracy(SourceKind::Coherent, n)? + self.accuracy(SourceKind::Decoherent, n)?))
    }
}

/// The two closed-form fringe-plane cuts over `[−s, s]`.
pub fn study_profiles(config: &SetupConfig) -> Result<(IrradianceProfile, IrradianceProfile)> {
    let geo = config.geometry()?;
    let model = geo.fringe_model()?;
    let g = Grid::new(-geo.s, 2.0 * geo.s / (STUDY_SAMPLES - 1) as f64, STUDY_SAMPLES, Dims::One)?;
    Ok((coherent_profile(&g, &model), decoherent_profile(&g, &model)))
}

/// Sample `n` photons of `source` for one trial of the study.
pub fn trial_sample(sampler: &Sampler, source: SourceKind, n: usize, seed: u64, trial: u64) -> PhotonSample {
    let s = derive_seed(seed, &[source as u64, n as u64, trial]);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    PhotonSample {
        positions: (0..n).map(|_| sampler.draw(&mut rng)).collect(),
        dims: Dims::One,
        source: Some(source),
        seed: s,
    }
}

/// Fraction of trials whose LLR sign names the true source (Λ > 0 ⇒ coherent).
pub fn buildup_study(config: &SetupConfig, counts: &[usize], trials: usize, seed: u64) -> Result<AccuracyTable> {
    if trials < MIN_TRIALS {
        return Err(Error::invalid("trials", format!("need at least {MIN_TRIALS}, got {trials}")));
    }
    let geo = config.geometry()?;
    let (coh, dec) = study_profiles(config)?;
    let samplers = [Sampler::new(&coh)?, Sampler::new(&dec)?];
    let (dc, dd) = (Density::new(&coh)?, Density::new(&dec)?);
    let mut rows = Vec::new();
    for source in SourceKind::ALL {
        let sampler = &samplers[source as usize];
        for &n in counts {
            let mut correct = 0usize;
            let mut sum = 0.0;
            for t in 0..trials {
                let s = trial_sample(sampler, source, n, seed, t as u64);
                let llr = llr_with(&s.positions, &dc, &dd)?;
                sum += llr;
                let says_coherent = llr > 0.0;
                if says_coherent == (source == SourceKind::Coherent) {
                    correct += 1;
                }
            }
            rows.push(AccuracyRow {
                source,
                n,
                trials,
                accuracy: correct as f64 / trials as f64,
                mean_llr: sum / trials as f64,
            });
        }
    }
    Ok(AccuracyTable {
        rows,
        seed,
        generator: GENERATOR,
        fringe_spacing_m: geo.u,
        support_half_width_m: geo.s,
    })
}

/// Two-sided Kolmogorov–Smirnov distance between the draws and a CDF.
pub fn ks_statistic(draws: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = draws.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::FringeModel;

    fn model() -> FringeModel {
        let g = SetupConfig::default().geometry().unwrap();
        g.fringe_model().unwrap()
    }

    #[test]
    fn empty_and_delta_samples() {
        let g = Grid::centered(11, 1.0, Dims::One).unwrap();
        let mut v = vec![0.0; 11];
        assert!(sample(&IrradianceProfile::new(g, v.clone()).unwrap(), 3, 1).is_err());
        v[7] = 1.0;
        let p = IrradianceProfile::new(g, v).unwrap();
        assert_eq!(sample(&p, 0, 1).unwrap().count(), 0);
        let s = sample(&p, 1000, 3).unwrap();
        assert!(s.xs().iter().all(|x| (x - g.coord(7)).abs() <= g.spacing()));
    }

    #[test]
    fn same_seed_same_positions() {
        let (coh, _) = study_profiles(&SetupConfig::default()).unwrap();
        let a = sample(&coh, 500, 9).unwrap();
        let b = sample(&coh, 500, 9).unwrap();
        assert_eq!(a.positions, b.positions);
        assert_ne!(a.positions, sample(&coh, 500, 10).unwrap().positions);
    }

    #[test]
    fn bright_peak_contributes_ln2() {
        let (coh, dec) = study_profiles(&SetupConfig::default()).unwrap();
        let s = PhotonSample { positions: vec![[0.0, 0.0]], dims: Dims::One, source: None, seed: 0 };
        let l = log_likelihood_ratio(&s, &coh, &dec).unwrap();
        assert!((l / 2f64.ln() - 1.0).abs() < 0.01, "{l}");
        let m = model();
        let g = coh.grid();
        let x = g.coord(g.nearest_index(m.u / 2.0));
        let dark = PhotonSample { positions: vec![[x, 0.0]], dims: Dims::One, source: None, seed: 0 };
        assert!(log_likelihood_ratio(&dark, &coh, &dec).unwrap() < -10.0);

        // an exact zero hits the floor
        let g = Grid::centered(9, 1.0, Dims::One).unwrap();
        let mut v = vec![1.0; 9];
        v[4] = 0.0;
        let zero = IrradianceProfile::new(g, v).unwrap();
        let flat = IrradianceProfile::new(g, vec![1.0; 9]).unwrap();
        let at = PhotonSample { positions: vec![[0.0, 0.0]], dims: Dims::One, source: None, seed: 0 };
        let l = log_likelihood_ratio(&at, &zero, &flat).unwrap();
        assert!((l - (DENSITY_FLOOR.ln() + 8.0f64.ln())).abs() < 1e-12, "{l}");
        let none = PhotonSample { positions: vec![], dims: Dims::One, source: None, seed: 0 };
        assert_eq!(log_likelihood_ratio(&none, &coh, &dec).unwrap(), 0.0);
        let outside = PhotonSample { positions: vec![[1.0, 0.0]], dims: Dims::One, source: None, seed: 0 };
        assert!(log_likelihood_ratio(&outside, &coh, &dec).is_err());
    }

    #[test]
    fn too_few_trials_is_rejected() {
        assert!(buildup_study(&SetupConfig::default(), &[30], 10, 1).is_err());
    }

    #[test]
    fn two_dimensional_draws_follow_the_marginals() {
        let g = Grid::centered(41, 0.05, Dims::Two).unwrap();
        // density ∝ (1 + x)(2 + y) on the square: separable and linear
        let xs = g.coords();
        let mut v = Vec::new();
        for &y in &xs {
            for &x in &xs {
                v.push((1.0 + x) * (2.0 + y));
            }
        }
        let p = IrradianceProfile::new(g, v).unwrap();
        let s = sample(&p, 40_000, 5).unwrap();
        let (a, b) = (g.origin(), g.last());
        // closed-form means of the linear marginals
        let mean = |c: f64| (c * (b * b - a * a) / 2.0 + (b.powi(3) - a.powi(3)) / 3.0) / (c * (b - a) + (b * b - a * a) / 2.0);
        let mx = s.positions.iter().map(|p| p[0]).sum::<f64>() / 40_000.0;
        let my = s.positions.iter().map(|p| p[1]).sum::<f64>() / 40_000.0;
        assert!((mx - mean(1.0)).abs() < 0.01, "{mx} vs {}", mean(1.0));
        assert!((my - mean(2.0)).abs() < 0.01, "{my} vs {}", mean(2.0));
    }

    #[test]
    fn seeds_are_spread() {
        let a = derive_seed(42, &[0, 30, 1]);
        let b = derive_seed(42, &[0, 30, 2]);
        let c = derive_seed(42, &[1, 30, 1]);
        assert!(a != b && a != c && b != c);
    }
}
