//! Control, decoherent and coherent runs, the flux ledger, and the
//! complementarity verdict built from them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::analytic::{coherent_profile, decoherent_profile, duality_sum, eta, visibility, which_way_knowledge, wire_loss, DualityMetrics};
use crate::config::{ReportMode, SetupConfig};
use crate::error::{Error, Result};
use crate::field::{ComplexField, Dims, Grid, IrradianceProfile};
use crate::propagation::{
    centroid, crossed_beams_with, crosstalk, fwhm, CrossedBeamsGeometry, Engine, Pinhole, PlaneSet, Variant, WirePlacement,
};

/// Coherent-loss ceiling (percent) below which the WG counts as a no-op.
pub const COHERENT_LOSS_THRESHOLD_PCT: f64 = 0.3;
/// Decoherent-loss floor (percent).
pub const DECOHERENT_LOSS_FLOOR_PCT: f64 = 5.0;
/// Verdict thresholds.
pub const VIOLATION_DUALITY: f64 = 1.01;
pub const VIOLATION_ETA: f64 = 0.9;
pub const NOISE_RESAMPLES: usize = 1000;
/// Samples of the closed-form cut used for analytic R and R̃.
const ANALYTIC_SAMPLES: usize = 40_001;

#[derive(Clone, Debug, Serialize)]
pub struct FluxReport {
    pub variant: Variant,
    /// Φ_C of the reported channel.
    pub phi_control: f64,
    /// Same channel after the WG plane.
    pub phi_after_wg: f64,
    /// δ (coherent) or δ̃ (decoherent) for the reported channel.
    pub delta_blocked: f64,
    /// Everything the WG removed in this run.
    pub delta_total: f64,
    pub r_pct: f64,
    /// Image-plane flux on the channel-1 (x > 0) and channel-2 (x < 0) sides.
    pub phi_image1: f64,
    pub phi_image2: f64,
    pub fwhm: f64,
    pub crosstalk: Option<f64>,
    /// Drop of the reported channel's image flux relative to control.
    pub image_loss_pct: f64,
    pub mode: ReportMode,
}

/// Control per-channel flux at σ₀ and at the image.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ControlChannels {
    /// Φ_C for channels 1 and 2.
    pub phi_c: [f64; 2],
    pub image: [f64; 2],
}

/// All runs of one configuration, sharing the per-pinhole σ₀ fields.
pub struct Experiment {
    pub config: SetupConfig,
    pub engine: Engine,
    sigma0: [ComplexField; 2],
    source_flux: [f64; 2],
}

fn channel_fluxes(image: &IrradianceProfile) -> Result<[f64; 2]> {
    let g = image.grid();
    let (lo, hi) = (g.origin(), g.last());
    Ok([image.flux(0.0, hi)?, image.flux(lo, 0.0)?])
}

fn image_of(set: &PlaneSet) -> Result<IrradianceProfile> {
    set.sigma2
        .as_ref()
        .map(|f| f.irradiance())
        .ok_or(Error::Degenerate("variant has no image plane"))
}

impl Experiment {
    /// Numeric mode uses the configured dims; analytic mode drives the
    /// imaging metrics with the 1D engine.
    pub fn new(config: &SetupConfig) -> Result<Self> {
        config.validate()?;
        let mut cfg = config.clone();
        if cfg.report_mode == ReportMode::Analytic {
            cfg.dims = 1;
        }
        let engine = Engine::new(&cfg)?;
        let mut fields = Vec::with_capacity(2);
        let mut flux = [0.0; 2];
        for p in [Pinhole::One, Pinhole::Two] {
            let src = engine.source_field(crate::propagation::Source::Only(p))?;
            flux[p.index()] = src.total_flux();
            let raw = crate::propagation::fresnel_to_grid(&src, engine.geo.l, engine.geo.sigma_grid)?;
            fields.push(crate::field::apodize(&raw, engine.geo.s)?);
        }
        let two = fields.pop().expect("two fields");
        let one = fields.pop().expect("two fields");
        Ok(Self {
            config: config.clone(),
            engine,
            sigma0: [one, two],
            source_flux: flux,
        })
    }

    pub fn mode(&self) -> ReportMode {
        self.config.report_mode
    }

    pub fn sigma0(&self, which: Pinhole) -> &ComplexField {
        &self.sigma0[which.index()]
    }

    pub fn sigma0_both(&self) -> Result<ComplexField> {
        self.sigma0[0].add(&self.sigma0[1])
    }

    pub fn plane_set(&self, variant: Variant) -> Result<PlaneSet> {
        match variant {
            Variant::NoLens | Variant::LensOnly | Variant::Control | Variant::CoherentWg => {
                self.engine.from_sigma0(variant, self.source_flux[0] + self.source_flux[1], self.sigma0_both()?)
            }
            Variant::DecoherentSim => self.single(Variant::DecoherentSim, Pinhole::Two),
            Variant::CrossedBeams => crossed_beams_with(&CrossedBeamsGeometry::new(&self.config)?, WirePlacement::Minima),
        }
    }

    /// One pinhole open.
    pub fn single(&self, variant: Variant, open: Pinhole) -> Result<PlaneSet> {
        self.engine
            .from_sigma0(variant, self.source_flux[open.index()], self.sigma0[open.index()].clone())
    }

    pub fn control_channels(&self, control: &PlaneSet) -> Result<ControlChannels> {
        let image = channel_fluxes(&image_of(control)?)?;
        let total = image[0] + image[1];
        if !(total > 0.0) {
            return Err(Error::NoFlux("control image is dark"));
        }
        let s0 = control.fluxes.sigma0;
        Ok(ControlChannels {
            phi_c: [s0 * image[0] / total, s0 * image[1] / total],
            image,
        })
    }

    /// Crosstalk of a single-pinhole image into the other channel.
    pub fn single_crosstalk(&self, open: Pinhole) -> Result<f64> {
        let set = self.single(Variant::LensOnly, open)?;
        crosstalk(&image_of(&set)?, 0.0, open.image_side())
    }

    /// Closed-form `(R, R̃)` in percent on the 1D cut over `[−s, s]`.
    pub fn analytic_losses(&self) -> Result<(f64, f64)> {
        let geo = &self.engine.geo;
        let model = geo.fringe_model()?;
        let g = Grid::new(-geo.s, 2.0 * geo.s / (ANALYTIC_SAMPLES - 1) as f64, ANALYTIC_SAMPLES, Dims::One)?;
        let coh = coherent_profile(&g, &model);
        let dec = decoherent_profile(&g, &model);
        let r = 100.0 * wire_loss(&coh, &geo.wires)? / coh.total_flux();
        let rt = 100.0 * wire_loss(&dec, &geo.wires)? / dec.total_flux();
        Ok((r, rt))
    }

    fn report(&self, set: &PlaneSet, control: &ControlChannels, channel: Pinhole, analytic_r: Option<f64>) -> Result<FluxReport> {
        let k = channel.index();
        let image = image_of(set)?;
        let sides = channel_fluxes(&image)?;
        let coherent = set.variant != Variant::DecoherentSim;
        let share = if coherent { control.phi_c[k] / (control.phi_c[0] + control.phi_c[1]) } else { 1.0 };
        let phi_control = control.phi_c[k];
        let delta_total = set.fluxes.blocked;
        let delta_blocked = match analytic_r {
            Some(r) => r / 100.0 * phi_control,
            None => delta_total * share,
        };
        let phi_after_wg = match analytic_r {
            Some(_) => phi_control - delta_blocked,
            None => set.fluxes.sigma1 * share,
        };
        Ok(FluxReport {
            variant: set.variant,
            phi_control,
            phi_after_wg,
            delta_blocked,
            delta_total,
            r_pct: 100.0 * delta_blocked / phi_control,
            phi_image1: sides[0],
            phi_image2: sides[1],
            fwhm: fwhm(&image)?,
            crosstalk: None,
            image_loss_pct: 100.0 * (1.0 - sides[k] / control.image[k]),
            mode: self.mode(),
        })
    }

    pub fn control(&self) -> Result<(PlaneSet, ControlChannels, FluxReport)> {
        let set = self.plane_set(Variant::Control)?;
        let ch = self.control_channels(&set)?;
        let mut rep = self.report(&set, &ch, Pinhole::Two, self.analytic_r(0.0))?;
        let xt = [self.single_crosstalk(Pinhole::One)?, self.single_crosstalk(Pinhole::Two)?];
        rep.crosstalk = Some(0.5 * (xt[0] + xt[1]));
        Ok((set, ch, rep))
    }

    fn analytic_r(&self, value: f64) -> Option<f64> {
        (self.mode() == ReportMode::Analytic).then_some(value)
    }

    /// Pinhole `open` alone with the WG; reported against `open`'s Φ_C.
    pub fn decoherent(&self, control: &ControlChannels, open: Pinhole) -> Result<(PlaneSet, FluxReport)> {
        let set = self.single(Variant::DecoherentSim, open)?;
        let analytic = match self.mode() {
            ReportMode::Analytic => Some(self.analytic_losses()?.1),
            ReportMode::Numeric => None,
        };
        let mut rep = self.report(&set, control, open, analytic)?;
        if analytic.is_none() {
            // δ̃ is all the blocked light of the open pinhole
            rep.delta_blocked = set.fluxes.blocked;
            rep.phi_after_wg = set.fluxes.sigma1;
            rep.r_pct = 100.0 * rep.delta_blocked / rep.phi_control;
        }
        rep.crosstalk = Some(crosstalk(&image_of(&set)?, 0.0, open.image_side())?);
        Ok((set, rep))
    }

    pub fn coherent(&self, control: &ControlChannels) -> Result<(PlaneSet, FluxReport)> {
        let set = self.plane_set(Variant::CoherentWg)?;
        let analytic = match self.mode() {
            ReportMode::Analytic => Some(self.analytic_losses()?.0),
            ReportMode::Numeric => None,
        };
        let rep = self.report(&set, control, Pinhole::Two, analytic)?;
        Ok((set, rep))
    }

    /// V on the control fringe plane: centre peak against the `u/2` valley
    /// along the x-cut through y = 0.
    pub fn fringe_visibility(&self, control: &PlaneSet) -> Result<f64> {
        let prof = control.sigma1.irradiance();
        let cut = match prof.grid().dims() {
            Dims::One => prof,
            Dims::Two => prof.x_cut(0.0),
        };
        let u = self.engine.geo.u;
        let peak = cut.interpolate(0.0);
        let valley = 0.5 * (cut.interpolate(u / 2.0) + cut.interpolate(-u / 2.0));
        visibility(peak, valley)
    }
}

/// Percentile interval of a noisy quantity.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseSummary {
    pub noise_pct: f64,
    pub resamples: usize,
    pub seed: u64,
    pub generator: &'static str,
    pub r_pct: Interval,
    pub r_tilde_pct: Interval,
    pub eta: Interval,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, t) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - t) + sorted[i + 1] * t
    } else {
        sorted[i]
    }
}

/// Adds independent Gaussian noise of `noise_pct` percentage points (σ as
/// a percentage of Φ_C) to R and R̃ and reports 2.5–97.5 percentiles.
pub fn noise_intervals(r_pct: f64, r_tilde_pct: f64, noise_pct: f64, seed: u64, resamples: usize) -> Result<NoiseSummary> {
    if !(noise_pct > 0.0) || resamples < 2 {
        return Err(Error::invalid("noise_pct", "noise study needs noise_pct > 0 and at least two resamples"));
    }
    let normal = Normal::new(0.0, noise_pct).map_err(|e| Error::invalid("noise_pct", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut rs, mut rts, mut etas) = (Vec::with_capacity(resamples), Vec::with_capacity(resamples), Vec::with_capacity(resamples));
    for _ in 0..resamples {
        let r = r_pct + normal.sample(&mut rng);
        let rt = r_tilde_pct + normal.sample(&mut rng);
        rs.push(r);
        rts.push(rt);
        if let Ok(e) = eta(rt, r) {
            etas.push(e);
        }
    }
    let interval = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        Interval {
            lo: percentile(v, 0.025),
            hi: percentile(v, 0.975),
        }
    };
    Ok(NoiseSummary {
        noise_pct,
        resamples,
        seed,
        generator: "ChaCha8Rng",
        r_pct: interval(&mut rs),
        r_tilde_pct: interval(&mut rts),
        eta: interval(&mut etas),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ComplementarityVerdict {
    pub v: f64,
    pub k: f64,
    pub eta: f64,
    pub duality_sum: f64,
    /// What complementarity predicts for η.
    pub pc_prediction_eta: f64,
    pub violation: bool,
}

impl ComplementarityVerdict {
    pub fn new(v: f64, k: f64, eta: f64) -> Result<Self> {
        let m = DualityMetrics::new(v, k, eta)?;
        Ok(Self {
            v: m.v,
            k: m.k,
            eta,
            duality_sum: m.duality_sum,
            pc_prediction_eta: 0.0,
            violation: m.duality_sum > VIOLATION_DUALITY && eta > VIOLATION_ETA,
        })
    }
}

/// `report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub phi_c: f64,
    pub r_pct: f64,
    pub r_tilde_pct: f64,
    pub eta: f64,
    pub v: f64,
    pub k: f64,
    pub duality_sum: f64,
    pub violation: bool,
    pub resolution_control_m: f64,
    pub resolution_decoherent_m: f64,
    pub crosstalk: f64,
    pub mode: ReportMode,
    /// Dimensionality of the numeric runs behind the imaging metrics.
    pub dims: u8,
    pub pc_prediction_eta: f64,
    /// V inferred from fluxes: `(1 − R/R̃)/sinc(e/u)`, clamped to [0, 1].
    pub v_from_flux: f64,
    pub resolution_coherent_m: f64,
    pub rayleigh_m: f64,
    pub image_distance_m: f64,
    pub image_distance_thin_lens_m: f64,
    pub image_separation_m: f64,
    pub lens_note: String,
    pub noise: Option<NoiseSummary>,
    pub runs: Vec<FluxReport>,
}

/// Everything computed by [`full_report_with_planes`].
pub struct FullRun {
    pub report: Report,
    pub verdict: ComplementarityVerdict,
    pub planes: Vec<PlaneSet>,
}

/// V inferred from the two losses, assuming irradiance `D(1 + V cos)` with
/// the wires centred on the cosine minima.
pub fn visibility_from_losses(r_pct: f64, r_tilde_pct: f64, e: f64, u: f64) -> f64 {
    if !(r_tilde_pct > 0.0) {
        return 0.0;
    }
    let t = std::f64::consts::PI * e / u;
    let sinc = if t == 0.0 { 1.0 } else { t.sin() / t };
    ((1.0 - r_pct / r_tilde_pct) / sinc).clamp(0.0, 1.0)
}

pub fn run_control(config: &SetupConfig) -> Result<FluxReport> {
    Ok(Experiment::new(config)?.control()?.2)
}

pub fn run_decoherent(config: &SetupConfig) -> Result<FluxReport> {
    let x = Experiment::new(config)?;
    let (_, ch, _) = x.control()?;
    Ok(x.decoherent(&ch, Pinhole::Two)?.1)
}

pub fn run_coherent(config: &SetupConfig) -> Result<FluxReport> {
    let x = Experiment::new(config)?;
    let (_, ch, _) = x.control()?;
    Ok(x.coherent(&ch)?.1)
}

pub fn full_report(config: &SetupConfig) -> Result<ComplementarityVerdict> {
    Ok(full_report_with_planes(config)?.verdict)
}

pub fn full_report_with_planes(config: &SetupConfig) -> Result<FullRun> {
    let x = Experiment::new(config)?;
    let geo = &x.engine.geo;
    let (control_set, ch, control) = x.control()?;
    let (dec_set, dec) = x.decoherent(&ch, Pinhole::Two)?;
    let (coh_set, coh) = x.coherent(&ch)?;

    let v = x.fringe_visibility(&control_set)?;
    let xt = control.crosstalk.expect("control records crosstalk");
    let k = which_way_knowledge(1.0 - xt, xt)?;
    let e = eta(dec.r_pct, coh.r_pct)?;
    let verdict = ComplementarityVerdict::new(v, k, e)?;
    debug_assert_eq!(duality_sum(verdict.v, verdict.k)?.value, verdict.duality_sum);
    let noise = if config.noise_pct > 0.0 {
        Some(noise_intervals(coh.r_pct, dec.r_pct, config.noise_pct, config.seed, NOISE_RESAMPLES)?)
    } else {
        None
    };
    let lens_note = format!(
        "image distance q = {:.4} m ({}); the thin-lens equation with p = {} m and f = {} m gives {:.4} m, \
         while the stated q = 1.38 m does not satisfy it",
        geo.q,
        match config.image_distance_mode {
            crate::config::ImageDistanceMode::ThinLens => "thin_lens",
            crate::config::ImageDistanceMode::Pinned => "pinned",
        },
        geo.p,
        geo.f,
        geo.q_thin_lens,
    );
    let report = Report {
        phi_c: ch.phi_c[Pinhole::Two.index()],
        r_pct: coh.r_pct,
        r_tilde_pct: dec.r_pct,
        eta: verdict.eta,
        v: verdict.v,
        k: verdict.k,
        duality_sum: verdict.duality_sum,
        violation: verdict.violation,
        resolution_control_m: control.fwhm,
        resolution_decoherent_m: dec.fwhm,
        crosstalk: xt,
        mode: config.report_mode,
        dims: match geo.dims {
            Dims::One => 1,
            Dims::Two => 2,
        },
        pc_prediction_eta: verdict.pc_prediction_eta,
        v_from_flux: visibility_from_losses(coh.r_pct, dec.r_pct, geo.wires.thickness(), geo.u),
        resolution_coherent_m: coh.fwhm,
        rayleigh_m: geo.rayleigh(),
        image_distance_m: geo.q,
        image_distance_thin_lens_m: geo.q_thin_lens,
        image_separation_m: geo.image_separation(),
        lens_note,
        noise,
        runs: vec![control, dec, coh],
    };
    Ok(FullRun {
        report,
        verdict,
        planes: vec![control_set, dec_set, coh_set],
    })
}

/// Centroids of the two Σ₂ spots (x < 0 and x > 0).
fn spot_centroids(set: &PlaneSet) -> Result<[f64; 2]> {
    let img = image_of(set)?;
    let g = img.grid();
    Ok([centroid(&img, g.origin(), 0.0)?, centroid(&img, 0.0, g.last())?])
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossedBeamsReport {
    /// Wires at the Σ₁ minima, against the wire-free run.
    pub flux: FluxReport,
    pub blocked_pct_minima: f64,
    pub blocked_pct_maxima: f64,
    pub ray_centers_m: [f64; 2],
    pub centroids_free_m: [f64; 2],
    pub centroids_minima_m: [f64; 2],
    pub spot_separation_m: f64,
    /// Largest centroid shift with wires at the minima over the spot separation.
    pub centroid_shift_fraction: f64,
}

pub fn crossed_beams_report(config: &SetupConfig) -> Result<CrossedBeamsReport> {
    config.validate()?;
    let cb = CrossedBeamsGeometry::new(config)?;
    let free = crossed_beams_with(&cb, WirePlacement::None)?;
    let minima = crossed_beams_with(&cb, WirePlacement::Minima)?;
    let maxima = crossed_beams_with(&cb, WirePlacement::Maxima)?;
    let c_free = spot_centroids(&free)?;
    let c_min = spot_centroids(&minima)?;
    let sep = c_free[1] - c_free[0];
    let shift = (c_min[0] - c_free[0]).abs().max((c_min[1] - c_free[1]).abs());
    let img_free = channel_fluxes(&image_of(&free)?)?;
    let img_min = image_of(&minima)?;
    let sides = channel_fluxes(&img_min)?;
    let phi = minima.fluxes.sigma0;
    let flux = FluxReport {
        variant: Variant::CrossedBeams,
        phi_control: phi,
        phi_after_wg: minima.fluxes.sigma1,
        delta_blocked: minima.fluxes.blocked,
        delta_total: minima.fluxes.blocked,
        r_pct: 100.0 * minima.fluxes.blocked / phi,
        phi_image1: sides[1],
        phi_image2: sides[0],
        fwhm: fwhm(&img_min)?,
        crosstalk: None,
        image_loss_pct: 100.0 * (1.0 - (sides[0] + sides[1]) / (img_free[0] + img_free[1])),
        mode: ReportMode::Numeric,
    };
    Ok(CrossedBeamsReport {
        flux,
        blocked_pct_minima: 100.0 * minima.fluxes.blocked / minima.fluxes.sigma0,
        blocked_pct_maxima: 100.0 * maxima.fluxes.blocked / maxima.fluxes.sigma0,
        ray_centers_m: cb.ray_centers(),
        centroids_free_m: c_free,
        centroids_minima_m: c_min,
        spot_separation_m: sep,
        centroid_shift_fraction: shift / sep,
    })
}
