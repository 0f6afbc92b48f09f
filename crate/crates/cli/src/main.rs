use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fringelab::analytic::{coherent_profile, decoherent_profile, eta, AiryMode};
use fringelab::config::{load_config, ReportMode, SetupConfig};
use fringelab::experiment::{crossed_beams_report, full_report_with_planes, Experiment};
use fringelab::io::{write_columns_csv, write_json, write_pgm, write_profile};
use fringelab::photons::{buildup_study, study_profiles, trial_sample, Sampler, SourceKind};
use fringelab::propagation::{run_pipeline, Variant};
use fringelab::wavepacket::{run_scenario, theorem1_check, Scenario};
use fringelab::{Error, VERSION};

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "fringelab", version, about = "Dual-pinhole interferometer, wire-grid and wave-packet simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON configuration; defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form fringe-plane profiles and wire losses.
    Analytic {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dims: Option<u8>,
    },
    /// Run one pipeline variant and write every plane.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "control")]
        variant: String,
        #[arg(long)]
        dims: Option<u8>,
    },
    /// Control, decoherent and coherent runs and the complementarity report.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dims: Option<u8>,
        /// analytic or numeric
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        noise_pct: Option<f64>,
    },
    /// Wave packet against an obstacle.
    Wavepacket {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "hit")]
        scenario: String,
        #[arg(long, default_value_t = 8)]
        frames: usize,
    },
    /// Photon buildup and likelihood-ratio discrimination.
    Photons {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "30,300,3000")]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERIC };
        Failure { code, message: e.to_string() }
    }
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

fn load(common: &Common, dims: Option<u8>) -> Result<SetupConfig, Failure> {
    let mut cfg = match &common.config {
        None => SetupConfig::default(),
        Some(p) => load_config(p).map_err(|e| match e {
            Error::Io(io) => config_failure(format!("cannot read {}: {io}", p.display())),
            other => Failure::from(other),
        })?,
    };
    if let Some(d) = dims {
        cfg.dims = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Creates the output directory and records the resolved config and version.
fn prepare(out: &Path, cfg: &SetupConfig, command: &str) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(Error::from)?;
    write_json(&out.join("config.resolved.json"), cfg)?;
    write_json(
        &out.join("meta.json"),
        &json!({ "tool": "fringelab", "version": VERSION, "command": command }),
    )?;
    Ok(())
}

fn dims_of(cfg: &SetupConfig) -> u8 {
    cfg.dims
}

fn analytic(common: &Common, dims: Option<u8>) -> Result<(), Failure> {
    let cfg = load(common, dims)?;
    prepare(&common.out, &cfg, "analytic")?;
    let geo = cfg.geometry()?;
    let model = geo.fringe_model()?;
    let coh = coherent_profile(&geo.sigma_grid, &model);
    let dec = decoherent_profile(&geo.sigma_grid, &model);
    write_profile(&common.out, "coherent", &coh)?;
    write_profile(&common.out, "decoherent", &dec)?;
    let losses = Experiment::new(&SetupConfig { report_mode: ReportMode::Analytic, ..cfg.clone() })?.analytic_losses()?;
    let paper_text_s = fringelab::analytic::airy_radius(geo.l, geo.wavelength, geo.b, AiryMode::PaperText)?;
    write_json(
        &common.out.join("analytic.json"),
        &json!({
            "fringe_spacing_m": geo.u,
            "airy_radius_m": geo.s,
            "airy_radius_paper_text_m": paper_text_s,
            "wire_centers_m": geo.wires.centers(),
            "wire_thickness_m": geo.wires.thickness(),
            "r_pct": losses.0,
            "r_tilde_pct": losses.1,
            "eta": eta(losses.1, losses.0)?,
            "coherent_flux": coh.total_flux(),
            "decoherent_flux": dec.total_flux(),
            "dims": dims_of(&cfg),
        }),
    )?;
    println!("u = {:.4} mm, s = {:.3} mm, R = {:.4} %, R~ = {:.4} %", geo.u * 1e3, geo.s * 1e3, losses.0, losses.1);
    Ok(())
}

fn simulate(common: &Common, variant: &str, dims: Option<u8>) -> Result<(), Failure> {
    let variant: Variant = variant.parse().map_err(|e: Error| config_failure(e.to_string()))?;
    let cfg = load(common, dims)?;
    prepare(&common.out, &cfg, "simulate")?;
    let set = run_pipeline(&cfg, variant)?;
    for (name, profile) in set.profiles() {
        write_profile(&common.out, name, &profile)?;
    }
    let mut fluxes = serde_json::to_value(set.fluxes.as_map()).map_err(Error::from)?;
    fluxes["variant"] = json!(variant.name());
    if variant == Variant::CrossedBeams {
        fluxes["crossed_beams"] = serde_json::to_value(crossed_beams_report(&cfg)?).map_err(Error::from)?;
    }
    write_json(&common.out.join("fluxes.json"), &fluxes)?;
    println!("{variant}: sigma0 {:e}, blocked {:e}", set.fluxes.sigma0, set.fluxes.blocked);
    Ok(())
}

fn report(common: &Common, dims: Option<u8>, mode: Option<&str>, noise: Option<f64>) -> Result<(), Failure> {
    let mut cfg = load(common, dims)?;
    if let Some(m) = mode {
        cfg.report_mode = match m {
            "analytic" => ReportMode::Analytic,
            "numeric" => ReportMode::Numeric,
            other => return Err(config_failure(format!("unknown report mode '{other}' (analytic | numeric)"))),
        };
    }
    if let Some(n) = noise {
        cfg.noise_pct = n;
    }
    cfg.validate()?;
    prepare(&common.out, &cfg, "report")?;
    let run = full_report_with_planes(&cfg)?;
    for set in &run.planes {
        let dir = common.out.join(set.variant.name());
        fs::create_dir_all(&dir).map_err(Error::from)?;
        for (name, profile) in set.profiles() {
            write_profile(&dir, name, &profile)?;
        }
        write_json(&dir.join("fluxes.json"), &set.fluxes.as_map())?;
    }
    write_json(&common.out.join("report.json"), &run.report)?;
    let r = &run.report;
    println!(
        "R~ = {:.3} %, R = {:.4} %, eta = {:.4}, V = {:.4}, K = {:.5}, V^2+K^2 = {:.4}, violation = {}",
        r.r_tilde_pct, r.r_pct, r.eta, r.v, r.k, r.duality_sum, r.violation
    );
    Ok(())
}

fn wavepacket(common: &Common, scenario: &str, frames: usize) -> Result<(), Failure> {
    let scenario: Scenario = scenario.parse().map_err(|e: Error| config_failure(e.to_string()))?;
    let cfg = load(common, None)?;
    prepare(&common.out, &cfg, "wavepacket")?;
    let run = run_scenario(scenario, &cfg.wavepacket, frames)?;
    for (i, (_, frame)) in run.frames.iter().enumerate() {
        write_pgm(&common.out.join(format!("frame_{i:03}.pgm")), frame.grid(), frame.values())?;
    }
    let pts = &run.trajectory.points;
    let col = |f: fn(&fringelab::wavepacket::TrajectoryPoint) -> f64| pts.iter().map(f).collect::<Vec<f64>>();
    let (t, total, refl, trans, resid) = (
        col(|p| p.time),
        col(|p| p.norm_total),
        col(|p| p.norm_reflected),
        col(|p| p.norm_transmitted),
        col(|p| p.norm_residual),
    );
    write_columns_csv(
        &common.out.join("trajectory.csv"),
        &["t", "norm_total", "norm_reflected", "norm_transmitted", "norm_residual"],
        &[&t, &total, &refl, &trans, &resid],
    )?;
    let check = theorem1_check(&run.trajectory);
    let frame_times: Vec<f64> = run.frames.iter().map(|(t, _)| *t).collect();
    write_json(
        &common.out.join("report.json"),
        &json!({
            "scenario": scenario.name(),
            "report": run.report,
            "theorem1": check,
            "setup": run.setup,
            "frame_times": frame_times,
        }),
    )?;
    println!(
        "{scenario}: transmitted {:.6}, overlap {:.3e}, lobe {:.3e}, theorem1 holds = {}",
        run.report.norm_transmitted, run.report.footprint_overlap, run.report.lobe_score, check.holds
    );
    Ok(())
}

fn photons(common: &Common, counts: &[usize], trials: usize, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load(common, None)?;
    let seed = seed.unwrap_or(cfg.seed);
    prepare(&common.out, &cfg, "photons")?;
    let table = buildup_study(&cfg, counts, trials, seed)?;
    let (coh, dec) = study_profiles(&cfg)?;
    for (source, profile) in [(SourceKind::Coherent, &coh), (SourceKind::Decoherent, &dec)] {
        let sampler = Sampler::new(profile)?;
        for &n in counts {
            let s = trial_sample(&sampler, source, n, seed, 0);
            write_columns_csv(&common.out.join(format!("dots_{source}_{n}.csv")), &["x_m"], &[&s.xs()])?;
        }
    }
    write_json(&common.out.join("accuracy.json"), &table)?;
    for row in &table.rows {
        println!("{:>10} N = {:>5}: accuracy {:.3}", row.source.name(), row.n, row.accuracy);
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Analytic { common, dims } => analytic(common, *dims),
        Command::Simulate { common, variant, dims } => simulate(common, variant, *dims),
        Command::Report { common, dims, mode, noise_pct } => report(common, *dims, mode.as_deref(), *noise_pct),
        Command::Wavepacket { common, scenario, frames } => wavepacket(common, scenario, *frames),
        Command::Photons { common, counts, trials, seed } => photons(common, counts, *trials, *seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
