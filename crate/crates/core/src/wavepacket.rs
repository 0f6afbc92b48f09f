//! 2D time-dependent Schrödinger equation (ħ = m = 1) for a Gaussian packet
//! meeting an impenetrable rectangular obstacle.
//!
//! Time stepping is Strang-split Crank–Nicolson: a half step along x, a
//! full step along y, a half step along x. Each sweep is the Cayley form
//! `(1 + iτH/2)⁻¹(1 − iτH/2)` of a real symmetric 1D Laplacian with
//! Dirichlet rows for obstacle cells and the domain edges, so every sweep
//! is exactly unitary and obstacle cells stay exactly zero.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Dims, Grid, IrradianceProfile};

/// `dt ≤ DT_MAX_FACTOR · h²`. Crank–Nicolson is unconditionally stable; the
/// bound keeps the phase error of the fastest resolved modes small.
pub const DT_MAX_FACTOR: f64 = 0.5;

/// Per-step norm drift that aborts a run.
pub const INSTABILITY_DRIFT: f64 = 1e-4;

/// Tolerance of [`theorem1_check`].
pub const THEOREM1_EPS: f64 = 1e-3;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WavepacketConfig {
    pub grid_samples: usize,
    pub cells_per_wavelength: usize,
    /// FWHM of the initial |ψ|² in de Broglie wavelengths.
    pub packet_fwhm_wavelengths: f64,
    /// Transverse obstacle size `e`.
    pub obstacle_width_wavelengths: f64,
    /// Obstacle size along the direction of travel.
    pub obstacle_depth_wavelengths: f64,
    /// Packet start, measured from the left grid edge.
    pub packet_start_wavelengths: f64,
    /// Obstacle front face, measured from the left grid edge.
    pub obstacle_front_wavelengths: f64,
    /// `dt = dt_factor · h²`.
    pub dt_factor: f64,
    /// Gap between the packet axis and the near obstacle edge, in transverse
    /// rms widths, for the graze scenario.
    pub graze_edge_sigmas: f64,
    /// Same, for the miss scenario.
    pub miss_edge_sigmas: f64,
    /// The run stops once the free-packet centroid is this many rms widths
    /// past the obstacle's back face.
    pub clearance_sigmas: f64,
}

impl Default for WavepacketConfig {
    fn default() -> Self {
        Self {
            grid_samples: 512,
            cells_per_wavelength: 4,
            packet_fwhm_wavelengths: 8.0,
            obstacle_width_wavelengths: 30.0,
            obstacle_depth_wavelengths: 4.0,
            packet_start_wavelengths: 25.0,
            obstacle_front_wavelengths: 50.0,
            dt_factor: 0.25,
            graze_edge_sigmas: 1.0,
            miss_edge_sigmas: 6.0,
            clearance_sigmas: 4.5,
        }
    }
}

impl WavepacketConfig {
    /// Grid pitch in units where λ_dB = 1.
    pub fn spacing(&self) -> f64 {
        1.0 / self.cells_per_wavelength as f64
    }

    /// rms width of the initial |ψ|².
    pub fn sigma(&self) -> f64 {
        self.packet_fwhm_wavelengths / (8.0 * 2f64.ln()).sqrt()
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::centered(self.grid_samples, self.spacing(), Dims::Two)
    }

    pub fn dt(&self) -> f64 {
        self.dt_factor * self.spacing().powi(2)
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("packet_fwhm_wavelengths", self.packet_fwhm_wavelengths),
            ("obstacle_width_wavelengths", self.obstacle_width_wavelengths),
            ("obstacle_depth_wavelengths", self.obstacle_depth_wavelengths),
            ("dt_factor", self.dt_factor),
            ("clearance_sigmas", self.clearance_sigmas),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if self.cells_per_wavelength < 2 {
            return Err(Error::invalid("cells_per_wavelength", "need at least 2"));
        }
        if self.obstacle_front_wavelengths <= self.packet_start_wavelengths {
            return Err(Error::invalid("obstacle_front_wavelengths", "obstacle must lie ahead of the packet"));
        }
        Ok(())
    }
}

/// Axis-aligned Dirichlet rectangle: `depth` along x (travel), `width` along y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Obstacle {
    pub x_center: f64,
    pub y_center: f64,
    pub width: f64,
    pub depth: f64,
}

impl Obstacle {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let tol = 1e-9;
        (x - self.x_center).abs() <= 0.5 * self.depth + tol && (y - self.y_center).abs() <= 0.5 * self.width + tol
    }

    pub fn front(&self) -> f64 {
        self.x_center - 0.5 * self.depth
    }

    pub fn back(&self) -> f64 {
        self.x_center + 0.5 * self.depth
    }
}

fn obstacle_cells(grid: &Grid, obstacle: Option<&Obstacle>) -> Vec<bool> {
    let n = grid.len();
    let xs = grid.coords();
    let mut cells = vec![false; n * n];
    if let Some(o) = obstacle {
        for iy in 0..n {
            for ix in 0..n {
                cells[iy * n + ix] = o.contains(xs[ix], xs[iy]);
            }
        }
    }
    cells
}

/// Wavefunction at one time, with the obstacle it evolves against.
#[derive(Clone, Debug)]
pub struct PacketState {
    pub field: ComplexField,
    pub time: f64,
    pub obstacle: Option<Obstacle>,
}

impl PacketState {
    pub fn norm(&self) -> f64 {
        self.field.norm_sq()
    }

    /// `⟨x⟩, ⟨y⟩`.
    pub fn centroid(&self) -> (f64, f64) {
        let g = self.field.grid();
        let n = g.len();
        let xs = g.coords();
        let (mut m0, mut mx, mut my) = (0.0, 0.0, 0.0);
        for (k, v) in self.field.values().iter().enumerate() {
            let p = v.norm_sqr();
            m0 += p;
            mx += p * xs[k % n];
            my += p * xs[k / n];
        }
        (mx / m0, my / m0)
    }

    /// `⟨(y − ⟨y⟩)²⟩`.
    pub fn variance_y(&self) -> f64 {
        let g = self.field.grid();
        let n = g.len();
        let xs = g.coords();
        let (_, cy) = self.centroid();
        let (mut m0, mut m2) = (0.0, 0.0);
        for (k, v) in self.field.values().iter().enumerate() {
            let p = v.norm_sqr();
            m0 += p;
            m2 += p * (xs[k / n] - cy).powi(2);
        }
        m2 / m0
    }

    /// Largest |ψ| over obstacle cells.
    pub fn max_on_obstacle(&self) -> f64 {
        let cells = obstacle_cells(self.field.grid(), self.obstacle.as_ref());
        self.field
            .values()
            .iter()
            .zip(cells)
            .filter(|(_, c)| *c)
            .map(|(v, _)| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn conjugated(&self) -> Self {
        let values = self.field.values().iter().map(|v| v.conj()).collect();
        Self {
            field: ComplexField::from_parts_unchecked(*self.field.grid(), self.field.wavelength(), values),
            time: self.time,
            obstacle: self.obstacle,
        }
    }
}

/// Normalized Gaussian `exp(−(x−x₀)²/4σx² − (y−y₀)²/4σy² + ik₀x)` with rms
/// widths `widths` of |ψ|²; obstacle cells are set to zero.
pub fn init_gaussian(
    grid: Grid,
    center: (f64, f64),
    widths: (f64, f64),
    k0: f64,
    obstacle: Option<Obstacle>,
) -> Result<PacketState> {
    init_superposition(grid, &[(center, widths, k0, Complex64::new(1.0, 0.0))], obstacle)
}

/// Normalized sum of Gaussians `(center, widths, k0, weight)`.
pub fn init_superposition(
    grid: Grid,
    packets: &[((f64, f64), (f64, f64), f64, Complex64)],
    obstacle: Option<Obstacle>,
) -> Result<PacketState> {
    if grid.dims() != Dims::Two {
        return Err(Error::invalid("grid", "wave packets live on 2D grids"));
    }
    for &(_, (sx, sy), _, _) in packets {
        if !(sx > 0.0 && sy > 0.0) {
            return Err(Error::invalid("packet width", "must be > 0"));
        }
    }
    let raw = ComplexField::from_fn(grid, 1.0, |x, y| {
        packets
            .iter()
            .map(|&((x0, y0), (sx, sy), k0, w)| {
                let env = (-(x - x0).powi(2) / (4.0 * sx * sx) - (y - y0).powi(2) / (4.0 * sy * sy)).exp();
                w * Complex64::from_polar(env, k0 * x)
            })
            .sum()
    })?;
    let cells = obstacle_cells(&grid, obstacle.as_ref());
    let h2 = grid.cell_measure();
    let total: f64 = raw.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * h2;
    if total == 0.0 {
        return Err(Error::NoFlux("initial packet vanishes on the grid"));
    }
    let overlap: f64 = raw
        .values()
        .iter()
        .zip(&cells)
        .filter(|(_, c)| **c)
        .map(|(v, _)| v.norm_sqr())
        .sum::<f64>()
        * h2
        / total;
    if overlap >= 1e-10 {
        return Err(Error::PacketOverlap(overlap));
    }
    let scale = 1.0 / total.sqrt();
    let values = raw
        .values()
        .iter()
        .zip(&cells)
        .map(|(v, c)| if *c { ZERO } else { v * scale })
        .collect();
    Ok(PacketState {
        field: ComplexField::from_parts_unchecked(grid, 1.0, values),
        time: 0.0,
        obstacle,
    })
}

/// Thomas factors for one direction and sub-step: per cell `c'` and the
/// reciprocal pivot, laid out like the field.
struct Sweep {
    r: f64,
    cp: Vec<Complex64>,
    inv: Vec<Complex64>,
}

impl Sweep {
    /// `along_x`: lines are rows; otherwise columns.
    fn new(n: usize, blocked: &[bool], tau: f64, h: f64, along_x: bool) -> Self {
        let r = tau / (4.0 * h * h);
        let off = Complex64::new(0.0, -r);
        let diag = Complex64::new(1.0, 2.0 * r);
        let mut cp = vec![ZERO; n * n];
        let mut inv = vec![ZERO; n * n];
        for line in 0..n {
            let idx = |k: usize| if along_x { line * n + k } else { k * n + line };
            let mut prev_cp = ZERO;
            for k in 0..n {
                let i = idx(k);
                if blocked[i] {
                    cp[i] = ZERO;
                    inv[i] = Complex64::new(1.0, 0.0);
                    prev_cp = ZERO;
                    continue;
                }
                let a = if k == 0 { ZERO } else { off };
                let c = if k + 1 == n { ZERO } else { off };
                let piv = (diag - a * prev_cp).inv();
                cp[i] = c * piv;
                inv[i] = piv;
                prev_cp = cp[i];
            }
        }
        Self { r, cp, inv }
    }
}

/// Precomputed split-step propagator for one grid, obstacle and `dt`.
pub struct Propagator {
    n: usize,
    blocked: Vec<bool>,
    half_x: Sweep,
    full_y: Sweep,
    dt: f64,
    line: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl Propagator {
    pub fn new(grid: &Grid, obstacle: Option<&Obstacle>, dt: f64) -> Result<Self> {
        let h = grid.spacing();
        let max = DT_MAX_FACTOR * h * h;
        if !(dt > 0.0) || dt > max {
            return Err(Error::TimeStep { dt, max });
        }
        let n = grid.len();
        let blocked = obstacle_cells(grid, obstacle);
        Ok(Self {
            n,
            half_x: Sweep::new(n, &blocked, dt / 2.0, h, true),
            full_y: Sweep::new(n, &blocked, dt, h, false),
            blocked,
            dt,
            line: vec![ZERO; n],
            work: vec![ZERO; n * n],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn sweep_x(&mut self, psi: &mut [Complex64], half: bool) {
        let s = if half { &self.half_x } else { &self.full_y };
        let n = self.n;
        let ir = Complex64::new(0.0, s.r);
        let d0 = Complex64::new(1.0, -2.0 * s.r);
        let off = Complex64::new(0.0, -s.r);
        for row in 0..n {
            let base = row * n;
            let p = &mut psi[base..base + n];
            let blocked = &self.blocked[base..base + n];
            let cp = &s.cp[base..base + n];
            let inv = &s.inv[base..base + n];
            let d = &mut self.line;
            // explicit half and forward elimination
            let mut prev = ZERO;
            let mut prev_blocked = true;
            for k in 0..n {
                if blocked[k] {
                    d[k] = ZERO;
                    prev = ZERO;
                    prev_blocked = true;
                    continue;
                }
                let left = if k > 0 { p[k - 1] } else { ZERO };
                let right = if k + 1 < n { p[k + 1] } else { ZERO };
                let rhs = d0 * p[k] + ir * (left + right);
                let a = if k == 0 || prev_blocked && k > 0 && blocked[k - 1] { ZERO } else { off };
                d[k] = (rhs - a * prev) * inv[k];
                prev = d[k];
                prev_blocked = false;
            }
            // back substitution
            let mut next = ZERO;
            for k in (0..n).rev() {
                let v = d[k] - cp[k] * next;
                p[k] = v;
                next = v;
            }
        }
    }

    fn sweep_y(&mut self, psi: &mut [Complex64]) {
        let s = &self.full_y;
        let n = self.n;
        let ir = Complex64::new(0.0, s.r);
        let d0 = Complex64::new(1.0, -2.0 * s.r);
        let off = Complex64::new(0.0, -s.r);
        let d = &mut self.work;
        for iy in 0..n {
            let base = iy * n;
            for ix in 0..n {
                let i = base + ix;
                if self.blocked[i] {
                    d[i] = ZERO;
                    continue;
                }
                let up = if iy > 0 { psi[i - n] } else { ZERO };
                let down = if iy + 1 < n { psi[i + n] } else { ZERO };
                let rhs = d0 * psi[i] + ir * (up + down);
                let prev = if iy > 0 { d[i - n] } else { ZERO };
                // the pivot of a blocked predecessor is 1 and its d is 0
                d[i] = (rhs - off * prev) * s.inv[i];
            }
        }
        for ix in 0..n {
            psi[(n - 1) * n + ix] = d[(n - 1) * n + ix];
        }
        for iy in (0..n - 1).rev() {
            let base = iy * n;
            for ix in 0..n {
                let i = base + ix;
                psi[i] = d[i] - s.cp[i] * psi[i + n];
            }
        }
    }

    /// Advances `psi` (row-major, `n × n`) by one `dt` in place.
    pub fn advance(&mut self, psi: &mut [Complex64]) {
        self.sweep_x(psi, true);
        self.sweep_y(psi);
        self.sweep_x(psi, true);
    }
}

/// One time step; errors if `dt` is out of bounds or the norm drifts by
/// more than [`INSTABILITY_DRIFT`].
pub fn step(state: &PacketState, dt: f64) -> Result<PacketState> {
    let mut prop = Propagator::new(state.field.grid(), state.obstacle.as_ref(), dt)?;
    let mut values = state.field.values().to_vec();
    prop.advance(&mut values);
    let next = PacketState {
        field: ComplexField::from_parts_unchecked(*state.field.grid(), state.field.wavelength(), values),
        time: state.time + dt,
        obstacle: state.obstacle,
    };
    check_drift(state.norm(), next.norm(), next.time)?;
    Ok(next)
}

fn check_drift(before: f64, after: f64, time: f64) -> Result<()> {
    let drift = (after / before - 1.0).abs();
    if !(drift <= INSTABILITY_DRIFT) {
        return Err(Error::Instability { time, drift });
    }
    Ok(())
}

/// Evolves `steps` steps; `on_step` sees every intermediate state.
pub fn evolve(
    state: &PacketState,
    dt: f64,
    steps: usize,
    mut on_step: impl FnMut(usize, f64, &[Complex64]),
) -> Result<PacketState> {
    let grid = *state.field.grid();
    let mut prop = Propagator::new(&grid, state.obstacle.as_ref(), dt)?;
    let mut psi = state.field.values().to_vec();
    let h2 = grid.cell_measure();
    let mut norm = state.norm();
    let mut t = state.time;
    for s in 1..=steps {
        prop.advance(&mut psi);
        t += dt;
        let now = psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * h2;
        check_drift(norm, now, t)?;
        norm = now;
        on_step(s, t, &psi);
    }
    Ok(PacketState {
        field: ComplexField::from_parts_unchecked(grid, state.field.wavelength(), psi),
        time: t,
        obstacle: state.obstacle,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Hit,
    Graze,
    Miss,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Hit, Scenario::Graze, Scenario::Miss];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Hit => "hit",
            Scenario::Graze => "graze",
            Scenario::Miss => "miss",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid("scenario", format!("unknown scenario '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub norm_total: f64,
    /// x below the obstacle front face.
    pub norm_reflected: f64,
    /// x above the obstacle back face.
    pub norm_transmitted: f64,
    /// The slab beside the obstacle.
    pub norm_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PacketTrajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Time-integrated |ψ|² on the line just upstream of the obstacle,
    /// over the obstacle's transverse span and over the full line.
    pub footprint_span: f64,
    pub footprint_line: f64,
}

impl PacketTrajectory {
    pub fn footprint_overlap(&self) -> f64 {
        if self.footprint_line > 0.0 {
            self.footprint_span / self.footprint_line
        } else {
            0.0
        }
    }

    pub fn initial(&self) -> &TrajectoryPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory has at least the initial point")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AttenuationReport {
    pub norm_initial: f64,
    pub norm_final: f64,
    pub norm_transmitted: f64,
    pub norm_reflected: f64,
    pub norm_residual: f64,
    /// `1 − norm_transmitted/norm_initial`.
    pub attenuation: f64,
    pub footprint_overlap: f64,
    pub lobe_score: f64,
    pub steps: usize,
    pub time: f64,
}

/// Per-run geometry derived from a [`WavepacketConfig`].
#[derive(Clone, Debug, Serialize)]
pub struct ScenarioSetup {
    pub obstacle: Obstacle,
    pub center: (f64, f64),
    pub sigma: f64,
    pub k0: f64,
    pub dt: f64,
    pub steps: usize,
    pub offset: f64,
}

/// Discrete group velocity `sin(k₀h)/h`.
pub fn group_velocity(k0: f64, h: f64) -> f64 {
    (k0 * h).sin() / h
}

/// rms width of a free Gaussian after time `t`.
pub fn free_sigma(sigma0: f64, t: f64) -> f64 {
    sigma0 * (1.0 + (t / (2.0 * sigma0 * sigma0)).powi(2)).sqrt()
}

impl ScenarioSetup {
    pub fn new(cfg: &WavepacketConfig, scenario: Scenario) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let h = grid.spacing();
        let left = grid.origin();
        let sigma = cfg.sigma();
        let k0 = 2.0 * PI;
        let dt = cfg.dt();
        let front = left + cfg.obstacle_front_wavelengths;
        let depth = cfg.obstacle_depth_wavelengths;
        let width = cfg.obstacle_width_wavelengths;
        let start = left + cfg.packet_start_wavelengths;
        let v = group_velocity(k0, h);
        let t_end = (front + depth + cfg.clearance_sigmas * sigma - start) / v;
        let sigma_end = free_sigma(sigma, t_end);
        let offset = match scenario {
            Scenario::Hit => 0.0,
            Scenario::Graze => 0.5 * width + cfg.graze_edge_sigmas * sigma_end,
            Scenario::Miss => 0.5 * width + cfg.miss_edge_sigmas * sigma_end,
        };
        let obstacle = Obstacle {
            x_center: front + 0.5 * depth - 0.5 * h,
            y_center: offset,
            width,
            depth: depth - h,
        };
        if grid.last() < offset + 0.5 * width + h || grid.last() < 4.0 * sigma_end {
            return Err(Error::invalid("grid_samples", "obstacle offset does not fit on the grid"));
        }
        Ok(Self {
            obstacle,
            center: (start, 0.0),
            sigma,
            k0,
            dt,
            steps: (t_end / dt).ceil() as usize,
            offset,
        })
    }
}

/// Outcome of [`run_scenario`].
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub setup: ScenarioSetup,
    pub trajectory: PacketTrajectory,
    pub report: AttenuationReport,
    pub initial: PacketState,
    pub final_state: PacketState,
    pub frames: Vec<(f64, IrradianceProfile)>,
}

pub fn run_scenario(scenario: Scenario, cfg: &WavepacketConfig, frames: usize) -> Result<ScenarioRun> {
    let setup = ScenarioSetup::new(cfg, scenario)?;
    let grid = cfg.grid()?;
    let state = init_gaussian(grid, setup.center, (setup.sigma, setup.sigma), setup.k0, Some(setup.obstacle))?;
    run_state(setup, state, frames)
}

/// Runs a prepared initial state for `setup.steps` steps and measures it
/// against `setup.obstacle`.
pub fn run_state(setup: ScenarioSetup, initial: PacketState, frames: usize) -> Result<ScenarioRun> {
    let grid = *initial.field.grid();
    let n = grid.len();
    let h = grid.spacing();
    let h2 = h * h;
    let xs = grid.coords();
    let ob = setup.obstacle;
    let blocked = obstacle_cells(&grid, Some(&ob));
    // columns touched by the obstacle
    let cols: Vec<usize> = (0..n).filter(|&ix| (0..n).any(|iy| blocked[iy * n + ix])).collect();
    let (first_col, last_col) = match (cols.first(), cols.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Degenerate("obstacle covers no grid cell")),
    };
    let span_rows: Vec<bool> = (0..n).map(|iy| (first_col..=last_col).any(|ix| blocked[iy * n + ix])).collect();
    let probe = first_col.saturating_sub(1);

    let partition = |t: f64, psi: &[Complex64]| -> TrajectoryPoint {
        let (mut refl, mut trans, mut resid) = (0.0, 0.0, 0.0);
        for iy in 0..n {
            let row = &psi[iy * n..(iy + 1) * n];
            refl += row[..first_col].iter().map(|v| v.norm_sqr()).sum::<f64>();
            resid += row[first_col..=last_col].iter().map(|v| v.norm_sqr()).sum::<f64>();
            trans += row[last_col + 1..].iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
        TrajectoryPoint {
            time: t,
            norm_total: (refl + trans + resid) * h2,
            norm_reflected: refl * h2,
            norm_transmitted: trans * h2,
            norm_residual: resid * h2,
        }
    };
    let mut span = 0.0;
    let mut line = 0.0;
    let mut accumulate = |psi: &[Complex64]| {
        for iy in 0..n {
            let p = psi[iy * n + probe].norm_sqr();
            line += p;
            if span_rows[iy] {
                span += p;
            }
        }
    };

    let mut points = vec![partition(initial.time, initial.field.values())];
    accumulate(initial.field.values());
    let frame_every = if frames > 0 { (setup.steps / frames).max(1) } else { usize::MAX };
    let mut snaps = Vec::new();
    if frames > 0 {
        snaps.push((initial.time, initial.field.irradiance()));
    }
    let final_state = evolve(&initial, setup.dt, setup.steps, |s, t, psi| {
        accumulate(psi);
        points.push(partition(t, psi));
        if s % frame_every == 0 && snaps.len() <= frames {
            let vals = psi.iter().map(|v| v.norm_sqr()).collect();
            snaps.push((t, IrradianceProfile::new(grid, vals).expect("finite density")));
        }
    })?;
    let trajectory = PacketTrajectory {
        points,
        footprint_span: span * h,
        footprint_line: line * h,
    };
    let reference = ky_half_width(&initial, 0);
    let lobe_score = high_angle_fraction(&final_state, last_col + 1, 3.0 * reference);
    let first = *trajectory.initial();
    let last = *trajectory.last();
    let _ = &xs;
    let report = AttenuationReport {
        norm_initial: first.norm_total,
        norm_final: last.norm_total,
        norm_transmitted: last.norm_transmitted,
        norm_reflected: last.norm_reflected,
        norm_residual: last.norm_residual,
        attenuation: 1.0 - last.norm_transmitted / first.norm_total,
        footprint_overlap: trajectory.footprint_overlap(),
        lobe_score,
        steps: setup.steps,
        time: final_state.time,
    };
    Ok(ScenarioRun {
        setup,
        trajectory,
        report,
        initial,
        final_state,
        frames: snaps,
    })
}

/// Transverse power spectrum `Σ_x |FFT_y ψ(x, ·)|²` over columns `from_col..`,
/// returned with its ky axis in FFT order.
fn ky_spectrum(state: &PacketState, from_col: usize) -> (Vec<f64>, Vec<f64>) {
    let g = state.field.grid();
    let n = g.len();
    let h = g.spacing();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let psi = state.field.values();
    let mut power = vec![0.0; n];
    let mut col = vec![ZERO; n];
    for ix in from_col.min(n)..n {
        for iy in 0..n {
            col[iy] = psi[iy * n + ix];
        }
        if col.iter().all(|v| v.norm_sqr() == 0.0) {
            continue;
        }
        fft.process(&mut col);
        for (p, v) in power.iter_mut().zip(&col) {
            *p += v.norm_sqr();
        }
    }
    let ky = (0..n)
        .map(|k| {
            let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
            2.0 * PI * k / (n as f64 * h)
        })
        .collect();
    (ky, power)
}

/// Half width at half maximum of the transverse spectrum around its peak.
pub fn ky_half_width(state: &PacketState, from_col: usize) -> f64 {
    let (ky, power) = ky_spectrum(state, from_col);
    let n = ky.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ky[a].total_cmp(&ky[b]));
    let p: Vec<f64> = order.iter().map(|&i| power[i]).collect();
    let k: Vec<f64> = order.iter().map(|&i| ky[i]).collect();
    let (ipk, &peak) = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    let half = 0.5 * peak;
    let mut right = k[n - 1] - k[ipk];
    for i in ipk..n - 1 {
        if p[i + 1] < half {
            right = k[i] + (k[i + 1] - k[i]) * (p[i] - half) / (p[i] - p[i + 1]) - k[ipk];
            break;
        }
    }
    let mut left = k[ipk] - k[0];
    for i in (1..=ipk).rev() {
        if p[i - 1] < half {
            left = k[ipk] - (k[i] - (k[i] - k[i - 1]) * (p[i] - half) / (p[i] - p[i - 1]));
            break;
        }
    }
    0.5 * (left + right)
}

/// Fraction of the transverse spectral power of columns `from_col..` with
/// `|ky| > cutoff`.
pub fn high_angle_fraction(state: &PacketState, from_col: usize, cutoff: f64) -> f64 {
    let (ky, power) = ky_spectrum(state, from_col);
    let total: f64 = power.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    ky.iter().zip(&power).filter(|(k, _)| k.abs() > cutoff).map(|(_, p)| p).sum::<f64>() / total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Theorem1Check {
    pub holds: bool,
    pub attenuation: f64,
    pub footprint_overlap: f64,
}

/// `(|1 − forward norm| < ε) ⇔ (footprint overlap < ε)`, ε = [`THEOREM1_EPS`].
pub fn theorem1_check(trajectory: &PacketTrajectory) -> Theorem1Check {
    let first = trajectory.initial();
    let last = trajectory.last();
    let attenuation = (1.0 - last.norm_transmitted / first.norm_total).abs();
    let overlap = trajectory.footprint_overlap();
    Theorem1Check {
        holds: (attenuation < THEOREM1_EPS) == (overlap < THEOREM1_EPS),
        attenuation,
        footprint_overlap: overlap,
    }
}

/// Antisymmetric pair `g(y − d) − g(y + d)` moving along x past a thin
/// obstacle on the nodal line y = 0. Needs an odd grid so y = 0 is a row.
pub fn node_setup(cfg: &WavepacketConfig, separation_sigmas: f64, obstacle_rows: usize) -> Result<(ScenarioSetup, PacketState)> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    if grid.len() % 2 == 0 {
        return Err(Error::invalid("grid_samples", "the node geometry needs an odd grid"));
    }
    let mut setup = ScenarioSetup::new(cfg, Scenario::Hit)?;
    let h = grid.spacing();
    setup.obstacle.width = (obstacle_rows.max(1) - 1) as f64 * h;
    setup.obstacle.y_center = 0.0;
    let d = separation_sigmas * setup.sigma;
    let s = (setup.sigma, setup.sigma);
    let state = init_superposition(
        grid,
        &[
            ((setup.center.0, d), s, setup.k0, Complex64::new(1.0, 0.0)),
            ((setup.center.0, -d), s, setup.k0, Complex64::new(-1.0, 0.0)),
        ],
        Some(setup.obstacle),
    )?;
    Ok((setup, state))
}
