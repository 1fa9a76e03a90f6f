//! Total Lagrangian explicit dynamics.
//!
//! Shape functions and their reference-configuration gradients are computed
//! once at the Gauss points of the background grid (the total Lagrangian
//! formulation never rebuilds them), mass is lumped by row sums, and the
//! displacement field is advanced with the central difference recurrence or
//! its mass-proportionally damped dynamic-relaxation variant. Essential
//! boundary conditions overwrite constrained components directly after every
//! step.

mod bc;
mod output;

pub use bc::{smooth_ramp, Axis, BcProgram, BoundaryCondition};
pub use output::{write_summary_csv, write_vtk};

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::cloud::{find_support, gauss_points, initial_support_radius, IntegrationGrid, NodeCloud, SearchGrid};
use crate::material::{second_pk_stress, MaterialParams};
use crate::mls::{shape_mmls, ApproxParams};
use crate::{Error, Result};

/// Materials keyed by background-grid region id.
#[derive(Debug, Clone)]
pub struct MaterialMap {
    by_region: BTreeMap<u32, MaterialParams>,
}

impl MaterialMap {
    pub fn single(params: MaterialParams) -> Self {
        let mut by_region = BTreeMap::new();
        by_region.insert(0, params);
        Self { by_region }
    }

    pub fn insert(&mut self, region: u32, params: MaterialParams) {
        self.by_region.insert(region, params);
    }

    pub fn get(&self, region: u32) -> Result<&MaterialParams> {
        self.by_region
            .get(&region)
            .ok_or_else(|| Error::Config(format!("no material assigned to region {region}")))
    }

    pub fn max_dilatational_speed(&self) -> f64 {
        self.by_region
            .values()
            .map(MaterialParams::dilatational_wave_speed)
            .fold(0.0, f64::max)
    }
}

/// Precomputed shape data at one Gauss point.
#[derive(Debug, Clone)]
pub struct TableEntry {
    pub nodes: Vec<u32>,
    pub phi: Vec<f64>,
    pub grad: Vec<Vector3<f64>>,
    /// Quadrature volume (m^3).
    pub weight: f64,
    pub region: u32,
}

/// Shape evaluations at every Gauss point, built once from the initial
/// configuration and never rebuilt during a run.
#[derive(Debug, Clone)]
pub struct ShapeTable {
    pub entries: Vec<TableEntry>,
    pub node_count: usize,
    /// Worst |sum phi - 1| across Gauss points.
    pub worst_pou: f64,
    /// Worst linear-reproduction residual, relative to the cloud
    /// bounding-box diagonal.
    pub worst_linear: f64,
}

/// Evaluates shape functions at every Gauss point of the grid. Support radii
/// start at `r_init_factor` times the local spacing (mean distance to the 4
/// nearest nodes) and grow until `n_min` nodes are found.
pub fn precompute(
    cloud: &NodeCloud,
    grid: &IntegrationGrid,
    params: &ApproxParams,
) -> Result<ShapeTable> {
    let index = SearchGrid::new(cloud);
    let gauss = gauss_points(grid);
    let results: Vec<Result<TableEntry>> = gauss
        .par_iter()
        .map(|gp| {
            let r_init = initial_support_radius(&index, &gp.position, params.support.r_init_factor);
            let support = find_support(&gp.position, cloud, &index, params.support.n_min, r_init)?;
            let eval = shape_mmls(&gp.position, &support, cloud, params)?;
            Ok(TableEntry {
                nodes: eval.nodes.iter().map(|&i| i as u32).collect(),
                phi: eval.phi,
                grad: eval.grad,
                weight: gp.weight,
                region: gp.region,
            })
        })
        .collect();

    let mut entries = Vec::with_capacity(results.len());
    for r in results {
        entries.push(r?);
    }

    let scale = index.diameter().max(1e-300);
    let mut worst_pou = 0.0f64;
    let mut worst_linear = 0.0f64;
    for (entry, gp) in entries.iter().zip(&gauss) {
        let sum: f64 = entry.phi.iter().sum();
        worst_pou = worst_pou.max((sum - 1.0).abs());
        let mut recon = Vector3::zeros();
        for (k, &node) in entry.nodes.iter().enumerate() {
            recon += entry.phi[k] * cloud.coord(node as usize).coords;
        }
        worst_linear = worst_linear.max((recon - gp.position.coords).norm() / scale);
    }

    Ok(ShapeTable {
        entries,
        node_count: cloud.len(),
        worst_pou,
        worst_linear,
    })
}

/// Row-sum mass lumping: m_i = sum over Gauss points of rho w phi_i. The
/// partition of unity makes the total equal the exact mass of each region.
pub fn lump_mass(table: &ShapeTable, materials: &MaterialMap) -> Result<Vec<f64>> {
    let mut mass = vec![0.0f64; table.node_count];
    for entry in &table.entries {
        let rho = materials.get(entry.region)?.rho;
        let f = rho * entry.weight;
        for (k, &node) in entry.nodes.iter().enumerate() {
            mass[node as usize] += f * entry.phi[k];
        }
    }
    if let Some(node) = mass.iter().position(|&m| m <= 0.0) {
        return Err(Error::NonPositiveMass { node });
    }
    Ok(mass)
}

/// Gauss points per parallel partition when none is forced: one contiguous
/// slice per worker. Forcing a fixed chunk size makes results bitwise
/// identical at any worker count (the per-chunk results are always combined
/// sequentially in chunk order).
pub fn default_chunk(n_gauss: usize) -> usize {
    let workers = rayon::current_num_threads().max(1);
    n_gauss.div_ceil(workers).max(1)
}

/// Matrix-free internal nodal forces: at every Gauss point the deformation
/// gradient F = I + sum_i u_i (grad phi_i)', the second Piola-Kirchhoff
/// stress S(F), and the accumulation f_i += w (F S) grad phi_i. Accumulation
/// runs over fixed contiguous chunks of Gauss points whose partial sums are
/// combined in chunk order, so results are reproducible.
pub fn internal_forces(
    table: &ShapeTable,
    materials: &MaterialMap,
    u: &[Vector3<f64>],
    forces: &mut [Vector3<f64>],
    chunk: usize,
    step: u64,
) -> Result<()> {
    debug_assert_eq!(u.len(), table.node_count);
    debug_assert_eq!(forces.len(), table.node_count);

    let chunk = chunk.max(1);
    let partials: Vec<Result<Vec<Vector3<f64>>>> = table
        .entries
        .par_chunks(chunk)
        .enumerate()
        .map(|(chunk_idx, entries)| {
            let mut local = vec![Vector3::zeros(); table.node_count];
            for (offset, entry) in entries.iter().enumerate() {
                let gp = chunk_idx * chunk + offset;
                let mat = materials.get(entry.region)?;
                let mut f_def = Matrix3::identity();
                for (k, &node) in entry.nodes.iter().enumerate() {
                    f_def += u[node as usize] * entry.grad[k].transpose();
                }
                let s = second_pk_stress(&f_def, mat).map_err(|_| Error::Inverted {
                    gauss_point: gp,
                    step,
                })?;
                let p_stress = f_def * s;
                for (k, &node) in entry.nodes.iter().enumerate() {
                    local[node as usize] += (p_stress * entry.grad[k]) * entry.weight;
                }
            }
            Ok(local)
        })
        .collect();

    for f in forces.iter_mut() {
        *f = Vector3::zeros();
    }
    for partial in partials {
        let partial = partial?;
        for (dst, src) in forces.iter_mut().zip(&partial) {
            *dst += *src;
        }
    }
    Ok(())
}

/// Smallest volume ratio J over the Gauss points for a displacement field.
pub fn min_jacobian(table: &ShapeTable, u: &[Vector3<f64>]) -> f64 {
    table
        .entries
        .iter()
        .map(|entry| {
            let mut f_def = Matrix3::identity();
            for (k, &node) in entry.nodes.iter().enumerate() {
                f_def += u[node as usize] * entry.grad[k].transpose();
            }
            f_def.determinant()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Stable time step estimate: safety times the minimum over nodes of the
/// nearest-neighbour distance divided by the dilatational wave speed
/// sqrt((lambda + 2 mu) / rho).
pub fn critical_time_step(
    cloud: &NodeCloud,
    index: &SearchGrid,
    materials: &MaterialMap,
    safety: f64,
) -> f64 {
    let wave = materials.max_dilatational_speed();
    let mut h_min = f64::INFINITY;
    for i in 0..cloud.len() {
        let h = index.node_spacing(i);
        if h > 0.0 {
            h_min = h_min.min(h);
        }
    }
    safety * h_min / wave
}

/// Time stepping mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// Undamped central differences.
    CentralDifference,
    /// Mass-proportional damping to drive the transient toward the static
    /// solution.
    DynamicRelaxation,
}

/// Displacement history and step parameters of a run.
#[derive(Debug, Clone)]
pub struct SimState {
    pub u_prev: Vec<Vector3<f64>>,
    pub u_curr: Vec<Vector3<f64>>,
    pub u_next: Vec<Vector3<f64>>,
    /// External nodal forces; zero in all shipped benchmarks (loading is by
    /// prescribed motion) but part of the state for completeness.
    pub f_ext: Vec<Vector3<f64>>,
    pub mass: Vec<f64>,
    pub dt: f64,
    /// Damping coefficient c (1/s).
    pub damping: f64,
    pub step: u64,
    pub time: f64,
}

impl SimState {
    /// Rest start: u_prev = u_curr = 0.
    pub fn new(mass: Vec<f64>, dt: f64, damping: f64) -> Self {
        let n = mass.len();
        Self {
            u_prev: vec![Vector3::zeros(); n],
            u_curr: vec![Vector3::zeros(); n],
            u_next: vec![Vector3::zeros(); n],
            f_ext: vec![Vector3::zeros(); n],
            mass,
            dt,
            damping,
            step: 0,
            time: 0.0,
        }
    }

    fn coefficients(&self, mode: StepMode) -> (f64, f64) {
        let c = match mode {
            StepMode::CentralDifference => 0.0,
            StepMode::DynamicRelaxation => self.damping,
        };
        let cdt = c * self.dt;
        let alpha = 2.0 * self.dt * self.dt / (2.0 + cdt);
        let beta = (2.0 - cdt) / (2.0 + cdt);
        (alpha, beta)
    }

    /// Kinetic-energy proxy sum_i m_i |u_curr - u_prev|^2 / dt^2 (J).
    pub fn kinetic_proxy(&self) -> f64 {
        self.mass
            .iter()
            .zip(self.u_curr.iter().zip(&self.u_prev))
            .map(|(&m, (c, p))| m * (c - p).norm_squared())
            .sum::<f64>()
            / (self.dt * self.dt)
    }
}

/// One damped-recurrence update,
/// u_next = u_curr + beta (u_curr - u_prev) + alpha a.
/// With c = 0 the coefficients reduce exactly to (dt^2, 1), the undamped
/// central difference scheme.
pub fn relaxation_update(
    u_curr: Vector3<f64>,
    u_prev: Vector3<f64>,
    accel: Vector3<f64>,
    alpha: f64,
    beta: f64,
) -> Vector3<f64> {
    u_curr + (u_curr - u_prev) * beta + accel * alpha
}

/// Advances one step and returns the largest nodal displacement increment.
/// Constrained components of u_next are overwritten with the program values
/// at t + dt before the history shifts.
pub fn step(
    state: &mut SimState,
    table: &ShapeTable,
    materials: &MaterialMap,
    bcs: &[BoundaryCondition],
    mode: StepMode,
    forces: &mut [Vector3<f64>],
    chunk: usize,
) -> Result<f64> {
    internal_forces(table, materials, &state.u_curr, forces, chunk, state.step)?;
    let (alpha, beta) = state.coefficients(mode);
    for i in 0..state.u_curr.len() {
        let accel = (state.f_ext[i] - forces[i]) / state.mass[i];
        state.u_next[i] = relaxation_update(state.u_curr[i], state.u_prev[i], accel, alpha, beta);
    }
    let t_next = (state.step + 1) as f64 * state.dt;
    for bc in bcs {
        bc.apply(&mut state.u_next, t_next);
    }
    let mut increment = 0.0f64;
    for (next, curr) in state.u_next.iter().zip(&state.u_curr) {
        let d = (next - curr).norm();
        if !d.is_finite() {
            return Err(Error::Diverged { step: state.step });
        }
        increment = increment.max(d);
    }
    std::mem::swap(&mut state.u_prev, &mut state.u_curr);
    std::mem::swap(&mut state.u_curr, &mut state.u_next);
    state.step += 1;
    state.time = state.step as f64 * state.dt;
    Ok(increment)
}

/// Run controls. `dt: None` uses the critical estimate; `damping: None`
/// estimates c from a probe step.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub mode: StepMode,
    pub dt: Option<f64>,
    pub safety: f64,
    pub damping: Option<f64>,
    /// Convergence threshold on the largest nodal increment (m).
    pub tol_u: f64,
    /// Consecutive quiet steps required for convergence.
    pub quiet_steps: u32,
    pub max_steps: u64,
    /// Snapshot / series cadence in steps; None records only the final state.
    pub output_every: Option<u64>,
    pub out_dir: Option<PathBuf>,
    /// Fixed Gauss-point partition size; None partitions per worker.
    pub chunk: Option<usize>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            mode: StepMode::DynamicRelaxation,
            dt: None,
            safety: 0.5,
            damping: None,
            tol_u: 1e-9,
            quiet_steps: 100,
            max_steps: 200_000,
            output_every: None,
            out_dir: None,
            chunk: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    /// Step budget exhausted before the increments settled.
    StepBudgetExhausted,
}

#[derive(Debug, Clone, Copy)]
pub struct SeriesRow {
    pub step: u64,
    pub time: f64,
    pub kinetic_proxy: f64,
    pub max_increment: f64,
}

#[derive(Debug)]
pub struct RunResult {
    pub state: SimState,
    pub status: RunStatus,
    pub series: Vec<SeriesRow>,
    pub min_jacobian: f64,
    pub dt: f64,
    pub damping: f64,
    pub ramp_end: f64,
}

/// Damping heuristic: stiffness from one probe step's force/displacement
/// ratio, c = 0.7 * 2 * sqrt(k_est / m_min), clamped to keep beta in [0, 1].
/// Suboptimal damping costs steps, not correctness, since convergence is
/// detected on displacement increments.
pub fn estimate_damping(
    table: &ShapeTable,
    materials: &MaterialMap,
    bcs: &[BoundaryCondition],
    mass: &[f64],
    dt: f64,
    chunk: usize,
) -> Result<f64> {
    let n = mass.len();
    let mut probe = vec![Vector3::zeros(); n];
    for bc in bcs {
        bc.apply(&mut probe, dt);
    }
    let u_norm: f64 = probe.iter().map(|u| u.norm_squared()).sum::<f64>().sqrt();
    if u_norm < 1e-300 {
        return Ok(0.0);
    }
    let mut forces = vec![Vector3::zeros(); n];
    internal_forces(table, materials, &probe, &mut forces, chunk, 0)?;
    let f_norm: f64 = forces.iter().map(|f| f.norm_squared()).sum::<f64>().sqrt();
    let k_est = f_norm / u_norm;
    let m_min = mass.iter().copied().fold(f64::INFINITY, f64::min);
    let c = 1.4 * (k_est / m_min).sqrt();
    Ok(c.min(1.8 / dt))
}

/// Runs the loading ramp and relaxes until the largest nodal increment stays
/// below `tol_u` for `quiet_steps` consecutive steps (after the ramp), or the
/// step budget is exhausted.
pub fn run(
    cloud: &NodeCloud,
    grid: &IntegrationGrid,
    table: &ShapeTable,
    materials: &MaterialMap,
    bcs: &[BoundaryCondition],
    settings: &RunSettings,
) -> Result<RunResult> {
    let index = SearchGrid::new(cloud);
    let dt_crit = critical_time_step(cloud, &index, materials, settings.safety);
    let dt = settings.dt.unwrap_or(dt_crit);
    if dt > dt_crit / settings.safety {
        eprintln!(
            "warning: dt = {dt:.3e} s exceeds the critical estimate {:.3e} s",
            dt_crit / settings.safety
        );
    }

    let chunk = settings
        .chunk
        .unwrap_or_else(|| default_chunk(table.entries.len()));
    let mass = lump_mass(table, materials)?;
    let damping = match settings.damping {
        Some(c) => c,
        None => estimate_damping(table, materials, bcs, &mass, dt, chunk)?,
    };
    let mut state = SimState::new(mass, dt, damping);
    let ramp_end = bcs.iter().map(|bc| bc.program.duration()).fold(0.0, f64::max);

    if let Some(dir) = &settings.out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut forces = vec![Vector3::zeros(); cloud.len()];
    let mut series = Vec::new();
    let mut quiet = 0u32;
    let mut status = RunStatus::StepBudgetExhausted;

    while state.step < settings.max_steps {
        let increment = step(
            &mut state, table, materials, bcs, settings.mode, &mut forces, chunk,
        )?;

        let record = settings
            .output_every
            .map(|every| every > 0 && state.step % every == 0)
            .unwrap_or(false);
        if record {
            series.push(SeriesRow {
                step: state.step,
                time: state.time,
                kinetic_proxy: state.kinetic_proxy(),
                max_increment: increment,
            });
            if let Some(dir) = &settings.out_dir {
                write_vtk(
                    &dir.join(format!("state_{:08}.vtk", state.step)),
                    cloud,
                    Some(grid),
                    &state.u_curr,
                )?;
            }
        }

        if state.time >= ramp_end {
            if increment < settings.tol_u {
                quiet += 1;
                if quiet >= settings.quiet_steps {
                    status = RunStatus::Converged;
                    break;
                }
            } else {
                quiet = 0;
            }
        }
    }

    series.push(SeriesRow {
        step: state.step,
        time: state.time,
        kinetic_proxy: state.kinetic_proxy(),
        max_increment: series.last().map(|r| r.max_increment).unwrap_or(0.0),
    });

    let min_j = min_jacobian(table, &state.u_curr);
    if let Some(dir) = &settings.out_dir {
        write_vtk(&dir.join("state_final.vtk"), cloud, Some(grid), &state.u_curr)?;
        write_summary_csv(&dir.join("summary.csv"), &series)?;
    }

    Ok(RunResult {
        state,
        status,
        series,
        min_jacobian: min_j,
        dt,
        damping,
        ramp_end,
    })
}
