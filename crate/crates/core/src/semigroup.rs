//! Semi-Lagrangian realisation of the implicit backward Lax-Oleinik
//! semigroup.
//!
//! One step with a frozen contact argument `w` reads
//!
//! ```text
//! u_new(x) = min_v  u_prev(x - v dt) + dt L(x, w(x), v)
//! ```
//!
//! over a uniform velocity grid, with (bi)linear interpolation at the foot
//! point. Marching this step with `w` taken from a known space-time field
//! solves the frozen Cauchy problem; Picard iteration on the frozen field
//! converges to the self-consistent evolution `T_t^- phi`. The forward
//! semigroup is obtained by duality: `T_t^+ phi = -Tbar_t^-(-phi)` where
//! `Tbar` uses `L(x, -u, -v)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, GridFunction, PeriodicGrid, Point, SpaceTimeField, StepArgmins};
use crate::model::{LagrangianModel, ModelError};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("invalid scheme parameters: {0}")]
    Params(String),
    #[error("all velocities infeasible at node {node} (x = {x:?})")]
    Infeasible { node: usize, x: Point },
    #[error("horizon {horizon} is not a multiple of dt = {dt}")]
    HorizonNotOnGrid { horizon: f64, dt: f64 },
    #[error("horizon {horizon} exceeds the per-call cap {cap}")]
    HorizonTooLong { horizon: f64, cap: f64 },
    #[error("frozen field covers {have} steps, need {need}")]
    FrozenTooShort { have: usize, need: usize },
    #[error("grid or time step mismatch")]
    Mismatch,
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub dt: f64,
    /// Velocity bound; the discrete minimisation runs over `[-v_max, v_max]^d`.
    pub v_max: f64,
    /// Odd number of velocities per axis.
    pub velocity_count: usize,
    /// Absolute Picard tolerance. `None` means `1e-10 * max(1, |phi|_inf)`.
    pub picard_tol: Option<f64>,
    pub picard_max_iter: usize,
    /// Longest horizon accepted by a single Picard solve.
    pub max_horizon: f64,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams {
            dt: 0.0025,
            v_max: 4.0,
            velocity_count: 81,
            picard_tol: None,
            picard_max_iter: 200,
            max_horizon: 64.0,
        }
    }
}

impl SchemeParams {
    pub fn validate(&self, grid: &PeriodicGrid) -> Result<(), SchemeError> {
        let bad = |m: String| Err(SchemeError::Params(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return bad(format!("v_max must be positive, got {}", self.v_max));
        }
        if self.velocity_count < 3 || self.velocity_count.is_multiple_of(2) {
            return bad(format!(
                "velocity_count must be odd and at least 3, got {}",
                self.velocity_count
            ));
        }
        for (axis, &l) in grid.lengths().iter().enumerate() {
            if self.dt * self.v_max > 0.5 * l {
                return bad(format!(
                    "dt * v_max = {} exceeds half the period {l} on axis {axis}",
                    self.dt * self.v_max
                ));
            }
        }
        if self.picard_max_iter == 0 {
            return bad("picard_max_iter must be positive".into());
        }
        if let Some(t) = self.picard_tol {
            if !(t >= 0.0) {
                return bad(format!("picard_tol must be nonnegative, got {t}"));
            }
        }
        if !(self.max_horizon > 0.0) {
            return bad(format!("max_horizon must be positive, got {}", self.max_horizon));
        }
        Ok(())
    }

    /// Number of steps covering `horizon`, which must be a multiple of `dt`.
    pub fn steps_for(&self, horizon: f64) -> Result<usize, SchemeError> {
        if horizon < 0.0 {
            return Err(SchemeError::NegativeTime(horizon));
        }
        let n = (horizon / self.dt).round();
        if (n * self.dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(SchemeError::HorizonNotOnGrid {
                horizon,
                dt: self.dt,
            });
        }
        Ok(n as usize)
    }
}

/// Per-axis interpolation stencil of one foot-point displacement, in node units.
#[derive(Debug, Clone, Copy, PartialEq)]
struct AxisShift {
    cell: i64,
    weight: f64,
}

impl AxisShift {
    fn new(displacement: f64, spacing: f64) -> Self {
        let s = displacement / spacing;
        let r = s.round();
        let s = if (s - r).abs() < 1e-10 { r } else { s };
        let k = s.floor();
        AxisShift {
            cell: k as i64,
            weight: s - k,
        }
    }
}

/// A grid together with the velocity set and the precomputed foot-point
/// stencils of every velocity. Shared by the scheme and the brute-force oracle.
#[derive(Debug, Clone)]
pub struct Scheme {
    params: SchemeParams,
    grid: PeriodicGrid,
    axis_values: Vec<f64>,
    /// Velocities sorted by `(|v|^2, v_x, v_y)`: the first strict minimiser in
    /// this order is the tie-break winner.
    velocities: Vec<Point>,
    /// Per-axis lattice index of each sorted velocity.
    lattice: Vec<[usize; 2]>,
    /// Sorted index of a lattice index `a + m * b`.
    by_lattice: Vec<usize>,
    shifts: Vec<[AxisShift; 2]>,
}

impl Scheme {
    pub fn new(grid: PeriodicGrid, params: SchemeParams) -> Result<Self, SchemeError> {
        params.validate(&grid)?;
        let m = params.velocity_count;
        let half = (m / 2) as f64;
        let dv = params.v_max / half;
        let axis_values: Vec<f64> = (0..m).map(|i| (i as f64 - half) * dv).collect();
        let mut entries: Vec<(Point, [usize; 2])> = Vec::new();
        let m_y = if grid.dim() == 2 { m } else { 1 };
        for b in 0..m_y {
            for a in 0..m {
                let v = if grid.dim() == 2 {
                    [axis_values[a], axis_values[b]]
                } else {
                    [axis_values[a], 0.0]
                };
                entries.push((v, [a, b]));
            }
        }
        entries.sort_by(|(v, _), (w, _)| {
            let nv = v[0] * v[0] + v[1] * v[1];
            let nw = w[0] * w[0] + w[1] * w[1];
            nv.total_cmp(&nw)
                .then(v[0].total_cmp(&w[0]))
                .then(v[1].total_cmp(&w[1]))
        });
        let mut by_lattice = vec![0; m * m_y];
        for (k, (_, [a, b])) in entries.iter().enumerate() {
            by_lattice[a + m * b] = k;
        }
        let shifts = entries
            .iter()
            .map(|(v, _)| {
                [
                    AxisShift::new(-v[0] * params.dt, grid.spacing(0)),
                    if grid.dim() == 2 {
                        AxisShift::new(-v[1] * params.dt, grid.spacing(1))
                    } else {
                        AxisShift { cell: 0, weight: 0.0 }
                    },
                ]
            })
            .collect();
        Ok(Scheme {
            params,
            grid,
            axis_values,
            velocities: entries.iter().map(|(v, _)| *v).collect(),
            lattice: entries.iter().map(|(_, l)| *l).collect(),
            by_lattice,
            shifts,
        })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.params.dt
    }

    /// Velocities in tie-break order.
    pub fn velocities(&self) -> &[Point] {
        &self.velocities
    }

    pub fn velocity_spacing(&self) -> f64 {
        self.axis_values[1] - self.axis_values[0]
    }

    /// Interpolated value of `values` at the foot point `x_node - v_j dt`.
    #[inline]
    pub fn foot_value(&self, values: &[f64], node: usize, j: usize) -> f64 {
        let [sx, sy] = self.shifts[j];
        let n0 = self.grid.counts()[0] as i64;
        let [ix, iy] = self.grid.axis_indices(node);
        let i0 = (ix as i64 + sx.cell).rem_euclid(n0) as usize;
        let i1 = (ix as i64 + sx.cell + 1).rem_euclid(n0) as usize;
        if self.grid.dim() == 1 {
            return (1.0 - sx.weight) * values[i0] + sx.weight * values[i1];
        }
        let n1 = self.grid.counts()[1] as i64;
        let j0 = (iy as i64 + sy.cell).rem_euclid(n1) as usize;
        let j1 = (iy as i64 + sy.cell + 1).rem_euclid(n1) as usize;
        let g = &self.grid;
        let a = (1.0 - sx.weight) * values[g.index(i0, j0)] + sx.weight * values[g.index(i1, j0)];
        let b = (1.0 - sx.weight) * values[g.index(i0, j1)] + sx.weight * values[g.index(i1, j1)];
        (1.0 - sy.weight) * a + sy.weight * b
    }

    /// Nodes read by `foot_value(_, node, j)`.
    pub fn foot_support(&self, node: usize, j: usize) -> Vec<usize> {
        let [sx, sy] = self.shifts[j];
        let [ix, iy] = self.grid.axis_indices(node);
        let axis = |i: usize, s: &AxisShift, n: usize| {
            let n = n as i64;
            [
                (i as i64 + s.cell).rem_euclid(n) as usize,
                (i as i64 + s.cell + 1).rem_euclid(n) as usize,
            ]
        };
        let xs = axis(ix, &sx, self.grid.counts()[0]);
        if self.grid.dim() == 1 {
            return xs.to_vec();
        }
        let ys = axis(iy, &sy, self.grid.counts()[1]);
        ys.iter()
            .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
            .map(|(x, y)| self.grid.index(x, y))
            .collect()
    }

    /// `out[j] = dt * L(x_node, w, v_j)` in tie-break order.
    pub fn node_costs(&self, lag: &LagrangianModel, node: usize, w: f64, out: &mut [f64]) -> Result<(), ModelError> {
        lag.fill_step_costs(self.grid.node(node), w, &self.velocities, self.params.dt, out)
    }

    fn neighbour(&self, j: usize, axis: usize, delta: i64) -> Option<usize> {
        let mut l = self.lattice[j];
        let m = self.params.velocity_count as i64;
        let moved = l[axis] as i64 + delta;
        if moved < 0 || moved >= m {
            return None;
        }
        l[axis] = moved as usize;
        Some(self.by_lattice[l[0] + self.params.velocity_count * l[1]])
    }

    fn is_saturated(&self, j: usize) -> bool {
        let last = self.params.velocity_count - 1;
        (0..self.grid.dim()).any(|a| self.lattice[j][a] == 0 || self.lattice[j][a] == last)
    }

    fn minimise_node(
        &self,
        u_prev: &[f64],
        node: usize,
        costs: &[f64],
        velocity: &mut [f64],
        refined: &mut [f64],
    ) -> Result<(f64, bool), SchemeError> {
        let mut best = f64::INFINITY;
        let mut arg = None;
        for (j, &c) in costs.iter().enumerate() {
            if c == f64::INFINITY {
                continue;
            }
            let val = self.foot_value(u_prev, node, j) + c;
            if val < best {
                best = val;
                arg = Some(j);
            }
        }
        let Some(j) = arg else {
            return Err(SchemeError::Infeasible {
                node,
                x: self.grid.node(node),
            });
        };
        let dv = self.velocity_spacing();
        let total = |k: usize| {
            let c = costs[k];
            if c == f64::INFINITY {
                f64::INFINITY
            } else {
                self.foot_value(u_prev, node, k) + c
            }
        };
        for axis in 0..self.grid.dim() {
            let v0 = self.velocities[j][axis];
            velocity[axis] = v0;
            refined[axis] = v0;
            if let (Some(lo), Some(hi)) = (self.neighbour(j, axis, -1), self.neighbour(j, axis, 1)) {
                let (cm, cp) = (total(lo), total(hi));
                let curvature = cm - 2.0 * best + cp;
                if cm.is_finite() && cp.is_finite() && curvature > 0.0 {
                    let offset = (0.5 * (cm - cp) / curvature).clamp(-0.5, 0.5);
                    refined[axis] = v0 + offset * dv;
                }
            }
        }
        Ok((best, self.is_saturated(j)))
    }
}

/// One semi-Lagrangian step with frozen contact argument `frozen`.
pub fn sl_step(
    u_prev: &GridFunction,
    frozen: &GridFunction,
    lag: &LagrangianModel,
    scheme: &Scheme,
) -> Result<(GridFunction, StepArgmins), SchemeError> {
    if u_prev.grid() != scheme.grid() || frozen.grid() != scheme.grid() {
        return Err(SchemeError::Mismatch);
    }
    let (values, argmins) = step_values(u_prev.values(), frozen.values(), lag, scheme)?;
    Ok((
        GridFunction::from_values_unchecked(*scheme.grid(), values),
        argmins,
    ))
}

const NODE_CHUNK: usize = 64;

pub(crate) fn step_values(
    u_prev: &[f64],
    frozen: &[f64],
    lag: &LagrangianModel,
    scheme: &Scheme,
) -> Result<(Vec<f64>, StepArgmins), SchemeError> {
    let n = scheme.grid.len();
    let d = scheme.grid.dim();
    let nv = scheme.velocities.len();
    let mut values = vec![0.0; n];
    let mut velocity = vec![0.0; n * d];
    let mut refined = vec![0.0; n * d];
    let saturated = values
        .par_chunks_mut(NODE_CHUNK)
        .zip(velocity.par_chunks_mut(NODE_CHUNK * d))
        .zip(refined.par_chunks_mut(NODE_CHUNK * d))
        .enumerate()
        .map(|(c, ((vals, vel), refd))| -> Result<usize, SchemeError> {
            let mut costs = vec![0.0; nv];
            let mut sat = 0;
            for (k, out) in vals.iter_mut().enumerate() {
                let node = c * NODE_CHUNK + k;
                scheme.node_costs(lag, node, frozen[node], &mut costs)?;
                let (best, s) = scheme.minimise_node(
                    u_prev,
                    node,
                    &costs,
                    &mut vel[k * d..(k + 1) * d],
                    &mut refd[k * d..(k + 1) * d],
                )?;
                *out = best;
                sat += usize::from(s);
            }
            Ok(sat)
        })
        .collect::<Result<Vec<usize>, _>>()?
        .into_iter()
        .sum();
    Ok((
        values,
        StepArgmins {
            grid_velocity: velocity,
            refined_velocity: refined,
            saturated,
        },
    ))
}

/// Marches `sl_step` from `phi` over `[0, horizon]`, freezing the contact
/// argument at the left endpoint of each step from `frozen`.
pub fn solve_frozen(
    phi: &GridFunction,
    frozen: &SpaceTimeField,
    horizon: f64,
    lag: &LagrangianModel,
    scheme: &Scheme,
) -> Result<SpaceTimeField, SchemeError> {
    if phi.grid() != scheme.grid() || frozen.grid() != scheme.grid() || frozen.dt() != scheme.dt() {
        return Err(SchemeError::Mismatch);
    }
    let n_steps = scheme.params.steps_for(horizon)?;
    if frozen.n_steps() < n_steps {
        return Err(SchemeError::FrozenTooShort {
            have: frozen.n_steps(),
            need: n_steps,
        });
    }
    let mut field = SpaceTimeField::new(phi, scheme.dt());
    let mut current = phi.values().to_vec();
    for n in 0..n_steps {
        let (next, argmins) = step_values(&current, frozen.snapshot_values(n), lag, scheme)?;
        field.push(next.clone(), Some(argmins));
        current = next;
    }
    Ok(field)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardDiagnostics {
    /// `increments[k-1] = max_n |u_k(., t_n) - u_{k-1}(., t_n)|_inf`.
    pub increments: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub tolerance: f64,
}

/// Picard iteration on the frozen field, starting from `u_0 = phi` for all
/// times. Reaching the iteration cap is reported, not raised.
pub fn picard(
    phi: &GridFunction,
    horizon: f64,
    lag: &LagrangianModel,
    scheme: &Scheme,
) -> Result<(SpaceTimeField, PicardDiagnostics), SchemeError> {
    if horizon > scheme.params.max_horizon {
        return Err(SchemeError::HorizonTooLong {
            horizon,
            cap: scheme.params.max_horizon,
        });
    }
    let n_steps = scheme.params.steps_for(horizon)?;
    let tolerance = scheme
        .params
        .picard_tol
        .unwrap_or(1e-10 * phi.sup_norm().max(1.0));
    let mut prev = SpaceTimeField::constant_in_time(phi, scheme.dt(), n_steps);
    let mut diag = PicardDiagnostics {
        increments: Vec::new(),
        iterations: 0,
        converged: false,
        tolerance,
    };
    for _ in 0..scheme.params.picard_max_iter {
        let next = solve_frozen(phi, &prev, horizon, lag, scheme)?;
        let inc = next.sup_diff(&prev)?;
        diag.increments.push(inc);
        diag.iterations += 1;
        prev = next;
        if inc <= tolerance {
            diag.converged = true;
            break;
        }
    }
    Ok((prev, diag))
}

/// `T_t^- phi`.
pub fn t_minus(phi: &GridFunction, t: f64, lag: &LagrangianModel, scheme: &Scheme) -> Result<GridFunction, SchemeError> {
    if t < 0.0 {
        return Err(SchemeError::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(phi.clone());
    }
    Ok(picard(phi, t, lag, scheme)?.0.last())
}

/// Forward evolution `s -> T_s^+ phi` on `[0, t]`, as snapshots.
pub fn forward_field(
    phi: &GridFunction,
    t: f64,
    lag: &LagrangianModel,
    scheme: &Scheme,
) -> Result<(SpaceTimeField, PicardDiagnostics), SchemeError> {
    let (field, diag) = picard(&phi.map(|v| -v), t, &lag.reflected(), scheme)?;
    Ok((field.negated(), diag))
}

/// `T_t^+ phi = -Tbar_t^-(-phi)`.
pub fn t_plus(phi: &GridFunction, t: f64, lag: &LagrangianModel, scheme: &Scheme) -> Result<GridFunction, SchemeError> {
    if t < 0.0 {
        return Err(SchemeError::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(phi.clone());
    }
    Ok(forward_field(phi, t, lag, scheme)?.0.last())
}
