//! Flat periodic domains (circle and 2-torus), nodal grid functions and
//! time-indexed fields.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Bindings, ExprError, Expression};
use crate::io::fmt17;

/// A point (or a velocity) in the fundamental domain. The second component is
/// ignored, and kept at zero, on the circle.
pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum GridError {
    #[error("dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("axis {axis}: need at least 4 nodes, got {count}")]
    TooFewNodes { axis: usize, count: usize },
    #[error("axis {axis}: period length must be positive and finite, got {length}")]
    Length { axis: usize, length: f64 },
    #[error("grid functions live on different grids")]
    Mismatch,
    #[error("expected {expected} values, got {got}")]
    Count { expected: usize, got: usize },
    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },
    #[error("expression error at node {node}: {source}")]
    Expression { node: usize, source: ExprError },
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform periodic grid. Along an axis of period `L` with `N` nodes the
/// nodes sit at `-L/2 + (i+1) L/N`, so the fundamental domain is
/// `(-L/2, L/2]` and its right endpoint is a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    dim: usize,
    lengths: [f64; 2],
    counts: [usize; 2],
}

impl PeriodicGrid {
    pub fn new(dim: usize, lengths: &[f64], counts: &[usize]) -> Result<Self, GridError> {
        if !(1..=2).contains(&dim) || lengths.len() != dim || counts.len() != dim {
            return Err(GridError::Dimension(dim));
        }
        let mut grid = PeriodicGrid {
            dim,
            lengths: [1.0; 2],
            counts: [1; 2],
        };
        for axis in 0..dim {
            if !(lengths[axis].is_finite() && lengths[axis] > 0.0) {
                return Err(GridError::Length {
                    axis,
                    length: lengths[axis],
                });
            }
            if counts[axis] < 4 {
                return Err(GridError::TooFewNodes {
                    axis,
                    count: counts[axis],
                });
            }
            grid.lengths[axis] = lengths[axis];
            grid.counts[axis] = counts[axis];
        }
        Ok(grid)
    }

    pub fn circle(length: f64, n: usize) -> Result<Self, GridError> {
        Self::new(1, &[length], &[n])
    }

    pub fn torus(lengths: [f64; 2], counts: [usize; 2]) -> Result<Self, GridError> {
        Self::new(2, &lengths, &counts)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.counts[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.counts[axis] as f64
    }

    /// Smallest spacing over all axes.
    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Node index from per-axis indices; the first axis runs fastest.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix + self.counts[0] * iy
    }

    pub fn axis_indices(&self, node: usize) -> [usize; 2] {
        [node % self.counts[0], node / self.counts[0]]
    }

    fn coord(&self, axis: usize, i: usize) -> f64 {
        let l = self.lengths[axis];
        -0.5 * l + l * (i + 1) as f64 / self.counts[axis] as f64
    }

    pub fn node(&self, node: usize) -> Point {
        let [ix, iy] = self.axis_indices(node);
        let mut p = [self.coord(0, ix), 0.0];
        if self.dim == 2 {
            p[1] = self.coord(1, iy);
        }
        p
    }

    pub fn nodes(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    fn wrap_axis(&self, axis: usize, x: f64) -> f64 {
        let l = self.lengths[axis];
        let mut r = (x + 0.5 * l).rem_euclid(l);
        if r == 0.0 {
            r = l;
        }
        r - 0.5 * l
    }

    /// Maps a point to its representative in the fundamental domain.
    pub fn wrap(&self, p: Point) -> Point {
        let mut q = [self.wrap_axis(0, p[0]), 0.0];
        if self.dim == 2 {
            q[1] = self.wrap_axis(1, p[1]);
        }
        q
    }

    /// Signed shortest displacement along one axis, in `[-L/2, L/2]`.
    fn axis_delta(&self, axis: usize, a: f64, b: f64) -> f64 {
        let l = self.lengths[axis];
        let d = (b - a).rem_euclid(l);
        if d > 0.5 * l {
            d - l
        } else {
            d
        }
    }

    /// Quotient (flat) distance.
    pub fn distance(&self, a: Point, b: Point) -> f64 {
        let mut s = 0.0;
        for axis in 0..self.dim {
            let d = self.axis_delta(axis, a[axis], b[axis]);
            s += d * d;
        }
        s.sqrt()
    }

    /// Fractional node coordinate along an axis: node `i` sits at `i`.
    fn axis_position(&self, axis: usize, x: f64) -> f64 {
        let x = self.wrap_axis(axis, x);
        let l = self.lengths[axis];
        let s = (x + 0.5 * l) * self.counts[axis] as f64 / l - 1.0;
        let r = s.round();
        if (s - r).abs() < 1e-10 {
            r
        } else {
            s
        }
    }

    fn axis_cell(&self, axis: usize, x: f64) -> (usize, usize, f64) {
        let n = self.counts[axis] as i64;
        let s = self.axis_position(axis, x);
        let k = s.floor();
        let w = s - k;
        let k = k as i64;
        (k.rem_euclid(n) as usize, (k + 1).rem_euclid(n) as usize, w)
    }

    pub fn nearest_node(&self, p: Point) -> usize {
        let mut idx = [0usize; 2];
        for axis in 0..self.dim {
            let n = self.counts[axis] as i64;
            let s = self.axis_position(axis, p[axis]).round() as i64;
            idx[axis] = s.rem_euclid(n) as usize;
        }
        self.index(idx[0], idx[1])
    }

    /// The node together with its neighbours in the surrounding `3^d` box.
    pub fn ring(&self, node: usize) -> Vec<usize> {
        let [ix, iy] = self.axis_indices(node);
        let nx = self.counts[0] as i64;
        let ny = self.counts[1] as i64;
        let mut out = Vec::with_capacity(9);
        let dys: &[i64] = if self.dim == 2 { &[-1, 0, 1] } else { &[0] };
        for &dy in dys {
            for dx in [-1i64, 0, 1] {
                let jx = (ix as i64 + dx).rem_euclid(nx) as usize;
                let jy = (iy as i64 + dy).rem_euclid(ny) as usize;
                out.push(self.index(jx, jy));
            }
        }
        out
    }
}

/// Nodal values of a function on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Count {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { node, value });
        }
        Ok(GridFunction { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridFunction { grid, values }
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        GridFunction {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(Point) -> f64) -> Self {
        GridFunction {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    /// Evaluates an expression in `x` (and `y` on the torus) at every node.
    pub fn from_expression(grid: PeriodicGrid, expr: &Expression) -> Result<Self, GridError> {
        let values = grid
            .nodes()
            .enumerate()
            .map(|(node, p)| {
                let b = Bindings {
                    x: p[0],
                    y: p[1],
                    u: 0.0,
                };
                expr.eval(&b)
                    .map_err(|source| GridError::Expression { node, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Periodic (bi)linear interpolation; exact at nodes.
    pub fn interpolate(&self, p: Point) -> f64 {
        interpolate_values(&self.grid, &self.values, p)
    }

    /// `max_i |f_i - g_i|`.
    pub fn sup_norm_diff(&self, other: &GridFunction) -> Result<f64, GridError> {
        if self.grid != other.grid {
            return Err(GridError::Mismatch);
        }
        Ok(sup_diff(&self.values, &other.values))
    }

    pub fn to_csv(&self) -> String {
        values_to_csv(&self.grid, &self.values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), GridError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Reads the CSV layout produced by [`GridFunction::to_csv`]. Coordinates
    /// must match the grid nodes.
    pub fn from_csv(grid: PeriodicGrid, text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let expected_header = if grid.dim() == 1 { "x,value" } else { "x,y,value" };
        match lines.next() {
            Some((_, h)) if h.trim() == expected_header => {}
            Some((i, _)) => {
                return Err(GridError::Csv {
                    line: i + 1,
                    message: format!("expected header `{expected_header}`"),
                })
            }
            None => {
                return Err(GridError::Csv {
                    line: 1,
                    message: format!("expected header `{expected_header}`"),
                })
            }
        }
        let mut values = Vec::with_capacity(grid.len());
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != grid.dim() + 1 {
                return Err(GridError::Csv {
                    line: i + 1,
                    message: format!("expected {} fields", grid.dim() + 1),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| GridError::Csv {
                    line: i + 1,
                    message: e.to_string(),
                })
            };
            let node = values.len();
            if node >= grid.len() {
                return Err(GridError::Count {
                    expected: grid.len(),
                    got: node + 1,
                });
            }
            let p = grid.node(node);
            for (axis, &coord) in p.iter().enumerate().take(grid.dim()) {
                let c = parse(fields[axis])?;
                if grid.axis_delta(axis, c, coord).abs() > 1e-9 * grid.spacing(axis) {
                    return Err(GridError::Csv {
                        line: i + 1,
                        message: format!("coordinate {c} does not match node {node}"),
                    });
                }
            }
            values.push(parse(fields[grid.dim()])?);
        }
        Self::new(grid, values)
    }
}

pub(crate) fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub(crate) fn interpolate_values(grid: &PeriodicGrid, values: &[f64], p: Point) -> f64 {
    let (i0, i1, wx) = grid.axis_cell(0, p[0]);
    if grid.dim() == 1 {
        return (1.0 - wx) * values[i0] + wx * values[i1];
    }
    let (j0, j1, wy) = grid.axis_cell(1, p[1]);
    let a = (1.0 - wx) * values[grid.index(i0, j0)] + wx * values[grid.index(i1, j0)];
    let b = (1.0 - wx) * values[grid.index(i0, j1)] + wx * values[grid.index(i1, j1)];
    (1.0 - wy) * a + wy * b
}

pub(crate) fn values_to_csv(grid: &PeriodicGrid, values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 48);
    out.push_str(if grid.dim() == 1 { "x,value\n" } else { "x,y,value\n" });
    for (i, v) in values.iter().enumerate() {
        let p = grid.node(i);
        if grid.dim() == 1 {
            let _ = writeln!(out, "{},{}", fmt17(p[0]), fmt17(*v));
        } else {
            let _ = writeln!(out, "{},{},{}", fmt17(p[0]), fmt17(p[1]), fmt17(*v));
        }
    }
    out
}

/// Argmin velocities recorded by one semi-Lagrangian step, flattened as
/// `dim` components per node.
#[derive(Debug, Clone, PartialEq)]
pub struct StepArgmins {
    /// Minimising velocity on the discrete velocity grid.
    pub grid_velocity: Vec<f64>,
    /// Sub-grid estimate from a three-point parabolic fit around the grid argmin.
    pub refined_velocity: Vec<f64>,
    /// Number of nodes whose grid argmin sits on the velocity bound.
    pub saturated: usize,
}

/// Snapshots `u(., n dt)` for `n = 0..=n_steps` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: PeriodicGrid,
    dt: f64,
    snapshots: Vec<Vec<f64>>,
    /// `argmins[n]` belongs to the step from `t_n` to `t_{n+1}`.
    argmins: Option<Vec<StepArgmins>>,
}

impl SpaceTimeField {
    pub fn new(initial: &GridFunction, dt: f64) -> Self {
        SpaceTimeField {
            grid: initial.grid,
            dt,
            snapshots: vec![initial.values.clone()],
            argmins: None,
        }
    }

    /// `n_steps + 1` copies of `f`.
    pub fn constant_in_time(f: &GridFunction, dt: f64, n_steps: usize) -> Self {
        SpaceTimeField {
            grid: f.grid,
            dt,
            snapshots: vec![f.values.clone(); n_steps + 1],
            argmins: None,
        }
    }

    /// Field with the given snapshots, the first at `t = 0`.
    pub fn from_snapshots(snapshots: &[GridFunction], dt: f64) -> Result<Self, GridError> {
        let first = snapshots.first().ok_or(GridError::Count { expected: 1, got: 0 })?;
        let mut field = SpaceTimeField::new(first, dt);
        for s in &snapshots[1..] {
            if s.grid != first.grid {
                return Err(GridError::Mismatch);
            }
            field.push(s.values.clone(), None);
        }
        Ok(field)
    }

    pub(crate) fn push(&mut self, values: Vec<f64>, argmins: Option<StepArgmins>) {
        debug_assert_eq!(values.len(), self.grid.len());
        self.snapshots.push(values);
        if let Some(a) = argmins {
            let n = self.snapshots.len() - 2;
            let list = self.argmins.get_or_insert_with(Vec::new);
            debug_assert_eq!(list.len(), n);
            list.push(a);
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    pub fn snapshot_values(&self, n: usize) -> &[f64] {
        &self.snapshots[n]
    }

    pub fn snapshot(&self, n: usize) -> GridFunction {
        GridFunction::from_values_unchecked(self.grid, self.snapshots[n].clone())
    }

    pub fn last(&self) -> GridFunction {
        self.snapshot(self.n_steps())
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &[f64]> {
        self.snapshots.iter().map(Vec::as_slice)
    }

    pub fn argmins(&self) -> Option<&[StepArgmins]> {
        self.argmins.as_deref()
    }

    /// Total number of saturated argmins over all recorded steps.
    pub fn saturated_argmins(&self) -> usize {
        self.argmins
            .as_ref()
            .map_or(0, |a| a.iter().map(|s| s.saturated).sum())
    }

    /// Largest nodal difference over all shared snapshots.
    pub fn sup_diff(&self, other: &SpaceTimeField) -> Result<f64, GridError> {
        if self.grid != other.grid || self.snapshots.len() != other.snapshots.len() {
            return Err(GridError::Mismatch);
        }
        Ok(self
            .snapshots
            .iter()
            .zip(&other.snapshots)
            .fold(0.0, |m, (a, b)| m.max(sup_diff(a, b))))
    }

    /// Pointwise negation, used by the forward semigroup.
    pub(crate) fn negated(mut self) -> Self {
        for s in &mut self.snapshots {
            for v in s.iter_mut() {
                *v = -*v;
            }
        }
        if let Some(argmins) = &mut self.argmins {
            for a in argmins {
                for v in a.grid_velocity.iter_mut().chain(a.refined_velocity.iter_mut()) {
                    *v = -*v;
                }
            }
        }
        self
    }

    /// Appends `next`, whose first snapshot must equal this field's last one.
    pub fn append(&mut self, next: SpaceTimeField) -> Result<(), GridError> {
        if self.grid != next.grid
            || self.dt != next.dt
            || self.snapshots.last() != next.snapshots.first()
        {
            return Err(GridError::Mismatch);
        }
        let had_argmins = self.argmins.is_some() || self.n_steps() == 0;
        let mut snaps = next.snapshots.into_iter();
        snaps.next();
        self.snapshots.extend(snaps);
        match (had_argmins, next.argmins) {
            (true, Some(a)) => self.argmins.get_or_insert_with(Vec::new).extend(a),
            _ => self.argmins = None,
        }
        Ok(())
    }

    /// Writes `snapshot_NNNNNN.csv` files into `dir`.
    pub fn write_snapshots(&self, dir: &Path) -> Result<Vec<String>, GridError> {
        std::fs::create_dir_all(dir)?;
        let mut names = Vec::with_capacity(self.snapshots.len());
        for (n, s) in self.snapshots.iter().enumerate() {
            let name = format!("snapshot_{n:06}.csv");
            std::fs::write(dir.join(&name), values_to_csv(&self.grid, s))?;
            names.push(name);
        }
        Ok(names)
    }
}
