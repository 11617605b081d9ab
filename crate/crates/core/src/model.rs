//! Hamiltonians `H(x, u, p)`, their Lagrangians and the discrete Legendre
//! transform connecting them.
//!
//! Two families are supported. `QuadraticContact` is
//! `H = g(u) + a |p|^2 / 2 + V(x)` with closed-form Lagrangian
//! `L = -g(u) + |v|^2 / (2a) - V(x)`. `Tabulated` samples `H` on an
//! `(x, u, p)` lattice (circle only) and obtains `L` by a discrete sup over
//! the sampled momenta; velocities whose sup is attained on the momentum
//! boundary are outside the effective domain and evaluate to `+inf`.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::expr::{Bindings, ExprError, Expression, Var};
use crate::grid::Point;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("expression error: {0}")]
    Expression(#[from] ExprError),
    #[error("momentum {p} outside the tabulated range [-{p_max}, {p_max}]")]
    MomentumRange { p: f64, p_max: f64 },
    #[error("H is not convex in p at x = {x}, u = {u}, p = {p}")]
    NonConvex { x: f64, u: f64, p: f64 },
    #[error("momentum grid must be uniform, symmetric and contain at least 3 points")]
    MomentumGrid,
    #[error("velocity grid must be uniform, symmetric and contain at least 2 points")]
    VelocityGrid,
    #[error("kinetic coefficient must be positive, got {0}")]
    Kinetic(f64),
    #[error("lambda must be finite and nonnegative, got {0}")]
    Lambda(f64),
    #[error("p_max must be positive, got {0}")]
    PMax(f64),
    #[error("tabulated Hamiltonians are only supported on the circle")]
    TabulatedDimension,
    #[error("hamiltonian table: {0}")]
    Table(String),
}

/// `H` on an `(x, u, p)` lattice, stored with `p` fastest, then `u`, then `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTable {
    xs: Vec<f64>,
    us: Vec<f64>,
    ps: Vec<f64>,
    values: Vec<f64>,
}

impl HamiltonianTable {
    pub fn new(xs: Vec<f64>, us: Vec<f64>, ps: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        let sorted = |a: &[f64]| a.windows(2).all(|w| w[0] < w[1]);
        if xs.is_empty() || us.len() < 2 || !sorted(&xs) || !sorted(&us) {
            return Err(ModelError::Table(
                "x and u samples must be strictly increasing, with at least two u samples".into(),
            ));
        }
        check_symmetric_uniform(&ps, 3).map_err(|_| ModelError::MomentumGrid)?;
        if values.len() != xs.len() * us.len() * ps.len() {
            return Err(ModelError::Table(format!(
                "expected {} values, got {}",
                xs.len() * us.len() * ps.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Table("non-finite H value".into()));
        }
        Ok(HamiltonianTable { xs, us, ps, values })
    }

    /// Builds a table by sampling `f(x, u, p)`.
    pub fn sample(xs: Vec<f64>, us: Vec<f64>, ps: Vec<f64>, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self, ModelError> {
        let mut values = Vec::with_capacity(xs.len() * us.len() * ps.len());
        for &x in &xs {
            for &u in &us {
                for &p in &ps {
                    values.push(f(x, u, p));
                }
            }
        }
        Self::new(xs, us, ps, values)
    }

    /// Parses CSV with header `x,u,p,H`; rows may come in any order but must
    /// cover the full lattice.
    pub fn from_csv(text: &str) -> Result<Self, ModelError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.replace(' ', "") == "x,u,p,H" => {}
            _ => return Err(ModelError::Table("expected header `x,u,p,H`".into())),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ModelError::Table(format!("row {}: {e}", i + 1)))?;
            if f.len() != 4 {
                return Err(ModelError::Table(format!("row {}: expected 4 fields", i + 1)));
            }
            rows.push([f[0], f[1], f[2], f[3]]);
        }
        let uniq = |k: usize| -> Vec<f64> {
            let set: BTreeSet<u64> = rows.iter().map(|r| ordered_bits(r[k])).collect();
            set.into_iter().map(from_ordered_bits).collect()
        };
        let (xs, us, ps) = (uniq(0), uniq(1), uniq(2));
        let mut values = vec![f64::NAN; xs.len() * us.len() * ps.len()];
        let find = |a: &[f64], v: f64| a.binary_search_by(|p| p.total_cmp(&v)).expect("sample present");
        for r in &rows {
            let idx = (find(&xs, r[0]) * us.len() + find(&us, r[1])) * ps.len() + find(&ps, r[2]);
            values[idx] = r[3];
        }
        if values.iter().any(|v| v.is_nan()) || rows.len() != values.len() {
            return Err(ModelError::Table("rows do not form a complete x-u-p lattice".into()));
        }
        Self::new(xs, us, ps, values)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,u,p,H\n");
        for (ix, &x) in self.xs.iter().enumerate() {
            for (iu, &u) in self.us.iter().enumerate() {
                for (ip, &p) in self.ps.iter().enumerate() {
                    let v = self.values[(ix * self.us.len() + iu) * self.ps.len() + ip];
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        crate::io::fmt17(x),
                        crate::io::fmt17(u),
                        crate::io::fmt17(p),
                        crate::io::fmt17(v)
                    ));
                }
            }
        }
        out
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn us(&self) -> &[f64] {
        &self.us
    }

    pub fn ps(&self) -> &[f64] {
        &self.ps
    }

    pub fn p_max(&self) -> f64 {
        *self.ps.last().expect("nonempty")
    }

    fn at(&self, ix: usize, iu: usize, ip: usize) -> f64 {
        self.values[(ix * self.us.len() + iu) * self.ps.len() + ip]
    }

    /// Trilinear interpolation. `x` is clamped to the sampled range, `u` is
    /// extrapolated linearly from the boundary cell.
    pub fn eval(&self, x: f64, u: f64, p: f64) -> Result<f64, ModelError> {
        let p_max = self.p_max();
        if !(p.abs() <= p_max * (1.0 + 1e-12)) {
            return Err(ModelError::MomentumRange { p, p_max });
        }
        let (ix0, ix1, wx) = clamped_cell(&self.xs, x);
        let (iu0, iu1, wu) = extrapolated_cell(&self.us, u);
        let (ip0, ip1, wp) = clamped_cell(&self.ps, p);
        let along_p = |ix, iu| (1.0 - wp) * self.at(ix, iu, ip0) + wp * self.at(ix, iu, ip1);
        let along_u = |ix| (1.0 - wu) * along_p(ix, iu0) + wu * along_p(ix, iu1);
        Ok((1.0 - wx) * along_u(ix0) + wx * along_u(ix1))
    }
}

fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn from_ordered_bits(b: u64) -> f64 {
    if b >> 63 == 1 {
        f64::from_bits(b & !(1 << 63))
    } else {
        f64::from_bits(!b)
    }
}

/// Cell `(i0, i1, w)` of a sorted sample list, clamping outside the range.
fn clamped_cell(a: &[f64], x: f64) -> (usize, usize, f64) {
    if a.len() == 1 || x <= a[0] {
        return (0, 0, 0.0);
    }
    let last = a.len() - 1;
    if x >= a[last] {
        return (last, last, 0.0);
    }
    let i = a.partition_point(|&s| s <= x) - 1;
    (i, i + 1, (x - a[i]) / (a[i + 1] - a[i]))
}

/// Like [`clamped_cell`] but weights leave `[0, 1]` outside the range.
fn extrapolated_cell(a: &[f64], x: f64) -> (usize, usize, f64) {
    let last = a.len() - 1;
    let i = if x <= a[0] {
        0
    } else if x >= a[last] {
        last - 1
    } else {
        a.partition_point(|&s| s <= x) - 1
    };
    (i, i + 1, (x - a[i]) / (a[i + 1] - a[i]))
}

fn check_symmetric_uniform(grid: &[f64], min_len: usize) -> Result<(), ()> {
    if grid.len() < min_len {
        return Err(());
    }
    let n = grid.len();
    let step = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    if !(step > 0.0) {
        return Err(());
    }
    let tol = 1e-9 * step;
    for (i, &g) in grid.iter().enumerate() {
        if (g - (grid[0] + i as f64 * step)).abs() > tol || (g + grid[n - 1 - i]).abs() > tol {
            return Err(());
        }
    }
    Ok(())
}

/// `n` equally spaced points on `[-r, r]`, exactly symmetric, with `0`
/// included when `n` is odd.
pub fn symmetric_grid(r: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let half = (n - 1) as f64 / 2.0;
    let step = r / half;
    (0..n).map(|i| (i as f64 - half) * step).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianFamily {
    /// `H = g(u) + a |p|^2 / 2 + V(x)`.
    QuadraticContact {
        coupling: Expression,
        potential: Expression,
        kinetic: f64,
    },
    Tabulated(HamiltonianTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianModel {
    pub family: HamiltonianFamily,
    /// Declared uniform Lipschitz constant in `u`.
    pub lambda: f64,
    pub p_max: f64,
    /// Whether the model declares `H` strictly decreasing in `u`.
    pub strictly_decreasing: bool,
    dim: usize,
}

impl HamiltonianModel {
    /// Parses `coupling` as `g(u)` and `potential` as `V(x)` (`V(x, y)` when `dim == 2`).
    pub fn quadratic_contact(
        coupling: &str,
        potential: &str,
        kinetic: f64,
        lambda: f64,
        p_max: f64,
        dim: usize,
    ) -> Result<Self, ModelError> {
        let space: &[Var] = if dim == 2 { &[Var::X, Var::Y] } else { &[Var::X] };
        let family = HamiltonianFamily::QuadraticContact {
            coupling: Expression::parse(coupling, &[Var::U])?,
            potential: Expression::parse(potential, space)?,
            kinetic,
        };
        Self::new(family, lambda, p_max, dim)
    }

    pub fn tabulated(table: HamiltonianTable, lambda: f64) -> Result<Self, ModelError> {
        let p_max = table.p_max();
        Self::new(HamiltonianFamily::Tabulated(table), lambda, p_max, 1)
    }

    pub fn new(family: HamiltonianFamily, lambda: f64, p_max: f64, dim: usize) -> Result<Self, ModelError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(ModelError::Lambda(lambda));
        }
        if !(p_max > 0.0) {
            return Err(ModelError::PMax(p_max));
        }
        match &family {
            HamiltonianFamily::QuadraticContact { kinetic, .. } if !(*kinetic > 0.0) => {
                return Err(ModelError::Kinetic(*kinetic))
            }
            HamiltonianFamily::Tabulated(_) if dim != 1 => return Err(ModelError::TabulatedDimension),
            _ => {}
        }
        Ok(HamiltonianModel {
            family,
            lambda,
            p_max,
            strictly_decreasing: false,
            dim,
        })
    }

    pub fn with_strictly_decreasing(mut self, declared: bool) -> Self {
        self.strictly_decreasing = declared;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: Point, u: f64, p: Point) -> Result<f64, ModelError> {
        hamiltonian_eval(self, x, u, p)
    }

    /// Sample abscissae used by the numerical checks.
    fn sample_xs(&self, count: usize) -> Vec<f64> {
        match &self.family {
            HamiltonianFamily::Tabulated(t) => t.xs.clone(),
            HamiltonianFamily::QuadraticContact { .. } => symmetric_grid(1.0, count.max(2)),
        }
    }

    fn sample_point(&self, x: f64) -> Point {
        if self.dim == 2 {
            [x, -0.5 * x]
        } else {
            [x, 0.0]
        }
    }

    /// Midpoint convexity in `p` on a sample lattice.
    pub fn check_convexity(&self, samples: usize) -> Result<(), ModelError> {
        let ps = symmetric_grid(self.p_max, samples.max(3) | 1);
        let us = symmetric_grid(10.0, samples.max(2));
        for x in self.sample_xs(samples) {
            for &u in &us {
                let hs = ps
                    .iter()
                    .map(|&p| self.eval(self.sample_point(x), u, [p, 0.0]))
                    .collect::<Result<Vec<_>, _>>()?;
                for k in 1..hs.len() - 1 {
                    let avg = 0.5 * (hs[k - 1] + hs[k + 1]);
                    if hs[k] > avg + 1e-9 * (1.0 + avg.abs()) {
                        return Err(ModelError::NonConvex { x, u, p: ps[k] });
                    }
                }
            }
        }
        Ok(())
    }

    /// Coercivity proxy: `H(x, 0, +-p_max) >= H(x, 0, 0) + margin` at every sampled `x`.
    pub fn check_coercivity(&self, samples: usize, margin: f64) -> Result<bool, ModelError> {
        for x in self.sample_xs(samples) {
            let at = |p: f64| self.eval(self.sample_point(x), 0.0, [p, 0.0]);
            let h0 = at(0.0)?;
            if at(self.p_max)? < h0 + margin || at(-self.p_max)? < h0 + margin {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Numerical check of strict decrease in `u` on a sample lattice.
    pub fn check_strictly_decreasing(&self, samples: usize) -> Result<bool, ModelError> {
        let us = symmetric_grid(10.0, samples.max(2));
        let ps = symmetric_grid(self.p_max, 5);
        for x in self.sample_xs(samples) {
            for &p in &ps {
                let mut prev = None;
                for &u in &us {
                    let h = self.eval(self.sample_point(x), u, [p, 0.0])?;
                    if prev.is_some_and(|q| h >= q) {
                        return Ok(false);
                    }
                    prev = Some(h);
                }
            }
        }
        Ok(true)
    }
}

/// `H(x, u, p)`: exact for the quadratic family, interpolated for tables.
pub fn hamiltonian_eval(model: &HamiltonianModel, x: Point, u: f64, p: Point) -> Result<f64, ModelError> {
    match &model.family {
        HamiltonianFamily::QuadraticContact {
            coupling,
            potential,
            kinetic,
        } => {
            let g = coupling.eval(&Bindings::at_u(u))?;
            let v = potential.eval(&Bindings {
                x: x[0],
                y: x[1],
                u: 0.0,
            })?;
            Ok(g + kinetic * (p[0] * p[0] + p[1] * p[1]) / 2.0 + v)
        }
        HamiltonianFamily::Tabulated(t) => t.eval(x[0], u, p[0]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzWitness {
    pub x: f64,
    pub p: f64,
    pub u1: f64,
    pub u2: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    pub declared: f64,
    pub max_slope: f64,
    pub pass: bool,
    /// Sample pair realising the largest slope.
    pub witness: Option<LipschitzWitness>,
}

/// Largest observed `|H(x,u,p) - H(x,u',p)| / |u - u'|` over consecutive
/// samples of `u` in `[-10, 10]` (the tabulated `u` range for tables).
pub fn validate_lipschitz(model: &HamiltonianModel, sample_count: usize) -> Result<LipschitzReport, ModelError> {
    let n = sample_count.max(2);
    let (u_lo, u_hi) = match &model.family {
        HamiltonianFamily::Tabulated(t) => (t.us[0], *t.us.last().expect("nonempty")),
        _ => (-10.0, 10.0),
    };
    let us: Vec<f64> = (0..n)
        .map(|i| u_lo + (u_hi - u_lo) * i as f64 / (n - 1) as f64)
        .collect();
    let ps = match &model.family {
        HamiltonianFamily::Tabulated(t) => t.ps.clone(),
        _ => symmetric_grid(model.p_max, n),
    };
    let mut best: Option<LipschitzWitness> = None;
    for x in model.sample_xs(n) {
        for &p in &ps {
            let point = model.sample_point(x);
            let mut prev = model.eval(point, us[0], [p, 0.0])?;
            for w in us.windows(2) {
                let h = model.eval(point, w[1], [p, 0.0])?;
                let slope = (h - prev).abs() / (w[1] - w[0]);
                if best.as_ref().is_none_or(|b| slope > b.slope) {
                    best = Some(LipschitzWitness {
                        x,
                        p,
                        u1: w[0],
                        u2: w[1],
                        slope,
                    });
                }
                prev = h;
            }
        }
    }
    let max_slope = best.as_ref().map_or(0.0, |b| b.slope);
    let pass = max_slope <= model.lambda * (1.0 + 1e-6);
    Ok(LipschitzReport {
        declared: model.lambda,
        max_slope,
        pass,
        witness: best,
    })
}

/// One row of a discrete Legendre transform at fixed `(x, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreRow {
    pub velocities: Vec<f64>,
    /// `max_p { p v - H(x, u, p) }` over the momentum grid.
    pub values: Vec<f64>,
    pub argmax_p: Vec<f64>,
    /// The maximiser sits on the momentum boundary: the true conjugate may be
    /// larger (possibly infinite), so the entry is not usable as finite.
    pub edge_active: Vec<bool>,
}

impl LegendreRow {
    /// Value with `+inf` in place of edge-active entries.
    pub fn finite_value(&self, j: usize) -> f64 {
        if self.edge_active[j] {
            f64::INFINITY
        } else {
            self.values[j]
        }
    }
}

/// Discrete convex conjugate in `p` at fixed `(x, u)` (circle only: momenta
/// and velocities are scalars).
pub fn legendre_transform(
    model: &HamiltonianModel,
    x: Point,
    u: f64,
    v_grid: &[f64],
    p_grid: &[f64],
) -> Result<LegendreRow, ModelError> {
    check_symmetric_uniform(p_grid, 3).map_err(|_| ModelError::MomentumGrid)?;
    let hs = p_grid
        .iter()
        .map(|&p| model.eval(x, u, [p, 0.0]))
        .collect::<Result<Vec<_>, _>>()?;
    for k in 1..hs.len() - 1 {
        let avg = 0.5 * (hs[k - 1] + hs[k + 1]);
        if hs[k] > avg + 1e-9 * (1.0 + avg.abs()) {
            return Err(ModelError::NonConvex { x: x[0], u, p: p_grid[k] });
        }
    }
    // visit momenta by increasing |p| so that strict improvement keeps the smallest |p|
    let mut order: Vec<usize> = (0..p_grid.len()).collect();
    order.sort_by(|&a, &b| p_grid[a].abs().total_cmp(&p_grid[b].abs()).then(a.cmp(&b)));
    let last = p_grid.len() - 1;
    let mut row = LegendreRow {
        velocities: v_grid.to_vec(),
        values: Vec::with_capacity(v_grid.len()),
        argmax_p: Vec::with_capacity(v_grid.len()),
        edge_active: Vec::with_capacity(v_grid.len()),
    };
    for &v in v_grid {
        let mut best = f64::NEG_INFINITY;
        let mut arg = order[0];
        for &k in &order {
            let val = p_grid[k] * v - hs[k];
            if val > best {
                best = val;
                arg = k;
            }
        }
        row.values.push(best);
        row.argmax_p.push(p_grid[arg]);
        row.edge_active.push(arg == 0 || arg == last);
    }
    Ok(row)
}

/// Lagrangian on an `(x, u)` lattice with a shared velocity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreTable {
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
    pub velocities: Vec<f64>,
    /// Row for `(xs[i], us[j])` at index `i * us.len() + j`.
    pub rows: Vec<LegendreRow>,
    /// Finiteness per `(x, v)`: finite for every sampled `u`.
    pub finite: Vec<bool>,
}

impl LegendreTable {
    pub fn build(
        model: &HamiltonianModel,
        xs: Vec<f64>,
        us: Vec<f64>,
        velocities: Vec<f64>,
        p_grid: &[f64],
    ) -> Result<Self, ModelError> {
        check_symmetric_uniform(&velocities, 2).map_err(|_| ModelError::VelocityGrid)?;
        let mut rows = Vec::with_capacity(xs.len() * us.len());
        for &x in &xs {
            for &u in &us {
                rows.push(legendre_transform(model, model.sample_point(x), u, &velocities, p_grid)?);
            }
        }
        let mut finite = vec![true; xs.len() * velocities.len()];
        for ix in 0..xs.len() {
            for iu in 0..us.len() {
                let row = &rows[ix * us.len() + iu];
                for (j, &edge) in row.edge_active.iter().enumerate() {
                    if edge {
                        finite[ix * velocities.len() + j] = false;
                    }
                }
            }
        }
        Ok(LegendreTable {
            xs,
            us,
            velocities,
            rows,
            finite,
        })
    }

    /// Finiteness mask of the row at `(ix, iu)`, before intersecting over `u`.
    pub fn row_mask(&self, ix: usize, iu: usize) -> Vec<bool> {
        self.rows[ix * self.us.len() + iu]
            .edge_active
            .iter()
            .map(|e| !e)
            .collect()
    }

    fn entry(&self, ix: usize, iu: usize, j: usize) -> f64 {
        if self.finite[ix * self.velocities.len() + j] {
            self.rows[ix * self.us.len() + iu].values[j]
        } else {
            f64::INFINITY
        }
    }

    /// Linear in `v`, bilinear in `(x, u)`; `+inf` if any involved entry is infinite.
    pub fn eval(&self, x: f64, u: f64, v: f64) -> f64 {
        let vmax = *self.velocities.last().expect("nonempty");
        if !(v.abs() <= vmax * (1.0 + 1e-12)) {
            return f64::INFINITY;
        }
        let (ix0, ix1, wx) = clamped_cell(&self.xs, x);
        let (iu0, iu1, wu) = extrapolated_cell(&self.us, u);
        let (j0, j1, wv) = clamped_cell(&self.velocities, v);
        let along_v = |ix, iu| {
            let a = self.entry(ix, iu, j0);
            let b = self.entry(ix, iu, j1);
            if a.is_infinite() || (wv > 0.0 && b.is_infinite()) {
                f64::INFINITY
            } else if wv > 0.0 {
                (1.0 - wv) * a + wv * b
            } else {
                a
            }
        };
        let along_u = |ix| {
            let (a, b) = (along_v(ix, iu0), along_v(ix, iu1));
            if a.is_infinite() || b.is_infinite() {
                f64::INFINITY
            } else {
                (1.0 - wu) * a + wu * b
            }
        };
        let lo = along_u(ix0);
        if wx == 0.0 {
            return lo;
        }
        let hi = along_u(ix1);
        if lo.is_infinite() || hi.is_infinite() {
            f64::INFINITY
        } else {
            (1.0 - wx) * lo + wx * hi
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum LagrangianKind {
    Analytic {
        coupling: Expression,
        potential: Expression,
        kinetic: f64,
    },
    Tabulated(LegendreTable),
}

/// `L(x, u, v)`, possibly `+inf`. A reflected model evaluates
/// `L(x, -u, -v)`, the Lagrangian of the forward semigroup's dual problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianModel {
    kind: LagrangianKind,
    lambda: f64,
    reflected: bool,
}

/// Grids used when a Lagrangian has to be computed numerically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreOptions {
    pub v_max: f64,
    pub v_count: usize,
}

impl LagrangianModel {
    /// Closed form for the quadratic family; a discrete Legendre transform
    /// over the table's own momentum samples otherwise.
    pub fn from_hamiltonian(model: &HamiltonianModel, opts: LegendreOptions) -> Result<Self, ModelError> {
        let kind = match &model.family {
            HamiltonianFamily::QuadraticContact {
                coupling,
                potential,
                kinetic,
            } => LagrangianKind::Analytic {
                coupling: coupling.clone(),
                potential: potential.clone(),
                kinetic: *kinetic,
            },
            HamiltonianFamily::Tabulated(t) => LagrangianKind::Tabulated(LegendreTable::build(
                model,
                t.xs.clone(),
                t.us.clone(),
                symmetric_grid(opts.v_max, opts.v_count.max(2)),
                &t.ps,
            )?),
        };
        Ok(LagrangianModel {
            kind,
            lambda: model.lambda,
            reflected: false,
        })
    }

    /// Wraps a precomputed table.
    pub fn from_table(table: LegendreTable, lambda: f64) -> Self {
        LagrangianModel {
            kind: LagrangianKind::Tabulated(table),
            lambda,
            reflected: false,
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.kind, LagrangianKind::Analytic { .. })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_reflected(&self) -> bool {
        self.reflected
    }

    pub fn table(&self) -> Option<&LegendreTable> {
        match &self.kind {
            LagrangianKind::Tabulated(t) => Some(t),
            LagrangianKind::Analytic { .. } => None,
        }
    }

    /// `(x, u, v) -> L(x, -u, -v)`.
    pub fn reflected(&self) -> Self {
        LagrangianModel {
            kind: self.kind.clone(),
            lambda: self.lambda,
            reflected: !self.reflected,
        }
    }

    /// `-g(u) - V(x)`, the velocity-independent part of the analytic form.
    fn analytic_base(coupling: &Expression, potential: &Expression, x: Point, u: f64) -> Result<f64, ModelError> {
        let g = coupling.eval(&Bindings::at_u(u))?;
        let v = potential.eval(&Bindings {
            x: x[0],
            y: x[1],
            u: 0.0,
        })?;
        Ok(-g - v)
    }

    pub fn eval(&self, x: Point, u: f64, v: Point) -> Result<f64, ModelError> {
        let (u, v) = if self.reflected { (-u, [-v[0], -v[1]]) } else { (u, v) };
        match &self.kind {
            LagrangianKind::Analytic {
                coupling,
                potential,
                kinetic,
            } => {
                let base = Self::analytic_base(coupling, potential, x, u)?;
                Ok((v[0] * v[0] + v[1] * v[1]) / (2.0 * kinetic) + base)
            }
            LagrangianKind::Tabulated(t) => Ok(t.eval(x[0], u, v[0])),
        }
    }

    /// `out[j] = dt * L(x, u, velocities[j])`, bit-identical to calling
    /// [`LagrangianModel::eval`] per velocity.
    pub fn fill_step_costs(
        &self,
        x: Point,
        u: f64,
        velocities: &[Point],
        dt: f64,
        out: &mut [f64],
    ) -> Result<(), ModelError> {
        match &self.kind {
            LagrangianKind::Analytic {
                coupling,
                potential,
                kinetic,
            } => {
                let u = if self.reflected { -u } else { u };
                let base = Self::analytic_base(coupling, potential, x, u)?;
                for (o, v) in out.iter_mut().zip(velocities) {
                    *o = dt * ((v[0] * v[0] + v[1] * v[1]) / (2.0 * kinetic) + base);
                }
            }
            LagrangianKind::Tabulated(_) => {
                for (o, &v) in out.iter_mut().zip(velocities) {
                    *o = dt * self.eval(x, u, v)?;
                }
            }
        }
        Ok(())
    }
}

/// `L(x, u, v)` with `+inf` outside the effective domain.
pub fn lagrangian_eval(model: &LagrangianModel, x: Point, u: f64, v: Point) -> Result<f64, ModelError> {
    model.eval(x, u, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e1() -> HamiltonianModel {
        HamiltonianModel::quadratic_contact("-3*u", "0.5*x^2", 1.0, 3.0, 8.0, 1).unwrap()
    }

    fn abs_table() -> HamiltonianTable {
        HamiltonianTable::sample(
            symmetric_grid(1.0, 5),
            symmetric_grid(2.0, 5),
            symmetric_grid(4.0, 401),
            |_, _, p| p.abs(),
        )
        .unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let h = e1();
        assert_eq!(h.eval([0.0, 0.0], 0.0, [0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(h.eval([0.5, 0.0], 1.0, [0.0, 0.0]).unwrap(), -2.875);
        let h = HamiltonianModel::quadratic_contact("u", "0", 1.0, 1.0, 8.0, 1).unwrap();
        for x in [-0.9, 0.0, 0.3] {
            assert_eq!(h.eval([x, 0.0], 2.0, [1.0, 0.0]).unwrap(), 2.5);
        }
    }

    #[test]
    fn tabulated_interpolates_and_rejects_out_of_range() {
        let t = HamiltonianTable::sample(
            symmetric_grid(1.0, 5),
            symmetric_grid(2.0, 5),
            symmetric_grid(2.0, 9),
            |x, u, p| 2.0 * x - u + 0.5 * p,
        )
        .unwrap();
        let h = HamiltonianModel::tabulated(t, 1.0).unwrap();
        let v = h.eval([0.3, 0.0], 0.7, [0.25, 0.0]).unwrap();
        assert!((v - (0.6 - 0.7 + 0.125)).abs() < 1e-12);
        // linear extrapolation in u
        let v = h.eval([0.3, 0.0], 3.0, [0.25, 0.0]).unwrap();
        assert!((v - (0.6 - 3.0 + 0.125)).abs() < 1e-12);
        assert!(matches!(
            h.eval([0.0, 0.0], 0.0, [2.5, 0.0]),
            Err(ModelError::MomentumRange { .. })
        ));
    }

    #[test]
    fn table_csv_round_trip() {
        let t = abs_table();
        let back = HamiltonianTable::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert!(HamiltonianTable::from_csv("x,u,p,H\n0,0,0,1\n").is_err());
        assert!(HamiltonianTable::from_csv("a,b\n").is_err());
    }

    #[test]
    fn legendre_examples() {
        let quad = HamiltonianModel::quadratic_contact("0", "0", 1.0, 0.0, 4.0, 1).unwrap();
        let ps: Vec<f64> = symmetric_grid(4.0, 801);
        let row = legendre_transform(&quad, [0.0, 0.0], 0.0, &[1.0], &ps).unwrap();
        assert!((row.values[0] - 0.5).abs() < 1e-3);
        assert!(!row.edge_active[0]);

        let abs = HamiltonianModel::tabulated(abs_table(), 0.0).unwrap();
        let ps = abs_table().ps.clone();
        let row = legendre_transform(&abs, [0.0, 0.0], 0.0, &[0.5, 2.0], &ps).unwrap();
        assert_eq!(row.values[0], 0.0);
        assert!(!row.edge_active[0]);
        assert_eq!(row.argmax_p[0], 0.0);
        assert!(row.edge_active[1]);
        assert_eq!(row.finite_value(1), f64::INFINITY);

        let h = HamiltonianModel::quadratic_contact("-3*u", "0.125", 1.0, 3.0, 8.0, 1).unwrap();
        let row = legendre_transform(&h, [0.0, 0.0], 1.0, &[0.0], &symmetric_grid(8.0, 1601)).unwrap();
        assert!((row.values[0] - 2.875).abs() < 1e-12);
    }

    #[test]
    fn legendre_rejects_nonconvex_samples() {
        let t = HamiltonianTable::sample(vec![0.0], vec![0.0, 1.0], symmetric_grid(2.0, 21), |_, _, p| {
            -(p * p)
        })
        .unwrap();
        let h = HamiltonianModel::tabulated(t, 0.0).unwrap();
        let err = legendre_transform(&h, [0.0, 0.0], 0.0, &[0.0], &symmetric_grid(2.0, 21)).unwrap_err();
        assert!(matches!(err, ModelError::NonConvex { .. }));
        assert!(h.check_convexity(5).is_err());
        assert!(legendre_transform(&h, [0.0, 0.0], 0.0, &[0.0], &[0.0, 1.0, 3.0]).is_err());
    }

    #[test]
    fn lagrangian_examples() {
        let opts = LegendreOptions { v_max: 4.0, v_count: 81 };
        let l = LagrangianModel::from_hamiltonian(&e1(), opts).unwrap();
        assert!(l.is_analytic());
        assert_eq!(lagrangian_eval(&l, [0.5, 0.0], 1.0, [0.0, 0.0]).unwrap(), 2.875);

        let free = HamiltonianModel::quadratic_contact("0", "0", 1.0, 0.0, 8.0, 1).unwrap();
        let l = LagrangianModel::from_hamiltonian(&free, opts).unwrap();
        for (x, u) in [(0.1, -3.0), (0.9, 7.0)] {
            assert_eq!(l.eval([x, 0.0], u, [0.0, 0.0]).unwrap(), 0.0);
        }

        let abs = HamiltonianModel::tabulated(abs_table(), 0.0).unwrap();
        let l = LagrangianModel::from_hamiltonian(&abs, opts).unwrap();
        assert_eq!(l.eval([0.0, 0.0], 0.0, [2.0, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(l.eval([0.0, 0.0], 0.0, [0.5, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn reflection_negates_state_and_velocity() {
        let h = HamiltonianModel::quadratic_contact("-3*u + 0.1*u^2", "x", 2.0, 5.0, 8.0, 1).unwrap();
        let l = LagrangianModel::from_hamiltonian(&h, LegendreOptions { v_max: 4.0, v_count: 9 }).unwrap();
        let r = l.reflected();
        let a = r.eval([0.3, 0.0], 0.7, [1.5, 0.0]).unwrap();
        let b = l.eval([0.3, 0.0], -0.7, [-1.5, 0.0]).unwrap();
        assert_eq!(a, b);
        assert_eq!(r.reflected(), l);
    }

    #[test]
    fn step_costs_match_pointwise_evaluation() {
        let h = HamiltonianModel::quadratic_contact("sin(u)", "0.5*x^2 - 0.25*y", 1.5, 1.0, 8.0, 2).unwrap();
        let l = LagrangianModel::from_hamiltonian(&h, LegendreOptions { v_max: 2.0, v_count: 5 }).unwrap();
        let vs: Vec<Point> = vec![[0.0, 0.0], [1.0, -2.0], [-0.5, 0.5]];
        for model in [l.clone(), l.reflected()] {
            let mut out = vec![0.0; vs.len()];
            model.fill_step_costs([0.2, -0.4], 0.3, &vs, 0.01, &mut out).unwrap();
            for (o, &v) in out.iter().zip(&vs) {
                assert_eq!(*o, 0.01 * model.eval([0.2, -0.4], 0.3, v).unwrap());
            }
        }
    }

    #[test]
    fn lipschitz_examples() {
        let r = validate_lipschitz(&e1(), 21).unwrap();
        assert!(r.pass);
        assert!((r.max_slope - 3.0).abs() < 1e-9);

        let s = HamiltonianModel::quadratic_contact("sin(u)", "0", 1.0, 1.0, 8.0, 1).unwrap();
        assert!(validate_lipschitz(&s, 41).unwrap().pass);

        let q = HamiltonianModel::quadratic_contact("u^2", "0", 1.0, 1.0, 8.0, 1).unwrap();
        let r = validate_lipschitz(&q, 21).unwrap();
        assert!(!r.pass);
        let w = r.witness.unwrap();
        assert!(w.slope > 1.0);
        assert!((w.u1.abs() - 10.0).abs() < 1e-9 || (w.u2.abs() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn structural_checks() {
        let h = e1();
        assert!(h.check_convexity(11).is_ok());
        assert!(h.check_coercivity(11, 1.0).unwrap());
        assert!(h.check_strictly_decreasing(11).unwrap());
        let flat = HamiltonianModel::quadratic_contact("u", "0", 1.0, 1.0, 8.0, 1).unwrap();
        assert!(!flat.check_strictly_decreasing(11).unwrap());
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(matches!(
            HamiltonianModel::quadratic_contact("-3*u", "x", 0.0, 3.0, 8.0, 1),
            Err(ModelError::Kinetic(_))
        ));
        assert!(matches!(
            HamiltonianModel::quadratic_contact("-3*u", "x", 1.0, -1.0, 8.0, 1),
            Err(ModelError::Lambda(_))
        ));
        assert!(HamiltonianModel::quadratic_contact("-3*x", "x", 1.0, 3.0, 8.0, 1).is_err());
        assert!(HamiltonianModel::quadratic_contact("-3*u", "u", 1.0, 3.0, 8.0, 1).is_err());
        let t = abs_table();
        assert!(matches!(
            HamiltonianModel::new(HamiltonianFamily::Tabulated(t), 0.0, 4.0, 2),
            Err(ModelError::TabulatedDimension)
        ));
    }
}
