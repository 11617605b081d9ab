//! Long-time behaviour of the backward and forward semigroups: limits,
//! existence classification, conjugate pairs, Aubry sets and backward
//! minimising curves.

use serde::Serialize;
use thiserror::Error;

use crate::grid::{interpolate_values, GridError, GridFunction, Point, SpaceTimeField};
use crate::model::LagrangianModel;
use crate::semigroup::{forward_field, picard, t_minus, Scheme, SchemeError};

#[derive(Debug, Error)]
pub enum WeakKamError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("not a fixed point: residual {residual:e} exceeds {tolerance:e}")]
    NotFixedPoint { residual: f64, tolerance: f64 },
    #[error("no convergence by t = {horizon}: last chunk difference {last_diff:e}")]
    Undecided { horizon: f64, last_diff: f64 },
    #[error("no argmin velocities recorded in the field")]
    MissingArgmins,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOptions {
    /// Length of one restart chunk.
    pub chunk: f64,
    pub max_horizon: f64,
    /// Successive chunk endpoints closer than this count as converged.
    pub tol_limit: f64,
    /// `|u|` above this counts as blow-up.
    pub blowup: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions {
            chunk: 1.0,
            max_horizon: 64.0,
            tol_limit: 1e-6,
            blowup: 1e6,
        }
    }
}

impl LimitOptions {
    fn validate(&self) -> Result<(), WeakKamError> {
        if !(self.chunk > 0.0 && self.chunk <= self.max_horizon) {
            return Err(WeakKamError::Invalid(format!(
                "chunk {} must lie in (0, max_horizon = {}]",
                self.chunk, self.max_horizon
            )));
        }
        if !(self.tol_limit > 0.0 && self.blowup > 0.0) {
            return Err(WeakKamError::Invalid("tol_limit and blowup must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitStatus {
    Converged,
    Unbounded,
    Undecided,
}

/// Extremes of `sup u` and `inf u` over every computed snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthStats {
    pub min_sup: f64,
    pub max_sup: f64,
    pub min_inf: f64,
    pub max_inf: f64,
}

impl GrowthStats {
    fn new() -> Self {
        GrowthStats {
            min_sup: f64::INFINITY,
            max_sup: f64::NEG_INFINITY,
            min_inf: f64::INFINITY,
            max_inf: f64::NEG_INFINITY,
        }
    }

    fn observe(&mut self, values: &[f64]) {
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        self.min_sup = self.min_sup.min(hi);
        self.max_sup = self.max_sup.max(hi);
        self.min_inf = self.min_inf.min(lo);
        self.max_inf = self.max_inf.max(lo);
    }
}

#[derive(Debug, Clone)]
pub struct LimitReport {
    pub status: LimitStatus,
    pub limit: Option<GridFunction>,
    /// Chunk endpoints `T_{k chunk}^- phi`, starting with `phi` itself.
    /// An unbounded run stops at the chunk that blew up, which is not stored.
    pub endpoints: Vec<GridFunction>,
    pub times: Vec<f64>,
    /// `|endpoint_k - endpoint_{k-1}|_inf` for `k >= 1`.
    pub chunk_diffs: Vec<f64>,
    pub growth: GrowthStats,
    /// Index of the first endpoint in the tail window.
    pub tail_start: usize,
    pub picard_unconverged: usize,
}

impl LimitReport {
    pub fn tail(&self) -> &[GridFunction] {
        &self.endpoints[self.tail_start..]
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// Restarts `T^-` chunk by chunk until successive endpoints agree, the
/// solution blows up, or `max_horizon` is reached. The tail window is the
/// second half of the computed endpoints.
pub fn long_time(
    phi: &GridFunction,
    opts: &LimitOptions,
    lag: &LagrangianModel,
    scheme: &Scheme,
) -> Result<LimitReport, WeakKamError> {
    opts.validate()?;
    let mut growth = GrowthStats::new();
    growth.observe(phi.values());
    let mut report = LimitReport {
        status: LimitStatus::Undecided,
        limit: None,
        endpoints: vec![phi.clone()],
        times: vec![0.0],
        chunk_diffs: Vec::new(),
        growth,
        tail_start: 0,
        picard_unconverged: 0,
    };
    let n_chunks = (opts.max_horizon / opts.chunk + 1e-9).floor() as usize;
    for k in 1..=n_chunks {
        let start = report.endpoints.last().expect("nonempty");
        let (field, diag) = picard(start, opts.chunk, lag, scheme)?;
        report.picard_unconverged += usize::from(!diag.converged);
        let mut blown = false;
        for s in field.snapshots() {
            report.growth.observe(s);
            blown |= s.iter().any(|v| v.abs() > opts.blowup);
        }
        if blown {
            report.status = LimitStatus::Unbounded;
            break;
        }
        let end = field.last();
        let diff = end.sup_norm_diff(start)?;
        report.chunk_diffs.push(diff);
        report.endpoints.push(end);
        report.times.push(k as f64 * opts.chunk);
        if diff <= opts.tol_limit {
            report.status = LimitStatus::Converged;
            report.limit = report.endpoints.last().cloned();
            break;
        }
    }
    report.tail_start = report.endpoints.len() / 2;
    Ok(report)
}

/// Lower half limit: nodewise minimum over the tail window followed by a
/// minimum over the surrounding ring of nodes.
pub fn half_limit(report: &LimitReport) -> Result<GridFunction, WeakKamError> {
    if report.status == LimitStatus::Unbounded {
        return Err(WeakKamError::Invalid("half limit of an unbounded evolution".into()));
    }
    let tail = report.tail();
    let Some(first) = tail.first() else {
        return Err(WeakKamError::Invalid("empty tail window".into()));
    };
    let grid = *first.grid();
    let mut lower = first.values().to_vec();
    for f in &tail[1..] {
        for (m, &v) in lower.iter_mut().zip(f.values()) {
            *m = m.min(v);
        }
    }
    let smoothed = (0..grid.len())
        .map(|i| {
            grid.ring(i)
                .into_iter()
                .map(|j| lower[j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(GridFunction::new(grid, smoothed)?)
}

/// `|T_t^- u - u|_inf`.
pub fn backward_residual(u: &GridFunction, t: f64, lag: &LagrangianModel, scheme: &Scheme) -> Result<f64, WeakKamError> {
    Ok(t_minus(u, t, lag, scheme)?.sup_norm_diff(u)?)
}

// ---------------------------------------------------------------------------
// Existence classification over constant initial data.

#[derive(Debug, Clone, Serialize)]
pub struct ScanEntry {
    pub constant: f64,
    pub status: LimitStatus,
    pub bounded_below: bool,
    pub bounded_above: bool,
    /// First chunk endpoint `t` with `T_t^- c >= c` everywhere.
    pub rises_at: Option<f64>,
    /// First chunk endpoint `t` with `T_t^- c <= c` everywhere.
    pub falls_at: Option<f64>,
    pub growth: GrowthStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExistenceReport {
    pub entries: Vec<ScanEntry>,
    /// Some constant stays bounded below and some constant stays bounded above.
    pub two_sided_bounds: bool,
    /// Some constant rises above itself and some constant falls below itself.
    pub sub_super_pair: bool,
    pub solutions_exist: bool,
    /// Whether the two criteria agree; they are equivalent in the continuum.
    pub criteria_agree: bool,
}

fn min_of(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(f64::INFINITY, f64::min)
}

fn max_of(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(f64::NEG_INFINITY, f64::max)
}

fn scan_entry(c: f64, report: &LimitReport, opts: &LimitOptions) -> ScanEntry {
    let inf: Vec<f64> = report.endpoints.iter().map(GridFunction::min).collect();
    let sup: Vec<f64> = report.endpoints.iter().map(GridFunction::max).collect();
    let half = inf.len() / 2;
    let slack = opts.tol_limit * (1.0 + c.abs());
    // Bounded: converged, or the second half of the run no longer extends
    // the range reached in the first half.
    let (bounded_below, bounded_above) = match report.status {
        LimitStatus::Converged => (true, true),
        LimitStatus::Unbounded => (
            report.growth.min_inf >= -opts.blowup,
            report.growth.max_sup <= opts.blowup,
        ),
        LimitStatus::Undecided => (
            half == 0 || min_of(inf[half..].iter().copied()) >= min_of(inf[..half].iter().copied()) - slack,
            half == 0 || max_of(sup[half..].iter().copied()) <= max_of(sup[..half].iter().copied()) + slack,
        ),
    };
    let find = |pred: &dyn Fn(&GridFunction) -> bool| {
        report
            .endpoints
            .iter()
            .zip(&report.times)
            .skip(1)
            .find(|(f, _)| pred(f))
            .map(|(_, &t)| t)
    };
    ScanEntry {
        constant: c,
        status: report.status,
        bounded_below,
        bounded_above,
        rises_at: find(&|f| f.min() >= c),
        falls_at: find(&|f| f.max() <= c),
        growth: report.growth,
    }
}

/// Classifies solvability of the stationary equation from the evolution of
/// constant initial data, using both the two-sided-bound and the
/// sub/super-pair characterisations.
pub fn existence_scan(
    constants: &[f64],
    opts: &LimitOptions,
    lag: &LagrangianModel,
    scheme: &Scheme,
) -> Result<ExistenceReport, WeakKamError> {
    if constants.is_empty() {
        return Err(WeakKamError::Invalid("no constants to scan".into()));
    }
    let grid = *scheme.grid();
    let mut entries = Vec::with_capacity(constants.len());
    for &c in constants {
        let report = long_time(&GridFunction::constant(grid, c), opts, lag, scheme)?;
        entries.push(scan_entry(c, &report, opts));
    }
    let two_sided_bounds = entries.iter().any(|e| e.bounded_below) && entries.iter().any(|e| e.bounded_above);
    let sub_super_pair = entries.iter().any(|e| e.rises_at.is_some()) && entries.iter().any(|e| e.falls_at.is_some());
    Ok(ExistenceReport {
        entries,
        two_sided_bounds,
        sub_super_pair,
        solutions_exist: two_sided_bounds || sub_super_pair,
        criteria_agree: two_sided_bounds == sub_super_pair,
    })
}

// ---------------------------------------------------------------------------
// Conjugate pairs and Aubry sets.

#[derive(Debug, Clone)]
pub struct WeakKamPair {
    pub u_minus: GridFunction,
    pub u_plus: GridFunction,
    /// `|T_chunk^- u_minus - u_minus|_inf`.
    pub minus_residual: f64,
    /// `|T_chunk^+ u_plus - u_plus|_inf`, the last chunk difference.
    pub plus_residual: f64,
    /// Largest increase between successive forward snapshots (0 when the
    /// forward evolution is monotone, as it should be).
    pub max_forward_increase: f64,
    /// `max(u_plus - u_minus)`; nonpositive in theory.
    pub max_excess: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOptions {
    pub limit: LimitOptions,
    /// Accepted fixed-point residual of `u_minus` over one chunk.
    pub residual_tol: f64,
}

/// Iterates `T^+` from a backward solution until chunk endpoints agree.
pub fn conjugate_pair(
    u_minus: &GridFunction,
    opts: &PairOptions,
    lag: &LagrangianModel,
    scheme: &Scheme,
) -> Result<WeakKamPair, WeakKamError> {
    let lim = &opts.limit;
    lim.validate()?;
    let minus_residual = backward_residual(u_minus, lim.chunk, lag, scheme)?;
    if minus_residual > opts.residual_tol {
        return Err(WeakKamError::NotFixedPoint {
            residual: minus_residual,
            tolerance: opts.residual_tol,
        });
    }
    let mut current = u_minus.clone();
    let mut max_increase = 0.0f64;
    let mut last_diff = f64::INFINITY;
    let n_chunks = (lim.max_horizon / lim.chunk + 1e-9).floor() as usize;
    for k in 1..=n_chunks {
        let (field, _) = forward_field(&current, lim.chunk, lag, scheme)?;
        for n in 1..=field.n_steps() {
            let a = field.snapshot_values(n - 1);
            let b = field.snapshot_values(n);
            let inc = b.iter().zip(a).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max);
            max_increase = max_increase.max(inc);
        }
        let next = field.last();
        last_diff = next.sup_norm_diff(&current)?;
        current = next;
        if last_diff <= lim.tol_limit {
            let max_excess = current
                .values()
                .iter()
                .zip(u_minus.values())
                .map(|(p, m)| p - m)
                .fold(f64::NEG_INFINITY, f64::max);
            return Ok(WeakKamPair {
                u_minus: u_minus.clone(),
                u_plus: current,
                minus_residual,
                plus_residual: last_diff,
                max_forward_increase: max_increase,
                max_excess,
                horizon: k as f64 * lim.chunk,
            });
        }
    }
    Err(WeakKamError::Undecided {
        horizon: n_chunks as f64 * lim.chunk,
        last_diff,
    })
}

#[derive(Debug, Clone)]
pub struct AubryEstimate {
    pub eta: f64,
    /// Nodes where `u_minus - u_plus <= eta`.
    pub nodes: Vec<usize>,
    pub gap: GridFunction,
}

impl AubryEstimate {
    pub fn points(&self) -> Vec<Point> {
        self.nodes.iter().map(|&i| self.gap.grid().node(i)).collect()
    }
}

pub fn aubry_equality_set(pair: &WeakKamPair, eta: f64) -> Result<AubryEstimate, WeakKamError> {
    if !(eta > 0.0) {
        return Err(WeakKamError::Invalid(format!("eta must be positive, got {eta}")));
    }
    let grid = *pair.u_minus.grid();
    let gap: Vec<f64> = pair
        .u_minus
        .values()
        .iter()
        .zip(pair.u_plus.values())
        .map(|(m, p)| m - p)
        .collect();
    let nodes = gap
        .iter()
        .enumerate()
        .filter(|(_, g)| g.abs() <= eta)
        .map(|(i, _)| i)
        .collect();
    Ok(AubryEstimate {
        eta,
        nodes,
        gap: GridFunction::new(grid, gap)?,
    })
}

// ---------------------------------------------------------------------------
// Backward minimising curves.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    /// Follow the interpolated sub-grid argmin velocity from the exact foot point.
    #[default]
    Continuous,
    /// Use the grid argmin at the nearest node and snap every foot to a node.
    NearestNode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerCurve {
    pub dt: f64,
    /// `points[k]` is the position at time `from_t - k dt`.
    pub points: Vec<Point>,
    /// `velocities[k]` carries `points[k+1]` to `points[k]`.
    pub velocities: Vec<Point>,
    /// Sum of snapping distances (zero in continuous mode).
    pub snap_distance: f64,
}

impl MinimizerCurve {
    fn start(x: Point, dt: f64) -> Self {
        MinimizerCurve {
            dt,
            points: vec![x],
            velocities: Vec::new(),
            snap_distance: 0.0,
        }
    }
}

fn velocity_at(field: &SpaceTimeField, step: usize, p: Point, mode: TraceMode) -> Result<Point, WeakKamError> {
    let argmins = field.argmins().ok_or(WeakKamError::MissingArgmins)?;
    let a = argmins.get(step).ok_or(WeakKamError::MissingArgmins)?;
    let grid = field.grid();
    let d = grid.dim();
    let mut v = [0.0; 2];
    match mode {
        TraceMode::NearestNode => {
            let i = grid.nearest_node(p);
            v[..d].copy_from_slice(&a.grid_velocity[i * d..(i + 1) * d]);
        }
        TraceMode::Continuous => {
            for (axis, out) in v.iter_mut().enumerate().take(d) {
                let comp: Vec<f64> = a.refined_velocity.iter().skip(axis).step_by(d).copied().collect();
                *out = interpolate_values(grid, &comp, p);
            }
        }
    }
    Ok(v)
}

fn steps_to(field: &SpaceTimeField, t: f64) -> Result<usize, WeakKamError> {
    let n = (t / field.dt()).round();
    if t < 0.0 || (n * field.dt() - t).abs() > 1e-9 * field.dt().max(t) || n as usize > field.n_steps() {
        return Err(WeakKamError::Invalid(format!(
            "time {t} is not on the field's time grid [0, {}]",
            field.horizon()
        )));
    }
    Ok(n as usize)
}

/// Backtracks a minimiser from `(x, from_t)` to `t = 0` through the
/// recorded argmin velocities.
pub fn trace_minimizer(
    field: &SpaceTimeField,
    x: Point,
    from_t: f64,
    mode: TraceMode,
) -> Result<MinimizerCurve, WeakKamError> {
    let n = steps_to(field, from_t)?;
    let mut curve = MinimizerCurve::start(field.grid().wrap(x), field.dt());
    extend(&mut curve, field, n, n, mode)?;
    Ok(curve)
}

/// Calibrated curve of a stationary solution over `horizon`: `field` is one
/// chunk of the evolution of a fixed point, which is reused by restarting at
/// each chunk's foot point.
pub fn trace_stationary(
    field: &SpaceTimeField,
    x: Point,
    horizon: f64,
    mode: TraceMode,
) -> Result<MinimizerCurve, WeakKamError> {
    let chunk_steps = field.n_steps();
    if chunk_steps == 0 {
        return Err(WeakKamError::Invalid("empty field".into()));
    }
    let total = (horizon / field.dt()).round() as usize;
    let mut curve = MinimizerCurve::start(field.grid().wrap(x), field.dt());
    let mut left = total;
    while left > 0 {
        let take = left.min(chunk_steps);
        // a partial chunk is the final stretch [chunk - take, chunk]
        extend(&mut curve, field, chunk_steps, take, mode)?;
        left -= take;
    }
    Ok(curve)
}

/// Appends `take` backward steps starting from snapshot `n_from`.
fn extend(
    curve: &mut MinimizerCurve,
    field: &SpaceTimeField,
    n_from: usize,
    take: usize,
    mode: TraceMode,
) -> Result<(), WeakKamError> {
    let grid = *field.grid();
    let dt = field.dt();
    for n in ((n_from - take + 1)..=n_from).rev() {
        let p = *curve.points.last().expect("curve has an anchor");
        let v = velocity_at(field, n - 1, p, mode)?;
        let mut foot = grid.wrap([p[0] - v[0] * dt, p[1] - v[1] * dt]);
        if mode == TraceMode::NearestNode {
            let snapped = grid.node(grid.nearest_node(foot));
            curve.snap_distance += grid.distance(foot, snapped);
            foot = snapped;
        }
        curve.velocities.push(v);
        curve.points.push(foot);
    }
    Ok(())
}

/// Cluster representatives of the earliest `tail_fraction` of the curve.
/// Points join the first cluster whose seed lies within `radius`; the
/// representative is the periodic mean of the members.
pub fn alpha_limit(
    curve: &MinimizerCurve,
    grid: &crate::grid::PeriodicGrid,
    tail_fraction: f64,
    radius: f64,
) -> Result<Vec<Point>, WeakKamError> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(WeakKamError::Invalid(format!("tail fraction {tail_fraction} not in (0, 1]")));
    }
    let len = curve.points.len();
    let count = ((len as f64 * tail_fraction).ceil() as usize).clamp(1, len);
    let tail = &curve.points[len - count..];
    // (seed, summed offset from seed, members)
    let mut clusters: Vec<(Point, [f64; 2], usize)> = Vec::new();
    for &p in tail {
        let hit = clusters.iter_mut().find(|(seed, _, _)| grid.distance(*seed, p) <= radius);
        match hit {
            Some((seed, sum, m)) => {
                for axis in 0..grid.dim() {
                    let l = grid.lengths()[axis];
                    let d = (p[axis] - seed[axis] + 0.5 * l).rem_euclid(l) - 0.5 * l;
                    sum[axis] += d;
                }
                *m += 1;
            }
            None => clusters.push((p, [0.0; 2], 1)),
        }
    }
    Ok(clusters
        .into_iter()
        .map(|(seed, sum, m)| grid.wrap([seed[0] + sum[0] / m as f64, seed[1] + sum[1] / m as f64]))
        .collect())
}

// ---------------------------------------------------------------------------
// Comparison of two backward solutions.

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    /// `v1 <= v2 + tol` on the neighbourhood of the Aubry set of `v2`.
    pub hypothesis: bool,
    /// `v1 <= v2 + tol` everywhere.
    pub conclusion: bool,
    /// Hypothesis true and conclusion false.
    pub falsified: bool,
    /// `max(v1 - v2)` over the neighbourhood.
    pub hypothesis_margin: f64,
    /// `max(v1 - v2)` over all nodes.
    pub conclusion_margin: f64,
    pub neighbourhood_nodes: usize,
    /// `max(v1 - v2)` within `radius` of the nodes of smallest gap only.
    pub core_margin: f64,
    pub radius: f64,
    pub tol: f64,
    pub residual_v1: f64,
    pub residual_v2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonOptions {
    pub radius: f64,
    pub tol: f64,
    pub residual_tol: f64,
    /// Horizon of the fixed-point residual test.
    pub residual_horizon: f64,
    /// The comparison theorem needs a Hamiltonian strictly decreasing in `u`.
    pub strictly_decreasing: bool,
}

pub fn comparison_check(
    v1: &GridFunction,
    v2: &GridFunction,
    aubry2: &AubryEstimate,
    opts: &ComparisonOptions,
    lag: &LagrangianModel,
    scheme: &Scheme,
) -> Result<ComparisonReport, WeakKamError> {
    if !opts.strictly_decreasing {
        return Err(WeakKamError::Invalid(
            "comparison requires a Hamiltonian declared strictly decreasing in u".into(),
        ));
    }
    if !(opts.radius >= 0.0) {
        return Err(WeakKamError::Invalid(format!("radius must be nonnegative, got {}", opts.radius)));
    }
    let grid = *v1.grid();
    if v2.grid() != &grid || aubry2.gap.grid() != &grid {
        return Err(GridError::Mismatch.into());
    }
    let mut residuals = [0.0; 2];
    for (r, v) in residuals.iter_mut().zip([v1, v2]) {
        *r = backward_residual(v, opts.residual_horizon, lag, scheme)?;
        if *r > opts.residual_tol {
            return Err(WeakKamError::NotFixedPoint {
                residual: *r,
                tolerance: opts.residual_tol,
            });
        }
    }
    let diff: Vec<f64> = v1.values().iter().zip(v2.values()).map(|(a, b)| a - b).collect();
    let within = |centres: &[Point]| -> Vec<usize> {
        (0..grid.len())
            .filter(|&i| {
                let p = grid.node(i);
                centres.iter().any(|&c| grid.distance(p, c) <= opts.radius)
            })
            .collect()
    };
    let near = within(&aubry2.points());
    let min_gap = min_of(aubry2.gap.values().iter().map(|g| g.abs()));
    let core: Vec<Point> = (0..grid.len())
        .filter(|&i| aubry2.gap.values()[i].abs() <= min_gap + 1e-12)
        .map(|i| grid.node(i))
        .collect();
    let core_margin = max_of(within(&core).into_iter().map(|i| diff[i]));
    let hypothesis_margin = max_of(near.iter().map(|&i| diff[i]));
    let conclusion_margin = max_of(diff.iter().copied());
    let hypothesis = !near.is_empty() && hypothesis_margin <= opts.tol;
    let conclusion = conclusion_margin <= opts.tol;
    Ok(ComparisonReport {
        hypothesis,
        conclusion,
        falsified: hypothesis && !conclusion,
        hypothesis_margin,
        conclusion_margin,
        neighbourhood_nodes: near.len(),
        core_margin,
        radius: opts.radius,
        tol: opts.tol,
        residual_v1: residuals[0],
        residual_v2: residuals[1],
    })
}
