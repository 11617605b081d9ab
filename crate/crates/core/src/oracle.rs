//! Independent references: exhaustive search over discrete velocity paths,
//! the Hopf-Lax formula, and the closed-form solutions of the circle example.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{GridFunction, PeriodicGrid, SpaceTimeField};
use crate::model::{LagrangianModel, ModelError};
use crate::semigroup::{Scheme, SchemeError};

pub const MAX_STEPS: usize = 6;
pub const MAX_NODES: usize = 32;
pub const MAX_VELOCITIES: usize = 7;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

struct Search<'a> {
    phi: &'a [f64],
    frozen: &'a SpaceTimeField,
    lag: &'a LagrangianModel,
    scheme: &'a Scheme,
}

impl Search<'_> {
    /// Minimum over all velocity sequences reaching `node` after `n` steps.
    /// No memoisation: every branch of the path tree is visited.
    fn value(&self, node: usize, n: usize) -> Result<f64, OracleError> {
        if n == 0 {
            return Ok(self.phi[node]);
        }
        let nv = self.scheme.velocities().len();
        let mut costs = vec![0.0; nv];
        self.scheme
            .node_costs(self.lag, node, self.frozen.snapshot_values(n - 1)[node], &mut costs)?;
        let grid = self.scheme.grid();
        // Scratch vector holding only the nodal values the foot point reads.
        let mut prev = vec![f64::NAN; grid.len()];
        let mut best = f64::INFINITY;
        let mut found = false;
        for (j, &c) in costs.iter().enumerate() {
            if c == f64::INFINITY {
                continue;
            }
            for k in self.scheme.foot_support(node, j) {
                prev[k] = self.value(k, n - 1)?;
            }
            let val = self.scheme.foot_value(&prev, node, j) + c;
            if val < best {
                best = val;
            }
            found = true;
        }
        if !found {
            return Err(SchemeError::Infeasible {
                node,
                x: grid.node(node),
            }
            .into());
        }
        Ok(best)
    }
}

/// Exhaustive minimum over every discrete velocity path of length `n_steps`,
/// with the same interpolation, costs and comparison order as the scheme.
pub fn brute_force_value(
    phi: &GridFunction,
    frozen: &SpaceTimeField,
    n_steps: usize,
    lag: &LagrangianModel,
    scheme: &Scheme,
) -> Result<GridFunction, OracleError> {
    let grid = scheme.grid();
    if n_steps > MAX_STEPS {
        return Err(OracleError::TooLarge(format!("{n_steps} steps > {MAX_STEPS}")));
    }
    if grid.len() > MAX_NODES {
        return Err(OracleError::TooLarge(format!("{} nodes > {MAX_NODES}", grid.len())));
    }
    if scheme.velocities().len() > MAX_VELOCITIES {
        return Err(OracleError::TooLarge(format!(
            "{} velocities > {MAX_VELOCITIES}",
            scheme.velocities().len()
        )));
    }
    if phi.grid() != grid || frozen.grid() != grid || frozen.dt() != scheme.dt() {
        return Err(SchemeError::Mismatch.into());
    }
    if frozen.n_steps() < n_steps {
        return Err(SchemeError::FrozenTooShort {
            have: frozen.n_steps(),
            need: n_steps,
        }
        .into());
    }
    let search = Search {
        phi: phi.values(),
        frozen,
        lag,
        scheme,
    };
    let values = (0..grid.len())
        .into_par_iter()
        .map(|node| search.value(node, n_steps))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GridFunction::new(*grid, values).map_err(SchemeError::from)?)
}

/// `min_y phi(y) + d(x, y)^2 / (2t)` over grid nodes `y`, for `H = p^2/2` on
/// the circle.
pub fn hopf_lax(phi: &GridFunction, t: f64) -> Result<GridFunction, OracleError> {
    let grid = phi.grid();
    if grid.dim() != 1 {
        return Err(OracleError::Invalid("Hopf-Lax oracle needs a circle".into()));
    }
    if !(t > 0.0) {
        return Err(OracleError::Invalid(format!("time must be positive, got {t}")));
    }
    let values = grid
        .nodes()
        .map(|x| {
            grid.nodes()
                .zip(phi.values())
                .map(|(y, &p)| {
                    let d = grid.distance(x, y);
                    p + d * d / (2.0 * t)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(GridFunction::new(*grid, values).map_err(SchemeError::from)?)
}

/// The two closed-form solutions `u_{1,2} = (lambda +- sqrt(lambda^2 - 4))/2 * x^2/2`
/// of `-lambda u + |u'|^2/2 + x^2/2 = 0` on the circle `(-1, 1]`.
pub fn e1_reference(lambda: f64, grid: &PeriodicGrid) -> Result<(GridFunction, GridFunction), OracleError> {
    if !(lambda > 2.0) {
        return Err(OracleError::Invalid(format!("need lambda > 2, got {lambda}")));
    }
    if grid.dim() != 1 || grid.lengths()[0] != 2.0 {
        return Err(OracleError::Invalid("need the circle with fundamental domain (-1, 1]".into()));
    }
    let root = (lambda * lambda - 4.0).sqrt();
    let (c1, c2) = ((lambda + root) / 2.0, (lambda - root) / 2.0);
    Ok((
        GridFunction::from_fn(*grid, |p| c1 * 0.5 * p[0] * p[0]),
        GridFunction::from_fn(*grid, |p| c2 * 0.5 * p[0] * p[0]),
    ))
}

/// Largest `|-lambda u + |u'|^2/2 + x^2/2|` at interior nodes with centred
/// differences, skipping the corner at `x = 1` and its neighbours.
pub fn e1_stationary_residual(lambda: f64, u: &GridFunction) -> f64 {
    let grid = u.grid();
    let n = grid.len();
    let h = grid.spacing(0);
    let v = u.values();
    (1..n - 2)
        .map(|i| {
            let x = grid.node(i)[0];
            let p = (v[i + 1] - v[i - 1]) / (2.0 * h);
            (-lambda * v[i] + 0.5 * p * p + 0.5 * x * x).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HamiltonianModel, LegendreOptions};
    use crate::semigroup::{solve_frozen, SchemeParams};

    fn setup(coupling: &str, n: usize, m: usize, dt: f64) -> (LagrangianModel, Scheme) {
        let h = HamiltonianModel::quadratic_contact(coupling, "0.5*x^2", 1.0, 3.0, 8.0, 1).unwrap();
        let lag = LagrangianModel::from_hamiltonian(&h, LegendreOptions { v_max: 1.5, v_count: m }).unwrap();
        let grid = PeriodicGrid::circle(2.0, n).unwrap();
        let params = SchemeParams {
            dt,
            v_max: 1.5,
            velocity_count: m,
            ..SchemeParams::default()
        };
        (lag, Scheme::new(grid, params).unwrap())
    }

    #[test]
    fn matches_marching_bitwise() {
        let (lag, s) = setup("-3*u", 12, 5, 0.1);
        let phi = GridFunction::from_fn(*s.grid(), |p| (3.0 * p[0]).sin());
        let frozen = SpaceTimeField::constant_in_time(&phi.map(|v| 0.3 * v), s.dt(), 4);
        let marched = solve_frozen(&phi, &frozen, 0.4, &lag, &s).unwrap().last();
        let brute = brute_force_value(&phi, &frozen, 4, &lag, &s).unwrap();
        for (a, b) in marched.values().iter().zip(brute.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(brute_force_value(&phi, &frozen, 0, &lag, &s).unwrap(), phi);
    }

    #[test]
    fn size_limits() {
        let (lag, s) = setup("0", 12, 9, 0.1);
        let phi = GridFunction::constant(*s.grid(), 0.0);
        let frozen = SpaceTimeField::constant_in_time(&phi, s.dt(), 8);
        assert!(matches!(
            brute_force_value(&phi, &frozen, 2, &lag, &s),
            Err(OracleError::TooLarge(_))
        ));
        let (lag, s) = setup("0", 12, 3, 0.1);
        let phi = GridFunction::constant(*s.grid(), 0.0);
        let frozen = SpaceTimeField::constant_in_time(&phi, s.dt(), 8);
        assert!(brute_force_value(&phi, &frozen, 7, &lag, &s).is_err());
    }

    #[test]
    fn hopf_lax_examples() {
        let grid = PeriodicGrid::circle(2.0, 40).unwrap();
        let c = GridFunction::constant(grid, 1.25);
        assert_eq!(hopf_lax(&c, 0.3).unwrap(), c);
        let phi = GridFunction::from_fn(grid, |p| 0.5 * p[0] * p[0]);
        let hl = hopf_lax(&phi, 1.0).unwrap();
        // x^2/4 for |x| <= 1, exact whenever the minimiser x/2 is a node
        for (i, p) in grid.nodes().enumerate() {
            let x = p[0];
            assert!((hl.values()[i] - x * x / 4.0).abs() <= 0.25 * grid.spacing(0).powi(2) + 1e-15);
        }
        let far = hopf_lax(&phi, 1e9).unwrap();
        assert!((far.max() - phi.min()).abs() < 1e-8);
        assert!(hopf_lax(&phi, 0.0).is_err());
    }

    #[test]
    fn e1_closed_form() {
        let grid = PeriodicGrid::circle(2.0, 400).unwrap();
        let (u1, u2) = e1_reference(3.0, &grid).unwrap();
        let last = grid.len() - 1;
        assert!((u2.values()[last] - (3.0 - 5f64.sqrt()) / 4.0).abs() < 1e-15);
        assert!((u1.values()[last] / u2.values()[last] - (3.0 + 5f64.sqrt()) / (3.0 - 5f64.sqrt())).abs() < 1e-12);
        assert_eq!(u1.values()[199], 0.0);
        assert_eq!(u2.values()[199], 0.0);
        let h = grid.spacing(0);
        assert!(e1_stationary_residual(3.0, &u1) <= 10.0 * h);
        assert!(e1_stationary_residual(3.0, &u2) <= 10.0 * h);
        assert!(e1_reference(2.0, &grid).is_err());
    }
}
