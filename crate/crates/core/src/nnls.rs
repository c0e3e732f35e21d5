//! Non-negative least squares fit of the fusion weights to a potential-hotspot map.
//!
//! Active-set method: the residual is linear in `x`, so every Gauss-Newton step
//! on the current free set is the least-squares solution restricted to those
//! columns. Each free-set subproblem is solved through an SVD of the tall
//! column block, which yields the minimum-norm step when columns are dependent.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kpi::WeightMap;
use crate::localizer::ImportanceVector;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100;

/// `min ||A x - b||` data: one row per pixel (row-major `i` then `j`), one column per KPI map.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl DesignSystem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::Mismatch(format!("A has {} rows, b has {}", a.nrows(), b.len())));
        }
        if a.ncols() == 0 {
            return Err(Error::InvalidInput("A has no columns".into()));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("A and b must be finite".into()));
        }
        Ok(DesignSystem { a, b })
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        (&self.a * DVector::from_column_slice(x) - &self.b).norm()
    }

    /// Gradient of `0.5 ||A x - b||^2`.
    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        self.a.tr_mul(&(&self.a * DVector::from_column_slice(x) - &self.b))
    }

    /// Largest violation of the NNLS optimality conditions at `x`.
    pub fn kkt_violation(&self, x: &[f64]) -> f64 {
        let g = self.gradient(x);
        x.iter()
            .zip(g.iter())
            .map(|(&xs, &gs)| if xs > 0.0 { gs.abs() } else { (-gs).max(0.0) })
            .fold(0.0, f64::max)
    }

    /// System restricted to a subset of columns.
    pub fn select_columns(&self, cols: &[usize]) -> DesignSystem {
        DesignSystem {
            a: self.a.select_columns(cols),
            b: self.b.clone(),
        }
    }
}

/// Stacks five KPI maps into `A` and the potential map into `b`.
pub fn build_system(maps: &[WeightMap; 5], potential: &WeightMap) -> Result<DesignSystem> {
    for q in maps {
        q.ensure_same_grid(potential)?;
    }
    let rows = potential.len();
    let a = DMatrix::from_fn(rows, 5, |r, s| maps[s].get(r));
    let b = DVector::from_column_slice(potential.values());
    DesignSystem::new(a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    pub residual: f64,
    /// Free-set solves performed.
    pub iterations: usize,
    /// Residual after each outer iteration, starting from `x = 0`.
    pub history: Vec<f64>,
}

/// Least-squares solution on the columns flagged in `free`; zero elsewhere.
fn free_set_solve(sys: &DesignSystem, free: &[bool]) -> Vec<f64> {
    let cols: Vec<usize> = (0..free.len()).filter(|&s| free[s]).collect();
    let sub = sys.a.select_columns(&cols);
    let svd = sub.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let eps = sigma_max * sys.a.nrows().max(cols.len()) as f64 * f64::EPSILON;
    let z = svd.solve(&sys.b, eps).expect("u and v were computed");
    let mut out = vec![0.0; free.len()];
    for (&c, &v) in cols.iter().zip(z.iter()) {
        out[c] = v;
    }
    out
}

/// Solves `min ||A x - b||_2` subject to `x >= 0`.
///
/// Stops when every coordinate outside the free set has gradient `>= -tol`.
/// `max_iter` bounds the number of free-set solves.
pub fn solve_nnls(sys: &DesignSystem, tol: f64, max_iter: usize) -> Result<NnlsSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be > 0, got {tol}")));
    }
    let n = sys.a.ncols();
    let mut x = vec![0.0; n];
    let mut free = vec![false; n];
    let mut skipped = vec![false; n];
    let mut iterations = 0;
    let mut history = vec![sys.residual(&x)];

    loop {
        let w = -sys.gradient(&x);
        let candidate = (0..n)
            .filter(|&s| !free[s] && !skipped[s] && w[s] > tol)
            .max_by(|&p, &q| w[p].total_cmp(&w[q]).then(q.cmp(&p)));
        let Some(entering) = candidate else { break };
        free[entering] = true;
        let before = x.clone();

        loop {
            iterations += 1;
            if iterations > max_iter {
                let residual = sys.residual(&x);
                return Err(Error::MaxIterExceeded {
                    best: x,
                    residual,
                    iterations: max_iter,
                });
            }
            let z = free_set_solve(sys, &free);
            if (0..n).all(|s| !free[s] || z[s] > 0.0) {
                x = z;
                break;
            }
            // step toward z until the first free coordinate hits zero
            let (mut alpha, mut blocking) = (f64::INFINITY, entering);
            for s in (0..n).filter(|&s| free[s] && z[s] <= 0.0) {
                let a = x[s] / (x[s] - z[s]);
                if a < alpha {
                    alpha = a;
                    blocking = s;
                }
            }
            for s in 0..n {
                x[s] += alpha * (z[s] - x[s]);
            }
            x[blocking] = 0.0;
            for s in 0..n {
                if free[s] && x[s] <= 0.0 {
                    free[s] = false;
                    x[s] = 0.0;
                }
            }
        }

        if x == before {
            // the entering column cannot improve the fit from here
            skipped[entering] = true;
            free[entering] = false;
        } else {
            skipped.iter_mut().for_each(|s| *s = false);
        }
        history.push(sys.residual(&x));
    }

    x.iter_mut().for_each(|v| *v = v.max(0.0));
    let residual = sys.residual(&x);
    Ok(NnlsSolution {
        x,
        residual,
        iterations,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedImportance {
    pub x: ImportanceVector,
    pub residual: f64,
    pub iterations: usize,
}

/// Importance factors that best reproduce the potential map from the five KPI maps.
pub fn optimize_importance(
    maps: &[WeightMap; 5],
    potential: &WeightMap,
    tol: f64,
    max_iter: usize,
) -> Result<OptimizedImportance> {
    optimize_importance_subset(maps, potential, &[0, 1, 2, 3, 4], tol, max_iter)
}

/// Like [`optimize_importance`] with every factor outside `cols` fixed at 0.
pub fn optimize_importance_subset(
    maps: &[WeightMap; 5],
    potential: &WeightMap,
    cols: &[usize],
    tol: f64,
    max_iter: usize,
) -> Result<OptimizedImportance> {
    let sys = build_system(maps, potential)?;
    let sol = solve_nnls(&sys.select_columns(cols), tol, max_iter)?;
    let mut x = [0.0; 5];
    for (&c, &v) in cols.iter().zip(&sol.x) {
        x[c] = v;
    }
    Ok(OptimizedImportance {
        x: ImportanceVector::new(x)?,
        residual: sol.residual,
        iterations: sol.iterations,
    })
}
