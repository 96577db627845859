//! Convex quadratic programs over `{x >= 0, A x = b}`.
//!
//! Primal active-set method: the working set holds the bounds currently
//! fixed at zero; each iteration solves the equality-constrained subproblem
//! on the free variables through its KKT system and either steps towards it
//! (stopping at the first bound hit) or releases the bound with the most
//! negative multiplier. Starting points must be feasible; callers pick a
//! vertex or a two-vertex mix, which keeps the early KKT systems tiny.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Infinity norm of the projected gradient of the Lagrangian at `x`.
    pub kkt_residual: f64,
}

/// Minimizes `0.5 x'Qx + c'x` subject to `A x = b`, `x >= 0`, from the
/// feasible point `x0`. `Q` must be positive semidefinite.
pub fn solve(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: DVector<f64>,
) -> Result<QpSolution> {
    let n = q.nrows();
    let m = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.len(), m);

    let mut x = x0;
    let mut free: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
    let q_scale = q.amax().max(f64::MIN_POSITIVE);

    for iter in 0..MAX_ITERATIONS {
        let g = q * &x + c;
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let (p_free, nu) = kkt_step(q, a, &g, &idx)?;

        let x_scale = x.amax().max(1e-300);
        let step_norm = p_free.amax();
        if step_norm <= 1e-14 * x_scale {
            // stationary on the current face: inspect bound multipliers
            let lagr = &g + a.transpose() * &nu;
            let g_scale = g.amax().max(c.amax()).max(q_scale * x_scale);
            let tol = 1e-12 * g_scale;
            // Bland-style: lowest index among violated bounds, avoids cycling
            let release = (0..n).find(|&i| !free[i] && lagr[i] < -tol);
            match release {
                Some(i) => free[i] = true,
                None => {
                    return Ok(QpSolution {
                        kkt_residual: kkt_residual(&lagr, &free, a, b, &x),
                        x,
                        iterations: iter + 1,
                    });
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for (k, &i) in idx.iter().enumerate() {
            if p_free[k] < 0.0 {
                let ratio = -x[i] / p_free[k];
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(i);
                }
            }
        }
        for (k, &i) in idx.iter().enumerate() {
            x[i] = (x[i] + alpha * p_free[k]).max(0.0);
        }
        if let Some(i) = blocking {
            x[i] = 0.0;
            free[i] = false;
        }
    }
    let g = q * &x + c;
    let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
    let (_, nu) = kkt_step(q, a, &g, &idx)?;
    let lagr = &g + a.transpose() * &nu;
    Err(Error::NotConverged {
        iterations: MAX_ITERATIONS,
        residual: kkt_residual(&lagr, &free, a, b, &x),
    })
}

/// Solves `[Q_FF A_F'; A_F 0] [p; nu] = [-g_F; 0]` on the free set `idx`.
/// Returns the step on the free variables and the equality multipliers.
fn kkt_step(
    q: &DMatrix<f64>,
    a: &DMatrix<f64>,
    g: &DVector<f64>,
    idx: &[usize],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let f = idx.len();
    let m = a.nrows();
    let dim = f + m;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for (r, &i) in idx.iter().enumerate() {
        for (s, &j) in idx.iter().enumerate() {
            kkt[(r, s)] = q[(i, j)];
        }
        for e in 0..m {
            kkt[(r, f + e)] = a[(e, i)];
            kkt[(f + e, r)] = a[(e, i)];
        }
        rhs[r] = -g[i];
    }
    // equilibrate rows and columns so the tolerance below is scale free
    let scale: Vec<f64> = (0..dim)
        .map(|r| {
            let amax = kkt.row(r).amax();
            if amax > 0.0 {
                1.0 / amax.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    for r in 0..dim {
        for s in 0..dim {
            kkt[(r, s)] *= scale[r] * scale[s];
        }
        rhs[r] *= scale[r];
    }
    let sol = match kkt.clone().lu().solve(&rhs) {
        Some(sol) if sol.iter().all(|v| v.is_finite()) && lu_is_reliable(&kkt, &sol, &rhs) => sol,
        _ => {
            let svd = kkt.svd(true, true);
            let eps = 1e-13 * svd.singular_values.max();
            svd.solve(&rhs, eps)
                .map_err(|e| Error::Domain(format!("singular KKT system: {e}")))?
        }
    };
    let unscaled: Vec<f64> = (0..dim).map(|r| sol[r] * scale[r]).collect();
    Ok((
        DVector::from_column_slice(&unscaled[..f]),
        DVector::from_column_slice(&unscaled[f..]),
    ))
}

fn lu_is_reliable(kkt: &DMatrix<f64>, sol: &DVector<f64>, rhs: &DVector<f64>) -> bool {
    let resid = (kkt * sol - rhs).amax();
    resid <= 1e-10 * (rhs.amax() + kkt.amax() * sol.amax()).max(f64::MIN_POSITIVE)
}

fn kkt_residual(
    lagr: &DVector<f64>,
    free: &[bool],
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
) -> f64 {
    let stationarity = (0..x.len())
        .map(|i| {
            if free[i] {
                lagr[i].abs()
            } else {
                (-lagr[i]).max(0.0)
            }
        })
        .fold(0.0, f64::max);
    let primal = (a * x - b).amax();
    stationarity.max(primal)
}
