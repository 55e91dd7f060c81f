//! Newton iteration on real-split systems with a 2×2-block Jacobian.

use crate::error::{Error, Result};
use crate::sparse::{BlockSolver, BlockSparse};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop when `‖F(x)‖₂ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Maximal number of step halvings when a full step increases the
    /// residual norm. Zero gives the undamped iteration.
    pub max_backtracks: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            max_backtracks: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub solution: Vec<f64>,
    /// Residual norms, one per evaluated iterate, starting with the initial one.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl NewtonOutcome {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().expect("at least one residual")
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `F(x) = 0` from `initial`. The Jacobian is only evaluated at
/// accepted iterates.
pub fn newton_solve(
    mut residual: impl FnMut(&[f64]) -> Vec<f64>,
    mut jacobian: impl FnMut(&[f64]) -> BlockSparse,
    initial: Vec<f64>,
    opts: &NewtonOptions,
    solver: &mut BlockSolver,
) -> Result<NewtonOutcome> {
    let mut x = initial;
    let mut r = residual(&x);
    let mut rn = norm(&r);
    let mut residuals = vec![rn];
    let mut iterations = 0;
    while !(rn <= opts.tol) {
        if iterations == opts.max_iter || !rn.is_finite() {
            return Err(Error::NewtonNonConvergence {
                iterations,
                last_residual: rn,
                residuals,
                last_iterate: x,
            });
        }
        let dx = solver.solve(&jacobian(&x), &r)?;
        let mut step = 1.0;
        let mut trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - d).collect();
        let mut tr = residual(&trial);
        let mut tn = norm(&tr);
        for _ in 0..opts.max_backtracks {
            if tn < rn {
                break;
            }
            step *= 0.5;
            trial = x.iter().zip(&dx).map(|(a, d)| a - step * d).collect();
            tr = residual(&trial);
            tn = norm(&tr);
        }
        if step < 1.0 {
            log::debug!("newton iteration {}: step damped to {step}", iterations + 1);
        }
        x = trial;
        r = tr;
        rn = tn;
        residuals.push(rn);
        iterations += 1;
    }
    Ok(NewtonOutcome {
        solution: x,
        residuals,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{SolverKind, SparsityPattern};
    use std::sync::Arc;

    fn diag_pattern(n: usize) -> Arc<SparsityPattern> {
        Arc::new(SparsityPattern::from_rows((0..n).map(|i| vec![i]).collect()).unwrap())
    }

    #[test]
    fn affine_map_takes_one_iteration() {
        let pat = diag_pattern(2);
        let mut jac = BlockSparse::zeros(pat.clone());
        jac.blocks_mut()[0] = [2.0, 1.0, 0.0, 3.0];
        jac.blocks_mut()[1] = [1.0, 0.0, 0.0, 4.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let j2 = jac.clone();
        let res = move |x: &[f64]| -> Vec<f64> { j2.mul_vec(x).iter().zip(&b).map(|(a, c)| a - c).collect() };
        let mut solver = BlockSolver::new(SolverKind::Direct);
        let out = newton_solve(res, |_| jac.clone(), vec![0.0; 4], &NewtonOptions::default(), &mut solver).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.final_residual() < 1e-14);
    }

    #[test]
    fn zero_initial_residual_returns_immediately() {
        let pat = diag_pattern(1);
        let mut solver = BlockSolver::new(SolverKind::Direct);
        let out = newton_solve(
            |x| x.to_vec(),
            |_| panic!("jacobian must not be evaluated"),
            vec![0.0, 0.0],
            &NewtonOptions::default(),
            &mut solver,
        )
        .unwrap();
        drop(pat);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.residuals, vec![0.0]);
    }

    #[test]
    fn scalar_cubic_converges_quadratically() {
        // x³ + x − 2 = 0 in each component, root 1
        let pat = diag_pattern(1);
        let f = |x: &[f64]| x.iter().map(|v| v * v * v + v - 2.0).collect::<Vec<_>>();
        let jac = |x: &[f64]| {
            let mut j = BlockSparse::zeros(pat.clone());
            j.blocks_mut()[0] = [3.0 * x[0] * x[0] + 1.0, 0.0, 0.0, 3.0 * x[1] * x[1] + 1.0];
            j
        };
        let opts = NewtonOptions {
            tol: 1e-13,
            ..Default::default()
        };
        let mut solver = BlockSolver::new(SolverKind::Direct);
        let out = newton_solve(f, jac, vec![1.5, 0.7], &opts, &mut solver).unwrap();
        assert!(out.solution.iter().all(|v| (v - 1.0).abs() < 1e-13));
        let r = &out.residuals;
        let n = r.len();
        assert!(n >= 3);
        // terminal phase: r_{k+1} ≤ C r_k²
        assert!(r[n - 2] <= 10.0 * r[n - 3] * r[n - 3]);
    }

    #[test]
    fn non_convergence_carries_history() {
        let pat = diag_pattern(1);
        let opts = NewtonOptions {
            tol: 1e-12,
            max_iter: 2,
            max_backtracks: 0,
        };
        let mut solver = BlockSolver::new(SolverKind::Direct);
        // x² + 1 has no real root
        let err = newton_solve(
            |x| vec![x[0] * x[0] + 1.0, x[1] * x[1] + 1.0],
            |x| {
                let mut j = BlockSparse::zeros(pat.clone());
                j.blocks_mut()[0] = [2.0 * x[0], 0.0, 0.0, 2.0 * x[1]];
                j
            },
            vec![0.5, 0.5],
            &opts,
            &mut solver,
        )
        .unwrap_err();
        match err {
            Error::NewtonNonConvergence {
                iterations,
                residuals,
                last_iterate,
                ..
            } => {
                assert_eq!(iterations, 2);
                assert_eq!(residuals.len(), 3);
                assert_eq!(last_iterate.len(), 2);
            }
            e => panic!("unexpected {e}"),
        }
    }
}
