//! Quasi-Newton minimization with finite-difference derivatives.

use nalgebra::{DMatrix, DVector};

pub(crate) struct Minimum {
    pub x: DVector<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

fn step_size(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

pub(crate) fn gradient<F: Fn(&DVector<f64>) -> f64>(f: &F, x: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let h = step_size(x[i], 1e-5);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

pub(crate) fn hessian<F: Fn(&DVector<f64>) -> f64>(f: &F, x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    let h: Vec<f64> = x.iter().map(|v| step_size(*v, 1e-4)).collect();
    let f0 = f(x);
    for i in 0..n {
        probe[i] = x[i] + h[i];
        let up = f(&probe);
        probe[i] = x[i] - h[i];
        let down = f(&probe);
        probe[i] = x[i];
        hess[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                probe[i] = x[i] + si * h[i];
                probe[j] = x[j] + sj * h[j];
                let v = f(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// BFGS with Armijo backtracking. Non-finite objective values count as +inf.
pub(crate) fn bfgs<F: Fn(&DVector<f64>) -> f64>(
    f: F,
    x0: DVector<f64>,
    max_iterations: usize,
    gtol: f64,
) -> Minimum {
    let objective = |x: &DVector<f64>| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let n = x0.len();
    let mut x = x0;
    let mut fx = objective(&x);
    let mut g = gradient(&objective, &x);
    let mut inv_h = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![fx];
    let mut stalled = false;

    for iteration in 1..=max_iterations {
        if g.amax() < gtol {
            return Minimum { x, f: fx, iterations: iteration - 1, converged: true, trace };
        }
        let mut direction = -(&inv_h * &g);
        if direction.dot(&g) >= 0.0 {
            inv_h = DMatrix::identity(n, n);
            direction = -g.clone();
        }
        let slope = direction.dot(&g);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let candidate = &x + alpha * &direction;
            let fc = objective(&candidate);
            if fc <= fx + 1e-4 * alpha * slope {
                accepted = Some((candidate, fc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // Finite-difference noise dominates near the optimum.
            if g.amax() < gtol.sqrt() {
                return Minimum { x, f: fx, iterations: iteration, converged: true, trace };
            }
            if stalled {
                return Minimum { x, f: fx, iterations: iteration, converged: false, trace };
            }
            stalled = true;
            inv_h = DMatrix::identity(n, n);
            continue;
        };
        stalled = false;
        let g_new = gradient(&objective, &x_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &s * y.transpose();
            let right = &eye - rho * &y * s.transpose();
            inv_h = &left * &inv_h * &right + rho * &s * s.transpose();
        }
        let change = (fx - f_new).abs();
        x = x_new;
        g = g_new;
        fx = f_new;
        trace.push(fx);
        if change <= 1e-13 * (1.0 + fx.abs()) && g.amax() < gtol.sqrt() {
            return Minimum { x, f: fx, iterations: iteration, converged: true, trace };
        }
    }
    let converged = g.amax() < gtol;
    Minimum { x, f: fx, iterations: max_iterations, converged, trace }
}
