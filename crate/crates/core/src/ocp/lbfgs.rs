//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    /// Stop when `‖∇f‖∞ ≤ grad_tol`.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 12,
            grad_tol: 1e-8,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `f`; `fg(x, grad)` returns the value and fills `grad`.
pub fn minimize<F>(mut fg: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = fg(&x, &mut g);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory];

    for it in 0..opts.max_iter {
        let gn = inf_norm(&g);
        if gn <= opts.grad_tol {
            return LbfgsOutcome {
                x,
                value: fx,
                grad_norm: gn,
                iterations: it,
                converged: true,
            };
        }

        // two-loop recursion
        d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
        for (j, (s, y, rho)) in hist.iter().enumerate().rev() {
            alpha[j] = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= alpha[j] * yi);
        }
        let gamma = hist
            .back()
            .map_or(1.0 / gn.max(1.0), |(s, y, _)| dot(s, y) / dot(y, y));
        d.iter_mut().for_each(|di| *di *= gamma);
        for (j, (s, y, rho)) in hist.iter().enumerate() {
            let beta = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (alpha[j] - beta) * si);
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            hist.clear();
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi / gn.max(1.0));
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            x_new.iter_mut().zip(&x).zip(&d).for_each(|((xn, xi), di)| *xn = xi + step * di);
            let f_new = fg(&x_new, &mut g_new);
            // approximate Wolfe test keeps progress once f stalls at roundoff
            let armijo = f_new <= fx + 1e-4 * step * slope;
            let curv = dot(&g_new, &d);
            let approx_wolfe = f_new <= fx + 1e-12 * fx.abs() && curv >= 0.9 * slope && curv <= -0.9998 * slope;
            if f_new.is_finite() && (armijo || approx_wolfe) {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    if hist.len() == opts.memory {
                        hist.pop_front();
                    }
                    hist.push_back((s, y, 1.0 / sy));
                }
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if hist.is_empty() {
                return LbfgsOutcome {
                    x,
                    value: fx,
                    grad_norm: gn,
                    iterations: it,
                    converged: false,
                };
            }
            hist.clear();
        }
    }
    let gn = inf_norm(&g);
    LbfgsOutcome {
        x,
        value: fx,
        grad_norm: gn,
        iterations: opts.max_iter,
        converged: gn <= opts.grad_tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let out = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            vec![-1.2, 1.0],
            &LbfgsOptions {
                grad_tol: 1e-10,
                ..Default::default()
            },
        );
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-8 && (out.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let scales: Vec<f64> = (0..50).map(|i| 10f64.powf(i as f64 / 49.0 * 4.0)).collect();
        let out = minimize(
            |x, g| {
                let mut f = 0.0;
                for i in 0..x.len() {
                    g[i] = scales[i] * (x[i] - 1.0);
                    f += 0.5 * scales[i] * (x[i] - 1.0).powi(2);
                }
                f
            },
            vec![0.0; 50],
            &LbfgsOptions::default(),
        );
        assert!(out.converged);
        assert!(out.x.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }
}
