//! Levenberg-Marquardt for the three-parameter spectrum model.
//!
//! Damping is Marquardt's: the normal matrix diagonal is scaled by `1 + λ`.
//! `λ` starts at [`INITIAL_DAMPING`] and moves by a factor of ten, so a run
//! is a pure function of its inputs.

use nalgebra::{Matrix3, Vector3};

pub const INITIAL_DAMPING: f64 = 1e-3;
const DAMPING_FACTOR: f64 = 10.0;
const MAX_DAMPING: f64 = 1e16;

/// Residuals `y − f(p)` and the model Jacobian `∂f/∂p`, one row per point.
pub trait Problem {
    fn evaluate(&self, p: &Vector3<f64>, residuals: &mut Vec<f64>, jacobian: &mut Vec<[f64; 3]>);

    /// Maps a trial point back into the feasible set.
    fn project(&self, p: Vector3<f64>) -> Vector3<f64> {
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub params: Vector3<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `JᵀJ` at `params`.
    pub normal: Matrix3<f64>,
}

fn cost(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

fn normal_equations(r: &[f64], jac: &[[f64; 3]]) -> (Matrix3<f64>, Vector3<f64>) {
    let mut a = Matrix3::zeros();
    let mut g = Vector3::zeros();
    for (ri, row) in r.iter().zip(jac) {
        for i in 0..3 {
            g[i] += row[i] * ri;
            for j in 0..3 {
                a[(i, j)] += row[i] * row[j];
            }
        }
    }
    (a, g)
}

/// Minimizes `½Σr²` from `p0`. Stops when the relative step falls below
/// `tol` or the cost cannot be lowered at any damping.
pub fn minimize<P: Problem>(problem: &P, p0: Vector3<f64>, max_iterations: usize, tol: f64) -> Outcome {
    let mut r = Vec::new();
    let mut jac = Vec::new();
    let mut p = problem.project(p0);
    problem.evaluate(&p, &mut r, &mut jac);
    let mut c = cost(&r);
    let (mut a, mut g) = normal_equations(&r, &jac);
    let mut lambda = INITIAL_DAMPING;
    let mut trial_r = Vec::new();
    let mut trial_jac = Vec::new();

    for iteration in 1..=max_iterations {
        let scale = a.diagonal().map(|d| if d > 0.0 { d.sqrt() } else { 1.0 });
        let scaled = Matrix3::from_fn(|i, j| a[(i, j)] / (scale[i] * scale[j]));
        let rhs = g.component_div(&scale);
        loop {
            let damped = scaled + Matrix3::identity() * lambda;
            let step = damped
                .cholesky()
                .map(|ch| ch.solve(&rhs))
                .or_else(|| damped.lu().solve(&rhs))
                .map(|z| z.component_div(&scale));
            let accepted = step.and_then(|step| {
                let trial = problem.project(p + step);
                problem.evaluate(&trial, &mut trial_r, &mut trial_jac);
                let tc = cost(&trial_r);
                (tc.is_finite() && tc < c).then_some((trial, tc))
            });
            match accepted {
                Some((trial, tc)) => {
                    let rel_step = (0..3)
                        .map(|i| (trial[i] - p[i]).abs() / p[i].abs().max(f64::MIN_POSITIVE))
                        .fold(0.0, f64::max);
                    p = trial;
                    c = tc;
                    std::mem::swap(&mut r, &mut trial_r);
                    std::mem::swap(&mut jac, &mut trial_jac);
                    (a, g) = normal_equations(&r, &jac);
                    lambda = (lambda / DAMPING_FACTOR).max(1e-12);
                    if rel_step < tol || c == 0.0 {
                        return Outcome { params: p, cost: c, iterations: iteration, converged: true, normal: a };
                    }
                    break;
                }
                None => {
                    lambda *= DAMPING_FACTOR;
                    if lambda > MAX_DAMPING {
                        return Outcome { params: p, cost: c, iterations: iteration, converged: true, normal: a };
                    }
                }
            }
        }
    }
    Outcome {
        params: p,
        cost: c,
        iterations: max_iterations,
        converged: false,
        normal: a,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a + b·exp(−c·x)
    struct Decay {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl Problem for Decay {
        fn evaluate(&self, p: &Vector3<f64>, r: &mut Vec<f64>, j: &mut Vec<[f64; 3]>) {
            r.clear();
            j.clear();
            for (&x, &y) in self.x.iter().zip(&self.y) {
                let e = (-p[2] * x).exp();
                r.push(y - (p[0] + p[1] * e));
                j.push([1.0, e, -p[1] * x * e]);
            }
        }
    }

    #[test]
    fn recovers_exact_parameters() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 0.5 + 2.0 * (-1.3 * x).exp()).collect();
        let out = minimize(&Decay { x, y }, Vector3::new(0.0, 1.0, 0.5), 200, 1e-12);
        assert!(out.converged);
        assert!((out.params - Vector3::new(0.5, 2.0, 1.3)).amax() < 1e-9, "{:?}", out.params);
    }

    #[test]
    fn reports_non_convergence() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 0.5 + 2.0 * (-1.3 * x).exp()).collect();
        let out = minimize(&Decay { x, y }, Vector3::new(0.0, 1.0, 0.5), 1, 1e-12);
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
    }
}
