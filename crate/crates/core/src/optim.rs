//! Full-batch gradient descent with halve-on-increase backtracking.

/// A differentiable objective over a flat parameter vector.
pub trait Objective {
    fn value(&self, theta: &[f64]) -> f64 {
        self.value_and_gradient(theta).0
    }

    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>);
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Steps `theta - lr * grad`; a step that raises the objective is rejected
/// and the learning rate halved for all later steps. Stops once the
/// gradient's infinity norm falls below `tol`, or after `max_iters` steps.
/// The returned point has the lowest objective seen.
pub fn gradient_descent<O: Objective + ?Sized>(
    objective: &O,
    theta0: Vec<f64>,
    learning_rate: f64,
    max_iters: usize,
    tol: f64,
) -> Descent {
    let mut theta = theta0;
    let (mut f, mut g) = objective.value_and_gradient(&theta);
    let initial = f;
    let mut lr = learning_rate;
    let mut iterations = 0;
    let mut converged = false;
    let mut candidate = vec![0.0; theta.len()];
    while iterations < max_iters {
        if inf_norm(&g) < tol {
            converged = true;
            break;
        }
        for ((c, t), d) in candidate.iter_mut().zip(&theta).zip(&g) {
            *c = t - lr * d;
        }
        let (fc, gc) = objective.value_and_gradient(&candidate);
        iterations += 1;
        if fc.is_finite() && fc <= f {
            std::mem::swap(&mut theta, &mut candidate);
            f = fc;
            g = gc;
        } else {
            lr *= 0.5;
            if lr < 1e-30 {
                break;
            }
        }
    }
    if !converged && inf_norm(&g) < tol {
        converged = true;
    }
    Descent {
        theta,
        objective: f,
        initial_objective: initial,
        iterations,
        converged,
    }
}
