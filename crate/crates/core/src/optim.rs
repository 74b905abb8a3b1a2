//! Adam with bias-corrected moment estimates.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub const EPSILON: f64 = 1e-8;

    /// `shapes` gives the flat length of each parameter tensor.
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, shapes: &[usize]) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon: Self::EPSILON,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                context: "optimizer tensor count",
                expected: self.m.len(),
                found: params.len().min(grads.len()),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::DimensionMismatch {
                    context: "optimizer tensor length",
                    expected: m.len(),
                    found: p.len(),
                });
            }
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = Adam::new(0.1, 0.9, 0.99, &[2]);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut [p.as_mut_slice()], &[vec![3.0, -0.5]]).unwrap();
        // bias correction makes the first update lr * g / |g|
        assert!((p[0] - 0.9).abs() < 1e-8);
        assert!((p[1] + 0.9).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut opt = Adam::new(0.1, 0.9, 0.99, &[3]);
        let mut p = vec![0.5, 1.5, -2.0];
        for _ in 0..5 {
            opt.step(&mut [p.as_mut_slice()], &[vec![0.0; 3]]).unwrap();
        }
        assert_eq!(p, vec![0.5, 1.5, -2.0]);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = Adam::new(0.05, 0.9, 0.99, &[1]);
        let mut p = vec![4.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 1.0)];
            opt.step(&mut [p.as_mut_slice()], &[g]).unwrap();
        }
        assert!((p[0] - 1.0).abs() < 1e-3);
    }
}
