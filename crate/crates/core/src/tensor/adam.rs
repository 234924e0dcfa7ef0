use super::{check_len, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    /// Zeroed moments matching the given tensor lengths.
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        AdamState {
            config,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update over every tensor; `t` advances by one.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<(), TensorError> {
        check_len("adam_step tensors", self.m.len(), params.len())?;
        check_len("adam_step tensors", self.m.len(), grads.len())?;
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            check_len("adam_step", m.len(), p.len())?;
            check_len("adam_step", m.len(), g.len())?;
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.t + 1;
        let bc1 = 1.0 - beta1.powf(t as f64);
        let bc2 = 1.0 - beta2.powf(t as f64);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        self.t = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut state = AdamState::new(AdamConfig::default(), &[3]);
        let mut p = vec![0.5, -1.0, 2.0];
        for t in 1..=5 {
            state.step(&mut [&mut p], &[&[0.0; 3]]).unwrap();
            assert_eq!(state.t, t);
            assert_eq!(p, vec![0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(cfg, &[1]);
        let mut p = vec![1.0];
        state.step(&mut [&mut p], &[&[0.5]]).unwrap();
        let expected = 1.0 - cfg.lr * 0.5 / (0.5 + cfg.epsilon);
        assert!((p[0] - expected).abs() < 1e-12);
        assert!((p[0] - 0.999).abs() < 1e-10);
    }

    #[test]
    fn quadratic_descends_monotonically() {
        // Independent recurrence for f(θ) = θ², g = 2θ.
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let (mut th, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut reference = Vec::new();
        for t in 1..=100 {
            let g = 2.0 * th;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            th -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            reference.push(th);
        }

        let mut state = AdamState::new(AdamConfig { lr, ..AdamConfig::default() }, &[1]);
        let mut p = vec![1.0];
        for (t, r) in reference.iter().enumerate() {
            let g = [2.0 * p[0]];
            state.step(&mut [&mut p], &[&g]).unwrap();
            assert!((p[0] - r).abs() < 1e-12, "step {t}");
        }

        // Strictly shrinking |θ| until the first sign change, then a damped
        // oscillation whose successive peaks keep shrinking.
        let mags: Vec<f64> = std::iter::once(1.0).chain(reference.iter().map(|v| v.abs())).collect();
        let first_cross = reference.iter().position(|v| *v < 0.0).unwrap();
        assert!(mags[..=first_cross].windows(2).all(|w| w[1] < w[0]));
        let peaks: Vec<f64> = mags
            .windows(3)
            .filter(|w| w[1] >= w[0] && w[1] >= w[2])
            .map(|w| w[1])
            .collect();
        assert!(peaks.len() >= 4);
        assert!(peaks.windows(2).all(|w| w[1] < w[0]), "{peaks:?}");
        assert!(p[0].abs() < 0.01);
    }

    #[test]
    fn shape_mismatch() {
        let mut state = AdamState::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0; 3];
        assert!(state.step(&mut [&mut p], &[&[0.0; 3]]).is_err());
        assert_eq!(state.t, 0);
    }
}
