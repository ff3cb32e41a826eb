use super::{lit, Real};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Adam {
            config,
            m: vec![T::zero(); num_params],
            v: vec![T::zero(); num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. A non-finite gradient leaves both the parameters
    /// and the moments untouched.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape {
                what: "adam step".into(),
                expected: self.m.len().to_string(),
                actual: format!("params {} grads {}", params.len(), grads.len()),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient",
                step: self.t + 1,
            });
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (lit::<T>(c.beta1), lit::<T>(c.beta2));
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let step = lit::<T>(c.lr / bc1);
        let inv_bc2 = lit::<T>(1.0 / bc2);
        let eps = lit::<T>(c.eps);
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *p -= step * *m / ((*v * inv_bc2).sqrt() + eps);
        }
        Ok(())
    }
}

/// `target <- (1 - tau) target + tau online`.
pub fn ema_update<T: Real>(target: &mut [T], online: &[T], tau: T) {
    assert_eq!(target.len(), online.len(), "ema shapes differ");
    assert!(tau > T::zero() && tau <= T::one(), "tau must lie in (0, 1]");
    if tau == T::one() {
        target.copy_from_slice(online);
        return;
    }
    let keep = T::one() - tau;
    for (t, &o) in target.iter_mut().zip(online) {
        *t = keep * *t + tau * o;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_each_parameter_by_lr() {
        let mut opt = Adam::<f64>::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        opt.step(&mut p, &[0.3, -7.0, 1e-3]).unwrap();
        for (after, before, sign) in [(p[0], 1.0, -1.0), (p[1], -2.0, 1.0), (p[2], 0.5, -1.0)] {
            let moved = after - before;
            assert!(moved * sign > 0.0);
            assert!((moved.abs() - 3e-4).abs() < 3e-4 * 1e-4, "{moved}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut opt = Adam::<f32>::new(2, AdamConfig::default());
        let mut p = vec![0.25f32, -1.0];
        opt.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.25, -1.0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut opt = Adam::<f64>::new(2, AdamConfig::default());
        let mut p = vec![1.0, 1.0];
        let err = opt.step(&mut p, &[f64::NAN, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        // f(w) = |w|^2, grad = 2w
        let cfg = AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        };
        let mut opt = Adam::<f64>::new(4, cfg);
        let mut w = vec![1.0, -0.5, 0.25, 2.0];
        let loss = |w: &[f64]| w.iter().map(|x| x * x).sum::<f64>();
        let mut prev = loss(&w);
        for it in 0..1000 {
            let g: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut w, &g).unwrap();
            let l = loss(&w);
            if it > 100 {
                assert!(l <= prev + 1e-12, "loss rose at {it}: {prev} -> {l}");
            }
            prev = l;
        }
        assert!(prev < 1e-6, "{prev}");
    }

    #[test]
    fn ema_rules() {
        let mut t = vec![0.0f64; 3];
        ema_update(&mut t, &[1.0, 2.0, 3.0], 1.0);
        assert_eq!(t, vec![1.0, 2.0, 3.0]);

        let mut t = vec![0.0f64];
        ema_update(&mut t, &[1.0], 0.005);
        assert!((t[0] - 0.005).abs() < 1e-15);

        let mut t = vec![0.0f64];
        let tau = 0.005;
        let mut prev_gap = f64::INFINITY;
        for _ in 0..200 {
            ema_update(&mut t, &[3.0], tau);
            let gap = (3.0 - t[0]).abs();
            assert!(gap <= prev_gap);
            prev_gap = gap;
        }
        let closed = 3.0 * (1.0 - (1.0f64 - tau).powi(200));
        assert!((t[0] - closed).abs() < 1e-12);
    }
}
