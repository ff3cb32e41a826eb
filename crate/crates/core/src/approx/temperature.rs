use super::{Adam, AdamConfig};
use crate::Result;

/// Entropy temperature `alpha = exp(log_alpha)` tuned toward a target entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Temperature {
    pub log_alpha: f64,
    pub target_entropy: f64,
    opt: Adam<f64>,
}

impl Temperature {
    pub fn new(initial: f64, action_dim: usize, config: AdamConfig) -> Self {
        assert!(initial > 0.0);
        Temperature {
            log_alpha: initial.ln(),
            target_entropy: -(action_dim as f64),
            opt: Adam::new(1, config),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// `mean(-log_alpha * (log_prob + target_entropy))` and its derivative in
    /// `log_alpha`.
    pub fn loss(&self, log_probs: &[f64]) -> (f64, f64) {
        let mean = log_probs
            .iter()
            .map(|lp| lp + self.target_entropy)
            .sum::<f64>()
            / log_probs.len() as f64;
        (-self.log_alpha * mean, -mean)
    }

    pub fn update(&mut self, log_probs: &[f64]) -> Result<()> {
        let (_, grad) = self.loss(log_probs);
        let mut p = [self.log_alpha];
        self.opt.step(&mut p, &[grad])?;
        self.log_alpha = p[0];
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn at_target_entropy_nothing_moves() {
        let mut t = Temperature::new(1.0, 1, AdamConfig::default());
        t.update(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.alpha(), 1.0);
    }

    #[test]
    fn overly_deterministic_policy_raises_alpha() {
        let mut t = Temperature::new(1.0, 1, AdamConfig::default());
        // log-probs far above -target = 1
        t.update(&[5.0, 6.0]).unwrap();
        assert!(t.alpha() > 1.0);
        let mut t = Temperature::new(1.0, 1, AdamConfig::default());
        t.update(&[-5.0, -6.0]).unwrap();
        assert!(t.alpha() < 1.0);
    }

    #[test]
    fn alpha_stays_positive() {
        let mut t = Temperature::new(1.0, 2, AdamConfig { lr: 1.0, ..Default::default() });
        for _ in 0..500 {
            t.update(&[-100.0]).unwrap();
        }
        assert!(t.alpha() > 0.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let mut t = Temperature::new(0.3, 1, AdamConfig::default());
        let lps = [0.2, -1.7, 3.1];
        let (_, g) = t.loss(&lps);
        let h = 1e-6;
        let base = t.log_alpha;
        t.log_alpha = base + h;
        let (lp, _) = t.loss(&lps);
        t.log_alpha = base - h;
        let (lm, _) = t.loss(&lps);
        let fd = (lp - lm) / (2.0 * h);
        assert!((fd - g).abs() <= 1e-4 * g.abs());
    }
}
