//! Reduce-on-plateau learning-rate schedule.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauConfig {
    /// Epochs without improvement before the rate is cut.
    pub patience: usize,
    pub factor: f64,
    /// Minimum decrease of the monitored value that counts as improvement.
    pub min_delta: f64,
    /// Epochs after a cut during which non-improvement is not counted.
    pub cooldown: usize,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            patience: 10,
            factor: 0.1,
            min_delta: 1e-4,
            cooldown: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    cfg: PlateauConfig,
    lr: f64,
    best: f64,
    bad_epochs: usize,
    cooldown_left: usize,
}

impl PlateauScheduler {
    pub fn new(lr0: f64, cfg: PlateauConfig) -> Self {
        Self {
            cfg,
            lr: lr0,
            best: f64::INFINITY,
            bad_epochs: 0,
            cooldown_left: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's monitored value (lower is better) and returns the
    /// learning rate for the next epoch.
    pub fn step(&mut self, value: f64) -> f64 {
        if value < self.best - self.cfg.min_delta {
            self.best = value;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.cooldown_left > 0 {
            self.cooldown_left -= 1;
            self.bad_epochs = 0;
        }
        if self.bad_epochs >= self.cfg.patience {
            self.lr *= self.cfg.factor;
            self.bad_epochs = 0;
            self.cooldown_left = self.cfg.cooldown;
        }
        self.lr
    }
}

/// Replays a monitor history and returns the resulting learning rate.
pub fn plateau_lr(history: &[f64], lr0: f64, cfg: PlateauConfig) -> f64 {
    let mut s = PlateauScheduler::new(lr0, cfg);
    for &v in history {
        s.step(v);
    }
    s.lr()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-15 * b.abs()
    }

    #[test]
    fn decreasing_losses_keep_rate() {
        let h: Vec<f64> = (0..50).map(|i| 1.0 / (i + 1) as f64).collect();
        assert_eq!(plateau_lr(&h, 0.001, PlateauConfig::default()), 0.001);
    }

    #[test]
    fn one_plateau_divides_by_ten() {
        let cfg = PlateauConfig::default();
        let flat = vec![0.5; cfg.patience + 1];
        assert!(close(plateau_lr(&flat, 0.001, cfg), 0.0001));
        // one epoch short of the patience: unchanged
        assert_eq!(plateau_lr(&flat[..cfg.patience], 0.001, cfg), 0.001);
    }

    #[test]
    fn two_plateaus_divide_by_hundred() {
        let cfg = PlateauConfig::default();
        let flat = vec![0.5; 2 * cfg.patience + 1];
        assert!(close(plateau_lr(&flat, 0.001, cfg), 0.00001));
    }

    #[test]
    fn cooldown_delays_next_cut() {
        let cfg = PlateauConfig {
            patience: 2,
            cooldown: 3,
            ..PlateauConfig::default()
        };
        let flat = vec![1.0; 3 + 2];
        // cut at epoch 3; epochs 4-6 are cooldown
        assert!(close(plateau_lr(&flat, 1.0, cfg), 0.1));
        let flat = vec![1.0; 3 + 3 + 2];
        assert!(close(plateau_lr(&flat, 1.0, cfg), 0.01));
    }

    #[test]
    fn improvements_below_min_delta_do_not_count() {
        let cfg = PlateauConfig {
            patience: 3,
            ..PlateauConfig::default()
        };
        let h = [1.0, 0.99995, 0.99992, 0.99991];
        assert!(close(plateau_lr(&h, 1.0, cfg), 0.1));
    }
}
