use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// `base · ½ · (1 + cos(π · epoch / total))`, evaluated once per epoch.
    #[default]
    Cosine,
    /// `base` before 40% of the run, `base / 10` before 80%, `base / 100` after.
    ThreeStage,
}

/// Learning rate for a zero-based epoch.
pub fn lr_at(schedule: Schedule, epoch: usize, total_epochs: usize, base_lr: f64) -> f64 {
    debug_assert!(epoch < total_epochs);
    match schedule {
        Schedule::Cosine => base_lr * 0.5 * (1.0 + (PI * epoch as f64 / total_epochs as f64).cos()),
        Schedule::ThreeStage => {
            if 10 * epoch < 4 * total_epochs {
                base_lr
            } else if 10 * epoch < 8 * total_epochs {
                base_lr / 10.0
            } else {
                base_lr / 100.0
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(lr_at(Schedule::Cosine, 0, 100, 0.1), 0.1);
        assert!((lr_at(Schedule::Cosine, 50, 100, 0.1) - 0.05).abs() < 1e-17);
        let t = 37;
        let last = lr_at(Schedule::Cosine, t - 1, t, 0.1);
        assert!((last - 0.1 * 0.5 * (1.0 - (PI / t as f64).cos())).abs() < 1e-17);
    }

    #[test]
    fn cosine_decreases() {
        let lrs: Vec<f64> = (0..50).map(|e| lr_at(Schedule::Cosine, e, 50, 0.1)).collect();
        assert!(lrs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn three_stage_boundaries() {
        let lr = |e| lr_at(Schedule::ThreeStage, e, 500, 0.1);
        assert_eq!((lr(0), lr(199)), (0.1, 0.1));
        assert_eq!((lr(200), lr(399)), (0.1 / 10.0, 0.1 / 10.0));
        assert_eq!((lr(400), lr(499)), (0.1 / 100.0, 0.1 / 100.0));
        assert!((lr(200) - 0.01).abs() < 1e-18 && (lr(400) - 0.001).abs() < 1e-18);
    }

    #[test]
    fn three_stage_has_exactly_two_drops() {
        for total in 1..60 {
            let lrs: Vec<f64> = (0..total).map(|e| lr_at(Schedule::ThreeStage, e, total, 1.0)).collect();
            let drops = lrs.windows(2).filter(|w| w[1] != w[0]).count();
            assert!(drops <= 2);
            if total >= 5 {
                assert_eq!(drops, 2, "{total} epochs");
            }
        }
    }
}
