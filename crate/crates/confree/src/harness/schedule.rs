//! Learning-rate schedules. Cosine decay with a linear warmup ramp, or
//! a flat constant rate.

use super::config::{LrConfig, ScheduleKind};

/// Learning rate for 0-based iteration `iter` of a `total`-iteration
/// run.
///
/// Cosine: linear ramp from `initial/warmup` at iteration 0 up to
/// `initial` at the end of warmup, then cosine decay reaching
/// `final` exactly at the last iteration.
pub fn learning_rate(cfg: &LrConfig, iter: u64, total: u64) -> f64 {
    match cfg.schedule {
        ScheduleKind::Constant => cfg.initial,
        ScheduleKind::Cosine => {
            if cfg.warmup > 0 && iter < cfg.warmup {
                return cfg.initial * (iter + 1) as f64 / cfg.warmup as f64;
            }
            let last = total.saturating_sub(1);
            if last <= cfg.warmup {
                return cfg.initial;
            }
            let progress = (iter.min(last) - cfg.warmup) as f64 / (last - cfg.warmup) as f64;
            cfg.final_rate
                + 0.5 * (cfg.initial - cfg.final_rate)
                    * (1.0 + (std::f64::consts::PI * progress).cos())
        }
    }
}
