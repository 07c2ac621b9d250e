use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MetricsError;

pub const DEFAULT_EVAL_WINDOW_MINUTES: f64 = 30.0;

/// Seeded uniform start offset for an evaluation crop of `window_minutes`.
///
/// Apply the same offset to the reference and the generated track.
pub fn sample_eval_window(track_duration_s: f64, window_minutes: f64, seed: u64) -> Result<f64, MetricsError> {
    let window_s = window_minutes * 60.0;
    // Written negated so a NaN duration is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(track_duration_s >= window_s) {
        return Err(MetricsError::TrackTooShort { duration_s: track_duration_s, window_s });
    }
    let max_offset = track_duration_s - window_s;
    if max_offset == 0.0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rng.random_range(0.0..=max_offset))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_in_range() {
        let a = sample_eval_window(3600.0, 30.0, 42).unwrap();
        let b = sample_eval_window(3600.0, 30.0, 42).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1800.0).contains(&a));
        let others: Vec<f64> = (0..20).map(|s| sample_eval_window(3600.0, 30.0, s).unwrap()).collect();
        assert!(others.iter().any(|&o| o != a));
    }

    #[test]
    fn exact_fit_starts_at_zero() {
        assert_eq!(sample_eval_window(1800.0, 30.0, 7).unwrap(), 0.0);
    }

    #[test]
    fn too_short() {
        assert!(matches!(
            sample_eval_window(1000.0, 30.0, 1),
            Err(MetricsError::TrackTooShort { duration_s, window_s }) if duration_s == 1000.0 && window_s == 1800.0
        ));
    }
}
