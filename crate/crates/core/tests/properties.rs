use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use soundtrack_core::assembler::{assemble, extract_transition_windows, AudioSegment};
use soundtrack_core::ingest::{parse_subtitles, serialize_subtitles, window_transcripts, Cue, SubtitleFormat};
use soundtrack_core::metrics::{frechet_distance, kld, softmax, GaussianStats, MeanStd};

/// Cues on a millisecond grid with single-line word text, sorted by start.
fn cues_strategy() -> impl Strategy<Value = Vec<Cue>> {
    let cue = (0u32..600_000, 1u32..60_000, prop::collection::vec("[a-z]{1,8}", 1..5)).prop_map(|(start, len, words)| Cue {
        start_s: start as f64 / 1000.0,
        end_s: (start + len) as f64 / 1000.0,
        text: words.join(" "),
    });
    prop::collection::vec(cue, 0..20).prop_map(|mut v| {
        v.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        v
    })
}

fn probs_strategy(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0f64..20.0, k)
}

/// Random symmetric positive-definite matrix `A Aᵀ + 0.1 I`.
fn spd_strategy(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, d * d).prop_map(move |v| {
        let a = DMatrix::from_row_slice(d, d, &v);
        &a * a.transpose() + DMatrix::identity(d, d) * 0.1
    })
}

fn gaussian_strategy(d: usize) -> impl Strategy<Value = GaussianStats> {
    (prop::collection::vec(-5.0f64..5.0, d), spd_strategy(d))
        .prop_map(|(mean, covariance)| GaussianStats { mean: DVector::from_vec(mean), covariance, n: 0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn windows_tile_the_timeline(cues in cues_strategy(), window_s in 5.0f64..90.0, extra in 0.0f64..100.0) {
        let max_end = cues.iter().map(|c| c.end_s).fold(0.0, f64::max);
        let total = max_end + extra + 0.001;
        let segs = window_transcripts(&cues, window_s, total, "en").unwrap();
        prop_assert!(!segs.is_empty());
        prop_assert_eq!(segs[0].window_start_s, 0.0);
        prop_assert!((segs.last().unwrap().window_end_s - total).abs() < 1e-9);
        for (i, s) in segs.iter().enumerate() {
            prop_assert_eq!(s.index, i);
            prop_assert!(s.window_end_s > s.window_start_s);
            if i + 1 < segs.len() {
                prop_assert!((s.duration_s() - window_s).abs() < 1e-9);
                prop_assert_eq!(s.window_end_s, segs[i + 1].window_start_s);
            } else {
                prop_assert!(s.duration_s() <= window_s + 1e-9);
            }
        }
    }

    #[test]
    fn windows_match_interval_overlap_oracle(cues in cues_strategy(), window_s in 5.0f64..90.0) {
        let max_end = cues.iter().map(|c| c.end_s).fold(0.0, f64::max);
        let segs = window_transcripts(&cues, window_s, max_end.max(1.0), "und").unwrap();
        for s in &segs {
            let expected: Vec<&str> = cues
                .iter()
                .filter(|c| c.start_s < s.window_end_s && c.end_s > s.window_start_s)
                .map(|c| c.text.as_str())
                .collect();
            prop_assert_eq!(&s.text, &expected.join(" "));
        }
        for c in &cues {
            prop_assert!(segs.iter().any(|s| s.text.contains(&c.text)));
        }
    }

    #[test]
    fn subtitle_round_trips(cues in cues_strategy()) {
        for format in [SubtitleFormat::Srt, SubtitleFormat::WebVtt, SubtitleFormat::Json] {
            let text = serialize_subtitles(&cues, format);
            if cues.is_empty() {
                continue;
            }
            let parsed = parse_subtitles(text.as_bytes(), format).unwrap();
            prop_assert_eq!(&parsed, &cues);
            let again = parse_subtitles(serialize_subtitles(&parsed, format).as_bytes(), format).unwrap();
            prop_assert_eq!(again, parsed);
        }
    }

    #[test]
    fn kld_is_non_negative_and_zero_on_self(a in probs_strategy(6), b in probs_strategy(6)) {
        let (p, q) = (softmax(&a), softmax(&b));
        prop_assert!(kld(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(kld(&p, &p).unwrap(), 0.0);
        prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frechet_is_symmetric_and_non_negative(g1 in gaussian_strategy(4), g2 in gaussian_strategy(4)) {
        let ab = frechet_distance(&g1, &g2).unwrap();
        let ba = frechet_distance(&g2, &g1).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-8 * ab.max(1.0), "{} vs {}", ab, ba);
        prop_assert!(frechet_distance(&g1, &g1).unwrap() <= 1e-8);
    }

    #[test]
    fn singleton_mean_std(v in -1e6f64..1e6) {
        let m = MeanStd::from_values(&[v]).unwrap();
        prop_assert_eq!((m.mean, m.std, m.n), (v, 0.0, 1));
    }

    #[test]
    fn assembly_conserves_samples(lens in prop::collection::vec(1usize..400, 1..8)) {
        let segs: Vec<AudioSegment> = lens
            .iter()
            .enumerate()
            .map(|(i, &n)| AudioSegment { samples: (0..n).map(|k| ((i * 1000 + k) as f32) * 1e-6).collect(), sample_rate_hz: 100, index: i })
            .collect();
        let track = assemble(&segs, 0).unwrap();
        let expected: Vec<f32> = segs.iter().flat_map(|s| s.samples.iter().copied()).collect();
        prop_assert_eq!(&track.samples, &expected);
        prop_assert_eq!(track.transitions.len(), segs.len() - 1);
        let mut edge = 0usize;
        for (t, s) in track.transitions.iter().zip(&segs) {
            edge += s.samples.len();
            prop_assert!((t - edge as f64 / 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn transition_windows_are_exact_slices(n in 3usize..8, half in 1u32..15) {
        let rate = 100u32;
        let seg_len = 30 * rate as usize;
        let segs: Vec<AudioSegment> = (0..n)
            .map(|i| AudioSegment { samples: (0..seg_len).map(|k| (i * seg_len + k) as f32).collect(), sample_rate_hz: rate, index: i })
            .collect();
        let track = assemble(&segs, 0).unwrap();
        let half_s = half as f64;
        for &t in &track.transitions {
            let (before, after) = extract_transition_windows(&track, t, half_s).unwrap();
            let start = ((t - half_s) * rate as f64) as usize;
            let mid = (t * rate as f64) as usize;
            let w = half as usize * rate as usize;
            prop_assert_eq!(&before.samples[..], &track.samples[start..mid]);
            prop_assert_eq!(&after.samples[..], &track.samples[mid..mid + w]);
        }
    }
}
