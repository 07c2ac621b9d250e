#![allow(dead_code)]

use std::path::{Path, PathBuf};

use soundtrack_core::director::Strategy;
use soundtrack_core::pipeline::RunConfig;

/// Sample rate used by tests that do not care about audio fidelity.
pub const TEST_RATE_HZ: u32 = 8_000;

/// Four 30 s windows of table talk with one line per window.
pub const FOUR_WINDOWS_SRT: &str = "1
00:00:02,000 --> 00:00:08,000
The tavern is warm and the bard plays a quiet song.

2
00:00:31,000 --> 00:00:40,000
The innkeeper pours another round while the rain keeps falling.

3
00:01:05,000 --> 00:01:20,000
The bard starts a slow ballad about the old king.

4
00:01:35,000 --> 00:01:50,000
Everyone at the table laughs and orders more bread.
";

pub fn write_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Mock-backed config writing into `dir/out`.
pub fn mock_config(dir: &Path, transcript: &Path, strategy: Strategy) -> RunConfig {
    RunConfig {
        campaign_name: "TEST".into(),
        transcript_path: Some(transcript.to_path_buf()),
        strategy,
        seed: 42,
        sample_rate_hz: TEST_RATE_HZ,
        output_dir: dir.join("out"),
        mock_llm: true,
        mock_music: true,
        ..RunConfig::default()
    }
}

/// SRT with `n` windows; each window holds one cue whose text is `line(i)`.
pub fn srt_with_lines(n: usize, window_s: f64, line: impl Fn(usize) -> String) -> String {
    let stamp = |t: f64| {
        let ms = (t * 1000.0).round() as u64;
        format!("{:02}:{:02}:{:02},{:03}", ms / 3_600_000, ms / 60_000 % 60, ms / 1000 % 60, ms % 1000)
    };
    (0..n)
        .map(|i| {
            let start = i as f64 * window_s + 1.0;
            format!("{}\n{} --> {}\n{}\n", i + 1, stamp(start), stamp(start + window_s * 0.5), line(i))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub mod oracle {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use soundtrack_core::metrics::{EmbeddingKind, EmbeddingMatrix};

    /// Diagonal Gaussian given by per-dimension means and standard deviations.
    pub struct Diag {
        pub mean: Vec<f64>,
        pub std: Vec<f64>,
    }

    /// Closed-form Fréchet distance between diagonal Gaussians:
    /// `Σ (μ1−μ2)² + Σ (σ1−σ2)²`.
    pub fn closed_form(a: &Diag, b: &Diag) -> f64 {
        let means: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y).powi(2)).sum();
        let stds: f64 = a.std.iter().zip(&b.std).map(|(x, y)| (x - y).powi(2)).sum();
        means + stds
    }

    pub fn random_diag(rng: &mut ChaCha8Rng, d: usize) -> Diag {
        Diag {
            mean: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
            std: (0..d).map(|_| rng.random_range(0.5..2.0)).collect(),
        }
    }

    pub fn sample(g: &Diag, n: usize, rng: &mut ChaCha8Rng) -> EmbeddingMatrix {
        let d = g.mean.len();
        let normals: Vec<Normal<f64>> = g.mean.iter().zip(&g.std).map(|(&m, &s)| Normal::new(m, s).unwrap()).collect();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend(normals.iter().map(|dist| dist.sample(rng)));
        }
        EmbeddingMatrix::new(data, d, 1.0, "synthetic", EmbeddingKind::Embedding).unwrap()
    }

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }
}
