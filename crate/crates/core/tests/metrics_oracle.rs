mod common;

use std::time::Instant;

use common::oracle::{closed_form, random_diag, rng, sample};
use soundtrack_core::metrics::{
    fad_score, story_alignment, transition_smoothness, ClassProbabilities, EmbeddingKind, EmbeddingMatrix,
    KldDirection, MeanStd,
};

fn relative_errors(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..20)
        .map(|_| {
            let (a, b) = (random_diag(&mut r, 8), random_diag(&mut r, 8));
            let fad = fad_score(&sample(&a, n, &mut r), &sample(&b, n, &mut r)).unwrap();
            let exact = closed_form(&a, &b);
            (fad - exact).abs() / exact
        })
        .collect()
}

#[test]
fn fad_matches_closed_form_on_diagonal_gaussians() {
    let started = Instant::now();
    let errors = relative_errors(10_000, 2024);
    let elapsed = started.elapsed().as_secs_f64();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    assert!(worst < 0.05, "worst relative error {worst}");
    assert!(elapsed < 10.0, "took {elapsed} s");
}

#[test]
fn fad_error_shrinks_with_sample_count() {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let small = mean(relative_errors(1_000, 7));
    let large = mean(relative_errors(10_000, 7));
    assert!(large < small, "1k: {small}, 10k: {large}");
}

#[test]
fn fad_identity() {
    let mut r = rng(1);
    let x = sample(&random_diag(&mut r, 8), 500, &mut r);
    assert!(fad_score(&x, &x).unwrap() <= 1e-6);
}

#[test]
fn aggregation_hand_values() {
    let m = MeanStd::from_values(&[0.1, 0.3]).unwrap();
    assert!((m.mean - 0.2).abs() < 1e-15 && (m.std - 0.1).abs() < 1e-15);
    let m = MeanStd::from_values(&[1.0, 3.0]).unwrap();
    assert_eq!((m.mean, m.std), (2.0, 1.0));
}

#[test]
fn transitions_over_identical_windows_are_zero() {
    let p = ClassProbabilities::new(vec![0.2, 0.3, 0.5]).unwrap();
    let r = transition_smoothness(&[(p.clone(), p.clone()), (p.clone(), p.clone())], KldDirection::ReferenceFirst).unwrap();
    assert_eq!((r.mean, r.std, r.n), (0.0, 0.0, 2));
    let s = story_alignment(std::slice::from_ref(&p), std::slice::from_ref(&p), KldDirection::GeneratedFirst).unwrap();
    assert_eq!(s.mean, 0.0);
}

#[test]
fn embedding_file_layout() {
    // Header line, then n·d little-endian f32 in row-major order.
    let mut bytes = br#"{"d":2,"n":3,"segment_span_s":10.0,"source_tag":"passt","kind":"logits"}"#.to_vec();
    bytes.push(b'\n');
    for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, -6.5] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let m = EmbeddingMatrix::from_bytes(&bytes).unwrap();
    assert_eq!((m.n(), m.d(), m.segment_span_s), (3, 2, 10.0));
    assert_eq!(m.kind, EmbeddingKind::Logits);
    assert_eq!(m.source_tag, "passt");
    assert_eq!(m.row(2), &[5.0, -6.5]);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.emb");
    m.write(&path).unwrap();
    assert_eq!(EmbeddingMatrix::read(&path).unwrap(), m);

    bytes.pop();
    assert!(EmbeddingMatrix::from_bytes(&bytes).is_err());
}
