use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Lower bound applied to every class probability before renormalising.
pub const PROBABILITY_FLOOR: f64 = 1e-10;
const SUM_TOLERANCE: f64 = 1e-6;

/// Which distribution is the first argument of the divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KldDirection {
    /// KL(reference ‖ generated); for transitions, KL(before ‖ after).
    #[default]
    ReferenceFirst,
    /// KL(generated ‖ reference); for transitions, KL(after ‖ before).
    GeneratedFirst,
}

/// How classifier logits become a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityMapping {
    #[default]
    Softmax,
    /// Independent sigmoids normalised to sum to one, for multi-label heads.
    NormalizedSigmoid,
}

impl ProbabilityMapping {
    pub fn apply(self, logits: &[f64]) -> ClassProbabilities {
        match self {
            ProbabilityMapping::Softmax => softmax(logits),
            ProbabilityMapping::NormalizedSigmoid => {
                let raw: Vec<f64> = logits.iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect();
                floor_and_normalize(raw)
            }
        }
    }
}

/// A discrete distribution over classifier labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities(Vec<f64>);

impl ClassProbabilities {
    /// Accepts finite non-negative entries summing to one within 1e-6.
    pub fn new(probs: Vec<f64>) -> Result<Self, MetricsError> {
        if probs.is_empty() {
            return Err(MetricsError::InvalidProbabilities("empty distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(MetricsError::InvalidProbabilities("entries must lie in [0, 1]".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(MetricsError::InvalidProbabilities(format!("entries sum to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn floor_and_normalize(mut values: Vec<f64>) -> ClassProbabilities {
    let sum: f64 = values.iter().sum();
    for v in values.iter_mut() {
        *v = (*v / sum).max(PROBABILITY_FLOOR);
    }
    let sum: f64 = values.iter().sum();
    for v in values.iter_mut() {
        *v /= sum;
    }
    ClassProbabilities(values)
}

/// Max-subtracted softmax, floored at [`PROBABILITY_FLOOR`] and renormalised.
pub fn softmax(logits: &[f64]) -> ClassProbabilities {
    assert!(!logits.is_empty(), "softmax of an empty vector");
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    floor_and_normalize(exps)
}

/// `Σ p_j ln(p_j / q_j)`; zero-probability terms of `p` contribute nothing.
pub fn kld(p: &ClassProbabilities, q: &ClassProbabilities) -> Result<f64, MetricsError> {
    if p.len() != q.len() {
        return Err(MetricsError::DimensionMismatch { left: p.len(), right: q.len() });
    }
    let mut total = 0.0;
    for (&pj, &qj) in p.probs().iter().zip(q.probs()) {
        if pj == 0.0 {
            continue;
        }
        if qj <= 0.0 {
            return Err(MetricsError::InvalidProbabilities(
                "second distribution has zero mass where the first does not".into(),
            ));
        }
        total += pj * (pj / qj).ln();
    }
    Ok(total.max(0.0))
}

fn directed_kld(first: &ClassProbabilities, second: &ClassProbabilities, dir: KldDirection) -> Result<f64, MetricsError> {
    match dir {
        KldDirection::ReferenceFirst => kld(first, second),
        KldDirection::GeneratedFirst => kld(second, first),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population (n-normalised) standard deviation.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// Summation runs in slice order so results are reproducible.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt(), n: values.len() })
    }

    /// `"mean±std"` with two decimals.
    pub fn cell(&self) -> String {
        format!("{:.2}±{:.2}", self.mean, self.std)
    }
}

/// Divergence between timeline-paired reference and generated segments.
pub fn story_alignment(
    reference: &[ClassProbabilities],
    generated: &[ClassProbabilities],
    dir: KldDirection,
) -> Result<MeanStd, MetricsError> {
    if reference.len() != generated.len() {
        return Err(MetricsError::LengthMismatch { reference: reference.len(), generated: generated.len() });
    }
    let values = reference
        .iter()
        .zip(generated)
        .map(|(r, g)| directed_kld(r, g, dir))
        .collect::<Result<Vec<_>, _>>()?;
    MeanStd::from_values(&values).ok_or(MetricsError::NoPairs)
}

/// Divergence between the audio just before and just after each transition.
pub fn transition_smoothness(
    pairs: &[(ClassProbabilities, ClassProbabilities)],
    dir: KldDirection,
) -> Result<MeanStd, MetricsError> {
    let values = pairs
        .iter()
        .map(|(before, after)| directed_kld(before, after, dir))
        .collect::<Result<Vec<_>, _>>()?;
    MeanStd::from_values(&values).ok_or(MetricsError::NoValidTransitions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(v: &[f64]) -> ClassProbabilities {
        ClassProbabilities::new(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).probs(), &[0.5, 0.5]);
        let p = softmax(&[1f64.ln(), 3f64.ln()]);
        assert!((p.probs()[0] - 0.25).abs() < 1e-15);
        assert!((p.probs()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_shift_invariant_and_stable() {
        let a = softmax(&[0.3, -1.2, 2.5, 0.0]);
        let b = softmax(&[1000.3, 998.8, 1002.5, 1000.0]);
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() <= 1e-12);
        }
        let extreme = softmax(&[1e4, -1e4]);
        assert!(extreme.probs().iter().all(|p| *p > 0.0 && p.is_finite()));
        assert!((extreme.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kld_hand_value() {
        let v = kld(&probs(&[0.5, 0.5]), &probs(&[0.25, 0.75])).unwrap();
        assert!((v - 0.143841).abs() < 1e-6, "{v}");
        assert_eq!(kld(&probs(&[0.2, 0.8]), &probs(&[0.2, 0.8])).unwrap(), 0.0);
    }

    #[test]
    fn kld_zero_terms() {
        assert!((kld(&probs(&[0.0, 1.0]), &probs(&[0.5, 0.5])).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(kld(&probs(&[0.5, 0.5]), &probs(&[0.0, 1.0])).is_err());
        assert!(kld(&probs(&[1.0]), &probs(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn probabilities_validated() {
        assert!(ClassProbabilities::new(vec![0.5, 0.6]).is_err());
        assert!(ClassProbabilities::new(vec![-0.1, 1.1]).is_err());
        assert!(ClassProbabilities::new(vec![]).is_err());
    }

    #[test]
    fn mean_std_population() {
        let m = MeanStd::from_values(&[0.1, 0.3]).unwrap();
        assert!((m.mean - 0.2).abs() < 1e-15);
        assert!((m.std - 0.1).abs() < 1e-15);
        let single = MeanStd::from_values(&[4.2]).unwrap();
        assert_eq!((single.mean, single.std, single.n), (4.2, 0.0, 1));
        assert!(MeanStd::from_values(&[]).is_none());
    }

    #[test]
    fn cells_have_two_decimals() {
        assert_eq!(MeanStd { mean: 3.34, std: 1.89, n: 1 }.cell(), "3.34±1.89");
        assert_eq!(MeanStd { mean: 1.33, std: 1.19, n: 1 }.cell(), "1.33±1.19");
        assert_eq!(MeanStd { mean: 2.0, std: 1.0, n: 2 }.cell(), "2.00±1.00");
    }

    #[test]
    fn alignment_and_transitions() {
        let p = probs(&[0.5, 0.5]);
        let q = probs(&[0.25, 0.75]);
        let same = story_alignment(&[p.clone(), q.clone()], &[p.clone(), q.clone()], KldDirection::ReferenceFirst).unwrap();
        assert_eq!((same.mean, same.std), (0.0, 0.0));
        assert!(matches!(
            story_alignment(std::slice::from_ref(&p), &[], KldDirection::ReferenceFirst),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(story_alignment(&[], &[], KldDirection::ReferenceFirst), Err(MetricsError::NoPairs)));
        assert!(matches!(
            transition_smoothness(&[], KldDirection::ReferenceFirst),
            Err(MetricsError::NoValidTransitions)
        ));
        let fwd = story_alignment(std::slice::from_ref(&p), std::slice::from_ref(&q), KldDirection::ReferenceFirst).unwrap();
        let rev = story_alignment(std::slice::from_ref(&p), std::slice::from_ref(&q), KldDirection::GeneratedFirst).unwrap();
        assert!((fwd.mean - kld(&p, &q).unwrap()).abs() < 1e-15);
        assert!((rev.mean - kld(&q, &p).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_mapping_normalizes() {
        let p = ProbabilityMapping::NormalizedSigmoid.apply(&[0.0, 0.0, 10.0]);
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.probs()[2] > p.probs()[0]);
    }
}
