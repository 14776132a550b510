//! Binned angle classification with expectation decoding, and the combined
//! per-angle loss `CE(softmax(z), bin(y)) + α·(E[angle] − y)²`.
//!
//! Each of yaw, pitch and roll gets its own head of `num_bins` logits. The
//! classification weight is fixed at 1; `alpha` scales the regression term,
//! which is measured in squared degrees against the continuous target.

mod adam;
mod format;
mod toynet;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState, BACKBONE_LEARNING_RATE};
pub use format::{format_toynet, load_toynet, parse_toynet, save_toynet, TOYNET_MAGIC, TOYNET_VERSION};
pub use toynet::{toynet_backward, toynet_forward, Activation, ForwardCache, ToyNet};
pub use train::{
    decode_angles, evaluate_mae, train_toy, train_toy_split, Augment, EpochStats, Sample, TrainConfig,
    TrainReport,
};

use crate::rotmath::EulerAngles;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("angle {angle}° is outside the binned range [{min}, {max})")]
    OutOfRange { angle: f64, min: f64, max: f64 },
    #[error("invalid bin layout: {0}")]
    InvalidBinSpec(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged in epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Uniform bins over the half-open range `[min_angle, min_angle + num_bins·bin_width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    min_angle: f64,
    bin_width: f64,
    num_bins: usize,
    centers: Vec<f64>,
}

impl Default for BinSpec {
    /// 66 bins of 3° covering ±99°.
    fn default() -> Self {
        Self::new(-99.0, 3.0, 66).expect("default bin layout")
    }
}

impl BinSpec {
    pub fn new(min_angle: f64, bin_width: f64, num_bins: usize) -> Result<Self, LossError> {
        if num_bins < 2 {
            return Err(LossError::InvalidBinSpec(format!("need at least 2 bins, got {num_bins}")));
        }
        if !(bin_width > 0.0 && bin_width.is_finite() && min_angle.is_finite()) {
            return Err(LossError::InvalidBinSpec(format!(
                "bin width {bin_width} and minimum {min_angle} must be finite, width positive"
            )));
        }
        let centers = (0..num_bins)
            .map(|i| min_angle + (i as f64 + 0.5) * bin_width)
            .collect();
        Ok(Self {
            min_angle,
            bin_width,
            num_bins,
            centers,
        })
    }

    pub fn min_angle(&self) -> f64 {
        self.min_angle
    }

    pub fn max_angle(&self) -> f64 {
        self.min_angle + self.num_bins as f64 * self.bin_width
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn contains(&self, angle: f64) -> bool {
        angle >= self.min_angle && angle < self.max_angle()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiLossConfig {
    /// Weight of the regression term; the classification weight is 1.
    pub alpha: f64,
}

impl Default for MultiLossConfig {
    fn default() -> Self {
        Self { alpha: 2.0 }
    }
}

/// Logits for the yaw, pitch and roll heads, in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleHeadOutput {
    pub logits: [Vec<f64>; 3],
}

impl AngleHeadOutput {
    pub fn new(yaw: Vec<f64>, pitch: Vec<f64>, roll: Vec<f64>) -> Self {
        Self {
            logits: [yaw, pitch, roll],
        }
    }

    pub fn zeros(num_bins: usize) -> Self {
        Self::new(vec![0.0; num_bins], vec![0.0; num_bins], vec![0.0; num_bins])
    }

    fn check(&self, spec: &BinSpec) -> Result<(), LossError> {
        for head in &self.logits {
            if head.len() != spec.num_bins() {
                return Err(LossError::ShapeMismatch {
                    expected: spec.num_bins(),
                    found: head.len(),
                });
            }
        }
        Ok(())
    }
}

/// Loss terms for a single angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleLoss {
    pub cross_entropy: f64,
    /// Squared error of the decoded angle, in degrees².
    pub squared_error: f64,
    pub expected_angle: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Yaw, pitch, roll.
    pub per_angle: [AngleLoss; 3],
    pub total: f64,
}

/// Bin index of `angle`; angles outside the binned range are rejected.
pub fn bin_angle(angle: f64, spec: &BinSpec) -> Result<usize, LossError> {
    if !spec.contains(angle) {
        return Err(LossError::OutOfRange {
            angle,
            min: spec.min_angle(),
            max: spec.max_angle(),
        });
    }
    let idx = ((angle - spec.min_angle) / spec.bin_width).floor() as usize;
    Ok(idx.min(spec.num_bins - 1))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log(Σ exp(z))`, computed with max subtraction.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// `−log p[target]`.
pub fn cross_entropy(probabilities: &[f64], target: usize) -> f64 {
    -probabilities[target].ln()
}

/// Cross-entropy of `softmax(logits)` against `target`, without forming the
/// probabilities.
pub fn cross_entropy_logits(logits: &[f64], target: usize) -> f64 {
    log_sum_exp(logits) - logits[target]
}

/// Probability-weighted mean of the bin centers.
pub fn expected_angle(probabilities: &[f64], spec: &BinSpec) -> f64 {
    probabilities
        .iter()
        .zip(spec.centers())
        .map(|(p, c)| p * c)
        .sum()
}

fn check_targets(target: &EulerAngles, spec: &BinSpec) -> Result<[usize; 3], LossError> {
    Ok([
        bin_angle(target.yaw, spec)?,
        bin_angle(target.pitch, spec)?,
        bin_angle(target.roll, spec)?,
    ])
}

pub fn multi_loss(
    output: &AngleHeadOutput,
    target: &EulerAngles,
    spec: &BinSpec,
    config: &MultiLossConfig,
) -> Result<LossBreakdown, LossError> {
    output.check(spec)?;
    let bins = check_targets(target, spec)?;
    let targets = target.as_array();
    let mut per_angle = [AngleLoss {
        cross_entropy: 0.0,
        squared_error: 0.0,
        expected_angle: 0.0,
        total: 0.0,
    }; 3];
    for (a, slot) in per_angle.iter_mut().enumerate() {
        let logits = &output.logits[a];
        let ce = cross_entropy_logits(logits, bins[a]);
        let e = expected_angle(&softmax(logits), spec);
        let se = (e - targets[a]).powi(2);
        *slot = AngleLoss {
            cross_entropy: ce,
            squared_error: se,
            expected_angle: e,
            total: ce + config.alpha * se,
        };
    }
    let total = per_angle[0].total + per_angle[1].total + per_angle[2].total;
    Ok(LossBreakdown { per_angle, total })
}

/// Gradient of [`multi_loss`]'s total with respect to every logit.
///
/// Per head, with `p = softmax(z)` and `E = Σ pᵢcᵢ`:
/// `∂/∂zⱼ = pⱼ − [j = bin] + 2α(E − y)·pⱼ(cⱼ − E)`.
pub fn multi_loss_gradient(
    output: &AngleHeadOutput,
    target: &EulerAngles,
    spec: &BinSpec,
    config: &MultiLossConfig,
) -> Result<AngleHeadOutput, LossError> {
    output.check(spec)?;
    let bins = check_targets(target, spec)?;
    let targets = target.as_array();
    let heads = std::array::from_fn(|a| {
        let p = softmax(&output.logits[a]);
        let e = expected_angle(&p, spec);
        let scale = 2.0 * config.alpha * (e - targets[a]);
        p.iter()
            .zip(spec.centers())
            .enumerate()
            .map(|(j, (&pj, &cj))| {
                let onehot = if j == bins[a] { 1.0 } else { 0.0 };
                pj - onehot + scale * pj * (cj - e)
            })
            .collect()
    });
    Ok(AngleHeadOutput { logits: heads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_bins() -> BinSpec {
        BinSpec::new(-3.0, 3.0, 2).unwrap()
    }

    #[test]
    fn default_layout() {
        let s = BinSpec::default();
        assert_eq!(s.num_bins(), 66);
        assert_eq!(s.max_angle(), 99.0);
        assert_eq!(s.centers()[0], -97.5);
        assert_eq!(s.centers()[65], 97.5);
        assert!(s.centers().windows(2).all(|w| w[0] < w[1]));
        assert!(BinSpec::new(0.0, 1.0, 1).is_err());
        assert!(BinSpec::new(0.0, 0.0, 4).is_err());
    }

    #[test]
    fn bin_boundaries() {
        let s = BinSpec::default();
        assert_eq!(bin_angle(0.0, &s), Ok(33));
        assert_eq!(bin_angle(-99.0, &s), Ok(0));
        assert_eq!(bin_angle(98.999, &s), Ok(65));
        assert!(matches!(bin_angle(100.0, &s), Err(LossError::OutOfRange { .. })));
        assert!(matches!(bin_angle(99.0, &s), Err(LossError::OutOfRange { .. })));
        assert!(matches!(bin_angle(-99.001, &s), Err(LossError::OutOfRange { .. })));
        assert!(bin_angle(f64::NAN, &s).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = softmax(&[0.0; 66]);
        assert!((uniform.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((cross_entropy(&uniform, 17) - 66f64.ln()).abs() < 1e-12);
        assert!((cross_entropy_logits(&[0.0; 66], 17) - 66f64.ln()).abs() < 1e-12);

        let mut z = vec![0.0; 66];
        z[5] = 1000.0;
        assert!(cross_entropy(&softmax(&z), 5) <= 1e-9);
        assert!(cross_entropy_logits(&z, 5) <= 1e-9);

        assert!((cross_entropy(&softmax(&[0.0, 0.0]), 0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn expectation_examples() {
        let s = BinSpec::default();
        for i in [0, 13, 33, 65] {
            let mut p = vec![0.0; 66];
            p[i] = 1.0;
            assert_eq!(expected_angle(&p, &s), s.centers()[i]);
        }
        assert!(expected_angle(&vec![1.0 / 66.0; 66], &s).abs() < 1e-12);
        let mut p = vec![0.0; 66];
        p[0] = 0.5;
        p[65] = 0.5;
        assert_eq!(expected_angle(&p, &s), 0.0);
    }

    #[test]
    fn two_bin_hand_calculation() {
        // logits (0,0): p = (½,½), E = 0, target = center₀ = -1.5
        let spec = two_bins();
        let out = AngleHeadOutput::new(vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]);
        let target = EulerAngles::new(-1.5, -1.5, -1.5);
        let l = multi_loss(&out, &target, &spec, &MultiLossConfig { alpha: 1.0 }).unwrap();
        for a in l.per_angle {
            assert!((a.cross_entropy - 2f64.ln()).abs() < 1e-15);
            assert_eq!(a.squared_error, 2.25);
        }
        assert!((l.total - 3.0 * (2f64.ln() + 2.25)).abs() < 1e-12);
    }

    #[test]
    fn alpha_zero_is_pure_cross_entropy() {
        let spec = BinSpec::default();
        let out = AngleHeadOutput::new(
            (0..66).map(|i| (i as f64 * 0.37).sin()).collect(),
            (0..66).map(|i| (i as f64 * 0.11).cos()).collect(),
            (0..66).map(|i| i as f64 * 0.01).collect(),
        );
        let target = EulerAngles::new(12.3, -45.0, 80.0);
        let l = multi_loss(&out, &target, &spec, &MultiLossConfig { alpha: 0.0 }).unwrap();
        let bins = [37, 18, 59];
        let ce: Vec<f64> = (0..3).map(|a| cross_entropy_logits(&out.logits[a], bins[a])).collect();
        assert_eq!(l.total, ce[0] + ce[1] + ce[2]);

        let g = multi_loss_gradient(&out, &target, &spec, &MultiLossConfig { alpha: 0.0 }).unwrap();
        for a in 0..3 {
            let p = softmax(&out.logits[a]);
            for j in 0..66 {
                let expect = p[j] - if j == bins[a] { 1.0 } else { 0.0 };
                assert_eq!(g.logits[a][j], expect);
            }
        }
    }

    #[test]
    fn perfect_prediction_is_a_minimum() {
        let spec = BinSpec::default();
        let mut z = vec![0.0; 66];
        z[40] = 1000.0;
        let c = spec.centers()[40];
        let out = AngleHeadOutput::new(z.clone(), z.clone(), z);
        let target = EulerAngles::new(c, c, c);
        for alpha in [0.0, 1.0, 4.0] {
            let cfg = MultiLossConfig { alpha };
            assert!(multi_loss(&out, &target, &spec, &cfg).unwrap().total <= 1e-9);
            let g = multi_loss_gradient(&out, &target, &spec, &cfg).unwrap();
            let norm: f64 = g.logits.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= 1e-6);
        }
    }

    #[test]
    fn shape_and_range_errors() {
        let spec = BinSpec::default();
        let out = AngleHeadOutput::zeros(10);
        let cfg = MultiLossConfig::default();
        assert!(matches!(
            multi_loss(&out, &EulerAngles::default(), &spec, &cfg),
            Err(LossError::ShapeMismatch { expected: 66, found: 10 })
        ));
        let out = AngleHeadOutput::zeros(66);
        assert!(matches!(
            multi_loss(&out, &EulerAngles::new(0.0, 120.0, 0.0), &spec, &cfg),
            Err(LossError::OutOfRange { .. })
        ));
        assert!(multi_loss_gradient(&out, &EulerAngles::new(99.0, 0.0, 0.0), &spec, &cfg).is_err());
    }

    fn logits_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0f64..5.0, n)
    }

    proptest! {
        #[test]
        fn expectation_is_shift_invariant(z in logits_strategy(66), shift in -50.0f64..50.0) {
            let spec = BinSpec::default();
            let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
            let a = expected_angle(&softmax(&z), &spec);
            let b = expected_angle(&softmax(&shifted), &spec);
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!(a >= spec.centers()[0] && a <= spec.centers()[65]);
        }

        #[test]
        fn one_hot_decodes_to_its_bin(i in 0usize..66) {
            let spec = BinSpec::default();
            let mut p = vec![0.0; 66];
            p[i] = 1.0;
            prop_assert_eq!(bin_angle(expected_angle(&p, &spec), &spec), Ok(i));
        }

        #[test]
        fn loss_is_nonnegative_and_monotone_in_alpha(
            y in logits_strategy(66), p in logits_strategy(66), r in logits_strategy(66),
            t in (-98.0f64..98.0, -98.0f64..98.0, -98.0f64..98.0),
            alpha in 0.0f64..4.0, bump in 0.01f64..2.0,
        ) {
            let spec = BinSpec::default();
            let out = AngleHeadOutput::new(y, p, r);
            let target = EulerAngles::new(t.0, t.1, t.2);
            let lo = multi_loss(&out, &target, &spec, &MultiLossConfig { alpha }).unwrap();
            let hi = multi_loss(&out, &target, &spec, &MultiLossConfig { alpha: alpha + bump }).unwrap();
            prop_assert!(lo.total >= 0.0);
            let mse: f64 = lo.per_angle.iter().map(|a| a.squared_error).sum();
            if mse > 0.0 {
                prop_assert!(hi.total > lo.total);
            }
        }
    }
}
