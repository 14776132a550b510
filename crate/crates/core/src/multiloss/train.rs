use super::{
    adam_step, bin_angle, expected_angle, multi_loss, multi_loss_gradient, softmax, Activation,
    AdamConfig, AdamState, AngleHeadOutput, BinSpec, LossError, MultiLossConfig, ToyNet,
};
use crate::rotmath::EulerAngles;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: EulerAngles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub spec: BinSpec,
    pub loss: MultiLossConfig,
    pub adam: AdamConfig,
    pub hidden: usize,
    pub activation: Activation,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of the dataset held out for validation by [`train_toy`].
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            spec: BinSpec::default(),
            loss: MultiLossConfig::default(),
            adam: AdamConfig::default(),
            hidden: 128,
            activation: Activation::Tanh,
            batch_size: 32,
            epochs: 50,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-sample multi-loss over the epoch's minibatches.
    pub train_loss: f64,
    pub train_mae: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub net: ToyNet,
    /// Validation MAE of the freshly initialized network.
    pub untrained_val_mae: f64,
    pub curve: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_val_mae(&self) -> f64 {
        self.curve.last().map_or(self.untrained_val_mae, |s| s.val_mae)
    }
}

/// Expectation-decodes all three heads.
pub fn decode_angles(output: &AngleHeadOutput, spec: &BinSpec) -> EulerAngles {
    EulerAngles::from_array(std::array::from_fn(|a| {
        expected_angle(&softmax(&output.logits[a]), spec)
    }))
}

/// `[yaw, pitch, roll, mean]` absolute errors averaged over `samples`.
pub fn evaluate_mae(net: &ToyNet, samples: &[Sample]) -> Result<[f64; 4], LossError> {
    if samples.is_empty() {
        return Err(LossError::EmptyDataset);
    }
    let mut sums = [0.0; 3];
    for s in samples {
        let (_, out) = net.forward_cached(&s.input)?;
        let pred = decode_angles(&out, net.spec());
        for (acc, e) in sums.iter_mut().zip(pred.errors_to(&s.target)) {
            *acc += e;
        }
    }
    let n = samples.len();
    let m = sums.map(|s| s / n as f64);
    Ok([m[0], m[1], m[2], (m[0] + m[1] + m[2]) / 3.0])
}

fn validate(samples: &[Sample], config: &TrainConfig) -> Result<usize, LossError> {
    let first = samples.first().ok_or(LossError::EmptyDataset)?;
    let dim = first.input.len();
    for s in samples {
        if s.input.len() != dim {
            return Err(LossError::ShapeMismatch {
                expected: dim,
                found: s.input.len(),
            });
        }
        for a in s.target.as_array() {
            bin_angle(a, &config.spec)?;
        }
    }
    Ok(dim)
}

/// Seed for the augmentation of one sample in one epoch.
fn sample_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed
        .wrapping_add((epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits `dataset` deterministically into train and validation parts and trains.
pub fn train_toy(dataset: &[Sample], config: &TrainConfig) -> Result<TrainReport, LossError> {
    validate(dataset, config)?;
    if !(0.0..1.0).contains(&config.val_fraction) {
        return Err(LossError::InvalidConfig(format!(
            "val_fraction {} must lie in [0, 1)",
            config.val_fraction
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_5A17));
    let n_val = ((dataset.len() as f64 * config.val_fraction).round() as usize).min(dataset.len() - 1);
    let val: Vec<Sample> = order[..n_val].iter().map(|&i| dataset[i].clone()).collect();
    let train: Vec<Sample> = order[n_val..].iter().map(|&i| dataset[i].clone()).collect();
    train_toy_split(&train, &val, config, None)
}

/// Input transform applied to a training sample; receives a per-sample,
/// per-epoch seed.
pub type Augment<'a> = &'a (dyn Fn(&[f64], u64) -> Vec<f64> + Sync);

/// Trains on `train`, reporting validation MAE on `val` (NaN when `val` is
/// empty). `augment` rewrites each training input before it is used.
pub fn train_toy_split(
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
    augment: Option<Augment<'_>>,
) -> Result<TrainReport, LossError> {
    let dim = validate(train, config)?;
    if !val.is_empty() {
        validate(val, config)?;
        if val[0].input.len() != dim {
            return Err(LossError::ShapeMismatch {
                expected: dim,
                found: val[0].input.len(),
            });
        }
    }
    if config.batch_size == 0 || config.hidden == 0 {
        return Err(LossError::InvalidConfig("batch size and hidden width must be positive".into()));
    }
    if !(config.loss.alpha >= 0.0) {
        return Err(LossError::InvalidConfig(format!("alpha {} must be >= 0", config.loss.alpha)));
    }

    let mut net = ToyNet::new(dim, config.hidden, config.spec.clone(), config.activation, config.seed);
    let mut adam = AdamState::new(net.num_params(), config.adam);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let val_mae = |net: &ToyNet| -> Result<f64, LossError> {
        if val.is_empty() {
            Ok(f64::NAN)
        } else {
            Ok(evaluate_mae(net, val)?[3])
        }
    };
    let untrained_val_mae = val_mae(&net)?;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; net.num_params()];
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let sample = &train[i];
                let augmented;
                let input: &[f64] = match augment {
                    Some(f) => {
                        augmented = f(&sample.input, sample_seed(config.seed, epoch, i));
                        &augmented
                    }
                    None => &sample.input,
                };
                let (cache, out) = net.forward_cached(input)?;
                let loss = multi_loss(&out, &sample.target, &config.spec, &config.loss)?;
                if !loss.total.is_finite() {
                    return Err(LossError::Diverged { epoch });
                }
                loss_sum += loss.total;
                let mut g = multi_loss_gradient(&out, &sample.target, &config.spec, &config.loss)?;
                g.logits.iter_mut().flatten().for_each(|v| *v *= scale);
                net.backward_into(input, &cache, &g, &mut grad)?;
            }
            adam_step(net.params_mut(), &grad, &mut adam)?;
        }
        if !net.params().iter().all(|p| p.is_finite()) {
            return Err(LossError::Diverged { epoch });
        }
        curve.push(EpochStats {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_mae: evaluate_mae(&net, train)?[3],
            val_mae: val_mae(&net)?,
        });
    }

    Ok(TrainReport {
        net,
        untrained_val_mae,
        curve,
    })
}
