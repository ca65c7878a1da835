use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{augment_slice, DatasetPair};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, cross_entropy};
use crate::models::{Mode, Model, ModelSpec, PassStreams};
use crate::numerics::{derive_stream, Tensor};
use crate::perturbation::apply_random_bit_flip;

use super::{
    epoch_shuffle, lr_at, optimizer_step, EpochMetrics, OptimizerState, PredictionMatrix, RunInput, RunRecord,
    Schedule, Snapshot, SourceId, TrainConfig, BITFLIP_TAG,
};

fn sha256_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("plain data serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the model and training configuration.
pub fn config_digest(model: &ModelSpec, config: &TrainConfig) -> String {
    sha256_json(&(model, config))
}

/// Content address of a run: the first 16 hex digits of the digest of
/// everything that determines its outcome.
pub fn run_id(model: &ModelSpec, config: &TrainConfig, dataset_fingerprint: &str, input: &RunInput) -> String {
    let mut d = sha256_json(&(model, config, dataset_fingerprint, input));
    d.truncate(16);
    d
}

fn check_inputs(model: &ModelSpec, config: &TrainConfig, data: &DatasetPair, input: &RunInput) -> Result<()> {
    config.validate()?;
    model.validate()?;
    if data.train.example_dims() != model.input_shape || data.train.class_count() != model.class_count {
        return Err(Error::Config(format!(
            "dataset `{}` ({:?}, {} classes) does not fit the model ({:?}, {} classes)",
            data.name,
            data.train.example_dims(),
            data.train.class_count(),
            model.input_shape,
            model.class_count
        )));
    }
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::Config("empty dataset split".into()));
    }
    if let Some(onset) = &input.onset {
        if onset.epoch > config.epochs {
            return Err(Error::Config(format!(
                "onset epoch {} beyond {} epochs",
                onset.epoch, config.epochs
            )));
        }
        if onset.baseline.differing_sources(&input.seeds).len() > 1 {
            return Err(Error::Config("onset runs may vary only one source".into()));
        }
    }
    Ok(())
}

/// Trains one model and records everything the analyses need.
///
/// Each source draws from a stream re-derived per epoch from
/// (seed, source, epoch). Before `input.onset.epoch` the baseline seeds are
/// used, so runs sharing a baseline are bit-identical up to the onset.
pub fn train_run(
    model_spec: &ModelSpec,
    config: &TrainConfig,
    data: &DatasetPair,
    input: &RunInput,
) -> Result<RunRecord> {
    check_inputs(model_spec, config, data, input)?;
    let model = Model::new(model_spec)?;
    let train = &data.train;
    let test = &data.test;
    let n = train.len();
    let dims = train.example_dims();
    let example_len: usize = dims.iter().product();
    let steps_per_epoch = n.div_ceil(config.batch_size);

    let init_seed = input.seeds_at(0).param_init;
    let mut init_stream = derive_stream(init_seed, SourceId::ParamInit.tag(), 0);
    let mut params = model.init_params(&mut init_stream);
    let bitflip = match input.bitflip_seed {
        Some(seed) => {
            let (flipped, desc) = apply_random_bit_flip(&params, derive_stream(seed, BITFLIP_TAG, 0))?;
            params = flipped;
            Some(desc)
        }
        None => None,
    };

    let mut state = OptimizerState::new(&params, &config.optimizer);
    let mut history = Vec::with_capacity(config.epochs);
    let mut snapshots = Vec::new();
    let segment_epochs = match config.schedule {
        Schedule::Cyclic { cycles } => Some(config.epochs / cycles),
        _ => None,
    };
    let mut last = None;
    let mut scratch = Vec::new();

    for epoch in 0..config.epochs {
        let seeds = input.seeds_at(epoch);
        let e = epoch as u64;
        let order = epoch_shuffle(n, seeds.data_shuffle, epoch);
        let mut aug = derive_stream(seeds.data_augment, SourceId::DataAugment.tag(), e);
        let mut streams = PassStreams {
            dropout: derive_stream(seeds.stochastic_reg, SourceId::StochasticReg.tag(), e),
            noise: seeds
                .lowlevel_noise
                .seed()
                .map(|s| derive_stream(s, SourceId::LowLevelNoise.tag(), e)),
            noise_rel: config.lowlevel_noise_rel,
            noise_in_backward: config.noise_in_backward,
        };

        let mut loss_sum = 0.0f64;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let step = epoch * steps_per_epoch + b;
            let mut batch = Vec::with_capacity(chunk.len() * example_len);
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let start = batch.len();
                batch.extend_from_slice(train.example(i));
                if !config.augmentation.is_identity() {
                    augment_slice(&mut batch[start..], dims, &config.augmentation, &mut aug, &mut scratch);
                }
                labels.push(train.labels()[i]);
            }
            let batch = Tensor::new(vec![chunk.len(), dims[0], dims[1], dims[2]], batch)?;
            let (loss, mut grads) = model.loss_and_grad(&params, &batch, &labels, Mode::Train, &mut streams)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss",
                    epoch: Some(epoch),
                    step,
                });
            }
            loss_sum += loss * chunk.len() as f64;
            let lr = lr_at(config, step, steps_per_epoch);
            optimizer_step(&mut params, &mut grads, &mut state, lr, config).map_err(|err| match err {
                Error::NonFinite { what, .. } => Error::NonFinite {
                    what,
                    epoch: Some(epoch),
                    step,
                },
                other => other,
            })?;
        }

        let final_epoch = epoch + 1 == config.epochs;
        let (logits, capture) =
            model.predict_with_capture(&params, test.images(), final_epoch && config.capture_activations)?;
        let preds = PredictionMatrix::new(logits)?;
        history.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / n as f64,
            test_accuracy: accuracy(&preds, test.labels())?,
            test_cross_entropy: cross_entropy(&preds, test.labels())?,
        });
        if segment_epochs.is_some_and(|s| (epoch + 1) % s == 0) {
            snapshots.push(Snapshot {
                epoch,
                params: params.clone(),
                predictions: preds.clone(),
            });
        }
        if final_epoch {
            last = Some((preds, capture));
        }
    }

    let (predictions, activations) = last.expect("at least one epoch");
    Ok(RunRecord {
        run_id: run_id(model_spec, config, data.fingerprint(), input),
        config_digest: config_digest(model_spec, config),
        dataset: data.name.clone(),
        dataset_fingerprint: data.fingerprint().to_string(),
        model: model_spec.clone(),
        config: config.clone(),
        input: *input,
        bitflip,
        history,
        predictions,
        snapshots,
        activations,
        params_digest: params.digest(),
        params,
    })
}
