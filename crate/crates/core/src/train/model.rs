use log::info;
use rayon::prelude::*;

use crate::aggregate::ensemble_mean;
use crate::error::{Error, Result};
use crate::nnet::loss::bce_loss;
use crate::nnet::{DropoutMasks, NetConfig, NetState};
use crate::rng::{self, StreamRng};
use crate::train::augment::{to_input, Dihedral};
use crate::train::config::TrainConfig;
use crate::train::data::{balanced_subset, sample_balanced_batch, ClassIndex, FoldData, TileSample};
use crate::train::schedule::{run_schedule, EpochRunner, TrainLog};

/// Inference-mode probabilities of one model, in tile order.
pub fn predict_tiles(state: &NetState, tiles: &[TileSample]) -> Result<Vec<f64>> {
    check_tile_size(state.config(), tiles)?;
    tiles
        .par_iter()
        .map(|t| {
            let x = to_input(&t.pixels, t.size, Dihedral::IDENTITY);
            state.net.forward_sample(&state.params, &x, &t.covariates, None).map(|s| s.prob)
        })
        .collect()
}

/// Mean of the members' probabilities per tile.
pub fn predict_ensemble(states: &[NetState], tiles: &[TileSample]) -> Result<Vec<f64>> {
    if states.is_empty() {
        return Err(Error::invalid("ensemble has no members"));
    }
    let per_model = states.iter().map(|s| predict_tiles(s, tiles)).collect::<Result<Vec<_>>>()?;
    (0..tiles.len())
        .map(|i| {
            let v: Vec<f64> = per_model.iter().map(|m| m[i]).collect();
            ensemble_mean(&v, states.len())
        })
        .collect()
}

fn check_tile_size(cfg: &NetConfig, tiles: &[TileSample]) -> Result<()> {
    if let Some(t) = tiles.iter().find(|t| t.size != cfg.input_size || t.pixels.len() != t.size * t.size * 3) {
        return Err(Error::invalid(format!(
            "tile {}@{},{} is {}px, network expects {}px",
            t.slide_id, t.x, t.y, t.size, cfg.input_size
        )));
    }
    Ok(())
}

struct NetRunner<'a> {
    cfg: &'a TrainConfig,
    data: &'a FoldData,
    index: ClassIndex,
    tuning: Vec<usize>,
    state: NetState,
    best: Vec<f64>,
    sampler: StreamRng,
    augment: StreamRng,
    dropout: StreamRng,
}

impl NetRunner<'_> {
    fn tune_loss(&self) -> Result<f64> {
        let tiles: Vec<TileSample> = self.tuning.iter().map(|&i| self.data.tuning[i].clone()).collect();
        let probs = predict_tiles(&self.state, &tiles)?;
        let labels: Vec<f64> = tiles.iter().map(|t| t.label as f64).collect();
        Ok(bce_loss(&probs, &labels))
    }
}

impl EpochRunner for NetRunner<'_> {
    fn initial_tune_loss(&mut self) -> Result<f64> {
        self.tune_loss()
    }

    fn run_epoch(&mut self, _epoch: usize, lr: f64) -> Result<(f64, f64)> {
        let mut total = 0.0;
        for _ in 0..self.cfg.partial_epoch_iters {
            let batch = sample_balanced_batch(&self.index, self.cfg.batch_size, &mut self.sampler)?;
            let transforms: Vec<Dihedral> = batch
                .iter()
                .map(|_| if self.cfg.augment { Dihedral::random(&mut self.augment) } else { Dihedral::IDENTITY })
                .collect();
            let masks: Vec<DropoutMasks> = batch.iter().map(|_| self.state.net.draw_masks(&mut self.dropout)).collect();
            let inputs: Vec<Vec<f64>> = batch
                .par_iter()
                .zip(&transforms)
                .map(|(&i, &d)| {
                    let t = &self.data.train[i];
                    to_input(&t.pixels, t.size, d)
                })
                .collect();
            let xs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
            let cs: Vec<&[f64]> = batch.iter().map(|&i| self.data.train[i].covariates.as_slice()).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| self.data.train[i].label as f64).collect();
            let (loss, grads) = self.state.net.loss_and_grad(&self.state.params, &xs, &cs, &ys, &masks)?;
            self.state.adam_step(&grads, lr)?;
            total += loss;
        }
        Ok((total / self.cfg.partial_epoch_iters as f64, self.tune_loss()?))
    }

    fn keep_best(&mut self, _epoch: usize) {
        self.best.clone_from(&self.state.params);
    }
}

/// Trains one network and returns the parameters with the lowest tuning
/// loss. All randomness comes from named streams of `seed`.
pub fn train_model(data: &FoldData, cfg: &TrainConfig, net_cfg: &NetConfig, seed: u64) -> Result<(NetState, TrainLog)> {
    cfg.validate()?;
    data.validate()?;
    check_tile_size(net_cfg, &data.train)?;
    check_tile_size(net_cfg, &data.tuning)?;
    let index = ClassIndex::new(&data.train);
    if index.positive.is_empty() || index.negative.is_empty() {
        return Err(Error::invalid("training tiles must contain both classes"));
    }
    let state = NetState::new(net_cfg.clone(), cfg.optimizer, seed)?;
    let tuning = balanced_subset(&data.tuning, cfg.tuning_max_tiles, &mut rng::stream_indexed(seed, rng::stream::SAMPLER, 1));
    let mut runner = NetRunner {
        cfg,
        data,
        index,
        tuning,
        best: state.params.clone(),
        state,
        sampler: rng::stream(seed, rng::stream::SAMPLER),
        augment: rng::stream(seed, rng::stream::AUGMENT),
        dropout: rng::stream(seed, rng::stream::DROPOUT),
    };
    let log = run_schedule(cfg, &mut runner)?;
    info!(
        "seed {seed}: {} partial epochs, stop {}, best tuning loss {:.4} at {} (initial {:.4})",
        log.epochs.len(),
        log.stop_reason.as_str(),
        log.best_tune_loss,
        log.best_epoch,
        log.initial_tune_loss
    );
    let mut state = runner.state;
    state.params = runner.best;
    Ok((state, log))
}

/// Members use seeds `base_seed + m`; each is independent of the others
/// and of the thread schedule.
pub fn train_ensemble(data: &FoldData, cfg: &TrainConfig, net_cfg: &NetConfig, base_seed: u64) -> Result<Vec<(NetState, TrainLog)>> {
    (0..cfg.ensemble_size as u64)
        .into_par_iter()
        .map(|m| train_model(data, cfg, net_cfg, base_seed + m))
        .collect()
}
