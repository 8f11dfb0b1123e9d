use crate::error::{Error, Result};
use crate::nnet::checkpoint::Checkpoint;
use crate::nnet::network::{NetConfig, Network};
use crate::nnet::optim::{apply_head_max_norm, OptimizerKind, OptimizerState};
use crate::rng;

/// Network parameters together with optimizer state and the seed that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct NetState {
    pub net: Network,
    pub params: Vec<f64>,
    pub optimizer: OptimizerState,
    pub seed: u64,
}

impl NetState {
    /// Fresh He-initialised state drawn from the `init` stream of `seed`.
    pub fn new(cfg: NetConfig, optimizer: OptimizerKind, seed: u64) -> Result<Self> {
        let net = Network::new(cfg)?;
        let params = net.init_params(&mut rng::stream(seed, rng::stream::INIT));
        let optimizer = OptimizerState::new(optimizer, net.n_params);
        Ok(Self {
            net,
            params,
            optimizer,
            seed,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.net.cfg
    }

    /// One optimizer update followed by the max-norm projection.
    pub fn adam_step(&mut self, grads: &[f64], lr: f64) -> Result<()> {
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        self.optimizer.step(&mut self.params, grads, lr)?;
        apply_head_max_norm(&self.net, &mut self.params);
        Ok(())
    }

    pub fn apply_max_norm(&mut self, c: f64) {
        let fc = self.net.fc1;
        crate::nnet::optim::apply_max_norm(&mut self.params, fc.w_off, fc.output, fc.input, c);
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.net.cfg.clone(),
            seed: self.seed,
            params: self.params.clone(),
            optimizer: Some(self.optimizer.clone()),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let net = Network::new(ck.config)?;
        if ck.params.len() != net.n_params {
            return Err(Error::invalid("checkpoint parameters do not match its config"));
        }
        let optimizer = ck
            .optimizer
            .unwrap_or_else(|| OptimizerState::new(OptimizerKind::Adam, net.n_params));
        Ok(Self {
            net,
            params: ck.params,
            optimizer,
            seed: ck.seed,
        })
    }

    /// Loads a checkpoint and checks it against the expected network config.
    pub fn load_compatible(path: &std::path::Path, expected: &NetConfig) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        if &ck.config != expected {
            return Err(Error::invalid(format!(
                "checkpoint {} was built for a different network config",
                path.display()
            )));
        }
        Self::from_checkpoint(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_norm_holds_after_step_and_is_idempotent() {
        let mut s = NetState::new(NetConfig::tiny(), OptimizerKind::Sgd, 1).unwrap();
        let g = vec![-50.0; s.params.len()];
        s.adam_step(&g, 1.0).unwrap();
        let fc = s.net.fc1;
        for r in 0..fc.output {
            let row = &s.params[fc.w_off + r * fc.input..fc.w_off + (r + 1) * fc.input];
            assert!(row.iter().map(|w| w * w).sum::<f64>().sqrt() <= 3.0 * (1.0 + 1e-11));
        }
        let before = s.params.clone();
        s.apply_max_norm(3.0);
        assert_eq!(before, s.params);
    }

    #[test]
    fn zero_gradient_leaves_adam_params_unchanged() {
        let mut s = NetState::new(NetConfig::tiny(), OptimizerKind::Adam, 2).unwrap();
        s.apply_max_norm(3.0);
        let before = s.params.clone();
        s.adam_step(&vec![0.0; before.len()], 1e-3).unwrap();
        assert_eq!(before, s.params);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut s = NetState::new(NetConfig::tiny(), OptimizerKind::Adam, 2).unwrap();
        let mut g = vec![0.0; s.params.len()];
        g[3] = f64::NAN;
        assert!(matches!(s.adam_step(&g, 1e-3), Err(Error::Numerical(_))));
    }
}
