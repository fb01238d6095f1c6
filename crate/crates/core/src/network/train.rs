use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Network, Real};
use crate::board::PlaneStack;

/// One supervised target collected from a search episode.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub planes: PlaneStack,
    /// Root visit distribution over the flat action space.
    pub pi: Vec<f32>,
    /// Normalized remaining-cost label in `[0, 1]`.
    pub u: f32,
    pub legal_mask: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            minibatch: 160,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epochs == 0 || self.minibatch == 0 {
            return Err("epochs and minibatch must be positive".into());
        }
        let ok = self.learning_rate > 0.0 && self.momentum >= 0.0 && self.weight_decay >= 0.0;
        if !ok {
            return Err(
                "learning_rate must be positive, momentum and weight_decay non-negative".into(),
            );
        }
        Ok(())
    }
}

/// SGD with classical momentum: `v <- mu v + g; theta <- theta - lr v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd<T> {
    pub learning_rate: T,
    pub momentum: T,
    pub velocity: Vec<T>,
    pub steps: u64,
}

impl<T: Real> Sgd<T> {
    pub fn new(param_count: usize, learning_rate: f64, momentum: f64) -> Self {
        Sgd {
            learning_rate: T::from(learning_rate).unwrap(),
            momentum: T::from(momentum).unwrap(),
            velocity: vec![T::zero(); param_count],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.velocity.len());
        for ((p, v), &g) in params.iter_mut().zip(self.velocity.iter_mut()).zip(grads) {
            *v = self.momentum * *v + g;
            *p -= self.learning_rate * *v;
        }
        self.steps += 1;
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

/// Runs `config.epochs` shuffled passes over `dataset`.
pub fn train_iteration<T: Real, R: Rng>(
    net: &mut Network<T>,
    opt: &mut Sgd<T>,
    dataset: &[TrainingExample],
    config: &TrainConfig,
    rng: &mut R,
) -> TrainReport {
    assert!(!dataset.is_empty(), "training on an empty dataset");
    let c = T::from(config.weight_decay).unwrap();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut report = TrainReport::default();
    let mut batch = Vec::with_capacity(config.minibatch);
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.minibatch) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset[i].clone()));
            let (loss, grad) = net.loss_and_gradient(&batch, c);
            opt.step(net.params_mut(), &grad);
            total += loss.to_f64().unwrap();
            batches += 1;
            report.steps += 1;
        }
        let mean = total / batches as f64;
        debug!("epoch {epoch}: loss {mean:.6}");
        report.epoch_losses.push(mean);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetShape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example(h: usize, w: usize, seed: u64) -> TrainingExample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = h * w;
        let data = (0..6 * cells)
            .map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 })
            .collect();
        let mut legal_mask = vec![false; 4 * cells];
        let mut pi = vec![0.0f32; 4 * cells];
        let legal: Vec<usize> = (0..4).map(|_| rng.gen_range(0..4 * cells)).collect();
        for &i in &legal {
            legal_mask[i] = true;
        }
        let idx: Vec<usize> = (0..4 * cells).filter(|&i| legal_mask[i]).collect();
        let weights: Vec<f32> = idx.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f32 = weights.iter().sum();
        for (&i, &wt) in idx.iter().zip(&weights) {
            pi[i] = wt / total;
        }
        TrainingExample {
            planes: PlaneStack {
                height: h,
                width: w,
                data,
            },
            pi,
            u: rng.gen_range(0.0..1.0),
            legal_mask,
        }
    }

    #[test]
    fn plain_sgd_step() {
        let mut opt = Sgd::<f64>::new(2, 0.1, 0.0);
        let mut p = vec![1.0, -2.0];
        opt.step(&mut p, &[0.5, 1.0]);
        assert!((p[0] - 0.95).abs() < 1e-15 && (p[1] + 2.1).abs() < 1e-15);
        let before = p.clone();
        opt.step(&mut p, &[0.0, 0.0]);
        assert_eq!(p, before);
    }

    #[test]
    fn momentum_recurrence() {
        let mut opt = Sgd::<f64>::new(1, 0.1, 0.9);
        let mut p = vec![0.0];
        opt.step(&mut p, &[1.0]);
        assert!((p[0] + 0.1).abs() < 1e-15);
        opt.step(&mut p, &[1.0]);
        // second displacement 0.1 * 1.9
        assert!((p[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn single_step_when_batch_covers_dataset() {
        let shape = NetShape::new(4, 4, 4, 1);
        let mut net = Network::<f32>::new(shape, 1);
        let mut opt = Sgd::new(shape.param_count(), 0.01, 0.9);
        let data: Vec<_> = (0..5).map(|i| example(4, 4, i)).collect();
        let cfg = TrainConfig {
            epochs: 1,
            minibatch: 16,
            ..TrainConfig::default()
        };
        let report = train_iteration(
            &mut net,
            &mut opt,
            &data,
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(report.steps, 1);
        assert_eq!(opt.steps, 1);
    }

    #[test]
    fn training_is_deterministic() {
        let shape = NetShape::new(4, 4, 4, 1);
        let data: Vec<_> = (0..12).map(|i| example(4, 4, i)).collect();
        let cfg = TrainConfig {
            epochs: 3,
            minibatch: 5,
            ..TrainConfig::default()
        };
        let run = || {
            let mut net = Network::<f32>::new(shape, 9);
            let mut opt = Sgd::new(shape.param_count(), 0.01, 0.9);
            let r = train_iteration(
                &mut net,
                &mut opt,
                &data,
                &cfg,
                &mut ChaCha8Rng::seed_from_u64(4),
            );
            (net, r)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a.params(), b.params());
        assert_eq!(ra, rb);
        assert_eq!(ra.steps, 9);
    }

    #[test]
    fn memorization_smoke() {
        let shape = NetShape::new(5, 5, 16, 2);
        let mut net = Network::<f32>::new(shape, 5);
        let mut opt = Sgd::new(shape.param_count(), 0.01, 0.9);
        // one-hot targets so the cross-entropy floor is zero
        let data: Vec<_> = (0..10)
            .map(|i| {
                let mut ex = example(5, 5, 100 + i);
                let best = (0..ex.pi.len())
                    .max_by(|&a, &b| ex.pi[a].total_cmp(&ex.pi[b]))
                    .unwrap();
                ex.pi.iter_mut().for_each(|p| *p = 0.0);
                ex.pi[best] = 1.0;
                ex
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 200,
            minibatch: 10,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
        };
        let before = net.loss(&data, 1e-4);
        train_iteration(
            &mut net,
            &mut opt,
            &data,
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        let after = net.loss(&data, 1e-4);
        assert!(after <= 0.5 * before, "loss {before} -> {after}");
    }
}
