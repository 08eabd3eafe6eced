use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{epsilon_next, Adam, QNetwork};
use super::replay::{Experience, ReplayBuffer};
use super::train::TrainConfig;
use crate::actions::ActionType;

/// Loss and mean predicted Q-value of one minibatch update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnStats {
    pub loss: f64,
    pub mean_q: f64,
}

/// Online and target networks, optimizer, replay memory, and exploration rate.
#[derive(Debug, Clone)]
pub struct Agent {
    pub online: QNetwork,
    pub target: QNetwork,
    pub adam: Adam,
    pub replay: ReplayBuffer,
    pub epsilon: f64,
    gamma: f64,
    minibatch: usize,
    target_update: usize,
    decay: f64,
    steps: usize,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(input_len: usize, cfg: &TrainConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![input_len];
        sizes.extend(&cfg.hidden);
        sizes.push(ActionType::COUNT);
        let online = QNetwork::new(&sizes, &mut rng);
        Self {
            target: online.clone(),
            adam: Adam::new(&online, cfg.learning_rate),
            online,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            epsilon: 1.0,
            gamma: cfg.gamma,
            minibatch: cfg.minibatch,
            target_update: cfg.target_update,
            decay: cfg.epsilon_decay,
            steps: 0,
            rng,
        }
    }

    /// Environment steps completed so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Index of the largest entry; ties go to the lower index.
    pub fn argmax(q: &[f64]) -> usize {
        let mut best = 0;
        for (i, &v) in q.iter().enumerate() {
            if v > q[best] {
                best = i;
            }
        }
        best
    }

    /// ε-greedy choice of an action type.
    pub fn act(&mut self, state: &[f64]) -> ActionType {
        let idx = if self.rng.gen::<f64>() < self.epsilon {
            self.rng.gen_range(0..ActionType::COUNT)
        } else {
            Self::argmax(&self.online.forward(state).expect("state length matches network"))
        };
        ActionType::from_index(idx).unwrap()
    }

    pub fn remember(&mut self, state: Arc<[f64]>, action: ActionType, reward: f64, next_state: Arc<[f64]>) {
        self.replay.push(Experience { state, action: action.index(), reward, next_state });
    }

    /// True once the memory holds more experiences than one minibatch.
    pub fn ready(&self) -> bool {
        self.replay.len() > self.minibatch
    }

    /// One Adam step on a uniformly sampled minibatch.
    pub fn learn(&mut self) -> LearnStats {
        let batch = self.replay.sample(self.minibatch, &mut self.rng);
        let n = batch.len();
        let width = self.online.input_len();
        let mut states = Array2::zeros((n, width));
        let mut next = Array2::zeros((n, width));
        for (i, e) in batch.iter().enumerate() {
            states.row_mut(i).assign(&ndarray::ArrayView1::from(&e.state[..]));
            next.row_mut(i).assign(&ndarray::ArrayView1::from(&e.next_state[..]));
        }
        let q_next = self.target.forward_batch(next.view());
        let actions: Vec<usize> = batch.iter().map(|e| e.action).collect();
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let best = q_next.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                e.reward + self.gamma * best
            })
            .collect();
        let lg = self.online.loss_and_grad(states.view(), &actions, &targets);
        self.adam.update(&mut self.online, &lg.grads);
        LearnStats { loss: lg.loss, mean_q: lg.mean_q }
    }

    /// Closes one environment step: target sync every δ steps, ε decay.
    pub fn end_step(&mut self) {
        self.steps += 1;
        if self.target_update > 0 && self.steps % self.target_update == 0 {
            self.target = self.online.clone();
        }
        self.epsilon = epsilon_next(self.epsilon, self.decay);
    }
}
