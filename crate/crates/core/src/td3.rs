//! Twin-delayed deterministic policy gradients over the [`crate::neuralnet`]
//! networks.
//!
//! The trainer owns six networks (actor, twin critics, and their targets) and
//! one Adam state per online network. Every randomised operation takes the
//! random generator as an argument, so training is reproducible as long as the
//! caller fixes its generator streams.
//!
//! Update scheme per environment step: one critic update towards the shared
//! clipped double-Q target, and every `policy_delay`-th call also one actor
//! ascent step through the first critic followed by a Polyak blend of all
//! three target networks.

use crate::neuralnet::{Activation, Adam, Mlp};
use crate::Real;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// One environment transition as stored in the replay buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<R> {
    pub state: Vec<R>,
    pub action: Vec<R>,
    pub reward: R,
    pub next_state: Vec<R>,
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform batch sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<R> {
    capacity: usize,
    data: Vec<Transition<R>>,
    next: usize,
}

impl<R> ReplayBuffer<R> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer needs positive capacity");
        Self { capacity, data: Vec::new(), next: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Insert, overwriting the oldest entry once full.
    pub fn push(&mut self, transition: Transition<R>) {
        if self.data.len() < self.capacity {
            self.data.push(transition);
        } else {
            self.data[self.next] = transition;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, index: usize) -> &Transition<R> {
        &self.data[index]
    }

    /// `count` indices drawn uniformly (with replacement).
    pub fn sample_indices(&self, rng: &mut impl Rng, count: usize) -> Vec<usize> {
        assert!(!self.is_empty(), "cannot sample from an empty buffer");
        (0..count).map(|_| rng.gen_range(0..self.data.len())).collect()
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Td3Config<R> {
    pub gamma: R,
    pub tau: R,
    pub actor_lr: R,
    pub critic_lr: R,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Std-dev of the Gaussian exploration noise added to behaviour actions.
    pub exploration_sigma: R,
    /// Std-dev of the target-smoothing noise.
    pub smoothing_sigma: R,
    /// Clip bound applied to the smoothing noise before use.
    pub smoothing_clip: R,
    /// Actor and target networks update every this many critic updates.
    pub policy_delay: u64,
    /// Environment steps driven by uniform random actions before the policy
    /// takes over.
    pub warmup_steps: usize,
    /// Hidden widths shared by actor and critics.
    pub hidden_dims: Vec<usize>,
    /// Rectify the critic output (clips value estimates at zero). Off by
    /// default; only sensible where returns are known nonnegative.
    pub relu_critic_output: bool,
    /// Evaluate the critics at the policy action instead of the stored batch
    /// action during critic updates. Off by default.
    pub critic_uses_policy_action: bool,
}

impl<R: Real> Default for Td3Config<R> {
    fn default() -> Self {
        Self {
            gamma: R::of(0.99),
            tau: R::of(0.001),
            actor_lr: R::of(1e-4),
            critic_lr: R::of(1e-3),
            batch_size: 64,
            buffer_capacity: 200_000,
            exploration_sigma: R::of(0.1),
            smoothing_sigma: R::of(0.2),
            smoothing_clip: R::of(0.5),
            policy_delay: 2,
            warmup_steps: 1000,
            hidden_dims: vec![256, 512, 512],
            relu_critic_output: false,
            critic_uses_policy_action: false,
        }
    }
}

/// Losses produced by one [`Td3Trainer::train_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses<R> {
    pub critic_loss: R,
    /// Mean Q of the actor batch; present only on delayed actor steps.
    pub actor_objective: Option<R>,
}

/// Polyak blend `target ← τ·online + (1−τ)·target`, elementwise.
pub fn polyak_blend<R: Real>(target: &mut [R], online: &[R], tau: R) {
    assert_eq!(target.len(), online.len(), "parameter shapes must match");
    let keep = R::one() - tau;
    for (t, &o) in target.iter_mut().zip(online) {
        *t = tau * o + keep * *t;
    }
}

#[derive(Clone, Debug)]
pub struct Td3Trainer<R: Real> {
    config: Td3Config<R>,
    state_dim: usize,
    action_dim: usize,
    actor: Mlp<R>,
    actor_target: Mlp<R>,
    critic1: Mlp<R>,
    critic1_target: Mlp<R>,
    critic2: Mlp<R>,
    critic2_target: Mlp<R>,
    actor_opt: Adam<R>,
    critic1_opt: Adam<R>,
    critic2_opt: Adam<R>,
    update_count: u64,
}

impl<R: Real> Td3Trainer<R> {
    /// Initialise all six networks from `rng` (draw order: actor, critic 1,
    /// critic 2; targets start as copies of their online networks).
    pub fn new(state_dim: usize, action_dim: usize, config: Td3Config<R>, rng: &mut impl Rng) -> Self {
        let mut actor_dims = vec![state_dim];
        actor_dims.extend_from_slice(&config.hidden_dims);
        actor_dims.push(action_dim);
        let mut critic_dims = vec![state_dim + action_dim];
        critic_dims.extend_from_slice(&config.hidden_dims);
        critic_dims.push(1);
        let critic_out = if config.relu_critic_output {
            Activation::Relu
        } else {
            Activation::Identity
        };
        let actor = Mlp::new(&actor_dims, Activation::Relu, Activation::Tanh, rng);
        let critic1 = Mlp::new(&critic_dims, Activation::Relu, critic_out, rng);
        let critic2 = Mlp::new(&critic_dims, Activation::Relu, critic_out, rng);
        let actor_opt = Adam::new(config.actor_lr, actor.param_count());
        let critic1_opt = Adam::new(config.critic_lr, critic1.param_count());
        let critic2_opt = Adam::new(config.critic_lr, critic2.param_count());
        Self {
            config,
            state_dim,
            action_dim,
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            actor_opt,
            critic1_opt,
            critic2_opt,
            update_count: 0,
        }
    }

    pub fn config(&self) -> &Td3Config<R> {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn actor(&self) -> &Mlp<R> {
        &self.actor
    }

    pub fn critic1(&self) -> &Mlp<R> {
        &self.critic1
    }

    pub fn critic2(&self) -> &Mlp<R> {
        &self.critic2
    }

    /// Replace the online actor (targets and optimiser state are rebuilt).
    pub fn set_actor(&mut self, net: Mlp<R>) {
        self.actor_opt = Adam::new(self.config.actor_lr, net.param_count());
        self.actor_target = net.clone();
        self.actor = net;
    }

    /// Replace the first critic (its target and optimiser state are rebuilt).
    pub fn set_critic1(&mut self, net: Mlp<R>) {
        self.critic1_opt = Adam::new(self.config.critic_lr, net.param_count());
        self.critic1_target = net.clone();
        self.critic1 = net;
    }

    /// Replace the second critic (its target and optimiser state are rebuilt).
    pub fn set_critic2(&mut self, net: Mlp<R>) {
        self.critic2_opt = Adam::new(self.config.critic_lr, net.param_count());
        self.critic2_target = net.clone();
        self.critic2 = net;
    }

    /// Deterministic policy action, componentwise in `[-1, 1]`.
    pub fn select_action(&self, state: &[R]) -> Vec<R> {
        self.actor.forward(state)
    }

    /// Policy action plus Gaussian exploration noise, clamped to the cube.
    pub fn explore_action(&self, state: &[R], rng: &mut impl Rng) -> Vec<R> {
        let normal = Normal::new(0.0, self.config.exploration_sigma.to64())
            .expect("nonnegative exploration sigma");
        self.actor
            .forward(state)
            .into_iter()
            .map(|a| (a + R::of(normal.sample(rng))).max(-R::one()).min(R::one()))
            .collect()
    }

    /// Target-policy action with clipped smoothing noise, clamped to the cube.
    pub fn smoothed_target_action(&self, next_state: &[R], rng: &mut impl Rng) -> Vec<R> {
        let clip = self.config.smoothing_clip;
        let normal = Normal::new(0.0, self.config.smoothing_sigma.to64())
            .expect("nonnegative smoothing sigma");
        self.actor_target
            .forward(next_state)
            .into_iter()
            .map(|a| {
                let noise = R::of(normal.sample(rng)).max(-clip).min(clip);
                (a + noise).max(-R::one()).min(R::one())
            })
            .collect()
    }

    /// Clipped double-Q bootstrap `y = r + γ(1−d)·min(Q1', Q2')(s', ã)`.
    /// Terminal transitions return the reward exactly and draw no noise.
    pub fn compute_target(&self, reward: R, done: bool, next_state: &[R], rng: &mut impl Rng) -> R {
        if done {
            return reward;
        }
        let action = self.smoothed_target_action(next_state, rng);
        let mut input = next_state.to_vec();
        input.extend_from_slice(&action);
        let q1 = self.critic1_target.forward(&input)[0];
        let q2 = self.critic2_target.forward(&input)[0];
        reward + self.config.gamma * q1.min(q2)
    }

    /// One gradient step on both critics towards the shared targets. Returns
    /// the mean of the two mean-squared errors.
    pub fn critic_update(&mut self, batch: &[&Transition<R>], rng: &mut impl Rng) -> R {
        assert!(!batch.is_empty(), "empty batch");
        let targets: Vec<R> = batch
            .iter()
            .map(|t| self.compute_target(t.reward, t.done, &t.next_state, rng))
            .collect();
        let actions: Vec<Vec<R>> = if self.config.critic_uses_policy_action {
            batch.iter().map(|t| self.actor.forward(&t.state)).collect()
        } else {
            batch.iter().map(|t| t.action.clone()).collect()
        };
        let inputs: Vec<Vec<R>> = batch
            .iter()
            .zip(&actions)
            .map(|(t, a)| {
                let mut input = t.state.clone();
                input.extend_from_slice(a);
                input
            })
            .collect();
        let l1 = critic_step(&mut self.critic1, &mut self.critic1_opt, &inputs, &targets);
        let l2 = critic_step(&mut self.critic2, &mut self.critic2_opt, &inputs, &targets);
        (l1 + l2) / R::of(2.0)
    }

    /// One ascent step on the actor through the frozen first critic. Returns
    /// the mean Q over the batch before the update.
    pub fn actor_update(&mut self, states: &[Vec<R>]) -> R {
        assert!(!states.is_empty(), "empty batch");
        let m_inv = R::one() / R::of(states.len() as f64);
        let mut grads = vec![R::zero(); self.actor.param_count()];
        let mut objective = R::zero();
        for s in states {
            let actor_cache = self.actor.forward_cache(s);
            let action = self.actor.output_of(&actor_cache);
            let mut input = s.clone();
            input.extend_from_slice(&action);
            let critic_cache = self.critic1.forward_cache(&input);
            objective = objective + self.critic1.output_of(&critic_cache)[0];
            // dQ/d(input) through the critic; only the action block feeds the
            // actor. Minimising −mean(Q) flips the sign.
            let critic_bp = self.critic1.backward(&critic_cache, &[R::one()]);
            let dl_da: Vec<R> = critic_bp.input_grad[s.len()..]
                .iter()
                .map(|&g| -g * m_inv)
                .collect();
            let actor_bp = self.actor.backward(&actor_cache, &dl_da);
            for (acc, g) in grads.iter_mut().zip(&actor_bp.grads) {
                *acc = *acc + *g;
            }
        }
        self.actor_opt.step(self.actor.params_mut(), &grads);
        objective * m_inv
    }

    /// Polyak-blend all three target networks towards their online twins.
    pub fn soft_update(&mut self) {
        let tau = self.config.tau;
        polyak_blend(self.actor_target.params_mut(), self.actor.params(), tau);
        polyak_blend(self.critic1_target.params_mut(), self.critic1.params(), tau);
        polyak_blend(self.critic2_target.params_mut(), self.critic2.params(), tau);
    }

    /// Sample a batch and run one critic update; every `policy_delay`-th call
    /// also updates the actor and the targets. Returns `None` (and changes
    /// nothing) while the buffer is smaller than one batch.
    pub fn train_step(
        &mut self,
        buffer: &ReplayBuffer<R>,
        rng: &mut impl Rng,
    ) -> Option<StepLosses<R>> {
        if buffer.len() < self.config.batch_size {
            return None;
        }
        let indices = buffer.sample_indices(rng, self.config.batch_size);
        let batch: Vec<&Transition<R>> = indices.iter().map(|&i| buffer.get(i)).collect();
        let critic_loss = self.critic_update(&batch, rng);
        self.update_count += 1;
        let actor_objective = if self.update_count % self.config.policy_delay == 0 {
            let states: Vec<Vec<R>> = batch.iter().map(|t| t.state.clone()).collect();
            let objective = self.actor_update(&states);
            self.soft_update();
            Some(objective)
        } else {
            None
        };
        Some(StepLosses { critic_loss, actor_objective })
    }
}

/// Mean-squared-error step of one critic towards fixed targets.
fn critic_step<R: Real>(
    critic: &mut Mlp<R>,
    opt: &mut Adam<R>,
    inputs: &[Vec<R>],
    targets: &[R],
) -> R {
    let m_inv = R::one() / R::of(inputs.len() as f64);
    let mut grads = vec![R::zero(); critic.param_count()];
    let mut loss = R::zero();
    for (input, &y) in inputs.iter().zip(targets) {
        let cache = critic.forward_cache(input);
        let q = critic.output_of(&cache)[0];
        let err = q - y;
        loss = loss + err * err;
        let bp = critic.backward(&cache, &[R::of(2.0) * err * m_inv]);
        for (acc, g) in grads.iter_mut().zip(&bp.grads) {
            *acc = *acc + *g;
        }
    }
    opt.step(critic.params_mut(), &grads);
    loss * m_inv
}
