//! The motion cVAE: state and interaction encoders, a Gaussian latent head,
//! and a mixture-of-experts decoder whose prediction-network weights are a
//! gating-weighted blend of K expert networks. Trained with scheduled
//! sampling over fixed-length rollout windows.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureStats;
use crate::error::{Error, Result};
use crate::nn::{
    self, axpy, dot, kl_grad, kl_standard_normal, prefixed, standard_normal, Activation, Adam,
    DenseLayer, DenseNet, GaussianLatent, Parameters, Trace,
};
use crate::state::{CharacterState, StateConfig};
use crate::voxel::{VoxelGrid, GRID_FLAT_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionNetConfig {
    pub state: StateConfig,
    pub state_encoder: Vec<usize>,
    pub interaction_encoder: Vec<usize>,
    pub latent: usize,
    /// Hidden widths of the gating network; the output width is `experts`.
    pub gating_hidden: Vec<usize>,
    pub experts: usize,
    /// Hidden widths of each expert; the output width is the state width.
    pub prediction_hidden: Vec<usize>,
}

impl MotionNetConfig {
    pub fn full() -> Self {
        Self {
            state: StateConfig::full(),
            state_encoder: vec![512, 256, 256],
            interaction_encoder: vec![256, 256, 256],
            latent: 64,
            gating_hidden: vec![512, 256],
            experts: 12,
            prediction_hidden: vec![512, 512],
        }
    }

    pub fn tiny() -> Self {
        Self {
            state: StateConfig::tiny(),
            state_encoder: vec![64, 32, 32],
            interaction_encoder: vec![32, 32, 32],
            latent: 8,
            gating_hidden: vec![32, 32],
            experts: 4,
            prediction_hidden: vec![64, 64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.state.validate()?;
        if self.experts == 0 || self.latent == 0 {
            return Err(Error::Config("experts and latent size must be >= 1".into()));
        }
        if self.state_encoder.is_empty() || self.interaction_encoder.is_empty() {
            return Err(Error::Config("encoders need at least one layer".into()));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state.state_dim()
    }

    fn interaction_width(&self) -> usize {
        *self.interaction_encoder.last().expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionNetParams {
    pub config: MotionNetConfig,
    pub state_encoder: DenseNet,
    pub interaction_encoder: DenseNet,
    pub mu_head: DenseLayer,
    pub sigma_head: DenseLayer,
    pub gating: DenseNet,
    pub experts: Vec<DenseNet>,
}

impl Parameters for MotionNetParams {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut parts: Vec<(String, &dyn Parameters)> = vec![
            ("state_encoder".into(), &self.state_encoder),
            ("interaction_encoder".into(), &self.interaction_encoder),
            ("mu_head".into(), &self.mu_head),
            ("sigma_head".into(), &self.sigma_head),
            ("gating".into(), &self.gating),
        ];
        for (k, e) in self.experts.iter().enumerate() {
            parts.push((format!("expert{k}"), e));
        }
        prefixed(parts)
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.state_encoder.tensors_mut();
        out.extend(self.interaction_encoder.tensors_mut());
        out.extend(self.mu_head.tensors_mut());
        out.extend(self.sigma_head.tensors_mut());
        out.extend(self.gating.tensors_mut());
        for e in &mut self.experts {
            out.extend(e.tensors_mut());
        }
        out
    }
}

/// Convex combination of expert parameter sets.
pub fn blend_experts(omega: &[f64], experts: &[DenseNet]) -> Result<DenseNet> {
    if omega.len() != experts.len() || experts.is_empty() {
        return Err(Error::DimMismatch {
            context: "blend weights",
            expected: experts.len(),
            actual: omega.len(),
        });
    }
    let sum: f64 = omega.iter().sum();
    if omega.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::WeightsNotNormalized(sum));
    }
    let mut out = experts[0].zeros_like();
    for (w, e) in omega.iter().zip(experts) {
        for (dst, (_, _, src)) in out.tensors_mut().into_iter().zip(e.tensors()) {
            axpy(*w, src, dst);
        }
    }
    Ok(out)
}

/// Everything the backward pass needs from one training transition.
#[derive(Debug, Clone)]
pub struct TransitionTrace {
    interaction: Trace,
    state: Trace,
    hidden: Vec<f64>,
    pub latent: GaussianLatent,
    eps: Vec<f64>,
    gate: Trace,
    blended: DenseNet,
    prediction: Trace,
}

impl TransitionTrace {
    pub fn prediction(&self) -> &[f64] {
        self.prediction.output()
    }

    pub fn omega(&self) -> &[f64] {
        self.gate.output()
    }
}

impl MotionNetParams {
    pub fn new<R: Rng + ?Sized>(config: MotionNetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let sd = config.state_dim();
        let state_encoder = DenseNet::new(2 * sd, &config.state_encoder, Activation::Elu, rng);
        let interaction_encoder =
            DenseNet::new(GRID_FLAT_LEN, &config.interaction_encoder, Activation::Elu, rng);
        let joint = state_encoder.output_size() + interaction_encoder.output_size();
        let mu_head = DenseLayer::init(joint, config.latent, Activation::Linear, rng);
        let sigma_head = DenseLayer::init(joint, config.latent, Activation::Linear, rng);
        let mut gw = config.gating_hidden.clone();
        gw.push(config.experts);
        let gating = DenseNet::new(config.latent + sd, &gw, Activation::Softmax, rng);
        let mut pw = config.prediction_hidden.clone();
        pw.push(sd);
        let pin = sd + config.interaction_width();
        let experts = (0..config.experts)
            .map(|_| DenseNet::new(pin, &pw, Activation::Linear, rng))
            .collect();
        Ok(Self {
            config,
            state_encoder,
            interaction_encoder,
            mu_head,
            sigma_head,
            gating,
            experts,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            state_encoder: self.state_encoder.zeros_like(),
            interaction_encoder: self.interaction_encoder.zeros_like(),
            mu_head: DenseLayer::zeros(self.mu_head.inputs, self.mu_head.outputs, Activation::Linear),
            sigma_head: DenseLayer::zeros(
                self.sigma_head.inputs,
                self.sigma_head.outputs,
                Activation::Linear,
            ),
            gating: self.gating.zeros_like(),
            experts: self.experts.iter().map(DenseNet::zeros_like).collect(),
        }
    }

    fn check(&self, what: &'static str, v: &[f64], n: usize) -> Result<()> {
        if v.len() != n {
            return Err(Error::DimMismatch {
                context: what,
                expected: n,
                actual: v.len(),
            });
        }
        Ok(())
    }

    fn latent_from_hidden(&self, hidden: &[f64]) -> GaussianLatent {
        let mut mu = Vec::new();
        let mut ls = Vec::new();
        self.mu_head.forward_into(hidden, &mut mu);
        self.sigma_head.forward_into(hidden, &mut ls);
        GaussianLatent { mu, log_sigma: ls }
    }

    /// Posterior over the latent given current and previous (normalized)
    /// states and the root-relative voxel input.
    pub fn encode(&self, current: &[f64], previous: &[f64], voxels: &[f64]) -> Result<GaussianLatent> {
        let sd = self.config.state_dim();
        self.check("current state", current, sd)?;
        self.check("previous state", previous, sd)?;
        self.check("voxel input", voxels, GRID_FLAT_LEN)?;
        let mut input = previous.to_vec();
        input.extend_from_slice(current);
        let mut hidden = self.state_encoder.forward(&input)?;
        hidden.extend(self.interaction_encoder.forward(voxels)?);
        Ok(self.latent_from_hidden(&hidden))
    }

    /// Gating weights for a latent sample and previous state.
    pub fn gate(&self, z: &[f64], previous: &[f64]) -> Result<Vec<f64>> {
        self.check("latent", z, self.config.latent)?;
        let mut input = z.to_vec();
        input.extend_from_slice(previous);
        self.gating.forward(&input)
    }

    /// Predicted next (normalized) state.
    pub fn decode(&self, z: &[f64], previous: &[f64], voxels: &[f64]) -> Result<Vec<f64>> {
        let sd = self.config.state_dim();
        self.check("previous state", previous, sd)?;
        self.check("voxel input", voxels, GRID_FLAT_LEN)?;
        let omega = self.gate(z, previous)?;
        let mut input = previous.to_vec();
        input.extend(self.interaction_encoder.forward(voxels)?);
        Ok(self.blended_forward(&omega, &input))
    }

    /// Runs the prediction network with blended weights without building
    /// the blended parameter set: each layer computes
    /// `sum_k w_k (W_k x + b_k)`, reading every expert matrix once.
    fn blended_forward(&self, omega: &[f64], input: &[f64]) -> Vec<f64> {
        let mut cur = input.to_vec();
        let n_layers = self.experts[0].layers.len();
        for l in 0..n_layers {
            let shape = &self.experts[0].layers[l];
            let mut out = vec![0.0; shape.outputs];
            for (w, e) in omega.iter().zip(&self.experts) {
                let layer = &e.layers[l];
                for (o, v) in out.iter_mut().enumerate() {
                    *v += w * (layer.bias[o] + dot(layer.row(o), &cur));
                }
            }
            if shape.activation == Activation::Elu {
                out.iter_mut().for_each(|v| *v = nn::elu(*v));
            }
            cur = out;
        }
        cur
    }

    pub fn forward_transition(
        &self,
        previous: &[f64],
        current: &[f64],
        voxels: &[f64],
        eps: &[f64],
    ) -> Result<TransitionTrace> {
        let sd = self.config.state_dim();
        self.check("previous state", previous, sd)?;
        self.check("current state", current, sd)?;
        self.check("voxel input", voxels, GRID_FLAT_LEN)?;
        self.check("latent noise", eps, self.config.latent)?;
        let interaction = self.interaction_encoder.forward_trace(voxels)?;
        let mut sin = previous.to_vec();
        sin.extend_from_slice(current);
        let state = self.state_encoder.forward_trace(&sin)?;
        let mut hidden = state.output().to_vec();
        hidden.extend_from_slice(interaction.output());
        let latent = self.latent_from_hidden(&hidden);
        let z = nn::reparameterize(&latent, eps)?;
        let mut gin = z;
        gin.extend_from_slice(previous);
        let gate = self.gating.forward_trace(&gin)?;
        let blended = blend_experts(gate.output(), &self.experts)?;
        let mut pin = previous.to_vec();
        pin.extend_from_slice(interaction.output());
        let prediction = blended.forward_trace(&pin)?;
        Ok(TransitionTrace {
            interaction,
            state,
            hidden,
            latent,
            eps: eps.to_vec(),
            gate,
            blended,
            prediction,
        })
    }

    /// Accumulates `scale * d(loss)/d(params)` into `grads`, where
    /// `d_prediction` is dL/d(prediction) and `beta` weights the KL term.
    pub fn backward_transition(
        &self,
        tr: &TransitionTrace,
        d_prediction: &[f64],
        beta: f64,
        scale: f64,
        grads: &mut MotionNetParams,
    ) {
        let sd = self.config.state_dim();
        let k = self.config.experts;
        let dpred: Vec<f64> = d_prediction.iter().map(|g| g * scale).collect();

        let mut dblend = tr.blended.zeros_like();
        let dpin = tr.blended.backward(&tr.prediction, &dpred, &mut dblend);
        let mut d_interaction = dpin[sd..].to_vec();

        let dblend_t = dblend.tensors();
        let mut domega = vec![0.0; k];
        for (e, (expert, gexp)) in self.experts.iter().zip(grads.experts.iter_mut()).enumerate() {
            let w = tr.gate.output()[e];
            for ((dst, (_, _, src)), (_, _, par)) in gexp
                .tensors_mut()
                .into_iter()
                .zip(&dblend_t)
                .zip(expert.tensors())
            {
                axpy(w, src, dst);
                domega[e] += dot(src, par);
            }
        }

        let dgin = self.gating.backward(&tr.gate, &domega, &mut grads.gating);
        let dz = &dgin[..self.config.latent];

        let (kmu, kls) = kl_grad(&tr.latent);
        let dmu: Vec<f64> = dz.iter().zip(&kmu).map(|(g, m)| g + beta * scale * m).collect();
        let dls: Vec<f64> = dz
            .iter()
            .zip(&tr.latent.log_sigma)
            .zip(&tr.eps)
            .zip(&kls)
            .map(|(((g, ls), e), kl)| g * ls.exp() * e + beta * scale * kl)
            .collect();
        let out_mu = tr.latent.mu.clone();
        let out_ls = tr.latent.log_sigma.clone();
        let mut dh = self.mu_head.backward(&tr.hidden, &out_mu, &dmu, &mut grads.mu_head);
        let dh2 = self
            .sigma_head
            .backward(&tr.hidden, &out_ls, &dls, &mut grads.sigma_head);
        axpy(1.0, &dh2, &mut dh);
        let se_out = self.state_encoder.output_size();
        self.state_encoder
            .backward(&tr.state, &dh[..se_out], &mut grads.state_encoder);
        axpy(1.0, &dh[se_out..], &mut d_interaction);
        self.interaction_encoder
            .backward(&tr.interaction, &d_interaction, &mut grads.interaction_encoder);
    }
}

/// Reconstruction (sum of squares) plus weighted KL.
pub fn motion_loss(predicted: &[f64], target: &[f64], latent: &GaussianLatent, beta: f64) -> f64 {
    let rec: f64 = predicted
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    rec + beta * kl_standard_normal(latent)
}

/// Teacher-forcing probability for a 1-based epoch.
pub fn schedule_p(epoch: usize, c1: usize, c2: usize) -> f64 {
    if epoch <= c1 {
        1.0
    } else if epoch <= c2 {
        1.0 - (epoch - c1) as f64 / (c2 - c1) as f64
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub c1: usize,
    pub c2: usize,
    pub rollout_length: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub learning_rate: f64,
    pub batch_clips: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            c1: 30,
            c2: 60,
            rollout_length: 60,
            epochs: 100,
            beta1: 0.1,
            learning_rate: 5e-5,
            batch_clips: 32,
        }
    }
}

impl ScheduleConfig {
    pub fn tiny() -> Self {
        Self {
            rollout_length: 10,
            learning_rate: 1e-3,
            batch_clips: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c1 >= self.c2 {
            return Err(Error::Config("C1 must be smaller than C2".into()));
        }
        if self.rollout_length < 2 {
            return Err(Error::Config("rollout length must be >= 2".into()));
        }
        Ok(())
    }
}

/// `rollout_length` consecutive ground-truth frames of one clip, already
/// normalized, with the voxel input for each frame's root.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingWindow {
    pub states: Vec<Vec<f64>>,
    pub voxels: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutReport {
    pub loss: f64,
    pub step_losses: Vec<f64>,
    pub teacher_forced: Vec<bool>,
    pub p: f64,
}

/// Params, optimizer and feature statistics for scheduled-sampling training.
#[derive(Debug, Clone)]
pub struct MotionTrainer {
    pub params: MotionNetParams,
    pub optimizer: Adam,
    pub stats: FeatureStats,
    pub schedule: ScheduleConfig,
}

impl MotionTrainer {
    pub fn new(params: MotionNetParams, stats: FeatureStats, schedule: ScheduleConfig) -> Self {
        let optimizer = Adam::new(schedule.learning_rate, schedule.epochs);
        Self {
            params,
            optimizer,
            stats,
            schedule,
        }
    }

    /// Replaces a recycled prediction's exogenous goal fields with ground
    /// truth and projects it back onto valid states.
    fn recycle(&self, predicted: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
        let cfg = &self.params.config.state;
        let mut s = CharacterState::unflatten(&self.stats.denormalize(predicted), cfg)?;
        s.sanitize();
        let mut v = self.stats.normalize(&s.flatten(cfg)?);
        let l = cfg.layout();
        for r in [l.gp, l.gd, l.ga] {
            v[r.clone()].copy_from_slice(&truth[r]);
        }
        Ok(v)
    }

    /// Loss and gradient of one window. `teacher` decides, per transition,
    /// whether the next input is ground truth; noise and coin draws come from
    /// `rng` in a fixed order.
    fn window_pass<R: Rng + ?Sized>(
        &self,
        window: &TrainingWindow,
        p: f64,
        scale: f64,
        rng: &mut R,
        grads: Option<&mut MotionNetParams>,
    ) -> Result<(Vec<f64>, Vec<bool>)> {
        let n = window.states.len();
        if n < 2 || window.voxels.len() != n {
            return Err(Error::DimMismatch {
                context: "training window",
                expected: self.schedule.rollout_length,
                actual: n,
            });
        }
        let beta = self.schedule.beta1;
        let steps = (n - 1) as f64;
        let mut prev = window.states[0].clone();
        let mut losses = Vec::with_capacity(n - 1);
        let mut forced = Vec::with_capacity(n - 1);
        let mut grads = grads;
        for i in 1..n {
            let eps = standard_normal(self.params.config.latent, rng);
            let coin: f64 = rng.random();
            let truth = &window.states[i];
            let tr = self
                .params
                .forward_transition(&prev, truth, &window.voxels[i - 1], &eps)?;
            let pred = tr.prediction();
            losses.push(motion_loss(pred, truth, &tr.latent, beta));
            if let Some(g) = grads.as_deref_mut() {
                let d: Vec<f64> = pred.iter().zip(truth).map(|(a, b)| 2.0 * (a - b)).collect();
                self.params
                    .backward_transition(&tr, &d, beta, scale / steps, g);
            }
            let teacher = coin < p;
            forced.push(teacher);
            prev = if teacher {
                truth.clone()
            } else {
                self.recycle(pred, truth)?
            };
        }
        Ok((losses, forced))
    }

    /// One optimizer step over a batch of windows at a 1-based `epoch`.
    pub fn train_rollout<R: Rng + ?Sized>(
        &mut self,
        windows: &[TrainingWindow],
        epoch: usize,
        rng: &mut R,
    ) -> Result<RolloutReport> {
        if windows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let p = schedule_p(epoch, self.schedule.c1, self.schedule.c2);
        let mut grads = self.params.zeros_like();
        let scale = 1.0 / windows.len() as f64;
        let mut step_losses = Vec::new();
        let mut teacher_forced = Vec::new();
        for w in windows {
            let (l, f) = self.window_pass(w, p, scale, rng, Some(&mut grads))?;
            step_losses.extend(l);
            teacher_forced.extend(f);
        }
        self.optimizer
            .update(&mut self.params, &grads, epoch.saturating_sub(1))?;
        let loss = step_losses.iter().sum::<f64>() / step_losses.len() as f64;
        Ok(RolloutReport {
            loss,
            step_losses,
            teacher_forced,
            p,
        })
    }

    /// Mean teacher-forced loss over windows without updating parameters.
    pub fn evaluate<R: Rng + ?Sized>(&self, windows: &[TrainingWindow], rng: &mut R) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for w in windows {
            let (l, _) = self.window_pass(w, 1.0, 1.0, rng, None)?;
            count += l.len();
            total += l.iter().sum::<f64>();
        }
        if count == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(total / count as f64)
    }

    /// Loss of one teacher-forced window with fixed noise, and its gradient.
    pub fn window_loss_and_grad(
        &self,
        window: &TrainingWindow,
        noise: &[Vec<f64>],
    ) -> Result<(f64, MotionNetParams)> {
        let n = window.states.len();
        let beta = self.schedule.beta1;
        let steps = (n - 1) as f64;
        let mut grads = self.params.zeros_like();
        let mut total = 0.0;
        for i in 1..n {
            let truth = &window.states[i];
            let tr = self.params.forward_transition(
                &window.states[i - 1],
                truth,
                &window.voxels[i - 1],
                &noise[i - 1],
            )?;
            let pred = tr.prediction();
            total += motion_loss(pred, truth, &tr.latent, beta) / steps;
            let d: Vec<f64> = pred.iter().zip(truth).map(|(a, b)| 2.0 * (a - b)).collect();
            self.params
                .backward_transition(&tr, &d, beta, 1.0 / steps, &mut grads);
        }
        Ok((total, grads))
    }

    pub fn into_model(self) -> MotionModel {
        MotionModel {
            params: self.params,
            stats: self.stats,
        }
    }

    pub fn model(&self) -> MotionModel {
        MotionModel {
            params: self.params.clone(),
            stats: self.stats.clone(),
        }
    }
}

/// Frozen network plus normalization statistics for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub params: MotionNetParams,
    pub stats: FeatureStats,
}

impl Parameters for MotionModel {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut t = prefixed([("net".to_string(), &self.params as &dyn Parameters)]);
        t.extend(prefixed([("stats".to_string(), &self.stats as &dyn Parameters)]));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.params.tensors_mut();
        t.extend(self.stats.tensors_mut());
        t
    }
}

pub const MOTION_MODEL_KIND: &str = "motion-net";

impl MotionModel {
    pub fn config(&self) -> &MotionNetConfig {
        &self.params.config
    }

    pub fn state_config(&self) -> &StateConfig {
        &self.params.config.state
    }

    /// Samples `Z ~ N(0, I)` and predicts the next state.
    pub fn predict_next<R: Rng + ?Sized>(
        &self,
        previous: &CharacterState,
        grid: &VoxelGrid,
        rng: &mut R,
    ) -> Result<CharacterState> {
        let z = standard_normal(self.params.config.latent, rng);
        self.predict_with_latent(previous, grid, &z)
    }

    pub fn predict_with_latent(
        &self,
        previous: &CharacterState,
        grid: &VoxelGrid,
        z: &[f64],
    ) -> Result<CharacterState> {
        let cfg = self.state_config();
        let prev = self.stats.normalize(&previous.flatten(cfg)?);
        let out = self.params.decode(z, &prev, &grid.flatten())?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteOutput);
        }
        let mut s = CharacterState::unflatten(&self.stats.denormalize(&out), cfg)?;
        s.sanitize();
        Ok(s)
    }

    pub fn save(&self, stem: &std::path::Path, seed: u64) -> Result<()> {
        nn::checkpoint::save(
            stem,
            self,
            MOTION_MODEL_KIND,
            seed,
            serde_json::to_value(self.config())?,
        )
    }

    pub fn load(stem: &std::path::Path) -> Result<Self> {
        let manifest = nn::checkpoint::read_manifest(stem)?;
        if manifest.model != MOTION_MODEL_KIND {
            return Err(Error::Config(format!(
                "checkpoint holds `{}`, expected `{MOTION_MODEL_KIND}`",
                manifest.model
            )));
        }
        let config: MotionNetConfig = serde_json::from_value(manifest.hyperparameters.clone())?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let params = MotionNetParams::new(config, &mut rng)?;
        let mut model = MotionModel {
            stats: FeatureStats::identity(params.config.state_dim()),
            params,
        };
        nn::checkpoint::load_into(stem, &mut model)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::relative_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn micro_config() -> MotionNetConfig {
        MotionNetConfig {
            state: StateConfig {
                joints: 1,
                traj_samples: 1,
                actions: 2,
                window_seconds: 1.0,
                fps: 30,
            },
            state_encoder: vec![6, 5],
            interaction_encoder: vec![4, 3],
            latent: 3,
            gating_hidden: vec![5],
            experts: 3,
            prediction_hidden: vec![6],
        }
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(schedule_p(30, 30, 60), 1.0);
        assert_eq!(schedule_p(45, 30, 60), 0.5);
        assert_eq!(schedule_p(61, 30, 60), 0.0);
        assert_eq!(schedule_p(60, 30, 60), 0.0);
        assert_eq!(schedule_p(1, 30, 60), 1.0);
        // the middle branch is continuous with the first at C1
        assert_eq!(1.0 - (30.0 - 30.0) / 30.0, schedule_p(30, 30, 60));
    }

    #[test]
    fn blend_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let experts: Vec<DenseNet> = (0..3)
            .map(|_| DenseNet::new(2, &[3], Activation::Linear, &mut rng))
            .collect();
        assert_eq!(blend_experts(&[0.0, 1.0, 0.0], &experts).unwrap(), experts[1]);
        let mean = blend_experts(&[1.0 / 3.0; 3], &experts).unwrap();
        for i in 0..6 {
            let m = experts.iter().map(|e| e.layers[0].weight[i]).sum::<f64>() / 3.0;
            assert!((mean.layers[0].weight[i] - m).abs() < 1e-12);
        }
        let scalar = |v: f64| DenseNet {
            layers: vec![DenseLayer {
                weight: vec![v],
                bias: vec![0.0],
                inputs: 1,
                outputs: 1,
                activation: Activation::Linear,
            }],
        };
        let b = blend_experts(&[0.25, 0.75], &[scalar(0.0), scalar(4.0)]).unwrap();
        assert_eq!(b.layers[0].weight[0], 3.0);
        assert!(matches!(
            blend_experts(&[0.5, 0.6], &[scalar(0.0), scalar(4.0)]),
            Err(Error::WeightsNotNormalized(_))
        ));
    }

    #[test]
    fn blend_is_affine_in_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let experts: Vec<DenseNet> = (0..4)
            .map(|_| DenseNet::new(3, &[2, 2], Activation::Linear, &mut rng))
            .collect();
        let w1 = [0.1, 0.2, 0.3, 0.4];
        let w2 = [0.7, 0.1, 0.1, 0.1];
        let a = 0.35;
        let mix: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + (1.0 - a) * y).collect();
        let lhs = blend_experts(&mix, &experts).unwrap();
        let b1 = blend_experts(&w1, &experts).unwrap();
        let b2 = blend_experts(&w2, &experts).unwrap();
        for ((l, (_, _, x)), (_, _, y)) in lhs.tensors().iter().zip(b1.tensors()).zip(b2.tensors()) {
            for i in 0..l.2.len() {
                assert!((l.2[i] - (a * x[i] + (1.0 - a) * y[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_examples() {
        let std = GaussianLatent::standard(64);
        assert_eq!(motion_loss(&[1.0, 2.0], &[1.0, 2.0], &std, 0.1), 0.0);
        assert_eq!(motion_loss(&[1.0, 3.0], &[1.0, 2.0], &std, 0.1), 1.0);
        let shifted = GaussianLatent {
            mu: vec![1.0; 64],
            log_sigma: vec![0.0; 64],
        };
        assert!((motion_loss(&[0.0], &[0.0], &shifted, 0.1) - 3.2).abs() < 1e-12);
    }

    #[test]
    fn full_sized_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = MotionNetParams::new(MotionNetConfig::full(), &mut rng).unwrap();
        assert_eq!(p.config.state_dim(), 647);
        assert_eq!(p.gating.shape(), vec![64 + 647, 512, 256, 12]);
        assert_eq!(p.experts.len(), 12);
        assert_eq!(p.experts[0].shape(), vec![647 + 256, 512, 512, 647]);
        assert_eq!(p.state_encoder.shape(), vec![2 * 647, 512, 256, 256]);
        assert_eq!(p.interaction_encoder.shape(), vec![2048, 256, 256, 256]);
        let x = vec![0.1; 647];
        let vox = vec![0.0; 2048];
        let latent = p.encode(&x, &x, &vox).unwrap();
        assert_eq!(latent.mu.len(), 64);
        assert_eq!(latent.log_sigma.len(), 64);
        let out = p.decode(&vec![0.0; 64], &x, &vox).unwrap();
        assert_eq!(out.len(), 647);
        let omega = p.gate(&vec![0.3; 64], &x).unwrap();
        assert!((omega.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encode_is_deterministic_and_propagates_biases() {
        let cfg = micro_config();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = MotionNetParams::new(cfg.clone(), &mut rng).unwrap();
        let sd = cfg.state_dim();
        let x = vec![0.2; sd];
        let vox = vec![0.1; GRID_FLAT_LEN];
        assert_eq!(p.encode(&x, &x, &vox).unwrap(), p.encode(&x, &x, &vox).unwrap());
        assert!(p.encode(&x[..3], &x, &vox).is_err());

        // zero weights everywhere: the chain reduces to the biases
        p.fill_zero();
        for (i, l) in p.state_encoder.layers.iter_mut().enumerate() {
            l.bias.iter_mut().for_each(|b| *b = 0.5 - i as f64);
        }
        for l in &mut p.interaction_encoder.layers {
            l.bias.iter_mut().for_each(|b| *b = -1.0);
        }
        p.mu_head.bias.iter_mut().for_each(|b| *b = 0.25);
        // a one-to-one path: mu_0 = 0.25 + h_0, h_0 = ELU(0 + bias of last state layer)
        p.mu_head.weight[0] = 1.0;
        let z = p.encode(&vec![0.0; sd], &vec![0.0; sd], &vec![0.0; GRID_FLAT_LEN]).unwrap();
        // state encoder last layer has bias 0.5 - 1 = -0.5, ELU(-0.5) = e^-0.5 - 1
        let expected = 0.25 + ((-0.5f64).exp() - 1.0);
        assert!((z.mu[0] - expected).abs() < 1e-12);
        assert!(z.mu[1..].iter().all(|&m| (m - 0.25).abs() < 1e-12));
        assert!(z.log_sigma.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn blended_forward_matches_explicit_blend() {
        let cfg = micro_config();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = MotionNetParams::new(cfg.clone(), &mut rng).unwrap();
        let sd = cfg.state_dim();
        let x: Vec<f64> = (0..sd).map(|i| (i as f64 * 0.37).sin()).collect();
        let vox: Vec<f64> = (0..GRID_FLAT_LEN).map(|i| (i as f64 * 0.01).cos()).collect();
        let z = [0.3, -0.2, 0.9];
        let omega = p.gate(&z, &x).unwrap();
        let net = blend_experts(&omega, &p.experts).unwrap();
        let mut pin = x.clone();
        pin.extend(p.interaction_encoder.forward(&vox).unwrap());
        let a = net.forward(&pin).unwrap();
        let b = p.decode(&z, &x, &vox).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        let z2 = [-1.3, 0.4, 0.1];
        assert_ne!(b, p.decode(&z2, &x, &vox).unwrap());
    }

    #[test]
    fn transition_gradients_match_finite_differences() {
        let cfg = micro_config();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = MotionNetParams::new(cfg.clone(), &mut rng).unwrap();
        let sd = cfg.state_dim();
        let window = TrainingWindow {
            states: (0..3)
                .map(|_| (0..sd).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
            voxels: (0..3)
                .map(|_| (0..GRID_FLAT_LEN).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        };
        let noise: Vec<Vec<f64>> = (0..2).map(|_| standard_normal(3, &mut rng)).collect();
        let mut trainer = MotionTrainer::new(p, FeatureStats::identity(sd), ScheduleConfig::default());
        let (_, grads) = trainer.window_loss_and_grad(&window, &noise).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.2.to_vec()).collect();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for (k, g) in analytic.iter().enumerate() {
            // every entry of small tensors, a stride through the voxel layer
            let stride = if g.len() > 200 { 37 } else { 1 };
            for i in (0..g.len()).step_by(stride) {
                let orig = trainer.params.tensors_mut()[k][i];
                trainer.params.tensors_mut()[k][i] = orig + eps;
                let up = trainer.window_loss_and_grad(&window, &noise).unwrap().0;
                trainer.params.tensors_mut()[k][i] = orig - eps;
                let down = trainer.window_loss_and_grad(&window, &noise).unwrap().0;
                trainer.params.tensors_mut()[k][i] = orig;
                let err = relative_error(g[i], (up - down) / (2.0 * eps));
                worst = worst.max(err);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }
}
