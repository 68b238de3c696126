//! The goal cVAE. Given an object's center-relative voxel grid it samples
//! plausible interaction goals (position and facing direction) on the
//! object. Positions are learned relative to the object's center and
//! divided by its bounding-box half-diagonal, so one network covers objects
//! of different sizes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureStats;
use crate::error::{Error, Result};
use crate::kinematics::Vec3;
use crate::nn::{
    self, kl_grad, kl_standard_normal, prefixed, reparameterize, standard_normal, Activation, Adam,
    DenseLayer, DenseNet, GaussianLatent, Parameters,
};
use crate::state::{Action, Goal};
use crate::voxel::{voxelize_object, SceneObject, GRID_FLAT_LEN};

/// Width of a decoded goal: position then direction.
pub const GOAL_WIDTH: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalNetConfig {
    pub interaction_encoder: Vec<usize>,
    /// Hidden widths between the concatenated input and the latent heads;
    /// the decoder mirrors them before its 6-wide output layer.
    pub tail: Vec<usize>,
    pub latent: usize,
    pub beta2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch: usize,
}

impl GoalNetConfig {
    pub fn full() -> Self {
        Self {
            interaction_encoder: vec![512, 512, 64],
            tail: vec![256, 256],
            latent: 3,
            beta2: 0.5,
            learning_rate: 1e-3,
            epochs: 100,
            batch: 32,
        }
    }

    pub fn tiny() -> Self {
        Self {
            interaction_encoder: vec![64, 64, 16],
            tail: vec![32, 32],
            epochs: 60,
            batch: 16,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.interaction_encoder.is_empty() || self.tail.is_empty() {
            return Err(Error::Config("goal encoder and tail need at least one layer".into()));
        }
        if self.latent == 0 || self.batch == 0 {
            return Err(Error::Config("goal latent and batch sizes must be >= 1".into()));
        }
        if !(self.beta2 >= 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config("goal beta2 must be >= 0 and learning rate > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalNetParams {
    pub config: GoalNetConfig,
    pub interaction_encoder: DenseNet,
    pub encoder_tail: DenseNet,
    pub mu_head: DenseLayer,
    pub sigma_head: DenseLayer,
    pub decoder: DenseNet,
}

impl Parameters for GoalNetParams {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        prefixed([
            ("interaction_encoder".to_string(), &self.interaction_encoder as &dyn Parameters),
            ("encoder_tail".to_string(), &self.encoder_tail),
            ("mu_head".to_string(), &self.mu_head),
            ("sigma_head".to_string(), &self.sigma_head),
            ("decoder".to_string(), &self.decoder),
        ])
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.interaction_encoder.tensors_mut();
        out.extend(self.encoder_tail.tensors_mut());
        out.extend(self.mu_head.tensors_mut());
        out.extend(self.sigma_head.tensors_mut());
        out.extend(self.decoder.tensors_mut());
        out
    }
}

/// A goal in normalized object-center coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSample {
    pub position: Vec3,
    pub direction: Vec3,
}

impl GoalSample {
    fn to_vec(self) -> [f64; GOAL_WIDTH] {
        let (p, d) = (self.position, self.direction);
        [p.x, p.y, p.z, d.x, d.y, d.z]
    }
}

/// Squared position error + squared direction error + `beta2` KL.
pub fn goal_loss(predicted: &[f64], truth: &GoalSample, latent: &GaussianLatent, beta2: f64) -> f64 {
    let t = truth.to_vec();
    let recon: f64 = predicted.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum();
    recon + beta2 * kl_standard_normal(latent)
}

/// Backward-pass record of one training sample.
struct GoalTrace {
    interaction: nn::Trace,
    tail: nn::Trace,
    hidden: Vec<f64>,
    latent: GaussianLatent,
    eps: Vec<f64>,
    decoder: nn::Trace,
}

impl GoalNetParams {
    pub fn new<R: Rng + ?Sized>(config: GoalNetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let interaction_encoder = DenseNet::new(GRID_FLAT_LEN, &config.interaction_encoder, Activation::Elu, rng);
        let h = interaction_encoder.output_size();
        let encoder_tail = DenseNet::new(h + GOAL_WIDTH, &config.tail, Activation::Elu, rng);
        let e = *config.tail.last().expect("validated");
        let mu_head = DenseLayer::init(e, config.latent, Activation::Linear, rng);
        let sigma_head = DenseLayer::init(e, config.latent, Activation::Linear, rng);
        let mut dw: Vec<usize> = config.tail.iter().rev().copied().collect();
        dw.push(GOAL_WIDTH);
        let decoder = DenseNet::new(config.latent + h, &dw, Activation::Linear, rng);
        Ok(Self {
            config,
            interaction_encoder,
            encoder_tail,
            mu_head,
            sigma_head,
            decoder,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            interaction_encoder: self.interaction_encoder.zeros_like(),
            encoder_tail: self.encoder_tail.zeros_like(),
            mu_head: DenseLayer::zeros(self.mu_head.inputs, self.mu_head.outputs, Activation::Linear),
            sigma_head: DenseLayer::zeros(self.sigma_head.inputs, self.sigma_head.outputs, Activation::Linear),
            decoder: self.decoder.zeros_like(),
        }
    }

    fn check_voxels(voxels: &[f64]) -> Result<()> {
        if voxels.len() != GRID_FLAT_LEN {
            return Err(Error::DimMismatch {
                context: "goal voxel input",
                expected: GRID_FLAT_LEN,
                actual: voxels.len(),
            });
        }
        Ok(())
    }

    fn heads(&self, e: &[f64]) -> GaussianLatent {
        let (mut mu, mut ls) = (Vec::new(), Vec::new());
        self.mu_head.forward_into(e, &mut mu);
        self.sigma_head.forward_into(e, &mut ls);
        GaussianLatent { mu, log_sigma: ls }
    }

    /// Posterior over the goal latent.
    pub fn encode_goal(&self, goal: &GoalSample, voxels: &[f64]) -> Result<GaussianLatent> {
        Self::check_voxels(voxels)?;
        let mut x = self.interaction_encoder.forward(voxels)?;
        x.extend(goal.to_vec());
        let e = self.encoder_tail.forward(&x)?;
        Ok(self.heads(&e))
    }

    /// Raw 6-wide decoder output.
    pub fn decode_raw(&self, z: &[f64], voxels: &[f64]) -> Result<Vec<f64>> {
        Self::check_voxels(voxels)?;
        if z.len() != self.config.latent {
            return Err(Error::DimMismatch {
                context: "goal latent",
                expected: self.config.latent,
                actual: z.len(),
            });
        }
        let mut x = z.to_vec();
        x.extend(self.interaction_encoder.forward(voxels)?);
        self.decoder.forward(&x)
    }

    fn forward_sample(&self, goal: &GoalSample, voxels: &[f64], eps: &[f64]) -> Result<GoalTrace> {
        Self::check_voxels(voxels)?;
        let interaction = self.interaction_encoder.forward_trace(voxels)?;
        let mut x = interaction.output().to_vec();
        x.extend(goal.to_vec());
        let tail = self.encoder_tail.forward_trace(&x)?;
        let hidden = tail.output().to_vec();
        let latent = self.heads(&hidden);
        let z = reparameterize(&latent, eps)?;
        let mut dx = z;
        dx.extend_from_slice(interaction.output());
        let decoder = self.decoder.forward_trace(&dx)?;
        Ok(GoalTrace {
            interaction,
            tail,
            hidden,
            latent,
            eps: eps.to_vec(),
            decoder,
        })
    }

    /// Loss of one sample with fixed noise; gradients scaled by `scale` are
    /// accumulated into `grads`.
    fn sample_pass(
        &self,
        goal: &GoalSample,
        voxels: &[f64],
        eps: &[f64],
        scale: f64,
        grads: &mut GoalNetParams,
    ) -> Result<f64> {
        let tr = self.forward_sample(goal, voxels, eps)?;
        let beta = self.config.beta2;
        let truth = goal.to_vec();
        let pred = tr.decoder.output();
        let loss = goal_loss(pred, goal, &tr.latent, beta);

        let dy: Vec<f64> = pred.iter().zip(&truth).map(|(a, b)| 2.0 * (a - b) * scale).collect();
        let dx = self.decoder.backward(&tr.decoder, &dy, &mut grads.decoder);
        let latent = self.config.latent;
        let (dz, mut dh) = (dx[..latent].to_vec(), dx[latent..].to_vec());

        let (kmu, kls) = kl_grad(&tr.latent);
        let dmu: Vec<f64> = dz.iter().zip(&kmu).map(|(g, k)| g + beta * scale * k).collect();
        let dls: Vec<f64> = dz
            .iter()
            .zip(&tr.eps)
            .zip(tr.latent.log_sigma.iter().zip(&kls))
            .map(|((g, e), (ls, k))| g * e * ls.exp() + beta * scale * k)
            .collect();
        let mut de = self.mu_head.backward(&tr.hidden, &tr.latent.mu, &dmu, &mut grads.mu_head);
        let ds = self
            .sigma_head
            .backward(&tr.hidden, &tr.latent.log_sigma, &dls, &mut grads.sigma_head);
        de.iter_mut().zip(&ds).for_each(|(a, b)| *a += b);
        let dtail = self.encoder_tail.backward(&tr.tail, &de, &mut grads.encoder_tail);
        let h = self.interaction_encoder.output_size();
        dh.iter_mut().zip(&dtail[..h]).for_each(|(a, b)| *a += b);
        self.interaction_encoder
            .backward(&tr.interaction, &dh, &mut grads.interaction_encoder);
        Ok(loss)
    }

    /// Loss and gradient of one sample with fixed latent noise.
    pub fn loss_and_grad(&self, goal: &GoalSample, voxels: &[f64], eps: &[f64]) -> Result<(f64, GoalNetParams)> {
        let mut grads = self.zeros_like();
        let loss = self.sample_pass(goal, voxels, eps, 1.0, &mut grads)?;
        Ok((loss, grads))
    }
}

/// Normalization between world goals and network coordinates for one
/// object: center-relative object frame divided by the half-diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalFrame {
    pub center: Vec3,
    pub half_diagonal: f64,
}

impl GoalFrame {
    pub fn of(obj: &SceneObject) -> Result<Self> {
        let b = obj.local_bounds()?;
        Ok(Self {
            center: b.center(),
            half_diagonal: (0.5 * b.diagonal()).max(1e-6),
        })
    }

    /// Object-frame goal to network coordinates.
    pub fn normalize(&self, g: &Goal) -> GoalSample {
        GoalSample {
            position: (g.position - self.center) / self.half_diagonal,
            direction: g.direction,
        }
    }

    /// Network coordinates to an object-frame goal.
    pub fn denormalize(&self, s: &GoalSample, action: Action) -> Goal {
        Goal::new(self.center + s.position * self.half_diagonal, s.direction, action)
    }
}

/// One labeled goal with its object's voxel input.
#[derive(Debug, Clone)]
pub struct GoalExample {
    pub voxels: Vec<f64>,
    pub goal: GoalSample,
    /// Meters per normalized unit, for reporting errors in meters.
    pub half_diagonal: f64,
}

/// Every labeled goal of every object becomes one example.
pub fn goal_examples(objects: &[SceneObject]) -> Result<Vec<GoalExample>> {
    let mut out = Vec::new();
    for obj in objects {
        let voxels = voxelize_object(obj)?.flatten();
        let frame = GoalFrame::of(obj)?;
        for g in &obj.goals {
            out.push(GoalExample {
                voxels: voxels.clone(),
                goal: frame.normalize(g),
                half_diagonal: frame.half_diagonal,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// Standardization of the six goal features over a training set.
pub fn goal_stats(examples: &[GoalExample]) -> Result<FeatureStats> {
    let rows: Vec<Vec<f64>> = examples.iter().map(|e| e.goal.to_vec().to_vec()).collect();
    FeatureStats::from_rows(&rows)
}

fn standardize(stats: &FeatureStats, g: &GoalSample) -> GoalSample {
    let v = stats.normalize(&g.to_vec());
    GoalSample {
        position: Vec3::new(v[0], v[1], v[2]),
        direction: Vec3::new(v[3], v[4], v[5]),
    }
}

pub struct GoalTrainer {
    pub model: GoalModel,
    optimizer: Adam,
}

impl GoalTrainer {
    pub fn new(params: GoalNetParams, stats: FeatureStats) -> Result<Self> {
        if stats.len() != GOAL_WIDTH {
            return Err(Error::DimMismatch {
                context: "goal statistics",
                expected: GOAL_WIDTH,
                actual: stats.len(),
            });
        }
        let optimizer = Adam::new(params.config.learning_rate, params.config.epochs);
        Ok(Self {
            model: GoalModel { params, stats },
            optimizer,
        })
    }

    /// One pass over shuffled minibatches at a 1-based `epoch`; returns the
    /// mean sample loss in standardized units.
    pub fn train_epoch<R: Rng + ?Sized>(&mut self, examples: &[GoalExample], epoch: usize, rng: &mut R) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(rng);
        let params = &mut self.model.params;
        let mut total = 0.0;
        for batch in order.chunks(params.config.batch) {
            let mut grads = params.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let eps = standard_normal(params.config.latent, rng);
                let ex = &examples[i];
                let goal = standardize(&self.model.stats, &ex.goal);
                total += params.sample_pass(&goal, &ex.voxels, &eps, scale, &mut grads)?;
            }
            self.optimizer.update(params, &grads, epoch.saturating_sub(1))?;
        }
        Ok(total / examples.len() as f64)
    }

    pub fn into_model(self) -> GoalModel {
        self.model
    }
}

/// Mean position error (m) and direction error (degrees) when each example
/// is encoded and decoded from its posterior mean.
pub fn reconstruction_error(model: &GoalModel, examples: &[GoalExample]) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut pe, mut re) = (0.0, 0.0);
    for ex in examples {
        let post = model.encode_goal(&ex.goal, &ex.voxels)?;
        let g = model.decode_goal(&post.mu, &ex.voxels)?;
        pe += (g.position - ex.goal.position).norm() * ex.half_diagonal;
        re += g.direction.dot(&ex.goal.direction).clamp(-1.0, 1.0).acos().to_degrees();
    }
    let n = examples.len() as f64;
    Ok((pe / n, re / n))
}

pub const GOAL_MODEL_KIND: &str = "goal-net";

/// Goal network plus the feature standardization it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalModel {
    pub params: GoalNetParams,
    pub stats: FeatureStats,
}

impl Parameters for GoalModel {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        prefixed([
            ("net".to_string(), &self.params as &dyn Parameters),
            ("stats".to_string(), &self.stats),
        ])
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.params.tensors_mut();
        t.extend(self.stats.tensors_mut());
        t
    }
}

impl GoalModel {
    /// Posterior for a goal in normalized object-center coordinates.
    pub fn encode_goal(&self, goal: &GoalSample, voxels: &[f64]) -> Result<GaussianLatent> {
        self.params.encode_goal(&standardize(&self.stats, goal), voxels)
    }

    /// Decoded goal in normalized object-center coordinates, direction
    /// renormalized to unit length.
    pub fn decode_goal(&self, z: &[f64], voxels: &[f64]) -> Result<GoalSample> {
        let out = self.stats.denormalize(&self.params.decode_raw(z, voxels)?);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteOutput);
        }
        let d = Vec3::new(out[3], out[4], out[5]);
        let n = d.norm();
        if n < 1e-8 {
            return Err(Error::ZeroDirection);
        }
        Ok(GoalSample {
            position: Vec3::new(out[0], out[1], out[2]),
            direction: d / n,
        })
    }

    /// `n` independent prior draws decoded for one object.
    pub fn sample_goals<R: Rng + ?Sized>(&self, voxels: &[f64], n: usize, rng: &mut R) -> Result<Vec<GoalSample>> {
        (0..n)
            .map(|_| {
                let z = standard_normal(self.params.config.latent, rng);
                self.decode_goal(&z, voxels)
            })
            .collect()
    }

    /// Samples `n` goals for `action` on `obj`, in world coordinates.
    pub fn sample_world_goals<R: Rng + ?Sized>(
        &self,
        obj: &SceneObject,
        action: Action,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Goal>> {
        let voxels = voxelize_object(obj)?.flatten();
        let frame = GoalFrame::of(obj)?;
        let samples = self.sample_goals(&voxels, n, rng)?;
        Ok(samples
            .iter()
            .map(|s| obj.goal_to_world(&frame.denormalize(s, action)))
            .collect())
    }

    pub fn save(&self, stem: &std::path::Path, seed: u64) -> Result<()> {
        nn::checkpoint::save(stem, self, GOAL_MODEL_KIND, seed, serde_json::to_value(&self.params.config)?)
    }

    pub fn load(stem: &std::path::Path) -> Result<Self> {
        let manifest = nn::checkpoint::read_manifest(stem)?;
        if manifest.model != GOAL_MODEL_KIND {
            return Err(Error::Config(format!(
                "checkpoint holds `{}`, expected `{GOAL_MODEL_KIND}`",
                manifest.model
            )));
        }
        let config: GoalNetConfig = serde_json::from_value(manifest.hyperparameters.clone())?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = GoalModel {
            params: GoalNetParams::new(config, &mut rng)?,
            stats: FeatureStats::identity(GOAL_WIDTH),
        };
        nn::checkpoint::load_into(stem, &mut model)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{base_object, ObjectFamily};
    use crate::nn::relative_error;
    use rand_chacha::ChaCha8Rng;

    fn micro() -> GoalNetConfig {
        GoalNetConfig {
            interaction_encoder: vec![4, 3],
            tail: vec![5],
            ..GoalNetConfig::tiny()
        }
    }

    fn sample(p: [f64; 3], d: [f64; 3]) -> GoalSample {
        GoalSample {
            position: Vec3::from(p),
            direction: Vec3::from(d),
        }
    }

    #[test]
    fn loss_examples() {
        let g = sample([0.1, 0.2, 0.3], [0.0, 0.0, 1.0]);
        let std = GaussianLatent::standard(3);
        assert_eq!(goal_loss(&g.to_vec(), &g, &std, 0.5), 0.0);
        let mut off = g.to_vec();
        off[0] += 1.0;
        assert!((goal_loss(&off, &g, &std, 0.5) - 1.0).abs() < 1e-12);
        let shifted = GaussianLatent {
            mu: vec![1.0; 3],
            log_sigma: vec![0.0; 3],
        };
        assert!((goal_loss(&g.to_vec(), &g, &shifted, 0.5) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn full_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = GoalNetParams::new(GoalNetConfig::full(), &mut rng).unwrap();
        assert_eq!(p.interaction_encoder.shape(), vec![GRID_FLAT_LEN, 512, 512, 64]);
        let vox = vec![0.1; GRID_FLAT_LEN];
        let post = p.encode_goal(&sample([0.0; 3], [0.0, 0.0, 1.0]), &vox).unwrap();
        assert_eq!(post.mu.len(), 3);
        assert_eq!(post.log_sigma.len(), 3);
        assert_eq!(post, p.encode_goal(&sample([0.0; 3], [0.0, 0.0, 1.0]), &vox).unwrap());
        assert!(matches!(p.encode_goal(&sample([0.0; 3], [0.0, 0.0, 1.0]), &vox[1..]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn zero_weights_propagate_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = GoalNetParams::new(micro(), &mut rng).unwrap();
        p.fill_zero();
        // interaction encoder: elu(0.5) = 0.5 per unit; tail and heads read
        // only their own biases when upstream weights are zero
        for l in &mut p.interaction_encoder.layers {
            l.bias.iter_mut().for_each(|b| *b = 0.5);
        }
        p.mu_head.bias = vec![0.1, 0.2, 0.3];
        p.sigma_head.bias = vec![-1.0; 3];
        let vox = vec![0.0; GRID_FLAT_LEN];
        let post = p.encode_goal(&sample([0.0; 3], [0.0, 0.0, 1.0]), &vox).unwrap();
        assert_eq!(post.mu, vec![0.1, 0.2, 0.3]);
        assert_eq!(post.log_sigma, vec![-1.0; 3]);
        let last = p.decoder.layers.last_mut().unwrap();
        last.bias = vec![0.0, 0.4, 0.0, 0.0, 0.0, 2.0];
        let mut m = GoalModel {
            params: p,
            stats: FeatureStats::identity(GOAL_WIDTH),
        };
        let g = m.decode_goal(&[0.0; 3], &vox).unwrap();
        assert_eq!(g.position, Vec3::new(0.0, 0.4, 0.0));
        assert_eq!(g.direction, Vec3::new(0.0, 0.0, 1.0));
        // statistics shift the raw output before renormalization
        m.stats.mean = vec![1.0, 0.0, 0.0, 0.0, 0.0, -2.0];
        assert!(matches!(m.decode_goal(&[0.0; 3], &vox), Err(Error::ZeroDirection)));
        m.stats.mean[5] = 0.0;
        m.params.decoder.layers.last_mut().unwrap().bias[5] = 0.0;
        assert!(matches!(m.decode_goal(&[0.0; 3], &vox), Err(Error::ZeroDirection)));
    }

    #[test]
    fn decoded_directions_are_unit_and_sampling_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = GoalModel {
            params: GoalNetParams::new(GoalNetConfig::tiny(), &mut rng).unwrap(),
            stats: FeatureStats::identity(GOAL_WIDTH),
        };
        let vox = voxelize_object(&base_object(ObjectFamily::Sofa)).unwrap().flatten();
        let a = p.sample_goals(&vox, 10, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = p.sample_goals(&vox, 10, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        for g in &a {
            assert!((g.direction.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn goal_frame_round_trip() {
        let obj = base_object(ObjectFamily::Bed);
        let f = GoalFrame::of(&obj).unwrap();
        for g in &obj.goals {
            let back = f.denormalize(&f.normalize(g), g.action);
            assert!((back.position - g.position).norm() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = GoalNetParams::new(micro(), &mut rng).unwrap();
        let vox: Vec<f64> = (0..GRID_FLAT_LEN).map(|_| rng.random_range(-1.0..1.0)).collect();
        let goal = sample([0.3, -0.2, 0.5], [0.6, 0.0, 0.8]);
        let eps = standard_normal(3, &mut rng);
        let (_, grads) = p.loss_and_grad(&goal, &vox, &eps).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.2.to_vec()).collect();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (k, g) in analytic.iter().enumerate() {
            let stride = if g.len() > 200 { 17 } else { 1 };
            for i in (0..g.len()).step_by(stride) {
                let orig = p.tensors_mut()[k][i];
                p.tensors_mut()[k][i] = orig + h;
                let up = p.loss_and_grad(&goal, &vox, &eps).unwrap().0;
                p.tensors_mut()[k][i] = orig - h;
                let down = p.loss_and_grad(&goal, &vox, &eps).unwrap().0;
                p.tensors_mut()[k][i] = orig;
                worst = worst.max(relative_error(g[i], (up - down) / (2.0 * h)));
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn training_reduces_loss_and_checkpoint_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let objects: Vec<SceneObject> = [ObjectFamily::Chair, ObjectFamily::Sofa]
            .iter()
            .map(|f| base_object(*f))
            .collect();
        let examples = goal_examples(&objects).unwrap();
        let cfg = GoalNetConfig {
            epochs: 40,
            batch: 3,
            ..GoalNetConfig::tiny()
        };
        let stats = goal_stats(&examples).unwrap();
        let mut t = GoalTrainer::new(GoalNetParams::new(cfg, &mut rng).unwrap(), stats).unwrap();
        let first = t.train_epoch(&examples, 1, &mut rng).unwrap();
        let mut last = first;
        for e in 2..=40 {
            last = t.train_epoch(&examples, e, &mut rng).unwrap();
        }
        assert!(last < 0.5 * first, "{first} -> {last}");

        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("goal");
        let mut model = t.into_model();
        nn::checkpoint::quantize(&mut model);
        model.save(&stem, 4).unwrap();
        assert_eq!(GoalModel::load(&stem).unwrap(), model);
    }
}
