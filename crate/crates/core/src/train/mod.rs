//! Teacher-forced training: sequence construction, optimizer, the training loop, finite-difference
//! gradient checking and checkpoints.

mod checkpoint;
mod gradcheck;
mod sgd;

pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, TensorCheck};
pub use sgd::Sgd;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::vocab::{EOA, PAD, QUESTION_MARK};
use crate::data::{EncodedExample, FeatureFile};
use crate::error::{Error, Result};
use crate::model::{forward, masked_loss, VqaNetwork};
use crate::numerics::Tape;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    /// Global gradient-norm ceiling.
    pub clip: f64,
    pub iterations: u64,
    /// Examples whose gradients are averaged into one update.
    pub batch_size: usize,
    pub seed: u64,
    /// Emit a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            clip: 5.0,
            iterations: 20_000,
            batch_size: 1,
            seed: 42,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.clip > 0.0) {
            return Err(Error::Config(format!("clip norm must be > 0, got {}", self.clip)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// A question followed by its answer, with the per-position supervision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeacherForced {
    /// Question ids, then answer ids (question vocabulary).
    pub input: Vec<usize>,
    /// Answer-vocabulary id expected at each position; `PAD` where unsupervised.
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
}

impl TeacherForced {
    pub fn supervised(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Builds `[q, a]`. The output at `<?>` must be the first answer word, each answer word must be
/// followed by the next one, and the last one by `<EOA>`.
pub fn teacher_force(question: &[usize], answer_input: &[usize], answer_target: &[usize]) -> Result<TeacherForced> {
    if question.last() != Some(&QUESTION_MARK) {
        return Err(Error::Protocol("question must end with <?>".into()));
    }
    if question[..question.len() - 1].contains(&QUESTION_MARK) {
        return Err(Error::Protocol("question contains more than one <?>".into()));
    }
    if answer_input.is_empty() || answer_input.len() != answer_target.len() {
        return Err(Error::Protocol(format!(
            "answer must be nonempty with matching encodings (input {}, target {})",
            answer_input.len(),
            answer_target.len()
        )));
    }
    let q_end = question.len() - 1;
    let mut input = question.to_vec();
    input.extend_from_slice(answer_input);
    let mut targets = vec![PAD; input.len()];
    let mut mask = vec![false; input.len()];
    for t in q_end..input.len() {
        targets[t] = answer_target.get(t - q_end).copied().unwrap_or(EOA);
        mask[t] = true;
    }
    Ok(TeacherForced { input, targets, mask })
}

#[derive(Debug, Clone)]
pub struct TrainingItem {
    /// Index into the feature file's records.
    pub record: usize,
    pub forced: TeacherForced,
}

/// Training examples resolved against their image features.
#[derive(Debug, Clone)]
pub struct Dataset<'a> {
    pub features: &'a FeatureFile,
    pub items: Vec<TrainingItem>,
}

impl<'a> Dataset<'a> {
    pub fn new(examples: &[EncodedExample], features: &'a FeatureFile) -> Result<Self> {
        let index = features.index();
        let items = examples
            .iter()
            .map(|ex| {
                let record = *index
                    .get(ex.image_id.as_str())
                    .ok_or_else(|| Error::MissingImage(ex.image_id.clone()))?;
                let forced = teacher_force(&ex.question, &ex.answer_input, &ex.answer_target)?;
                Ok(TrainingItem { record, forced })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { features, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Loss of one teacher-forced example, accumulating its gradient into the network's parameters.
pub fn example_loss(net: &mut VqaNetwork, data: &Dataset<'_>, item: &TrainingItem) -> Result<f64> {
    let rec = &data.features.records[item.record];
    let mut tape = Tape::new();
    let trace = forward(net, &mut tape, &item.forced.input, &rec.regions, &rec.context)?;
    let loss = masked_loss(net, &mut tape, &trace, &item.forced.targets, &item.forced.mask)?;
    let value = tape.scalar(loss);
    if value.is_finite() {
        tape.backward(loss, &mut net.params)?;
    }
    Ok(value)
}

/// Hooks called by [`run_training`]. Both default to doing nothing.
pub trait TrainObserver {
    fn on_iteration(&mut self, _iteration: u64, _loss: f64) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Collects every loss and keeps the latest checkpoint.
#[derive(Debug, Default)]
pub struct Recorder {
    pub losses: Vec<(u64, f64)>,
    pub last_checkpoint: Option<Checkpoint>,
}

impl TrainObserver for Recorder {
    fn on_iteration(&mut self, iteration: u64, loss: f64) -> Result<()> {
        self.losses.push((iteration, loss));
        Ok(())
    }

    fn on_checkpoint(&mut self, checkpoint: &Checkpoint) -> Result<()> {
        self.last_checkpoint = Some(checkpoint.clone());
        Ok(())
    }
}

/// `iteration TAB loss` per line.
pub fn format_loss_log(losses: &[(u64, f64)]) -> String {
    let mut s = String::new();
    for (i, l) in losses {
        s.push_str(&format!("{i}\t{l}\n"));
    }
    s
}

/// Runs `cfg.iterations` updates. Examples are visited in a fresh seeded permutation every
/// epoch, so the whole run is a function of the seed, the data and the initial parameters.
pub fn run_training(
    net: &mut VqaNetwork,
    data: &Dataset<'_>,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<()> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Protocol("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sgd = Sgd::new(&net.params, cfg.lr, cfg.momentum, cfg.clip);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut pos = order.len();
    net.params.zero_grads();
    for iteration in 1..=cfg.iterations {
        let mut total = 0.0;
        for _ in 0..cfg.batch_size {
            if pos == order.len() {
                order.shuffle(&mut rng);
                pos = 0;
            }
            let item = &data.items[order[pos]];
            pos += 1;
            let loss = example_loss(net, data, item)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { iteration });
            }
            total += loss;
        }
        if cfg.batch_size > 1 {
            let inv = 1.0 / cfg.batch_size as f64;
            for p in net.params.iter_mut() {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= inv);
            }
        }
        sgd.step(&mut net.params)?;
        observer.on_iteration(iteration, total / cfg.batch_size as f64)?;
        let due = cfg.checkpoint_every > 0 && iteration % cfg.checkpoint_every == 0;
        if due || iteration == cfg.iterations {
            observer.on_checkpoint(&Checkpoint::capture(net, iteration, &rng))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy::{generate_toy_dataset, ToyTaskConfig};
    use crate::data::{build_vocabularies, encode_examples};
    use crate::model::NetworkConfig;

    #[test]
    fn shift_by_one_targets() {
        // what is this <?> / chair
        let q = [4, 5, 6, QUESTION_MARK];
        let tf = teacher_force(&q, &[7], &[9]).unwrap();
        assert_eq!(tf.input, [4, 5, 6, QUESTION_MARK, 7]);
        assert_eq!(tf.mask, [false, false, false, true, true]);
        assert_eq!(tf.targets[3..], [9, EOA]);
        assert_eq!(tf.supervised(), 2);

        let tf = teacher_force(&q, &[7, 8], &[9, 10]).unwrap();
        assert_eq!(tf.supervised(), 3);
        assert_eq!(tf.targets[3..], [9, 10, EOA]);
    }

    #[test]
    fn teacher_force_rejects_bad_sequences() {
        assert!(matches!(teacher_force(&[4, QUESTION_MARK], &[], &[]), Err(Error::Protocol(_))));
        assert!(teacher_force(&[4, 5], &[7], &[7]).is_err());
        assert!(teacher_force(&[QUESTION_MARK, QUESTION_MARK], &[7], &[7]).is_err());
    }

    fn toy_setup(n: usize) -> (VqaNetwork, Vec<EncodedExample>, FeatureFile) {
        let toy = generate_toy_dataset(&ToyTaskConfig {
            train_questions: n,
            test_questions: 4,
            ..ToyTaskConfig::default()
        })
        .unwrap();
        let (qv, av) = build_vocabularies(&toy.train, 1);
        let enc = encode_examples(&toy.train, &qv, &av).unwrap();
        let f = &toy.features;
        let cfg = NetworkConfig {
            d_q: 8,
            d_h: 8,
            d_z: 8,
            ..NetworkConfig::new(f.d_x, f.d_v, f.regions, qv.len(), av.len())
        };
        let net = VqaNetwork::new(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        (net, enc, toy.features)
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_untouched() {
        let (mut net, enc, features) = toy_setup(8);
        let before = net.params.clone();
        let data = Dataset::new(&enc, &features).unwrap();
        let cfg = TrainConfig {
            lr: 0.0,
            iterations: 5,
            ..TrainConfig::default()
        };
        run_training(&mut net, &data, &cfg, &mut ()).unwrap();
        for (a, b) in before.iter().zip(net.params.iter()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn same_seed_same_losses() {
        let run = || {
            let (mut net, enc, features) = toy_setup(8);
            let data = Dataset::new(&enc, &features).unwrap();
            let mut rec = Recorder::default();
            let cfg = TrainConfig {
                iterations: 20,
                batch_size: 2,
                ..TrainConfig::default()
            };
            run_training(&mut net, &data, &cfg, &mut rec).unwrap();
            (rec.losses, rec.last_checkpoint.unwrap().encode().unwrap())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn missing_features_are_reported() {
        let (_, mut enc, features) = toy_setup(4);
        enc[0].image_id = "nowhere".into();
        assert!(matches!(Dataset::new(&enc, &features), Err(Error::MissingImage(_))));
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            TrainConfig { lr: -1.0, ..TrainConfig::default() },
            TrainConfig { clip: 0.0, ..TrainConfig::default() },
            TrainConfig { momentum: 1.0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn loss_log_lines() {
        assert_eq!(format_loss_log(&[(1, 2.5), (2, 0.125)]), "1\t2.5\n2\t0.125\n");
    }
}
