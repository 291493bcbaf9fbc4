//! Speak/listen training of two autoencoders.
//!
//! Both autoencoders are first trained independently. Dictionaries `g`
//! (1→2) and `h` (2→1) are then fitted on their mean codes, and the two take
//! turns: the speaker draws `z = mu + sigma * eps` and is never updated, the
//! listener minimizes `||x - x'||^2 + lambda * ||mu_q - g(z)||^2`. Both
//! dictionaries are refitted after every epoch.

mod agreement;
mod kl;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ae::{sample_code, AeConfig, Autoencoder, Learner, StepStats};
use crate::nn::{Rng, Tensor};
use crate::translator::{collect_pairs, CodePairSet, Direction, FitReport, TranslatorConfig, TranslatorDict};
use crate::{Error, Result};

pub use agreement::{agreement_level, quantize, AgreementReport, CoOccurrence};
pub use kl::{gaussian_kl, Covariance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AeId {
    First,
    Second,
}

impl AeId {
    pub fn index(self) -> usize {
        match self {
            AeId::First => 0,
            AeId::Second => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            AeId::First => AeId::Second,
            AeId::Second => AeId::First,
        }
    }

    /// Dictionary that carries this autoencoder's speech to its partner.
    pub fn speaks_through(self) -> Direction {
        match self {
            AeId::First => Direction::OneToTwo,
            AeId::Second => Direction::TwoToOne,
        }
    }
}

impl fmt::Display for AeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AeId::First => "ae1",
            AeId::Second => "ae2",
        })
    }
}

/// What the speaker pushes through the dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    /// A reparametrized draw `mu + sigma * eps`.
    Sampled,
    /// The code mean.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DialogueConfig {
    /// Conversation epochs after pretraining.
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub batches: usize,
    /// Consecutive listening epochs of ae1 and ae2.
    pub turn_epochs: [usize; 2],
    pub lambda: f64,
    pub first_listener: AeId,
    pub prior: PriorSource,
    /// Refit both dictionaries after every epoch; when off they stay frozen
    /// after the initial fit.
    pub refresh: bool,
    pub translator: TranslatorConfig,
    /// Code quantization threshold for the agreement level.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            pretrain_epochs: 5,
            batches: 10,
            turn_epochs: [1, 1],
            lambda: 1.0,
            first_listener: AeId::Second,
            prior: PriorSource::Sampled,
            refresh: true,
            translator: TranslatorConfig::default(),
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl DialogueConfig {
    pub fn validate(&self, field: &str) -> Result<()> {
        let bad = |f: &str, reason: String| Err(Error::config(format!("{field}.{f}"), reason));
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1".into());
        }
        if self.batches == 0 {
            return bad("batches", "must be at least 1".into());
        }
        if self.turn_epochs.contains(&0) {
            return bad("turn_epochs", "both turn lengths must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", format!("must be non-negative, got {}", self.lambda));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold", "must lie in (0, 1)".into());
        }
        self.translator.validate(&format!("{field}.translator"))
    }

    /// Listener during conversation epoch `e` (counted from 0 after pretraining).
    pub fn listener(&self, e: usize) -> AeId {
        let first = self.first_listener;
        let cycle = self.turn_epochs[0] + self.turn_epochs[1];
        let lead = self.turn_epochs[first.index()];
        if e % cycle < lead {
            first
        } else {
            first.other()
        }
    }
}

/// One listener mini-batch step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TurnRecord {
    /// Global epoch index, pretraining included.
    pub epoch: usize,
    pub batch: usize,
    pub speaker: AeId,
    pub listener: AeId,
    /// Batch means of the per-sample terms.
    pub reconstruction: f64,
    pub alignment: f64,
    pub total: f64,
}

/// Mean loss of one independent pretraining epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PretrainRecord {
    pub epoch: usize,
    pub ae: AeId,
    pub reconstruction: f64,
}

/// `||x - x'||^2 + lambda * ||mu_q - mu_p||^2`.
pub fn listener_loss(x: &Tensor, x_prime: &Tensor, mu_q: &[f64], mu_p: &[f64], lambda: f64) -> Result<f64> {
    if x.shape() != x_prime.shape() {
        return Err(Error::Shape(format!(
            "reconstruction shape {:?} differs from input {:?}",
            x_prime.shape(),
            x.shape()
        )));
    }
    if mu_q.len() != mu_p.len() {
        return Err(Error::Shape(format!(
            "code lengths differ: {} and {}",
            mu_q.len(),
            mu_p.len()
        )));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::config("lambda", "must be non-negative"));
    }
    let align: f64 = mu_q.iter().zip(mu_p).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(x.sum_squared_diff(x_prime) + lambda * align)
}

/// Per-turn settings shared by every batch of a listening epoch.
#[derive(Debug, Clone, Copy)]
pub struct TurnContext {
    pub epoch: usize,
    pub batch: usize,
    pub speaker: AeId,
    pub lambda: f64,
    pub prior: PriorSource,
    /// When set, the dictionary must carry exactly this stamp.
    pub required_stamp: Option<usize>,
}

/// One listening step: the frozen speaker encodes its view of the batch, the
/// dictionary translates the codes, and the listener takes one ADAM step.
#[allow(clippy::too_many_arguments)]
pub fn run_turn(
    speaker: &Autoencoder,
    speaker_data: &[Tensor],
    listener: &mut Learner,
    listener_data: &[Tensor],
    dict: &TranslatorDict,
    batch: &[usize],
    speech: &mut Rng,
    ctx: TurnContext,
) -> Result<TurnRecord> {
    if dict.direction() != ctx.speaker.speaks_through() {
        return Err(Error::Shape(format!(
            "{} speaks through {}, got a {} dictionary",
            ctx.speaker,
            ctx.speaker.speaks_through(),
            dict.direction()
        )));
    }
    if let Some(stamp) = ctx.required_stamp {
        if dict.stamp() != stamp {
            return Err(Error::StaleDictionary {
                direction: dict.direction().to_string(),
                stamp: dict.stamp(),
                epoch: ctx.epoch,
            });
        }
    }
    let sigma = speaker.config().sigma;
    let mut priors = Vec::with_capacity(batch.len());
    for &i in batch {
        let mu = speaker.encode(&speaker_data[i])?;
        let z = match ctx.prior {
            PriorSource::Sampled => sample_code(&mu, sigma, speech).z,
            PriorSource::Mean => mu,
        };
        priors.push(dict.translate(&z)?);
    }
    let listener_id = ctx.speaker.other();
    let StepStats {
        reconstruction,
        alignment,
        total,
    } = listener
        .step(listener_data, batch, Some(&priors), ctx.lambda)
        .map_err(|e| match e {
            Error::Nn(source) => Error::Training {
                epoch: ctx.epoch,
                batch: ctx.batch,
                ae: listener_id.to_string(),
                source,
            },
            other => other,
        })?;
    Ok(TurnRecord {
        epoch: ctx.epoch,
        batch: ctx.batch,
        speaker: ctx.speaker,
        listener: listener_id,
        reconstruction,
        alignment,
        total,
    })
}

/// Stateful conversation between two autoencoders, each with its own view
/// of the same time steps.
#[derive(Debug, Clone)]
pub struct Dialogue {
    config: DialogueConfig,
    learners: [Learner; 2],
    data: [Vec<Tensor>; 2],
    speech: [Rng; 2],
    translator_rng: Rng,
    dicts: Option<[TranslatorDict; 2]>,
    /// Completed epochs, pretraining included.
    epoch: usize,
    history: Vec<TurnRecord>,
    pretrain_history: Vec<PretrainRecord>,
    agreement: Vec<AgreementReport>,
    fits: Vec<FitReport>,
}

/// Everything a finished conversation produces.
#[derive(Debug, Clone)]
pub struct DialogueOutcome {
    pub ae1: Autoencoder,
    pub ae2: Autoencoder,
    pub dicts: [TranslatorDict; 2],
    pub history: Vec<TurnRecord>,
    pub pretrain_history: Vec<PretrainRecord>,
    pub agreement: Vec<AgreementReport>,
    pub fits: Vec<FitReport>,
}

impl Dialogue {
    /// Random streams derive from `config.seed`; the autoencoders arrive
    /// already initialized.
    pub fn new(
        ae1: Autoencoder,
        data1: Vec<Tensor>,
        ae2: Autoencoder,
        data2: Vec<Tensor>,
        config: DialogueConfig,
    ) -> Result<Self> {
        config.validate("dialogue")?;
        AeConfig::validate_pair(ae1.config(), ae2.config())?;
        if data1.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if data1.len() != data2.len() {
            return Err(Error::Shape(format!(
                "views differ in length: {} and {} samples",
                data1.len(),
                data2.len()
            )));
        }
        let root = Rng::new(config.seed);
        Ok(Self {
            learners: [
                Learner::new(ae1, root.derive("learner:ae1")),
                Learner::new(ae2, root.derive("learner:ae2")),
            ],
            data: [data1, data2],
            speech: [root.derive("speech:ae1"), root.derive("speech:ae2")],
            translator_rng: root.derive("translator"),
            dicts: None,
            epoch: 0,
            history: Vec::new(),
            pretrain_history: Vec::new(),
            agreement: Vec::new(),
            fits: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &DialogueConfig {
        &self.config
    }

    /// Changes the alignment weight for the remaining epochs.
    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::config("dialogue.lambda", "must be non-negative"));
        }
        self.config.lambda = lambda;
        Ok(())
    }

    pub fn ae(&self, id: AeId) -> &Autoencoder {
        &self.learners[id.index()].ae
    }

    pub fn learner(&self, id: AeId) -> &Learner {
        &self.learners[id.index()]
    }

    pub fn data(&self, id: AeId) -> &[Tensor] {
        &self.data[id.index()]
    }

    pub fn dict(&self, direction: Direction) -> Option<&TranslatorDict> {
        self.dicts.as_ref().map(|d| match direction {
            Direction::OneToTwo => &d[0],
            Direction::TwoToOne => &d[1],
        })
    }

    pub fn epochs_completed(&self) -> usize {
        self.epoch
    }

    /// Conversation epochs completed so far.
    pub fn dialogue_epochs_completed(&self) -> usize {
        self.epoch.saturating_sub(self.config.pretrain_epochs)
    }

    pub fn is_pretrained(&self) -> bool {
        self.dicts.is_some()
    }

    pub fn is_finished(&self) -> bool {
        self.is_pretrained() && self.dialogue_epochs_completed() >= self.config.epochs
    }

    pub fn history(&self) -> &[TurnRecord] {
        &self.history
    }

    pub fn pretrain_history(&self) -> &[PretrainRecord] {
        &self.pretrain_history
    }

    pub fn agreement(&self) -> &[AgreementReport] {
        &self.agreement
    }

    pub fn fits(&self) -> &[FitReport] {
        &self.fits
    }

    pub fn code_pairs(&self) -> Result<CodePairSet> {
        collect_pairs(self.ae(AeId::First), &self.data[0], self.ae(AeId::Second), &self.data[1])
    }

    /// Trains both autoencoders independently, then fits the first
    /// dictionaries. Does nothing when already done.
    pub fn pretrain(&mut self) -> Result<()> {
        if self.is_pretrained() {
            return Ok(());
        }
        let n = self.data[0].len();
        for _ in 0..self.config.pretrain_epochs {
            for id in [AeId::First, AeId::Second] {
                let learner = &mut self.learners[id.index()];
                let plan = learner.plan_epoch(n, self.config.batches);
                let mut sum = 0.0;
                for (b, batch) in plan.iter().enumerate() {
                    let stats = learner
                        .step(&self.data[id.index()], batch, None, 0.0)
                        .map_err(|e| match e {
                            Error::Nn(source) => Error::Training {
                                epoch: self.epoch,
                                batch: b,
                                ae: id.to_string(),
                                source,
                            },
                            other => other,
                        })?;
                    sum += stats.reconstruction;
                }
                self.pretrain_history.push(PretrainRecord {
                    epoch: self.epoch,
                    ae: id,
                    reconstruction: sum / plan.len() as f64,
                });
            }
            self.epoch += 1;
        }
        let pairs = self.code_pairs()?;
        let cfg = &self.config.translator;
        let mut init = self.translator_rng.derive("init");
        let (dz1, dz2) = pairs.dims();
        let mut g = TranslatorDict::new(Direction::OneToTwo, dz1, dz2, cfg, &mut init)?;
        let mut h = TranslatorDict::new(Direction::TwoToOne, dz2, dz1, cfg, &mut init)?;
        self.fits.push(g.refit(&pairs, cfg, self.epoch, &mut self.translator_rng)?);
        self.fits.push(h.refit(&pairs, cfg, self.epoch, &mut self.translator_rng)?);
        self.agreement
            .push(agreement_level(&pairs, self.config.threshold, self.epoch));
        self.dicts = Some([g, h]);
        Ok(())
    }

    /// Listener of the next epoch.
    pub fn next_listener(&self) -> AeId {
        self.config.listener(self.dialogue_epochs_completed())
    }

    /// The listener trains over every mini-batch once. Dictionaries and the
    /// speaker are read-only here.
    pub fn listen_epoch(&mut self) -> Result<Vec<TurnRecord>> {
        self.pretrain()?;
        let listener = self.next_listener();
        let speaker = listener.other();
        let n = self.data[0].len();
        let [first, second] = &mut self.learners;
        let (spk, lst) = match speaker {
            AeId::First => (&*first, second),
            AeId::Second => (&*second, first),
        };
        let dicts = self.dicts.as_ref().expect("pretrained");
        let dict = &dicts[speaker.index()];
        let plan = lst.plan_epoch(n, self.config.batches);
        let mut records = Vec::with_capacity(plan.len());
        for (b, batch) in plan.iter().enumerate() {
            let record = run_turn(
                &spk.ae,
                &self.data[speaker.index()],
                lst,
                &self.data[listener.index()],
                dict,
                batch,
                &mut self.speech[speaker.index()],
                TurnContext {
                    epoch: self.epoch,
                    batch: b,
                    speaker,
                    lambda: self.config.lambda,
                    prior: self.config.prior,
                    required_stamp: self.config.refresh.then_some(self.epoch),
                },
            )?;
            records.push(record);
        }
        self.history.extend_from_slice(&records);
        self.epoch += 1;
        Ok(records)
    }

    /// Collects fresh code pairs, records the agreement level and, when
    /// refreshing, refits both dictionaries from their previous weights.
    pub fn refresh(&mut self) -> Result<()> {
        let pairs = self.code_pairs()?;
        self.agreement
            .push(agreement_level(&pairs, self.config.threshold, self.epoch));
        if self.config.refresh {
            let dicts = self.dicts.as_mut().expect("pretrained");
            for d in dicts.iter_mut() {
                let report = d.refit(&pairs, &self.config.translator, self.epoch, &mut self.translator_rng)?;
                self.fits.push(report);
            }
        }
        Ok(())
    }

    pub fn run_epoch(&mut self) -> Result<Vec<TurnRecord>> {
        let records = self.listen_epoch()?;
        self.refresh()?;
        Ok(records)
    }

    /// Runs to completion, calling `after_epoch` once per conversation epoch.
    pub fn run_with(&mut self, mut after_epoch: impl FnMut(&Dialogue) -> Result<()>) -> Result<()> {
        self.pretrain()?;
        while !self.is_finished() {
            self.run_epoch()?;
            after_epoch(self)?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_with(|_| Ok(()))
    }

    pub fn into_outcome(self) -> Result<DialogueOutcome> {
        let [l1, l2] = self.learners;
        let dicts = self
            .dicts
            .ok_or_else(|| Error::Data("dialogue has not been pretrained".into()))?;
        Ok(DialogueOutcome {
            ae1: l1.ae,
            ae2: l2.ae,
            dicts,
            history: self.history,
            pretrain_history: self.pretrain_history,
            agreement: self.agreement,
            fits: self.fits,
        })
    }
}

pub fn train_dialogue(
    ae1: Autoencoder,
    data1: Vec<Tensor>,
    ae2: Autoencoder,
    data2: Vec<Tensor>,
    config: DialogueConfig,
) -> Result<DialogueOutcome> {
    let mut d = Dialogue::new(ae1, data1, ae2, data2, config)?;
    d.run()?;
    d.into_outcome()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(code_dim: usize, channels: usize) -> AeConfig {
        AeConfig {
            window: 8,
            channels,
            kernel: 3,
            code_dim,
            sigma: 0.1,
            noise: 0.05,
            learning_rate: 0.01,
        }
    }

    fn data(n: usize, seed: u64) -> Vec<Tensor> {
        let mut rng = Rng::new(seed);
        (0..n).map(|_| rng.gaussian_sample(&[8, 2])).collect()
    }

    fn dialogue(config: DialogueConfig) -> Dialogue {
        let rng = Rng::new(1);
        let ae1 = Autoencoder::new(tiny(3, 4), &mut rng.derive("ae1")).unwrap();
        let ae2 = Autoencoder::new(tiny(2, 3), &mut rng.derive("ae2")).unwrap();
        Dialogue::new(ae1, data(30, 2), ae2, data(30, 3), config).unwrap()
    }

    fn small() -> DialogueConfig {
        DialogueConfig {
            epochs: 4,
            pretrain_epochs: 1,
            batches: 3,
            translator: TranslatorConfig {
                hidden: Some(8),
                epochs: 2,
                ..TranslatorConfig::default()
            },
            ..DialogueConfig::default()
        }
    }

    #[test]
    fn listener_loss_cases() {
        let mut rng = Rng::new(5);
        let x = rng.gaussian_sample(&[4, 2]);
        let mu = [0.2, 0.7];
        assert_eq!(listener_loss(&x, &x, &mu, &mu, 1.0).unwrap(), 0.0);
        let y = rng.gaussian_sample(&[4, 2]);
        assert!((listener_loss(&x, &y, &mu, &[0.0, 0.0], 0.0).unwrap() - x.mse(&y) * 8.0).abs() < 1e-12);
        assert!(listener_loss(&x, &rng.gaussian_sample(&[3, 2]), &mu, &mu, 1.0).is_err());
        assert!(listener_loss(&x, &y, &mu, &[0.1], 1.0).is_err());
    }

    #[test]
    fn alternating_schedule() {
        let mut d = dialogue(small());
        d.run().unwrap();
        let h = d.history();
        assert_eq!(h.len(), 4 * 3);
        let listeners: Vec<AeId> = h.chunks(3).map(|c| c[0].listener).collect();
        assert_eq!(listeners, [AeId::Second, AeId::First, AeId::Second, AeId::First]);
        assert!(h.iter().all(|r| r.speaker != r.listener));
        assert!(h.iter().all(|r| r.reconstruction >= 0.0 && r.alignment >= 0.0 && r.total.is_finite()));
        assert_eq!(d.agreement().len(), 5);
        assert_eq!(d.pretrain_history().len(), 2);
        assert_eq!(d.dict(Direction::OneToTwo).unwrap().stamp(), 5);
    }

    #[test]
    fn asymmetric_turns() {
        let cfg = DialogueConfig {
            turn_epochs: [2, 1],
            first_listener: AeId::First,
            ..small()
        };
        let who: Vec<AeId> = (0..6).map(|e| cfg.listener(e)).collect();
        use AeId::*;
        assert_eq!(who, [First, First, Second, First, First, Second]);
    }

    #[test]
    fn speaker_is_frozen() {
        let mut d = dialogue(small());
        d.pretrain().unwrap();
        for _ in 0..4 {
            let speaker = d.next_listener().other();
            let before = (
                d.ae(speaker).checksum(),
                d.dict(Direction::OneToTwo).unwrap().checksum(),
                d.dict(Direction::TwoToOne).unwrap().checksum(),
            );
            let listener_before = d.ae(speaker.other()).checksum();
            d.listen_epoch().unwrap();
            let after = (
                d.ae(speaker).checksum(),
                d.dict(Direction::OneToTwo).unwrap().checksum(),
                d.dict(Direction::TwoToOne).unwrap().checksum(),
            );
            assert_eq!(before, after);
            assert_ne!(listener_before, d.ae(speaker.other()).checksum());
            d.refresh().unwrap();
        }
    }

    #[test]
    fn stale_dictionary_is_rejected() {
        let mut d = dialogue(small());
        d.listen_epoch().unwrap();
        // skipping the refresh leaves the dictionaries one epoch behind
        assert!(matches!(d.listen_epoch(), Err(Error::StaleDictionary { stamp: 1, epoch: 2, .. })));
    }

    #[test]
    fn zero_lambda_without_refresh_is_independent_training() {
        let cfg = DialogueConfig {
            lambda: 0.0,
            refresh: false,
            ..small()
        };
        let mut d = dialogue(cfg.clone());
        d.run().unwrap();

        // the same autoencoders trained alone, epoch for epoch
        let rng = Rng::new(1);
        let root = Rng::new(cfg.seed);
        let mut solo = [
            Learner::new(Autoencoder::new(tiny(3, 4), &mut rng.derive("ae1")).unwrap(), root.derive("learner:ae1")),
            Learner::new(Autoencoder::new(tiny(2, 3), &mut rng.derive("ae2")).unwrap(), root.derive("learner:ae2")),
        ];
        let views = [data(30, 2), data(30, 3)];
        let mut epochs: Vec<usize> = vec![0, 1];
        for e in 0..cfg.epochs {
            epochs.push(cfg.listener(e).index());
        }
        for (k, who) in epochs.into_iter().enumerate() {
            // pretraining trains both, in order
            let who = if k < 2 { k } else { who };
            let l = &mut solo[who];
            for batch in l.plan_epoch(30, cfg.batches) {
                l.step(&views[who], &batch, None, 0.0).unwrap();
            }
        }
        assert_eq!(solo[0].ae.flat_params(), d.ae(AeId::First).flat_params());
        assert_eq!(solo[1].ae.flat_params(), d.ae(AeId::Second).flat_params());
    }

    #[test]
    fn mismatched_views_rejected() {
        let mut rng = Rng::new(1);
        let ae1 = Autoencoder::new(tiny(3, 4), &mut rng).unwrap();
        let ae2 = Autoencoder::new(tiny(2, 3), &mut rng).unwrap();
        assert!(Dialogue::new(ae1.clone(), data(30, 2), ae2.clone(), data(29, 3), small()).is_err());
        assert!(Dialogue::new(ae2, data(30, 2), ae1, data(30, 3), small()).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = DialogueConfig {
            epochs: 0,
            ..DialogueConfig::default()
        };
        assert!(matches!(bad.validate("dialogue"), Err(Error::Config { field, .. }) if field == "dialogue.epochs"));
        let bad = DialogueConfig {
            lambda: -1.0,
            ..DialogueConfig::default()
        };
        assert!(bad.validate("d").is_err());
    }
}
