//! Two-phase training: softmax pretraining of the trunk, then pairwise
//! training of trunk and projection with the pq-regularizer and online
//! mining of colliding account pairs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_account, DEFAULT_TARGET};
use crate::code::HashCode;
use crate::dataset::ProcessedAccount;
use crate::db::mean_latent;
use crate::error::{Error, Result};
use crate::net::loss::{cross_entropy, pairwise, softmax, PairLabel, PairLossParams};
use crate::net::{encode_model, Adam, Architecture, Group, Network};
use crate::rng::{stream, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Code length B.
    pub hash_bits: usize,
    pub p: f64,
    pub q: f64,
    /// Hinge margin m; `p * sqrt(B)` when unset.
    pub margin: Option<f64>,
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_factor: f64,
    /// Iterations between beta increases.
    pub beta_step: usize,
    pub beta_max: f64,
    /// M: pairs per label in a batch (2M pairs in total).
    pub pairs_per_label: usize,
    pub learning_rate: f64,
    pub pretrain_iters: usize,
    pub pairwise_iters: usize,
    /// Iterations between account code recomputations.
    pub mine_refresh: usize,
    /// Account pairs whose codes differ in fewer bits than this are mined.
    pub collision_bits: u32,
    pub augment_target: usize,
    pub seed: u64,
    /// Write a model checkpoint every this many pairwise iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hash_bits: 16,
            p: 10.0,
            q: 5.0,
            margin: None,
            alpha: 0.1,
            beta_start: 1e-4,
            beta_factor: 10.0,
            beta_step: 2000,
            beta_max: 0.1,
            pairs_per_label: 200,
            learning_rate: 1e-3,
            pretrain_iters: 1000,
            pairwise_iters: 10000,
            mine_refresh: 20,
            collision_bits: 3,
            augment_target: DEFAULT_TARGET,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn margin(&self) -> f64 {
        self.margin.unwrap_or(self.p * (self.hash_bits as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(1..=HashCode::MAX_BITS).contains(&self.hash_bits) {
            return fail(format!("hash_bits must be in 1..=64, got {}", self.hash_bits));
        }
        if !(self.q > 0.0 && self.q < self.p) {
            return fail(format!("need 0 < q < p, got q = {}, p = {}", self.q, self.p));
        }
        if !(self.margin() > 0.0) {
            return fail("margin must be positive".into());
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta_start", self.beta_start),
            ("beta_max", self.beta_max),
            ("beta_factor", self.beta_factor),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return fail(format!("{name} must be finite and >= 0"));
            }
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive".into());
        }
        if self.pairs_per_label == 0 || self.mine_refresh == 0 || self.beta_step == 0 {
            return fail("pairs_per_label, mine_refresh and beta_step must be positive".into());
        }
        if self.augment_target < 2 {
            return fail("augment_target must be at least 2".into());
        }
        Ok(())
    }

    fn loss_params(&self, beta: f64) -> PairLossParams {
        PairLossParams {
            margin: self.margin(),
            alpha: self.alpha,
            beta,
            p: self.p,
            q: self.q,
        }
    }
}

/// Regularizer weight at a pairwise iteration: a step function starting at
/// `beta_start`, multiplied by `beta_factor` every `beta_step` iterations and
/// capped at `beta_max`.
pub fn beta_at(iteration: usize, cfg: &TrainConfig) -> f64 {
    let steps = (iteration / cfg.beta_step).min(i32::MAX as usize) as i32;
    (cfg.beta_start * cfg.beta_factor.powi(steps)).min(cfg.beta_max)
}

/// Augmented training signals and the original registration signals of each
/// account, as network inputs.
pub struct TrainSet {
    pub ids: Vec<u64>,
    pub augmented: Vec<Vec<Vec<f32>>>,
    pub registration: Vec<Vec<Vec<f32>>>,
}

impl TrainSet {
    /// Augments each account's training split with its own derived rng.
    pub fn build(accounts: &[ProcessedAccount], target: usize, seed: u64) -> Result<Self> {
        if accounts.len() < 2 {
            return Err(Error::TooFewSignals {
                got: accounts.len(),
                min: 2,
            });
        }
        let augmented = accounts
            .par_iter()
            .map(|a| {
                let mut rng = stream(seed, Stream::Augment, a.id, 0);
                let set = augment_account(&a.train, target, &mut rng)?;
                Ok(set.iter().map(|s| s.to_f32()).collect())
            })
            .collect::<Result<Vec<Vec<Vec<f32>>>>>()?;
        Ok(TrainSet {
            ids: accounts.iter().map(|a| a.id).collect(),
            augmented,
            registration: accounts
                .iter()
                .map(|a| a.train.iter().map(|s| s.to_f32()).collect())
                .collect(),
        })
    }

    pub fn accounts(&self) -> usize {
        self.ids.len()
    }
}

/// A signal by account index and index into that account's augmented set.
pub type SignalRef = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pair {
    pub a: SignalRef,
    pub b: SignalRef,
    pub label: PairLabel,
}

/// 2M pairs: the first M with y = 0, the last M with y = 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairBatch {
    pub pairs: Vec<Pair>,
}

impl PairBatch {
    pub fn count(&self, label: PairLabel) -> usize {
        self.pairs.iter().filter(|p| p.label == label).count()
    }
}

/// Account index pairs `(i, j)`, `i < j`, whose codes differ in fewer than
/// `bits` positions.
pub fn colliding_pairs(codes: &[HashCode], bits: u32) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..codes.len() {
        for j in i + 1..codes.len() {
            if codes[i].hamming(&codes[j]) < bits {
                out.push((i, j));
            }
        }
    }
    out
}

fn distinct<R: Rng + ?Sized>(rng: &mut R, n: usize) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// `sizes[k]` is the number of augmented signals of account `k`. When
/// `colliding` is non-empty, every other y = 1 pair (starting with the first)
/// comes from it; the rest pair uniformly random distinct accounts.
pub fn mine_pairs<R: Rng + ?Sized>(
    sizes: &[usize],
    colliding: &[(usize, usize)],
    m: usize,
    rng: &mut R,
) -> PairBatch {
    let n = sizes.len();
    let mut pairs = Vec::with_capacity(2 * m);
    for _ in 0..m {
        let acct = rng.random_range(0..n);
        let (i, j) = distinct(rng, sizes[acct]);
        pairs.push(Pair {
            a: (acct, i),
            b: (acct, j),
            label: PairLabel::Same,
        });
    }
    for k in 0..m {
        let (x, y) = if !colliding.is_empty() && k % 2 == 0 {
            let (x, y) = colliding[rng.random_range(0..colliding.len())];
            if rng.random_bool(0.5) {
                (y, x)
            } else {
                (x, y)
            }
        } else {
            distinct(rng, n)
        };
        pairs.push(Pair {
            a: (x, rng.random_range(0..sizes[x])),
            b: (y, rng.random_range(0..sizes[y])),
            label: PairLabel::Different,
        });
    }
    PairBatch { pairs }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LogLine {
    Phase(String),
    Iteration {
        iter: usize,
        loss: f64,
        beta: f64,
        collisions: usize,
    },
    /// Account codes recomputed before iteration `iter`.
    Codes { iter: usize, collisions: usize },
}

/// Training log. Iterations are numbered globally: pretraining first, then
/// pairwise training.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub lines: Vec<LogLine>,
}

impl TrainLog {
    pub fn iterations(&self) -> usize {
        self.lines.iter().filter(|l| matches!(l, LogLine::Iteration { .. })).count()
    }

    pub fn code_refreshes(&self) -> usize {
        self.lines.iter().filter(|l| matches!(l, LogLine::Codes { .. })).count()
    }

    /// Losses of iteration lines, in order.
    pub fn losses(&self) -> Vec<f64> {
        self.lines
            .iter()
            .filter_map(|l| match l {
                LogLine::Iteration { loss, .. } => Some(*loss),
                _ => None,
            })
            .collect()
    }

    /// `iter loss beta collisions` per iteration; `#` lines mark phases and
    /// code recomputations.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# iter loss beta collisions\n");
        for line in &self.lines {
            match line {
                LogLine::Phase(p) => writeln!(out, "# phase {p}"),
                LogLine::Iteration {
                    iter,
                    loss,
                    beta,
                    collisions,
                } => writeln!(out, "{iter} {loss:.6e} {beta:e} {collisions}"),
                LogLine::Codes { iter, collisions } => writeln!(out, "# codes {iter} {collisions}"),
            }
            .unwrap();
        }
        out
    }
}

fn gather(set: &TrainSet, refs: impl Iterator<Item = SignalRef>) -> Vec<f32> {
    refs.flat_map(|(a, i)| set.augmented[a][i].iter().copied()).collect()
}

fn check_loss(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation { layer: "loss".into() })
    }
}

/// Cross-entropy training of the trunk and softmax head on batches of 2M
/// augmented signals drawn with replacement. The projection is not touched.
pub fn pretrain_softmax(net: &mut Network<f32>, set: &TrainSet, cfg: &TrainConfig, log: &mut TrainLog) -> Result<()> {
    let classes = net.arch().classes;
    if classes != set.accounts() {
        return Err(Error::Architecture(format!(
            "softmax head has {classes} classes for {} accounts",
            set.accounts()
        )));
    }
    log.lines.push(LogLine::Phase("pretrain".into()));
    let mut rng = stream(cfg.seed, Stream::Pretrain, 0, 0);
    let mut adam = Adam::new(net.layout().total());
    let ranges = net.layout().ranges(&[Group::Trunk, Group::Softmax]);
    let batch = 2 * cfg.pairs_per_label;

    for iter in 0..cfg.pretrain_iters {
        let refs: Vec<SignalRef> = (0..batch)
            .map(|_| {
                let a = rng.random_range(0..set.accounts());
                (a, rng.random_range(0..set.augmented[a].len()))
            })
            .collect();
        let fwd = net.forward_latent(&gather(set, refs.iter().copied()))?;
        let logits = net.forward_logits(fwd.latent())?;
        let mut loss = 0.0;
        let mut dlogits = vec![0f32; logits.len()];
        for (k, row) in logits.chunks_exact(classes).enumerate() {
            let probs = softmax(&row.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let (l, g) = cross_entropy(&probs, refs[k].0);
            loss += l;
            for (d, g) in dlogits[k * classes..][..classes].iter_mut().zip(g) {
                *d = (g / batch as f64) as f32;
            }
        }
        loss /= batch as f64;
        check_loss(loss)?;
        let mut grads = net.zero_grads();
        let dh = net.backward_logits(fwd.latent(), &dlogits, &mut grads)?;
        net.backward(&fwd, &dh, &mut grads)?;
        adam.step(net.params_mut(), &grads, cfg.learning_rate, &ranges);
        log.lines.push(LogLine::Iteration {
            iter,
            loss,
            beta: 0.0,
            collisions: 0,
        });
    }
    Ok(())
}

/// Codes of every account from its registration signals with the enrollment
/// formula.
pub fn account_codes(net: &Network<f32>, set: &TrainSet) -> Result<Vec<HashCode>> {
    set.registration
        .iter()
        .map(|signals| net.code_of(&mean_latent(&net.latents(signals)?)))
        .collect()
}

fn write_checkpoint(dir: &Path, iter: usize, net: &Network<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("checkpoint-{iter:06}.fmh"));
    fs::write(&path, encode_model(net)).map_err(|e| Error::io(&path, e))
}

/// Pairwise training of trunk and projection. Returns the account codes from
/// the last recomputation.
pub fn train_pairwise(
    net: &mut Network<f32>,
    set: &TrainSet,
    cfg: &TrainConfig,
    log: &mut TrainLog,
    checkpoints: Option<&Path>,
) -> Result<Vec<HashCode>> {
    log.lines.push(LogLine::Phase("pairwise".into()));
    let offset = cfg.pretrain_iters;
    let mut rng = stream(cfg.seed, Stream::Mining, 0, 0);
    let mut adam = Adam::new(net.layout().total());
    let ranges = net.layout().ranges(&[Group::Trunk, Group::Projection]);
    let sizes: Vec<usize> = set.augmented.iter().map(Vec::len).collect();
    let m = cfg.pairs_per_label;
    let bits = net.hash_bits();
    let mut codes = Vec::new();
    let mut colliding = Vec::new();

    for iter in 0..cfg.pairwise_iters {
        if iter % cfg.mine_refresh == 0 {
            codes = account_codes(net, set)?;
            colliding = colliding_pairs(&codes, cfg.collision_bits);
            log.lines.push(LogLine::Codes {
                iter: offset + iter,
                collisions: colliding.len(),
            });
        }
        let batch = mine_pairs(&sizes, &colliding, m, &mut rng);
        let refs = batch.pairs.iter().flat_map(|p| [p.a, p.b]);
        let fwd = net.forward_latent(&gather(set, refs))?;
        let z = net.forward_projection(fwd.latent())?;
        let beta = beta_at(iter, cfg);
        let prm = cfg.loss_params(beta);
        let scale = 1.0 / (2 * m) as f64;
        let mut loss = 0.0;
        let mut dz = vec![0f32; z.len()];
        for (k, pair) in batch.pairs.iter().enumerate() {
            let z1: Vec<f64> = z[2 * k * bits..][..bits].iter().map(|&v| v as f64).collect();
            let z2: Vec<f64> = z[(2 * k + 1) * bits..][..bits].iter().map(|&v| v as f64).collect();
            let pl = pairwise(&z1, &z2, pair.label, &prm);
            loss += pl.value;
            for (d, g) in dz[2 * k * bits..][..bits].iter_mut().zip(&pl.grad1) {
                *d = (g * scale) as f32;
            }
            for (d, g) in dz[(2 * k + 1) * bits..][..bits].iter_mut().zip(&pl.grad2) {
                *d = (g * scale) as f32;
            }
        }
        loss *= scale;
        check_loss(loss)?;
        let mut grads = net.zero_grads();
        let dh = net.backward_projection(fwd.latent(), &dz, &mut grads)?;
        net.backward(&fwd, &dh, &mut grads)?;
        adam.step(net.params_mut(), &grads, cfg.learning_rate, &ranges);
        log.lines.push(LogLine::Iteration {
            iter: offset + iter,
            loss,
            beta,
            collisions: colliding.len(),
        });
        if let Some(dir) = checkpoints {
            if cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 {
                write_checkpoint(dir, offset + iter + 1, net)?;
            }
        }
    }
    if cfg.pairwise_iters == 0 {
        codes = account_codes(net, set)?;
    }
    Ok(codes)
}

pub struct TrainOutput {
    pub net: Network<f32>,
    pub log: TrainLog,
    pub codes: Vec<HashCode>,
}

/// Initialization, softmax pretraining, then pairwise training.
pub fn train_full(accounts: &[ProcessedAccount], cfg: &TrainConfig, checkpoints: Option<&Path>) -> Result<TrainOutput> {
    cfg.validate()?;
    let set = TrainSet::build(accounts, cfg.augment_target, cfg.seed)?;
    let arch = Architecture::fmhashnet(cfg.hash_bits, set.accounts());
    let mut net = Network::init(arch, &mut stream(cfg.seed, Stream::Init, 0, 0))?;
    let mut log = TrainLog::default();
    pretrain_softmax(&mut net, &set, cfg, &mut log)?;
    let codes = train_pairwise(&mut net, &set, cfg, &mut log, checkpoints)?;
    Ok(TrainOutput { net, log, codes })
}
