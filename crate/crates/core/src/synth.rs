//! Reproducible synthetic accounts: each account is a smooth random 3D
//! trajectory (a sinusoid mixture per axis plus a horizontal writing drift),
//! and every writing of it is a jittered resampling of that trajectory.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::augment::dtw_align;
use crate::dataset::{AccountSignals, Dataset};
use crate::error::{Error, Result};
use crate::rng::{mix, stream, Stream};
use crate::signal::{preprocess, ProcessedSignal, RawSignal, Sample, SAMPLE_RATE_HZ};

pub const MIN_DURATION: f64 = 3.0;
pub const MAX_DURATION: f64 = 8.0;
pub const MIN_FREQ: f64 = 0.5;
pub const MAX_FREQ: f64 = 6.0;
pub const SEPARATION_ATTEMPTS: usize = 100;
/// Candidates whose horizontal spread is close to isotropic are redrawn:
/// their principal direction, and so their pose normalization, is unstable
/// under jitter.
pub const MIN_ELONGATION: f64 = 3.0;
const NOISE_COMPONENTS: usize = 6;
const NOISE_MAX_FREQ: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub amplitude: f64,
    /// Cycles over the whole signal.
    pub frequency: f64,
    pub phase: f64,
}

impl Component {
    fn eval(&self, u: f64) -> f64 {
        self.amplitude * (TAU * self.frequency * u + self.phase).sin()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccountTemplate {
    pub id: u64,
    /// Seconds.
    pub duration: f64,
    pub axes: [Vec<Component>; 3],
    /// Linear displacement over the signal, per axis.
    pub drift: [f64; 3],
}

impl AccountTemplate {
    /// Position at normalized time `u` in `[0, 1]`.
    pub fn position(&self, u: f64) -> [f64; 3] {
        std::array::from_fn(|a| {
            self.drift[a] * u + self.axes[a].iter().map(|c| c.eval(u)).sum::<f64>()
        })
    }

    /// The template itself, sampled at the nominal rate.
    pub fn sample(&self) -> RawSignal {
        sample_at(self.duration, |u| self.position(u))
    }

    /// Ratio of the major to minor eigenvalue of the horizontal position
    /// covariance.
    pub fn elongation(&self) -> f64 {
        let pts = self.dense();
        let n = pts.len() as f64;
        let (mx, my) = (
            pts.iter().map(|p| p[0]).sum::<f64>() / n,
            pts.iter().map(|p| p[1]).sum::<f64>() / n,
        );
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for p in &pts {
            let (dx, dy) = (p[0] - mx, p[1] - my);
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        let half_tr = (sxx + syy) / 2.0;
        let disc = (((sxx - syy) / 2.0).powi(2) + sxy * sxy).sqrt();
        (half_tr + disc) / (half_tr - disc).max(f64::MIN_POSITIVE)
    }

    fn dense(&self) -> Vec<[f64; 3]> {
        const N: usize = 512;
        (0..N).map(|i| self.position(i as f64 / (N - 1) as f64)).collect()
    }

    fn axis_std(&self) -> [f64; 3] {
        let pts = self.dense();
        let n = pts.len() as f64;
        std::array::from_fn(|a| {
            let mean = pts.iter().map(|p| p[a]).sum::<f64>() / n;
            (pts.iter().map(|p| (p[a] - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
    }
}

fn sample_count(duration: f64) -> usize {
    (duration * SAMPLE_RATE_HZ).floor() as usize + 1
}

fn sample_at(duration: f64, pos: impl Fn(f64) -> [f64; 3]) -> RawSignal {
    let n = sample_count(duration);
    let samples = (0..n)
        .map(|i| Sample {
            t: i as f64 / SAMPLE_RATE_HZ,
            pos: pos(i as f64 / (n - 1) as f64),
        })
        .collect();
    RawSignal::new(samples).expect("synthetic samples satisfy the raw signal invariants")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Jitter {
    /// Time-warp strength w.
    pub warp: f64,
    /// Additive smooth-noise std, relative to the template's per-axis std.
    pub noise: f64,
    /// Per-axis amplitude scaling std.
    pub amplitude: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter {
            warp: 0.1,
            noise: 0.05,
            amplitude: 0.05,
        }
    }
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        warp: 0.0,
        noise: 0.0,
        amplitude: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("warp", self.warp), ("noise", self.noise), ("amplitude", self.amplitude)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("jitter {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub accounts: usize,
    pub k_train: usize,
    pub k_test: usize,
    pub seed: u64,
    pub jitter: Jitter,
    /// Sinusoids per axis.
    pub components: usize,
    /// Minimum DTW cost between the preprocessed templates of two accounts.
    pub separation: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            accounts: 50,
            k_train: 5,
            k_test: 5,
            seed: 0,
            jitter: Jitter::default(),
            components: 4,
            separation: DEFAULT_SEPARATION,
        }
    }
}

/// Default minimum inter-template DTW cost. Same-template writings at the
/// default jitter stay well below it.
pub const DEFAULT_SEPARATION: f64 = 500.0;

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.accounts < 2 {
            return Err(Error::Config(format!("need at least 2 accounts, got {}", self.accounts)));
        }
        if self.k_train < 2 {
            return Err(Error::Config(format!(
                "need at least 2 training signals per account, got {}",
                self.k_train
            )));
        }
        if self.components == 0 {
            return Err(Error::Config("components must be positive".into()));
        }
        if !(self.separation >= 0.0) {
            return Err(Error::Config("separation must be >= 0".into()));
        }
        self.jitter.validate()
    }
}

fn candidate<R: Rng>(rng: &mut R, id: u64, components: usize) -> AccountTemplate {
    let duration = rng.random_range(MIN_DURATION..=MAX_DURATION);
    let axis_gain = [1.0, 0.6, 0.4];
    let axes = axis_gain.map(|gain| {
        (0..components)
            .map(|_| Component {
                amplitude: gain * rng.random_range(0.3..1.0),
                frequency: rng.random_range(MIN_FREQ..=MAX_FREQ),
                phase: rng.random_range(0.0..TAU),
            })
            .collect()
    });
    let drift = [rng.random_range(3.0..5.0), rng.random_range(-0.3..0.3), 0.0];
    AccountTemplate {
        id,
        duration,
        axes,
        drift,
    }
}

/// Templates for ids `0..n`. Each candidate is redrawn until its DTW cost to
/// every earlier template reaches `params.separation`.
pub fn generate_templates(params: &SynthParams, n: usize) -> Result<Vec<AccountTemplate>> {
    let mut accepted: Vec<(AccountTemplate, ProcessedSignal)> = Vec::with_capacity(n);
    for id in 0..n as u64 {
        let mut placed = false;
        for attempt in 0..SEPARATION_ATTEMPTS as u64 {
            let mut rng = stream(params.seed, Stream::Template, id, attempt);
            let t = candidate(&mut rng, id, params.components);
            if t.elongation() < MIN_ELONGATION {
                continue;
            }
            let processed = preprocess(&t.sample())?;
            let separated = accepted.iter().all(|(_, other)| {
                dtw_align(processed.frames(), other.frames()).cost >= params.separation
            });
            if separated {
                accepted.push((t, processed));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::SeparationUnreachable {
                id,
                attempts: SEPARATION_ATTEMPTS,
            });
        }
    }
    Ok(accepted.into_iter().map(|(t, _)| t).collect())
}

/// Template of account `id`; depends only on the seed, the generator
/// settings and the id.
pub fn generate_template(params: &SynthParams, id: u64) -> Result<AccountTemplate> {
    Ok(generate_templates(params, id as usize + 1)?.pop().unwrap())
}

/// One writing of a template: smooth monotone time warp, per-axis amplitude
/// scaling and additive low-frequency noise, sampled at 110 Hz.
pub fn sample_instance(template: &AccountTemplate, instance_seed: u64, jitter: &Jitter) -> RawSignal {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(instance_seed);
    let duration = template.duration * (1.0 + jitter.warp * rng.random_range(-0.5..0.5));

    // phi(u) = u + s (a1 sin(pi u) / pi + a2 sin(2 pi u) / 2 pi) with
    // |a1| + |a2| <= 1 and s < 1 keeps phi' > 0.
    let strength = jitter.warp.min(0.9);
    let a1: f64 = rng.random_range(-0.5..0.5);
    let a2: f64 = rng.random_range(-0.5..0.5);

    let scale: [f64; 3] = std::array::from_fn(|_| {
        let n: f64 = rng.sample(StandardNormal);
        (1.0 + jitter.amplitude * n).max(0.1)
    });

    let axis_std = template.axis_std();
    let noise: [Vec<Component>; 3] = std::array::from_fn(|a| {
        let amp = jitter.noise * axis_std[a] * (2.0 / NOISE_COMPONENTS as f64).sqrt();
        (0..NOISE_COMPONENTS)
            .map(|_| Component {
                amplitude: amp,
                frequency: rng.random_range(1.0..NOISE_MAX_FREQ),
                phase: rng.random_range(0.0..TAU),
            })
            .collect()
    });

    sample_at(duration, |u| {
        let warped = u + strength * (a1 * (PI * u).sin() / PI + a2 * (TAU * u).sin() / TAU);
        let p = template.position(warped);
        std::array::from_fn(|a| scale[a] * p[a] + noise[a].iter().map(|c| c.eval(u)).sum::<f64>())
    })
}

pub fn instance_seed(seed: u64, id: u64, index: u64) -> u64 {
    mix(seed ^ ((Stream::Instance as u64) << 56), id, index)
}

/// `accounts x (k_train + k_test)` signals.
pub fn generate_dataset(params: &SynthParams) -> Result<Dataset> {
    params.validate()?;
    let templates = generate_templates(params, params.accounts)?;
    let accounts = templates
        .iter()
        .map(|t| {
            let writing = |k: usize| sample_instance(t, instance_seed(params.seed, t.id, k as u64), &params.jitter);
            AccountSignals {
                id: t.id,
                train: (0..params.k_train).map(writing).collect(),
                test: (params.k_train..params.k_train + params.k_test).map(writing).collect(),
            }
        })
        .collect();
    Ok(Dataset { accounts })
}
