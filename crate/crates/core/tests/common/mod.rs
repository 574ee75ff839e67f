//! Oracles shared by the integration tests. Everything here is written
//! independently of the library code it checks.

#![allow(dead_code)]

use fmhash::db::{AccountDb, Outcome};
use fmhash::net::loss::{cross_entropy, pairwise, softmax, PairLabel, PairLossParams};
use fmhash::net::{Architecture, ConvSpec, Network, Pool};
use fmhash::train::TrainConfig;
use fmhash::HashCode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// The reduced network: 16x9 input, channels 4/8, latent 8, B = 4.
pub fn shrunken_arch(classes: usize) -> Architecture {
    Architecture {
        input_len: 16,
        input_channels: 9,
        conv: vec![
            ConvSpec {
                out_channels: 4,
                pool: Pool::Max,
            },
            ConvSpec {
                out_channels: 8,
                pool: Pool::Avg,
            },
        ],
        latent: 8,
        hash_bits: 4,
        classes,
    }
}

/// Loss parameters small enough that random projections land in every
/// regularizer regime.
pub fn check_loss_params() -> PairLossParams {
    PairLossParams {
        margin: 0.6 * 2.0,
        alpha: 0.1,
        beta: 0.3,
        p: 0.6,
        q: 0.2,
    }
}

pub struct Point {
    pub net: Network<f64>,
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

/// Random parameters (Xavier weights plus random biases) and inputs.
pub fn random_point(seed: u64, batch: usize, classes: usize) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::init(shrunken_arch(classes), &mut rng).unwrap();
    let bias_ranges: Vec<_> = net
        .layout()
        .slots()
        .iter()
        .filter(|s| s.name.ends_with(".bias"))
        .map(|s| s.range())
        .collect();
    for r in bias_ranges {
        for p in &mut net.params_mut()[r] {
            *p = rng.random_range(-0.2..0.2);
        }
    }
    let inputs = (0..batch * 16 * 9).map(|_| rng.sample(StandardNormal)).collect();
    let labels = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    Point { net, inputs, labels }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckLoss {
    CrossEntropy,
    /// Signals (0, 1) form a same-account pair, (2, 3) a different-account pair.
    PairwisePq,
}

/// Loss and analytic gradient through the library's forward and backward.
pub fn loss_and_grad(net: &Network<f64>, pt: &Point, which: CheckLoss) -> (f64, Vec<f64>) {
    let fwd = net.forward_latent(&pt.inputs).unwrap();
    let h = fwd.latent();
    let mut grads = net.zero_grads();
    let (loss, dh) = match which {
        CheckLoss::CrossEntropy => {
            let logits = net.forward_logits(h).unwrap();
            let c = net.arch().classes;
            let n = pt.labels.len() as f64;
            let mut loss = 0.0;
            let mut d = vec![0.0; logits.len()];
            for (k, row) in logits.chunks(c).enumerate() {
                let (l, g) = cross_entropy(&softmax(row), pt.labels[k]);
                loss += l / n;
                for (dst, g) in d[k * c..][..c].iter_mut().zip(g) {
                    *dst = g / n;
                }
            }
            (loss, net.backward_logits(h, &d, &mut grads).unwrap())
        }
        CheckLoss::PairwisePq => {
            let z = net.forward_projection(h).unwrap();
            let b = net.hash_bits();
            let prm = check_loss_params();
            let mut loss = 0.0;
            let mut d = vec![0.0; z.len()];
            for (k, label) in [PairLabel::Same, PairLabel::Different].into_iter().enumerate() {
                let (i, j) = (2 * k, 2 * k + 1);
                let pl = pairwise(&z[i * b..][..b], &z[j * b..][..b], label, &prm);
                loss += pl.value / 2.0;
                for t in 0..b {
                    d[i * b + t] = pl.grad1[t] / 2.0;
                    d[j * b + t] = pl.grad2[t] / 2.0;
                }
            }
            (loss, net.backward_projection(h, &d, &mut grads).unwrap())
        }
    };
    net.backward(&fwd, &dh, &mut grads).unwrap();
    (loss, grads)
}

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, for gradients that are zero.
pub const REL_FLOOR: f64 = 1e-6;
/// One-sided differences disagreeing by more than this (relative) mean a
/// kink lies within one step of the point.
pub const KINK_ASYMMETRY: f64 = 1e-3;

pub struct PointCheck {
    pub max_rel: f64,
    pub params: usize,
    pub kinked: bool,
}

/// Central finite differences for every parameter against the analytic
/// gradient.
pub fn check_point(pt: &Point, which: CheckLoss) -> PointCheck {
    let (f0, analytic) = loss_and_grad(&pt.net, pt, which);
    let mut net = pt.net.clone();
    let mut max_rel: f64 = 0.0;
    let mut kinked = false;
    for i in 0..analytic.len() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + FD_STEP;
        let fp = loss_and_grad(&net, pt, which).0;
        net.params_mut()[i] = orig - FD_STEP;
        let fm = loss_and_grad(&net, pt, which).0;
        net.params_mut()[i] = orig;

        let fwd = (fp - f0) / FD_STEP;
        let bwd = (f0 - fm) / FD_STEP;
        if (fwd - bwd).abs() > KINK_ASYMMETRY * fwd.abs().max(bwd.abs()).max(1e-3) {
            kinked = true;
            break;
        }
        let numeric = (fp - fm) / (2.0 * FD_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        max_rel = max_rel.max(rel);
    }
    PointCheck {
        max_rel,
        params: analytic.len(),
        kinked,
    }
}

pub struct GradientSummary {
    pub points: usize,
    pub rejected: usize,
    pub max_rel: f64,
    pub params: usize,
}

/// Checks `points` non-kink points for one loss, drawing fresh points until
/// enough pass the kink screen.
pub fn gradient_check(which: CheckLoss, points: usize, base_seed: u64) -> GradientSummary {
    let mut done = 0;
    let mut rejected = 0;
    let mut max_rel: f64 = 0.0;
    let mut params = 0;
    let mut seed = base_seed;
    while done < points {
        let pt = random_point(seed, 4, 3);
        seed += 1;
        let c = check_point(&pt, which);
        if c.kinked {
            rejected += 1;
            assert!(rejected < 10 * points, "almost every point sits on a kink");
            continue;
        }
        max_rel = max_rel.max(c.max_rel);
        params = c.params;
        done += 1;
    }
    GradientSummary {
        points: done,
        rejected,
        max_rel,
        params,
    }
}

/// Minimum DTW cost by enumerating every monotone path with unit steps.
pub fn dtw_brute_force<const D: usize>(a: &[[f64; D]], b: &[[f64; D]]) -> f64 {
    fn dist<const D: usize>(x: &[f64; D], y: &[f64; D]) -> f64 {
        x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
    }
    fn walk<const D: usize>(a: &[[f64; D]], b: &[[f64; D]], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + dist(&a[i], &b[j]);
        if (i, j) == (a.len() - 1, b.len() - 1) {
            *best = best.min(acc);
            return;
        }
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            if i + di < a.len() && j + dj < b.len() {
                walk(a, b, i + di, j + dj, acc, best);
            }
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

/// Identification by scanning every record: accounts whose code is within
/// `l` bits, nearest latent wins, ties to the smallest id.
pub fn scan_identify(db: &AccountDb, h: &[f32], code: HashCode, l: usize) -> Outcome {
    let mut best: Option<(f64, u64)> = None;
    for r in db.records() {
        if (r.code.bits() ^ code.bits()).count_ones() as usize > l {
            continue;
        }
        let d: f64 = r.latent.iter().zip(h).map(|(x, y)| ((*x as f64) - (*y as f64)).powi(2)).sum();
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && r.id < bid),
        };
        if better {
            best = Some((d, r.id));
        }
    }
    best.map_or(Outcome::Failure, |(_, id)| Outcome::Identified(id))
}

/// Desk-scale training: the full iteration schedule with M = 4 pairs per
/// label.
pub fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig {
        pairs_per_label: 4,
        seed,
        ..TrainConfig::default()
    }
}
