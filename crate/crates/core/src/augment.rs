//! Training-set expansion: DTW alignment of registration signals onto each
//! other, then random segment exchange between aligned signals of the same
//! reference.

use rand::Rng;

use crate::error::{Error, Result};
use crate::signal::{Frame, ProcessedSignal};

pub const DEFAULT_TARGET: usize = 125;
pub const MIN_SEGMENT: usize = 16;
pub const MAX_SEGMENT: usize = 128;

/// Monotone alignment between a reference (first index) and a query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WarpPath(Vec<(usize, usize)>);

impl WarpPath {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.0
    }

    /// Checks the boundary, step and monotonicity conditions.
    pub fn is_valid(&self, ref_len: usize, query_len: usize) -> bool {
        let p = &self.0;
        if p.is_empty() || ref_len == 0 || query_len == 0 {
            return false;
        }
        if p[0] != (0, 0) || *p.last().unwrap() != (ref_len - 1, query_len - 1) {
            return false;
        }
        p.windows(2).all(|w| {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
        })
    }
}

#[derive(Clone, Debug)]
pub struct Alignment {
    pub cost: f64,
    pub path: WarpPath,
}

pub fn frame_distance<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Full dynamic-programming DTW with per-frame Euclidean cost.
///
/// Backtracking prefers the diagonal predecessor, then the one that advanced
/// the reference, then the one that advanced the query.
pub fn dtw_align<const D: usize>(reference: &[[f64; D]], query: &[[f64; D]]) -> Alignment {
    let (n, m) = (reference.len(), query.len());
    assert!(n > 0 && m > 0, "dtw_align needs non-empty sequences");
    let mut acc = vec![0.0f64; n * m];
    for i in 0..n {
        for j in 0..m {
            let d = frame_distance(&reference[i], &query[j]);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => acc[j - 1],
                (_, 0) => acc[(i - 1) * m],
                _ => acc[(i - 1) * m + j - 1]
                    .min(acc[(i - 1) * m + j])
                    .min(acc[i * m + j - 1]),
            };
            acc[i * m + j] = best + d;
        }
    }

    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    path.push((i, j));
    while (i, j) != (0, 0) {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[(i - 1) * m + j - 1];
            let up = acc[(i - 1) * m + j];
            let left = acc[i * m + j - 1];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((i, j));
    }
    path.reverse();
    Alignment {
        cost: acc[n * m - 1],
        path: WarpPath(path),
    }
}

/// Frame-averaged query on the reference's time base (no renormalization).
pub fn warp_frames(reference_len: usize, query: &[Frame], path: &WarpPath) -> Vec<Frame> {
    let mut sum = vec![[0.0; 9]; reference_len];
    let mut count = vec![0usize; reference_len];
    for &(i, j) in path.pairs() {
        for (s, q) in sum[i].iter_mut().zip(&query[j]) {
            *s += q;
        }
        count[i] += 1;
    }
    sum.iter_mut().zip(&count).for_each(|(f, &c)| {
        debug_assert!(c > 0);
        f.iter_mut().for_each(|v| *v /= c as f64);
    });
    sum
}

/// Puts `query` on `reference`'s time base along `path`, then re-standardizes.
pub fn warp_to_reference(
    reference: &ProcessedSignal,
    query: &ProcessedSignal,
    path: &WarpPath,
) -> Result<ProcessedSignal> {
    let n = reference.frames().len();
    if !path.is_valid(n, query.frames().len()) {
        return Err(Error::InvalidSignal("warp path does not fit the signal pair".into()));
    }
    ProcessedSignal::normalized(&warp_frames(n, query.frames(), path))
}

/// Aligned set grouped by reference: `out[k][0]` is signal k itself and
/// `out[k][1..]` are the others warped onto it, in index order.
pub fn expand_grouped(signals: &[ProcessedSignal]) -> Result<Vec<Vec<ProcessedSignal>>> {
    if signals.len() < 2 {
        return Err(Error::TooFewSignals {
            got: signals.len(),
            min: 2,
        });
    }
    signals
        .iter()
        .enumerate()
        .map(|(k, reference)| {
            let mut group = vec![reference.clone()];
            for (j, query) in signals.iter().enumerate() {
                if j == k {
                    continue;
                }
                let al = dtw_align(reference.frames(), query.frames());
                group.push(warp_to_reference(reference, query, &al.path)?);
            }
            Ok(group)
        })
        .collect()
}

/// K signals in, K^2 out.
pub fn expand_by_alignment(signals: &[ProcessedSignal]) -> Result<Vec<ProcessedSignal>> {
    Ok(expand_grouped(signals)?.into_iter().flatten().collect())
}

/// `a` with frames `[start, end)` taken from `b`, re-standardized.
pub fn exchange_segment(
    a: &ProcessedSignal,
    b: &ProcessedSignal,
    start: usize,
    end: usize,
) -> Result<ProcessedSignal> {
    let n = a.frames().len();
    if b.frames().len() != n || start > end || end > n {
        return Err(Error::InvalidSignal(format!(
            "segment [{start}, {end}) does not fit signals of {n} frames"
        )));
    }
    let mut frames = a.frames().to_vec();
    frames[start..end].copy_from_slice(&b.frames()[start..end]);
    ProcessedSignal::normalized(&frames)
}

/// Random segment exchange: length uniform in [16, 128], start uniform over
/// the positions where the segment fits.
pub fn segment_exchange<R: Rng + ?Sized>(
    a: &ProcessedSignal,
    b: &ProcessedSignal,
    rng: &mut R,
) -> Result<ProcessedSignal> {
    let n = a.frames().len();
    let len = rng.random_range(MIN_SEGMENT..=MAX_SEGMENT).min(n);
    let start = rng.random_range(0..=n - len);
    exchange_segment(a, b, start, start + len)
}

/// K registration signals in, `target` training signals out: the K^2 aligned
/// set followed by segment exchanges between random pairs sharing a reference.
pub fn augment_account<R: Rng + ?Sized>(
    signals: &[ProcessedSignal],
    target: usize,
    rng: &mut R,
) -> Result<Vec<ProcessedSignal>> {
    let groups = expand_grouped(signals)?;
    let k = signals.len();
    let mut out: Vec<ProcessedSignal> = groups.iter().flatten().cloned().collect();
    out.truncate(target);
    while out.len() < target {
        let g = &groups[rng.random_range(0..k)];
        let i = rng.random_range(0..k);
        let mut j = rng.random_range(0..k - 1);
        if j >= i {
            j += 1;
        }
        out.push(segment_exchange(&g[i], &g[j], rng)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{CHANNELS, SIGNAL_LEN};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Cost of every valid warp path, by exhaustive recursion.
    fn brute_force_min<const D: usize>(a: &[[f64; D]], b: &[[f64; D]]) -> f64 {
        fn go<const D: usize>(a: &[[f64; D]], b: &[[f64; D]], i: usize, j: usize, acc: f64, best: &mut f64) {
            let acc = acc + frame_distance(&a[i], &b[j]);
            if i == a.len() - 1 && j == b.len() - 1 {
                *best = best.min(acc);
                return;
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                go(a, b, i + 1, j + 1, acc, best);
            }
            if i + 1 < a.len() {
                go(a, b, i + 1, j, acc, best);
            }
            if j + 1 < b.len() {
                go(a, b, i, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        go(a, b, 0, 0, 0.0, &mut best);
        best
    }

    fn path_cost<const D: usize>(a: &[[f64; D]], b: &[[f64; D]], p: &WarpPath) -> f64 {
        p.pairs().iter().fold(0.0, |acc, &(i, j)| acc + frame_distance(&a[i], &b[j]))
    }

    fn assert_close(a: &ProcessedSignal, b: &ProcessedSignal, tol: f64) {
        for (x, y) in a.frames().iter().zip(b.frames()) {
            for c in 0..CHANNELS {
                assert!((x[c] - y[c]).abs() <= tol, "{} vs {}", x[c], y[c]);
            }
        }
    }

    fn random_signal(rng: &mut ChaCha8Rng) -> ProcessedSignal {
        let mut frames = vec![[0.0; CHANNELS]; SIGNAL_LEN];
        let phase: Vec<f64> = (0..CHANNELS).map(|_| rng.random_range(0.0..6.0)).collect();
        for (t, f) in frames.iter_mut().enumerate() {
            for c in 0..CHANNELS {
                f[c] = (t as f64 * 0.05 * (c + 1) as f64 + phase[c]).sin() + 0.1 * rng.random::<f64>();
            }
        }
        ProcessedSignal::normalized(&frames).unwrap()
    }

    #[test]
    fn identical_sequences_cost_zero_on_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_signal(&mut rng);
        let al = dtw_align(s.frames(), s.frames());
        assert_eq!(al.cost, 0.0);
        assert_eq!(al.path.pairs().len(), SIGNAL_LEN);
        assert!(al.path.pairs().iter().all(|&(i, j)| i == j));
    }

    #[test]
    fn exact_match_warping() {
        let a = [[1.0], [2.0], [3.0]];
        let b = [[1.0], [2.0], [2.0], [3.0]];
        let al = dtw_align(&a, &b);
        assert_eq!(al.cost, 0.0);
        assert!(al.path.is_valid(3, 4));
    }

    #[test]
    fn dp_equals_exhaustive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let n = rng.random_range(1..=8);
            let m = rng.random_range(1..=8);
            let a: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0))).collect();
            let b: Vec<[f64; 3]> = (0..m).map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0))).collect();
            let al = dtw_align(&a, &b);
            assert_eq!(al.cost, brute_force_min(&a, &b));
            assert!(al.path.is_valid(n, m));
            assert_eq!(path_cost(&a, &b, &al.path), al.cost);
        }
    }

    #[test]
    fn reversal_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a: Vec<[f64; 2]> = (0..7).map(|_| [rng.random(), rng.random()]).collect();
            let b: Vec<[f64; 2]> = (0..5).map(|_| [rng.random(), rng.random()]).collect();
            let fwd = dtw_align(&a, &b).cost;
            let ra: Vec<_> = a.iter().rev().cloned().collect();
            let rb: Vec<_> = b.iter().rev().cloned().collect();
            assert!((fwd - dtw_align(&ra, &rb).cost).abs() < 1e-12);
        }
    }

    #[test]
    fn warp_identity_and_duplicate_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = random_signal(&mut rng);
        let al = dtw_align(r.frames(), r.frames());
        assert_close(&warp_to_reference(&r, &r, &al.path).unwrap(), &r, 1e-12);

        // Query: the reference with frame 100 written twice (257 frames).
        let mut q = r.frames().to_vec();
        q.insert(100, q[100]);
        let al = dtw_align(r.frames(), &q);
        let warped = warp_frames(SIGNAL_LEN, &q, &al.path);
        let out = ProcessedSignal::normalized(&warped).unwrap();
        for (i, (a, b)) in out.frames().iter().zip(r.frames()).enumerate() {
            for c in 0..CHANNELS {
                assert!((a[c] - b[c]).abs() < 1e-6, "frame {i} channel {c}");
            }
        }
    }

    #[test]
    fn expansion_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let five: Vec<_> = (0..5).map(|_| random_signal(&mut rng)).collect();
        assert_eq!(expand_by_alignment(&five).unwrap().len(), 25);
        assert_eq!(expand_by_alignment(&five[..2]).unwrap().len(), 4);
        assert!(matches!(
            expand_by_alignment(&five[..1]),
            Err(Error::TooFewSignals { got: 1, .. })
        ));
        let same = vec![five[0].clone(); 3];
        for s in expand_by_alignment(&same).unwrap() {
            assert_close(&s, &five[0], 1e-12);
        }
    }

    #[test]
    fn exchange_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_signal(&mut rng);
        let b = random_signal(&mut rng);
        assert_close(&segment_exchange(&a, &a, &mut rng).unwrap(), &a, 1e-12);
        let whole = exchange_segment(&a, &b, 0, SIGNAL_LEN).unwrap();
        assert_close(&whole, &b, 1e-12);
        let x = segment_exchange(&a, &b, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let y = segment_exchange(&a, &b, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(x, y);
        let changed = x.frames().iter().zip(a.frames()).filter(|(p, q)| p != q).count();
        assert!(changed >= MIN_SEGMENT);
    }

    #[test]
    fn augmented_set_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let five: Vec<_> = (0..5).map(|_| random_signal(&mut rng)).collect();
        let out = augment_account(&five, DEFAULT_TARGET, &mut rng).unwrap();
        assert_eq!(out.len(), 125);
        for s in &out {
            ProcessedSignal::from_frames(s.frames().to_vec()).unwrap();
        }
        let three = augment_account(&five[..3], 125, &mut rng).unwrap();
        assert_eq!(three.len(), 125);
        assert_eq!(&three[..3], &expand_grouped(&five[..3]).unwrap()[0][..]);
    }
}
