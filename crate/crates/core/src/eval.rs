//! Identification metrics and hash code statistics.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::code::HashCode;
use crate::dataset::ProcessedAccount;
use crate::db::{AccountDb, Outcome};
use crate::error::{Error, Result};
use crate::net::Network;
use crate::signal::ProcessedSignal;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub truth: u64,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentMetrics {
    pub tolerance: usize,
    pub tests: usize,
    pub avg_precision: f64,
    pub avg_recall: f64,
    pub miss_rate: f64,
    pub fail_rate: f64,
    pub accuracy: f64,
}

/// Metrics over `accounts` from (truth, outcome) pairs. Accounts never
/// predicted count as precision 1.
pub fn metrics_from_predictions(accounts: &[u64], preds: &[Prediction], tolerance: usize) -> Result<IdentMetrics> {
    if preds.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mut precision = 0.0;
    let mut recall = 0.0;
    for &a in accounts {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for p in preds {
            let hit = p.outcome == Outcome::Identified(a);
            match (p.truth == a, hit) {
                (true, true) => tp += 1,
                (true, false) => fn_ += 1,
                (false, true) => fp += 1,
                (false, false) => {}
            }
        }
        precision += if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        recall += if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    }
    let n = preds.len() as f64;
    let count = |f: &dyn Fn(&Prediction) -> bool| preds.iter().filter(|p| f(p)).count() as f64 / n;
    let accuracy = count(&|p| p.outcome == Outcome::Identified(p.truth));
    let fail_rate = count(&|p| p.outcome == Outcome::Failure);
    let miss_rate = count(&|p| matches!(p.outcome, Outcome::Identified(id) if id != p.truth));
    let k = accounts.len().max(1) as f64;
    Ok(IdentMetrics {
        tolerance,
        tests: preds.len(),
        avg_precision: precision / k,
        avg_recall: recall / k,
        miss_rate,
        fail_rate,
        accuracy,
    })
}

/// One test signal after the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct TestLatent {
    pub truth: u64,
    pub latent: Vec<f32>,
    pub code: HashCode,
}

pub fn test_latents(net: &Network<f32>, accounts: &[ProcessedAccount]) -> Result<Vec<TestLatent>> {
    let mut out = Vec::new();
    for a in accounts {
        let inputs: Vec<Vec<f32>> = a.test.iter().map(ProcessedSignal::to_f32).collect();
        for h in net.latents(&inputs)? {
            let code = net.code_of(&h)?;
            out.push(TestLatent {
                truth: a.id,
                latent: h,
                code,
            });
        }
    }
    Ok(out)
}

pub fn predict(db: &AccountDb, tests: &[TestLatent], l: usize) -> Result<Vec<Prediction>> {
    tests
        .iter()
        .map(|t| {
            Ok(Prediction {
                truth: t.truth,
                outcome: db.identify_latent(&t.latent, t.code, l)?.outcome,
            })
        })
        .collect()
}

pub fn evaluate_identification(
    net: &Network<f32>,
    db: &AccountDb,
    accounts: &[ProcessedAccount],
    l: usize,
) -> Result<IdentMetrics> {
    db.check_model(net)?;
    let tests = test_latents(net, accounts)?;
    let ids: Vec<u64> = db.records().map(|r| r.id).collect();
    metrics_from_predictions(&ids, &predict(db, &tests, l)?, l)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BitStats {
    pub one_fraction: Vec<f64>,
    /// Pearson correlation of bits as +-1 over accounts; constant bits
    /// correlate 0 with everything but themselves.
    pub correlation: Vec<Vec<f64>>,
}

pub fn bit_statistics(codes: &[HashCode]) -> BitStats {
    assert!(!codes.is_empty(), "bit statistics of no codes");
    let b = codes[0].len();
    let n = codes.len() as f64;
    let signs: Vec<Vec<f64>> = (0..b)
        .map(|j| codes.iter().map(|c| c.sign(j) as f64).collect())
        .collect();
    let one_fraction = signs
        .iter()
        .map(|s| s.iter().filter(|&&v| v > 0.0).count() as f64 / n)
        .collect();
    let mean: Vec<f64> = signs.iter().map(|s| s.iter().sum::<f64>() / n).collect();
    let centered: Vec<Vec<f64>> = signs
        .iter()
        .zip(&mean)
        .map(|(s, m)| s.iter().map(|v| v - m).collect())
        .collect();
    let var: Vec<f64> = centered.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let correlation = (0..b)
        .map(|i| {
            (0..b)
                .map(|j| {
                    if i == j {
                        1.0
                    } else if var[i] == 0.0 || var[j] == 0.0 {
                        0.0
                    } else {
                        let cov: f64 = centered[i].iter().zip(&centered[j]).map(|(x, y)| x * y).sum();
                        cov / (var[i] * var[j]).sqrt()
                    }
                })
                .collect()
        })
        .collect();
    BitStats {
        one_fraction,
        correlation,
    }
}

/// Counts per Hamming distance `0..=B`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram {
    pub counts: Vec<u64>,
}

impl Histogram {
    fn new(bits: usize) -> Self {
        Histogram {
            counts: vec![0; bits + 1],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Test code vs own account code (intra) and vs every other account's code
/// (inter).
pub fn distance_distributions(db: &AccountDb, tests: &[TestLatent]) -> (Histogram, Histogram) {
    let mut intra = Histogram::new(db.hash_bits());
    let mut inter = Histogram::new(db.hash_bits());
    for t in tests {
        for r in db.records() {
            let d = t.code.hamming(&r.code) as usize;
            if r.id == t.truth {
                intra.counts[d] += 1;
            } else {
                inter.counts[d] += 1;
            }
        }
    }
    (intra, inter)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairDistances {
    pub ids: Vec<u64>,
    pub matrix: Vec<Vec<u32>>,
    pub min: u32,
    pub mean: f64,
    pub max: u32,
    /// Share of unordered account pairs at distance >= 3.
    pub separated_3: f64,
}

pub fn account_pair_distances(db: &AccountDb) -> PairDistances {
    let records: Vec<_> = db.records().collect();
    let matrix: Vec<Vec<u32>> = records
        .iter()
        .map(|a| records.iter().map(|b| a.code.hamming(&b.code)).collect())
        .collect();
    let upper: Vec<u32> = (0..records.len())
        .flat_map(|i| matrix[i][i + 1..].to_vec())
        .collect();
    let n = upper.len().max(1) as f64;
    PairDistances {
        ids: records.iter().map(|r| r.id).collect(),
        min: upper.iter().copied().min().unwrap_or(0),
        max: upper.iter().copied().max().unwrap_or(0),
        mean: upper.iter().map(|&d| d as f64).sum::<f64>() / n,
        separated_3: upper.iter().filter(|&&d| d >= 3).count() as f64 / n,
        matrix,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub hash_bits: usize,
    pub accounts: usize,
    pub tests: usize,
    pub identification: Vec<IdentMetrics>,
    pub predictions: Vec<(usize, Vec<Prediction>)>,
    pub bits: BitStats,
    pub intra: Histogram,
    pub inter: Histogram,
    pub pairs: PairDistances,
}

pub const TOLERANCES: [usize; 3] = [0, 1, 2];

pub fn evaluate(
    net: &Network<f32>,
    db: &AccountDb,
    accounts: &[ProcessedAccount],
    tolerances: &[usize],
) -> Result<EvalReport> {
    db.check_model(net)?;
    if db.len() < 2 {
        return Err(Error::TooFewSignals { got: db.len(), min: 2 });
    }
    let tests = test_latents(net, accounts)?;
    let ids: Vec<u64> = db.records().map(|r| r.id).collect();
    let mut identification = Vec::new();
    let mut predictions = Vec::new();
    for &l in tolerances {
        let preds = predict(db, &tests, l)?;
        identification.push(metrics_from_predictions(&ids, &preds, l)?);
        predictions.push((l, preds));
    }
    let codes: Vec<HashCode> = db.records().map(|r| r.code).collect();
    let (intra, inter) = distance_distributions(db, &tests);
    Ok(EvalReport {
        hash_bits: db.hash_bits(),
        accounts: db.len(),
        tests: tests.len(),
        identification,
        predictions,
        bits: bit_statistics(&codes),
        intra,
        inter,
        pairs: account_pair_distances(db),
    })
}

/// Averages identification metrics of several runs, tolerance by tolerance.
pub fn average_metrics(runs: &[Vec<IdentMetrics>]) -> Vec<IdentMetrics> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let n = runs.len() as f64;
    let mean = |i: usize, f: fn(&IdentMetrics) -> f64| runs.iter().map(|r| f(&r[i])).sum::<f64>() / n;
    (0..first.len())
        .map(|i| IdentMetrics {
            tolerance: first[i].tolerance,
            tests: runs.iter().map(|r| r[i].tests).sum(),
            avg_precision: mean(i, |m| m.avg_precision),
            avg_recall: mean(i, |m| m.avg_recall),
            miss_rate: mean(i, |m| m.miss_rate),
            fail_rate: mean(i, |m| m.fail_rate),
            accuracy: mean(i, |m| m.accuracy),
        })
        .collect()
}

pub fn metrics_text(metrics: &[IdentMetrics]) -> String {
    let mut out = String::new();
    for m in metrics {
        writeln!(
            out,
            "l={} precision {:.6} recall {:.6} miss_rate {:.6} fail_rate {:.6} accuracy {:.6} tests {}",
            m.tolerance, m.avg_precision, m.avg_recall, m.miss_rate, m.fail_rate, m.accuracy, m.tests
        )
        .unwrap();
    }
    out
}

/// `l truth outcome` per line, where outcome is an id or `fail`.
pub fn predictions_text(report: &EvalReport) -> String {
    let mut out = String::from("# l truth outcome\n");
    for (l, preds) in &report.predictions {
        for p in preds {
            match p.outcome {
                Outcome::Identified(id) => writeln!(out, "{l} {} {id}", p.truth),
                Outcome::Failure => writeln!(out, "{l} {} fail", p.truth),
            }
            .unwrap();
        }
    }
    out
}

pub fn parse_predictions(text: &str) -> Result<Vec<(usize, Prediction)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::format("prediction log", format!("line {}: expected `l truth outcome`", n + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        let [l, truth, outcome] = f[..] else {
            return Err(bad());
        };
        let outcome = match outcome {
            "fail" => Outcome::Failure,
            id => Outcome::Identified(id.parse().map_err(|_| bad())?),
        };
        out.push((
            l.parse().map_err(|_| bad())?,
            Prediction {
                truth: truth.parse().map_err(|_| bad())?,
                outcome,
            },
        ));
    }
    Ok(out)
}

impl EvalReport {
    pub fn metrics(&self, l: usize) -> Option<&IdentMetrics> {
        self.identification.iter().find(|m| m.tolerance == l)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "hash_bits {}", self.hash_bits).unwrap();
        writeln!(out, "accounts {}", self.accounts).unwrap();
        writeln!(out, "test_signals {}", self.tests).unwrap();
        out.push_str(&metrics_text(&self.identification));
        let fr = &self.bits.one_fraction;
        let off: Vec<f64> = (0..fr.len())
            .flat_map(|i| (i + 1..fr.len()).map(move |j| (i, j)))
            .map(|(i, j)| self.bits.correlation[i][j].abs())
            .collect();
        writeln!(
            out,
            "bit_one_fraction min {:.6} max {:.6}",
            fr.iter().copied().fold(f64::INFINITY, f64::min),
            fr.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        )
        .unwrap();
        writeln!(
            out,
            "bit_correlation max_abs_offdiag {:.6}",
            off.iter().copied().fold(0.0, f64::max)
        )
        .unwrap();
        writeln!(out, "intra_pairs {} inter_pairs {}", self.intra.total(), self.inter.total()).unwrap();
        writeln!(
            out,
            "account_distance min {} mean {:.6} max {} separated_3 {:.6}",
            self.pairs.min, self.pairs.mean, self.pairs.max, self.pairs.separated_3
        )
        .unwrap();
        out
    }

    /// Plot-ready files: one value (or matrix row) per line under a header.
    pub fn write_plots(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files: Vec<(&str, String)> = Vec::new();

        let mut s = String::from("# bit one_fraction\n");
        for (j, f) in self.bits.one_fraction.iter().enumerate() {
            writeln!(s, "{j} {f:.6}").unwrap();
        }
        files.push(("bit_one_fraction.txt", s));

        let mut s = String::from("# bit correlation matrix, row i column j\n");
        for row in &self.bits.correlation {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(s, "{}", cells.join(" ")).unwrap();
        }
        files.push(("bit_correlation.txt", s));

        for (name, h) in [("hamming_intra.txt", &self.intra), ("hamming_inter.txt", &self.inter)] {
            let mut s = String::from("# distance count\n");
            for (d, c) in h.counts.iter().enumerate() {
                writeln!(s, "{d} {c}").unwrap();
            }
            files.push((name, s));
        }

        let mut s = format!(
            "# account code distances, rows and columns in id order: {}\n",
            self.pairs.ids.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
        );
        for row in &self.pairs.matrix {
            let cells: Vec<String> = row.iter().map(u32::to_string).collect();
            writeln!(s, "{}", cells.join(" ")).unwrap();
        }
        files.push(("account_distances.txt", s));

        files.push(("predictions.txt", predictions_text(self)));
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
