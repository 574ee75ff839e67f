//! Account enrollment and identification.
//!
//! Each account stores its mean latent vector `h` and code `b = sign(W h + c)`.
//! Codes index a hash table; identification probes every code within `l`
//! bits of the query code and reranks the hits by latent distance.

use std::collections::{BTreeMap, HashMap};

use crate::bytes::Reader;
use crate::code::HashCode;
use crate::error::{Error, Result};
use crate::net::Network;
use crate::signal::ProcessedSignal;

pub const DB_MAGIC: &[u8; 5] = b"FMDB1";
/// Largest tolerance `hamming_ball` expands.
pub const MAX_TOLERANCE: usize = 2;
const MAX_LATENT: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq)]
pub struct AccountRecord {
    pub id: u64,
    pub code: HashCode,
    pub latent: Vec<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Identified(u64),
    Failure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentifyResult {
    pub outcome: Outcome,
    pub code: HashCode,
    /// Distinct accounts compared by latent distance.
    pub candidates_examined: usize,
    /// Hash table lookups performed.
    pub probes: usize,
}

/// Mean of latent rows, accumulated in double precision.
pub fn mean_latent(latents: &[Vec<f32>]) -> Vec<f32> {
    assert!(!latents.is_empty(), "mean of no latents");
    let d = latents[0].len();
    let mut acc = vec![0.0f64; d];
    for h in latents {
        acc.iter_mut().zip(h).for_each(|(a, &v)| *a += v as f64);
    }
    acc.iter().map(|a| (a / latents.len() as f64) as f32).collect()
}

/// Enrollment formula: mean latent over the K signals, then project and
/// quantize (mean first, not mean of codes).
pub fn account_code(net: &Network<f32>, signals: &[ProcessedSignal]) -> Result<(Vec<f32>, HashCode)> {
    if signals.is_empty() {
        return Err(Error::TooFewSignals { got: 0, min: 1 });
    }
    let inputs: Vec<Vec<f32>> = signals.iter().map(ProcessedSignal::to_f32).collect();
    let h = mean_latent(&net.latents(&inputs)?);
    let code = net.code_of(&h)?;
    Ok((h, code))
}

/// Every code within `l` bits of `code`, ordered by distance and then by
/// flipped positions in lexicographic order.
pub fn hamming_ball(code: HashCode, l: usize) -> Vec<HashCode> {
    assert!(l <= MAX_TOLERANCE, "tolerance above {MAX_TOLERANCE}");
    let b = code.len();
    let mut out = vec![code];
    if l >= 1 {
        out.extend((0..b).map(|i| code.flipped(i)));
    }
    if l >= 2 {
        for i in 0..b {
            for j in i + 1..b {
                out.push(code.flipped(i).flipped(j));
            }
        }
    }
    out
}

pub fn ball_size(bits: usize, l: usize) -> usize {
    (0..=l).map(|j| binomial(bits, j)).sum()
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccountDb {
    hash_bits: usize,
    latent_dim: usize,
    records: BTreeMap<u64, AccountRecord>,
    /// Code bits to account ids, each list ascending.
    index: HashMap<u64, Vec<u64>>,
}

impl AccountDb {
    pub fn new(hash_bits: usize, latent_dim: usize) -> Self {
        AccountDb {
            hash_bits,
            latent_dim,
            records: BTreeMap::new(),
            index: HashMap::new(),
        }
    }

    pub fn for_model(net: &Network<f32>) -> Self {
        Self::new(net.hash_bits(), net.arch().latent)
    }

    /// A fresh database with every account enrolled; replaces a stale one
    /// wholesale after retraining.
    pub fn build(net: &Network<f32>, accounts: &[(u64, &[ProcessedSignal])]) -> Result<Self> {
        let mut db = Self::for_model(net);
        for &(id, signals) in accounts {
            db.enroll(net, id, signals)?;
        }
        Ok(db)
    }

    pub fn hash_bits(&self) -> usize {
        self.hash_bits
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in ascending id order.
    pub fn records(&self) -> impl Iterator<Item = &AccountRecord> {
        self.records.values()
    }

    pub fn get(&self, id: u64) -> Option<&AccountRecord> {
        self.records.get(&id)
    }

    pub fn check_model(&self, net: &Network<f32>) -> Result<()> {
        if net.hash_bits() != self.hash_bits {
            return Err(Error::HashSizeMismatch {
                model: net.hash_bits(),
                database: self.hash_bits,
            });
        }
        if net.arch().latent != self.latent_dim {
            return Err(Error::Architecture(format!(
                "model latent size {} does not match database latent size {}",
                net.arch().latent,
                self.latent_dim
            )));
        }
        Ok(())
    }

    pub fn enroll(&mut self, net: &Network<f32>, id: u64, signals: &[ProcessedSignal]) -> Result<&AccountRecord> {
        self.check_model(net)?;
        if self.records.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let (latent, code) = account_code(net, signals)?;
        self.insert(AccountRecord { id, code, latent })
    }

    pub fn insert(&mut self, record: AccountRecord) -> Result<&AccountRecord> {
        if record.code.len() != self.hash_bits {
            return Err(Error::HashSizeMismatch {
                model: record.code.len(),
                database: self.hash_bits,
            });
        }
        if record.latent.len() != self.latent_dim {
            return Err(Error::Architecture(format!(
                "latent of length {} in a database of latent size {}",
                record.latent.len(),
                self.latent_dim
            )));
        }
        let id = record.id;
        if self.records.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let bucket = self.index.entry(record.code.bits()).or_default();
        let at = bucket.partition_point(|&x| x < id);
        bucket.insert(at, id);
        Ok(self.records.entry(id).or_insert(record))
    }

    pub fn remove(&mut self, id: u64) -> Result<AccountRecord> {
        let record = self.records.remove(&id).ok_or(Error::UnknownId(id))?;
        let key = record.code.bits();
        if let Some(bucket) = self.index.get_mut(&key) {
            bucket.retain(|&x| x != id);
            if bucket.is_empty() {
                self.index.remove(&key);
            }
        }
        Ok(record)
    }

    /// Distinct account ids stored under any code within `l` bits of `code`,
    /// ascending, plus the number of table probes made.
    pub fn candidates(&self, code: HashCode, l: usize) -> (Vec<u64>, usize) {
        let ball = hamming_ball(code, l);
        let mut ids: Vec<u64> = Vec::new();
        for c in &ball {
            if let Some(bucket) = self.index.get(&c.bits()) {
                ids.extend_from_slice(bucket);
            }
        }
        ids.sort_unstable();
        ids.dedup();
        (ids, ball.len())
    }

    /// Identification from a precomputed latent and code.
    pub fn identify_latent(&self, h: &[f32], code: HashCode, l: usize) -> Result<IdentifyResult> {
        if self.records.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        if code.len() != self.hash_bits {
            return Err(Error::HashSizeMismatch {
                model: code.len(),
                database: self.hash_bits,
            });
        }
        let (ids, probes) = self.candidates(code, l);
        let mut best: Option<(f64, u64)> = None;
        for &id in &ids {
            let d = squared_distance(h, &self.records[&id].latent);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, id));
            }
        }
        Ok(IdentifyResult {
            outcome: best.map_or(Outcome::Failure, |(_, id)| Outcome::Identified(id)),
            code,
            candidates_examined: ids.len(),
            probes,
        })
    }

    pub fn identify(&self, net: &Network<f32>, x: &ProcessedSignal, l: usize) -> Result<IdentifyResult> {
        if self.records.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        self.check_model(net)?;
        let h = net.latents(&[x.to_f32()])?.pop().unwrap();
        let code = net.code_of(&h)?;
        self.identify_latent(&h, code, l)
    }

    fn code_bytes(&self) -> usize {
        self.hash_bits.div_ceil(8)
    }

    /// `FMDB1`, u32 B, u32 latent size, u32 count, then per record: u64 id,
    /// ceil(B/8) little-endian code bytes, latent as little-endian f32.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DB_MAGIC);
        for v in [self.hash_bits, self.latent_dim, self.records.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for r in self.records.values() {
            out.extend_from_slice(&r.id.to_le_bytes());
            out.extend_from_slice(&r.code.bits().to_le_bytes()[..self.code_bytes()]);
            for v in &r.latent {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new("account database", data);
        r.expect(DB_MAGIC)?;
        let hash_bits = r.u32()? as usize;
        let latent_dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        if !(1..=HashCode::MAX_BITS).contains(&hash_bits) {
            return Err(r.error(format!("hash size {hash_bits} outside 1..=64")));
        }
        if latent_dim == 0 || latent_dim > MAX_LATENT {
            return Err(r.error(format!("latent size {latent_dim} out of range")));
        }
        let mut db = AccountDb::new(hash_bits, latent_dim);
        let record_len = 8 + db.code_bytes() + 4 * latent_dim;
        if count.checked_mul(record_len).is_none_or(|n| n > r.remaining()) {
            return Err(r.error(format!("{count} records do not fit in the remaining input")));
        }
        for _ in 0..count {
            let id = r.u64()?;
            let mut bits = [0u8; 8];
            bits[..db.code_bytes()].copy_from_slice(r.take(db.code_bytes())?);
            let code = HashCode::from_bits(u64::from_le_bytes(bits), hash_bits)
                .map_err(|_| r.error(format!("code of account {id} has bits beyond B")))?;
            let latent = r.f32s(latent_dim)?;
            if latent.iter().any(|v| !v.is_finite()) {
                return Err(r.error(format!("latent of account {id} is not finite")));
            }
            db.insert(AccountRecord { id, code, latent }).map_err(|e| match e {
                Error::DuplicateId(id) => r.error(format!("account {id} appears twice")),
                other => other,
            })?;
        }
        r.finish()?;
        Ok(db)
    }
}
