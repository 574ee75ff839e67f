//! Account datasets in memory and on disk.
//!
//! Disk layout: `<root>/<id>/train/<k>.txt`, `<root>/<id>/test/<k>.txt` in the
//! raw signal text format, plus `<root>/manifest.txt`.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::{preprocess, ProcessedSignal, RawSignal};
use crate::synth::SynthParams;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct AccountSignals {
    pub id: u64,
    pub train: Vec<RawSignal>,
    pub test: Vec<RawSignal>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub accounts: Vec<AccountSignals>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedAccount {
    pub id: u64,
    pub train: Vec<ProcessedSignal>,
    pub test: Vec<ProcessedSignal>,
}

impl Dataset {
    pub fn signal_count(&self) -> usize {
        self.accounts.iter().map(|a| a.train.len() + a.test.len()).sum()
    }

    /// Preprocesses every signal. Order is preserved.
    pub fn preprocess(&self) -> Result<Vec<ProcessedAccount>> {
        self.accounts
            .par_iter()
            .map(|a| {
                let run = |s: &[RawSignal]| s.iter().map(preprocess).collect::<Result<Vec<_>>>();
                Ok(ProcessedAccount {
                    id: a.id,
                    train: run(&a.train)?,
                    test: run(&a.test)?,
                })
            })
            .collect()
    }
}

/// Manifest text: one `key = value` line per generator setting.
pub fn manifest_text(params: &SynthParams, ds: &Dataset) -> String {
    let mut out = String::from("# synthetic account dataset\n");
    out.push_str(&toml::to_string(params).expect("synth params serialize"));
    out.push_str(&format!("# signals = {}\n", ds.signal_count()));
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the dataset tree under `root`, creating directories as needed.
pub fn write_dataset(root: &Path, ds: &Dataset, params: Option<&SynthParams>) -> Result<()> {
    for a in &ds.accounts {
        for (split, signals) in [("train", &a.train), ("test", &a.test)] {
            let dir = root.join(a.id.to_string()).join(split);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (k, s) in signals.iter().enumerate() {
                write(&dir.join(format!("{k}.txt")), &s.to_text())?;
            }
        }
    }
    if let Some(p) = params {
        write(&root.join(MANIFEST), &manifest_text(p, ds))?;
    }
    Ok(())
}

/// Numeric entries of a directory, sorted. `suffix` is stripped first.
fn numbered(dir: &Path, suffix: &str, want_dir: bool) -> Result<Vec<u64>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let is_dir = entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir();
        if is_dir != want_dir {
            continue;
        }
        let name = entry.file_name();
        let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(suffix)) else {
            continue;
        };
        if let Ok(n) = stem.parse::<u64>() {
            out.push(n);
        }
    }
    out.sort_unstable();
    Ok(out)
}

pub fn read_signal(path: &Path) -> Result<RawSignal> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RawSignal::parse(&text).map_err(|e| match e {
        Error::Format { what, reason } => Error::Format {
            what,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

fn read_split(dir: &Path) -> Result<Vec<RawSignal>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    numbered(dir, ".txt", false)?
        .into_iter()
        .map(|k| read_signal(&dir.join(format!("{k}.txt"))))
        .collect()
}

/// Loads every `<id>/` directory under `root`, sorted by id.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let ids = numbered(root, "", true)?;
    if ids.is_empty() {
        return Err(Error::InvalidSignal(format!("no account directories under {}", root.display())));
    }
    let accounts = ids
        .into_iter()
        .map(|id| {
            let dir = root.join(id.to_string());
            Ok(AccountSignals {
                id,
                train: read_split(&dir.join("train"))?,
                test: read_split(&dir.join("test"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { accounts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_dataset;

    fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn write_load_round_trip_is_byte_stable() {
        let params = SynthParams {
            accounts: 10,
            seed: 3,
            ..SynthParams::default()
        };
        let ds = generate_dataset(&params).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_dataset(a.path(), &ds, Some(&params)).unwrap();
        write_dataset(b.path(), &generate_dataset(&params).unwrap(), Some(&params)).unwrap();
        let files = tree(a.path());
        assert_eq!(files.len(), 101);
        assert_eq!(files, tree(b.path()));

        let loaded = load_dataset(a.path()).unwrap();
        assert_eq!(loaded, ds);
        let manifest = fs::read_to_string(a.path().join(MANIFEST)).unwrap();
        assert!(manifest.contains("accounts = 10"));
    }

    #[test]
    fn minimal_dataset_preprocesses() {
        let params = SynthParams {
            accounts: 2,
            ..SynthParams::default()
        };
        let p = generate_dataset(&params).unwrap().preprocess().unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].test.len(), 5);
    }

    #[test]
    fn missing_root_is_an_io_error() {
        assert!(matches!(load_dataset(Path::new("/nonexistent/x")), Err(Error::Io { .. })));
    }
}
