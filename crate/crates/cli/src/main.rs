use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fmhash::augment::augment_account;
use fmhash::dataset::{load_dataset, read_signal, write_dataset, ProcessedAccount};
use fmhash::db::{AccountDb, Outcome, MAX_TOLERANCE};
use fmhash::eval::{account_pair_distances, bit_statistics, evaluate, predictions_text};
use fmhash::experiment::{run_experiment, ExperimentConfig};
use fmhash::net::{decode_model, encode_model, Network};
use fmhash::rng::{stream, Stream};
use fmhash::signal::{preprocess, ProcessedSignal};
use fmhash::synth::{generate_dataset, Jitter, SynthParams};
use fmhash::train::{train_full, TrainConfig};
use fmhash::{Error, HashCode, Result};

#[derive(Parser)]
#[command(name = "fmhash", version, about = "Fuzzy hash codes for in-air handwriting signals")]
struct Cli {
    /// Worker threads for parallel stages [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic account dataset
    Synth(SynthArgs),
    /// Preprocess one raw signal file or a whole dataset tree
    Preprocess(PreprocessArgs),
    /// Augment the preprocessed signals of one account
    Augment(AugmentArgs),
    /// Train a model (softmax pretraining, then pairwise training)
    Train(TrainArgs),
    /// Build an account database from the training split of a dataset
    Enroll(EnrollArgs),
    /// Identify the account of one signal
    Identify(IdentifyArgs),
    /// Evaluate identification on the test split of a dataset
    Evaluate(EvaluateArgs),
    /// Print bit and account-distance statistics of a database
    Stats(StatsArgs),
    /// Run repeated train/enroll/evaluate cycles from a config file
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of accounts
    #[arg(long, default_value_t = 50)]
    accounts: usize,
    /// Training (registration) signals per account
    #[arg(long, default_value_t = 5)]
    k_train: usize,
    /// Test signals per account
    #[arg(long, default_value_t = 5)]
    k_test: usize,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Time-warp jitter strength
    #[arg(long, default_value_t = Jitter::default().warp)]
    warp: f64,
    /// Additive noise level, relative to the axis spread
    #[arg(long, default_value_t = Jitter::default().noise)]
    noise: f64,
    /// Per-axis amplitude jitter
    #[arg(long, default_value_t = Jitter::default().amplitude)]
    amplitude: f64,
    /// Minimum DTW cost between account templates
    #[arg(long, default_value_t = SynthParams::default().separation)]
    separation: f64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Raw signal file, or dataset directory
    #[arg(long)]
    input: PathBuf,
    /// Output file (for a file input) or directory (for a dataset input)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    /// Preprocessed signal files of one account (at least 2)
    #[arg(required = true, num_args = 2..)]
    signals: Vec<PathBuf>,
    /// Signals to produce
    #[arg(long, default_value_t = 125)]
    target: usize,
    /// Augmentation seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Account id, mixed into the seed
    #[arg(long, default_value_t = 0)]
    account: u64,
    /// Output directory, one `<k>.txt` per signal
    #[arg(long)]
    out: PathBuf,
}

/// Training settings. Each flag overrides the config file, which overrides
/// the built-in default.
#[derive(Args, Default)]
struct TrainOverrides {
    /// Hash code length B (16, 32, 48 or 64) [default: 16]
    #[arg(long)]
    hash_bits: Option<usize>,
    /// Training seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Softmax pretraining iterations [default: 1000]
    #[arg(long)]
    pretrain_iters: Option<usize>,
    /// Pairwise training iterations [default: 10000]
    #[arg(long)]
    pairwise_iters: Option<usize>,
    /// Pairs per label per minibatch, M [default: 200]
    #[arg(long)]
    pairs_per_label: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Augmented signals per account [default: 125]
    #[arg(long)]
    augment_target: Option<usize>,
    /// Write a model checkpoint every N pairwise iterations, 0 for none [default: 0]
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Regularizer bound p [default: 10]
    #[arg(long)]
    p: Option<f64>,
    /// Regularizer bound q [default: 5]
    #[arg(long)]
    q: Option<f64>,
    /// Pairwise margin m [default: p * sqrt(B)]
    #[arg(long)]
    margin: Option<f64>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { cfg.$f = v; })*};
        }
        set!(hash_bits, seed, pretrain_iters, pairwise_iters, pairs_per_label, learning_rate, augment_target, checkpoint_every, p, q);
        if self.margin.is_some() {
            cfg.margin = self.margin;
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory [default: the config file's dataset]
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Experiment config file (TOML); its `train` table and dataset are used
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    train: TrainOverrides,
    /// Output directory for `model.fmh`, `train.log` and checkpoints
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnrollArgs {
    /// Model file
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory; each account's training split is its registration set
    #[arg(long)]
    dataset: PathBuf,
    /// Output database file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Model file
    #[arg(long)]
    model: PathBuf,
    /// Account database file
    #[arg(long)]
    db: PathBuf,
    /// Signal file (raw unless --processed)
    #[arg(long)]
    signal: PathBuf,
    /// The signal file is already preprocessed
    #[arg(long)]
    processed: bool,
    /// Hamming tolerance l
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=MAX_TOLERANCE as i64))]
    tolerance: u8,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Model file
    #[arg(long)]
    model: PathBuf,
    /// Account database file
    #[arg(long)]
    db: PathBuf,
    /// Dataset directory; its test split is evaluated
    #[arg(long)]
    dataset: PathBuf,
    /// Hamming tolerances, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0,1,2",
          value_parser = clap::value_parser!(u8).range(0..=MAX_TOLERANCE as i64))]
    tolerances: Vec<u8>,
    /// Directory for `report.txt`, `predictions.txt` and plot files
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Account database file
    #[arg(long)]
    db: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config file (TOML) [default: built-in defaults]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory, replacing the config's dataset or synth table
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory [default: experiment]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Repetitions R, with training seeds seed..seed+R-1 [default: 1]
    #[arg(long)]
    repetitions: Option<usize>,
    #[command(flatten)]
    train: TrainOverrides,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load_model(path: &Path) -> Result<Network<f32>> {
    decode_model(&read_file(path)?)
}

fn load_db(path: &Path) -> Result<AccountDb> {
    AccountDb::decode(&read_file(path)?)
}

fn load_pair(model: &Path, db: &Path) -> Result<(Network<f32>, AccountDb)> {
    let net = load_model(model)?;
    let db = load_db(db)?;
    db.check_model(&net)?;
    Ok((net, db))
}

fn load_processed(dataset: &Path) -> Result<Vec<ProcessedAccount>> {
    load_dataset(dataset)?.preprocess()
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let params = SynthParams {
        accounts: a.accounts,
        k_train: a.k_train,
        k_test: a.k_test,
        seed: a.seed,
        jitter: Jitter {
            warp: a.warp,
            noise: a.noise,
            amplitude: a.amplitude,
        },
        separation: a.separation,
        ..SynthParams::default()
    };
    params.validate()?;
    let ds = generate_dataset(&params)?;
    write_dataset(&a.out, &ds, Some(&params))?;
    println!(
        "accounts {} signals {} ({} train + {} test each) seed {} -> {}",
        ds.accounts.len(),
        ds.signal_count(),
        params.k_train,
        params.k_test,
        params.seed,
        a.out.display()
    );
    Ok(())
}

fn cmd_preprocess(a: PreprocessArgs) -> Result<()> {
    if a.input.is_dir() {
        let accounts = load_processed(&a.input)?;
        let mut count = 0;
        for acc in &accounts {
            for (split, signals) in [("train", &acc.train), ("test", &acc.test)] {
                for (k, s) in signals.iter().enumerate() {
                    let path = a.out.join(acc.id.to_string()).join(split).join(format!("{k}.txt"));
                    write_file(&path, s.to_text().as_bytes())?;
                    count += 1;
                }
            }
        }
        println!("preprocessed {count} signals of {} accounts -> {}", accounts.len(), a.out.display());
    } else {
        let x = preprocess(&read_signal(&a.input)?)?;
        write_file(&a.out, x.to_text().as_bytes())?;
        println!("preprocessed {} -> {}", a.input.display(), a.out.display());
    }
    Ok(())
}

fn read_processed(path: &Path) -> Result<ProcessedSignal> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    ProcessedSignal::parse(&text)
}

fn cmd_augment(a: AugmentArgs) -> Result<()> {
    let signals = a.signals.iter().map(|p| read_processed(p)).collect::<Result<Vec<_>>>()?;
    let out = augment_account(&signals, a.target, &mut stream(a.seed, Stream::Augment, a.account, 0))?;
    for (k, s) in out.iter().enumerate() {
        write_file(&a.out.join(format!("{k}.txt")), s.to_text().as_bytes())?;
    }
    println!("augmented {} signals into {} -> {}", signals.len(), out.len(), a.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let file_cfg = a.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let mut cfg = file_cfg.as_ref().map(|c| c.train.clone()).unwrap_or_default();
    a.train.apply(&mut cfg);
    cfg.validate()?;
    let accounts = match (&a.dataset, &file_cfg) {
        (Some(d), _) => load_processed(d)?,
        (None, Some(c)) if c.dataset.is_some() || c.synth.is_some() => {
            let c = ExperimentConfig {
                output: a.out.clone(),
                ..c.clone()
            };
            c.accounts()?
        }
        _ => return Err(Error::Config("no dataset: pass --dataset or a config file naming one".into())),
    };
    let ckpt = a.out.join("checkpoints");
    let out = train_full(&accounts, &cfg, (cfg.checkpoint_every > 0).then_some(ckpt.as_path()))?;
    write_file(&a.out.join("model.fmh"), &encode_model(&out.net))?;
    write_file(&a.out.join("train.log"), out.log.to_text().as_bytes())?;
    println!(
        "trained B={} on {} accounts: {} iterations -> {}",
        cfg.hash_bits,
        accounts.len(),
        out.log.iterations(),
        a.out.join("model.fmh").display()
    );
    Ok(())
}

fn cmd_enroll(a: EnrollArgs) -> Result<()> {
    let net = load_model(&a.model)?;
    let accounts = load_processed(&a.dataset)?;
    let regs: Vec<(u64, &[ProcessedSignal])> = accounts.iter().map(|acc| (acc.id, &acc.train[..])).collect();
    let db = AccountDb::build(&net, &regs)?;
    write_file(&a.out, &db.encode())?;
    println!("enrolled {} accounts (B={}) -> {}", db.len(), db.hash_bits(), a.out.display());
    Ok(())
}

fn code_string(code: HashCode) -> String {
    (0..code.len()).map(|j| if code.sign(j) > 0 { '1' } else { '0' }).collect()
}

fn cmd_identify(a: IdentifyArgs) -> Result<()> {
    let (net, db) = load_pair(&a.model, &a.db)?;
    let x = if a.processed {
        read_processed(&a.signal)?
    } else {
        preprocess(&read_signal(&a.signal)?)?
    };
    let r = db.identify(&net, &x, a.tolerance as usize)?;
    match r.outcome {
        Outcome::Identified(id) => println!("account {id}"),
        Outcome::Failure => println!("account none"),
    }
    println!("code {}", code_string(r.code));
    println!("candidates {}", r.candidates_examined);
    println!("probes {}", r.probes);
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let (net, db) = load_pair(&a.model, &a.db)?;
    let accounts = load_processed(&a.dataset)?;
    let tolerances: Vec<usize> = a.tolerances.iter().map(|&l| l as usize).collect();
    let report = evaluate(&net, &db, &accounts, &tolerances)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(dir) = &a.out {
        write_file(&dir.join("report.txt"), text.as_bytes())?;
        write_file(&dir.join("predictions.txt"), predictions_text(&report).as_bytes())?;
        report.write_plots(&dir.join("plots"))?;
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let db = load_db(&a.db)?;
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let codes: Vec<HashCode> = db.records().map(|r| r.code).collect();
    let bits = bit_statistics(&codes);
    let pairs = account_pair_distances(&db);
    println!("accounts {} hash_bits {}", db.len(), db.hash_bits());
    println!("# bit one_fraction");
    for (j, f) in bits.one_fraction.iter().enumerate() {
        println!("{j} {f:.4}");
    }
    println!(
        "pair_distance min {} mean {:.3} max {} separated_3 {:.4}",
        pairs.min, pairs.mean, pairs.max, pairs.separated_3
    );
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = a.dataset {
        cfg.dataset = Some(d);
        cfg.synth = None;
    }
    if let Some(o) = a.out {
        cfg.output = o;
    }
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    a.train.apply(&mut cfg.train);
    cfg.validate()?;
    let out = run_experiment(&cfg)?;
    print!("{}", out.summary());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Train(a) => cmd_train(a),
        Command::Enroll(a) => cmd_enroll(a),
        Command::Identify(a) => cmd_identify(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
