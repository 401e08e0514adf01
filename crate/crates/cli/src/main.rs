//! Command-line front end: train a recommendation matrix, transform a CSV,
//! and evaluate the engineered features by cross-validation.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use featcraft::trm::RecordKind;
use featcraft::{
    compare, load_csv, load_trm, preprocess, save_trm, train_trm, transform_dataset, write_csv, CompareConfig,
    Error, ErrorClass, Result,
};

use config::CliConfig;

#[derive(Parser)]
#[command(name = "featcraft", version, about = "Recommendation-driven feature engineering for tabular classification")]
struct Cli {
    #[command(flatten)]
    flags: ConfigFlags,
    #[command(subcommand)]
    command: Command,
}

/// Tunables shared by every subcommand. Precedence: flag, then config
/// file, then default.
#[derive(Args)]
struct ConfigFlags {
    /// Configuration file of `key=value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Construction rounds [default: 2].
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Fraction of features kept by causal selection, in (0, 1] [default: 0.8].
    #[arg(long, global = true)]
    select: Option<f64>,
    /// Minimum similarity of a recommendation [default: 0.5].
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Outlier threshold of the scaler decision [default: 0.05].
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Histogram bins of feature encodings [default: 10].
    #[arg(long, global = true)]
    bins: Option<usize>,
    /// Cross-validation folds [default: 5].
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Seed of every random choice [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Generated columns are capped at cap_factor times the input count [default: 2].
    #[arg(long, global = true)]
    cap_factor: Option<f64>,
    /// MIC grid budget exponent [default: 0.6].
    #[arg(long, global = true)]
    mic_alpha: Option<f64>,
    /// MIC clump expansion factor [default: 15].
    #[arg(long, global = true)]
    mic_c: Option<usize>,
    /// Maximum worker threads [default: all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a recommendation matrix over a directory of CSV files.
    Train {
        /// Directory holding the training CSV files.
        #[arg(long)]
        data_dir: Option<String>,
        /// File of `name.csv=target_column` lines.
        #[arg(long)]
        target_map: Option<String>,
        /// Output matrix file.
        #[arg(long)]
        out: Option<String>,
    },
    /// Engineer features for one CSV and write it with a lineage sidecar.
    Transform {
        #[arg(long)]
        trm: Option<String>,
        #[arg(long)]
        input: Option<String>,
        #[arg(long)]
        target: Option<String>,
        /// Output CSV; lineage goes to `<out>.lineage.json`.
        #[arg(long)]
        out: Option<String>,
    },
    /// Cross-validate classifiers on original and engineered features.
    Evaluate {
        #[arg(long)]
        trm: Option<String>,
        #[arg(long)]
        input: Option<String>,
        #[arg(long)]
        target: Option<String>,
        /// JSON report path [default: `<input stem>.report.json`].
        #[arg(long)]
        out: Option<String>,
    },
    /// Print the effective configuration in config-file format.
    PrintConfig,
}

fn resolve(flags: &ConfigFlags) -> Result<CliConfig> {
    let mut c = CliConfig::default();
    if let Some(path) = &flags.config {
        c.apply_file(path)?;
    }
    macro_rules! over {
        ($($f:ident),*) => { $(if let Some(v) = flags.$f { c.$f = v; })* };
    }
    over!(depth, select, tau, gamma, bins, k, seed, cap_factor, mic_alpha, mic_c);
    if flags.threads.is_some() {
        c.threads = flags.threads;
    }
    Ok(c)
}

fn set_paths(c: &mut CliConfig, command: &Command) {
    let pick = |slot: &mut Option<String>, v: &Option<String>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    match command {
        Command::Train { data_dir, target_map, out } => {
            pick(&mut c.data_dir, data_dir);
            pick(&mut c.target_map, target_map);
            pick(&mut c.out, out);
        }
        Command::Transform { trm, input, target, out } | Command::Evaluate { trm, input, target, out } => {
            pick(&mut c.trm, trm);
            pick(&mut c.input, input);
            pick(&mut c.target, target);
            pick(&mut c.out, out);
        }
        Command::PrintConfig => {}
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn read_target_map(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (file, target) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("target map line {}: expected file=target", no + 1)))?;
        map.insert(file.trim().to_string(), target.trim().to_string());
    }
    Ok(map)
}

fn cmd_train(c: &CliConfig) -> Result<()> {
    let dir = PathBuf::from(c.require(&c.data_dir, "data-dir")?);
    let targets = read_target_map(Path::new(c.require(&c.target_map, "target-map")?))?;
    let out = c.require(&c.out, "out")?;
    let entries = std::fs::read_dir(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    let mut corpus = Vec::with_capacity(files.len());
    for path in &files {
        let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        let target = targets
            .get(&file)
            .ok_or_else(|| Error::InvalidConfig(format!("target map has no entry for {file}")))?;
        corpus.push(preprocess(&load_csv(path, target)?)?);
    }
    let trm = train_trm(&corpus, &c.trm())?;
    save_trm(&trm, out)?;
    println!("datasets: {}", corpus.len());
    for (name, kind) in [("unary", RecordKind::Unary), ("binary", RecordKind::Binary), ("scaler", RecordKind::Scaler)] {
        println!("{name} records: {}", trm.count(kind));
    }
    Ok(())
}

fn cmd_transform(c: &CliConfig) -> Result<()> {
    let trm = load_trm(c.require(&c.trm, "trm")?)?;
    let input = c.require(&c.input, "input")?;
    let target = c.require(&c.target, "target")?;
    let out = c.require(&c.out, "out")?;
    let cfg = c.pipeline();
    cfg.validate()?;
    let d = preprocess(&load_csv(input, target)?)?;
    let e = transform_dataset(&d, &trm, &cfg)?;
    write_csv(&e.output, out)?;
    write_text(Path::new(&format!("{out}.lineage.json")), &e.lineage.to_json())?;
    for w in &e.lineage.warnings {
        eprintln!("warning: {w:?}");
    }
    let (kept, generated) = (e.base.n_features(), e.generated.len());
    println!("selected originals: {kept}");
    println!("generated: {generated}");
    println!("total: {}", kept + generated);
    Ok(())
}

fn cmd_evaluate(c: &CliConfig) -> Result<()> {
    let trm = load_trm(c.require(&c.trm, "trm")?)?;
    let input = c.require(&c.input, "input")?;
    let target = c.require(&c.target, "target")?;
    let out = match &c.out {
        Some(o) => PathBuf::from(o),
        None => {
            let stem = Path::new(input).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            PathBuf::from(format!("{stem}.report.json"))
        }
    };
    let cfg = CompareConfig { pipeline: c.pipeline(), folds: c.k, seed: c.seed, ..CompareConfig::default() };
    cfg.pipeline.validate()?;
    let d = load_csv(input, target)?;
    let report = compare(&d, &trm, &cfg)?;
    print!("{}", report.to_table());
    write_text(&out, &report.to_json())
}

fn run(cli: Cli) -> Result<()> {
    let mut c = resolve(&cli.flags)?;
    set_paths(&mut c, &cli.command);
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("cannot size thread pool: {e}")))?;
    }
    match cli.command {
        Command::Train { .. } => cmd_train(&c),
        Command::Transform { .. } => cmd_transform(&c),
        Command::Evaluate { .. } => cmd_evaluate(&c),
        Command::PrintConfig => {
            print!("{}", c.render());
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Internal => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
