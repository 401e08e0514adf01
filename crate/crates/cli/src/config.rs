//! Flat `key=value` configuration shared by every subcommand.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use featcraft::{Error, MicConfig, PipelineConfig, Result, TrmConfig};

/// Every key accepted in a configuration file, in rendering order.
pub const KEYS: &[&str] = &[
    "depth",
    "select",
    "tau",
    "gamma",
    "bins",
    "k",
    "seed",
    "cap_factor",
    "mic_alpha",
    "mic_c",
    "threads",
    "data_dir",
    "target_map",
    "trm",
    "input",
    "target",
    "out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub depth: usize,
    pub select: f64,
    pub tau: f64,
    pub gamma: f64,
    pub bins: usize,
    /// Cross-validation folds.
    pub k: usize,
    pub seed: u64,
    pub cap_factor: f64,
    pub mic_alpha: f64,
    pub mic_c: usize,
    /// Worker threads; all available cores when unset.
    pub threads: Option<usize>,
    pub data_dir: Option<String>,
    pub target_map: Option<String>,
    pub trm: Option<String>,
    pub input: Option<String>,
    pub target: Option<String>,
    pub out: Option<String>,
}

impl Default for CliConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        let m = MicConfig::default();
        CliConfig {
            depth: p.depth,
            select: p.select,
            tau: p.tau,
            gamma: p.gamma,
            bins: p.bins,
            k: 5,
            seed: p.seed,
            cap_factor: p.cap_factor,
            mic_alpha: m.alpha,
            mic_c: m.c,
            threads: None,
            data_dir: None,
            target_map: None,
            trm: None,
            input: None,
            target: None,
            out: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidConfig(format!("bad value `{value}` for `{key}`")))
}

impl CliConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let text = || Some(value.to_string());
        match key {
            "depth" => self.depth = parse(key, value)?,
            "select" => self.select = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "bins" => self.bins = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "cap_factor" => self.cap_factor = parse(key, value)?,
            "mic_alpha" => self.mic_alpha = parse(key, value)?,
            "mic_c" => self.mic_c = parse(key, value)?,
            "threads" => self.threads = Some(parse(key, value)?),
            "data_dir" => self.data_dir = text(),
            "target_map" => self.target_map = text(),
            "trm" => self.trm = text(),
            "input" => self.input = text(),
            "target" => self.target = text(),
            "out" => self.out = text(),
            _ => {
                return Err(Error::InvalidConfig(format!("unknown configuration key `{key}` (known: {})", KEYS.join(", "))))
            }
        }
        Ok(())
    }

    /// Applies a configuration text on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key=value", no + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Renders every set key in the file format accepted by [`apply_text`].
    ///
    /// [`apply_text`]: CliConfig::apply_text
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        line("depth", self.depth.to_string());
        line("select", self.select.to_string());
        line("tau", self.tau.to_string());
        line("gamma", self.gamma.to_string());
        line("bins", self.bins.to_string());
        line("k", self.k.to_string());
        line("seed", self.seed.to_string());
        line("cap_factor", self.cap_factor.to_string());
        line("mic_alpha", self.mic_alpha.to_string());
        line("mic_c", self.mic_c.to_string());
        let paths = [
            ("threads", self.threads.map(|t| t.to_string())),
            ("data_dir", self.data_dir.clone()),
            ("target_map", self.target_map.clone()),
            ("trm", self.trm.clone()),
            ("input", self.input.clone()),
            ("target", self.target.clone()),
            ("out", self.out.clone()),
        ];
        for (k, v) in paths {
            if let Some(v) = v {
                line(k, v);
            }
        }
        s
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            depth: self.depth,
            select: self.select,
            tau: self.tau,
            cap_factor: self.cap_factor,
            seed: self.seed,
            gamma: self.gamma,
            bins: self.bins,
            ..PipelineConfig::default()
        }
    }

    pub fn trm(&self) -> TrmConfig {
        TrmConfig { bins: self.bins, mic: MicConfig { alpha: self.mic_alpha, c: self.mic_c }, gamma: self.gamma }
    }

    /// A required path or name, or a configuration error naming its flag.
    pub fn require<'a>(&self, value: &'a Option<String>, flag: &str) -> Result<&'a str> {
        value.as_deref().ok_or_else(|| Error::InvalidConfig(format!("missing required --{flag}")))
    }
}
