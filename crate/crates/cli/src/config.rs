//! `bpn` config files: `[network]`, `[train]`, `[data]` and `[enroll]`
//! sections of `key = value` lines, `#` comments.

use std::path::{Path, PathBuf};

use bpnet::enroll::EnrollmentConfig;
use bpnet::net::{bipedalnet_v1, NetworkConfig, Precision};
use bpnet::train::TrainConfig;
use bpnet::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    /// Dataset location, already resolved against the config file's directory.
    pub data: Option<PathBuf>,
    pub enroll: EnrollmentConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            network: bipedalnet_v1(),
            train: TrainConfig::default(),
            data: None,
            enroll: EnrollmentConfig::default(),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Network,
    Train,
    Data,
    Enroll,
}

fn value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| Error::Config { line, message: format!("{key}: {e}") })
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses config text; relative paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = CliConfig::default();
        let mut section = Section::None;
        let mut network_lines: Vec<(usize, &str)> = Vec::new();
        let mut network_at = None;
        let mut channels = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: line_no, message };
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match name.trim() {
                    "network" => Section::Network,
                    "train" => Section::Train,
                    "data" => Section::Data,
                    "enroll" => Section::Enroll,
                    other => return Err(err(format!("unknown section [{other}]"))),
                };
                if section == Section::Network {
                    network_at = Some(line_no);
                }
                continue;
            }
            if section == Section::Network {
                network_lines.push((line_no, raw));
                continue;
            }
            let (key, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let t = &mut cfg.train;
            let e = &mut cfg.enroll;
            match (section, key) {
                (Section::None, _) => return Err(err(format!("{key:?} outside any section"))),
                (Section::Train, "seed") => t.seed = value(line_no, key, v)?,
                (Section::Train, "epochs") => t.epochs = value(line_no, key, v)?,
                (Section::Train, "batch") => t.batch_size = value(line_no, key, v)?,
                (Section::Train, "lr") => t.adam.lr = value(line_no, key, v)?,
                (Section::Train, "lr_factor") => t.scheduler.factor = value(line_no, key, v)?,
                (Section::Train, "patience") => t.scheduler.patience = value(line_no, key, v)?,
                (Section::Train, "min_delta") => t.scheduler.min_delta = value(line_no, key, v)?,
                (Section::Train, "min_lr") => t.scheduler.min_lr = value(line_no, key, v)?,
                (Section::Train, "val_fraction") => {
                    let f: f64 = value(line_no, key, v)?;
                    if !(f > 0.0 && f < 1.0) {
                        return Err(err(format!("val_fraction {f} must lie in (0, 1)")));
                    }
                    t.split = (1.0 - f, f);
                }
                (Section::Train, "precision") => {
                    t.precision = match v {
                        "binary" => Precision::Binary,
                        "full" => Precision::Full,
                        _ => return Err(err(format!("precision must be binary or full, got {v:?}"))),
                    }
                }
                (Section::Data, "path") => cfg.data = Some(base.join(v)),
                (Section::Data, "channels") => channels = Some((line_no, value::<usize>(line_no, key, v)?)),
                (Section::Data, "cycle_len") => {
                    if value::<usize>(line_no, key, v)? != bpnet::gait::CYCLE_LEN {
                        return Err(err(format!("cycle_len is fixed at {}", bpnet::gait::CYCLE_LEN)));
                    }
                }
                (Section::Enroll, "epochs") => e.fine_tune_epochs = value(line_no, key, v)?,
                (Section::Enroll, "lr") => e.lr = value(line_no, key, v)?,
                (Section::Enroll, "mixing") => {
                    e.user_fraction = value(line_no, key, v)?;
                    if !(e.user_fraction > 0.0 && e.user_fraction < 1.0) {
                        return Err(err(format!("mixing {v} must lie in (0, 1)")));
                    }
                }
                (Section::Enroll, "batch") => e.batch_size = value(line_no, key, v)?,
                (Section::Enroll, "min_cycles") => e.min_user_cycles = value(line_no, key, v)?,
                (Section::Enroll, "seed") => e.seed = value(line_no, key, v)?,
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        if let Some(at) = network_at {
            cfg.network = NetworkConfig::parse_lines(network_lines).map_err(|e| match e {
                Error::Config { line: 0, message } => Error::Config { line: at, message },
                e => e,
            })?;
        }
        if let Some((line, c)) = channels {
            let rows = cfg.network.input_shape().height;
            if c != rows {
                return Err(Error::Config { line, message: format!("{c} channels but the network reads {rows} sensor rows") });
            }
        }
        Ok(cfg)
    }
}
