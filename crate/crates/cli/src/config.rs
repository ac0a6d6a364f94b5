//! INI training configuration: `[train]`, `[model]` and `[data]` sections of
//! `key = value` lines. Command-line flags take precedence over the file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use spikesr::model::{ExecMode, Variant};

use crate::commands::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainFile {
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub val_fraction: Option<f64>,
    pub variant: Option<Variant>,
    pub mode: Option<ExecMode>,
    pub dt_ms: Option<f64>,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

pub fn load(path: &Path) -> Result<TrainFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse(&text, base).map_err(|m| CliError::Usage(format!("{}: {m}", path.display())))
}

fn value<T: FromStr>(section: &str, key: &str, raw: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| format!("[{section}] {key} = '{raw}': {e}"))
}

/// Parses config text; relative paths resolve against `base`.
pub fn parse(text: &str, base: &Path) -> Result<TrainFile, String> {
    let ini = Ini::load_from_str(text).map_err(|e| e.to_string())?;
    let mut cfg = TrainFile::default();
    for (section, props) in ini.iter() {
        let Some(section) = section else {
            if let Some((k, _)) = props.iter().next() {
                return Err(format!("key '{k}' outside of any section"));
            }
            continue;
        };
        for (key, raw) in props.iter() {
            let raw = raw.trim();
            match (section, key) {
                ("train", "epochs") => cfg.epochs = Some(value(section, key, raw)?),
                ("train", "batch") => cfg.batch = Some(value(section, key, raw)?),
                ("train", "lr") => cfg.lr = Some(value(section, key, raw)?),
                ("train", "seed") => cfg.seed = Some(value(section, key, raw)?),
                ("train", "steps") => cfg.steps = Some(value(section, key, raw)?),
                ("train", "val_fraction") => cfg.val_fraction = Some(value(section, key, raw)?),
                ("model", "variant") => cfg.variant = Some(value(section, key, raw)?),
                ("model", "mode") => cfg.mode = Some(value(section, key, raw)?),
                ("model", "dt_ms") => cfg.dt_ms = Some(value(section, key, raw)?),
                ("data", "manifest") => cfg.manifest = Some(base.join(raw)),
                ("data", "checkpoint") => cfg.checkpoint = Some(base.join(raw)),
                ("data", "report") => cfg.report = Some(base.join(raw)),
                ("train" | "model" | "data", _) => {
                    return Err(format!("unknown key '{key}' in [{section}]"))
                }
                _ => return Err(format!("unknown section [{section}]")),
            }
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_all_sections() {
        let text = "\
[train]
epochs = 3
batch = 4
lr = 0.05
seed = 9
steps = 32
val_fraction = 0.25

[model]
variant = dual_layer
mode = joint
dt_ms = 1.0

[data]
manifest = corpus/manifest.csv
checkpoint = /abs/model.evsrw
";
        let c = parse(text, Path::new("/cfg")).unwrap();
        assert_eq!(c.epochs, Some(3));
        assert_eq!(c.lr, Some(0.05));
        assert_eq!(c.variant, Some(Variant::DualLayer));
        assert_eq!(c.mode, Some(ExecMode::Joint));
        assert_eq!(c.manifest, Some(PathBuf::from("/cfg/corpus/manifest.csv")));
        assert_eq!(c.checkpoint, Some(PathBuf::from("/abs/model.evsrw")));
        assert_eq!(c.report, None);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(parse("[train]\nepochz = 3\n", Path::new("")).is_err());
        assert!(parse("[extra]\na = 1\n", Path::new("")).is_err());
        assert!(parse("[train]\nepochs = many\n", Path::new("")).is_err());
        assert!(parse("[model]\nvariant = tiny\n", Path::new("")).is_err());
        assert!(parse("epochs = 3\n", Path::new("")).is_err());
    }

    #[test]
    fn empty_file_sets_nothing() {
        assert_eq!(parse("", Path::new("")).unwrap(), TrainFile::default());
    }
}
