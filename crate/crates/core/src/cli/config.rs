use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Orientation, SynthConfig};
use crate::error::{Error, Result};
use crate::model::{ConditionMode, ModelConfig};
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub st_path: Option<PathBuf>,
    pub sc_path: Option<PathBuf>,
    pub st_orientation: Orientation,
    pub sc_orientation: Orientation,
    pub st_top_k: usize,
    pub sc_top_k: usize,
    /// Seed of the gene split.
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            st_path: None,
            sc_path: None,
            st_orientation: Orientation::GenesRows,
            sc_orientation: Orientation::GenesRows,
            st_top_k: 2000,
            sc_top_k: 4000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// Reverse chains averaged per gene.
    pub draws: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { draws: 4, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub rates: Vec<f64>,
    pub threshold: f64,
    /// Seed of the thinning stream.
    pub seed: u64,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            rates: vec![0.1, 0.3, 0.5, 0.7],
            threshold: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("run") }
    }
}

/// Everything a run needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sample: SampleConfig,
    pub robustness: RobustnessConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides and resolves
    /// relative paths.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))?;
                let table: toml::Table = toml::from_str(&text).map_err(|e| {
                    Error::Config(format!("{}: {}", p.display(), e.message()))
                })?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (table, base)
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.resolve(&base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.data.st_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.sc_path.as_mut() {
            fix(p);
        }
        fix(&mut self.output.dir);
    }

    pub fn st_path(&self) -> Result<&Path> {
        required(&self.data.st_path, "data.st_path")
    }

    pub fn sc_path(&self) -> Result<&Path> {
        required(&self.data.sc_path, "data.sc_path")
    }

    pub fn bundle_dir(&self) -> PathBuf {
        self.output.dir.join("bundle")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.output.dir.join("checkpoints")
    }

    /// Applies an `--ablation` flag such as `condition=off` or `concat=off`.
    pub fn apply_ablation(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("ablation {spec:?} is not key=value")))?;
        match (k.trim(), v.trim()) {
            ("condition", v) => self.model.condition = v.parse::<ConditionMode>()?,
            ("concat", "on") => self.model.concat = true,
            ("concat", "off") => self.model.concat = false,
            _ => {
                return Err(Error::Usage(format!(
                    "unknown ablation {spec:?} (condition=off|mlp|shared-genes, concat=off)"
                )))
            }
        }
        Ok(())
    }
}

fn required<'a>(p: &'a Option<PathBuf>, field: &str) -> Result<&'a Path> {
    let p = p
        .as_deref()
        .ok_or_else(|| Error::Config(format!("{field} is required")))?;
    if !p.exists() {
        return Err(Error::Config(format!("{field}: {} does not exist", p.display())));
    }
    Ok(p)
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("--set {spec:?} is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, sections) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for s in sections {
        cur = cur
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Usage(format!("--set {key}: {s} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push(format!("  {prefix} = {other}")),
    }
}

/// Every config key with its default, one per line.
pub fn config_keys_help() -> String {
    let v = toml::Value::try_from(RunConfig::default()).expect("defaults serialize");
    let mut lines = Vec::new();
    flatten("", &v, &mut lines);
    // optional keys have no default and are absent from the serialized form
    lines.push("  data.st_path = (required)".into());
    lines.push("  data.sc_path = (required)".into());
    lines.push("  train.beta_start = (derived from train.steps)".into());
    lines.push("  train.beta_end = (derived from train.steps)".into());
    lines.sort();
    format!(
        "Config keys (TOML sections; override with --set key=value):\n{}",
        lines.join("\n")
    )
}

/// Manifest written next to a synthetic dataset.
pub fn synth_manifest(cfg: &SynthConfig) -> String {
    let mut run = RunConfig::default();
    run.data.st_path = Some(PathBuf::from("st.tsv"));
    run.data.sc_path = Some(PathBuf::from("sc.tsv"));
    run.data.seed = cfg.seed;
    run.model = ModelConfig::bench();
    run.train = TrainConfig {
        seed: cfg.seed,
        ..TrainConfig::desk()
    };
    run.sample.seed = cfg.seed;
    run.robustness.seed = cfg.seed;
    toml::to_string(&SynthSection {
        data: &run.data,
        model: &run.model,
        train: &run.train,
        sample: &run.sample,
        robustness: &run.robustness,
        output: &run.output,
    })
    .expect("manifest serializes")
}

#[derive(Serialize)]
struct SynthSection<'a> {
    data: &'a DataConfig,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    sample: &'a SampleConfig,
    robustness: &'a RobustnessConfig,
    output: &'a OutputConfig,
}
