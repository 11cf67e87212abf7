//! Self-describing binary checkpoint.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic     8 bytes  "SPDITCKP"
//! version   u32
//! sections  u32
//! section*  name_len u32, name (UTF-8), payload_len u64, payload
//! ```
//!
//! Sections, in this order: `config` (TOML text), `schedule`, `params`,
//! `adam`, `norm`, `alignment` (JSON), `split` (JSON), `state`, `rng`.
//! Tensors are stored as `name, ndim u32, dims u64…, values f64…`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::config::TrainConfig;
use crate::data::{GeneAlignment, GeneStats, SplitSpec};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelParams};
use crate::numerics::Tensor;
use crate::rng::StreamState;
use crate::schedule::Schedule;

pub const MAGIC: &[u8; 8] = b"SPDITCKP";
pub const VERSION: u32 = 1;

/// Per-gene normalization statistics of one modality.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormStats {
    pub genes: Vec<String>,
    pub stats: Vec<GeneStats>,
}

impl NormStats {
    pub fn get(&self, gene: &str) -> Option<GeneStats> {
        self.genes.iter().position(|g| g == gene).map(|i| self.stats[i])
    }
}

/// Generator positions for the training streams.
#[derive(Clone, Debug, PartialEq)]
pub struct RngStates {
    pub batch: StreamState,
    pub mask: StreamState,
    pub noise: StreamState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub schedule: Schedule,
    pub params: ModelParams,
    pub adam: AdamState,
    pub st_norm: NormStats,
    pub sc_norm: NormStats,
    pub alignment: GeneAlignment,
    pub split: SplitSpec,
    pub iteration: u64,
    pub last_eval: u64,
    pub best_iteration: u64,
    pub best_val: f64,
    pub rng: RngStates,
}

#[derive(Serialize, Deserialize)]
struct ConfigSection {
    model: ModelConfig,
    train: TrainConfig,
}

impl Checkpoint {
    pub fn model(&self) -> Result<Model> {
        Model::new(self.model.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut sections: Vec<(&str, Vec<u8>)> = Vec::new();

        let config = toml::to_string(&ConfigSection {
            model: self.model.clone(),
            train: self.train.clone(),
        })
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
        sections.push(("config", config.into_bytes()));

        let mut w = Writer::default();
        w.u64(self.schedule.steps() as u64);
        for arr in [
            self.schedule.betas(),
            self.schedule.alpha_hats(),
            self.schedule.alpha_bars(),
            self.schedule.posterior_vars(),
        ] {
            w.f64s(arr);
        }
        sections.push(("schedule", w.0));

        let mut w = Writer::default();
        w.tensors(self.params.iter());
        sections.push(("params", w.0));

        let mut w = Writer::default();
        w.u64(self.adam.step);
        w.tensors(self.adam.m.iter());
        w.tensors(self.adam.v.iter());
        sections.push(("adam", w.0));

        let mut w = Writer::default();
        for norm in [&self.st_norm, &self.sc_norm] {
            w.u64(norm.genes.len() as u64);
            for (g, s) in norm.genes.iter().zip(&norm.stats) {
                w.str(g);
                w.f64(s.mean);
                w.f64(s.std);
            }
        }
        sections.push(("norm", w.0));

        sections.push(("alignment", json(&self.alignment)?));
        sections.push(("split", json(&self.split)?));

        let mut w = Writer::default();
        w.u64(self.iteration);
        w.u64(self.last_eval);
        w.u64(self.best_iteration);
        w.f64(self.best_val);
        sections.push(("state", w.0));

        let mut w = Writer::default();
        for s in [&self.rng.batch, &self.rng.mask, &self.rng.noise] {
            w.0.extend_from_slice(&s.seed);
            w.u64(s.stream);
            w.0.extend_from_slice(&s.word_pos.to_le_bytes());
        }
        sections.push(("rng", w.0));

        let mut out = Writer::default();
        out.0.extend_from_slice(MAGIC);
        out.u32(VERSION);
        out.u32(sections.len() as u32);
        for (name, payload) in sections {
            out.str(name);
            out.u64(payload.len() as u64);
            out.0.extend_from_slice(&payload);
        }
        Ok(out.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let count = r.u32()?;
        let mut sections = BTreeMap::new();
        for _ in 0..count {
            let name = r.str()?;
            let len = r.u64()? as usize;
            sections.insert(name, r.take(len)?);
        }
        let section = |name: &str| {
            sections
                .get(name)
                .map(|b| Reader { buf: b, pos: 0 })
                .ok_or_else(|| Error::Checkpoint(format!("missing section {name}")))
        };

        let cfg_text = std::str::from_utf8(section("config")?.buf)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let cfg: ConfigSection =
            toml::from_str(cfg_text).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let mut s = section("schedule")?;
        let steps = s.u64()? as usize;
        let betas = s.f64s(steps)?;
        let schedule = Schedule::from_betas(betas)?;

        let params = ModelParams::from_map(section("params")?.tensors()?);
        params.check_layout(&cfg.model)?;

        let mut a = section("adam")?;
        let adam = AdamState {
            step: a.u64()?,
            m: a.tensors()?,
            v: a.tensors()?,
        };

        let mut n = section("norm")?;
        let mut norms = Vec::new();
        for _ in 0..2 {
            let count = n.u64()? as usize;
            let mut norm = NormStats::default();
            for _ in 0..count {
                norm.genes.push(n.str()?);
                norm.stats.push(GeneStats {
                    mean: n.f64()?,
                    std: n.f64()?,
                });
            }
            norms.push(norm);
        }
        let sc_norm = norms.pop().unwrap_or_default();
        let st_norm = norms.pop().unwrap_or_default();

        let alignment = from_json(section("alignment")?.buf)?;
        let split = from_json(section("split")?.buf)?;

        let mut st = section("state")?;
        let (iteration, last_eval, best_iteration, best_val) = (st.u64()?, st.u64()?, st.u64()?, st.f64()?);

        let mut rr = section("rng")?;
        let mut states = Vec::new();
        for _ in 0..3 {
            let mut seed = [0u8; 32];
            seed.copy_from_slice(rr.take(32)?);
            let stream = rr.u64()?;
            let word_pos = u128::from_le_bytes(rr.take(16)?.try_into().expect("16 bytes"));
            states.push(StreamState { seed, stream, word_pos });
        }
        let noise = states.pop().expect("three states");
        let mask = states.pop().expect("three states");
        let batch = states.pop().expect("three states");

        Ok(Checkpoint {
            model: cfg.model,
            train: cfg.train,
            schedule,
            params,
            adam,
            st_norm,
            sc_norm,
            alignment,
            split,
            iteration,
            last_eval,
            best_iteration,
            best_val,
            rng: RngStates { batch, mask, noise },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    serde_json::to_vec(v).map_err(|e| Error::Checkpoint(e.to_string()))
}

fn from_json<T: for<'de> Deserialize<'de>>(b: &[u8]) -> Result<T> {
    serde_json::from_slice(b).map_err(|e| Error::Checkpoint(e.to_string()))
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.f64(*x);
        }
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn tensors<'a>(&mut self, items: impl ExactSizeIterator<Item = (&'a String, &'a Tensor)>) {
        self.u32(items.len() as u32);
        for (name, t) in items {
            self.str(name);
            self.u32(t.shape().len() as u32);
            for d in t.shape() {
                self.u64(*d as u64);
            }
            self.f64s(t.data());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn tensors(&mut self) -> Result<BTreeMap<String, Tensor>> {
        let count = self.u32()?;
        let mut out = BTreeMap::new();
        for _ in 0..count {
            let name = self.str()?;
            let ndim = self.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| self.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = shape.iter().product();
            let data = self.f64s(n)?;
            out.insert(name, Tensor::new(shape, data)?);
        }
        Ok(out)
    }
}
