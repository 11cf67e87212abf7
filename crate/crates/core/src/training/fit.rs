use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;

use super::adam::AdamState;
use super::checkpoint::{Checkpoint, NormStats, RngStates};
use super::config::TrainConfig;
use super::loss::{batch_loss, draw_example, Example};
use crate::data::{Bundle, ExpressionMatrix};
use crate::error::{Error, Result};
use crate::model::forward::{self, Bound};
use crate::model::{Model, ModelConfig};
use crate::numerics::Graph;
use crate::rng::{self, StreamRng, StreamState};
use crate::schedule::Schedule;

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: u64,
    /// Mean training loss since the previous row (NaN if no step ran).
    pub train_loss: f64,
    pub val_loss: f64,
}

pub fn log_text(rows: &[LogRow]) -> String {
    let mut s = String::from("iter\ttrain_loss\tval_loss\n");
    for r in rows {
        let _ = writeln!(s, "{}\t{:.6}\t{:.6}", r.iteration, r.train_loss, r.val_loss);
    }
    s
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub latest: Checkpoint,
    /// Best validation checkpoint reached during this run, if it improved on
    /// the value carried in by a resumed checkpoint.
    pub best: Option<Checkpoint>,
    pub log: Vec<LogRow>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

impl FitResult {
    /// Writes `latest.ckpt`, `best.ckpt` (when improved) and `train.log`
    /// into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        self.latest.save(&dir.join("latest.ckpt"))?;
        if let Some(best) = &self.best {
            best.save(&dir.join("best.ckpt"))?;
        }
        let log = dir.join("train.log");
        std::fs::write(&log, log_text(&self.log)).map_err(|e| Error::io(log.display().to_string(), e))
    }
}

fn norm_of(m: &ExpressionMatrix) -> NormStats {
    NormStats {
        genes: m.gene_ids().to_vec(),
        stats: m.stats().to_vec(),
    }
}

/// Training loop state.
pub struct Trainer<'a> {
    bundle: &'a Bundle,
    cfg: TrainConfig,
    model: Model,
    schedule: Schedule,
    adam: AdamState,
    batch_rng: StreamRng,
    mask_rng: StreamRng,
    noise_rng: StreamRng,
    iteration: u64,
    last_eval: u64,
    best: Option<Checkpoint>,
    best_val: f64,
    best_iteration: u64,
    pub log: Vec<LogRow>,
    pub step_losses: Vec<f64>,
}

impl<'a> Trainer<'a> {
    pub fn new(bundle: &'a Bundle, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model_cfg = model_cfg.clone().with_io(bundle.st.n_cols(), bundle.sc.n_cols());
        let model = Model::init(model_cfg)?;
        let adam = AdamState::new(model.params());
        Ok(Trainer {
            bundle,
            cfg: cfg.clone(),
            schedule: cfg.schedule()?,
            adam,
            model,
            batch_rng: rng::stream(cfg.seed, rng::BATCH),
            mask_rng: rng::stream(cfg.seed, rng::MASK),
            noise_rng: rng::stream(cfg.seed, rng::NOISE),
            iteration: 0,
            last_eval: u64::MAX,
            best: None,
            best_val: f64::INFINITY,
            best_iteration: 0,
            log: Vec::new(),
            step_losses: Vec::new(),
        })
    }

    /// Continues from `ckpt`. Only `iterations` and `eval_every` of `cfg`
    /// may differ from the checkpointed configuration.
    pub fn resume(bundle: &'a Bundle, ckpt: &Checkpoint, cfg: &TrainConfig) -> Result<Self> {
        let same = TrainConfig {
            iterations: ckpt.train.iterations,
            eval_every: ckpt.train.eval_every,
            ..cfg.clone()
        };
        if same != ckpt.train {
            return Err(Error::Config(
                "resume may only change train.iterations and train.eval_every".into(),
            ));
        }
        if (ckpt.model.spots, ckpt.model.cells) != (bundle.st.n_cols(), bundle.sc.n_cols()) {
            return Err(Error::Checkpoint("checkpoint does not match the dataset shape".into()));
        }
        let mut t = Trainer::new(bundle, &ckpt.model, cfg)?;
        t.model = ckpt.model()?;
        t.adam = ckpt.adam.clone();
        t.batch_rng = ckpt.rng.batch.restore();
        t.mask_rng = ckpt.rng.mask.restore();
        t.noise_rng = ckpt.rng.noise.restore();
        t.iteration = ckpt.iteration;
        t.last_eval = ckpt.last_eval;
        t.best_val = ckpt.best_val;
        t.best_iteration = ckpt.best_iteration;
        Ok(t)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.config().clone(),
            train: self.cfg.clone(),
            schedule: self.schedule.clone(),
            params: self.model.params().clone(),
            adam: self.adam.clone(),
            st_norm: norm_of(&self.bundle.st),
            sc_norm: norm_of(&self.bundle.sc),
            alignment: self.bundle.alignment.clone(),
            split: self.bundle.split.clone(),
            iteration: self.iteration,
            last_eval: self.last_eval,
            best_iteration: self.best_iteration,
            best_val: self.best_val,
            rng: RngStates {
                batch: StreamState::capture(&self.batch_rng),
                mask: StreamState::capture(&self.mask_rng),
                noise: StreamState::capture(&self.noise_rng),
            },
        }
    }

    fn next_batch(&mut self) -> Result<Vec<Example>> {
        let train = &self.bundle.split.train;
        let k = self.cfg.batch_size.min(train.len());
        let mut picks = index::sample(&mut self.batch_rng, train.len(), k).into_vec();
        picks.sort_unstable();
        picks
            .into_iter()
            .map(|i| {
                draw_example(
                    self.bundle,
                    &train[i],
                    &self.cfg,
                    &self.schedule,
                    &mut self.mask_rng,
                    &mut self.noise_rng,
                )
            })
            .collect()
    }

    /// One optimizer step; returns the batch loss.
    pub fn step(&mut self) -> Result<f64> {
        let batch = self.next_batch()?;
        let cond_matrix = self.bundle.condition_matrix(self.model.config().condition)?;
        let cfg = self.model.config().clone();
        let mut g = Graph::new();
        let b = Bound::new(&mut g, self.model.params());
        let xc = g.leaf(cond_matrix);
        let cond = forward::condition_embed(&mut g, &b, &cfg, xc)?;
        let loss = batch_loss(&mut g, &b, &cfg, &batch, cond)?;
        let value = g.value(loss).data()[0];
        if !value.is_finite() {
            let genes: Vec<&str> = batch.iter().map(|e| e.gene.as_str()).collect();
            let ts: Vec<usize> = batch.iter().map(|e| e.t).collect();
            return Err(Error::Numeric(format!(
                "non-finite loss at iteration {}: genes {genes:?}, steps {ts:?}",
                self.iteration + 1
            )));
        }
        let grads = g.backward(loss)?;
        let by_name: BTreeMap<String, _> = b.iter().map(|(n, v)| (n.clone(), grads.get(*v))).collect();
        self.adam.update(self.model.params_mut(), &by_name, &self.cfg)?;
        self.iteration += 1;
        Ok(value)
    }

    /// Validation loss with a freshly seeded stream, so values are
    /// comparable across iterations.
    pub fn validation_loss(&self) -> Result<f64> {
        dataset_loss(
            &self.model,
            &self.schedule,
            self.bundle,
            &self.bundle.split.val,
            &self.cfg,
            rng::VALIDATION,
        )
    }

    fn evaluate(&mut self, train_acc: &mut Vec<f64>) -> Result<()> {
        let val = self.validation_loss()?;
        let train_loss = if train_acc.is_empty() {
            f64::NAN
        } else {
            train_acc.iter().sum::<f64>() / train_acc.len() as f64
        };
        train_acc.clear();
        self.log.push(LogRow {
            iteration: self.iteration,
            train_loss,
            val_loss: val,
        });
        self.last_eval = self.iteration;
        if val < self.best_val {
            self.best_val = val;
            self.best_iteration = self.iteration;
            self.best = Some(self.checkpoint());
        }
        log::info!("iter {} train {:.4} val {:.4}", self.iteration, train_loss, val);
        Ok(())
    }

    /// Trains until the configured iteration count.
    pub fn run(mut self) -> Result<FitResult> {
        let mut acc = Vec::new();
        while self.iteration < self.cfg.iterations {
            let l = self.step()?;
            acc.push(l);
            self.step_losses.push(l);
            if self.iteration % self.cfg.eval_every == 0 {
                self.evaluate(&mut acc)?;
            }
        }
        if self.last_eval != self.iteration {
            self.evaluate(&mut acc)?;
        }
        Ok(FitResult {
            latest: self.checkpoint(),
            best: self.best.take(),
            log: self.log,
            step_losses: self.step_losses,
        })
    }
}

/// Mean masked ε-loss over `genes`, with `val_draws` draws per gene from the
/// stream `stream` (re-seeded on every call).
pub fn dataset_loss(
    model: &Model,
    schedule: &Schedule,
    bundle: &Bundle,
    genes: &[String],
    cfg: &TrainConfig,
    stream: &str,
) -> Result<f64> {
    let mut mask_rng = rng::stream(cfg.seed, &format!("{stream}.mask"));
    let mut noise_rng = rng::stream(cfg.seed, &format!("{stream}.noise"));
    let mut examples = Vec::with_capacity(genes.len() * cfg.val_draws);
    for g in genes {
        for _ in 0..cfg.val_draws {
            examples.push(draw_example(bundle, g, cfg, schedule, &mut mask_rng, &mut noise_rng)?);
        }
    }
    let mcfg = model.config();
    let mut g = Graph::new();
    let b = Bound::new(&mut g, model.params());
    let xc = g.leaf(bundle.condition_matrix(mcfg.condition)?);
    let cond = forward::condition_embed(&mut g, &b, mcfg, xc)?;
    let loss = batch_loss(&mut g, &b, mcfg, &examples, cond)?;
    Ok(g.value(loss).data()[0])
}

/// Trains from scratch.
pub fn fit(bundle: &Bundle, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<FitResult> {
    Trainer::new(bundle, model_cfg, cfg)?.run()
}

/// Continues training from `ckpt` up to `cfg.iterations`.
pub fn resume(bundle: &Bundle, ckpt: &Checkpoint, cfg: &TrainConfig) -> Result<FitResult> {
    Trainer::resume(bundle, ckpt, cfg)?.run()
}
