use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{synth_manifest, RunConfig};
use super::pipeline::{build_bundle, load_raw, robustness_table, robustness_text};
use super::{Command, ConfigArgs};
use crate::data::{load_table, synthesize, Bundle, Orientation, SynthConfig};
use crate::error::{Error, Result};
use crate::evalmetrics::{cluster_order, comparison_text, MetricsReport};
use crate::model::parameter_count;
use crate::sampling::{destandardize, Sampler};
use crate::training::{fit, resume, Checkpoint};

pub(super) fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Preprocess { cfg } => preprocess(&load(&cfg)?),
        Command::Train { cfg, ablation, resume } => {
            let mut run = load(&cfg)?;
            for a in &ablation {
                run.apply_ablation(a)?;
            }
            train(&run, resume.as_deref())
        }
        Command::Predict {
            cfg,
            checkpoint,
            genes,
            counts,
            out,
        } => predict(&load(&cfg)?, checkpoint.as_deref(), &genes, counts, out.as_deref()),
        Command::Evaluate {
            truth,
            preds,
            labels,
            out,
            cluster_order,
        } => evaluate(&truth, &preds, &labels, &out, cluster_order),
        Command::Robustness { cfg, checkpoint, rates } => robustness(&load(&cfg)?, checkpoint.as_deref(), &rates),
        Command::Synth {
            out,
            genes,
            spots,
            cells,
            sc_only_genes,
            rank,
            noise,
            seed,
        } => {
            let d = SynthConfig::default();
            let cfg = SynthConfig {
                genes: genes.unwrap_or(d.genes),
                spots: spots.unwrap_or(d.spots),
                cells: cells.unwrap_or(d.cells),
                sc_only_genes: sc_only_genes.unwrap_or(d.sc_only_genes),
                rank: rank.unwrap_or(d.rank),
                noise: noise.unwrap_or(d.noise),
                seed: seed.unwrap_or(d.seed),
                ..d
            };
            synth(&cfg, &out)
        }
    }
}

fn load(args: &ConfigArgs) -> Result<RunConfig> {
    RunConfig::load(args.config.as_deref(), &args.set)
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_bundle(run: &RunConfig) -> Result<Bundle> {
    let dir = run.bundle_dir();
    if !dir.join("st.tsv").exists() {
        return Err(Error::Data(format!(
            "no preprocessed bundle in {} (run `preprocess` first)",
            dir.display()
        )));
    }
    Bundle::read(&dir)
}

fn default_checkpoint(run: &RunConfig, given: Option<&Path>) -> PathBuf {
    if let Some(p) = given {
        return p.to_path_buf();
    }
    let best = run.checkpoint_dir().join("best.ckpt");
    if best.exists() {
        best
    } else {
        run.checkpoint_dir().join("latest.ckpt")
    }
}

fn preprocess(run: &RunConfig) -> Result<()> {
    let bundle = build_bundle(run)?;
    let dir = run.bundle_dir();
    bundle.write(&dir)?;
    print!("{}", bundle.report.to_text());
    log::info!("bundle written to {}", dir.display());
    Ok(())
}

fn train(run: &RunConfig, from: Option<&Path>) -> Result<()> {
    let bundle = read_bundle(run)?;
    let result = match from {
        Some(p) => {
            let ckpt = Checkpoint::load(p)?;
            if ckpt.model.clone().with_io(0, 0) != run.model.clone().with_io(0, 0) {
                log::warn!("model section differs from the checkpoint; using the checkpoint's");
            }
            log::info!("resuming at iteration {}", ckpt.iteration);
            resume(&bundle, &ckpt, &run.train)?
        }
        None => fit(&bundle, &run.model, &run.train)?,
    };
    let dir = run.checkpoint_dir();
    result.write(&dir)?;
    println!("parameters\t{}", parameter_count(&result.latest.model));
    println!("iterations\t{}", result.latest.iteration);
    if let Some(last) = result.log.last() {
        println!("train_loss\t{:.6}", last.train_loss);
        println!("val_loss\t{:.6}", last.val_loss);
    }
    println!("best_val_loss\t{:.6}", result.latest.best_val);
    log::info!("checkpoints written to {}", dir.display());
    Ok(())
}

fn predict(run: &RunConfig, checkpoint: Option<&Path>, genes: &[String], counts: bool, out: Option<&Path>) -> Result<()> {
    let bundle = read_bundle(run)?;
    let ckpt_path = default_checkpoint(run, checkpoint);
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let genes: Vec<String> = if genes.is_empty() {
        bundle.split.test.clone()
    } else {
        genes.to_vec()
    };
    for g in &genes {
        if bundle.sc.position(g).is_none() {
            return Err(Error::Request(format!("gene {g:?} is not in the SC matrix")));
        }
    }
    let t0 = Instant::now();
    let sampler = Sampler::new(&ckpt, &bundle)?;
    let z = sampler.predict(&genes, bundle.st.col_ids(), run.sample.draws, run.sample.seed)?;
    let pred = destandardize(&z, &ckpt.st_norm, counts)?;
    let secs = t0.elapsed().as_secs_f64();

    let out = out.map(Path::to_path_buf).unwrap_or_else(|| run.output.dir.join("predictions.tsv"));
    if let Some(parent) = out.parent() {
        mkdir(parent)?;
    }
    pred.write_tsv(&out)?;
    let summary = format!(
        "checkpoint\t{}\ngenes\t{}\nspots\t{}\ndraws\t{}\nseed\t{}\nunits\t{}\nwall_time_s\t{:.3}\n",
        ckpt_path.display(),
        pred.n_genes(),
        pred.n_cols(),
        run.sample.draws,
        run.sample.seed,
        if counts { "counts" } else { "log1p" },
        secs
    );
    write(&sidecar(&out), &summary)?;
    println!("{}", out.display());
    Ok(())
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".summary.txt");
    PathBuf::from(s)
}

fn evaluate(truth: &Path, preds: &[PathBuf], labels: &[String], out: &Path, order: bool) -> Result<()> {
    if !labels.is_empty() && labels.len() != preds.len() {
        return Err(Error::Usage(format!(
            "{} labels for {} prediction files",
            labels.len(),
            preds.len()
        )));
    }
    let truth = load_table(truth, Orientation::GenesRows)?;
    mkdir(out)?;
    let mut reports = Vec::with_capacity(preds.len());
    for (i, p) in preds.iter().enumerate() {
        let label = match labels.get(i) {
            Some(l) => l.clone(),
            None => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("method{i}")),
        };
        let pred = load_table(p, Orientation::GenesRows)?;
        let report = MetricsReport::evaluate(&label, &truth, &pred)?;
        write(&out.join(format!("{label}.metrics.tsv")), &report.to_text())?;
        write(&out.join(format!("{label}.metrics.json")), &report.to_json())?;
        if order {
            let co = cluster_order(pred.values())?;
            let mut s = String::from("position\tgene\n");
            for (k, &i) in co.order.iter().enumerate() {
                s.push_str(&format!("{k}\t{}\n", pred.gene_ids()[i]));
            }
            write(&out.join(format!("{label}.cluster_order.tsv")), &s)?;
        }
        reports.push(report);
    }
    if reports.len() >= 2 {
        let table = comparison_text(&reports)?;
        write(&out.join("comparison.tsv"), &table)?;
        print!("{table}");
    } else {
        let a = &reports[0].aggregates;
        println!(
            "{}\tPCC {:.4}\tSSIM {:.4}\tRMSE {:.4}\tJS {:.4}",
            reports[0].method, a.pcc.mean, a.ssim.mean, a.rmse.mean, a.js.mean
        );
    }
    Ok(())
}

fn robustness(run: &RunConfig, checkpoint: Option<&Path>, rates: &[f64]) -> Result<()> {
    let bundle = read_bundle(run)?;
    let ckpt = Checkpoint::load(&default_checkpoint(run, checkpoint))?;
    let (st_raw, _) = load_raw(run)?;
    let rates = if rates.is_empty() { &run.robustness.rates[..] } else { rates };
    let rows = robustness_table(
        &ckpt,
        &bundle,
        &st_raw,
        rates,
        run.sample.draws,
        run.sample.seed,
        run.robustness.seed,
        run.robustness.threshold,
    )?;
    let text = robustness_text(&rows);
    mkdir(&run.output.dir)?;
    write(&run.output.dir.join("robustness.tsv"), &text)?;
    print!("{text}");
    Ok(())
}

fn synth(cfg: &SynthConfig, out: &Path) -> Result<()> {
    let d = synthesize(cfg)?;
    mkdir(out)?;
    d.st.write_tsv(&out.join("st.tsv"))?;
    d.sc.write_tsv(&out.join("sc.tsv"))?;
    write(&out.join("run.toml"), &synth_manifest(cfg))?;
    let params = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    write(&out.join("synth.toml"), &params)?;
    println!("{}", out.display());
    Ok(())
}
