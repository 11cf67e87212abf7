use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::align::{align, split, GeneAlignment, SplitSpec};
use super::matrix::{parse_parts, ExpressionMatrix, GeneStats, Orientation};
use super::preprocess::{dropout_rate, preprocess, standardize_stats};
use crate::error::{Error, Result};
use crate::model::ConditionMode;
use crate::numerics::Tensor;

/// log1p values closer to zero than this count as dropouts when rebuilding
/// masks from standardized data.
const ZERO_TOL: f64 = 1e-9;

/// Sizes and sparsity of a processed dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleReport {
    /// ST genes kept.
    pub n: usize,
    /// ST spots.
    pub p: usize,
    /// SC genes kept.
    pub m: usize,
    /// SC cells.
    pub q: usize,
    pub shared: usize,
    pub sc_unique: usize,
    pub st_dropout: f64,
    pub sc_dropout: f64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl BundleReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let rows: [(&str, String); 11] = [
            ("st_genes", self.n.to_string()),
            ("st_spots", self.p.to_string()),
            ("sc_genes", self.m.to_string()),
            ("sc_cells", self.q.to_string()),
            ("shared_genes", self.shared.to_string()),
            ("sc_unique_genes", self.sc_unique.to_string()),
            ("st_dropout", format!("{:.4}", self.st_dropout)),
            ("sc_dropout", format!("{:.4}", self.sc_dropout)),
            ("train_genes", self.train.to_string()),
            ("val_genes", self.val.to_string()),
            ("test_genes", self.test.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k}\t{v}");
        }
        s
    }
}

/// Preprocessed, aligned and split ST/SC pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    /// Standardized ST matrix (genes × spots).
    pub st: ExpressionMatrix,
    /// Standardized SC matrix (genes × cells).
    pub sc: ExpressionMatrix,
    pub alignment: GeneAlignment,
    pub split: SplitSpec,
    pub report: BundleReport,
}

impl Bundle {
    pub fn build(
        st_raw: &ExpressionMatrix,
        sc_raw: &ExpressionMatrix,
        st_top_k: usize,
        sc_top_k: usize,
        seed: u64,
    ) -> Result<Self> {
        let st = preprocess(st_raw, st_top_k)?;
        let sc = preprocess(sc_raw, sc_top_k)?;
        let alignment = align(&st, &sc)?;
        let split = split(&alignment, seed)?;
        let report = BundleReport {
            n: st.n_genes(),
            p: st.n_cols(),
            m: sc.n_genes(),
            q: sc.n_cols(),
            shared: alignment.shared.len(),
            sc_unique: alignment.sc_unique.len(),
            st_dropout: dropout_rate(st_raw),
            sc_dropout: dropout_rate(sc_raw),
            train: split.train.len(),
            val: split.val.len(),
            test: split.test.len(),
        };
        Ok(Bundle {
            st,
            sc,
            alignment,
            split,
            report,
        })
    }

    /// Same bundle with the ST side replaced by a fresh standardization of
    /// `st_raw`, restricted to the genes already in the bundle. Genes are
    /// never dropped, so all-zero rows are kept with a floored deviation.
    pub fn with_st_raw(&self, st_raw: &ExpressionMatrix) -> Result<Self> {
        let raw = st_raw.select_genes(self.st.gene_ids())?;
        if raw.col_ids() != self.st.col_ids() {
            return Err(Error::Data("spot ids differ from the processed bundle".into()));
        }
        let c = raw.n_cols();
        let mut data = Vec::with_capacity(raw.n_genes() * c);
        let mut stats = Vec::with_capacity(raw.n_genes());
        for i in 0..raw.n_genes() {
            let logged: Vec<f64> = raw.row(i).iter().map(|v| v.ln_1p()).collect();
            let s = standardize_stats(&logged);
            data.extend(logged.iter().map(|v| (v - s.mean) / s.std));
            stats.push(s);
        }
        let st = ExpressionMatrix::normalized(
            raw.gene_ids().to_vec(),
            raw.col_ids().to_vec(),
            Tensor::matrix(raw.n_genes(), c, data)?,
            stats,
        )?;
        Ok(Bundle {
            st,
            report: BundleReport {
                st_dropout: super::dropout_rate(st_raw),
                ..self.report.clone()
            },
            ..self.clone()
        })
    }

    fn st_index(&self, gene: &str) -> Result<usize> {
        self.st
            .position(gene)
            .ok_or_else(|| Error::Request(format!("gene {gene:?} is not in the ST matrix")))
    }

    fn sc_index(&self, gene: &str) -> Result<usize> {
        self.sc
            .position(gene)
            .ok_or_else(|| Error::Request(format!("gene {gene:?} is not in the SC matrix")))
    }

    /// Standardized ST vector of a shared gene.
    pub fn st_row(&self, gene: &str) -> Result<&[f64]> {
        Ok(self.st.row(self.st_index(gene)?))
    }

    /// Standardized SC vector of any SC gene.
    pub fn sc_row(&self, gene: &str) -> Result<&[f64]> {
        Ok(self.sc.row(self.sc_index(gene)?))
    }

    /// log1p-space ST vector with dropouts snapped back to exact zeros, for
    /// mask construction.
    pub fn mask_source(&self, gene: &str) -> Result<Vec<f64>> {
        let i = self.st_index(gene)?;
        let s = self.st.stats()[i];
        Ok(self
            .st
            .row(i)
            .iter()
            .map(|z| {
                let v = z * s.std + s.mean;
                if v.abs() < ZERO_TOL {
                    0.0
                } else {
                    v
                }
            })
            .collect())
    }

    /// SC matrix seen by the condition encoder.
    pub fn condition_matrix(&self, mode: ConditionMode) -> Result<Tensor> {
        match mode {
            ConditionMode::SharedGenes => Ok(self
                .sc
                .select_genes(&self.alignment.shared)?
                .values()
                .clone()),
            _ => Ok(self.sc.values().clone()),
        }
    }

    /// Test-gene ST values in log1p space.
    pub fn truth_log1p(&self) -> Result<ExpressionMatrix> {
        self.st.select_genes(&self.split.test)?.to_log1p()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        self.st.write_tsv(&dir.join("st.tsv"))?;
        self.sc.write_tsv(&dir.join("sc.tsv"))?;
        write_file(&dir.join("st_stats.tsv"), &stats_text(&self.st))?;
        write_file(&dir.join("sc_stats.tsv"), &stats_text(&self.sc))?;
        write_file(&dir.join("alignment.json"), &to_json(&self.alignment)?)?;
        write_file(&dir.join("split.json"), &to_json(&self.split)?)?;
        write_file(&dir.join("report.json"), &to_json(&self.report)?)?;
        write_file(&dir.join("report.txt"), &self.report.to_text())?;
        self.truth_log1p()?.write_tsv(&dir.join("truth.tsv"))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let st = read_normalized(dir, "st")?;
        let sc = read_normalized(dir, "sc")?;
        let alignment: GeneAlignment = from_json(&dir.join("alignment.json"))?;
        let split: SplitSpec = from_json(&dir.join("split.json"))?;
        let report: BundleReport = from_json(&dir.join("report.json"))?;
        Ok(Bundle {
            st,
            sc,
            alignment,
            split,
            report,
        })
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Error::Data(e.to_string()))
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_file(path)?).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

fn stats_text(m: &ExpressionMatrix) -> String {
    let mut s = String::from("gene\tmean\tstd\n");
    for (g, st) in m.gene_ids().iter().zip(m.stats()) {
        let _ = writeln!(s, "{g}\t{}\t{}", st.mean, st.std);
    }
    s
}

fn read_normalized(dir: &Path, name: &str) -> Result<ExpressionMatrix> {
    let path = dir.join(format!("{name}.tsv"));
    let (genes, cols, values) = parse_parts(&read_file(&path)?, &path, Orientation::GenesRows)?;
    let stats_path = dir.join(format!("{name}_stats.tsv"));
    let text = read_file(&stats_path)?;
    let mut stats: HashMap<String, GeneStats> = HashMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let parse_err = |msg: &str| Error::Parse {
            path: stats_path.clone(),
            line: i as u64 + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(parse_err("expected gene, mean, std"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err("non-numeric statistic"));
        stats.insert(
            f[0].to_string(),
            GeneStats {
                mean: num(f[1])?,
                std: num(f[2])?,
            },
        );
    }
    let ordered = genes
        .iter()
        .map(|g| {
            stats
                .get(g)
                .copied()
                .ok_or_else(|| Error::Data(format!("no statistics for gene {g:?} in {}", stats_path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    ExpressionMatrix::normalized(genes, cols, values, ordered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synthesize, SynthConfig};

    fn toy() -> (ExpressionMatrix, ExpressionMatrix) {
        let d = synthesize(&SynthConfig {
            genes: 20,
            spots: 8,
            cells: 9,
            sc_only_genes: 2,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        (d.st, d.sc)
    }

    #[test]
    fn build_reports_sizes() {
        let (st, sc) = toy();
        let b = Bundle::build(&st, &sc, 1000, 1000, 1).unwrap();
        assert_eq!((b.report.p, b.report.q), (8, 9));
        assert_eq!(b.report.sc_unique, 2);
        assert_eq!(b.report.train + b.report.val + b.report.test, b.report.shared);
        assert_eq!(b.truth_log1p().unwrap().n_genes(), b.split.test.len());
    }

    #[test]
    fn disk_round_trip_is_exact() {
        let (st, sc) = toy();
        let b = Bundle::build(&st, &sc, 1000, 1000, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.write(dir.path()).unwrap();
        let back = Bundle::read(dir.path()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn mask_source_recovers_zeros() {
        let st = ExpressionMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["s1".into(), "s2".into(), "s3".into(), "s4".into()],
            Tensor::matrix(3, 4, vec![0.0, 5.0, 0.0, 3.0, 1.0, 2.0, 3.0, 4.0, 7.0, 0.0, 1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let b = Bundle::build(&st, &st, 10, 10, 0).unwrap();
        let src = b.mask_source("a").unwrap();
        assert_eq!(src[0], 0.0);
        assert_eq!(src[2], 0.0);
        assert!((src[1] - 5f64.ln_1p()).abs() < 1e-12);
    }

    #[test]
    fn restandardized_keeps_genes() {
        let (st, sc) = toy();
        let b = Bundle::build(&st, &sc, 1000, 1000, 1).unwrap();
        let zeros = ExpressionMatrix::new(
            st.gene_ids().to_vec(),
            st.col_ids().to_vec(),
            Tensor::zeros(&[st.n_genes(), st.n_cols()]),
        )
        .unwrap();
        let d = b.with_st_raw(&zeros).unwrap();
        assert_eq!(d.st.gene_ids(), b.st.gene_ids());
        assert!(d.st.values().data().iter().all(|&v| v == 0.0));
    }
}
