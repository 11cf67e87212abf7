use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// On-disk layout of a matrix file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// One gene per row (first column holds gene ids).
    #[default]
    GenesRows,
    /// One gene per column (first row holds gene ids).
    GenesCols,
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genes-rows" => Ok(Self::GenesRows),
            "genes-cols" => Ok(Self::GenesCols),
            other => Err(Error::Usage(format!("unknown orientation {other:?}"))),
        }
    }
}

/// Mean and standard deviation of one gene's log1p values, recorded when the
/// matrix is standardized so predictions can be mapped back.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneStats {
    pub mean: f64,
    pub std: f64,
}

/// Gene-major expression matrix: rows are genes, columns are spots or cells.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionMatrix {
    gene_ids: Vec<String>,
    col_ids: Vec<String>,
    values: Tensor,
    normalized: bool,
    stats: Vec<GeneStats>,
}

impl ExpressionMatrix {
    /// Raw (unnormalized) matrix; values must be finite and non-negative.
    pub fn new(gene_ids: Vec<String>, col_ids: Vec<String>, values: Tensor) -> Result<Self> {
        let m = Self::build(gene_ids, col_ids, values, false, Vec::new())?;
        if m.values.data().iter().any(|&v| v < 0.0) {
            return Err(Error::Data("raw expression values must be non-negative".into()));
        }
        Ok(m)
    }

    /// Matrix of arbitrary-sign values without statistics, e.g. predictions.
    pub fn table(gene_ids: Vec<String>, col_ids: Vec<String>, values: Tensor) -> Result<Self> {
        Self::build(gene_ids, col_ids, values, false, Vec::new())
    }

    /// Standardized matrix with per-gene stats.
    pub fn normalized(
        gene_ids: Vec<String>,
        col_ids: Vec<String>,
        values: Tensor,
        stats: Vec<GeneStats>,
    ) -> Result<Self> {
        if stats.len() != gene_ids.len() {
            return Err(Error::Data(format!(
                "{} gene stats for {} genes",
                stats.len(),
                gene_ids.len()
            )));
        }
        Self::build(gene_ids, col_ids, values, true, stats)
    }

    fn build(
        gene_ids: Vec<String>,
        col_ids: Vec<String>,
        values: Tensor,
        normalized: bool,
        stats: Vec<GeneStats>,
    ) -> Result<Self> {
        if values.dims2() != (gene_ids.len(), col_ids.len()) {
            return Err(Error::Shape {
                op: "expression matrix",
                left: values.shape().to_vec(),
                right: vec![gene_ids.len(), col_ids.len()],
            });
        }
        if let Some(dup) = first_duplicate(&gene_ids) {
            return Err(Error::Data(format!("duplicate gene id {dup:?}")));
        }
        if let Some(dup) = first_duplicate(&col_ids) {
            return Err(Error::Data(format!("duplicate column id {dup:?}")));
        }
        if !values.all_finite() {
            return Err(Error::Data("expression values must be finite".into()));
        }
        Ok(ExpressionMatrix {
            gene_ids,
            col_ids,
            values,
            normalized,
            stats,
        })
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn stats(&self) -> &[GeneStats] {
        &self.stats
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row_slice(i)
    }

    pub fn gene_index(&self) -> HashMap<&str, usize> {
        self.gene_ids
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect()
    }

    pub fn position(&self, gene: &str) -> Option<usize> {
        self.gene_ids.iter().position(|g| g == gene)
    }

    /// Rows for `genes`, in the order given.
    pub fn select_genes(&self, genes: &[String]) -> Result<Self> {
        let index = self.gene_index();
        let mut data = Vec::with_capacity(genes.len() * self.n_cols());
        let mut stats = Vec::new();
        for g in genes {
            let &i = index
                .get(g.as_str())
                .ok_or_else(|| Error::Data(format!("gene {g:?} not present")))?;
            data.extend_from_slice(self.row(i));
            if self.normalized {
                stats.push(self.stats[i]);
            }
        }
        let values = Tensor::matrix(genes.len(), self.n_cols(), data)?;
        Self::build(
            genes.to_vec(),
            self.col_ids.clone(),
            values,
            self.normalized,
            stats,
        )
    }

    /// log1p-space values of a standardized matrix: `z·std + mean`.
    pub fn to_log1p(&self) -> Result<Self> {
        if !self.normalized {
            return Err(Error::Data("matrix is not normalized".into()));
        }
        let c = self.n_cols();
        let data: Vec<f64> = self
            .values
            .data()
            .chunks(c)
            .zip(&self.stats)
            .flat_map(|(row, s)| row.iter().map(move |z| z * s.std + s.mean))
            .collect();
        Self::build(
            self.gene_ids.clone(),
            self.col_ids.clone(),
            Tensor::matrix(self.n_genes(), c, data)?,
            false,
            Vec::new(),
        )
    }

    /// Writes tab-separated text, genes as rows. Floats use the shortest
    /// representation that round-trips exactly.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path.display().to_string(), e);
        write!(w, "gene").map_err(io)?;
        for c in &self.col_ids {
            write!(w, "\t{c}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
        for (i, g) in self.gene_ids.iter().enumerate() {
            write!(w, "{g}").map_err(io)?;
            for v in self.row(i) {
                write!(w, "\t{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter().find(|id| !seen.insert(id.as_str())).map(String::as_str)
}

/// Reads a delimited matrix (comma or tab, detected from the header line).
/// The first row holds column ids, the first column row ids; cell (0,0) is
/// ignored. The result is always gene-major.
pub fn load_matrix(path: &Path, orientation: Orientation) -> Result<ExpressionMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_matrix(&text, path, orientation)
}

/// Like [`load_matrix`] but accepts negative values (predictions,
/// standardized data).
pub fn load_table(path: &Path, orientation: Orientation) -> Result<ExpressionMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let (g, c, v) = parse_parts(&text, path, orientation)?;
    ExpressionMatrix::table(g, c, v).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })
}

pub(crate) fn parse_matrix(text: &str, path: &Path, orientation: Orientation) -> Result<ExpressionMatrix> {
    let (genes, cols, values) = parse_parts(text, path, orientation)?;
    ExpressionMatrix::new(genes, cols, values).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })
}

pub(crate) fn parse_parts(
    text: &str,
    path: &Path,
    orientation: Orientation,
) -> Result<(Vec<String>, Vec<String>, Tensor)> {
    let header = text.lines().next().unwrap_or("");
    let delim = if header.contains('\t') { b'\t' } else { b',' };
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut records = reader.records();
    let head = match records.next() {
        Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "empty file".into())),
    };
    let col_ids: Vec<String> = head.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if col_ids.is_empty() {
        return Err(parse_err(1, "header has no data columns".into()));
    }

    let mut row_ids = Vec::new();
    let mut data = Vec::new();
    let mut seen_rows: HashSet<String> = HashSet::new();
    for rec in records {
        let rec = rec.map_err(|e| parse_err(0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != col_ids.len() + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", col_ids.len() + 1, rec.len()),
            ));
        }
        let id = rec[0].trim().to_string();
        if !seen_rows.insert(id.clone()) {
            let what = match orientation {
                Orientation::GenesRows => "gene",
                Orientation::GenesCols => "column",
            };
            return Err(parse_err(line, format!("duplicate {what} id {id:?}")));
        }
        for (k, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(
                    line,
                    format!("non-numeric value {cell:?} in column {}", col_ids[k]),
                )
            })?;
            data.push(v);
        }
        row_ids.push(id);
    }
    if row_ids.is_empty() {
        return Err(parse_err(2, "no data rows".into()));
    }

    let values = Tensor::matrix(row_ids.len(), col_ids.len(), data)?;
    let (genes, cols, values) = match orientation {
        Orientation::GenesRows => (row_ids, col_ids, values),
        Orientation::GenesCols => {
            if let Some(dup) = first_duplicate(&col_ids) {
                return Err(parse_err(1, format!("duplicate gene id {dup:?}")));
            }
            (col_ids, row_ids, values.transpose())
        }
    };
    if let Some(dup) = first_duplicate(&cols) {
        return Err(parse_err(1, format!("duplicate column id {dup:?}")));
    }
    Ok((genes, cols, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, o: Orientation) -> Result<ExpressionMatrix> {
        parse_matrix(text, Path::new("test.csv"), o)
    }

    #[test]
    fn loads_gene_rows_in_file_order() {
        let m = parse("gene,s1,s2,s3\nb,1,2,3\na,4,5,6\n", Orientation::GenesRows).unwrap();
        assert_eq!(m.gene_ids(), &["b", "a"]);
        assert_eq!(m.col_ids(), &["s1", "s2", "s3"]);
        assert_eq!(m.values().shape(), &[2, 3]);
        assert_eq!(m.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn transposed_file_gives_same_matrix() {
        let rows = parse("x\ts1\ts2\ts3\nb\t1\t2\t3\na\t4\t5\t6\n", Orientation::GenesRows).unwrap();
        let cols = parse("x,b,a\ns1,1,4\ns2,2,5\ns3,3,6\n", Orientation::GenesCols).unwrap();
        assert_eq!(rows, cols);
    }

    #[test]
    fn duplicate_gene_is_named() {
        let err = parse("g,s1\nx,1\ny,2\nx,3\n", Orientation::GenesRows).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"x\"") && msg.contains(":4:"), "{msg}");
        let err = parse("g,x,x\ns1,1,2\n", Orientation::GenesCols).unwrap_err();
        assert!(err.to_string().contains("\"x\""));
    }

    #[test]
    fn ragged_and_non_numeric_rows_report_line() {
        let err = parse("g,s1,s2\na,1,2\nb,1\n", Orientation::GenesRows).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse("g,s1,s2\na,1,oops\n", Orientation::GenesRows).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn tsv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");
        let vals = Tensor::matrix(2, 2, vec![0.1 + 0.2, 1e-300, 3.0, 7.25]).unwrap();
        let m = ExpressionMatrix::new(
            vec!["g1".into(), "g2".into()],
            vec!["c1".into(), "c2".into()],
            vals,
        )
        .unwrap();
        m.write_tsv(&p).unwrap();
        let back = load_matrix(&p, Orientation::GenesRows).unwrap();
        assert_eq!(m, back);
    }
}
