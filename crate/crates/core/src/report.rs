//! Table output: language-pair R@1 grids, sweep tables and word-level
//! cosine matrices, as Markdown or CSV.

use std::fmt::Write as _;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::retrieval::{Grid, SweepEntry};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot parse grid table: {0}")]
    Parse(String),
    #[error("word vectors have different dimensions ({0} vs {1})")]
    DimMismatch(usize, usize),
}

/// Percentage with one decimal, as in the published tables.
pub fn percent(fraction: f64) -> String {
    format!("{:.1}", fraction * 100.0)
}

fn comment_lines(out: &mut String, prefix: &str, suffix: &str, lines: &[String]) {
    for l in lines {
        let _ = writeln!(out, "{prefix}{l}{suffix}");
    }
}

/// Query-rows x candidate-columns R@1 [%] table with `-` on the diagonal.
pub fn grid_markdown(grid: &Grid, provenance: &[String]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, "<!-- ", " -->", provenance);
    let _ = writeln!(out, "R@1 [%] ({}; rows = query language, columns = candidate language)\n", grid.metric.kind);
    let _ = write!(out, "| Query |");
    for l in &grid.languages {
        let _ = write!(out, " {l} |");
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &grid.languages {
        out.push_str("---|");
    }
    out.push('\n');
    for (lang, row) in grid.languages.iter().zip(grid.r_at_1_rows()) {
        let _ = write!(out, "| {lang} |");
        for cell in row {
            let _ = write!(out, " {} |", cell.map_or_else(|| "-".to_string(), percent));
        }
        out.push('\n');
    }
    out
}

/// Same layout as [`grid_markdown`], full-precision fractions.
pub fn grid_csv(grid: &Grid, provenance: &[String]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, "# ", "", provenance);
    out.push_str("query");
    for l in &grid.languages {
        let _ = write!(out, ",{l}");
    }
    out.push('\n');
    for (lang, row) in grid.languages.iter().zip(grid.r_at_1_rows()) {
        out.push_str(lang);
        for cell in row {
            match cell {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push_str(",-"),
            }
        }
        out.push('\n');
    }
    out
}

/// A parsed grid table: languages and percentage cells (`None` for `-`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedGrid {
    pub languages: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl ParsedGrid {
    pub fn filled_cells(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }
}

/// Reads back the table written by [`grid_markdown`].
pub fn parse_grid_markdown(text: &str) -> Result<ParsedGrid, ReportError> {
    let rows: Vec<Vec<String>> = text
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with('|'))
        .map(|l| {
            l.trim_matches('|')
                .split('|')
                .map(|c| c.trim().to_string())
                .collect()
        })
        .collect();
    let (header, rest) = rows
        .split_first()
        .ok_or_else(|| ReportError::Parse("no table rows".into()))?;
    let languages: Vec<String> = header.iter().skip(1).cloned().collect();
    let mut cells = Vec::new();
    for row in rest.iter().filter(|r| !r.iter().all(|c| c.chars().all(|ch| ch == '-'))) {
        if row.len() != languages.len() + 1 {
            return Err(ReportError::Parse(format!("row {:?} has {} cells", row[0], row.len())));
        }
        let parsed = row[1..]
            .iter()
            .map(|c| match c.as_str() {
                "-" => Ok(None),
                v => v
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|e| ReportError::Parse(format!("{v:?}: {e}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        cells.push(parsed);
    }
    Ok(ParsedGrid { languages, cells })
}

pub fn sweep_markdown(entries: &[SweepEntry], provenance: &[String]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, "<!-- ", " -->", provenance);
    out.push_str("| label | R@1 [%] |\n|---|---|\n");
    for e in entries {
        let value = match (&e.r_at_1, &e.error) {
            (Some(v), _) => percent(*v),
            (None, Some(err)) => format!("failed: {}", err.replace('|', "/")),
            (None, None) => "-".into(),
        };
        let _ = writeln!(out, "| {} | {value} |", e.label);
    }
    out
}

pub fn sweep_csv(entries: &[SweepEntry], provenance: &[String]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, "# ", "", provenance);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "r_at_1", "error"]).expect("in-memory write");
    for e in entries {
        let v = e.r_at_1.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([e.label.as_str(), &v, e.error.as_deref().unwrap_or("")])
            .expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
    out
}

/// Cosine matrix between two lists of unit word vectors.
pub fn word_similarity(rows: &[(String, Vec<f64>)], cols: &[(String, Vec<f64>)]) -> Result<Matrix, ReportError> {
    let mut m = Matrix::zeros(rows.len(), cols.len());
    for (i, (_, a)) in rows.iter().enumerate() {
        for (j, (_, b)) in cols.iter().enumerate() {
            if a.len() != b.len() {
                return Err(ReportError::DimMismatch(a.len(), b.len()));
            }
            m.set(i, j, a.iter().zip(b).map(|(x, y)| x * y).sum());
        }
    }
    Ok(m)
}

/// Heatmap-ready CSV: first row holds the column words, first column the row words.
pub fn word_similarity_csv(row_words: &[String], col_words: &[String], sim: &Matrix, provenance: &[String]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, "# ", "", provenance);
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("").chain(col_words.iter().map(String::as_str)).collect();
    w.write_record(&header).expect("in-memory write");
    for (i, word) in row_words.iter().enumerate() {
        let mut rec = vec![word.clone()];
        rec.extend(sim.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_format() {
        assert_eq!(percent(0.8), "80.0");
        assert_eq!(percent(0.62154), "62.2");
        assert_eq!(percent(1.0), "100.0");
    }

    #[test]
    fn parses_published_layout() {
        let table = "| Query | en | fr |\n|---|---|---|\n| en | - | 80.0 |\n| fr | 73.2 | - |\n";
        let g = parse_grid_markdown(table).unwrap();
        assert_eq!(g.languages, vec!["en", "fr"]);
        assert_eq!(g.cells, vec![vec![None, Some(80.0)], vec![Some(73.2), None]]);
        assert_eq!(g.filled_cells(), 2);
    }

    #[test]
    fn word_matrix_csv() {
        let a = vec![("x".to_string(), vec![1.0, 0.0]), ("y".to_string(), vec![0.0, 1.0])];
        let m = word_similarity(&a, &a[..1]).unwrap();
        assert_eq!(m, Matrix::from_rows(&[[1.0], [0.0]]));
        let csv = word_similarity_csv(&["x".into(), "y".into()], &["x".into()], &m, &[]);
        assert_eq!(csv, ",x\nx,1\ny,0\n");
    }

    #[test]
    fn sweep_tables_keep_order() {
        let e = vec![
            SweepEntry { label: "layer-32".into(), r_at_1: Some(0.5), error: None },
            SweepEntry { label: "layer-0".into(), r_at_1: None, error: Some("boom".into()) },
        ];
        let md = sweep_markdown(&e, &[]);
        assert!(md.find("layer-32").unwrap() < md.find("layer-0").unwrap());
        assert!(md.contains("| layer-32 | 50.0 |"));
        assert_eq!(sweep_csv(&e, &[]), "label,r_at_1,error\nlayer-32,0.5,\nlayer-0,,boom\n");
    }
}
