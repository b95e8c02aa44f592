use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A numeric result table with provenance metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Key/value pairs echoed as `# key: value` lines atop the CSV.
    pub metadata: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            metadata: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(invalid(format!(
                "row has {} cells for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        if let Some((j, v)) = row.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite cell {v} in column {}",
                self.columns[j]
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn add_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.push((key.into(), value.into()));
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// All values of column `name`.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// CSV text: metadata comment lines, header, rows; LF line endings.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            for line in v.lines() {
                let _ = writeln!(out, "# {k}: {line}");
            }
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io {
            path: "<memory>".into(),
            source: e.into_error(),
        })?;
        out.push_str(std::str::from_utf8(&bytes).expect("csv output is utf-8"));
        Ok(out)
    }

    /// Parse CSV produced by [`ResultTable::to_csv_string`].
    pub fn from_csv_str(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut metadata = Vec::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim_start();
            if let Some((k, v)) = body.split_once(": ") {
                metadata.push((k.to_string(), v.to_string()));
            }
        }
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|_| invalid(format!("bad number {c:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self {
            name: name.into(),
            columns,
            rows,
            metadata,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv_string()?.as_bytes())
    }

    /// Gnuplot script drawing `y_columns` against `x_column` from the CSV
    /// file named `data_file`, one curve per distinct value of each column
    /// in `group_by`.
    pub fn plot_script(&self, data_file: &str, spec: &PlotSpec) -> Result<String> {
        let col = |name: &str| {
            self.column_index(name)
                .map(|j| j + 1)
                .ok_or_else(|| invalid(format!("no column {name:?}")))
        };
        let x = col(&spec.x_column)?;
        let mut groups: Vec<Vec<f64>> = vec![vec![]];
        for g in &spec.group_by {
            let j = col(g)? - 1;
            let mut values: Vec<f64> = self.rows.iter().map(|r| r[j]).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            groups = groups
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        let mut s = String::new();
        let _ = writeln!(s, "set datafile separator ','");
        let _ = writeln!(s, "set datafile commentschars '#'");
        let _ = writeln!(s, "set key outside");
        let _ = writeln!(s, "set xlabel '{}'", spec.x_label);
        let _ = writeln!(s, "set ylabel '{}'", spec.y_label);
        let _ = writeln!(s, "set title '{}'", spec.title);
        let mut curves = Vec::new();
        for y in &spec.y_columns {
            let yj = col(y)?;
            for g in &groups {
                let mut cond = String::new();
                let mut label = y.clone();
                for (name, v) in spec.group_by.iter().zip(g) {
                    let j = col(name)?;
                    let _ = write!(cond, "(abs(${j} - {v}) < 1e-12) && ");
                    let _ = write!(label, " {name}={v}");
                }
                let using = if cond.is_empty() {
                    format!("{x}:{yj}")
                } else {
                    format!("{x}:({cond}1 ? ${yj} : 1/0)")
                };
                curves.push(format!(
                    "'{data_file}' using {using} with linespoints title '{label}'"
                ));
            }
        }
        let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
        Ok(s)
    }
}

/// What to draw in a plot script.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_column: String,
    pub x_label: String,
    pub y_columns: Vec<String>,
    pub y_label: String,
    pub group_by: Vec<String>,
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}
