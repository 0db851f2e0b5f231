//! File formats: PTG1 tag files, numeric CSV tables and JSON reports.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use homsim_core::correlate::CorrelationHistogram;
use homsim_core::TimeTagStream;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn read_tags(path: &Path) -> CliResult<TimeTagStream> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    TimeTagStream::from_ptg1_bytes(&bytes)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn write_tags(path: &Path, stream: &TimeTagStream) -> CliResult<()> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(f);
    stream
        .write_ptg1(&mut w)
        .map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// Numeric table with `# key=value` comment metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: BTreeMap<String, String>,
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[i]).collect()
    }

    pub fn meta_f64(&self, key: &str) -> CliResult<Option<f64>> {
        self.meta
            .get(key)
            .map(|v| {
                v.parse().map_err(|_| {
                    CliError::validation(format!("metadata {key}={v} is not a number"))
                })
            })
            .transpose()
    }
}

/// Reads a comma-separated numeric table. Lines starting with `#` carry
/// metadata, and a first non-numeric row is taken as the column header.
pub fn read_table(path: &Path, min_columns: usize) -> CliResult<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_table(&text, min_columns).map_err(|e| match e {
        CliError::Validation(m) => CliError::validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_table(text: &str, min_columns: usize) -> CliResult<Table> {
    let mut table = Table::default();
    for line in text.lines() {
        if let Some(c) = line.trim_start().strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                table
                    .meta
                    .insert(k.trim().to_string(), v.trim().to_string());
            }
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::validation(format!("csv: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => {
                if row.len() < min_columns {
                    return Err(CliError::validation(format!(
                        "line {line}: expected {min_columns} columns, found {}",
                        row.len()
                    )));
                }
                table.rows.push(row);
            }
            Err(_) if i == 0 => table.header = Some(rec.iter().map(String::from).collect()),
            Err(_) => {
                return Err(CliError::validation(format!(
                    "line {line}: non-numeric value"
                )));
            }
        }
    }
    if table.rows.is_empty() {
        return Err(CliError::validation("no data rows"));
    }
    Ok(table)
}

pub fn write_table(
    path: &Path,
    meta: &[(&str, String)],
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> CliResult<()> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| CliError::io(path, e);
    for (k, v) in meta {
        writeln!(w, "# {k}={v}").map_err(io)?;
    }
    let mut cw = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| CliError::io(path, e.into());
    cw.write_record(header).map_err(csv_err)?;
    for r in rows {
        cw.write_record(&r).map_err(csv_err)?;
    }
    cw.flush().map_err(io)
}

pub fn write_histogram(path: &Path, h: &CorrelationHistogram) -> CliResult<()> {
    write_table(
        path,
        &[
            ("bin_width_ps", h.bin_width_ps.to_string()),
            ("window_ps", h.window_ps.to_string()),
            ("channels", format!("{}-{}", h.channels.0, h.channels.1)),
            ("total_pairs", h.total_pairs.to_string()),
        ],
        &["bin_start_ps", "counts"],
        h.counts
            .iter()
            .enumerate()
            .map(|(i, c)| vec![h.bin_start_ps(i).to_string(), c.to_string()]),
    )
}

pub fn read_histogram(path: &Path) -> CliResult<CorrelationHistogram> {
    let t = read_table(path, 2)?;
    let need = |k: &str| -> CliResult<u64> {
        let v = t
            .meta
            .get(k)
            .ok_or_else(|| CliError::validation(format!("{}: missing `# {k}=`", path.display())))?;
        v.parse()
            .map_err(|_| CliError::validation(format!("{}: bad {k}={v}", path.display())))
    };
    let mut h = CorrelationHistogram::empty(need("bin_width_ps")?, need("window_ps")?)?;
    if t.rows.len() != h.n_bins() {
        return Err(CliError::validation(format!(
            "{}: {} rows for {} bins",
            path.display(),
            t.rows.len(),
            h.n_bins()
        )));
    }
    for (i, r) in t.rows.iter().enumerate() {
        if r[0] != h.bin_start_ps(i) as f64 || r[1] < 0.0 || r[1].fract() != 0.0 {
            return Err(CliError::validation(format!(
                "{}: bad row {}",
                path.display(),
                i + 1
            )));
        }
        h.counts[i] = r[1] as u64;
    }
    h.total_pairs = h.counts.iter().sum();
    if let Some(ch) = t.meta.get("channels") {
        if let Some((a, b)) = ch.split_once('-') {
            if let (Ok(a), Ok(b)) = (a.parse(), b.parse()) {
                h.channels = (a, b);
            }
        }
    }
    Ok(h)
}
