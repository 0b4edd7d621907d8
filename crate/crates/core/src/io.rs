//! Text formats: the `RONMF-MAT v1` matrix file and the trace CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::metrics::format_psnr;
use crate::model::TraceRecord;
use crate::online::TraceSink;

const MAGIC: &str = "RONMF-MAT";
const VERSION: &str = "v1";

/// Header column names of the trace CSV.
pub const TRACE_HEADER: &str = "t,wall_clock_s,surrogate_loss,regret_loss,dict_drift";

/// A matrix together with the seed recorded in its file header.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub matrix: Array2<f64>,
    pub seed: u64,
}

/// Writes `RONMF-MAT v1 F N seed` followed by one line per row, 17 significant digits.
pub fn write_matrix<W: Write>(out: W, m: &Array2<f64>, seed: u64) -> Result<()> {
    let mut out = BufWriter::new(out);
    let (f, n) = m.dim();
    writeln!(out, "{MAGIC} {VERSION} {f} {n} {seed}")?;
    let mut line = String::new();
    for row in m.rows() {
        line.clear();
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{x:.16e}"));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_matrix(path: &Path, m: &Array2<f64>, seed: u64) -> Result<()> {
    write_matrix(File::create(path)?, m, seed)
}

fn format_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        line,
        reason: reason.into(),
    }
}

pub fn read_matrix<R: Read>(input: R) -> Result<MatrixFile> {
    let mut lines = BufReader::new(input).lines();
    let header = lines.next().ok_or_else(|| format_err(1, "empty file"))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != MAGIC || fields[1] != VERSION {
        return Err(format_err(1, format!("expected `{MAGIC} {VERSION} F N seed`, got `{header}`")));
    }
    let parse = |s: &str, what: &str| -> Result<u64> {
        s.parse::<u64>()
            .map_err(|_| format_err(1, format!("invalid {what} `{s}`")))
    };
    let f = parse(fields[2], "row count")? as usize;
    let n = parse(fields[3], "column count")? as usize;
    let seed = parse(fields[4], "seed")?;
    let mut data = Vec::with_capacity(f * n);
    for i in 0..f {
        let lineno = i + 2;
        let line = lines
            .next()
            .ok_or_else(|| format_err(lineno, format!("expected {f} data rows, found {i}")))??;
        let before = data.len();
        for tok in line.split_whitespace() {
            let x: f64 = tok
                .parse()
                .map_err(|_| format_err(lineno, format!("invalid number `{tok}`")))?;
            data.push(x);
        }
        if data.len() - before != n {
            return Err(format_err(lineno, format!("expected {n} values, found {}", data.len() - before)));
        }
    }
    for (extra, line) in lines.enumerate() {
        if !line?.trim().is_empty() {
            return Err(format_err(f + 2 + extra, "unexpected data after the last row"));
        }
    }
    let matrix = Array2::from_shape_vec((f, n), data).expect("length checked");
    Ok(MatrixFile { matrix, seed })
}

pub fn load_matrix(path: &Path) -> Result<MatrixFile> {
    read_matrix(File::open(path)?)
}

/// One CSV row; an absent regret is an empty field.
pub fn format_trace_row(rec: &TraceRecord) -> String {
    let regret = rec.regret_loss.map(|x| x.to_string()).unwrap_or_default();
    format!(
        "{},{},{},{},{}",
        rec.t, rec.wall_clock_s, rec.surrogate_loss, regret, rec.dict_drift
    )
}

/// Streams trace rows to a CSV file as they are produced.
pub struct CsvTraceWriter<W: Write> {
    out: BufWriter<W>,
}

impl<W: Write> CsvTraceWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{TRACE_HEADER}")?;
        Ok(CsvTraceWriter { out })
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

impl CsvTraceWriter<File> {
    pub fn create(path: &Path) -> Result<Self> {
        Self::new(File::create(path)?)
    }
}

impl<W: Write> TraceSink for CsvTraceWriter<W> {
    fn record(&mut self, rec: &TraceRecord) -> Result<()> {
        writeln!(self.out, "{}", format_trace_row(rec))?;
        Ok(())
    }
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut w = CsvTraceWriter::create(path)?;
    for rec in trace {
        w.record(rec)?;
    }
    w.finish()
}

/// Parses a trace CSV written by [`CsvTraceWriter`].
pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut lines = BufReader::new(input).lines();
    let header = lines.next().ok_or_else(|| format_err(1, "empty trace"))??;
    if header.trim() != TRACE_HEADER {
        return Err(format_err(1, format!("unexpected trace header `{header}`")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(format_err(lineno, format!("expected 5 fields, found {}", cols.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| format_err(lineno, format!("invalid number `{s}`")))
        };
        out.push(TraceRecord {
            t: cols[0]
                .parse()
                .map_err(|_| format_err(lineno, format!("invalid step `{}`", cols[0])))?,
            wall_clock_s: num(cols[1])?,
            surrogate_loss: num(cols[2])?,
            regret_loss: if cols[3].is_empty() { None } else { Some(num(cols[3])?) },
            dict_drift: num(cols[4])?,
        });
    }
    Ok(out)
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    read_trace(File::open(path)?)
}

/// Header of the results CSV.
pub const RESULTS_HEADER: &str = "algorithm,setting,psnr_db,runtime_s,seed";

/// One summary row. A missing PSNR is written as an empty field.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algorithm: String,
    pub setting: String,
    pub psnr_db: Option<f64>,
    pub runtime_s: f64,
    pub seed: u64,
}

impl ResultRow {
    pub fn to_csv(&self) -> String {
        let psnr = self.psnr_db.map(format_psnr).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.algorithm, self.setting, psnr, self.runtime_s, self.seed
        )
    }
}

/// Writes a fresh results file.
pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{RESULTS_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.to_csv())?;
    }
    out.flush()?;
    Ok(())
}

/// Appends to a results file, writing the header first if the file is new or empty.
pub fn append_result(path: &Path, row: &ResultRow) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut out = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(out, "{RESULTS_HEADER}")?;
    }
    writeln!(out, "{}", row.to_csv())?;
    Ok(())
}
