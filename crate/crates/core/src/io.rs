//! CSV file formats.
//!
//! Matrix streams use a long layout with header `t,i,j,value`: one row per
//! cell with `i <= j`, 1-based indices, every cell present for every `t`, and
//! `t` contiguous from 1. Quantile tables use `m,T,alpha,quantile,replications,seed`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::matrix::{packed_len, SymMatrix};
use crate::quantiles::{QuantileRow, QuantileTable};

pub const STREAM_HEADER: [&str; 4] = ["t", "i", "j", "value"];
pub const QUANTILE_HEADER: [&str; 6] = ["m", "T", "alpha", "quantile", "replications", "seed"];

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("cannot write an empty matrix stream")]
    EmptyStream,

    #[error("matrix {index} has dimension {got}, expected {expected}")]
    MixedDimensions {
        index: usize,
        expected: usize,
        got: usize,
    },
}

impl FormatError {
    pub(crate) fn parse(line: u64, msg: impl Into<String>) -> Self {
        FormatError::Parse {
            line,
            msg: msg.into(),
        }
    }
}

impl From<csv::Error> for FormatError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => FormatError::Io(io),
            other => FormatError::parse(line, format!("{other:?}")),
        }
    }
}

/// Formats a float so that parsing the text yields the same bits.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub(crate) fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(r)
}

pub(crate) fn check_header(
    rdr: &mut csv::Reader<impl Read>,
    expected: &[&str],
) -> Result<(), FormatError> {
    let headers = rdr.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(FormatError::parse(
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(())
}

pub(crate) fn parse_index(s: &str, name: &str, line: u64) -> Result<usize, FormatError> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(FormatError::parse(
            line,
            format!("`{name}` must be a positive integer, found `{s}`"),
        )),
    }
}

pub(crate) fn parse_finite(s: &str, name: &str, line: u64) -> Result<f64, FormatError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(FormatError::parse(
            line,
            format!("`{name}` must be a finite number, found `{s}`"),
        )),
    }
}

struct Block {
    cells: Vec<(usize, usize, f64, u64)>,
    first_line: u64,
    last_line: u64,
}

pub fn read_matrix_stream(path: impl AsRef<Path>) -> Result<Vec<SymMatrix>, FormatError> {
    let f = File::open(path)?;
    read_matrix_stream_from(BufReader::new(f))
}

/// Parses a matrix stream. Rows may appear in any order; matrices come back
/// sorted by `t`.
pub fn read_matrix_stream_from<R: Read>(r: R) -> Result<Vec<SymMatrix>, FormatError> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &STREAM_HEADER)?;

    let mut blocks: BTreeMap<usize, Block> = BTreeMap::new();
    let mut rec = csv::StringRecord::new();
    let mut last_line = 1;
    while rdr.read_record(&mut rec)? {
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        last_line = line;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != 4 {
            return Err(FormatError::parse(
                line,
                format!("expected 4 fields, found {}", rec.len()),
            ));
        }
        let t = parse_index(&rec[0], "t", line)?;
        let i = parse_index(&rec[1], "i", line)?;
        let j = parse_index(&rec[2], "j", line)?;
        if i > j {
            return Err(FormatError::parse(
                line,
                format!("cell ({i},{j}) has i > j; only cells with i <= j are stored"),
            ));
        }
        let v = parse_finite(&rec[3], "value", line)?;
        let b = blocks.entry(t).or_insert(Block {
            cells: Vec::new(),
            first_line: line,
            last_line: line,
        });
        b.first_line = b.first_line.min(line);
        b.last_line = b.last_line.max(line);
        b.cells.push((i, j, v, line));
    }

    if blocks.is_empty() {
        return Err(FormatError::parse(last_line, "stream contains no matrices"));
    }

    let mut out = Vec::with_capacity(blocks.len());
    let mut dim: Option<usize> = None;
    for (expected_t, (t, block)) in (1..).zip(blocks) {
        if t != expected_t {
            return Err(FormatError::parse(
                block.first_line,
                format!("time index t = {t} found but t = {expected_t} is missing; t must be contiguous from 1"),
            ));
        }
        let n = block.cells.iter().map(|c| c.1).max().unwrap_or(0);
        match dim {
            None => dim = Some(n),
            Some(d) if d != n => {
                return Err(FormatError::parse(
                    block.first_line,
                    format!("matrix t = {t} has dimension {n}, earlier matrices have {d}"),
                ));
            }
            _ => {}
        }
        let mut packed: Vec<Option<f64>> = vec![None; packed_len(n)];
        for &(i, j, v, line) in &block.cells {
            // File cell (i, j) with i <= j is packed row j-1, column i-1.
            let (r, c) = (j - 1, i - 1);
            let slot = &mut packed[r * (r + 1) / 2 + c];
            if slot.is_some() {
                return Err(FormatError::parse(
                    line,
                    format!("duplicate cell ({t},{i},{j})"),
                ));
            }
            *slot = Some(v);
        }
        let mut data = Vec::with_capacity(packed.len());
        for r in 0..n {
            for c in 0..=r {
                match packed[r * (r + 1) / 2 + c] {
                    Some(v) => data.push(v),
                    None => {
                        return Err(FormatError::parse(
                            block.last_line,
                            format!(
                                "missing cell ({t},{},{}) for dimension n = {n}",
                                c + 1,
                                r + 1
                            ),
                        ))
                    }
                }
            }
        }
        out.push(SymMatrix::from_packed_unchecked(n, data));
    }
    Ok(out)
}

pub fn write_matrix_stream(
    matrices: &[SymMatrix],
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    validate_stream(matrices)?;
    let f = File::create(path)?;
    let mut w = BufWriter::new(f);
    write_matrix_stream_to(matrices, &mut w)?;
    w.flush()?;
    Ok(())
}

fn validate_stream(matrices: &[SymMatrix]) -> Result<usize, FormatError> {
    let first = matrices.first().ok_or(FormatError::EmptyStream)?;
    let n = first.dim();
    if let Some((index, m)) = matrices.iter().enumerate().find(|(_, m)| m.dim() != n) {
        return Err(FormatError::MixedDimensions {
            index,
            expected: n,
            got: m.dim(),
        });
    }
    Ok(n)
}

pub fn write_matrix_stream_to<W: Write>(
    matrices: &[SymMatrix],
    w: &mut W,
) -> Result<(), FormatError> {
    validate_stream(matrices)?;
    writeln!(w, "{}", STREAM_HEADER.join(","))?;
    for (t, m) in (1..).zip(matrices) {
        write_matrix_rows(w, t, m)?;
    }
    Ok(())
}

/// Incremental writer for streams too long to hold in memory.
pub struct MatrixStreamWriter<W: Write> {
    inner: W,
    t: usize,
    n: Option<usize>,
}

impl<W: Write> MatrixStreamWriter<W> {
    pub fn new(mut inner: W) -> Result<Self, FormatError> {
        writeln!(inner, "{}", STREAM_HEADER.join(","))?;
        Ok(Self {
            inner,
            t: 0,
            n: None,
        })
    }

    pub fn push(&mut self, m: &SymMatrix) -> Result<(), FormatError> {
        match self.n {
            None => self.n = Some(m.dim()),
            Some(n) if n != m.dim() => {
                return Err(FormatError::MixedDimensions {
                    index: self.t,
                    expected: n,
                    got: m.dim(),
                })
            }
            _ => {}
        }
        self.t += 1;
        write_matrix_rows(&mut self.inner, self.t, m)
    }

    pub fn finish(mut self) -> Result<W, FormatError> {
        if self.t == 0 {
            return Err(FormatError::EmptyStream);
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

fn write_matrix_rows<W: Write>(w: &mut W, t: usize, m: &SymMatrix) -> Result<(), FormatError> {
    let n = m.dim();
    for i in 0..n {
        for j in i..n {
            writeln!(w, "{},{},{},{}", t, i + 1, j + 1, format_f64(m.get(i, j)))?;
        }
    }
    Ok(())
}

pub fn read_quantile_table(path: impl AsRef<Path>) -> Result<QuantileTable, FormatError> {
    let f = File::open(path)?;
    read_quantile_table_from(BufReader::new(f))
}

pub fn read_quantile_table_from<R: Read>(r: R) -> Result<QuantileTable, FormatError> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &QUANTILE_HEADER)?;
    let mut table = QuantileTable::default();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec)? {
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != 6 {
            return Err(FormatError::parse(
                line,
                format!("expected 6 fields, found {}", rec.len()),
            ));
        }
        let m = parse_index(&rec[0], "m", line)?;
        let horizon = parse_index(&rec[1], "T", line)?;
        let alpha = parse_finite(&rec[2], "alpha", line)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(FormatError::parse(
                line,
                format!("alpha must lie in (0, 1), found {alpha}"),
            ));
        }
        let quantile = parse_finite(&rec[3], "quantile", line)?;
        let replications = parse_index(&rec[4], "replications", line)?;
        let seed = rec[5].parse::<u64>().map_err(|_| {
            FormatError::parse(
                line,
                format!("`seed` must be an unsigned integer, found `{}`", &rec[5]),
            )
        })?;
        let row = QuantileRow {
            m,
            horizon,
            alpha,
            quantile,
            replications,
            seed,
        };
        if table.get(m, horizon, alpha, replications, seed).is_some() {
            return Err(FormatError::parse(line, "duplicate quantile-table key"));
        }
        table.insert(row);
    }
    Ok(table)
}

pub fn write_quantile_table(
    table: &QuantileTable,
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    let f = File::create(path)?;
    let mut w = BufWriter::new(f);
    write_quantile_table_to(table, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_quantile_table_to<W: Write>(
    table: &QuantileTable,
    w: &mut W,
) -> Result<(), FormatError> {
    writeln!(w, "{}", QUANTILE_HEADER.join(","))?;
    for r in table.rows() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.m,
            r.horizon,
            format_f64(r.alpha),
            format_f64(r.quantile),
            r.replications,
            r.seed
        )?;
    }
    Ok(())
}
