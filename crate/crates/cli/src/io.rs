//! File formats: headed numeric CSV, `i,j` edge lists and pretty JSON.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mrf_core::datagen::DataMatrix;
use mrf_core::{Edge, Graph};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Shortest round-trip scientific notation.
pub fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv { path: path.to_path_buf(), source }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(csv_err(path))
}

/// Writes a table; each row must match the header length.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_data(path: &Path, data: &DataMatrix) -> Result<()> {
    let header: Vec<String> = (0..data.d()).map(|j| format!("x{j}")).collect();
    let mut w = writer(path)?;
    w.write_record(&header).map_err(csv_err(path))?;
    for row in data.rows() {
        w.write_record(row.iter().map(|&v| fmt_num(v))).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a headed CSV of numbers into row-major form.
pub fn read_data(path: &Path) -> Result<DataMatrix> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let d = r.headers().map_err(csv_err(path))?.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        for field in rec.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Usage(format!("{}: row {} has non-numeric field {field:?}", path.display(), line + 1))
            })?;
            values.push(v);
        }
        n += 1;
    }
    if n == 0 || d == 0 {
        return Err(CliError::Usage(format!("{}: no data", path.display())));
    }
    Ok(DataMatrix::new(n, d, values)?)
}

pub fn write_edges(path: &Path, graph: &Graph) -> Result<()> {
    let rows: Vec<Vec<String>> = graph.edges().iter().map(|&(i, j)| vec![i.to_string(), j.to_string()]).collect();
    write_table(path, &["i", "j"], &rows)
}

pub fn read_edges(path: &Path) -> Result<Vec<Edge>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let parse = |k: usize| -> Result<usize> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| CliError::Usage(format!("{}: malformed edge line {:?}", path.display(), rec)))
        };
        out.push((parse(0)?, parse(1)?));
    }
    Ok(out)
}

/// Edge list as a graph on `d` nodes.
pub fn read_graph(path: &Path, d: usize) -> Result<Graph> {
    Graph::new(d, read_edges(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| fmt_num(m[(i, j)])).collect()).collect();
    write_table(path, &header, &rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| CliError::Json { path: path.to_path_buf(), source })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(f)).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
}
