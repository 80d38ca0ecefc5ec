//! File formats: data CSV, model and graph JSON, and the result tables.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a written file gives back the same bits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analytic::CovarianceTable;
use crate::error::{Error, Result};
use crate::graph::TimeSeriesGraph;
use crate::mclab::QqPlot;
use crate::measures::{MeasureKind, MeasureResult};
use crate::model::{TimeSeriesData, VarModel};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Reads a data CSV: a header of variable names, then one row per time step.
/// Rows with an empty or non-numeric field are rejected.
pub fn read_data<R: Read>(reader: R) -> Result<TimeSeriesData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(Error::Parse("header must name every column".into()));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                if field.is_empty() {
                    Error::Parse(format!("missing value at line {line}, column {}", names[j]))
                } else {
                    Error::Parse(format!("invalid number {field:?} at line {line}, column {}", names[j]))
                }
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("missing value at line {line}, column {}", names[j])));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Length("data file has no rows".into()));
    }
    TimeSeriesData::new(DMatrix::from_row_slice(rows, names.len(), &values), names)
}

pub fn write_data<W: Write>(writer: W, data: &TimeSeriesData) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(data.var_names())?;
    let values = data.values();
    for row in values.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_data_file(path: &Path) -> Result<TimeSeriesData> {
    read_data(open(path)?)
}

pub fn write_data_file(path: &Path, data: &TimeSeriesData) -> Result<()> {
    write_data(create(path)?, data)
}

pub fn read_model_file(path: &Path) -> Result<VarModel> {
    Ok(serde_json::from_reader(open(path)?)?)
}

pub fn write_model_file(path: &Path, model: &VarModel) -> Result<()> {
    write_json_file(path, model)
}

pub fn read_graph_file(path: &Path) -> Result<TimeSeriesGraph> {
    Ok(serde_json::from_reader(open(path)?)?)
}

pub fn write_graph_file(path: &Path, graph: &TimeSeriesGraph) -> Result<()> {
    write_json_file(path, graph)
}

pub fn write_json_file<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// A measure result with variable names spelled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub kind: MeasureKind,
    pub source: String,
    pub lag: usize,
    pub target: String,
    pub estimate: f64,
    pub q: usize,
    pub n_eff: usize,
    pub df: usize,
    pub t_stat: f64,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_level: Option<f64>,
}

impl ResultRecord {
    pub fn new(result: &MeasureResult, names: &[String]) -> Result<Self> {
        let name = |i: usize| {
            names.get(i).cloned().ok_or_else(|| Error::Key(format!("variable index {i}")))
        };
        Ok(ResultRecord {
            kind: result.kind,
            source: name(result.source.var)?,
            lag: result.source.lag,
            target: name(result.target)?,
            estimate: result.estimate,
            q: result.q,
            n_eff: result.n_eff,
            df: result.df(),
            t_stat: result.t_stat,
            p_value: result.p_value,
            ci_low: result.ci.map(|c| c.low),
            ci_high: result.ci.map(|c| c.high),
            ci_level: result.ci.map(|c| c.level),
        })
    }
}

pub fn result_records(results: &[MeasureResult], names: &[String]) -> Result<Vec<ResultRecord>> {
    results.iter().map(|r| ResultRecord::new(r, names)).collect()
}

/// One CSV row per result, same columns as [`ResultRecord`].
pub fn write_results_csv<W: Write>(writer: W, results: &[MeasureResult], names: &[String]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record([
        "kind", "source", "lag", "target", "estimate", "q", "n_eff", "df", "t_stat", "p_value",
        "ci_low", "ci_high", "ci_level",
    ])?;
    for r in result_records(results, names)? {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Links table: source, target, lag, mit, p, ci_low, ci_high.
pub fn write_links_csv<W: Write>(writer: W, links: &[MeasureResult], names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["source", "target", "lag", "mit", "p", "ci_low", "ci_high"])?;
    for r in result_records(links, names)? {
        w.write_record([
            r.source,
            r.target,
            r.lag.to_string(),
            r.estimate.to_string(),
            r.p_value.to_string(),
            opt(r.ci_low),
            opt(r.ci_high),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Links table row as read back.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct LinkRow {
    pub source: String,
    pub target: String,
    pub lag: usize,
    pub mit: f64,
    pub p: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

pub fn read_links_csv<R: Read>(reader: R) -> Result<Vec<LinkRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Lagged covariance table: lag, row, col, value; row variable leads by `lag`
/// (entry `Gamma_{row,col}(lag)`).
pub fn write_gamma_csv<W: Write>(writer: W, table: &CovarianceTable, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lag", "row", "col", "value"])?;
    for tau in 0..=table.tau_max() {
        let g = table.gamma(tau).expect("lag within table");
        if g.nrows() != names.len() {
            return Err(Error::Dimension("names do not match the covariance table".into()));
        }
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                w.write_record([tau.to_string(), names[i].clone(), names[j].clone(), g[(i, j)].to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// q-q table: theoretical, empirical, kind, df.
pub fn write_qq_csv<W: Write>(writer: W, qq: &QqPlot, kind: MeasureKind, df: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["theoretical", "empirical", "kind", "df"])?;
    for p in &qq.points {
        w.write_record([p.theoretical.to_string(), p.empirical.to_string(), kind.to_string(), df.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    create(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LaggedNode;
    use crate::measures::ConfidenceInterval;
    use crate::model::simulate;

    #[test]
    fn data_round_trip_is_bit_exact() {
        let m = VarModel::with_default_names(
            vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.3, 0.4])],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let d = simulate(&m, 500, 3, None).unwrap();
        let mut buf = Vec::new();
        write_data(&mut buf, &d).unwrap();
        let back = read_data(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn missing_values_are_rejected() {
        let err = read_data("a,b\n1,2\n3,\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse(ref m) if m.contains("line 3")), "{err}");
        assert!(read_data("a,b\n1,NaN\n".as_bytes()).is_err());
        assert!(read_data("a,b\n1,x\n".as_bytes()).is_err());
        assert!(read_data("a,b\n1,2,3\n".as_bytes()).is_err());
        assert!(matches!(read_data("a,b\n".as_bytes()), Err(Error::Length(_))));
    }

    #[test]
    fn links_csv_round_trip() {
        let names = vec!["X".to_string(), "Y".to_string()];
        let r = MeasureResult {
            kind: MeasureKind::Mit,
            source: LaggedNode::new(0, 1),
            target: 1,
            estimate: 0.25,
            q: 2,
            n_eff: 100,
            t_stat: 2.5,
            p_value: 0.01,
            ci: Some(ConfidenceInterval { low: 0.1, high: 0.4, level: 0.9 }),
        };
        let mut no_ci = r.clone();
        no_ci.ci = None;
        let mut buf = Vec::new();
        write_links_csv(&mut buf, &[r, no_ci], &names).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("source,target,lag,mit,p,ci_low,ci_high\nX,Y,1,0.25,0.01,0.1,0.4\n"));
        let rows = read_links_csv(buf.as_slice()).unwrap();
        assert_eq!(rows[1].ci_low, None);
        assert_eq!(rows[0].mit, 0.25);
    }

    #[test]
    fn record_names_variables() {
        let names = vec!["X".to_string(), "Y".to_string()];
        let r = MeasureResult {
            kind: MeasureKind::Cc,
            source: LaggedNode::new(1, 3),
            target: 0,
            estimate: -0.5,
            q: 0,
            n_eff: 50,
            t_stat: -4.0,
            p_value: 1e-4,
            ci: None,
        };
        let json = serde_json::to_value(ResultRecord::new(&r, &names).unwrap()).unwrap();
        assert_eq!(json["source"], "Y");
        assert_eq!(json["kind"], "CC");
        assert_eq!(json["df"], 48);
        assert!(json.get("ci_low").is_none());
    }
}
