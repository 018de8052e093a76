//! File formats: CSV datasets, model JSON, the Statlog shuttle file and the
//! plot-ready CSV exports.
//!
//! CSV is comma-separated with a header row and `.` decimals. Floats are
//! written in Rust's shortest round-trip form, so re-reading an exported file
//! reproduces the values bit for bit.

use std::io::{BufRead, Read, Write};

use rand::seq::index::sample;

use crate::data::DataMatrix;
use crate::datagen::rng_from_seed;
use crate::error::{Result, SvddError};
use crate::eval::{F1Sweep, Metrics, PolygonRow, RatioSummary};
use crate::solver::{ModelFile, SvddModel};
use crate::smoothing::SplineFit;
use crate::tuning::ObjectiveCurve;

/// Dataset with an optional integer label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DataMatrix,
    pub labels: Option<Vec<i64>>,
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| SvddError::Parse {
        line,
        message: format!("column '{column}': '{field}' is not a number"),
    })
}

/// Header plus rows; `dataset` is `None` for a header-only file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub dataset: Option<Dataset>,
}

/// Reads `x1,...,xm[,label]` CSV. Feature columns may have any names; a
/// final column named `label` is read as integers.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    read_table(reader)?
        .dataset
        .ok_or_else(|| SvddError::Input("dataset has no rows".into()))
}

/// As [`read_dataset`], accepting a file with no rows.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let has_label = header.last().is_some_and(|h| h == "label");
    let cols = header.len() - usize::from(has_label);
    if cols == 0 {
        return Err(SvddError::Parse {
            line: 1,
            message: "no feature columns".into(),
        });
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != header.len() {
            return Err(SvddError::Parse {
                line,
                message: format!("expected {} fields, got {}", header.len(), record.len()),
            });
        }
        for (j, field) in record.iter().take(cols).enumerate() {
            values.push(parse_f64(field, line, &header[j])?);
        }
        if has_label {
            let field = record[cols].trim();
            labels.push(field.parse::<i64>().map_err(|_| SvddError::Parse {
                line,
                message: format!("label '{field}' is not an integer"),
            })?);
        }
    }
    let dataset = if values.is_empty() {
        None
    } else {
        Some(Dataset {
            x: DataMatrix::new(values.len() / cols, cols, values)?,
            labels: has_label.then_some(labels),
        })
    };
    Ok(Table { header, dataset })
}

pub fn write_dataset<W: Write>(writer: W, x: &DataMatrix, labels: Option<&[i64]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != x.rows() {
            return Err(SvddError::Dimension {
                expected: x.rows(),
                got: l.len(),
            });
        }
    }
    let mut csv = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=x.cols()).map(|j| format!("x{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    csv.write_record(&header)?;
    for (i, row) in x.iter_rows().enumerate() {
        let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            record.push(l[i].to_string());
        }
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_model<W: Write>(writer: W, model: &SvddModel) -> Result<()> {
    serde_json::to_writer_pretty(writer, &model.to_file())?;
    Ok(())
}

/// Reads a model file, rejecting other `format_version`s.
pub fn read_model<R: Read>(reader: R) -> Result<SvddModel> {
    let value: serde_json::Value = serde_json::from_reader(reader)?;
    // check the version before the rest of the schema so old files get a
    // precise error rather than a missing-field one
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(crate::solver::MODEL_FORMAT_VERSION) => {}
        found => {
            return Err(SvddError::SchemaMismatch {
                found: found.map_or(0, |v| v as u32),
                expected: crate::solver::MODEL_FORMAT_VERSION,
            })
        }
    }
    let file: ModelFile = serde_json::from_value(value)?;
    SvddModel::from_file(&file)
}

pub const SHUTTLE_FEATURES: usize = 9;
pub const SHUTTLE_URL: &str = "https://archive.ics.uci.edu/dataset/148/statlog+shuttle";

/// Statlog shuttle rows: nine numeric attributes and the class (1 to 7).
#[derive(Debug, Clone, PartialEq)]
pub struct ShuttleData {
    pub x: DataMatrix,
    pub classes: Vec<u8>,
}

/// Parses whitespace-separated shuttle records (`shuttle.trn`/`shuttle.tst`
/// layout). Blank lines are skipped.
pub fn read_shuttle<R: BufRead>(reader: R) -> Result<ShuttleData> {
    let mut values = Vec::new();
    let mut classes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let number = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != SHUTTLE_FEATURES + 1 {
            return Err(SvddError::Parse {
                line: number,
                message: format!("expected {} fields, got {}", SHUTTLE_FEATURES + 1, fields.len()),
            });
        }
        for (j, f) in fields[..SHUTTLE_FEATURES].iter().enumerate() {
            values.push(parse_f64(f, number, &format!("a{}", j + 1))?);
        }
        let class = fields[SHUTTLE_FEATURES];
        classes.push(class.parse::<u8>().map_err(|_| SvddError::Parse {
            line: number,
            message: format!("class '{class}' is not an integer"),
        })?);
    }
    if classes.is_empty() {
        return Err(SvddError::Input("shuttle file has no records".into()));
    }
    Ok(ShuttleData {
        x: DataMatrix::new(classes.len(), SHUTTLE_FEATURES, values)?,
        classes,
    })
}

/// Training sample of one class plus the remaining rows as a labeled
/// evaluation set (label `true` for that class).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSplit {
    pub train: DataMatrix,
    pub train_indices: Vec<usize>,
    pub eval: DataMatrix,
    pub eval_labels: Vec<bool>,
}

pub fn split_class_sample(data: &ShuttleData, class: u8, count: usize, seed: u64) -> Result<ClassSplit> {
    let members: Vec<usize> = (0..data.classes.len()).filter(|&i| data.classes[i] == class).collect();
    if count == 0 || count > members.len() {
        return Err(SvddError::Input(format!(
            "cannot sample {count} rows of class {class}: {} available",
            members.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut train_indices: Vec<usize> = sample(&mut rng, members.len(), count)
        .into_iter()
        .map(|k| members[k])
        .collect();
    train_indices.sort_unstable();
    let mut in_train = vec![false; data.classes.len()];
    for &i in &train_indices {
        in_train[i] = true;
    }
    let rest: Vec<usize> = (0..data.classes.len()).filter(|&i| !in_train[i]).collect();
    Ok(ClassSplit {
        train: data.x.select_rows(&train_indices)?,
        eval: data.x.select_rows(&rest)?,
        eval_labels: rest.iter().map(|&i| data.classes[i] == class).collect(),
        train_indices,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Curve export with the spline band and zero mask where available. Grid
/// end points have no derivative estimates and leave those fields empty.
pub fn write_curve<W: Write>(writer: W, curve: &ObjectiveCurve, band: Option<(&SplineFit, &[bool])>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "s", "v_star", "d1", "d2", "d2_fitted", "ci_lower", "ci_upper", "in_zero_region",
    ])?;
    let last = curve.s_values.len() - 1;
    for (i, (&s, &v)) in curve.s_values.iter().zip(&curve.v_star).enumerate() {
        let interior = (i > 0 && i < last).then(|| i - 1);
        let d = |vals: &[f64]| opt(interior.map(|k| vals[k]));
        let field = |pick: fn(&SplineFit, &[bool], usize) -> String| match (band, interior) {
            (Some((fit, mask)), Some(k)) => pick(fit, mask, k),
            _ => String::new(),
        };
        csv.write_record([
            s.to_string(),
            v.to_string(),
            d(&curve.d1),
            d(&curve.d2),
            field(|fit, _, k| fit.fitted[k].to_string()),
            field(|fit, _, k| fit.ci_lower[k].to_string()),
            field(|fit, _, k| fit.ci_upper[k].to_string()),
            field(|_, mask, k| u8::from(mask[k]).to_string()),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// `(s, value)` pairs, e.g. a baseline criterion curve.
pub fn write_pairs<W: Write>(writer: W, value_name: &str, pairs: &[(f64, f64)]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["s", value_name])?;
    for (s, v) in pairs {
        csv.write_record([s.to_string(), v.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_f1_curve<W: Write>(writer: W, s_values: &[f64], metrics: &[Metrics]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["s", "precision", "recall", "f1"])?;
    for (s, m) in s_values.iter().zip(metrics) {
        csv.write_record([s.to_string(), m.precision.to_string(), m.recall.to_string(), m.f1.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_f1_sweep<W: Write>(writer: W, sweep: &F1Sweep) -> Result<()> {
    write_f1_curve(writer, &sweep.s_values, &sweep.metrics)
}

/// Per-polygon rows. Failed polygons keep their identifying fields and
/// carry the reason in the trailing `error` column.
pub fn write_polygon_rows<W: Write>(writer: W, rows: &[PolygonRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "vertex_count", "polygon_index", "seed", "s_peak_low", "s_peak_high", "s_recommended",
        "f_peak", "s_best", "f_best", "ratio", "error",
    ])?;
    for r in rows {
        csv.write_record([
            r.vertex_count.to_string(),
            r.polygon_index.to_string(),
            r.seed.to_string(),
            opt(r.s_peak_low),
            opt(r.s_peak_high),
            opt(r.s_recommended),
            opt(r.f_peak),
            opt(r.s_best),
            opt(r.f_best),
            opt(r.ratio),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Box-plot summary, one row per vertex count.
pub fn write_ratio_summary<W: Write>(writer: W, summary: &[RatioSummary]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for s in summary {
        csv.serialize(s)?;
    }
    if summary.is_empty() {
        csv.write_record(["vertex_count", "min", "q1", "median", "q3", "max", "mean"])?;
    }
    csv.flush()?;
    Ok(())
}
