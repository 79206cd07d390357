//! ASCII point-cloud readers and the prediction writer.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CloudFormat {
    /// `x y z intensity r g b` rows plus a sibling `.labels` file with one
    /// integer per row; label 0 means unlabeled (kept, excluded from loss),
    /// label k >= 1 becomes class k - 1.
    Semantic3dLike,
    /// `x y z r g b label` rows with a 0-based trailing class index.
    S3disLike,
    /// `x y z label` rows as written by [`write_predictions`]; label -1
    /// means unlabeled.
    XyzLabel,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn parse_f64(tok: &str, path: &Path, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| parse_err(path, line, format!("non-numeric token `{tok}`")))
}

fn parse_i64(tok: &str, path: &Path, line: usize) -> Result<i64> {
    tok.parse::<i64>().map_err(|_| parse_err(path, line, format!("non-integer token `{tok}`")))
}

/// Reads a point cloud in one of the supported ASCII formats. Only xyz feeds
/// the model; remaining numeric columns are kept as attributes.
pub fn read_xyz_label(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let reader = BufReader::new(File::open(path)?);
    let mut points = Vec::new();
    let mut attributes = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    let expected_cols = match format {
        CloudFormat::Semantic3dLike | CloudFormat::S3disLike => 7,
        CloudFormat::XyzLabel => 4,
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != expected_cols {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {expected_cols} columns, got {}", tokens.len()),
            ));
        }
        let x = parse_f64(tokens[0], path, lineno)?;
        let y = parse_f64(tokens[1], path, lineno)?;
        let z = parse_f64(tokens[2], path, lineno)?;
        points.push(Point3::new(x, y, z));
        match format {
            CloudFormat::Semantic3dLike | CloudFormat::S3disLike => {
                let extras = if format == CloudFormat::S3disLike {
                    let label = parse_i64(tokens[6], path, lineno)?;
                    if label < 0 {
                        return Err(parse_err(path, lineno, format!("negative label {label}")));
                    }
                    labels.push(Some(label as usize));
                    &tokens[3..6]
                } else {
                    &tokens[3..7]
                };
                let mut attr = Vec::with_capacity(extras.len());
                for t in extras {
                    attr.push(parse_f64(t, path, lineno)?);
                }
                attributes.push(attr);
            }
            CloudFormat::XyzLabel => {
                let label = parse_i64(tokens[3], path, lineno)?;
                labels.push(if label < 0 { None } else { Some(label as usize) });
            }
        }
    }
    let mut cloud = PointCloud::from_points(points);
    if !attributes.is_empty() {
        cloud.attributes = Some(attributes);
    }
    match format {
        CloudFormat::Semantic3dLike => {
            let labels_path = path.with_extension("labels");
            let mut raw = Vec::new();
            for (i, line) in BufReader::new(File::open(&labels_path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let v = parse_i64(line.trim(), &labels_path, i + 1)?;
                if v < 0 {
                    return Err(parse_err(&labels_path, i + 1, format!("negative label {v}")));
                }
                raw.push(if v == 0 { None } else { Some(v as usize - 1) });
            }
            if raw.len() != cloud.len() {
                return Err(Error::LabelCountMismatch { labels: raw.len(), points: cloud.len() });
            }
            if !raw.is_empty() {
                cloud.labels = Some(raw);
            }
        }
        CloudFormat::S3disLike | CloudFormat::XyzLabel => {
            if !labels.is_empty() {
                cloud.labels = Some(labels);
            }
        }
    }
    Ok(cloud)
}

/// Writes `x y z label` rows; coordinates carry 17 significant digits so a
/// read-back reproduces them bitwise. `None` labels are written as -1.
pub fn write_predictions(
    cloud: &PointCloud,
    labels: &[Option<usize>],
    path: &Path,
) -> Result<()> {
    if labels.len() != cloud.len() {
        return Err(Error::LabelCountMismatch { labels: labels.len(), points: cloud.len() });
    }
    let mut w = BufWriter::new(File::create(path)?);
    for (p, label) in cloud.points.iter().zip(labels) {
        let l: i64 = label.map_or(-1, |v| v as i64);
        writeln!(w, "{:.16e} {:.16e} {:.16e} {l}", p.x, p.y, p.z)?;
    }
    w.flush()?;
    Ok(())
}
