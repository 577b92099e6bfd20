use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::LabeledSequence;
use crate::data::ObservationSequence;
use crate::error::{Error, Result};

pub const BEE_LABELS: [&str; 3] = ["waggle", "turn-right", "turn-left"];

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

fn parse_field(record: &csv::StringRecord, idx: usize, name: &str, row: usize) -> Result<f64> {
    let raw = record.get(idx).ok_or_else(|| Error::Format {
        row,
        message: format!("missing column {name}"),
    })?;
    let v: f64 = raw.parse().map_err(|_| Error::Format {
        row,
        message: format!("column {name}: cannot parse {raw:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Format {
            row,
            message: format!("column {name} is not finite"),
        });
    }
    Ok(v)
}

/// Read a sequence with header `dim0..dim{d−1}` and an optional `label`
/// column. Rows are numbered from 1 after the header.
pub fn read_sequence(path: &Path) -> Result<(ObservationSequence, Option<Vec<usize>>)> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut dims = Vec::new();
    while let Some(i) = headers.iter().position(|h| h == format!("dim{}", dims.len())) {
        dims.push(i);
    }
    if dims.is_empty() {
        return Err(Error::Data(format!("{}: no dim0 column", path.display())));
    }
    let label_col = headers.iter().position(|h| h == "label");
    let mut values = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        for (k, &c) in dims.iter().enumerate() {
            values.push(parse_field(&rec, c, &format!("dim{k}"), row)?);
        }
        if let (Some(c), Some(l)) = (label_col, labels.as_mut()) {
            let raw = rec.get(c).unwrap_or("");
            l.push(raw.parse::<usize>().map_err(|_| Error::Format {
                row,
                message: format!("label {raw:?} is not a nonnegative integer"),
            })?);
        }
    }
    Ok((ObservationSequence::new(dims.len(), values)?, labels))
}

/// Write observations (and labels when given) in the `dim*`/`label` layout.
/// Values use the shortest representation that round-trips exactly.
pub fn write_sequence(path: &Path, obs: &ObservationSequence, labels: Option<&[usize]>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    let header: Vec<String> = (0..obs.dim()).map(|k| format!("dim{k}")).collect();
    write!(w, "{}", header.join(",")).map_err(io)?;
    if labels.is_some() {
        write!(w, ",label").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for t in 0..obs.len() {
        let row: Vec<String> = obs.row(t).iter().map(|v| format!("{v:?}")).collect();
        write!(w, "{}", row.join(",")).map_err(io)?;
        if let Some(l) = labels {
            write!(w, ",{}", l[t]).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_labeled(path: &Path, seq: &LabeledSequence) -> Result<()> {
    write_sequence(path, &seq.observations, Some(&seq.labels))
}

/// Read a single integer label column, e.g. a modal state sequence.
pub fn read_labels(path: &Path, column: &str) -> Result<Vec<usize>> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let c = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::Data(format!("{}: no {column} column", path.display())))?;
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let raw = rec.get(c).unwrap_or("");
            raw.parse().map_err(|_| Error::Format {
                row: i + 1,
                message: format!("{column} {raw:?} is not a nonnegative integer"),
            })
        })
        .collect()
}

/// Bee-dance tracking CSV with columns t, x, y, theta, label. Each row
/// becomes (cos θ, sin θ, x, y); labels map waggle → 0, turn-right → 1,
/// turn-left → 2.
pub fn load_bee(path: &Path) -> Result<LabeledSequence> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("{}: missing column {name}", path.display())))
    };
    let (cx, cy, ct, cl) = (col("x")?, col("y")?, col("theta")?, col("label")?);
    col("t")?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => Error::Format {
                row,
                message: "wrong number of fields".into(),
            },
            _ => csv_error(path, e),
        })?;
        let x = parse_field(&rec, cx, "x", row)?;
        let y = parse_field(&rec, cy, "y", row)?;
        let theta = parse_field(&rec, ct, "theta", row)?;
        let raw = rec.get(cl).unwrap_or("");
        let label = BEE_LABELS.iter().position(|l| *l == raw).ok_or_else(|| Error::Format {
            row,
            message: format!("unknown label {raw:?}"),
        })?;
        values.extend_from_slice(&[theta.cos(), theta.sin(), x, y]);
        labels.push(label);
    }
    Ok(LabeledSequence {
        observations: ObservationSequence::new(4, values)?,
        labels,
        meta: format!("bee {}", path.display()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let obs = ObservationSequence::new(2, vec![0.1, -1e-300, 1.0 / 3.0, 12345.678901234567]).unwrap();
        write_sequence(&p, &obs, Some(&[0, 1])).unwrap();
        let (back, labels) = read_sequence(&p).unwrap();
        assert_eq!(back.values(), obs.values());
        assert_eq!(labels, Some(vec![0, 1]));
    }

    #[test]
    fn bee_rows_map_to_angle_and_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let two_pi = 2.0 * std::f64::consts::PI;
        std::fs::write(&p, format!("t,x,y,theta,label\n0,1,2,0,waggle\n1,1,2,{two_pi},turn-left\n")).unwrap();
        let s = load_bee(&p).unwrap();
        assert_eq!(s.observations.row(0), &[1.0, 0.0, 1.0, 2.0]);
        let r = s.observations.row(1);
        assert!((r[0] - 1.0).abs() < 1e-15 && r[1].abs() < 1e-15);
        assert_eq!(s.labels, vec![0, 2]);
    }

    #[test]
    fn malformed_bee_row_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let mut text = String::from("t,x,y,theta,label\n");
        for t in 0..16 {
            text.push_str(&format!("{t},0,0,0,waggle\n"));
        }
        text.push_str("16,abc,0,0,waggle\n");
        std::fs::write(&p, text).unwrap();
        match load_bee(&p) {
            Err(Error::Format { row, .. }) => assert_eq!(row, 17),
            other => panic!("{other:?}"),
        }
    }
}
