//! Point-set CSV files: header `x0,x1[,label]`, one row per point.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::synthdata::PointBatch;

fn csv_error(path: &Path, detail: impl ToString) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

pub fn write_points(path: &Path, points: &PointBatch) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = (0..points.dim()).map(|k| format!("x{k}")).collect();
    if points.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (i, row) in points.data().rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        if let Some(l) = points.labels() {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_points(path: &Path) -> Result<PointBatch> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        },
        _ => csv_error(path, e),
    })?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let labeled = header.iter().next_back() == Some("label");
    let dim = header.len() - usize::from(labeled);
    if dim == 0 || header.iter().take(dim).enumerate().any(|(k, h)| h != format!("x{k}")) {
        return Err(csv_error(path, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != header.len() {
            return Err(csv_error(path, format!("row {}: expected {} fields", line + 1, header.len())));
        }
        for field in rec.iter().take(dim) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| csv_error(path, format!("row {}: bad number {field:?}", line + 1)))?;
            values.push(v);
        }
        if labeled {
            let l: usize = rec[dim]
                .trim()
                .parse()
                .map_err(|_| csv_error(path, format!("row {}: bad label {:?}", line + 1, &rec[dim])))?;
            labels.push(l);
        }
    }
    let n = values.len() / dim;
    let data = Array2::from_shape_vec((n, dim), values).expect("row-major values");
    let batch = if labeled {
        PointBatch::with_labels(data, labels)
    } else {
        PointBatch::new(data)
    };
    batch.map_err(|e| csv_error(path, e))
}
