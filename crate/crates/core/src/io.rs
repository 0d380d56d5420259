//! Dataset CSV format.
//!
//! Header columns: `x0..x{m-1}` (design values, `m = k·d`, alternative-major),
//! `y` or `y0..y{k-1}`, `w` (0 or 1) and `z0..z{dz-1}`, in any order. A label
//! may be left empty on rows with `w = 0`. Lines starting with `#` are skipped.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{Dataset, Design};
use crate::error::{GaiError, Result};

struct Columns {
    x: Vec<usize>,
    y: Vec<usize>,
    w: usize,
    z: Vec<usize>,
}

fn indexed(header: &csv::StringRecord, prefix: &str) -> Result<Vec<usize>> {
    let mut found: Vec<(usize, usize)> = Vec::new();
    for (pos, name) in header.iter().enumerate() {
        if let Some(rest) = name.strip_prefix(prefix) {
            if let Ok(j) = rest.parse::<usize>() {
                if rest == j.to_string() {
                    found.push((j, pos));
                }
            }
        }
    }
    found.sort_unstable();
    for (expect, (j, _)) in found.iter().enumerate() {
        if *j != expect {
            return Err(GaiError::Parse { line: 1, message: format!("column {prefix}{expect} is missing") });
        }
    }
    Ok(found.into_iter().map(|(_, pos)| pos).collect())
}

fn columns(header: &csv::StringRecord) -> Result<Columns> {
    let known = |name: &str| {
        name == "y" || name == "w" || ["x", "y", "z"].iter().any(|p| name.strip_prefix(p).is_some_and(|r| r.parse::<usize>().is_ok()))
    };
    if let Some(bad) = header.iter().find(|n| !known(n)) {
        return Err(GaiError::Parse { line: 1, message: format!("unknown column `{bad}`") });
    }
    let x = indexed(header, "x")?;
    let z = indexed(header, "z")?;
    let single = header.iter().position(|n| n == "y");
    let multi = indexed(header, "y")?;
    let y = match (single, multi.is_empty()) {
        (Some(p), true) => vec![p],
        (None, false) => multi,
        (Some(_), false) => {
            return Err(GaiError::Parse { line: 1, message: "use either `y` or `y0..`, not both".into() })
        }
        (None, true) => return Err(GaiError::Parse { line: 1, message: "missing label column `y`".into() }),
    };
    let w = header
        .iter()
        .position(|n| n == "w")
        .ok_or_else(|| GaiError::Parse { line: 1, message: "missing column `w`".into() })?;
    if x.is_empty() {
        return Err(GaiError::Parse { line: 1, message: "missing design columns `x0..`".into() });
    }
    if z.is_empty() {
        return Err(GaiError::Parse { line: 1, message: "missing signal columns `z0..`".into() });
    }
    if x.len() % y.len() != 0 {
        return Err(GaiError::Parse {
            line: 1,
            message: format!("{} design columns do not split into {} alternatives", x.len(), y.len()),
        });
    }
    Ok(Columns { x, y, w, z })
}

fn number(field: &str, name: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| GaiError::Parse { line, message: format!("column {name}: `{field}` is not a number") })?;
    if !v.is_finite() {
        return Err(GaiError::Parse { line, message: format!("column {name}: non-finite value") });
    }
    Ok(v)
}

fn csv_error(e: csv::Error) -> GaiError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            GaiError::Parse { line, message: format!("row has {len} fields, header has {expected_len}") }
        }
        csv::ErrorKind::Io(_) => GaiError::Io(std::io::Error::other(e.to_string())),
        _ => GaiError::Parse { line, message: e.to_string() },
    }
}

/// Parses a dataset from CSV text.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let cols = columns(&header)?;
    let k = cols.y.len();
    let d = cols.x.len() / k;
    let mut design = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut zs = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(e)),
        }
        let line = record.position().map_or(0, |p| p.line() as usize);
        for &c in &cols.x {
            design.push(number(&record[c], &header[c], line)?);
        }
        let w = match record[cols.w].trim() {
            "0" => false,
            "1" => true,
            other => return Err(GaiError::Parse { line, message: format!("column w: `{other}` is not 0 or 1") }),
        };
        let empty = cols.y.iter().filter(|&&c| record[c].trim().is_empty()).count();
        let y = if empty == k {
            if w {
                return Err(GaiError::Parse { line, message: "labeled row (w=1) without a label".into() });
            }
            None
        } else if empty > 0 {
            return Err(GaiError::Parse { line, message: "label is partially missing".into() });
        } else {
            Some(cols.y.iter().map(|&c| number(&record[c], &header[c], line)).collect::<Result<Vec<f64>>>()?)
        };
        ys.push(y);
        ws.push(w);
        for &c in &cols.z {
            zs.push(number(&record[c], &header[c], line)?);
        }
    }
    if ws.is_empty() {
        return Err(GaiError::Parse { line: 1, message: "dataset has no rows".into() });
    }
    Dataset::new(Design::new(k, d, design)?, ys, ws, zs, cols.z.len())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(File::open(path)?)
}

/// Writes every recorded label, including those of rows with `w = 0`.
/// Values use the shortest representation that parses back to the same `f64`.
pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let (k, m, dz) = (data.k(), data.k() * data.d(), data.dz());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..m).map(|j| format!("x{j}")).collect();
    if k == 1 {
        header.push("y".into());
    } else {
        header.extend((0..k).map(|j| format!("y{j}")));
    }
    header.push("w".into());
    header.extend((0..dz).map(|j| format!("z{j}")));
    wtr.write_record(&header).map_err(csv_error)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..data.n() {
        row.clear();
        row.extend(data.design.row(i).values().iter().map(|v| v.to_string()));
        match data.recorded_label(i) {
            Some(y) => row.extend(y.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), k)),
        }
        row.push(if data.is_labeled(i) { "1" } else { "0" }.into());
        row.extend(data.z(i).iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(data, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_fixture() {
        let text = "x0,x1,y,w,z0\n1,0.5,1.5,1,0.2\n1,-0.5,0.25,1,0.1\n1,2,,0,0.3\n";
        let d = read_dataset(text.as_bytes()).unwrap();
        assert_eq!((d.n(), d.d(), d.dz(), d.n_primary(), d.n_aux()), (3, 2, 1, 2, 1));
        assert_eq!(d.label(1), Some(&[0.25][..]));
    }

    #[test]
    fn rejects_bad_indicator() {
        let text = "x0,y,w,z0\n1,1,1,0\n1,1,2,0\n";
        match read_dataset(text.as_bytes()) {
            Err(GaiError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains('w'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_label_and_ragged_rows() {
        let text = "x0,y,w,z0\n1,,1,0\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(GaiError::Parse { line: 2, .. })));
        let text = "x0,y,w,z0\n1,1,1,0\n1,1,1\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(GaiError::Parse { line: 3, .. })));
        let text = "x0,y,w,z0,q\n1,1,1,0,0\n";
        assert!(read_dataset(text.as_bytes()).is_err());
        let text = "x0,y,w,z0\n";
        assert!(read_dataset(text.as_bytes()).is_err());
    }

    #[test]
    fn multinomial_columns() {
        let text = "x0,x1,x2,x3,y0,y1,w,z0\n1,0,0,1,0,1,1,2\n0,1,1,1,,,0,0\n";
        let d = read_dataset(text.as_bytes()).unwrap();
        assert_eq!((d.k(), d.d()), (2, 2));
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }
}
