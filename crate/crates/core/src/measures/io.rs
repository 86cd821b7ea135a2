//! CSV formats: grids as `i1,...,id,value` with a leading `# lo=..;hi=..;n=..`
//! geometry comment, point clouds as `x1,...,xd,weight`.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{EmpiricalMeasure, GridDensity};

fn join(v: impl Iterator<Item = String>) -> String {
    v.collect::<Vec<_>>().join(" ")
}

pub fn write_grid_csv(g: &GridDensity, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "# lo={};hi={};n={}",
        join(g.lo().iter().map(|v| format!("{v:e}"))),
        join(g.hi().iter().map(|v| format!("{v:e}"))),
        join(g.shape().iter().map(|v| v.to_string()))
    )?;
    let d = g.dim();
    let header: Vec<String> = (1..=d)
        .map(|k| format!("i{k}"))
        .chain(std::iter::once("value".into()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    let mut idx = vec![0; d];
    for (flat, v) in g.values().iter().enumerate() {
        g.multi_index(flat, &mut idx);
        let cols: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        writeln!(out, "{},{v:e}", cols.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| Error::Parse(format!("bad grid geometry entry {t:?}")))
        })
        .collect()
}

pub fn read_grid_csv(path: &Path) -> Result<GridDensity> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let geom = first.trim().strip_prefix('#').ok_or_else(|| {
        Error::Parse("grid CSV must start with a `# lo=..;hi=..;n=..` line".into())
    })?;
    let (mut lo, mut hi, mut n) = (None, None, None);
    for part in geom.split(';') {
        let (k, v) = part
            .trim()
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad geometry {part:?}")))?;
        match k.trim() {
            "lo" => lo = Some(parse_list::<f64>(v)?),
            "hi" => hi = Some(parse_list::<f64>(v)?),
            "n" => n = Some(parse_list::<usize>(v)?),
            other => return Err(Error::Parse(format!("unknown geometry key {other:?}"))),
        }
    }
    let (lo, hi, n) = match (lo, hi, n) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::Parse("grid geometry needs lo, hi and n".into())),
    };
    let cells: usize = n.iter().product();
    let mut values = vec![f64::NAN; cells];
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let d = n.len();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(Error::Parse(format!(
                "grid row has {} fields, expected {}",
                rec.len(),
                d + 1
            )));
        }
        let mut flat = 0;
        for k in 0..d {
            let i: usize = rec[k]
                .parse()
                .map_err(|_| Error::Parse(format!("bad cell index {:?}", &rec[k])))?;
            if i >= n[k] {
                return Err(Error::Parse(format!(
                    "cell index {i} out of range on axis {k}"
                )));
            }
            flat = flat * n[k] + i;
        }
        values[flat] = rec[d]
            .parse()
            .map_err(|_| Error::Parse(format!("bad value {:?}", &rec[d])))?;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Parse("grid CSV does not list every cell".into()));
    }
    GridDensity::new(lo, hi, n, values)
}

pub fn write_empirical_csv(m: &EmpiricalMeasure, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let d = m.dim();
    let header: Vec<String> = (1..=d)
        .map(|k| format!("x{k}"))
        .chain(std::iter::once("weight".into()))
        .collect();
    w.write_record(&header)?;
    for i in 0..m.len() {
        let row: Vec<String> = m
            .point(i)
            .iter()
            .chain(std::iter::once(&m.weights()[i]))
            .map(|v| format!("{v:e}"))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_empirical_csv(path: &Path) -> Result<EmpiricalMeasure> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = rdr.headers()?.clone();
    let d = header
        .len()
        .checked_sub(1)
        .filter(|d| *d > 0)
        .ok_or_else(|| Error::Parse("empirical CSV needs x1..xd,weight".into()))?;
    if &header[d] != "weight" {
        return Err(Error::Parse(
            "last empirical column must be `weight`".into(),
        ));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        for k in 0..d {
            points.push(
                rec[k]
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad coordinate {:?}", &rec[k])))?,
            );
        }
        weights.push(
            rec[d]
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad weight {:?}", &rec[d])))?,
        );
    }
    EmpiricalMeasure::new(d, points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let g = GridDensity::from_unnormalized(
            vec![-1.0, 0.0],
            vec![1.0, 2.0],
            vec![3, 2],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap();
        write_grid_csv(&g, &p).unwrap();
        let h = read_grid_csv(&p).unwrap();
        assert_eq!(g.shape(), h.shape());
        for (a, b) in g.values().iter().zip(h.values()) {
            assert!((a - b).abs() <= 1e-15 * a.abs());
        }
    }

    #[test]
    fn empirical_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let m = EmpiricalMeasure::new(2, vec![0.0, 1.0, 2.0, 3.0], vec![0.25, 0.75]).unwrap();
        write_empirical_csv(&m, &p).unwrap();
        assert_eq!(read_empirical_csv(&p).unwrap(), m);
    }
}
