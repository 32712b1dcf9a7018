//! File formats and text parsing shared by the library and the CLI.

use std::path::Path;

use crate::error::{Error, Result};
use crate::evolve::TrajectorySample;
use crate::linalg::{CMatrix, C64};

/// Full round-trip formatting with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}

/// A table of named numeric columns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table { headers: headers.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|&x| fmt_f64(x)))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("ascii"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|_| Error::invalid(format!("not a number: '{f}'"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Table { headers, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

/// Entries of a square complex matrix as row, col, re, im with 0-based
/// indices.
pub fn matrix_csv(m: &CMatrix) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "col", "re", "im"])?;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            w.write_record([r.to_string(), c.to_string(), fmt_f64(z.re), fmt_f64(z.im)])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ascii"))
}

/// Reads a matrix written by [`matrix_csv`].
pub fn read_matrix_csv(text: &str) -> Result<CMatrix> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut entries = Vec::new();
    for rec in r.deserialize::<(usize, usize, f64, f64)>() {
        entries.push(rec?);
    }
    let d = (entries.len() as f64).sqrt().round() as usize;
    if d * d != entries.len() {
        return Err(Error::invalid("matrix csv must hold a square matrix"));
    }
    let mut m = CMatrix::zeros(d, d);
    for (row, col, re, im) in entries {
        if row >= d || col >= d {
            return Err(Error::invalid("matrix csv index out of range"));
        }
        m[(row, col)] = C64::new(re, im);
    }
    Ok(m)
}

/// Trajectory CSV with columns t_s, observable_name, value.
pub fn trajectory_csv(samples: &[TrajectorySample]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t_s", "observable_name", "value"])?;
    for s in samples {
        w.write_record([fmt_f64(s.t_s), s.observable_name.clone(), fmt_f64(s.value)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ascii"))
}

/// Parses a duration such as "1ms", "2650us", "0.5 s" or a bare number of seconds.
pub fn parse_duration(text: &str) -> Result<f64> {
    let t = text.trim();
    let (num, scale) = if let Some(v) = t.strip_suffix("ns") {
        (v, 1e-9)
    } else if let Some(v) = t.strip_suffix("us").or_else(|| t.strip_suffix("µs")) {
        (v, 1e-6)
    } else if let Some(v) = t.strip_suffix("ms") {
        (v, 1e-3)
    } else if let Some(v) = t.strip_suffix('s') {
        (v, 1.0)
    } else {
        (t, 1.0)
    };
    let x: f64 = num.trim().parse().map_err(|_| Error::invalid(format!("cannot parse duration '{text}'")))?;
    if !x.is_finite() || x < 0.0 {
        return Err(Error::invalid(format!("duration must be non-negative, got '{text}'")));
    }
    Ok(x * scale)
}

/// Parses "start:stop:step" (inclusive of stop when it lands on the grid) or
/// a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::invalid(format!("cannot parse grid '{text}'"));
    if text.contains(':') {
        let parts: Vec<f64> = text
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if parts.len() != 3 {
            return Err(bad());
        }
        let (a, b, step) = (parts[0], parts[1], parts[2]);
        if !(step > 0.0) || b < a {
            return Err(Error::invalid(format!("grid '{text}' needs a positive step and stop >= start")));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        if count > 10_000_000 {
            return Err(Error::invalid("grid too large"));
        }
        Ok((0..count).map(|k| a + k as f64 * step).collect())
    } else {
        text.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect()
    }
}

/// Parses "1,2" into a 0-based pair.
pub fn parse_pair(text: &str) -> Result<(usize, usize)> {
    let v: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| Error::invalid(format!("cannot parse spin pair '{text}'"))))
        .collect::<Result<_>>()?;
    match v.as_slice() {
        [a, b] if *a >= 1 && *b >= 1 => Ok((a - 1, b - 1)),
        _ => Err(Error::invalid(format!("spin pair '{text}' must be two 1-based indices"))),
    }
}

/// Serde adapter storing a 0-based index as 1-based.
pub mod one_based {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(*v as u64 + 1)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let v = u64::deserialize(d)?;
        if v == 0 {
            return Err(serde::de::Error::custom("spin indices start at 1"));
        }
        Ok(v as usize - 1)
    }
}

/// Serde adapter for an optional set of spin indices.
pub mod one_based_set {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<usize>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|x| x.iter().map(|k| k + 1).collect::<Vec<_>>()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<usize>>, D::Error> {
        let v: Option<Vec<usize>> = Option::deserialize(d)?;
        match v {
            None => Ok(None),
            Some(list) => {
                if list.contains(&0) {
                    return Err(serde::de::Error::custom("spin indices start at 1"));
                }
                Ok(Some(list.into_iter().map(|k| k - 1).collect()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23, 1.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1.0 / 3.0), "3.3333333333333331e-1");
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("1ms").unwrap(), 1e-3);
        assert!((parse_duration("2650us").unwrap() - 2.65e-3).abs() < 1e-18);
        assert_eq!(parse_duration("0.5").unwrap(), 0.5);
        assert!(parse_duration("fast").is_err());
    }

    #[test]
    fn grids() {
        let g = parse_grid("-2000:2000:10").unwrap();
        assert_eq!(g.len(), 401);
        assert_eq!(g[0], -2000.0);
        assert_eq!(*g.last().unwrap(), 2000.0);
        assert_eq!(parse_grid("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_grid("3:1:1").is_err());
    }

    #[test]
    fn pairs_are_one_based() {
        assert_eq!(parse_pair("1,2").unwrap(), (0, 1));
        assert!(parse_pair("0,2").is_err());
    }
}
