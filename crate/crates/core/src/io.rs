//! Spectrum CSV: `#`-prefixed `key: value` metadata lines, a header row
//! `freq_hz,value_quanta`, then one row per grid point. Values are densities
//! per unit `dω/2π`, i.e. per hertz. Result tables use the same layout with
//! arbitrary columns; see [`Table`].

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linsolve::{FrequencyGrid, Spectrum, SpectrumKind};
use crate::units::{hz_to_rad, rad_to_hz};

pub const SPECTRUM_HEADER: [&str; 2] = ["freq_hz", "value_quanta"];

fn kind_name(kind: SpectrumKind) -> &'static str {
    match kind {
        SpectrumKind::Displacement => "displacement",
        SpectrumKind::Momentum => "momentum",
        SpectrumKind::HeterodyneOutput => "heterodyne-output",
        SpectrumKind::OutputQuadratureX => "output-quadrature-x",
        SpectrumKind::OutputQuadratureY => "output-quadrature-y",
        SpectrumKind::Measured => "measured",
    }
}

fn parse_kind(s: &str) -> Option<SpectrumKind> {
    [
        SpectrumKind::Displacement,
        SpectrumKind::Momentum,
        SpectrumKind::HeterodyneOutput,
        SpectrumKind::OutputQuadratureX,
        SpectrumKind::OutputQuadratureY,
        SpectrumKind::Measured,
    ]
    .into_iter()
    .find(|k| kind_name(*k) == s)
}

/// Write `# key: value` lines; multi-line values repeat the key per line.
pub fn write_metadata<W: Write>(w: &mut W, metadata: &[(String, String)]) -> Result<()> {
    for (k, v) in metadata {
        for line in v.lines() {
            writeln!(w, "# {k}: {line}")?;
        }
    }
    Ok(())
}

pub fn write_spectrum_csv<W: Write>(mut w: W, spectrum: &Spectrum, metadata: &[(String, String)]) -> Result<()> {
    write_metadata(&mut w, metadata)?;
    writeln!(w, "# kind: {}", kind_name(spectrum.kind))?;
    writeln!(w, "# one_sided: {}", spectrum.one_sided)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(SPECTRUM_HEADER)?;
    for (omega, v) in spectrum.frequencies().iter().zip(&spectrum.values) {
        csv.write_record([format!("{:.17e}", rad_to_hz(*omega)), format!("{v:.17e}")])?;
    }
    csv.flush()?;
    Ok(())
}

/// Metadata lines and the data rows of a `#`-annotated CSV file.
pub fn split_metadata<R: BufRead>(r: R) -> Result<(Vec<(String, String)>, String)> {
    let mut meta = Vec::new();
    let mut body = String::new();
    for line in r.lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim_start();
            match rest.split_once(':') {
                Some((k, v)) => meta.push((k.trim().to_string(), v.trim_start().to_string())),
                None => meta.push((String::new(), rest.to_string())),
            }
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    Ok((meta, body))
}

pub fn read_spectrum_csv<R: BufRead>(r: R) -> Result<(Spectrum, Vec<(String, String)>)> {
    let (meta, body) = split_metadata(r)?;
    let mut csv = csv::Reader::from_reader(body.as_bytes());
    let header = csv.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Io(format!("spectrum file lacks a `{name}` column")))
    };
    let (fc, vc) = (find("freq_hz")?, find("value_quanta")?);
    let mut freqs = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in csv.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Io(format!("row {}: unparsable number", row + 1)))
        };
        freqs.push(hz_to_rad(parse(fc)?));
        values.push(parse(vc)?);
    }
    let lookup = |key: &str| meta.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let kind = lookup("kind").and_then(parse_kind).unwrap_or(SpectrumKind::Measured);
    let one_sided = lookup("one_sided").map(|v| v == "true").unwrap_or(false);
    let mut spec = Spectrum::new(FrequencyGrid::new(freqs)?, values, kind)?;
    spec.one_sided = one_sided;
    Ok((spec, meta))
}

/// A `#`-annotated CSV table of named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { metadata: Vec::new(), header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Io(format!("table lacks a `{name}` column")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let c = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[c].as_str()).collect())
    }

    /// A numeric column; `NaN` cells parse as NaN.
    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)?
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.trim().parse::<f64>().map_err(|_| Error::Io(format!("{name}, row {}: unparsable number `{s}`", i + 1))))
            .collect()
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        write_metadata(&mut w, &self.metadata)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.header)?;
        for row in &self.rows {
            csv.write_record(row)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let (metadata, body) = split_metadata(r)?;
        let mut csv = csv::Reader::from_reader(body.as_bytes());
        let header: Vec<String> = csv.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for rec in csv.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Table { metadata, header, rows })
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let grid = FrequencyGrid::new(vec![-3.0, 0.1, 2.0e8]).unwrap();
        let spec = Spectrum::new(grid, vec![1.0, 1.0 / 3.0, 13.5], SpectrumKind::HeterodyneOutput).unwrap();
        let meta = vec![("version".to_string(), "0.1.0".to_string()), ("config".into(), "[a]\nb = 1".into())];
        let mut buf = Vec::new();
        write_spectrum_csv(&mut buf, &spec, &meta).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("# config: [a]\n# config: b = 1\n"));
        let (back, m) = read_spectrum_csv(buf.as_slice()).unwrap();
        assert_eq!(back.kind, spec.kind);
        assert_eq!(back.values, spec.values);
        for (a, b) in back.frequencies().iter().zip(spec.frequencies()) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
        assert_eq!(m[0], ("version".to_string(), "0.1.0".to_string()));
    }

    #[test]
    fn table_round_trip() {
        let mut t = Table::new(["name", "value"]);
        t.metadata.push(("command".into(), "sweep".into()));
        t.push(vec!["a".into(), fmt_f64(0.1)]);
        t.push(vec!["b".into(), fmt_f64(f64::NAN)]);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = Table::read(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        let v = back.column_f64("value").unwrap();
        assert_eq!(v[0], 0.1);
        assert!(v[1].is_nan());
        assert_eq!(back.meta("command"), Some("sweep"));
    }

    #[test]
    fn missing_column() {
        let text = "freq,value\n1,2\n3,4\n";
        assert!(read_spectrum_csv(text.as_bytes()).is_err());
    }
}
