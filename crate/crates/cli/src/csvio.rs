//! CSV reading and writing.
//!
//! Numbers are written in the shortest form that parses back to the same
//! `f64`, so emitted files round-trip exactly.

use std::path::Path;

use qdfeedback::{Spectrum, SpectrumPoint};

use crate::CliError;

/// Samples read from a two-column CSV, ascending in the first column.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFile {
    pub samples: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Read `(frequency, reflectivity)` pairs from a CSV with one header line.
///
/// Only the first two columns are used, so spectra written by `scan` can be
/// read back directly. Rows that are short, non-numeric or non-finite are
/// rejected with their line number. Unsorted input is sorted with a warning.
pub fn read_spectrum_csv(path: &Path) -> Result<SpectrumFile, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    read_spectrum(file, &path.display().to_string())
}

pub fn read_spectrum<R: std::io::Read>(input: R, name: &str) -> Result<SpectrumFile, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let bad = |line: u64, msg: String| CliError::Input(format!("{name}, line {line}: {msg}"));

    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            bad(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < 2 {
            return Err(bad(line, format!("expected 2 columns, found {}", rec.len())));
        }
        let mut pair = [0.0; 2];
        for (slot, field) in pair.iter_mut().zip(rec.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|_| bad(line, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(bad(line, format!("non-finite value `{field}`")));
            }
            *slot = v;
        }
        samples.push((pair[0], pair[1]));
    }
    if samples.is_empty() {
        return Err(CliError::Input(format!("{name}: no data rows")));
    }

    let mut warnings = Vec::new();
    if samples.windows(2).any(|w| w[1].0 < w[0].0) {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let w = format!("{name}: frequencies were not ascending; rows sorted");
        log::warn!("{w}");
        warnings.push(w);
    }
    Ok(SpectrumFile { samples, warnings })
}

/// CSV text with `header` and one row per record.
pub fn to_csv<I, R>(header: &[&str], rows: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = R>,
    R: serde::Serialize,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub const SPECTRUM_HEADER: [&str; 4] = ["f_laser_GHz", "r_prime", "f_qd_GHz", "direction"];

/// Spectrum rows in ascending frequency.
pub fn spectrum_rows(s: &Spectrum) -> Vec<(f64, f64, f64, &'static str)> {
    let dir = s.direction.as_str();
    s.ascending()
        .into_iter()
        .map(|SpectrumPoint { f_laser, r_prime, f_qd, .. }| (f_laser, r_prime, f_qd, dir))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<SpectrumFile, CliError> {
        read_spectrum(text.as_bytes(), "test.csv")
    }

    #[test]
    fn parses_and_ignores_extra_columns() {
        let f = read("f,r,fqd,dir\n-1, 0.5, 3, up\n2,0.25,3,up\n").unwrap();
        assert_eq!(f.samples, vec![(-1.0, 0.5), (2.0, 0.25)]);
        assert!(f.warnings.is_empty());
    }

    #[test]
    fn rejects_bad_rows_with_line_numbers() {
        for (text, line) in [
            ("f,r\n1,0.5\n2,NaN\n", "line 3"),
            ("f,r\n1,inf\n", "line 2"),
            ("f,r\n1,0.5\n2\n", "line 3"),
            ("f,r\n1,0.5\n1,0.5\nx,1\n", "line 4"),
        ] {
            let err = read(text).unwrap_err().to_string();
            assert!(err.contains(line), "{err}");
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(read("").is_err());
        assert!(read("f,r\n").is_err());
    }

    #[test]
    fn unsorted_input_is_sorted_with_warning() {
        let f = read("f,r\n3,0.3\n1,0.1\n2,0.2\n").unwrap();
        assert_eq!(f.samples, vec![(1.0, 0.1), (2.0, 0.2), (3.0, 0.3)]);
        assert_eq!(f.warnings.len(), 1);
    }

    #[test]
    fn written_numbers_read_back_exactly() {
        let rows = [(-1e-300, 6.02214076e23), (0.1 + 0.2, 1.0 / 3.0)];
        let text = to_csv(&["f", "r"], rows).unwrap();
        assert_eq!(read(&text).unwrap().samples, rows.to_vec());
    }
}
