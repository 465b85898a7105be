use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::blockspace::BlockSpace;
use crate::error::Result;
use crate::observables::ObservableRecord;

/// Header of the per-sample observable table; `p_J` columns in descending J.
pub fn record_header(space: &BlockSpace) -> Vec<String> {
    let mut cols: Vec<String> = [
        "time",
        "jx",
        "jy",
        "jz",
        "djx",
        "djy",
        "djz",
        "log10_purity",
        "log10_symmetric_overlap",
        "f",
        "xi2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(space.j_values().iter().map(|j| format!("p_{j}")));
    cols
}

/// Shortest round-trip representation; `nan` for undefined values.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:?}")
    }
}

pub fn record_row(record: &ObservableRecord) -> Vec<String> {
    let mut row = vec![format_float(record.time)];
    row.extend(record.mean.iter().map(|&x| format_float(x)));
    row.extend(record.uncertainty.iter().map(|&x| format_float(x)));
    row.push(format_float(record.log10_purity));
    row.push(format_float(record.log10_symmetric_overlap));
    row.push(format_float(record.f));
    row.push(format_float(record.xi2.unwrap_or(f64::NAN)));
    row.extend(record.block_traces.iter().map(|&x| format_float(x)));
    row
}

pub fn write_records(path: &Path, space: &BlockSpace, records: &[ObservableRecord]) -> Result<()> {
    write_table(path, &record_header(space), records.iter().map(record_row))
}

pub fn write_table(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Ordered `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn push_float(&mut self, key: impl Into<String>, value: f64) {
        self.entries.push((key.into(), format_float(value)));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn extend(&mut self, other: Summary) {
        self.entries.extend(other.entries);
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e22, 0.0] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(f64::NAN), "nan");
    }

    #[test]
    fn header_lists_blocks_in_descending_order() {
        let space = BlockSpace::new(3).unwrap();
        let h = record_header(&space);
        assert_eq!(&h[11..], ["p_3/2", "p_1/2"]);
    }

    #[test]
    fn summary_lookup() {
        let mut s = Summary::default();
        s.push("a", 3);
        s.push_float("b", 0.25);
        assert_eq!(s.get_f64("b"), Some(0.25));
        assert_eq!(s.to_text(), "a = 3\nb = 0.25\n");
    }
}
