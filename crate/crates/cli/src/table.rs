//! Condition tables: `sample,pressure_mpa,frequency_hz,speed_mm_s[,score]`.

use std::path::Path;

use droploop::PrintConditions;
use serde::Deserialize;

pub const HEADER: &str = "sample,pressure_mpa,frequency_hz,speed_mm_s";

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct TableRow {
    pub sample: usize,
    pub pressure_mpa: f64,
    pub frequency_hz: f64,
    pub speed_mm_s: f64,
    #[serde(default)]
    pub score: Option<f64>,
}

impl TableRow {
    pub fn conditions(&self) -> PrintConditions {
        PrintConditions::new(self.pressure_mpa, self.frequency_hz, self.speed_mm_s)
    }
}

pub fn parse(text: &str) -> Result<Vec<TableRow>, String> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<TableRow>().enumerate() {
        let row = rec.map_err(|e| format!("row {}: {e}", i + 1))?;
        let finite = [row.pressure_mpa, row.frequency_hz, row.speed_mm_s]
            .iter()
            .chain(row.score.as_ref())
            .all(|v| v.is_finite());
        if !finite {
            return Err(format!("row {}: non-finite value", i + 1));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("no rows".into());
    }
    Ok(rows)
}

pub fn read(path: &Path) -> Result<Vec<TableRow>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Rows numbered from 1; a score column is added when scores are given.
pub fn render(conditions: &[PrintConditions], scores: Option<&[f64]>) -> String {
    let mut out = String::from(HEADER);
    out.push_str(if scores.is_some() { ",score\n" } else { "\n" });
    for (i, c) in conditions.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}", i + 1, c.pressure, c.frequency, c.speed));
        if let Some(s) = scores {
            out.push_str(&format!(",{}", s[i]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_table_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/table1.csv");
        let rows = read(&path).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[0].sample, 1);
        assert_eq!(rows[0].conditions(), PrintConditions::new(0.090, 20.4, 336.0));
        assert_eq!(rows[0].score, Some(0.462));
    }

    #[test]
    fn render_then_parse_is_lossless() {
        let cs = [PrintConditions::new(0.1 + 0.2, 17.0, 1.0 / 3.0), PrintConditions::new(0.02, 40.0, 900.0)];
        let text = render(&cs, Some(&[0.25, 1e-17]));
        let rows = parse(&text).unwrap();
        assert_eq!(rows[0].conditions(), cs[0]);
        assert_eq!(rows[1].score, Some(1e-17));
        let plain = render(&cs, None);
        assert!(plain.starts_with(&format!("{HEADER}\n")));
        assert_eq!(parse(&plain).unwrap()[1].score, None);
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(parse(HEADER).is_err());
        assert!(parse(&format!("{HEADER}\n1,0.05,abc,300\n")).is_err());
        assert!(parse(&format!("{HEADER}\n1,0.05,NaN,300\n")).is_err());
        assert!(parse("a,b\n1,2\n").is_err());
    }
}
