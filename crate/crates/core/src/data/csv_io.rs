//! CSV ingestion and export.
//!
//! UTF-8, comma-separated, header required, IEEE-754 doubles written in
//! shortest round-trip decimal form. Columns are mapped by name through a
//! [`CsvSchema`], never by position.

use std::path::Path;

use crate::data::{Dataset, Matrix, TreatmentKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureSelect {
    /// All columns not claimed by outcome/treatment/instrument, in file order.
    Rest,
    Named(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub outcome: String,
    pub treatment: String,
    pub instrument: Option<String>,
    pub features: FeatureSelect,
    pub treatment_kind: TreatmentKind,
}

impl CsvSchema {
    pub fn new(outcome: &str, treatment: &str) -> Self {
        Self {
            outcome: outcome.to_string(),
            treatment: treatment.to_string(),
            instrument: None,
            features: FeatureSelect::Rest,
            treatment_kind: TreatmentKind::Binary,
        }
    }

    pub fn with_instrument(mut self, z: &str) -> Self {
        self.instrument = Some(z.to_string());
        self
    }

    pub fn with_features(mut self, names: Vec<String>) -> Self {
        self.features = FeatureSelect::Named(names);
        self
    }

    pub fn with_kind(mut self, kind: TreatmentKind) -> Self {
        self.treatment_kind = kind;
        self
    }

    /// Parse a `key=value` list, e.g.
    /// `outcome=y,treatment=w,instrument=z,features=rest`. The features
    /// value may itself be a comma (or `;`) list: segments without an `=`
    /// belong to the preceding value, so
    /// `outcome=y,treatment=w,features=x1,x2` reads as expected.
    pub fn parse(spec: &str, kind: TreatmentKind) -> Result<Self> {
        let mut pairs: Vec<String> = Vec::new();
        for segment in spec.split(',').filter(|s| !s.is_empty()) {
            if segment.contains('=') {
                pairs.push(segment.to_string());
            } else if let Some(last) = pairs.last_mut() {
                last.push(',');
                last.push_str(segment);
            } else {
                return Err(Error::InvalidParam(format!(
                    "schema entry `{segment}` is not key=value"
                )));
            }
        }
        let mut outcome = None;
        let mut treatment = None;
        let mut instrument = None;
        let mut features = FeatureSelect::Rest;
        for pair in &pairs {
            let (key, value) = pair.split_once('=').expect("segments contain `=`");
            match key.trim() {
                "outcome" => outcome = Some(value.trim().to_string()),
                "treatment" => treatment = Some(value.trim().to_string()),
                "instrument" => instrument = Some(value.trim().to_string()),
                "features" => {
                    let v = value.trim();
                    features = if v == "rest" {
                        FeatureSelect::Rest
                    } else {
                        FeatureSelect::Named(
                            v.split([',', ';'])
                                .filter(|s| !s.is_empty())
                                .map(|s| s.trim().to_string())
                                .collect(),
                        )
                    };
                }
                other => {
                    return Err(Error::InvalidParam(format!("unknown schema key `{other}`")))
                }
            }
        }
        Ok(CsvSchema {
            outcome: outcome
                .ok_or_else(|| Error::InvalidParam("schema is missing `outcome`".into()))?,
            treatment: treatment
                .ok_or_else(|| Error::InvalidParam("schema is missing `treatment`".into()))?,
            instrument,
            features,
            treatment_kind: kind,
        })
    }
}

/// Load a dataset from a headered CSV file. Rows keep file order.
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    let y_col = col(&schema.outcome)?;
    let w_col = col(&schema.treatment)?;
    let z_col = match &schema.instrument {
        Some(name) => Some(col(name)?),
        None => None,
    };
    let feature_cols: Vec<(usize, String)> = match &schema.features {
        FeatureSelect::Named(names) => {
            let mut out = Vec::with_capacity(names.len());
            for name in names {
                out.push((col(name)?, name.clone()));
            }
            out
        }
        FeatureSelect::Rest => header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != y_col && *i != w_col && Some(*i) != z_col)
            .map(|(i, name)| (i, name.clone()))
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::InvalidParam("schema selects no feature columns".into()));
    }

    let mut outcome = Vec::new();
    let mut treatment = Vec::new();
    let mut instrument = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 1; // 1-based data row for error messages
        let parse = |c: usize, name: &str| -> Result<f64> {
            let raw = record.get(c).unwrap_or("").trim();
            raw.parse::<f64>().map_err(|_| Error::NonNumeric {
                row,
                column: name.to_string(),
                value: raw.to_string(),
            })
        };
        let y = parse(y_col, &schema.outcome)?;
        let w = parse(w_col, &schema.treatment)?;
        if schema.treatment_kind == TreatmentKind::Binary && w != 0.0 && w != 1.0 {
            return Err(Error::BinaryViolation {
                row,
                column: schema.treatment.clone(),
                value: w,
            });
        }
        if let Some(zc) = z_col {
            let z = parse(zc, schema.instrument.as_deref().unwrap())?;
            if z != 0.0 && z != 1.0 {
                return Err(Error::BinaryViolation {
                    row,
                    column: schema.instrument.clone().unwrap(),
                    value: z,
                });
            }
            instrument.push(z);
        }
        let mut feat_row = Vec::with_capacity(feature_cols.len());
        for (c, name) in &feature_cols {
            feat_row.push(parse(*c, name)?);
        }
        outcome.push(y);
        treatment.push(w);
        rows.push(feat_row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }

    let p = feature_cols.len();
    let names: Vec<String> = feature_cols.into_iter().map(|(_, n)| n).collect();
    Dataset::new(
        Matrix::from_rows(rows)?,
        outcome,
        treatment,
        if z_col.is_some() { Some(instrument) } else { None },
        schema.treatment_kind,
        names,
        (0..p).collect(),
    )
}

/// Write a dataset as CSV with feature columns first, then `y`, `w` and
/// (when present) `z`. Values round-trip bit-exactly through [`load_csv`].
pub fn write_csv<P: AsRef<Path>>(data: &Dataset, path: P) -> Result<()> {
    for reserved in ["y", "w", "z"] {
        if data.feature_names().iter().any(|n| n == reserved) {
            return Err(Error::InvalidParam(format!(
                "feature name `{reserved}` collides with a reserved output column"
            )));
        }
    }
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = data.feature_names().to_vec();
    header.push("y".into());
    header.push("w".into());
    if data.instrument().is_some() {
        header.push("z".into());
    }
    writer.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..data.n() {
        record.clear();
        for &v in data.features().row(i) {
            record.push(format_f64(v));
        }
        record.push(format_f64(data.outcome()[i]));
        record.push(format_f64(data.treatment()[i]));
        if let Some(z) = data.instrument() {
            record.push(format_f64(z[i]));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Shortest decimal representation that parses back to the same double.
fn format_f64(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn temp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn basic_load() {
        let f = temp_csv("y,w,x1\n1.5,1,0.25\n2.0,0,-1\n0.5,1,3\n");
        let d = load_csv(f.path(), &CsvSchema::new("y", "w")).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.p(), 1);
        assert!(d.instrument().is_none());
        assert_eq!(d.outcome(), &[1.5, 2.0, 0.5]);
        assert_eq!(d.features().column(0), vec![0.25, -1.0, 3.0]);
    }

    #[test]
    fn binary_violation_reports_row() {
        let f = temp_csv("y,w,x1\n1.0,0.5,2\n");
        let err = load_csv(f.path(), &CsvSchema::new("y", "w")).unwrap_err();
        match err {
            Error::BinaryViolation { row, value, .. } => {
                assert_eq!(row, 1);
                assert_eq!(value, 0.5);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn instrument_preserved_bit_exactly() {
        let f = temp_csv("y,w,z,x1\n1.0,0,1,0.1\n2.0,1,0,0.2\n");
        let schema = CsvSchema::new("y", "w").with_instrument("z");
        let d = load_csv(f.path(), &schema).unwrap();
        assert_eq!(d.instrument().unwrap(), &[1.0, 0.0]);
        assert_eq!(d.p(), 1);
    }

    #[test]
    fn missing_column_and_non_numeric() {
        let f = temp_csv("y,w,x1\n1.0,0,2\n");
        let err = load_csv(f.path(), &CsvSchema::new("yy", "w")).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "yy"));

        let f = temp_csv("y,w,x1\n1.0,0,2\nbad,1,3\n");
        let err = load_csv(f.path(), &CsvSchema::new("y", "w")).unwrap_err();
        match err {
            Error::NonNumeric { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = temp_csv("y,w,x1\n");
        assert!(matches!(
            load_csv(f.path(), &CsvSchema::new("y", "w")),
            Err(Error::EmptyData)
        ));
    }

    #[test]
    fn schema_parse_round_trip() {
        let s = CsvSchema::parse(
            "outcome=out,treatment=tr,instrument=inst,features=a;b",
            TreatmentKind::Binary,
        )
        .unwrap();
        assert_eq!(s.outcome, "out");
        assert_eq!(s.treatment, "tr");
        assert_eq!(s.instrument.as_deref(), Some("inst"));
        assert_eq!(
            s.features,
            FeatureSelect::Named(vec!["a".into(), "b".into()])
        );
        assert!(CsvSchema::parse("outcome=y", TreatmentKind::Binary).is_err());
    }

    #[test]
    fn schema_features_accept_comma_lists() {
        let s = CsvSchema::parse(
            "outcome=y,treatment=w,features=x1,x2,x3",
            TreatmentKind::Binary,
        )
        .unwrap();
        assert_eq!(
            s.features,
            FeatureSelect::Named(vec!["x1".into(), "x2".into(), "x3".into()])
        );
        // features may appear before other keys without stealing them
        let s = CsvSchema::parse(
            "features=x1,x2,outcome=y,treatment=w",
            TreatmentKind::Binary,
        )
        .unwrap();
        assert_eq!(s.outcome, "y");
        assert_eq!(
            s.features,
            FeatureSelect::Named(vec!["x1".into(), "x2".into()])
        );
        assert!(CsvSchema::parse("x1,outcome=y", TreatmentKind::Binary).is_err());
    }

    #[test]
    fn write_then_load_reproduces_values() {
        let f = temp_csv("y,w,z,a,b\n0.123456789012345,1,0,1e-300,-2.5\n3.25,0,1,0.1,7.0\n");
        let schema = CsvSchema::new("y", "w").with_instrument("z");
        let d = load_csv(f.path(), &schema).unwrap();

        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&d, out.path()).unwrap();
        let schema2 = CsvSchema::new("y", "w").with_instrument("z");
        let d2 = load_csv(out.path(), &schema2).unwrap();

        assert_eq!(d.outcome(), d2.outcome());
        assert_eq!(d.treatment(), d2.treatment());
        assert_eq!(d.instrument(), d2.instrument());
        assert_eq!(d.features(), d2.features());
        assert_eq!(d.feature_names(), d2.feature_names());
    }
}
