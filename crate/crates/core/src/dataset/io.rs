use std::io::{Read, Write};
use std::path::Path;

use super::{CohortTable, FeatureKind, Schema, LABEL_COLUMN};
use crate::{Error, Result};

/// Reads a cohort CSV. Columns may appear in any order but must be exactly
/// the schema features plus `label`. Empty cells are missing values.
pub fn load_cohort(path: impl AsRef<Path>, schema: &Schema) -> Result<CohortTable> {
    read_cohort(std::fs::File::open(path)?, schema)
}

pub fn read_cohort<R: Read>(reader: R, schema: &Schema) -> Result<CohortTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();

    let mut label_col = None;
    let mut feature_cols = vec![None; schema.len()];
    for (pos, h) in headers.iter().enumerate() {
        let h = h.trim();
        if h == LABEL_COLUMN {
            label_col = Some(pos);
        } else if let Some(i) = schema.index_of(h) {
            if feature_cols[i].replace(pos).is_some() {
                return Err(Error::Schema(format!("column `{h}` appears twice")));
            }
        } else {
            return Err(Error::Schema(format!("column `{h}` is not in the schema")));
        }
    }
    let label_col = label_col.ok_or_else(|| Error::Schema("missing `label` column".into()))?;
    let feature_cols = feature_cols
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            c.ok_or_else(|| {
                Error::Schema(format!("column `{}` missing from file", schema.features[i].name))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let row = row + 1;
        let cell = |pos: usize| record.get(pos).unwrap_or("").trim();
        let label = match cell(label_col) {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    row,
                    column: LABEL_COLUMN.into(),
                    message: format!("label must be 0 or 1, got `{other}`"),
                })
            }
        };
        labels.push(label);
        for (spec, &pos) in schema.features.iter().zip(&feature_cols) {
            let text = cell(pos);
            if text.is_empty() {
                values.push(None);
                continue;
            }
            let err = |message: String| Error::Parse {
                row,
                column: spec.name.clone(),
                message,
            };
            let v = if spec.kind == FeatureKind::Categorical {
                spec.levels
                    .iter()
                    .position(|l| l == text)
                    .map(|p| p as f64)
                    .ok_or_else(|| err(format!("unknown level `{text}`")))?
            } else {
                let v: f64 = text
                    .parse()
                    .map_err(|_| err(format!("`{text}` is not numeric")))?;
                if !v.is_finite() {
                    return Err(err(format!("`{text}` is not finite")));
                }
                if spec.kind == FeatureKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(err(format!("binary value must be 0 or 1, got `{text}`")));
                }
                v
            };
            values.push(Some(v));
        }
    }
    CohortTable::from_flat(schema.clone(), values, labels)
}

pub fn save_cohort(path: impl AsRef<Path>, table: &CohortTable) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_cohort(std::io::BufWriter::new(file), table)
}

/// Writes the table with the schema's column order. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_cohort<W: Write>(writer: W, table: &CohortTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let schema = table.schema();
    let mut header: Vec<&str> = schema.features.iter().map(|f| f.name.as_str()).collect();
    header.push(LABEL_COLUMN);
    w.write_record(&header)?;
    for (row, &label) in table.rows().zip(table.labels()) {
        let mut record: Vec<String> = row
            .iter()
            .zip(&schema.features)
            .map(|(v, spec)| match v {
                None => String::new(),
                Some(v) if spec.kind == FeatureKind::Categorical => spec
                    .levels
                    .get(*v as usize)
                    .cloned()
                    .unwrap_or_else(|| v.to_string()),
                Some(v) => v.to_string(),
            })
            .collect();
        record.push(label.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureSpec;

    fn schema() -> Schema {
        Schema::new(vec![
            FeatureSpec::continuous("pO2"),
            FeatureSpec::binary("vent"),
            FeatureSpec::new("unit", FeatureKind::Categorical).with_levels(["micu", "sicu", "ccu"]),
        ])
        .unwrap()
    }

    #[test]
    fn reads_complete_file() {
        let csv = "pO2,vent,unit,label\n90.5,0,micu,0\n120,1,ccu,1\n80,1,sicu,0\n";
        let t = read_cohort(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.missing_count(), 0);
        assert_eq!(t.value(1, 2), Some(2.0));
        assert_eq!(t.labels(), &[0, 1, 0]);
    }

    #[test]
    fn empty_cell_is_missing() {
        let csv = "label,unit,vent,pO2\n0,micu,0,90\n1,ccu,1,\n0,sicu,1,80\n";
        let t = read_cohort(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(t.missing_count(), 1);
        assert_eq!(t.value(1, 0), None);
        assert_eq!(t.value(2, 0), Some(80.0));
    }

    #[test]
    fn header_mismatch_is_schema_error() {
        let csv = "pO2,vent,label\n1,0,0\n";
        assert!(matches!(read_cohort(csv.as_bytes(), &schema()), Err(Error::Schema(_))));
        let csv = "pO2,vent,unit,extra,label\n1,0,micu,3,0\n";
        assert!(matches!(read_cohort(csv.as_bytes(), &schema()), Err(Error::Schema(_))));
    }

    #[test]
    fn parse_error_names_row_and_column() {
        let csv = "pO2,vent,unit,label\n90,0,micu,0\nabc,1,ccu,1\n";
        match read_cohort(csv.as_bytes(), &schema()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "pO2");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let csv = "pO2,vent,unit,label\n90,2,micu,0\n";
        assert!(matches!(read_cohort(csv.as_bytes(), &schema()), Err(Error::Parse { .. })));
    }

    #[test]
    fn write_then_read_is_identity() {
        let csv = "pO2,vent,unit,label\n0.1,0,micu,0\n,1,,1\n-3.25e-7,1,sicu,0\n";
        let t = read_cohort(csv.as_bytes(), &schema()).unwrap();
        let mut buf = Vec::new();
        write_cohort(&mut buf, &t).unwrap();
        let back = read_cohort(buf.as_slice(), &schema()).unwrap();
        assert_eq!(t, back);
    }
}
