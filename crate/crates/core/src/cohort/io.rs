//! CSV ingestion and export of cohorts.
//!
//! One row per hospitalization; covariate columns named by the schema
//! (categoricals hold level strings) followed by `W, Y, RISK, PERIOD,
//! CLUSTER, PAYOFF`. Unit ids are the 1-based data row numbers.

use std::io::{Read, Write};
use std::path::Path;

use super::{Cohort, FeatureKind, Period, Provenance, Schema, Unit};
use crate::error::{Error, Result};

pub const RESERVED_COLUMNS: [&str; 6] = ["W", "Y", "RISK", "PERIOD", "CLUSTER", "PAYOFF"];

pub fn load_cohort(path: impl AsRef<Path>, schema: &Schema) -> Result<Cohort> {
    load_cohort_as(path, schema, Provenance::External)
}

pub fn load_cohort_as(
    path: impl AsRef<Path>,
    schema: &Schema,
    provenance: Provenance,
) -> Result<Cohort> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    read_cohort(std::fs::File::open(path)?, schema, provenance)
}

fn parse_binary(field: &str, column: &str, row: usize) -> Result<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::value(row, format!("{column}={other:?} is not 0 or 1"))),
    }
}

fn parse_number(field: &str, column: &str, row: usize) -> Result<f64> {
    let t = field.trim();
    if t.is_empty() {
        return Err(Error::value(row, format!("missing value in {column}")));
    }
    let v: f64 = t
        .parse()
        .map_err(|_| Error::value(row, format!("{column}={t:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::value(row, format!("{column}={t:?} is not finite")));
    }
    Ok(v)
}

pub fn read_cohort<R: Read>(reader: R, schema: &Schema, provenance: Provenance) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name}")))
    };
    let feature_cols = schema
        .features()
        .iter()
        .map(|f| find(&f.name))
        .collect::<Result<Vec<_>>>()?;
    let [cw, cy, crisk, cperiod, ccluster, cpayoff] = RESERVED_COLUMNS.map(find);
    let (cw, cy, crisk, cperiod, ccluster, cpayoff) = (cw?, cy?, crisk?, cperiod?, ccluster?, cpayoff?);

    let width = schema.n_columns();
    let mut units = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let mut x = Vec::with_capacity(width);
        for (spec, &c) in schema.features().iter().zip(&feature_cols) {
            match &spec.kind {
                FeatureKind::Numeric => x.push(parse_number(field(c), &spec.name, row)?),
                FeatureKind::Categorical { levels } => {
                    let value = field(c).trim();
                    if value.is_empty() {
                        return Err(Error::value(row, format!("missing value in {}", spec.name)));
                    }
                    let hit = levels.iter().position(|l| l == value).ok_or_else(|| {
                        Error::value(row, format!("unseen level {value:?} for {}", spec.name))
                    })?;
                    x.extend((0..levels.len()).map(|i| if i == hit { 1.0 } else { 0.0 }));
                }
            }
        }
        let period = match field(cperiod).trim() {
            "pre" => Period::Pre,
            "post" => Period::Post,
            other => return Err(Error::value(row, format!("PERIOD={other:?} is not pre or post"))),
        };
        let cluster = field(ccluster).trim();
        let cluster_id: u32 = cluster
            .parse()
            .ok()
            .filter(|c| *c >= 1)
            .ok_or_else(|| Error::value(row, format!("CLUSTER={cluster:?} is not a positive integer")))?;
        units.push(Unit {
            unit_id: row as u64,
            x,
            w: parse_binary(field(cw), "W", row)?,
            y: parse_binary(field(cy), "Y", row)?,
            risk: parse_number(field(crisk), "RISK", row)?,
            period,
            cluster_id,
            payoff: parse_number(field(cpayoff), "PAYOFF", row)?,
        });
    }
    Cohort::new(schema.clone(), units, provenance)
}

/// Write the cohort in the ingestion layout. Floats use the shortest
/// representation that parses back to the same value, so
/// export → load → export is byte-identical.
pub fn write_cohort<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let schema = cohort.schema();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = schema.features().iter().map(|f| f.name.clone()).collect();
    header.extend(RESERVED_COLUMNS.iter().map(|s| s.to_string()));
    wtr.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for u in cohort.units() {
        record.clear();
        let mut offset = 0;
        for spec in schema.features() {
            match &spec.kind {
                FeatureKind::Numeric => record.push(format!("{}", u.x[offset])),
                FeatureKind::Categorical { levels } => {
                    let block = &u.x[offset..offset + levels.len()];
                    let hit = block.iter().position(|v| *v == 1.0).ok_or_else(|| {
                        Error::value(
                            u.unit_id as usize,
                            format!("one-hot block for {} has no active level", spec.name),
                        )
                    })?;
                    record.push(levels[hit].clone());
                }
            }
            offset += spec.width();
        }
        record.push(if u.w { "1" } else { "0" }.into());
        record.push(if u.y { "1" } else { "0" }.into());
        record.push(format!("{}", u.risk));
        record.push(u.period.as_str().into());
        record.push(u.cluster_id.to_string());
        record.push(format!("{}", u.payoff));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn export_cohort(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_cohort(cohort, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::FeatureSpec;

    fn schema() -> Schema {
        Schema::new(vec![
            FeatureSpec::numeric("LAPS2DC"),
            FeatureSpec::categorical("DISCHDISP", &["Home", "Skilled Nursing"]),
        ])
        .unwrap()
    }

    const GOOD: &str = "LAPS2DC,DISCHDISP,W,Y,RISK,PERIOD,CLUSTER,PAYOFF\n\
        40.5,Home,0,1,0.12,pre,1,4.5\n\
        12,Skilled Nursing,1,0,0.31,post,2,0\n\
        0.1,Home,0,0,0.05,post,3,0\n";

    #[test]
    fn three_rows_round_trip() {
        let c = read_cohort(GOOD.as_bytes(), &schema(), Provenance::External).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.units()[1].x, vec![12.0, 0.0, 1.0]);
        let mut out = Vec::new();
        write_cohort(&c, &mut out).unwrap();
        let again = read_cohort(out.as_slice(), &schema(), Provenance::External).unwrap();
        assert_eq!(again.units(), c.units());
        let mut out2 = Vec::new();
        write_cohort(&again, &mut out2).unwrap();
        assert_eq!(out, out2);
    }

    #[test]
    fn missing_column_is_named() {
        let csv = GOOD.replace("LAPS2DC", "LAPS2");
        let err = read_cohort(csv.as_bytes(), &schema(), Provenance::External).unwrap_err();
        assert_eq!(err.to_string(), "schema error: missing column LAPS2DC");
    }

    #[test]
    fn bad_treatment_value_cites_row() {
        let mut csv = String::from("LAPS2DC,DISCHDISP,W,Y,RISK,PERIOD,CLUSTER,PAYOFF\n");
        for row in 1..=8 {
            let w = if row == 7 { 2 } else { 0 };
            csv.push_str(&format!("1,Home,{w},0,0.1,pre,1,0\n"));
        }
        match read_cohort(csv.as_bytes(), &schema(), Provenance::External) {
            Err(Error::Value { row, .. }) => assert_eq!(row, 7),
            other => panic!("expected a value error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_blanks_and_unknown_levels() {
        let blank = GOOD.replace("40.5,Home", ",Home");
        assert!(matches!(
            read_cohort(blank.as_bytes(), &schema(), Provenance::External),
            Err(Error::Value { row: 1, .. })
        ));
        let level = GOOD.replace("12,Skilled Nursing", "12,Hospice");
        assert!(matches!(
            read_cohort(level.as_bytes(), &schema(), Provenance::External),
            Err(Error::Value { row: 2, .. })
        ));
        let numeric = GOOD.replace("0.1,Home", "abc,Home");
        assert!(matches!(
            read_cohort(numeric.as_bytes(), &schema(), Provenance::External),
            Err(Error::Value { row: 3, .. })
        ));
    }
}
