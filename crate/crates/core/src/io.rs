//! CSV dataset format.
//!
//! ```text
//! # optional comment lines (provenance)
//! x1,x2,...,xp,ctime,otime[,true_time]
//! 0.25,1.5,...,3.2,1.1
//! ```
//!
//! Covariate columns must be named `x1..xp` consecutively. Lines starting with
//! `#` are ignored. Floats are written in shortest round-trip form, so a
//! write/read cycle is bit-exact.

use std::io::{Read, Write};

use crate::data::{Dataset, SurvivalRecord};
use crate::error::{Error, Result};

struct Columns {
    x: Vec<usize>,
    ctime: Option<usize>,
    otime: Option<usize>,
    true_time: Option<usize>,
}

fn locate_columns(headers: &csv::StringRecord) -> Result<Columns> {
    let mut numbered: Vec<(usize, usize)> = Vec::new();
    let mut cols = Columns {
        x: Vec::new(),
        ctime: None,
        otime: None,
        true_time: None,
    };
    for (pos, name) in headers.iter().enumerate() {
        let name = name.trim();
        match name {
            "ctime" => cols.ctime = Some(pos),
            "otime" => cols.otime = Some(pos),
            "true_time" => cols.true_time = Some(pos),
            _ => {
                if let Some(k) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                    numbered.push((k, pos));
                }
            }
        }
    }
    numbered.sort_unstable();
    for (expected, &(k, pos)) in (1..).zip(numbered.iter()) {
        if k != expected {
            return Err(Error::Schema(format!(
                "covariate columns must be x1..xp without gaps, found x{k} where x{expected} was expected"
            )));
        }
        cols.x.push(pos);
    }
    Ok(cols)
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn parse_field(row: &csv::StringRecord, pos: usize, line: usize, name: &str) -> Result<f64> {
    let raw = row.get(pos).ok_or_else(|| Error::InvalidRecord {
        index: line,
        reason: format!("missing field {name}"),
    })?;
    raw.parse::<f64>().map_err(|_| Error::InvalidRecord {
        index: line,
        reason: format!("cannot parse {name} value {raw:?}"),
    })
}

/// Reads a dataset in the CSV format described in the module docs.
pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = reader(input);
    let cols = locate_columns(rdr.headers()?)?;
    let (Some(c_pos), Some(o_pos)) = (cols.ctime, cols.otime) else {
        return Err(Error::Schema("dataset needs ctime and otime columns".into()));
    };
    if cols.x.is_empty() {
        return Err(Error::Schema("dataset needs at least one covariate column x1".into()));
    }
    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let x = cols
            .x
            .iter()
            .enumerate()
            .map(|(j, &pos)| parse_field(&row, pos, line, &format!("x{}", j + 1)))
            .collect::<Result<Vec<_>>>()?;
        let record = SurvivalRecord {
            x,
            ctime: parse_field(&row, c_pos, line, "ctime")?,
            otime: parse_field(&row, o_pos, line, "otime")?,
            true_time: match cols.true_time {
                Some(pos) => Some(parse_field(&row, pos, line, "true_time")?),
                None => None,
            },
        };
        record
            .check()
            .map_err(|reason| Error::InvalidRecord { index: line, reason })?;
        records.push(record);
    }
    Dataset::new(records, cols.x.len())
}

/// Reads only the `x1..xp` columns; other columns are ignored.
///
/// Returns the covariate dimension (from the header) and the rows.
pub fn read_covariates<R: Read>(input: R) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut rdr = reader(input);
    let cols = locate_columns(rdr.headers()?)?;
    if cols.x.is_empty() {
        return Err(Error::Schema("input needs covariate columns x1..xp".into()));
    }
    let mut rows = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let x = cols
            .x
            .iter()
            .enumerate()
            .map(|(j, &pos)| parse_field(&row, pos, line, &format!("x{}", j + 1)))
            .collect::<Result<Vec<_>>>()?;
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord {
                index: line,
                reason: format!("non-finite covariate {v}"),
            });
        }
        rows.push(x);
    }
    Ok((cols.x.len(), rows))
}

/// Writes `# ` prefixed comment lines.
pub fn write_comments<W: Write>(out: &mut W, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    Ok(())
}

/// Writes a dataset, including `true_time` when every record has one.
pub fn write_dataset<W: Write>(mut out: W, data: &Dataset, comments: &[String]) -> Result<()> {
    write_comments(&mut out, comments)?;
    let with_truth = !data.is_empty() && data.has_true_time();
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
    header.push("ctime".into());
    header.push("otime".into());
    if with_truth {
        header.push("true_time".into());
    }
    wtr.write_record(&header)?;
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for r in data.iter() {
        fields.clear();
        fields.extend(r.x.iter().map(|v| v.to_string()));
        fields.push(r.ctime.to_string());
        fields.push(r.otime.to_string());
        if with_truth {
            fields.push(r.true_time.unwrap_or(f64::NAN).to_string());
        }
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let records = vec![
            SurvivalRecord::from_latent(vec![0.1, 1.0 / 3.0], 2.5, 7.0).unwrap(),
            SurvivalRecord::from_latent(vec![3.999_999_9, 2.0], 0.123_456_789_012_345_67, 0.01).unwrap(),
        ];
        let data = Dataset::new(records, 2).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data, &["tool test".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# tool test\nx1,x2,ctime,otime,true_time\n"));
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn optional_truth_column() {
        let text = "x1,ctime,otime\n1.0,2.0,1.5\n";
        let data = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(data.len(), 1);
        assert!(!data.has_true_time());
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(
            read_dataset("x1,otime\n1,2\n".as_bytes()),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            read_dataset("x1,x3,ctime,otime\n1,2,3,1\n".as_bytes()),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            read_dataset("x1,ctime,otime\n1,2,3\n".as_bytes()),
            Err(Error::InvalidRecord { .. })
        ));
        assert!(matches!(
            read_dataset("x1,ctime,otime\n1,abc,1\n".as_bytes()),
            Err(Error::InvalidRecord { .. })
        ));
        assert!(matches!(
            read_dataset("x1,ctime,otime,true_time\n1,3,1,2\n".as_bytes()),
            Err(Error::InvalidRecord { .. })
        ));
    }

    #[test]
    fn covariates_ignore_other_columns() {
        let (p, rows) = read_covariates("ctime,x2,x1\n5,2,1\n".as_bytes()).unwrap();
        assert_eq!(p, 2);
        assert_eq!(rows, vec![vec![1.0, 2.0]]);
        let (p, rows) = read_covariates("x1\n".as_bytes()).unwrap();
        assert_eq!((p, rows.len()), (1, 0));
    }
}
