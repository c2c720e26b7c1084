//! Flow tables: `date,origin,destination,good,tons`, one row per daily
//! shipment aggregate.

use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use seaflow_core::series::{Day, FlowSeries};

use crate::error::{CliError, Result};

pub const FLOW_HEADER: [&str; 5] = ["date", "origin", "destination", "good", "tons"];

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

pub fn date_to_day(date: NaiveDate) -> Day {
    Day(date.signed_duration_since(epoch()).num_days() as i32)
}

pub fn day_to_date(day: Day) -> NaiveDate {
    epoch() + chrono::Duration::days(day.0 as i64)
}

pub fn parse_date(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d").ok()
}

/// Parsed flow file plus what was read.
#[derive(Debug, Clone)]
pub struct FlowTable {
    pub series: FlowSeries,
    /// Data rows read, before duplicates were summed.
    pub rows: usize,
}

impl FlowTable {
    /// Number of days covered, zero for an empty table.
    pub fn span_days(&self) -> i64 {
        self.series.range().map_or(0, |(a, b)| a.days_until(b) + 1)
    }
}

pub fn load_flows(path: &Path) -> Result<FlowTable> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let table = read_flows(file, path)?;
    match table.series.range() {
        Some((a, b)) => log::info!(
            "{}: {} rows, {} records, {} .. {}",
            path.display(),
            table.rows,
            table.series.len(),
            day_to_date(a),
            day_to_date(b)
        ),
        None => log::info!("{}: no rows", path.display()),
    }
    Ok(table)
}

/// Reads a flow table; `path` only labels errors. Duplicate
/// `(date, origin, destination, good)` rows are summed.
pub fn read_flows<R: Read>(reader: R, path: &Path) -> Result<FlowTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.is_empty() {
        // A completely empty file carries no header to check.
        return Ok(FlowTable {
            series: FlowSeries::new(),
            rows: 0,
        });
    }
    if header.iter().collect::<Vec<_>>() != FLOW_HEADER {
        return Err(parse_err(1, format!("expected header {:?}, found {:?}", FLOW_HEADER.join(","), header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut series = FlowSeries::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 5 {
            return Err(parse_err(line, format!("expected 5 fields, found {}", rec.len())));
        }
        let date = parse_date(&rec[0]).ok_or_else(|| parse_err(line, format!("invalid date {:?}", &rec[0])))?;
        for (field, name) in [(&rec[1], "origin"), (&rec[2], "destination"), (&rec[3], "good")] {
            if field.is_empty() {
                return Err(parse_err(line, format!("empty {name}")));
            }
        }
        let tons: f64 = rec[4]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(line, format!("invalid quantity {:?}", &rec[4])))?;
        if tons < 0.0 {
            return Err(CliError::NegativeQuantity {
                path: path.to_path_buf(),
                line,
                value: tons,
            });
        }
        series.add(date_to_day(date), &rec[1], &rec[2], &rec[3], tons)?;
        rows += 1;
    }
    Ok(FlowTable { series, rows })
}

/// Serializes a series in `(date, good, origin, destination)` order with
/// shortest round-trip decimals.
pub fn flows_to_csv(series: &FlowSeries) -> Result<Vec<u8>> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Config(format!("serializing flows: {e}"));
    wtr.write_record(FLOW_HEADER).map_err(io)?;
    for r in series.records() {
        wtr.write_record([
            day_to_date(r.day).to_string(),
            r.origin,
            r.destination,
            r.good,
            r.tons.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.into_inner().map_err(|e| CliError::Config(format!("serializing flows: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<FlowTable> {
        read_flows(text.as_bytes(), Path::new("flows.csv"))
    }

    #[test]
    fn header_only_is_empty() {
        let t = read("date,origin,destination,good,tons\n").unwrap();
        assert!(t.series.is_empty());
        assert_eq!(t.span_days(), 0);
        assert!(read("").unwrap().series.is_empty());
    }

    #[test]
    fn duplicates_are_summed() {
        let t = read("date,origin,destination,good,tons\n2020-01-02,A,B,coal,5\n2020-01-02,A,B,coal,5\n").unwrap();
        assert_eq!(t.rows, 2);
        assert_eq!(t.series.len(), 1);
        assert_eq!(t.series.records().next().unwrap().tons, 10.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad_date = read("date,origin,destination,good,tons\n2020-01-02,A,B,coal,5\n2020-13-02,A,B,coal,5\n");
        assert!(matches!(bad_date, Err(CliError::Parse { line: 3, .. })), "{bad_date:?}");
        let neg = read("date,origin,destination,good,tons\n2020-01-02,A,B,coal,-1\n");
        assert!(matches!(neg, Err(CliError::NegativeQuantity { line: 2, value, .. }) if value == -1.0));
        assert!(matches!(read("day,o,d,g,t\n"), Err(CliError::Parse { line: 1, .. })));
        assert!(matches!(read("date,origin,destination,good,tons\n2020-01-02,A,B,coal,nan\n"), Err(CliError::Parse { line: 2, .. })));
    }

    #[test]
    fn dates_round_trip_through_days() {
        let d = NaiveDate::from_ymd_opt(2018, 6, 1).unwrap();
        assert_eq!(date_to_day(d), Day(17683));
        assert_eq!(day_to_date(Day(17683)), d);
    }

    #[test]
    fn write_then_read_is_lossless() {
        let mut s = FlowSeries::new();
        s.add(Day(18000), "A", "B", "coal", 0.1 + 0.2).unwrap();
        s.add(Day(18001), "B", "A", "coal", 1.0 / 3.0).unwrap();
        s.add(Day(18001), "A", "A", "grain", 12345.678).unwrap();
        let bytes = flows_to_csv(&s).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("date,origin,destination,good,tons\n2019-04-14,A,B,coal,0.30000000000000004\n"));
        let back = read_flows(bytes.as_slice(), Path::new("x")).unwrap();
        assert_eq!(back.series.records().collect::<Vec<_>>(), s.records().collect::<Vec<_>>());
    }
}
