use std::collections::BTreeSet;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{AttrValue, Event, StreamError};

/// Column reference, by zero-based position or by header name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl From<usize> for Column {
    fn from(i: usize) -> Self {
        Column::Index(i)
    }
}

impl From<&str> for Column {
    fn from(s: &str) -> Self {
        Column::Name(s.to_string())
    }
}

/// Column mapping for delimited event files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub case: Column,
    pub activity: Column,
    pub timestamp: Column,
    #[serde(default)]
    pub resource: Option<Column>,
    #[serde(default)]
    pub start: Option<Column>,
}

fn default_delimiter() -> char {
    ','
}

impl CsvSchema {
    pub fn new(case: impl Into<Column>, activity: impl Into<Column>, timestamp: impl Into<Column>) -> Self {
        CsvSchema {
            delimiter: ',',
            case: case.into(),
            activity: activity.into(),
            timestamp: timestamp.into(),
            resource: None,
            start: None,
        }
    }

    pub fn with_resource(mut self, col: impl Into<Column>) -> Self {
        self.resource = Some(col.into());
        self
    }

    pub fn with_start(mut self, col: impl Into<Column>) -> Self {
        self.start = Some(col.into());
        self
    }

    /// Schema of the files written by [`write_csv`].
    pub fn simulated() -> Self {
        CsvSchema::new("case_id", "activity", "end_ts").with_resource("resource").with_start("start_ts")
    }

    fn index(&self, col: &Column, header: &[String], line: usize) -> Result<usize, StreamError> {
        match col {
            Column::Index(i) => Ok(*i),
            Column::Name(name) => header.iter().position(|h| h == name).ok_or_else(|| StreamError::MissingColumn {
                line,
                column: name.clone(),
            }),
        }
    }
}

fn column_label(col: &Column) -> String {
    match col {
        Column::Index(i) => format!("#{i}"),
        Column::Name(n) => n.clone(),
    }
}

/// Parses an ISO-8601 timestamp or an integer (or fractional) epoch into
/// epoch seconds. Sub-second precision is truncated.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then(|| v.trunc() as i64);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f%:z", "%Y-%m-%d %H:%M:%S%.f%z", "%Y-%m-%dT%H:%M:%S%.f%z"] {
        if let Ok(dt) = DateTime::parse_from_str(s, fmt) {
            return Some(dt.timestamp());
        }
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y/%m/%d %H:%M:%S%.f", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

fn split_record(raw: &str, delimiter: char) -> Result<Vec<String>, StreamError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter as u8)
        .flexible(true)
        .from_reader(raw.as_bytes());
    match rdr.records().next() {
        Some(Ok(rec)) => Ok(rec.iter().map(str::to_string).collect()),
        Some(Err(e)) => Err(StreamError::Csv(e.to_string())),
        None => Ok(Vec::new()),
    }
}

/// Parses one delimited row. Columns not mapped by `schema` become event
/// attributes named after `header` (or `col<i>` when the header is short).
pub fn parse_event_record(raw: &str, schema: &CsvSchema, header: &[String], line: usize) -> Result<Event, StreamError> {
    let fields = split_record(raw, schema.delimiter)?;
    event_from_fields(&fields, schema, header, line)
}

fn event_from_fields(fields: &[String], schema: &CsvSchema, header: &[String], line: usize) -> Result<Event, StreamError> {
    let get = |col: &Column| -> Result<(usize, &str), StreamError> {
        let i = schema.index(col, header, line)?;
        fields
            .get(i)
            .map(|v| (i, v.as_str()))
            .ok_or_else(|| StreamError::MissingColumn { line, column: column_label(col) })
    };

    let (ci, case) = get(&schema.case)?;
    let (ai, activity) = get(&schema.activity)?;
    let (ti, ts_raw) = get(&schema.timestamp)?;
    if activity.trim().is_empty() {
        return Err(StreamError::InvalidRecord { line, reason: "empty activity".into() });
    }
    let timestamp = parse_timestamp(ts_raw)
        .filter(|t| *t >= 0)
        .ok_or_else(|| StreamError::UnparseableTimestamp { line, value: ts_raw.to_string() })?;

    let mut mapped = vec![ci, ai, ti];
    let resource = match &schema.resource {
        Some(col) => {
            let (ri, r) = get(col)?;
            mapped.push(ri);
            r.to_string()
        }
        None => String::new(),
    };
    let start = match &schema.start {
        Some(col) => {
            let (si, raw) = get(col)?;
            mapped.push(si);
            if raw.trim().is_empty() {
                None
            } else {
                Some(
                    parse_timestamp(raw)
                        .filter(|t| *t >= 0)
                        .ok_or_else(|| StreamError::UnparseableTimestamp { line, value: raw.to_string() })?,
                )
            }
        }
        None => None,
    };

    let mut event = Event::new(case, activity, resource, timestamp);
    event.start = start;
    for (i, value) in fields.iter().enumerate() {
        if mapped.contains(&i) || value.is_empty() {
            continue;
        }
        let name = header.get(i).cloned().unwrap_or_else(|| format!("col{i}"));
        event.attributes.insert(name, AttrValue::infer(value));
    }
    Ok(event)
}

/// Reads a delimited file with a header row.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Vec<Event>, StreamError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(schema.delimiter as u8)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| StreamError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| StreamError::Csv(e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let fields: Vec<String> = rec.iter().map(str::to_string).collect();
        out.push(event_from_fields(&fields, schema, &header, line)?);
    }
    Ok(out)
}

/// Writes events as `case_id,activity,resource,start_ts,end_ts[,attributes...]`.
pub fn write_csv<W: Write>(events: &[Event], writer: W) -> Result<(), StreamError> {
    let attr_names: BTreeSet<&str> = events.iter().flat_map(|e| e.attributes.keys().map(String::as_str)).collect();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["case_id", "activity", "resource", "start_ts", "end_ts"];
    header.extend(attr_names.iter().copied());
    wtr.write_record(&header).map_err(|e| StreamError::Csv(e.to_string()))?;
    for e in events {
        let mut row = vec![
            e.case_id.clone(),
            e.activity.clone(),
            e.resource.clone(),
            e.start.map(|s| s.to_string()).unwrap_or_default(),
            e.timestamp.to_string(),
        ];
        for name in &attr_names {
            row.push(e.attributes.get(*name).map(|v| v.to_string()).unwrap_or_default());
        }
        wtr.write_record(&row).map_err(|err| StreamError::Csv(err.to_string()))?;
    }
    wtr.flush().map_err(|e| StreamError::Csv(e.to_string()))
}
