//! Reader for the subset of XES used by public process-mining logs: traces
//! grouped by `concept:name`, events carrying string/date/numeric attributes.
//! Start/complete lifecycle pairs are merged into one event.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;

use super::{parse_timestamp, AttrValue, Event, StreamError};

#[derive(Default)]
struct PendingEvent {
    attrs: BTreeMap<String, (String, String)>,
}

fn attr_pair(tag: &BytesStart<'_>) -> Result<(String, String), StreamError> {
    let mut key = None;
    let mut value = None;
    for a in tag.attributes() {
        let a = a.map_err(|e| StreamError::Xes(e.to_string()))?;
        let v = a.unescape_value().map_err(|e| StreamError::Xes(e.to_string()))?.into_owned();
        match a.key.as_ref() {
            b"key" => key = Some(v),
            b"value" => value = Some(v),
            _ => {}
        }
    }
    match (key, value) {
        (Some(k), Some(v)) => Ok((k, v)),
        _ => Err(StreamError::Xes("attribute without key/value".into())),
    }
}

/// Reads events from an XES document, returning them sorted by timestamp.
pub fn read_xes<R: BufRead>(reader: R) -> Result<Vec<Event>, StreamError> {
    let mut xml = Reader::from_reader(reader);
    xml.config_mut().trim_text(true);
    let mut buf = Vec::new();

    let mut out = Vec::new();
    let mut in_trace = false;
    let mut case_id = String::new();
    let mut trace_events: Vec<PendingEvent> = Vec::new();
    let mut current: Option<PendingEvent> = None;
    // nested list/container attributes are skipped wholesale
    let mut skip_depth = 0usize;
    let mut n_traces = 0usize;

    loop {
        let ev = xml.read_event_into(&mut buf).map_err(|e| StreamError::Xes(e.to_string()))?;
        match ev {
            XmlEvent::Eof => break,
            XmlEvent::Start(tag) => {
                let name = tag.name().as_ref().to_vec();
                if skip_depth > 0 {
                    skip_depth += 1;
                } else if name == b"trace" {
                    in_trace = true;
                    n_traces += 1;
                    case_id = format!("trace{n_traces}");
                    trace_events.clear();
                } else if name == b"event" && in_trace {
                    current = Some(PendingEvent::default());
                } else if matches!(name.as_slice(), b"list" | b"container" | b"string" | b"date" | b"int" | b"float" | b"boolean" | b"id") {
                    // attribute with children: keep its own value, skip nested ones
                    if current.is_some() || in_trace {
                        store_attr(&tag, &name, in_trace, &mut current, &mut case_id)?;
                    }
                    skip_depth = 1;
                }
            }
            XmlEvent::Empty(tag) => {
                if skip_depth > 0 {
                    continue;
                }
                let name = tag.name().as_ref().to_vec();
                if in_trace {
                    store_attr(&tag, &name, in_trace, &mut current, &mut case_id)?;
                }
            }
            XmlEvent::End(tag) => {
                if skip_depth > 0 {
                    skip_depth -= 1;
                    continue;
                }
                match tag.name().as_ref() {
                    b"event" => {
                        if let Some(ev) = current.take() {
                            trace_events.push(ev);
                        }
                    }
                    b"trace" => {
                        in_trace = false;
                        out.extend(finish_trace(&case_id, std::mem::take(&mut trace_events))?);
                    }
                    _ => {}
                }
            }
            _ => {}
        }
        buf.clear();
    }
    out.sort_by_key(|e| e.timestamp);
    Ok(out)
}

fn store_attr(
    tag: &BytesStart<'_>,
    name: &[u8],
    in_trace: bool,
    current: &mut Option<PendingEvent>,
    case_id: &mut String,
) -> Result<(), StreamError> {
    if !matches!(name, b"string" | b"date" | b"int" | b"float" | b"boolean" | b"id") {
        return Ok(());
    }
    let (k, v) = attr_pair(tag)?;
    let kind = String::from_utf8_lossy(name).into_owned();
    match current {
        Some(ev) => {
            ev.attrs.insert(k, (kind, v));
        }
        None if in_trace && k == "concept:name" => *case_id = v,
        None => {}
    }
    Ok(())
}

fn finish_trace(case_id: &str, events: Vec<PendingEvent>) -> Result<Vec<Event>, StreamError> {
    let mut open_starts: HashMap<String, Vec<i64>> = HashMap::new();
    let mut out = Vec::new();
    for pe in events {
        let get = |k: &str| pe.attrs.get(k).map(|(_, v)| v.clone());
        let activity = get("concept:name").ok_or_else(|| StreamError::Xes(format!("event without concept:name in {case_id}")))?;
        let raw_ts = get("time:timestamp").ok_or_else(|| StreamError::Xes(format!("event without time:timestamp in {case_id}")))?;
        let ts = parse_timestamp(&raw_ts).ok_or_else(|| StreamError::Xes(format!("bad timestamp `{raw_ts}`")))?;
        let lifecycle = get("lifecycle:transition").unwrap_or_else(|| "complete".into()).to_ascii_lowercase();
        if lifecycle == "start" {
            open_starts.entry(activity).or_default().push(ts);
            continue;
        }
        if lifecycle != "complete" {
            continue;
        }
        let mut e = Event::new(case_id, activity.clone(), get("org:resource").unwrap_or_default(), ts);
        if let Some(starts) = open_starts.get_mut(&activity) {
            if !starts.is_empty() {
                e.start = Some(starts.remove(0));
            }
        }
        for (k, (kind, v)) in &pe.attrs {
            if matches!(k.as_str(), "concept:name" | "time:timestamp" | "lifecycle:transition" | "org:resource") {
                continue;
            }
            let value = match kind.as_str() {
                "int" | "float" => AttrValue::infer(v),
                _ => AttrValue::Categorical(v.clone()),
            };
            e.attributes.insert(k.clone(), value);
        }
        out.push(e);
    }
    Ok(out)
}
