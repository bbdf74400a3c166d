//! Raw log ingestion: header parsing, Drain-style template mining, and
//! grouping of parsed records into session or sliding-window samples.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod drain;
mod grouping;
pub mod store;

pub use drain::{DrainConfig, DrainParser};
pub use grouping::{sessionize, sliding_windows, split_train_test, SessionKey, TrainTestSplit};

/// Dense identifier of a mined log event template.
pub type EventId = usize;

/// Ground-truth classification of a record or sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Abnormal,
}

/// One raw input line, before any parsing.
#[derive(Clone, Debug)]
pub struct RawLogRecord {
    pub line_no: u64,
    pub text: String,
}

/// Structured header of a log line: timestamp plus interned component/level IDs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    /// Epoch seconds, parsed per dataset format.
    pub timestamp: i64,
    pub component: u32,
    pub level: u32,
}

/// A mined event template. Parameter positions hold the placeholder `<*>`,
/// which may also appear embedded inside a token (`core.<*>`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub event_id: EventId,
    pub template: Vec<String>,
}

impl LogEvent {
    pub fn template_string(&self) -> String {
        self.template.join(" ")
    }

    /// Total number of `<*>` placeholders, counting embedded occurrences.
    pub fn placeholder_count(&self) -> usize {
        self.template.iter().map(|t| t.matches("<*>").count()).sum()
    }
}

impl fmt::Display for LogEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.template_string())
    }
}

/// Append-only catalog of mined templates. IDs are assigned in discovery
/// order and never reused; templates may be refined in place (tokens turning
/// into `<*>`) as more lines merge into a group.
#[derive(Clone, Debug, Default)]
pub struct EventVocabulary {
    templates: Vec<LogEvent>,
}

impl EventVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, id: EventId) -> Option<&LogEvent> {
        self.templates.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LogEvent> {
        self.templates.iter()
    }

    pub(crate) fn push(&mut self, template: Vec<String>) -> EventId {
        let event_id = self.templates.len();
        self.templates.push(LogEvent { event_id, template });
        event_id
    }

    pub(crate) fn template_mut(&mut self, id: EventId) -> &mut Vec<String> {
        &mut self.templates[id].template
    }
}

/// One parsed log line: header, event reference, extracted parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedRecord {
    pub line_no: u64,
    pub header: LogHeader,
    pub event_id: EventId,
    pub params: Vec<String>,
}

/// Reconstruct the message body of a record by substituting its parameters
/// back into the template placeholders, joined by single spaces. Whitespace
/// runs in the original line are not preserved; token content is.
pub fn render_body(record: &ParsedRecord, vocab: &EventVocabulary) -> String {
    let event = match vocab.get(record.event_id) {
        Some(e) => e,
        None => return String::new(),
    };
    let mut params = record.params.iter();
    let mut out = String::new();
    for (i, token) in event.template.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let mut rest = token.as_str();
        while let Some(pos) = rest.find("<*>") {
            out.push_str(&rest[..pos]);
            out.push_str(params.next().map(String::as_str).unwrap_or("<*>"));
            rest = &rest[pos + 3..];
        }
        out.push_str(rest);
    }
    out
}

/// Where a sample came from in the source stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOrigin {
    pub source: String,
    pub start_line: u64,
    /// Ordinal of the sample within its stream; the temporal axis used by
    /// nearest-neighbor support selection.
    pub window_index: u64,
}

/// A fixed grouping of events (session or window) with aligned headers.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub events: Vec<EventId>,
    pub headers: Vec<LogHeader>,
    pub label: Option<Label>,
    pub origin: SampleOrigin,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn is_abnormal(&self) -> bool {
        self.label == Some(Label::Abnormal)
    }
}

/// String interner assigning dense u32 IDs in first-appearance order.
#[derive(Clone, Debug, Default)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn resolve(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Input dataset flavor; fixes the header layout and label convention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    /// `<yymmdd> <hhmmss> <pid> <level> <component>: <content>`, labels in a
    /// separate per-block file.
    Hdfs,
    /// `<label> <epoch> <date> <node> <time> <node> <type> <component> <level> <content>`;
    /// label `-` means normal, anything else is an alert tag.
    Bgl,
    /// `<label> <epoch> <component> <level> <content>`; same label rule as BGL.
    Generic,
}

impl DatasetKind {
    pub fn parse_name(name: &str) -> Result<Self> {
        match name {
            "hdfs" => Ok(DatasetKind::Hdfs),
            "bgl" => Ok(DatasetKind::Bgl),
            "generic" => Ok(DatasetKind::Generic),
            other => Err(Error::config(format!("unknown dataset kind `{other}`"))),
        }
    }
}

/// Counters for tolerated irregularities in one parsing pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseStats {
    /// Lines whose header could not be parsed; skipped, never fatal.
    pub quarantined: u64,
    /// Records whose timestamp went backwards relative to the previous one.
    pub timestamp_regressions: u64,
    /// Blank lines skipped.
    pub blank: u64,
}

/// Result of parsing one raw stream end to end.
#[derive(Clone, Debug)]
pub struct ParsedStream {
    pub records: Vec<ParsedRecord>,
    /// Per-record label when the format carries one (BGL/generic); aligned
    /// with `records`.
    pub record_labels: Vec<Option<Label>>,
    pub vocab: EventVocabulary,
    pub components: Interner,
    pub levels: Interner,
    pub stats: ParseStats,
}

fn hdfs_timestamp(date: &str, time: &str) -> Option<i64> {
    use chrono::{NaiveDate, NaiveTime};
    if date.len() != 6 || time.len() != 6 {
        return None;
    }
    let yy: i32 = date[0..2].parse().ok()?;
    let mm: u32 = date[2..4].parse().ok()?;
    let dd: u32 = date[4..6].parse().ok()?;
    let hh: u32 = time[0..2].parse().ok()?;
    let mi: u32 = time[2..4].parse().ok()?;
    let ss: u32 = time[4..6].parse().ok()?;
    let d = NaiveDate::from_ymd_opt(2000 + yy, mm, dd)?;
    let t = NaiveTime::from_hms_opt(hh, mi, ss)?;
    Some(d.and_time(t).and_utc().timestamp())
}

struct SplitLine<'a> {
    header: LogHeader,
    body_tokens: Vec<&'a str>,
    label: Option<Label>,
}

fn split_line<'a>(
    kind: DatasetKind,
    line: &'a str,
    components: &mut Interner,
    levels: &mut Interner,
) -> Option<SplitLine<'a>> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    match kind {
        DatasetKind::Hdfs => {
            if tokens.len() < 6 {
                return None;
            }
            let timestamp = hdfs_timestamp(tokens[0], tokens[1])?;
            let level = levels.intern(tokens[3]);
            let component = components.intern(tokens[4].trim_end_matches(':'));
            Some(SplitLine {
                header: LogHeader {
                    timestamp,
                    component,
                    level,
                },
                body_tokens: tokens[5..].to_vec(),
                label: None,
            })
        }
        DatasetKind::Bgl => {
            if tokens.len() < 10 {
                return None;
            }
            let timestamp: i64 = tokens[1].parse().ok()?;
            let component = components.intern(tokens[7]);
            let level = levels.intern(tokens[8]);
            let label = if tokens[0] == "-" {
                Label::Normal
            } else {
                Label::Abnormal
            };
            Some(SplitLine {
                header: LogHeader {
                    timestamp,
                    component,
                    level,
                },
                body_tokens: tokens[9..].to_vec(),
                label: Some(label),
            })
        }
        DatasetKind::Generic => {
            if tokens.len() < 5 {
                return None;
            }
            let timestamp: i64 = tokens[1].parse().ok()?;
            let component = components.intern(tokens[2]);
            let level = levels.intern(tokens[3]);
            let label = if tokens[0] == "-" {
                Label::Normal
            } else {
                Label::Abnormal
            };
            Some(SplitLine {
                header: LogHeader {
                    timestamp,
                    component,
                    level,
                },
                body_tokens: tokens[4..].to_vec(),
                label: Some(label),
            })
        }
    }
}

/// Parse an iterator of raw lines into structured records, mining templates
/// on the fly. Header failures quarantine the line and continue.
pub fn parse_lines<I>(lines: I, kind: DatasetKind, cfg: &DrainConfig) -> Result<ParsedStream>
where
    I: IntoIterator<Item = (u64, String)>,
{
    let mut parser = DrainParser::new(cfg.clone());
    let mut components = Interner::new();
    let mut levels = Interner::new();
    let mut stats = ParseStats::default();
    let mut records = Vec::new();
    let mut record_labels = Vec::new();
    let mut bodies: Vec<Vec<String>> = Vec::new();
    let mut last_ts: Option<i64> = None;

    for (line_no, text) in lines {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            stats.blank += 1;
            continue;
        }
        let split = match split_line(kind, trimmed, &mut components, &mut levels) {
            Some(s) if !s.body_tokens.is_empty() => s,
            _ => {
                stats.quarantined += 1;
                continue;
            }
        };
        if let Some(prev) = last_ts {
            if split.header.timestamp < prev {
                stats.timestamp_regressions += 1;
            }
        }
        last_ts = Some(split.header.timestamp);
        let (event_id, params) = parser.parse_tokens(&split.body_tokens);
        records.push(ParsedRecord {
            line_no,
            header: split.header,
            event_id,
            params,
        });
        record_labels.push(split.label);
        bodies.push(split.body_tokens.iter().map(|t| (*t).to_string()).collect());
    }

    // Templates may have refined (tokens turning into placeholders) after a
    // record was first matched; re-extract parameters against the final
    // templates so every record agrees with its template's placeholder count.
    let vocab = parser.into_vocab();
    for (record, body) in records.iter_mut().zip(&bodies) {
        let template = &vocab
            .get(record.event_id)
            .expect("record template")
            .template;
        let raw: Vec<&str> = body.iter().map(String::as_str).collect();
        record.params = drain::extract_params(template, &raw);
    }

    Ok(ParsedStream {
        records,
        record_labels,
        vocab,
        components,
        levels,
        stats,
    })
}

/// Parse a log file from disk. Lines are numbered from 1.
pub fn parse_log_file(path: &Path, kind: DatasetKind, cfg: &DrainConfig) -> Result<ParsedStream> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i as u64 + 1, l.unwrap_or_default()));
    parse_lines(lines, kind, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic_line(ts: i64, body: &str) -> String {
        format!("- {ts} comp0 INFO {body}")
    }

    #[test]
    fn parses_generic_stream_and_counts_regressions() {
        let lines = vec![
            (1, generic_line(10, "alpha started")),
            (2, generic_line(9, "alpha started")),
            (3, generic_line(11, "alpha started")),
        ];
        let parsed = parse_lines(lines, DatasetKind::Generic, &DrainConfig::default()).unwrap();
        assert_eq!(parsed.records.len(), 3);
        assert_eq!(parsed.stats.timestamp_regressions, 1);
        assert_eq!(parsed.vocab.len(), 1);
    }

    #[test]
    fn quarantines_bad_headers_without_aborting() {
        let lines = vec![
            (1, "- notanumber comp0 INFO body here".to_string()),
            (2, generic_line(5, "fine body")),
            (3, "   ".to_string()),
        ];
        let parsed = parse_lines(lines, DatasetKind::Generic, &DrainConfig::default()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.stats.quarantined, 1);
        assert_eq!(parsed.stats.blank, 1);
    }

    #[test]
    fn hdfs_header_layout() {
        let line = "081109 203615 148 INFO dfs.DataNode$PacketResponder: PacketResponder 1 for block blk_38865049064139660 terminating";
        let lines = vec![(1, line.to_string())];
        let parsed = parse_lines(lines, DatasetKind::Hdfs, &DrainConfig::default()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        let rec = &parsed.records[0];
        assert_eq!(
            parsed.components.resolve(rec.header.component),
            Some("dfs.DataNode$PacketResponder")
        );
        assert_eq!(parsed.levels.resolve(rec.header.level), Some("INFO"));
        // 2008-11-09 20:36:15 UTC
        assert_eq!(rec.header.timestamp, 1226262975);
        assert_eq!(parsed.record_labels[0], None);
    }

    #[test]
    fn bgl_label_and_header_layout() {
        let normal = "- 1117838570 2005.06.03 R02-M1-N0-C:J12-U11 2005-06-03-15.42.50.363779 R02-M1-N0-C:J12-U11 RAS KERNEL INFO instruction cache parity error corrected";
        let alert = "KERNDTLB 1117838573 2005.06.03 R02-M1-N0-C:J12-U11 2005-06-03-15.42.53.363779 R02-M1-N0-C:J12-U11 RAS KERNEL FATAL data TLB error interrupt";
        let parsed = parse_lines(
            vec![(1, normal.to_string()), (2, alert.to_string())],
            DatasetKind::Bgl,
            &DrainConfig::default(),
        )
        .unwrap();
        assert_eq!(
            parsed.record_labels,
            vec![Some(Label::Normal), Some(Label::Abnormal)]
        );
        let rec = &parsed.records[0];
        assert_eq!(rec.header.timestamp, 1117838570);
        assert_eq!(
            parsed.components.resolve(rec.header.component),
            Some("KERNEL")
        );
        assert_eq!(parsed.levels.resolve(rec.header.level), Some("INFO"));
    }

    #[test]
    fn render_body_round_trips_tokens() {
        let lines = vec![(1, generic_line(1, "generating core.55239"))];
        let parsed = parse_lines(lines, DatasetKind::Generic, &DrainConfig::default()).unwrap();
        let body = render_body(&parsed.records[0], &parsed.vocab);
        assert_eq!(body, "generating core.55239");
    }
}
