//! On-disk formats owned by the corpus: the columnar parsed-record file and
//! the template catalog. Columns are tab-separated; parameters within the
//! params column are joined by the reserved unit separator `\x1f` (tokens
//! come from whitespace splitting so neither byte can occur in them).

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{EventVocabulary, Interner, LogHeader, ParsedRecord, ParsedStream};

pub const PARAM_SEP: char = '\x1f';

/// Write one row per record: line_no, timestamp, component, level, event_id, params.
pub fn write_records(path: &Path, stream: &ParsedStream) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for rec in &stream.records {
        let component = stream
            .components
            .resolve(rec.header.component)
            .unwrap_or("");
        let level = stream.levels.resolve(rec.header.level).unwrap_or("");
        let mut params = String::new();
        for (i, p) in rec.params.iter().enumerate() {
            if i > 0 {
                params.push(PARAM_SEP);
            }
            params.push_str(p);
        }
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            rec.line_no, rec.header.timestamp, component, level, rec.event_id, params
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Write the template catalog: event_id, template string.
pub fn write_templates(path: &Path, vocab: &EventVocabulary) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for event in vocab.iter() {
        writeln!(w, "{}\t{}", event.event_id, event.template_string())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a columnar record file back. Interners are rebuilt in row order.
pub fn read_records(path: &Path) -> Result<(Vec<ParsedRecord>, Interner, Interner)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut components = Interner::new();
    let mut levels = Interner::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(Error::data(format!(
                "{}:{}: expected 6 columns, found {}",
                path.display(),
                i + 1,
                cols.len()
            )));
        }
        let parse_err =
            |what: &str| Error::data(format!("{}:{}: bad {what}", path.display(), i + 1));
        let record = ParsedRecord {
            line_no: cols[0].parse().map_err(|_| parse_err("line_no"))?,
            header: LogHeader {
                timestamp: cols[1].parse().map_err(|_| parse_err("timestamp"))?,
                component: components.intern(cols[2]),
                level: levels.intern(cols[3]),
            },
            event_id: cols[4].parse().map_err(|_| parse_err("event_id"))?,
            params: if cols[5].is_empty() {
                Vec::new()
            } else {
                cols[5].split(PARAM_SEP).map(str::to_string).collect()
            },
        };
        records.push(record);
    }
    Ok((records, components, levels))
}
