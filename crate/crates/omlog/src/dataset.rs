//! Dataset loaders: parse a raw log file and group it into labeled samples
//! according to the dataset convention (HDFS block-ID sessions with a
//! separate label file, BGL/generic sliding windows with in-line labels).

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use regex::Regex;

use crate::config::RunConfig;
use crate::corpus::{
    parse_log_file, sessionize, sliding_windows, DatasetKind, EventVocabulary, Interner, Label,
    ParseStats, Sample,
};
use crate::error::{Error, Result};

/// A fully grouped, labeled sample stream plus parsing artifacts.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub samples: Vec<Sample>,
    pub vocab: EventVocabulary,
    pub components: Interner,
    pub levels: Interner,
    pub stats: ParseStats,
    /// Records dropped by sessionization (no key match).
    pub dropped_no_key: u64,
    pub normal: usize,
    pub abnormal: usize,
}

/// Read an HDFS-style anomaly label file: `BlockId,Label` rows where the
/// label is `Normal` or `Anomaly` (a header row is skipped if present).
pub fn read_session_labels(path: &Path) -> Result<HashMap<String, Label>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open label file {}: {e}", path.display())))?;
    let mut labels = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (key, label) = trimmed.split_once(',').ok_or_else(|| {
            Error::data(format!(
                "{}:{}: expected `key,label`",
                path.display(),
                i + 1
            ))
        })?;
        if i == 0 && label.eq_ignore_ascii_case("label") {
            continue;
        }
        let label = match label.trim() {
            l if l.eq_ignore_ascii_case("normal") => Label::Normal,
            l if l.eq_ignore_ascii_case("anomaly") || l.eq_ignore_ascii_case("abnormal") => {
                Label::Abnormal
            }
            other => {
                return Err(Error::data(format!(
                    "{}:{}: unknown label `{other}`",
                    path.display(),
                    i + 1
                )))
            }
        };
        labels.insert(key.trim().to_string(), label);
    }
    if labels.is_empty() {
        return Err(Error::data(format!(
            "label file {} is empty",
            path.display()
        )));
    }
    Ok(labels)
}

/// Load a raw log file into labeled samples per the configured convention.
pub fn load_dataset(input: &Path, labels: Option<&Path>, cfg: &RunConfig) -> Result<LoadedDataset> {
    let kind = cfg.dataset.kind;
    let parsed = parse_log_file(input, kind, &cfg.parser)?;
    let source = input.display().to_string();

    let (mut samples, dropped_no_key) = match kind {
        DatasetKind::Hdfs => {
            let key_re = Regex::new(&cfg.dataset.session_key)
                .map_err(|e| Error::config(format!("bad session_key regex: {e}")))?;
            let (mut samples, keys, dropped) =
                sessionize(&parsed.records, &parsed.vocab, &key_re, &source)?;
            if let Some(label_path) = labels {
                let label_map = read_session_labels(label_path)?;
                for (sample, key) in samples.iter_mut().zip(&keys) {
                    sample.label = label_map.get(key).copied();
                }
            }
            (samples, dropped)
        }
        DatasetKind::Bgl | DatasetKind::Generic => {
            let samples = sliding_windows(
                &parsed.records,
                &parsed.record_labels,
                cfg.dataset.window_size,
                cfg.dataset.window_step,
                &source,
            )?;
            (samples, 0)
        }
    };

    if samples.is_empty() {
        return Err(Error::data(format!(
            "{} produced zero samples under the configured grouping",
            input.display()
        )));
    }
    samples.shrink_to_fit();

    let normal = samples
        .iter()
        .filter(|s| s.label == Some(Label::Normal))
        .count();
    let abnormal = samples
        .iter()
        .filter(|s| s.label == Some(Label::Abnormal))
        .count();
    Ok(LoadedDataset {
        samples,
        vocab: parsed.vocab,
        components: parsed.components,
        levels: parsed.levels,
        stats: parsed.stats,
        dropped_no_key,
        normal,
        abnormal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    /// Ten hand-labeled HDFS-style lines over three blocks.
    const HDFS_FIXTURE: &str = "\
081109 203518 143 INFO dfs.DataNode$DataXceiver: Receiving block blk_1 src: /10.250.19.102:54106 dest: /10.250.19.102:50010
081109 203518 35 INFO dfs.FSNamesystem: BLOCK* NameSystem.allocateBlock: /mnt/part1. blk_1
081109 203519 143 INFO dfs.DataNode$DataXceiver: Receiving block blk_2 src: /10.250.10.6:40524 dest: /10.250.10.6:50010
081109 203520 145 INFO dfs.DataNode$DataXceiver: Receiving block blk_1 src: /10.250.14.224:42420 dest: /10.250.14.224:50010
081109 203521 145 INFO dfs.DataNode$PacketResponder: PacketResponder 1 for block blk_2 terminating
081109 203522 145 INFO dfs.DataNode$PacketResponder: PacketResponder 0 for block blk_3 terminating
081109 203523 143 INFO dfs.DataNode$DataXceiver: Receiving block blk_3 src: /10.250.19.102:54106 dest: /10.250.19.102:50010
081109 203524 35 INFO dfs.FSNamesystem: BLOCK* NameSystem.addStoredBlock: blockMap updated: 10.251.73.220:50010 is added to blk_2 size 67108864
081109 203525 35 INFO dfs.FSNamesystem: BLOCK* NameSystem.addStoredBlock: blockMap updated: 10.251.73.220:50010 is added to blk_1 size 67108864
081109 203526 143 INFO dfs.DataNode$DataXceiver: Receiving block blk_3 src: /10.250.6.191:46192 dest: /10.250.6.191:50010
";

    #[test]
    fn hdfs_fixture_sessions_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("hdfs.log");
        std::fs::write(&log, HDFS_FIXTURE).unwrap();
        let labels = dir.path().join("anomaly_label.csv");
        std::fs::write(
            &labels,
            "BlockId,Label\nblk_1,Normal\nblk_2,Anomaly\nblk_3,Normal\n",
        )
        .unwrap();

        let mut cfg = RunConfig::default();
        cfg.dataset.kind = DatasetKind::Hdfs;
        cfg.dataset.session_key = r"blk_-?\d+".to_string();
        let loaded = load_dataset(&log, Some(&labels), &cfg).unwrap();

        // Independent count of the key pattern over the raw fixture.
        let re = Regex::new(r"blk_-?\d+").unwrap();
        let mut distinct = std::collections::BTreeSet::new();
        for line in HDFS_FIXTURE.lines() {
            if let Some(m) = re.find(line) {
                distinct.insert(m.as_str().to_string());
            }
        }
        assert_eq!(loaded.samples.len(), distinct.len());
        assert_eq!(loaded.samples.len(), 3);
        // blk_1: lines 1,2,4,9; blk_2: 3,5,8; blk_3: 6,7,10.
        assert_eq!(loaded.samples[0].len(), 4);
        assert_eq!(loaded.samples[1].len(), 3);
        assert_eq!(loaded.samples[2].len(), 3);
        assert_eq!(loaded.samples[0].label, Some(Label::Normal));
        assert_eq!(loaded.samples[1].label, Some(Label::Abnormal));
        assert_eq!(loaded.normal, 2);
        assert_eq!(loaded.abnormal, 1);
        assert_eq!(loaded.dropped_no_key, 0);
    }

    #[test]
    fn bgl_fixture_windows_and_labels() {
        let mut lines = String::new();
        for i in 0..10 {
            // Record 7 is an alert; with window 5/5 the second window is abnormal.
            let label = if i == 7 { "KERNDTLB" } else { "-" };
            lines.push_str(&format!(
                "{label} {} 2005.06.03 R02-M1-N0 2005-06-03-15.42.50 R02-M1-N0 RAS KERNEL INFO msg kind{} body\n",
                1117838570 + i,
                i % 3,
            ));
        }
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("bgl.log");
        std::fs::write(&log, &lines).unwrap();

        let mut cfg = RunConfig::default();
        cfg.dataset.kind = DatasetKind::Bgl;
        cfg.dataset.window_size = 5;
        cfg.dataset.window_step = 5;
        let loaded = load_dataset(&log, None, &cfg).unwrap();
        assert_eq!(loaded.samples.len(), 2);
        assert_eq!(loaded.samples[0].label, Some(Label::Normal));
        assert_eq!(loaded.samples[1].label, Some(Label::Abnormal));
        assert_eq!(loaded.normal, 1);
        assert_eq!(loaded.abnormal, 1);
    }

    #[test]
    fn zero_samples_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("short.log");
        std::fs::write(&log, "- 1 c INFO too few lines\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.dataset.kind = DatasetKind::Generic;
        cfg.dataset.window_size = 100;
        cfg.dataset.window_step = 100;
        assert!(load_dataset(&log, None, &cfg).is_err());
    }

    #[test]
    fn malformed_label_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let labels = dir.path().join("bad.csv");
        std::fs::write(&labels, "blk_1,Weird\n").unwrap();
        assert!(read_session_labels(&labels).is_err());
        std::fs::write(&labels, "").unwrap();
        assert!(read_session_labels(&labels).is_err());
    }
}
