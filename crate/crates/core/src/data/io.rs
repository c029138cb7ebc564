use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DataError, EmbeddingSequence, PerformanceRecord, SegmentLabeling};
use crate::kernel::Tensor;
use crate::rubric::{parse_score_sheet, ActionType};

pub const SHEET_SUFFIX: &str = ".sheet.json";
pub const EMBEDDING_SUFFIX: &str = ".emb.f64";
pub const LABELS_SUFFIX: &str = ".labels.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Index of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub ids: Vec<String>,
    #[serde(default)]
    pub generator: Option<serde_json::Value>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> DataError {
    DataError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Header `rows, cols` as little-endian u64, then row-major little-endian f64.
pub fn write_embeddings(path: &Path, windows: &Tensor) -> Result<(), DataError> {
    let mut bytes = Vec::with_capacity(16 + windows.len() * 8);
    bytes.extend_from_slice(&(windows.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(windows.cols() as u64).to_le_bytes());
    for v in windows.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<Tensor, DataError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < 16 {
        return Err(format_err(path, "truncated header"));
    }
    let word =
        |i: usize| u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().expect("8-byte slice"));
    let (rows, cols) = (word(0) as usize, word(1) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(16));
    if expected != Some(bytes.len()) {
        return Err(format_err(
            path,
            format!("{} bytes do not hold a {rows}x{cols} matrix", bytes.len()),
        ));
    }
    let data = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor::from_vec(rows, cols, data).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_labels(path: &Path, labels: &SegmentLabeling) -> Result<(), DataError> {
    let mut text = String::with_capacity(labels.len() * 8);
    for a in labels.labels() {
        text.push_str(a.name());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_labels(path: &Path) -> Result<SegmentLabeling, DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let labels = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            line.trim()
                .parse::<ActionType>()
                .map_err(|m| format_err(path, format!("line {}: {m}", i + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SegmentLabeling::new(labels))
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), DataError> {
    let path = dir.join(MANIFEST_FILE);
    let mut text =
        serde_json::to_string_pretty(manifest).map_err(|e| format_err(&path, e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DataError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| format_err(&path, e.to_string()))
}

/// Writes the sheet, embedding and (if present) label files of one record.
pub fn write_record(dir: &Path, record: &PerformanceRecord) -> Result<(), DataError> {
    let id = record.id();
    let sheet_path = dir.join(format!("{id}{SHEET_SUFFIX}"));
    let mut doc = record.sheet.to_json();
    doc.push('\n');
    fs::write(&sheet_path, doc).map_err(|e| io_err(&sheet_path, e))?;
    write_embeddings(
        &dir.join(format!("{id}{EMBEDDING_SUFFIX}")),
        record.embeddings.windows(),
    )?;
    if let Some(labels) = &record.truth_labels {
        write_labels(&dir.join(format!("{id}{LABELS_SUFFIX}")), labels)?;
    }
    Ok(())
}

fn trailing_valid(windows: &Tensor) -> usize {
    (0..windows.rows())
        .rev()
        .find(|&r| windows.row(r).iter().any(|&v| v != 0.0))
        .map_or(0, |r| r + 1)
}

/// Loads one record by id. Labels are optional; without them the valid
/// count is the sequence length minus trailing all-zero windows.
pub fn load_record(dir: &Path, id: &str) -> Result<PerformanceRecord, DataError> {
    let sheet_path = dir.join(format!("{id}{SHEET_SUFFIX}"));
    let emb_path = dir.join(format!("{id}{EMBEDDING_SUFFIX}"));
    let labels_path = dir.join(format!("{id}{LABELS_SUFFIX}"));
    if !emb_path.exists() {
        return Err(DataError::MissingPair {
            id: id.to_string(),
            missing: "embedding",
        });
    }
    let text = fs::read_to_string(&sheet_path).map_err(|e| io_err(&sheet_path, e))?;
    let sheet = parse_score_sheet(&text).map_err(|source| DataError::Sheet {
        path: sheet_path.clone(),
        source,
    })?;
    if sheet.performance_id != id {
        return Err(format_err(
            &sheet_path,
            format!(
                "performance_id {:?} does not match file name",
                sheet.performance_id
            ),
        ));
    }
    let windows = read_embeddings(&emb_path)?;
    let truth_labels = if labels_path.exists() {
        Some(read_labels(&labels_path)?)
    } else {
        None
    };
    let valid = match &truth_labels {
        Some(l) => l.len(),
        None => trailing_valid(&windows),
    };
    let embeddings =
        EmbeddingSequence::new(windows, valid).map_err(|e| format_err(&emb_path, e.to_string()))?;
    let record = PerformanceRecord {
        sheet,
        embeddings,
        truth_labels,
    };
    record.validate()?;
    Ok(record)
}

fn ids_with_suffix(entries: &[PathBuf], suffix: &str) -> Vec<String> {
    let mut ids: Vec<String> = entries
        .iter()
        .filter_map(|p| p.file_name().and_then(|n| n.to_str()))
        .filter_map(|n| n.strip_suffix(suffix).map(str::to_string))
        .collect();
    ids.sort();
    ids
}

/// Loads every record in `dir`, sorted by id.
///
/// Each record needs a sheet and an embedding file; a labels file is
/// optional. All records must share one embedding dimension.
pub fn load_dataset(dir: &Path) -> Result<Vec<PerformanceRecord>, DataError> {
    let entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| io_err(dir, e)))
        .collect::<Result<_, _>>()?;
    let sheet_ids = ids_with_suffix(&entries, SHEET_SUFFIX);
    for id in ids_with_suffix(&entries, EMBEDDING_SUFFIX)
        .into_iter()
        .chain(ids_with_suffix(&entries, LABELS_SUFFIX))
    {
        if sheet_ids.binary_search(&id).is_err() {
            return Err(DataError::MissingPair {
                id,
                missing: "sheet",
            });
        }
    }
    if sheet_ids.is_empty() {
        log::warn!("no records found in {}", dir.display());
        return Ok(Vec::new());
    }
    let mut records = Vec::with_capacity(sheet_ids.len());
    let mut dim = None;
    for id in &sheet_ids {
        let record = load_record(dir, id)?;
        let d = record.embeddings.dim();
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(DataError::DimensionMismatch {
                    id: id.clone(),
                    expected,
                    found: d,
                })
            }
            _ => {}
        }
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};

    fn small(n: usize) -> Vec<PerformanceRecord> {
        generate_synthetic(
            &SyntheticConfig {
                n_records: n,
                ..SyntheticConfig::default()
            },
            5,
        )
        .unwrap()
    }

    #[test]
    fn embedding_file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.emb.f64");
        let t = Tensor::from_rows(&[[1.5, -2.0], [0.0, 3.25], [7.0, 8.0]]).unwrap();
        write_embeddings(&path, &t).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 6 * 8);
        assert_eq!(&bytes[..8], &3u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &1.5f64.to_le_bytes());
        assert_eq!(read_embeddings(&path).unwrap(), t);
        fs::write(&path, &bytes[..30]).unwrap();
        assert!(matches!(
            read_embeddings(&path),
            Err(DataError::Format { .. })
        ));
    }

    #[test]
    fn two_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let records = small(2);
        for r in &records {
            write_record(dir.path(), r).unwrap();
        }
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded, records);
    }

    #[test]
    fn empty_directory_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn extra_jump_in_labels_is_a_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut record = small(1).remove(0);
        let mut labels = record.truth_labels.clone().unwrap().labels().to_vec();
        // turn the interior of the longest transition into a jump
        let gap = record
            .truth_labels
            .as_ref()
            .unwrap()
            .segments()
            .into_iter()
            .filter(|s| s.action == ActionType::Transition && s.start > 0)
            .max_by_key(|s| s.len())
            .unwrap();
        labels[gap.start + 1] = ActionType::Jump;
        record.truth_labels = Some(SegmentLabeling::new(labels));
        write_record(dir.path(), &record).unwrap();
        match load_dataset(dir.path()) {
            Err(DataError::CountMismatch {
                action: ActionType::Jump,
                planned,
                labelled,
                ..
            }) => {
                assert_eq!(labelled, planned + 1)
            }
            other => panic!("expected count mismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_embedding_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let record = small(1).remove(0);
        write_record(dir.path(), &record).unwrap();
        fs::remove_file(
            dir.path()
                .join(format!("{}{EMBEDDING_SUFFIX}", record.id())),
        )
        .unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(DataError::MissingPair {
                missing: "embedding",
                ..
            })
        ));
    }

    #[test]
    fn orphan_labels_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("ghost.labels.txt"), "Transition\n").unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(DataError::MissingPair {
                missing: "sheet",
                ..
            })
        ));
    }

    #[test]
    fn unlabelled_record_infers_valid_count_from_padding() {
        let dir = tempfile::tempdir().unwrap();
        let mut record = small(1).remove(0);
        let valid = record.embeddings.valid_count();
        record.embeddings = record.embeddings.padded_to(valid + 7).unwrap();
        record.truth_labels = None;
        write_record(dir.path(), &record).unwrap();
        let loaded = load_dataset(dir.path()).unwrap().remove(0);
        assert_eq!(loaded.embeddings.valid_count(), valid);
        assert_eq!(loaded.embeddings.len(), valid + 7);
    }
}
