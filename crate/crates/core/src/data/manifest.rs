//! Dataset manifest: a CSV listing one recording per row.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::annotations::{parse_annotations, Annotation};
use crate::data::gaze::GazeSequence;
use crate::data::openface::{parse_openface_csv, ColumnMap};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            _ => Err(Error::Config(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub csv_path: PathBuf,
    /// Empty when the recording has no annotations.
    #[serde(default, deserialize_with = "empty_as_none")]
    pub annotation_path: Option<PathBuf>,
    pub subject_id: String,
    pub split: Split,
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<PathBuf>, D::Error> {
    let s = Option::<String>::deserialize(d)?;
    Ok(s.filter(|s| !s.is_empty()).map(PathBuf::from))
}

/// Parses manifest rows; relative paths are kept as written.
pub fn parse_manifest<R: Read>(reader: R) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        row: 1,
        message: e.to_string(),
    })?;
    for column in ["csv_path", "annotation_path", "subject_id", "split"] {
        if !header.iter().any(|h| h == column) {
            return Err(Error::Schema { column: column.into() });
        }
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                row: e.position().map_or(i + 2, |p| p.line() as usize),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_manifest<W: Write>(entries: &[ManifestEntry], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["csv_path", "annotation_path", "subject_id", "split"])
        .map_err(csv_io)?;
    for e in entries {
        let ann = e
            .annotation_path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        w.write_record([
            e.csv_path.display().to_string(),
            ann,
            e.subject_id.clone(),
            e.split.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// A recording loaded through a manifest.
#[derive(Clone, Debug)]
pub struct Recording {
    pub sequence: GazeSequence,
    pub annotations: Vec<Annotation>,
    pub split: Split,
}

/// Loads a manifest file and every recording it lists. Relative paths are
/// resolved against the manifest's directory.
pub fn load_manifest(path: &Path, columns: &ColumnMap, fps: f64) -> Result<Vec<Recording>> {
    let entries = parse_manifest(File::open(path)?)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    entries
        .into_iter()
        .map(|e| {
            let mut sequence = parse_openface_csv(BufReader::new(File::open(dir.join(&e.csv_path))?), columns, fps)?;
            sequence.subject_id = e.subject_id.clone();
            let annotations = match &e.annotation_path {
                Some(p) => parse_annotations(BufReader::new(File::open(dir.join(p))?))?,
                None => Vec::new(),
            };
            Ok(Recording {
                sequence,
                annotations,
                split: e.split,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let entries = vec![
            ManifestEntry {
                csv_path: "a/s1.csv".into(),
                annotation_path: Some("a/s1.jsonl".into()),
                subject_id: "s1".into(),
                split: Split::Train,
            },
            ManifestEntry {
                csv_path: "s2.csv".into(),
                annotation_path: None,
                subject_id: "s2".into(),
                split: Split::Val,
            },
        ];
        let mut buf = Vec::new();
        write_manifest(&entries, &mut buf).unwrap();
        assert_eq!(parse_manifest(&buf[..]).unwrap(), entries);
    }

    #[test]
    fn missing_column_and_bad_split() {
        assert!(matches!(
            parse_manifest("csv_path,subject_id,split\n".as_bytes()),
            Err(Error::Schema { column }) if column == "annotation_path"
        ));
        let text = "csv_path,annotation_path,subject_id,split\na.csv,,s1,test\n";
        assert!(matches!(
            parse_manifest(text.as_bytes()),
            Err(Error::Parse { row: 2, .. })
        ));
    }
}
