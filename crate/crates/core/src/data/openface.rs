//! Reader and writer for OpenFace 2.0 style per-frame CSV output.

use std::io::{Read, Write};

use crate::data::gaze::{GazeSequence, GAZE_DIMS};
use crate::error::{Error, Result};

pub const GAZE_COLUMNS: [&str; GAZE_DIMS] = ["gaze_0_x", "gaze_0_y", "gaze_0_z", "gaze_1_x", "gaze_1_y", "gaze_1_z"];

/// Blink (AU45) and eyebrow (AU01, AU02, AU04) intensities.
pub const FACE_COLUMNS: [&str; 4] = ["AU45_r", "AU01_r", "AU02_r", "AU04_r"];

/// Maps column roles to header names. Only the gaze columns are required;
/// the other roles are used when their column is present.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnMap {
    pub frame: String,
    pub success: String,
    pub confidence: String,
    pub gaze: [String; GAZE_DIMS],
    pub face: Vec<String>,
    /// Frames with confidence below this are marked invalid.
    pub min_confidence: f64,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            frame: "frame".into(),
            success: "success".into(),
            confidence: "confidence".into(),
            gaze: GAZE_COLUMNS.map(String::from),
            face: FACE_COLUMNS.iter().map(|s| s.to_string()).collect(),
            min_confidence: 0.75,
        }
    }
}

fn parse_cell(record: &csv::StringRecord, col: usize, line: usize, name: &str) -> Result<f64> {
    let cell = record.get(col).unwrap_or("");
    cell.parse::<f64>().map_err(|_| Error::Parse {
        row: line,
        message: format!("column `{name}` has non-numeric value {cell:?}"),
    })
}

/// Parses one sequence. Frames are numbered by row order; rows with
/// `success = 0`, low confidence, or non-finite gaze are kept but marked
/// invalid. Parse errors report the 1-based line number in the file.
pub fn parse_openface_csv<R: Read>(reader: R, columns: &ColumnMap, fps: f64) -> Result<GazeSequence> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| header.iter().position(|h| h == name);

    let mut gaze_cols = [0usize; GAZE_DIMS];
    for (slot, name) in gaze_cols.iter_mut().zip(&columns.gaze) {
        *slot = find(name).ok_or_else(|| Error::Schema { column: name.clone() })?;
    }
    let frame_col = find(&columns.frame);
    let success_col = find(&columns.success);
    let confidence_col = find(&columns.confidence);
    let face_cols: Option<Vec<usize>> = if columns.face.is_empty() {
        None
    } else {
        columns.face.iter().map(|n| find(n)).collect()
    };

    let mut samples = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(samples.len() + 2, |p| p.line() as usize);
        if let Some(c) = frame_col {
            parse_cell(&record, c, line, &columns.frame)?;
        }
        let mut gaze = [0.0; GAZE_DIMS];
        for (g, (&c, name)) in gaze.iter_mut().zip(gaze_cols.iter().zip(&columns.gaze)) {
            *g = parse_cell(&record, c, line, name)?;
        }
        let mut valid = gaze.iter().all(|v| v.is_finite());
        if let Some(c) = success_col {
            valid &= parse_cell(&record, c, line, &columns.success)? != 0.0;
        }
        if let Some(c) = confidence_col {
            valid &= parse_cell(&record, c, line, &columns.confidence)? >= columns.min_confidence;
        }
        if !valid {
            // keep invalid rows finite so downstream matrices stay finite
            for g in &mut gaze {
                if !g.is_finite() {
                    *g = 0.0;
                }
            }
        }
        let face = match &face_cols {
            Some(cols) => Some(
                cols.iter()
                    .zip(&columns.face)
                    .map(|(&c, n)| parse_cell(&record, c, line, n))
                    .collect::<Result<Vec<f64>>>()?,
            ),
            None => None,
        };
        samples.push((gaze, valid, face));
    }
    GazeSequence::from_samples("", fps, samples)
}

/// Writes a sequence with OpenFace column names. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_openface_csv<W: Write>(seq: &GazeSequence, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let with_face = !seq.frames.is_empty()
        && seq
            .frames
            .iter()
            .all(|f| f.face_aux.as_ref().is_some_and(|a| a.len() == FACE_COLUMNS.len()));
    let mut header = vec!["frame", "timestamp", "confidence", "success"];
    header.extend(GAZE_COLUMNS);
    if with_face {
        header.extend(FACE_COLUMNS);
    }
    w.write_record(&header).map_err(csv_io)?;
    for f in &seq.frames {
        let mut row = vec![
            (f.index + 1).to_string(),
            f.t.to_string(),
            if f.valid { "0.98" } else { "0" }.to_string(),
            if f.valid { "1" } else { "0" }.to_string(),
        ];
        row.extend(f.gaze.iter().map(|v| v.to_string()));
        if with_face {
            row.extend(f.face_aux.iter().flatten().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "frame, timestamp, confidence, success, gaze_0_x, gaze_0_y, gaze_0_z, gaze_1_x, gaze_1_y, gaze_1_z";

    fn parse(text: &str) -> Result<GazeSequence> {
        parse_openface_csv(text.as_bytes(), &ColumnMap::default(), 30.0)
    }

    #[test]
    fn three_rows_copied() {
        let mut text = String::from(HEADER);
        for i in 1..=3 {
            text.push_str(&format!("\n{i}, 0.0, 0.98, 1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1"));
        }
        let seq = parse(&text).unwrap();
        assert_eq!(seq.len(), 3);
        for (i, f) in seq.frames.iter().enumerate() {
            assert_eq!(f.index, i);
            assert_eq!(f.gaze, [0.1; 6]);
            assert!(f.valid);
            assert!(f.face_aux.is_none());
        }
        assert!((seq.frames[2].t - 2.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn missing_gaze_column_is_schema_error() {
        let text = "frame,success,gaze_0_x,gaze_0_y,gaze_0_z,gaze_1_x,gaze_1_y\n1,1,0,0,0,0,0";
        match parse(text) {
            Err(Error::Schema { column }) => assert_eq!(column, "gaze_1_z"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn failed_rows_are_invalid() {
        let text = format!(
            "{HEADER}\n1, 0, 0.98, 0, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1\n2, 0.03, 0.2, 1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1"
        );
        let seq = parse(&text).unwrap();
        assert_eq!(seq.len(), 2);
        assert!(!seq.frames[0].valid);
        assert!(!seq.frames[1].valid, "low confidence");
    }

    #[test]
    fn non_numeric_reports_line() {
        let text =
            format!("{HEADER}\n1, 0, 0.98, 1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1\n2, 0, 0.98, 1, x, 0.1, 0.1, 0.1, 0.1, 0.1");
        match parse(&text) {
            Err(Error::Parse { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("gaze_0_x"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn remapped_columns() {
        let mut map = ColumnMap::default();
        map.gaze = ["a", "b", "c", "d", "e", "f"].map(String::from);
        let seq = parse_openface_csv("a,b,c,d,e,f\n1,2,3,4,5,6\n".as_bytes(), &map, 25.0).unwrap();
        assert_eq!(seq.frames[0].gaze, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(seq.fps, 25.0);
    }

    #[test]
    fn face_columns_read_when_present() {
        let text =
            format!("{HEADER}, AU45_r, AU01_r, AU02_r, AU04_r\n1, 0, 0.98, 1, 0, 0, -1, 0, 0, -1, 0.5, 1, 1.5, 2");
        let seq = parse(&text).unwrap();
        assert_eq!(seq.frames[0].face_aux.as_deref(), Some(&[0.5, 1.0, 1.5, 2.0][..]));
    }
}
