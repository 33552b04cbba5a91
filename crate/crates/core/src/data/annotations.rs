//! Line-delimited JSON annotation records.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::data::gaze::{Behavior, VadLabel};
use crate::error::{Error, Result};

/// A VAD label over the frame range `[start_frame, end_frame)`, or a behavior
/// event at `start_frame`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Annotation {
    Vad {
        start_frame: usize,
        end_frame: usize,
        values: [f64; 3],
    },
    Behavior {
        start_frame: usize,
        end_frame: usize,
        values: Behavior,
    },
}

impl Annotation {
    fn validate(&self) -> Result<()> {
        let (start, end) = match self {
            Annotation::Vad {
                start_frame,
                end_frame,
                values,
            } => {
                VadLabel::from_array(*values)?;
                (start_frame, end_frame)
            }
            Annotation::Behavior {
                start_frame, end_frame, ..
            } => (start_frame, end_frame),
        };
        if start > end {
            return Err(Error::Config(format!("start_frame {start} after end_frame {end}")));
        }
        Ok(())
    }
}

/// Parses one record per non-blank line. Errors carry the 1-based line.
pub fn parse_annotations<R: BufRead>(reader: R) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { row: i + 1, message };
        let a: Annotation = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        a.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(a);
    }
    Ok(out)
}

pub fn write_annotations<W: Write>(annotations: &[Annotation], mut writer: W) -> Result<()> {
    for a in annotations {
        let line = serde_json::to_string(a).map_err(|e| Error::Io(e.into()))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let anns = vec![
            Annotation::Vad {
                start_frame: 30,
                end_frame: 330,
                values: [0.25, 0.5, 0.75],
            },
            Annotation::Behavior {
                start_frame: 400,
                end_frame: 400,
                values: Behavior::Cry,
            },
        ];
        let mut buf = Vec::new();
        write_annotations(&anns, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"kind":"vad","start_frame":30"#));
        assert!(text.contains(r#""values":"cry""#));
        assert_eq!(parse_annotations(&buf[..]).unwrap(), anns);
    }

    #[test]
    fn out_of_range_vad_rejected_with_line() {
        let text = "\n{\"kind\":\"vad\",\"start_frame\":0,\"end_frame\":5,\"values\":[0.1,1.5,0.2]}\n";
        assert!(matches!(
            parse_annotations(text.as_bytes()),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn unknown_kind_rejected() {
        let text = "{\"kind\":\"smile\",\"start_frame\":0,\"end_frame\":5,\"values\":[0.1,0.5,0.2]}";
        assert!(parse_annotations(text.as_bytes()).is_err());
    }
}
