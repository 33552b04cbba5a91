use crate::data::annotations::Annotation;
use crate::data::gaze::{GazeSequence, GazeWindow, Label, LabeledWindow, VadLabel, WindowSpec};
use crate::error::Result;

/// Forecasting windows starting at `0, stride, 2·stride, …`. Windows that
/// would include an invalid frame are skipped without shifting the grid.
pub fn extract_windows(seq: &GazeSequence, spec: &WindowSpec) -> Result<Vec<GazeWindow>> {
    spec.validate()?;
    let span = spec.span();
    let mut out = Vec::new();
    let mut start = 0;
    while start + span <= seq.len() {
        if seq.all_valid(start, start + span) {
            let mid = start + spec.input_frames;
            out.push(GazeWindow {
                input: seq.gaze_matrix(start, mid)?,
                target: Some(seq.gaze_matrix(mid, start + span)?),
                aux: seq.aux_matrix(start, mid),
                subject_id: seq.subject_id.clone(),
                start_frame: start,
            });
        }
        start += spec.stride;
    }
    Ok(out)
}

/// Input-only window over `end − frames .. end`, or `None` if it would start
/// before the sequence or contain an invalid frame.
pub fn preceding_window(seq: &GazeSequence, end: usize, frames: usize) -> Result<Option<GazeWindow>> {
    if frames == 0 || end < frames || end > seq.len() {
        return Ok(None);
    }
    let start = end - frames;
    if !seq.all_valid(start, end) {
        return Ok(None);
    }
    Ok(Some(GazeWindow {
        input: seq.gaze_matrix(start, end)?,
        target: None,
        aux: seq.aux_matrix(start, end),
        subject_id: seq.subject_id.clone(),
        start_frame: start,
    }))
}

/// Downstream samples: for a VAD range `[start, end)`, one window of
/// `input_seconds` ending at each of `start, start + stride, …` below `end`;
/// for a behavior event, one window ending at the event frame. Positions
/// without enough valid preceding frames are skipped.
pub fn label_windows(
    seq: &GazeSequence,
    annotations: &[Annotation],
    input_seconds: f64,
    stride_seconds: f64,
) -> Result<Vec<LabeledWindow>> {
    let frames = (input_seconds * seq.fps).round() as usize;
    let stride = ((stride_seconds * seq.fps).round() as usize).max(1);
    let mut out = Vec::new();
    for a in annotations {
        match a {
            Annotation::Vad {
                start_frame,
                end_frame,
                values,
            } => {
                let label = Label::Vad(VadLabel::from_array(*values)?);
                let mut p = *start_frame;
                while p < (*end_frame).max(*start_frame + 1) {
                    if let Some(window) = preceding_window(seq, p, frames)? {
                        out.push(LabeledWindow { window, label });
                    }
                    p += stride;
                }
            }
            Annotation::Behavior {
                start_frame, values, ..
            } => {
                if let Some(window) = preceding_window(seq, *start_frame, frames)? {
                    out.push(LabeledWindow {
                        window,
                        label: Label::Behavior(*values),
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Behavior;

    fn seq(len: usize) -> GazeSequence {
        GazeSequence::from_samples("s", 30.0, (0..len).map(|i| ([i as f64; 6], true, None))).unwrap()
    }

    #[test]
    fn window_counts() {
        let spec = WindowSpec::default();
        let starts = |n| {
            extract_windows(&seq(n), &spec)
                .unwrap()
                .iter()
                .map(|w| w.start_frame)
                .collect::<Vec<_>>()
        };
        assert_eq!(starts(451), vec![0, 151]);
        assert!(starts(299).is_empty());
        assert_eq!(starts(300), vec![0]);
    }

    #[test]
    fn window_contents_are_contiguous() {
        let w = &extract_windows(&seq(451), &WindowSpec::default()).unwrap()[1];
        assert_eq!(w.input.dims(), &[150, 6]);
        assert_eq!(w.input.get(0, 0), 151.0);
        assert_eq!(w.target.as_ref().unwrap().get(0, 3), 301.0);
        assert_eq!(w.target.as_ref().unwrap().get(149, 0), 450.0);
    }

    #[test]
    fn invalid_frame_skips_window_without_shifting() {
        let mut s = seq(800);
        s.frames[200].valid = false;
        let starts: Vec<_> = extract_windows(&s, &WindowSpec::default())
            .unwrap()
            .iter()
            .map(|w| w.start_frame)
            .collect();
        assert_eq!(starts, vec![302, 453]);
    }

    #[test]
    fn vad_sentence_positions() {
        let s = seq(1800);
        let ann = [Annotation::Vad {
            start_frame: 600,
            end_frame: 900,
            values: [0.2, 0.4, 0.6],
        }];
        let w = label_windows(&s, &ann, 5.0, 3.0).unwrap();
        let starts: Vec<_> = w.iter().map(|l| l.window.start_frame).collect();
        assert_eq!(starts, vec![450, 540, 630, 720]);
        assert!(w.iter().all(|l| l.window.input.rows() == 150));
    }

    #[test]
    fn behavior_windows() {
        let s = seq(1800);
        let ann = [
            Annotation::Behavior {
                start_frame: 10,
                end_frame: 10,
                values: Behavior::Laugh,
            },
            Annotation::Behavior {
                start_frame: 200,
                end_frame: 200,
                values: Behavior::Sigh,
            },
        ];
        let w = label_windows(&s, &ann, 2.0, 3.0).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].window.start_frame, 140);
        assert_eq!(w[0].window.input.get(59, 0), 199.0);
        assert_eq!(w[0].label, Label::Behavior(Behavior::Sigh));
    }
}
