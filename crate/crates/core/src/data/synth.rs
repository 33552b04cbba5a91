//! Synthetic gaze recordings with regime-dependent labels.
//!
//! Each recording switches between latent regimes drawn from a table shared
//! by the whole corpus. A regime drives a skewed oscillation
//! `sin φ + c·sin 2φ` of the horizontal and vertical gaze angles. Reversing
//! time maps `c` to `−c`, so the sign of the skew is invisible to
//! time-symmetric summary statistics but visible to sequence models.
//! Valence follows the skew, arousal the amplitude and dominance the
//! frequency of the active regime.

use std::f64::consts::TAU;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::data::annotations::Annotation;
use crate::data::gaze::{Behavior, GazeSequence, VadLabel, GAZE_DIMS};
use crate::data::manifest::Split;
use crate::error::{config_err, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub fps: f64,
    pub regimes: usize,
    /// Seed of the regime table shared by every subject of a corpus.
    pub regime_seed: u64,
    /// Mean regime segment length.
    pub segment_s: f64,
    pub freq_hz: [f64; 2],
    /// Oscillation amplitude range in radians.
    pub amplitude: [f64; 2],
    /// Range of the skew magnitude `|c|`.
    pub skew: [f64; 2],
    /// Stationary standard deviation of the Ornstein–Uhlenbeck drift.
    pub noise_scale: f64,
    pub ou_theta: f64,
    pub blink_rate_hz: f64,
    pub blink_frames: usize,
    /// Standard deviation of the per-subject gaze offset in radians.
    pub subject_offset: f64,
    pub sentence_s: f64,
    /// Delay between a regime switch and the first labelled sentence.
    pub sentence_lead_s: f64,
    pub label_noise: f64,
    /// Minimum regime amplitude for behavior events.
    pub behavior_amplitude: f64,
    pub behavior_interval_s: f64,
    pub face_aux: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_s: 180.0,
            fps: 30.0,
            regimes: 12,
            regime_seed: 7,
            segment_s: 25.0,
            freq_hz: [0.15, 0.9],
            amplitude: [0.08, 0.3],
            skew: [0.2, 0.7],
            noise_scale: 0.05,
            ou_theta: 0.3,
            blink_rate_hz: 0.02,
            blink_frames: 6,
            subject_offset: 0.15,
            sentence_s: 10.0,
            sentence_lead_s: 10.0,
            label_noise: 0.03,
            behavior_amplitude: 0.19,
            behavior_interval_s: 6.0,
            face_aux: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration_s", self.duration_s),
            ("fps", self.fps),
            ("segment_s", self.segment_s),
            ("sentence_s", self.sentence_s),
            ("behavior_interval_s", self.behavior_interval_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return config_err(format!("{name} must be positive, got {v}"));
            }
        }
        let nonneg = [
            ("noise_scale", self.noise_scale),
            ("ou_theta", self.ou_theta),
            ("blink_rate_hz", self.blink_rate_hz),
            ("subject_offset", self.subject_offset),
            ("sentence_lead_s", self.sentence_lead_s),
            ("label_noise", self.label_noise),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return config_err(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, [lo, hi]) in [
            ("freq_hz", self.freq_hz),
            ("amplitude", self.amplitude),
            ("skew", self.skew),
        ] {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return config_err(format!("{name} range [{lo}, {hi}] invalid"));
            }
        }
        if self.regimes == 0 {
            return config_err("regimes must be at least 1");
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }
}

/// Parameters of one latent regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub freq_h: f64,
    pub freq_v: f64,
    pub amp_h: f64,
    pub amp_v: f64,
    pub skew: f64,
    /// Noise-free VAD label.
    pub vad: [f64; 3],
    pub behavior: Option<Behavior>,
}

fn lerp([lo, hi]: [f64; 2], u: f64) -> f64 {
    lo + (hi - lo) * u
}

fn unit(v: f64, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.5
    }
}

/// The regime table for `cfg.regime_seed`. Regimes come in mirror pairs
/// that share frequencies and amplitudes and differ only in the sign of the
/// skew, so time-symmetric statistics cannot tell pair members apart.
/// Frequencies and amplitudes are stratified across pairs.
pub fn regime_table(cfg: &SynthConfig) -> Result<Vec<Regime>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.regime_seed);
    let pairs = cfg.regimes.div_ceil(2);
    let strata = |rng: &mut ChaCha8Rng| {
        let mut order: Vec<usize> = (0..pairs).collect();
        for i in (1..pairs).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        order
            .into_iter()
            .map(|k| (k as f64 + rng.gen::<f64>()) / pairs as f64)
            .collect::<Vec<f64>>()
    };
    let fu = strata(&mut rng);
    let au = strata(&mut rng);
    let c_max = cfg.skew[1].max(f64::EPSILON);
    let mut regimes = Vec::with_capacity(cfg.regimes);
    for p in 0..pairs {
        let magnitude = lerp(cfg.skew, rng.gen());
        let freq_h = lerp(cfg.freq_hz, fu[p]);
        let amp_h = lerp(cfg.amplitude, au[p]);
        let freq_v = freq_h * rng.gen_range(0.6..1.4);
        let amp_v = amp_h * rng.gen_range(0.3..0.8);
        for sign in [1.0, -1.0] {
            if regimes.len() == cfg.regimes {
                break;
            }
            let skew = sign * magnitude;
            regimes.push(Regime {
                freq_h,
                freq_v,
                amp_h,
                amp_v,
                skew,
                vad: [
                    0.5 + 0.35 * skew / c_max,
                    0.15 + 0.7 * au[p],
                    0.15 + 0.7 * unit(freq_h, cfg.freq_hz),
                ],
                behavior: None,
            });
        }
    }
    let n = regimes.len();
    let mut active: Vec<usize> = (0..n).filter(|&r| regimes[r].amp_h >= cfg.behavior_amplitude).collect();
    active.sort_by(|&a, &b| regimes[a].freq_h.total_cmp(&regimes[b].freq_h).then(a.cmp(&b)));
    for (k, r) in active.into_iter().enumerate() {
        regimes[r].behavior = Behavior::from_index(k % 3);
    }
    Ok(regimes)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthRecording {
    pub sequence: GazeSequence,
    /// Active regime per frame.
    pub regime: Vec<usize>,
    pub vad: Vec<(Range<usize>, VadLabel)>,
    pub behaviors: Vec<(usize, Behavior)>,
}

impl SynthRecording {
    pub fn annotations(&self) -> Vec<Annotation> {
        let mut out: Vec<(usize, Annotation)> = self
            .vad
            .iter()
            .map(|(r, l)| {
                (
                    r.start,
                    Annotation::Vad {
                        start_frame: r.start,
                        end_frame: r.end,
                        values: l.to_array(),
                    },
                )
            })
            .chain(self.behaviors.iter().map(|&(f, b)| {
                (
                    f,
                    Annotation::Behavior {
                        start_frame: f,
                        end_frame: f,
                        values: b,
                    },
                )
            }))
            .collect();
        out.sort_by_key(|(f, _)| *f);
        out.into_iter().map(|(_, a)| a).collect()
    }
}

fn gaze_vector(alpha: f64, beta: f64) -> [f64; 3] {
    [alpha.sin() * beta.cos(), beta.sin(), -alpha.cos() * beta.cos()]
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("finite non-negative std")
}

/// One subject's recording. Equal `(cfg, seed)` give identical output.
pub fn synth_gaze(cfg: &SynthConfig, seed: u64) -> Result<SynthRecording> {
    let table = regime_table(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.frames();
    let fps = cfg.fps;
    let dt = 1.0 / fps;

    // regime segments
    let seg_len = |rng: &mut ChaCha8Rng| ((cfg.segment_s * rng.gen_range(0.6..1.4)) * fps).round().max(1.0) as usize;
    let mut segments: Vec<(Range<usize>, usize)> = Vec::new();
    let mut start = 0;
    let mut current = rng.gen_range(0..table.len());
    while start < n {
        let end = (start + seg_len(&mut rng)).min(n);
        segments.push((start..end, current));
        if table.len() > 1 {
            let step = rng.gen_range(1..table.len());
            current = (current + step) % table.len();
        }
        start = end;
    }

    let offset = normal(cfg.subject_offset);
    let (off_h, off_v) = (offset.sample(&mut rng), offset.sample(&mut rng));
    let vergence = 0.04;
    let eye_noise = normal(cfg.noise_scale * 0.2);
    let ou_step = normal(cfg.noise_scale * (2.0 * cfg.ou_theta * dt).sqrt());
    let mut ou = [
        normal(cfg.noise_scale).sample(&mut rng),
        normal(cfg.noise_scale).sample(&mut rng),
    ];
    let (mut phi_h, mut phi_v) = (rng.gen::<f64>() * TAU, rng.gen::<f64>() * TAU);

    // blink gaps as a Poisson process
    let mut valid = vec![true; n];
    if cfg.blink_rate_hz > 0.0 && cfg.blink_frames > 0 {
        let gap = Exp::new(cfg.blink_rate_hz).expect("positive rate");
        let mut t = gap.sample(&mut rng);
        while ((t * fps) as usize) < n {
            let s = (t * fps) as usize;
            for v in &mut valid[s..(s + cfg.blink_frames).min(n)] {
                *v = false;
            }
            t += gap.sample(&mut rng);
        }
    }

    let face_noise = normal(0.15);
    let mut regime_of = vec![0; n];
    let mut samples = Vec::with_capacity(n);
    for (range, r) in &segments {
        let reg = &table[*r];
        for i in range.clone() {
            regime_of[i] = *r;
            phi_h = (phi_h + TAU * reg.freq_h * dt) % TAU;
            phi_v = (phi_v + TAU * reg.freq_v * dt) % TAU;
            for o in &mut ou {
                *o += -cfg.ou_theta * *o * dt + ou_step.sample(&mut rng);
            }
            let wave = |phi: f64| phi.sin() + reg.skew * (2.0 * phi).sin();
            let alpha = off_h + reg.amp_h * wave(phi_h) + ou[0];
            let beta = off_v + reg.amp_v * wave(phi_v) + ou[1];
            let mut gaze = [0.0; GAZE_DIMS];
            gaze[..3].copy_from_slice(&gaze_vector(alpha + vergence, beta));
            gaze[3..].copy_from_slice(&gaze_vector(alpha - vergence, beta));
            for g in &mut gaze {
                *g += eye_noise.sample(&mut rng);
            }
            let face = cfg.face_aux.then(|| {
                let blink = if valid[i] { 0.1 } else { 2.5 };
                let [v, a, d] = reg.vad;
                vec![
                    blink + face_noise.sample(&mut rng).abs(),
                    0.5 + 1.5 * a + face_noise.sample(&mut rng),
                    0.5 + d + face_noise.sample(&mut rng),
                    1.2 - v + face_noise.sample(&mut rng),
                ]
            });
            if !valid[i] {
                gaze = [0.0; GAZE_DIMS];
            }
            samples.push((gaze, valid[i], face));
        }
    }

    // labels
    let label_noise = normal(cfg.label_noise);
    let lead = (cfg.sentence_lead_s * fps).round() as usize;
    let sentence = (cfg.sentence_s * fps).round() as usize;
    let interval = Exp::new(1.0 / cfg.behavior_interval_s).expect("positive interval");
    let mut vad = Vec::new();
    let mut behaviors = Vec::new();
    for (range, r) in &segments {
        let reg = &table[*r];
        let s = range.start + lead;
        if s + (fps as usize) <= range.end {
            let values = reg.vad.map(|v| (v + label_noise.sample(&mut rng)).clamp(0.0, 1.0));
            vad.push((s..(s + sentence).min(range.end), VadLabel::from_array(values)?));
        }
        if let Some(b) = reg.behavior {
            let mut t = s as f64 / fps + interval.sample(&mut rng);
            while ((t * fps) as usize) < range.end {
                behaviors.push(((t * fps) as usize, b));
                t += interval.sample(&mut rng);
            }
        }
    }

    let sequence = GazeSequence::from_samples(format!("synth-{seed}"), fps, samples)?;
    Ok(SynthRecording {
        sequence,
        regime: regime_of,
        vad,
        behaviors,
    })
}

/// A corpus of `train + val` subjects sharing one regime table. Subject ids
/// are `s000`, `s001`, …; the last `val` subjects form the validation split.
pub fn synth_corpus(cfg: &SynthConfig, train: usize, val: usize, seed: u64) -> Result<Vec<(SynthRecording, Split)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..train + val)
        .map(|i| {
            let mut rec = synth_gaze(cfg, rng.gen())?;
            rec.sequence.subject_id = format!("s{i:03}");
            let split = if i < train { Split::Train } else { Split::Val };
            Ok((rec, split))
        })
        .collect()
}
