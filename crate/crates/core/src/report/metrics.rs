use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TrainLoss,
    ValGazeCorr,
    Mae,
    PearsonR,
    MacroF1,
}

impl Metric {
    pub const ALL: [Self; 5] = [
        Self::TrainLoss,
        Self::ValGazeCorr,
        Self::Mae,
        Self::PearsonR,
        Self::MacroF1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::TrainLoss => "train_loss",
            Self::ValGazeCorr => "val_gaze_corr",
            Self::Mae => "mae",
            Self::PearsonR => "pearson_r",
            Self::MacroF1 => "macro_f1",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

/// One long-format metric value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub stage: String,
    pub config_hash: String,
    pub metric: Metric,
    pub value: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
}

fn csv_err(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            row,
            message: format!("{kind:?}"),
        },
    }
}

impl MetricsReport {
    pub fn push(&mut self, run_id: &str, stage: &str, config_hash: &str, metric: Metric, value: f64, seed: u64) {
        self.rows.push(MetricRow {
            run_id: run_id.to_string(),
            stage: stage.to_string(),
            config_hash: config_hash.to_string(),
            metric,
            value,
            seed,
        });
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, other: MetricsReport) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if self.rows.is_empty() {
            w.write_record(["run_id", "stage", "config_hash", "metric", "value", "seed"])
                .map_err(csv_err)?;
        }
        for r in &self.rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the long format; non-finite values are rejected.
    pub fn parse_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<MetricRow>() {
            let row = rec.map_err(csv_err)?;
            if !row.value.is_finite() {
                return Err(Error::Parse {
                    row: rows.len() + 2,
                    message: format!("non-finite value for {}", row.metric),
                });
            }
            rows.push(row);
        }
        Ok(Self { rows })
    }
}
