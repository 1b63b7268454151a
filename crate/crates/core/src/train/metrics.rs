use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const METRICS_HEADER: &str = "epoch,train_loss,aux1,aux2,aux3,aux4,main,test_top1,wall_time_s";

/// Maximum auxiliary heads the metrics CSV has columns for.
const AUX_COLUMNS: usize = 4;

/// One epoch of training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// 1-based.
    pub epoch: usize,
    /// Sample-weighted mean of the weighted total loss over the epoch.
    pub train_loss: f32,
    /// Mean unweighted loss per head, auxiliary heads first, main last.
    pub per_head_losses: Vec<f32>,
    /// Main-head top-1 accuracy on the evaluation set, when evaluated.
    pub test_top1: Option<f32>,
    pub wall_time_s: f64,
}

impl MetricsRecord {
    /// One CSV row matching [`METRICS_HEADER`]. Missing auxiliary heads and
    /// skipped evaluations leave their cells empty.
    pub fn csv_row(&self) -> String {
        let (main, aux) = self
            .per_head_losses
            .split_last()
            .map_or((String::new(), &[][..]), |(m, a)| (m.to_string(), a));
        let mut cells = vec![self.epoch.to_string(), self.train_loss.to_string()];
        for i in 0..AUX_COLUMNS {
            cells.push(aux.get(i).map_or(String::new(), |v| v.to_string()));
        }
        cells.push(main);
        cells.push(self.test_top1.map_or(String::new(), |v| v.to_string()));
        cells.push(self.wall_time_s.to_string());
        cells.join(",")
    }
}

pub fn write_metrics_csv<W: Write>(mut w: W, records: &[MetricsRecord]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}
