//! CSV export of sweep results.

use std::io::Write;

use super::SweepRecord;
use crate::error::Result;

pub const RESULTS_COLUMNS: [&str; 6] = ["ratio", "model_id", "metric", "mean", "stderr", "trials"];
pub const SURFACE_COLUMNS: [&str; 6] = ["ratio", "mu1", "mu2", "train_error", "eval_error", "failed"];

/// One row per `(ratio, model, metric)`. Metrics are `train_error`,
/// `gen_error`, then `train_acc` and `gen_acc` for `+-1` labels, then `mu0`,
/// `mu1` and `mu2` for the optimal Gaussian model.
pub fn write_results_csv<W: Write>(sweep: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_COLUMNS)?;
    for record in sweep {
        for model in &record.models {
            let mut rows = vec![("train_error", model.train_error), ("gen_error", model.gen_error)];
            if let (Some(train), Some(gen)) = (model.train_acc, model.gen_acc) {
                rows.push(("train_acc", train));
                rows.push(("gen_acc", gen));
            }
            if let Some([mu0, mu1, mu2]) = model.mu_opt {
                rows.extend([("mu0", mu0), ("mu1", mu1), ("mu2", mu2)]);
            }
            for (metric, s) in rows {
                w.write_record([
                    record.ratio.to_string(),
                    model.model_id.clone(),
                    metric.to_string(),
                    s.mean.to_string(),
                    s.stderr.to_string(),
                    s.trials.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Trial-averaged grid-search surfaces of every ratio.
pub fn write_surface_csv<W: Write>(sweep: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SURFACE_COLUMNS)?;
    for record in sweep {
        for p in record.surface.iter().flatten() {
            w.write_record([
                record.ratio.to_string(),
                p.mu1.to_string(),
                p.mu2.to_string(),
                p.train_error.to_string(),
                p.eval_error.to_string(),
                p.failed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
