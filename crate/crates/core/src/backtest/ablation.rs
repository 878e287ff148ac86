use std::io::Write;

use rayon::prelude::*;

use super::engine::{AblationFlags, Backtester, RunOutput};
use super::metrics::MetricsReport;
use crate::error::Result;

/// The full model followed by the five ablations, in report order.
pub const ABLATION_ROWS: [(&str, AblationFlags); 6] = [
    ("full", AblationFlags::FULL),
    ("w/o risk scaling", AblationFlags { risk_scaling: false, ..AblationFlags::FULL }),
    ("w/o combined optimization", AblationFlags { combined_optimization: false, ..AblationFlags::FULL }),
    ("w/o text", AblationFlags { text_agents: false, ..AblationFlags::FULL }),
    ("w/o structured", AblationFlags { structured_agents: false, ..AblationFlags::FULL }),
    ("w/o all", AblationFlags::NONE),
];

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub configuration: &'static str,
    pub flags: AblationFlags,
    pub metrics: MetricsReport,
    pub output: RunOutput,
}

/// Runs every configuration concurrently over the shared panel.
pub fn ablation_run(bt: &Backtester<'_>) -> Result<Vec<AblationRow>> {
    ABLATION_ROWS
        .par_iter()
        .map(|&(configuration, flags)| {
            let output = bt.run_flags(flags, configuration.replace("w/o ", "wo_").replace(' ', "_"))?;
            Ok(AblationRow { configuration, flags, metrics: output.ledger.metrics()?, output })
        })
        .collect()
}

/// `configuration` plus the eight metrics; unavailable ratios are empty cells.
pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["configuration"];
    header.extend(MetricsReport::NAMES);
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.configuration.to_string()];
        rec.extend(row.metrics.values().iter().map(|v| v.map_or(String::new(), |x| x.to_string())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
