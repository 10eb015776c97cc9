use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use pmtr_core::scaling::{counting_enabled, run_scaling, runtime_slope, Method, RunStatus, ScalingRow};

use crate::config::RunConfig;
use crate::output::emit;

pub const CSV_HEADER: &str = "method,N,wall_ms,peak_bytes,status";

/// Timing and memory are blanked under `omit_timing`; refused rows keep
/// their (deterministic) required size.
pub fn to_csv(rows: &[ScalingRow], omit_timing: bool) -> String {
    let mut csv = format!("{CSV_HEADER}\n");
    for r in rows {
        let (wall, peak) = match (r.status, omit_timing) {
            (RunStatus::MemCap, _) => (String::new(), r.peak_bytes.to_string()),
            (RunStatus::Ok, true) => (String::new(), String::new()),
            (RunStatus::Ok, false) => (
                r.wall_ms.map(|w| format!("{w:.4}")).unwrap_or_default(),
                r.peak_bytes.to_string(),
            ),
        };
        let status = match r.status {
            RunStatus::Ok => "ok",
            RunStatus::MemCap => "mem_cap",
        };
        writeln!(csv, "{},{},{wall},{peak},{status}", r.method.name(), r.n).expect("string write");
    }
    csv
}

/// Runs both sweeps and writes the CSV. Returns whether any requested size
/// was refused by the memory cap.
pub fn run(cfg: &RunConfig, out: Option<&Path>, omit_timing: bool) -> Result<bool> {
    if !counting_enabled() {
        log::warn!("allocation counting is off; peak_bytes will read 0");
    }
    let rows = run_scaling(&cfg.bench)?;
    emit(out, &to_csv(&rows, omit_timing))?;
    for method in [Method::Pmt, Method::Hdc] {
        match runtime_slope(&rows, method) {
            Ok(s) => log::info!("{} log-log runtime slope {s:.3}", method.name()),
            Err(_) => log::info!("{}: too few completed sizes for a slope", method.name()),
        }
    }
    let capped = rows.iter().any(|r| r.status == RunStatus::MemCap);
    if capped {
        log::error!("memory cap of {} bytes refused at least one size", cfg.bench.mem_cap);
    }
    Ok(capped)
}
