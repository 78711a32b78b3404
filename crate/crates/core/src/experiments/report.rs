//! Fixed-schema CSV reports. No field ever contains a comma, quote or newline.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::PoolExponent;

pub const TRAIN_HEADER: &str = "epoch,train_energy,val_error,lr";
pub const SWEEP_HEADER: &str = "p,p_plot,seed,val_error,reference_val_error";
pub const SWEEP_SUMMARY_HEADER: &str = "p,p_plot,median_val_error,reference_val_error";
pub const COMPARE_HEADER: &str =
    "seed,variant,classifier_inputs,val_error,paired_delta,improvement_pct,reference_val_error";
pub const RANK_HEADER: &str = "rank,index,label,prediction,energy";

/// Reference house-number validation error rates for the pooling sweep, in percent.
pub fn reference_sweep_error(p: PoolExponent) -> Option<f64> {
    match p {
        PoolExponent::Finite(p) if p == 2.0 => Some(5.62),
        PoolExponent::Finite(p) if p == 4.0 => Some(5.64),
        PoolExponent::Finite(p) if p == 12.0 => Some(5.61),
        PoolExponent::Infinity => Some(7.57),
        _ => None,
    }
}

/// Reference house-number error rates (percent) for single- and multi-stage features.
pub const REFERENCE_SS_ERROR: f64 = 5.72;
pub const REFERENCE_MS_ERROR: f64 = 5.67;

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.2}"))
}

pub fn fmt_f(v: f64) -> String {
    format!("{v:.10}")
}

/// Accumulates rows under a fixed header.
#[derive(Debug, Clone)]
pub struct CsvTable {
    columns: usize,
    text: String,
}

impl CsvTable {
    pub fn new(header: &str) -> Self {
        Self {
            columns: header.split(',').count(),
            text: format!("{header}\n"),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.columns, "row width");
        debug_assert!(fields.iter().all(|f| !f.contains([',', '"', '\n'])));
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn rows(&self) -> usize {
        self.text.lines().count() - 1
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.text).map_err(|e| Error::io(path, e))
    }
}
