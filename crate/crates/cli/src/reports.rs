//! CSV report writers. Every report is one header line plus data rows;
//! floats use the shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use cae_core::analysis::{ContractionReport, SpectrumReport};
use cae_core::daelink::TaylorReport;

fn write_file(path: &Path, content: String) -> Result<()> {
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// `epoch,objective[,validation_error]`, epochs counted from 1.
pub fn write_train_log(path: &Path, objective: &[f64], validation: Option<&[f64]>) -> Result<()> {
    let mut out = String::new();
    match validation {
        Some(val) => {
            out.push_str("epoch,objective,validation_error\n");
            for (i, (o, v)) in objective.iter().zip(val).enumerate() {
                let _ = writeln!(out, "{},{o},{v}", i + 1);
            }
        }
        None => {
            out.push_str("epoch,objective\n");
            for (i, o) in objective.iter().enumerate() {
                let _ = writeln!(out, "{},{o}", i + 1);
            }
        }
    }
    write_file(path, out)
}

pub fn write_spectrum(path: &Path, report: &SpectrumReport) -> Result<()> {
    let mut out = String::from("index,mean_singular_value\n");
    for (i, v) in report.mean_singular_values.iter().enumerate() {
        let _ = writeln!(out, "{i},{v}");
    }
    write_file(path, out)
}

pub fn write_contraction(path: &Path, report: &ContractionReport) -> Result<()> {
    let mut out = String::from("radius,mean_ratio,std,n\n");
    for row in &report.rows {
        let _ = writeln!(out, "{},{},{},{}", row.radius, row.mean_ratio, row.std, row.n);
    }
    write_file(path, out)
}

pub fn write_metrics(path: &Path, avg_jacobian_norm: f64, saturation_fraction: f64) -> Result<()> {
    let mut out = String::from("avg_jacobian_norm,saturation_fraction\n");
    let _ = writeln!(out, "{avg_jacobian_norm},{saturation_fraction}");
    write_file(path, out)
}

pub fn write_taylor(path: &Path, report: &TaylorReport) -> Result<()> {
    let mut out = String::from(
        "sigma,clean,noisy,stderr,prediction,ratio,trace_corrected_sum,trace_paper_form_sum\n",
    );
    let ratio = report.ratio.map_or(String::new(), |r| r.to_string());
    let paper = report.trace_paper_form_sum.map_or(String::new(), |p| p.to_string());
    let _ = writeln!(
        out,
        "{},{},{},{},{},{ratio},{},{paper}",
        report.sigma,
        report.clean_cost,
        report.noisy_cost,
        report.noisy_stderr,
        report.trace_term,
        report.trace_corrected_sum,
    );
    write_file(path, out)
}
