//! Per-cell statistics of a sweep. A cell is one (preset, mu, beta, noise)
//! combination; seeds are the repetitions within it.

use std::fmt::Write as _;

use alr_core::controller::SessionStatus;
use alr_core::scene::Preset;
use serde::Serialize;

use crate::experiment::RunResult;

/// Mean and population variance. Both are NaN for an empty sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub var: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, var: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self { mean, var, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub preset: Preset,
    pub mu: f64,
    pub beta_deg: f64,
    pub pixel_noise: f64,
    pub runs: usize,
    pub errors: usize,
    pub converged: usize,
    pub iterations: Stat,
    pub goodness: Stat,
    pub ssim: Stat,
    /// Finite values only; a frame identical to the reference has no PSNR.
    pub psnr: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub cells: Vec<Cell>,
}

pub const SUMMARY_HEADER: &str = "preset,mu,beta_deg,pixel_noise,runs,errors,converged,iter_mean,iter_var,goodness_mean,goodness_var,ssim_mean,ssim_var,psnr_mean,psnr_var";

pub fn summarize(results: &[RunResult]) -> Summary {
    let mut cells: Vec<(Cell, Vec<&RunResult>)> = Vec::new();
    for r in results {
        let k = r.record.key;
        let same = |c: &Cell| c.preset == k.preset && c.mu == k.mu && c.beta_deg == k.beta_deg && c.pixel_noise == k.pixel_noise;
        match cells.iter_mut().find(|(c, _)| same(c)) {
            Some((_, members)) => members.push(r),
            None => {
                let empty = Stat::of(&[]);
                let cell = Cell {
                    preset: k.preset,
                    mu: k.mu,
                    beta_deg: k.beta_deg,
                    pixel_noise: k.pixel_noise,
                    runs: 0,
                    errors: 0,
                    converged: 0,
                    iterations: empty,
                    goodness: empty,
                    ssim: empty,
                    psnr: empty,
                };
                cells.push((cell, vec![r]));
            }
        }
    }
    let cells = cells
        .into_iter()
        .map(|(mut cell, members)| {
            let reports: Vec<_> = members.iter().filter_map(|m| m.report.as_ref()).collect();
            cell.runs = members.len();
            cell.errors = members.len() - reports.len();
            cell.converged = reports.iter().filter(|r| r.status == SessionStatus::Converged).count();
            cell.iterations = Stat::of(&reports.iter().map(|r| r.iterations as f64).collect::<Vec<_>>());
            cell.goodness = Stat::of(&reports.iter().map(|r| r.best_goodness).collect::<Vec<_>>());
            let metrics: Vec<_> = reports.iter().filter_map(|r| r.final_metrics.as_ref()).collect();
            cell.ssim = Stat::of(&metrics.iter().map(|m| m.ssim).collect::<Vec<_>>());
            cell.psnr = Stat::of(&metrics.iter().map(|m| m.psnr).filter(|p| p.is_finite()).collect::<Vec<_>>());
            cell
        })
        .collect();
    Summary { cells }
}

impl Summary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                c.preset.name(),
                c.mu,
                c.beta_deg,
                c.pixel_noise,
                c.runs,
                c.errors,
                c.converged,
                c.iterations.mean,
                c.iterations.var,
                c.goodness.mean,
                c.goodness.var,
                c.ssim.mean,
                c.ssim.var,
                c.psnr.mean,
                c.psnr.var
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| preset | mu | beta (deg) | noise | converged | iterations | goodness | SSIM | PSNR (dB) |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|\n");
        let pm = |s: &Stat, digits: usize| {
            if s.n == 0 {
                "n/a".to_string()
            } else {
                format!("{:.*} ± {:.*}", digits, s.mean, digits, s.var)
            }
        };
        for c in &self.cells {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {}/{} | {} | {} | {} | {} |",
                c.preset.name(),
                c.mu,
                c.beta_deg,
                c.pixel_noise,
                c.converged,
                c.runs,
                pm(&c.iterations, 1),
                pm(&c.goodness, 4),
                pm(&c.ssim, 4),
                pm(&c.psnr, 2)
            );
        }
        if self.cells.is_empty() {
            out.push_str("\nNo runs.\n");
        } else {
            out.push_str("\nValues are mean ± variance over seeds.\n");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_matches_hand_values() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.var, 1.25);
        assert!(Stat::of(&[]).mean.is_nan());
    }

    #[test]
    fn empty_summary_has_header_only() {
        let s = summarize(&[]);
        assert_eq!(s.to_csv(), format!("{SUMMARY_HEADER}\n"));
        assert!(s.to_markdown().contains("No runs."));
    }
}
