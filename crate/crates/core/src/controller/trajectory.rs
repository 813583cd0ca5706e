//! Per-iteration log rows and their CSV form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{AlrError, Result};

pub const CSV_HEADER: &str = "t,r,theta_deg,phi_deg,lambda_r,lambda_theta,lambda_phi,m_r,m_theta,m_phi,goodness,mse,psnr,ssim";

/// Image metrics of one frame against the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowMetrics {
    pub mse: f64,
    #[serde(with = "crate::metrics::psnr_serde")]
    pub psnr: f64,
    pub ssim: f64,
}

/// One controller iteration. The pose is where the frame was captured;
/// `lambda` is in `[length, degrees, degrees]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub r: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub lambda: [f64; 3],
    pub m: [i8; 3],
    pub goodness: f64,
    pub metrics: Option<RowMetrics>,
}

pub fn trajectory_to_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.t,
            row.r,
            row.theta_deg,
            row.phi_deg,
            row.lambda[0],
            row.lambda[1],
            row.lambda[2],
            row.m[0],
            row.m[1],
            row.m[2],
            row.goodness
        );
        match &row.metrics {
            Some(m) => {
                let _ = writeln!(out, ",{},{},{}", m.mse, m.psnr, m.ssim);
            }
            None => out.push_str(",,,\n"),
        }
    }
    out
}

pub fn trajectory_from_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(AlrError::Format("trajectory CSV header mismatch".into()));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |what: &str| AlrError::Format(format!("trajectory line {}: {what}", k + 2));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 14 {
            return Err(err("expected 14 columns"));
        }
        let f = |i: usize| cols[i].parse::<f64>().map_err(|_| err(&format!("bad number `{}`", cols[i])));
        let s = |i: usize| cols[i].parse::<i8>().map_err(|_| err(&format!("bad sign `{}`", cols[i])));
        let metrics = if cols[11].is_empty() { None } else { Some(RowMetrics { mse: f(11)?, psnr: f(12)?, ssim: f(13)? }) };
        rows.push(TrajectoryRow {
            t: cols[0].parse().map_err(|_| err("bad iteration"))?,
            r: f(1)?,
            theta_deg: f(2)?,
            phi_deg: f(3)?,
            lambda: [f(4)?, f(5)?, f(6)?],
            m: [s(7)?, s(8)?, s(9)?],
            goodness: f(10)?,
            metrics,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            TrajectoryRow {
                t: 1,
                r: 300.0,
                theta_deg: -12.5,
                phi_deg: 0.1 + 0.2,
                lambda: [6.0, 6.0, 6.0],
                m: [1, -1, 0],
                goodness: 0.25,
                metrics: Some(RowMetrics { mse: 3.5, psnr: f64::INFINITY, ssim: 0.9 }),
            },
            TrajectoryRow { t: 2, r: 294.0, theta_deg: -18.5, phi_deg: 6.3, lambda: [7.2; 3], m: [0; 3], goodness: 0.5, metrics: None },
        ];
        let csv = trajectory_to_csv(&rows);
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(trajectory_from_csv(&csv).unwrap(), rows);
        assert!(trajectory_from_csv("t,r\n1,2\n").is_err());
    }
}
