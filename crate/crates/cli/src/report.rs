//! Analytic-versus-simulation comparison records.

use std::path::Path;

use qdimer::model::DimerParams;
use qdimer::sim::SimConfig;
use serde::{Deserialize, Serialize};

use crate::io::{read_spectrum_csv, Row};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Agree,
    Disagree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub omega: f64,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stat_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableReport {
    pub observable: String,
    pub analytic_file: String,
    pub sim_file: String,
    pub analytic_min: Minimum,
    pub sim_min: Minimum,
    /// Largest `|V̄_sim − V̄_analytic| / σ` inside the band.
    pub max_z: f64,
    pub bins_compared: usize,
    pub bins_beyond: usize,
    pub bin_width: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub version: String,
    pub seed: u64,
    pub params: DimerParams,
    pub sim: SimConfig,
    /// Compared frequencies `0 ≤ ω ≤ band`.
    pub band: f64,
    pub z_max: f64,
    pub observables: Vec<ObservableReport>,
}

impl ReportRecord {
    pub fn verdict(&self) -> Verdict {
        if self.observables.iter().all(|o| o.verdict == Verdict::Agree) {
            Verdict::Agree
        } else {
            Verdict::Disagree
        }
    }
}

fn band_min(rows: &[Row], band: f64) -> Option<Minimum> {
    rows.iter()
        .filter(|r| (0.0..=band).contains(&r.omega))
        .filter_map(|r| {
            r.vbar.map(|value| Minimum {
                omega: r.omega,
                value,
                stat_err: r.stat_err,
            })
        })
        .min_by(|a, b| a.value.total_cmp(&b.value))
}

/// Judge one observable from the two tables. The tables must share the
/// frequency grid. Agreement means every point in the band lies within
/// `z_max` standard errors and the dips fall within one bin of each other.
pub fn judge(
    observable: &str,
    analytic: &[Row],
    sim: &[Row],
    band: f64,
    z_max: f64,
) -> Result<ObservableReport, String> {
    if analytic.len() != sim.len()
        || analytic
            .iter()
            .zip(sim)
            .any(|(a, s)| a.omega.to_bits() != s.omega.to_bits())
    {
        return Err(format!("{observable}: analytic and simulated grids differ"));
    }
    if sim.len() < 2 {
        return Err(format!("{observable}: need at least two frequencies"));
    }
    let bin_width = (sim[1].omega - sim[0].omega).abs();
    let mut max_z = 0.0f64;
    let mut compared = 0;
    let mut beyond = 0;
    let mut missing = false;
    for (a, s) in analytic.iter().zip(sim) {
        if !(0.0..=band).contains(&s.omega) {
            continue;
        }
        let (Some(va), Some(vs), Some(err)) = (a.vbar, s.vbar, s.stat_err) else {
            missing = true;
            continue;
        };
        let z = (vs - va).abs() / err;
        max_z = max_z.max(z);
        compared += 1;
        if z > z_max {
            beyond += 1;
        }
    }
    let analytic_min = band_min(analytic, band)
        .ok_or_else(|| format!("{observable}: no analytic points in band"))?;
    let sim_min =
        band_min(sim, band).ok_or_else(|| format!("{observable}: no simulated points in band"))?;
    let dip_ok = (analytic_min.omega - sim_min.omega).abs() <= bin_width * (1.0 + 1e-9);
    let verdict = if !missing && compared > 0 && max_z <= z_max && dip_ok {
        Verdict::Agree
    } else {
        Verdict::Disagree
    };
    Ok(ObservableReport {
        observable: observable.to_string(),
        analytic_file: String::new(),
        sim_file: String::new(),
        analytic_min: Minimum {
            stat_err: None,
            ..analytic_min
        },
        sim_min,
        max_z,
        bins_compared: compared,
        bins_beyond: beyond,
        bin_width,
        verdict,
    })
}

/// Recompute every verdict of a stored report from its CSV files, which are
/// resolved relative to `dir`.
pub fn recheck(report: &ReportRecord, dir: &Path) -> Result<Vec<ObservableReport>, String> {
    report
        .observables
        .iter()
        .map(|o| {
            let a = read_spectrum_csv(&dir.join(&o.analytic_file))?;
            let s = read_spectrum_csv(&dir.join(&o.sim_file))?;
            let mut r = judge(&o.observable, &a, &s, report.band, report.z_max)?;
            r.analytic_file = o.analytic_file.clone();
            r.sim_file = o.sim_file.clone();
            Ok(r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(values: &[f64], err: Option<f64>) -> Vec<Row> {
        values
            .iter()
            .enumerate()
            .map(|(k, v)| Row {
                omega: k as f64 * 0.5,
                vbar: Some(*v),
                stat_err: err,
            })
            .collect()
    }

    #[test]
    fn verdict_rules() {
        let a = rows(&[0.3, 0.5, 0.9, 1.0], None);
        let good = rows(&[0.32, 0.45, 0.95, 1.0], Some(0.05));
        let r = judge("A2B2+", &a, &good, 10.0, 3.0).unwrap();
        assert_eq!(r.verdict, Verdict::Agree);
        assert_eq!(r.bins_compared, 4);
        let off = rows(&[0.3, 0.5, 1.3, 1.0], Some(0.05));
        let r = judge("A2B2+", &a, &off, 10.0, 3.0).unwrap();
        assert_eq!((r.verdict, r.bins_beyond), (Verdict::Disagree, 1));
        // Outside the band the outlier is ignored.
        assert_eq!(
            judge("A2B2+", &a, &off, 0.6, 3.0).unwrap().verdict,
            Verdict::Agree
        );
        let shifted = rows(&[0.9, 0.8, 0.3, 1.0], Some(10.0));
        assert_eq!(
            judge("A2B2+", &a, &shifted, 10.0, 3.0).unwrap().verdict,
            Verdict::Disagree
        );
    }

    #[test]
    fn grids_must_match() {
        let a = rows(&[1.0, 1.0], None);
        let mut s = rows(&[1.0, 1.0], Some(0.1));
        s[1].omega = 0.6;
        assert!(judge("A1", &a, &s, 1.0, 3.0).is_err());
    }
}
