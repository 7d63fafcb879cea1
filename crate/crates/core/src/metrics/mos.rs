use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosSummary {
    pub mean: f64,
    pub half_width_95: f64,
    pub n: usize,
}

impl fmt::Display for MosSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}(±{:.2})", self.mean, self.half_width_95)
    }
}

/// Mean and two-sided 95% Student-t half width for arbitrary real values.
pub fn t_interval(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 ratings, got {n}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::InvalidInput(e.to_string()))?
        .inverse_cdf(0.975);
    Ok((mean, t * var.sqrt() / (n as f64).sqrt()))
}

fn on_grid(s: f64) -> bool {
    let twice = s * 2.0;
    (1.0..=5.0).contains(&s) && twice == twice.round()
}

/// Aggregates opinion scores on the 1..5 scale in half-point steps.
pub fn mos_aggregate(scores: &[f64]) -> Result<MosSummary> {
    if let Some(bad) = scores.iter().find(|s| !on_grid(**s)) {
        return Err(Error::InvalidInput(format!(
            "score {bad} is not in 1.0..=5.0 with step 0.5"
        )));
    }
    let (mean, half) = t_interval(scores)?;
    Ok(MosSummary {
        mean,
        half_width_95: half,
        n: scores.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_scores_have_zero_width() {
        let m = mos_aggregate(&[4.0; 10]).unwrap();
        assert_eq!(m.half_width_95, 0.0);
        assert_eq!(m.to_string(), "4.00(±0.00)");
    }

    #[test]
    fn two_scores_hand_interval() {
        let m = mos_aggregate(&[4.0, 5.0]).unwrap();
        assert_eq!(m.mean, 4.5);
        // t_{0.975,1} = 12.7062, s = sqrt(0.5), n = 2
        let expect = 12.706204736174698 * 0.5f64.sqrt() / 2f64.sqrt();
        assert!((m.half_width_95 - expect).abs() < 1e-6);
        assert_eq!(m.to_string(), "4.50(±6.35)");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(mos_aggregate(&[4.0]), Err(Error::InsufficientData(_))));
        assert!(matches!(mos_aggregate(&[]), Err(Error::InsufficientData(_))));
        for bad in [4.2, 0.5, 5.5, f64::NAN] {
            assert!(matches!(mos_aggregate(&[4.0, bad]), Err(Error::InvalidInput(_))));
        }
    }
}
