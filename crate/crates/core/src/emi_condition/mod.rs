//! Ways of injecting an emotion embedding (plus speaker embedding) into a
//! speech decoder: plain concatenation, conditional cross-attention and an
//! affine coupling flow.

mod attention;
mod concat;
mod coupling;

pub use attention::{
    build_condition, cond_cross_attention, cross_attention_tokens, AttentionParams, AttentionVars,
};
pub use concat::{concat_condition, concat_condition_var};
pub use coupling::{
    coupling_forward, coupling_inverse, ewn, CouplingParams, CouplingVars, LOG_SCALE_LIMIT,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::norm;

const UNIT_TOLERANCE: f64 = 1e-6;

/// Emotion embedding (unit length) and speaker embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionVector {
    pub u_emo: Vec<f64>,
    pub u_spk: Vec<f64>,
}

impl ConditionVector {
    pub fn new(u_emo: Vec<f64>, u_spk: Vec<f64>) -> Result<Self> {
        if u_emo.iter().chain(&u_spk).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("condition vector has non-finite values".into()));
        }
        let n = norm(&u_emo);
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidInput(format!("u_emo must be unit length, norm is {n}")));
        }
        Ok(Self { u_emo, u_spk })
    }

    /// Zero emotion, used to check that conditioning paths are inert.
    pub fn neutral(emo_dim: usize, u_spk: Vec<f64>) -> Self {
        Self { u_emo: vec![0.0; emo_dim], u_spk }
    }

    pub fn joint(&self) -> Vec<f64> {
        self.u_emo.iter().chain(&self.u_spk).copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_norm_is_enforced() {
        assert!(ConditionVector::new(vec![0.6, 0.8], vec![1.0]).is_ok());
        assert!(ConditionVector::new(vec![1.0, 1.0], vec![1.0]).is_err());
        assert!(ConditionVector::new(vec![f64::NAN, 1.0], vec![]).is_err());
        let c = ConditionVector::new(vec![0.0, 1.0], vec![2.0, 3.0]).unwrap();
        assert_eq!(c.joint(), vec![0.0, 1.0, 2.0, 3.0]);
    }
}
