//! Emotion-conditioned affine coupling.
//!
//! The input frames are split into contiguous channel halves `h0 | h1`. A
//! gated conditioner (`ewn`) looks at `h0` plus a projection of the emotion
//! vector and emits a per-channel log-scale and shift for `h1`:
//!
//! ```text
//! (log_s, b) = ewn(h0 + proj(u))
//! h1'        = exp(log_s) * h1 + b
//! h'         = [h0 | h1']
//! ```
//!
//! `h0` passes through untouched, which makes the layer exactly invertible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng, Tape, Var};

/// Bound on the emitted log-scale.
pub const LOG_SCALE_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    /// Frame width `D` (even).
    pub channels: usize,
    /// Conditioning vector to half-width (cond_dim x D/2).
    pub cond_proj: Matrix,
    pub w_filter: Matrix,
    pub b_filter: Matrix,
    pub w_gate: Matrix,
    pub b_gate: Matrix,
    /// Gated features to `[log_s | b]` (D/2 x D).
    pub w_out: Matrix,
    pub b_out: Matrix,
}

impl CouplingParams {
    /// All-zero parameters: the identity flow.
    pub fn zeros(channels: usize, cond_dim: usize) -> Result<Self> {
        check_even(channels)?;
        let half = channels / 2;
        Ok(Self {
            channels,
            cond_proj: Matrix::zeros(cond_dim, half),
            w_filter: Matrix::zeros(half, half),
            b_filter: Matrix::zeros(1, half),
            w_gate: Matrix::zeros(half, half),
            b_gate: Matrix::zeros(1, half),
            w_out: Matrix::zeros(half, channels),
            b_out: Matrix::zeros(1, channels),
        })
    }

    /// Random init; `out_std` scales the output layer (0 gives an identity flow
    /// that still trains).
    pub fn init(channels: usize, cond_dim: usize, rng: &mut Rng, out_std: f64) -> Result<Self> {
        check_even(channels)?;
        let half = channels / 2;
        Ok(Self {
            channels,
            cond_proj: rng.glorot(cond_dim, half),
            w_filter: rng.glorot(half, half),
            b_filter: Matrix::zeros(1, half),
            w_gate: rng.glorot(half, half),
            b_gate: Matrix::zeros(1, half),
            w_out: rng.normal_matrix(half, channels, out_std),
            b_out: Matrix::zeros(1, channels),
        })
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_proj.rows()
    }

    pub fn to_tensors(&self) -> Vec<Matrix> {
        vec![
            self.cond_proj.clone(),
            self.w_filter.clone(),
            self.b_filter.clone(),
            self.w_gate.clone(),
            self.b_gate.clone(),
            self.w_out.clone(),
            self.b_out.clone(),
        ]
    }

    pub fn from_tensors(channels: usize, t: &[Matrix]) -> Result<Self> {
        let [cond_proj, w_filter, b_filter, w_gate, b_gate, w_out, b_out] = t else {
            return Err(Error::Shape(format!("coupling expects 7 tensors, got {}", t.len())));
        };
        Ok(Self {
            channels,
            cond_proj: cond_proj.clone(),
            w_filter: w_filter.clone(),
            b_filter: b_filter.clone(),
            w_gate: w_gate.clone(),
            b_gate: b_gate.clone(),
            w_out: w_out.clone(),
            b_out: b_out.clone(),
        })
    }
}

fn check_even(channels: usize) -> Result<()> {
    if channels == 0 || channels % 2 != 0 {
        return Err(Error::Shape(format!(
            "coupling needs a positive even channel count, got {channels}"
        )));
    }
    Ok(())
}

/// Coupling tensors on a tape, in [`CouplingParams::to_tensors`] order.
#[derive(Debug, Clone, Copy)]
pub struct CouplingVars {
    pub channels: usize,
    pub cond_proj: Var,
    pub w_filter: Var,
    pub b_filter: Var,
    pub w_gate: Var,
    pub b_gate: Var,
    pub w_out: Var,
    pub b_out: Var,
}

impl CouplingVars {
    pub fn from_vars(channels: usize, v: &[Var]) -> Self {
        Self {
            channels,
            cond_proj: v[0],
            w_filter: v[1],
            b_filter: v[2],
            w_gate: v[3],
            b_gate: v[4],
            w_out: v[5],
            b_out: v[6],
        }
    }

    pub fn constants(tape: &mut Tape, params: &CouplingParams) -> Self {
        let v: Vec<Var> = params
            .to_tensors()
            .into_iter()
            .map(|m| tape.constant(m))
            .collect();
        Self::from_vars(params.channels, &v)
    }

    /// Gated conditioner: `z = tanh(x W_f + b_f) * sigmoid(x W_g + b_g)`,
    /// `[log_s | b] = z W_o + b_o`, log_s clamped.
    pub fn ewn(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
        let half = self.channels / 2;
        let f = tape.matmul(x, self.w_filter)?;
        let f = tape.add_row(f, self.b_filter)?;
        let f = tape.tanh(f);
        let g = tape.matmul(x, self.w_gate)?;
        let g = tape.add_row(g, self.b_gate)?;
        let g = tape.sigmoid(g);
        let z = tape.mul(f, g)?;
        let o = tape.matmul(z, self.w_out)?;
        let o = tape.add_row(o, self.b_out)?;
        let log_s = tape.slice_cols(o, 0, half)?;
        let log_s = tape.clamp(log_s, -LOG_SCALE_LIMIT, LOG_SCALE_LIMIT);
        let shift = tape.slice_cols(o, half, self.channels)?;
        Ok((log_s, shift))
    }

    fn conditioner_input(&self, tape: &mut Tape, h0: Var, cond: Var) -> Result<Var> {
        let c = tape.matmul(cond, self.cond_proj)?;
        tape.add_row(h0, c)
    }

    /// Forward flow; returns `(h', log_det)` with `log_det` a 1 x 1 sum of log_s.
    pub fn forward(&self, tape: &mut Tape, h: Var, cond: Var) -> Result<(Var, Var)> {
        let d = self.channels;
        if tape.value(h).cols() != d {
            return Err(Error::Shape(format!(
                "coupling over {d} channels got {} columns",
                tape.value(h).cols()
            )));
        }
        let h0 = tape.slice_cols(h, 0, d / 2)?;
        let h1 = tape.slice_cols(h, d / 2, d)?;
        let x = self.conditioner_input(tape, h0, cond)?;
        let (log_s, shift) = self.ewn(tape, x)?;
        let scale = tape.exp(log_s);
        let scaled = tape.mul(scale, h1)?;
        let h1_new = tape.add(scaled, shift)?;
        let out = tape.concat_cols(h0, h1_new)?;
        let log_det = tape.sum(log_s);
        Ok((out, log_det))
    }
}

fn check_inputs(h: &Matrix, cond: &[f64], params: &CouplingParams) -> Result<()> {
    check_even(params.channels)?;
    if h.cols() != params.channels {
        return Err(Error::Shape(format!(
            "coupling over {} channels got {} columns",
            params.channels,
            h.cols()
        )));
    }
    if cond.len() != params.cond_dim() {
        return Err(Error::Shape(format!(
            "conditioning vector has {} values, projection expects {}",
            cond.len(),
            params.cond_dim()
        )));
    }
    Ok(())
}

/// `(log_s, b)` for a conditioned half-width input.
pub fn ewn(x: &Matrix, params: &CouplingParams) -> Result<(Matrix, Matrix)> {
    if x.cols() != params.channels / 2 {
        return Err(Error::Shape(format!(
            "conditioner expects {} columns, got {}",
            params.channels / 2,
            x.cols()
        )));
    }
    let mut tape = Tape::new();
    let vars = CouplingVars::constants(&mut tape, params);
    let xv = tape.constant(x.clone());
    let (log_s, shift) = vars.ewn(&mut tape, xv)?;
    Ok((tape.value(log_s).clone(), tape.value(shift).clone()))
}

pub fn coupling_forward(h: &Matrix, u_emo: &[f64], params: &CouplingParams) -> Result<(Matrix, f64)> {
    check_inputs(h, u_emo, params)?;
    let mut tape = Tape::new();
    let vars = CouplingVars::constants(&mut tape, params);
    let hv = tape.constant(h.clone());
    let cv = tape.constant(Matrix::row_vector(u_emo));
    let (out, log_det) = vars.forward(&mut tape, hv, cv)?;
    Ok((tape.value(out).clone(), tape.scalar_value(log_det)))
}

/// Exact inverse of [`coupling_forward`]: `h1 = (h1' - b) * exp(-log_s)`, with
/// `(log_s, b)` recomputed from the unchanged `h0`.
pub fn coupling_inverse(h_out: &Matrix, u_emo: &[f64], params: &CouplingParams) -> Result<Matrix> {
    check_inputs(h_out, u_emo, params)?;
    let half = params.channels / 2;
    let h0 = h_out.slice_cols(0, half)?;
    let h1_new = h_out.slice_cols(half, params.channels)?;
    let c = Matrix::row_vector(u_emo).matmul(&params.cond_proj)?;
    let mut x = h0.clone();
    for r in 0..x.rows() {
        for (v, &b) in x.row_mut(r).iter_mut().zip(c.data()) {
            *v += b;
        }
    }
    let (log_s, shift) = ewn(&x, params)?;
    let mut h1 = h1_new;
    for ((v, &s), &b) in h1.data_mut().iter_mut().zip(log_s.data()).zip(shift.data()) {
        *v = (*v - b) * (-s).exp();
    }
    h0.concat_cols(&h1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_check;

    fn random_case(rng: &mut Rng, t: usize, d: usize, e: usize) -> (Matrix, Vec<f64>, CouplingParams) {
        let params = CouplingParams::init(d, e, rng, 0.5).unwrap();
        let h = rng.normal_matrix(t, d, 1.0);
        let u: Vec<f64> = (0..e).map(|_| rng.normal()).collect();
        (h, u, params)
    }

    #[test]
    fn zero_params_are_identity() {
        let p = CouplingParams::zeros(4, 3).unwrap();
        let h = Matrix::from_rows(&[vec![1.0, -2.0, 3.0, 0.5], vec![0.0, 1.0, 2.0, 3.0]]).unwrap();
        let (out, log_det) = coupling_forward(&h, &[0.3, 0.1, -0.2], &p).unwrap();
        assert_eq!(out, h);
        assert_eq!(log_det, 0.0);
        assert_eq!(coupling_inverse(&h, &[0.3, 0.1, -0.2], &p).unwrap(), h);
    }

    #[test]
    fn two_channel_hand_case() {
        let mut p = CouplingParams::zeros(2, 1).unwrap();
        p.b_out = Matrix::row_vector(&[2f64.ln(), 1.0]);
        let h = Matrix::row_vector(&[3.0, 5.0]);
        let (out, log_det) = coupling_forward(&h, &[0.7], &p).unwrap();
        assert!((out.get(0, 0) - 3.0).abs() < 1e-15);
        assert!((out.get(0, 1) - 11.0).abs() < 1e-12);
        assert!((log_det - 2f64.ln()).abs() < 1e-15);
        let back = coupling_inverse(&Matrix::row_vector(&[3.0, 11.0]), &[0.7], &p).unwrap();
        assert!((back.get(0, 1) - 5.0).abs() < 1e-12);
        assert_eq!(back.get(0, 0), 3.0);
    }

    #[test]
    fn odd_width_rejected() {
        assert!(matches!(CouplingParams::zeros(3, 2), Err(Error::Shape(_))));
        let p = CouplingParams::zeros(4, 2).unwrap();
        assert!(matches!(
            coupling_forward(&Matrix::zeros(1, 3), &[0.0, 0.0], &p),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn ewn_zero_and_clamp() {
        let p = CouplingParams::zeros(4, 1).unwrap();
        let (s, b) = ewn(&Matrix::filled(3, 2, 0.7), &p).unwrap();
        assert!(s.data().iter().chain(b.data()).all(|&v| v == 0.0));

        let mut p = CouplingParams::zeros(4, 1).unwrap();
        p.b_out = Matrix::row_vector(&[40.0, -40.0, 0.0, 0.0]);
        let (s, _) = ewn(&Matrix::filled(1, 2, 0.0), &p).unwrap();
        assert_eq!(s.data(), &[5.0, -5.0]);
    }

    #[test]
    fn random_round_trip_and_untouched_half() {
        let mut rng = Rng::new(99);
        for _ in 0..50 {
            let (h, u, p) = random_case(&mut rng, 5, 6, 4);
            let (out, log_det) = coupling_forward(&h, &u, &p).unwrap();
            let back = coupling_inverse(&out, &u, &p).unwrap();
            assert!(back.max_abs_diff(&h).unwrap() < 1e-9);
            assert_eq!(out.slice_cols(0, 3).unwrap(), h.slice_cols(0, 3).unwrap());
            // log_det is the sum of the emitted log-scales
            let mut x = h.slice_cols(0, 3).unwrap();
            let c = Matrix::row_vector(&u).matmul(&p.cond_proj).unwrap();
            for r in 0..x.rows() {
                for (v, &b) in x.row_mut(r).iter_mut().zip(c.data()) {
                    *v += b;
                }
            }
            let (s, _) = ewn(&x, &p).unwrap();
            assert!((s.sum() - log_det).abs() < 1e-12);
            let again = coupling_forward(&coupling_inverse(&h, &u, &p).unwrap(), &u, &p).unwrap();
            assert!(again.0.max_abs_diff(&h).unwrap() < 1e-9);
        }
    }

    #[test]
    fn conditioning_moves_only_second_half() {
        let mut rng = Rng::new(4);
        let (h, u, p) = random_case(&mut rng, 3, 4, 2);
        let (a, _) = coupling_forward(&h, &u, &p).unwrap();
        let (b, _) = coupling_forward(&h, &[u[0] + 1.0, u[1] - 0.5], &p).unwrap();
        assert_eq!(a.slice_cols(0, 2).unwrap(), b.slice_cols(0, 2).unwrap());
        assert!(a.slice_cols(2, 4).unwrap().max_abs_diff(&b.slice_cols(2, 4).unwrap()).unwrap() > 1e-6);
    }

    #[test]
    fn log_det_gradient_matches_finite_differences() {
        let mut rng = Rng::new(12);
        let (h, u, p) = random_case(&mut rng, 4, 6, 3);
        let report = finite_diff_check(
            &p.to_tensors(),
            |t, v| {
                let vars = CouplingVars::from_vars(6, v);
                let hv = t.constant(h.clone());
                let cv = t.constant(Matrix::row_vector(&u));
                let (_, log_det) = vars.forward(t, hv, cv)?;
                Ok(log_det)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
