use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng, Tape, Var};

/// Single-head conditional cross-attention. Weight matrices act on column
/// vectors (`q = W_q h`), so frames (rows) are multiplied by the transpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub dim: usize,
    /// `[u_emo | u_spk]` to the condition token (cond_dim x d).
    pub cond_proj: Matrix,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

impl AttentionParams {
    pub fn zeros(dim: usize, cond_dim: usize) -> Self {
        Self {
            dim,
            cond_proj: Matrix::zeros(cond_dim, dim),
            w_q: Matrix::zeros(dim, dim),
            w_k: Matrix::zeros(dim, dim),
            w_v: Matrix::zeros(dim, dim),
        }
    }

    pub fn init(dim: usize, cond_dim: usize, rng: &mut Rng) -> Self {
        Self {
            dim,
            cond_proj: rng.glorot(cond_dim, dim),
            w_q: rng.glorot(dim, dim),
            w_k: rng.glorot(dim, dim),
            w_v: rng.glorot(dim, dim),
        }
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_proj.rows()
    }

    pub fn to_tensors(&self) -> Vec<Matrix> {
        vec![
            self.cond_proj.clone(),
            self.w_q.clone(),
            self.w_k.clone(),
            self.w_v.clone(),
        ]
    }

    pub fn from_tensors(dim: usize, t: &[Matrix]) -> Result<Self> {
        let [cond_proj, w_q, w_k, w_v] = t else {
            return Err(Error::Shape(format!("attention expects 4 tensors, got {}", t.len())));
        };
        Ok(Self {
            dim,
            cond_proj: cond_proj.clone(),
            w_q: w_q.clone(),
            w_k: w_k.clone(),
            w_v: w_v.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub dim: usize,
    pub cond_proj: Var,
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
}

impl AttentionVars {
    pub fn from_vars(dim: usize, v: &[Var]) -> Self {
        Self {
            dim,
            cond_proj: v[0],
            w_q: v[1],
            w_k: v[2],
            w_v: v[3],
        }
    }

    pub fn constants(tape: &mut Tape, params: &AttentionParams) -> Self {
        let v: Vec<Var> = params
            .to_tensors()
            .into_iter()
            .map(|m| tape.constant(m))
            .collect();
        Self::from_vars(params.dim, &v)
    }

    /// `c = [u_emo | u_spk] . P` for a 1 x cond_dim input.
    pub fn condition(&self, tape: &mut Tape, emo_spk: Var) -> Result<Var> {
        tape.matmul(emo_spk, self.cond_proj)
    }

    /// `softmax(Q K^T / sqrt(d)) V + h` over the rows of `tokens` (M x d).
    pub fn attend(&self, tape: &mut Tape, h: Var, tokens: Var) -> Result<Var> {
        let wq_t = tape.transpose(self.w_q);
        let wk_t = tape.transpose(self.w_k);
        let wv_t = tape.transpose(self.w_v);
        let q = tape.matmul(h, wq_t)?;
        let k = tape.matmul(tokens, wk_t)?;
        let v = tape.matmul(tokens, wv_t)?;
        let kt = tape.transpose(k);
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, 1.0 / (self.dim as f64).sqrt());
        let weights = tape.softmax_rows(scores)?;
        let ctx = tape.matmul(weights, v)?;
        tape.add(ctx, h)
    }
}

/// The unified condition feature `c` from emotion and speaker embeddings.
pub fn build_condition(u_emo: &[f64], u_spk: &[f64], params: &AttentionParams) -> Result<Vec<f64>> {
    let joint: Vec<f64> = u_emo.iter().chain(u_spk).copied().collect();
    if joint.len() != params.cond_dim() {
        return Err(Error::Shape(format!(
            "emotion+speaker width {} does not match projection input {}",
            joint.len(),
            params.cond_dim()
        )));
    }
    Ok(Matrix::row_vector(&joint).matmul(&params.cond_proj)?.into_data())
}

fn check_frames(h: &Matrix, params: &AttentionParams) -> Result<()> {
    if h.rows() == 0 {
        return Err(Error::InvalidInput("no frames to attend from".into()));
    }
    if h.cols() != params.dim {
        return Err(Error::Shape(format!(
            "frames have width {}, attention dim is {}",
            h.cols(),
            params.dim
        )));
    }
    Ok(())
}

/// Cross-attention from frames `h` (T x d) to any number of condition tokens (M x d).
pub fn cross_attention_tokens(h: &Matrix, tokens: &Matrix, params: &AttentionParams) -> Result<Matrix> {
    check_frames(h, params)?;
    if tokens.rows() == 0 || tokens.cols() != params.dim {
        return Err(Error::Shape(format!(
            "condition tokens must be M x {}, got {}x{}",
            params.dim,
            tokens.rows(),
            tokens.cols()
        )));
    }
    let mut tape = Tape::new();
    let vars = AttentionVars::constants(&mut tape, params);
    let hv = tape.constant(h.clone());
    let tv = tape.constant(tokens.clone());
    let out = vars.attend(&mut tape, hv, tv)?;
    Ok(tape.value(out).clone())
}

/// Cross-attention to the single condition token `c`. With one key the
/// attention weight is exactly 1, so the output is `h + (W_v c)` on every row.
pub fn cond_cross_attention(h: &Matrix, c: &[f64], params: &AttentionParams) -> Result<Matrix> {
    if c.len() != params.dim {
        return Err(Error::Shape(format!(
            "condition has {} values, attention dim is {}",
            c.len(),
            params.dim
        )));
    }
    cross_attention_tokens(h, &Matrix::row_vector(c), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_check;

    #[test]
    fn zero_value_projection_is_residual() {
        let mut rng = Rng::new(2);
        let mut p = AttentionParams::init(4, 6, &mut rng);
        p.w_v = Matrix::zeros(4, 4);
        let h = rng.normal_matrix(5, 4, 1.0);
        let out = cond_cross_attention(&h, &[0.1, 0.2, 0.3, 0.4], &p).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn single_token_adds_value_vector() {
        let mut rng = Rng::new(8);
        let p = AttentionParams::init(3, 5, &mut rng);
        let h = rng.normal_matrix(4, 3, 2.0);
        let c = [0.5, -1.0, 2.0];
        let out = cond_cross_attention(&h, &c, &p).unwrap();
        let v = p.w_v.matmul(&Matrix::from_vec(3, 1, c.to_vec()).unwrap()).unwrap();
        for r in 0..4 {
            for j in 0..3 {
                assert!((out.get(r, j) - h.get(r, j) - v.get(j, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_tokens_match_brute_force() {
        let mut rng = Rng::new(21);
        let d = 4;
        let p = AttentionParams::init(d, 2, &mut rng);
        let h = rng.normal_matrix(3, d, 1.0);
        let tokens = rng.normal_matrix(2, d, 1.0);
        let out = cross_attention_tokens(&h, &tokens, &p).unwrap();

        let apply = |w: &Matrix, x: &[f64]| -> Vec<f64> {
            (0..d).map(|i| (0..d).map(|j| w.get(i, j) * x[j]).sum()).collect()
        };
        for t in 0..3 {
            let q = apply(&p.w_q, h.row(t));
            let keys: Vec<Vec<f64>> = (0..2).map(|m| apply(&p.w_k, tokens.row(m))).collect();
            let vals: Vec<Vec<f64>> = (0..2).map(|m| apply(&p.w_v, tokens.row(m))).collect();
            let s: Vec<f64> = keys
                .iter()
                .map(|k| q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let z: f64 = s.iter().map(|x| x.exp()).sum();
            for j in 0..d {
                let expect = h.get(t, j) + (0..2).map(|m| s[m].exp() / z * vals[m][j]).sum::<f64>();
                assert!((out.get(t, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn condition_projection_cases() {
        let p = AttentionParams::zeros(3, 3);
        assert_eq!(build_condition(&[1.0, 2.0], &[3.0], &p).unwrap(), vec![0.0; 3]);
        let mut p = AttentionParams::zeros(3, 3);
        p.cond_proj = Matrix::identity(3);
        assert_eq!(build_condition(&[1.0, 2.0], &[3.0], &p).unwrap(), vec![1.0, 2.0, 3.0]);
        let mut p = AttentionParams::zeros(2, 2);
        p.cond_proj = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        // [0.5, -1] . [[1,2],[3,4]] = [0.5-3, 1-4]
        assert_eq!(build_condition(&[0.5], &[-1.0], &p).unwrap(), vec![-2.5, -3.0]);
        assert!(build_condition(&[0.5, 1.0], &[-1.0], &p).is_err());
    }

    #[test]
    fn shape_errors() {
        let p = AttentionParams::zeros(3, 2);
        assert!(cond_cross_attention(&Matrix::zeros(2, 4), &[0.0; 3], &p).is_err());
        assert!(cond_cross_attention(&Matrix::zeros(2, 3), &[0.0; 2], &p).is_err());
        assert!(cond_cross_attention(&Matrix::zeros(0, 3), &[0.0; 3], &p).is_err());
    }

    #[test]
    fn output_sum_gradient_matches_finite_differences() {
        let mut rng = Rng::new(30);
        let p = AttentionParams::init(4, 5, &mut rng);
        let h = rng.normal_matrix(3, 4, 1.0);
        let cond: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        let tokens = rng.normal_matrix(2, 4, 1.0);
        let report = finite_diff_check(
            &p.to_tensors(),
            |t, v| {
                let vars = AttentionVars::from_vars(4, v);
                let hv = t.constant(h.clone());
                let cv = t.constant(Matrix::row_vector(&cond));
                let c = vars.condition(t, cv)?;
                let extra = t.constant(tokens.clone());
                let both = t.transpose(c);
                let both = t.transpose(both);
                let single = vars.attend(t, hv, both)?;
                let multi = vars.attend(t, single, extra)?;
                Ok(t.sum(multi))
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
