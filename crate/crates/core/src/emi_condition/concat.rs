use crate::error::{Error, Result};
use crate::numeric::{Matrix, Tape, Var};

/// Appends `[u_emo | u_spk]` to every row of the linguistic features (T x L).
pub fn concat_condition(h_lg: &Matrix, u_emo: &[f64], u_spk: &[f64]) -> Result<Matrix> {
    if h_lg.rows() == 0 {
        return Err(Error::InvalidInput("no frames to condition".into()));
    }
    let joint: Vec<f64> = u_emo.iter().chain(u_spk).copied().collect();
    let cond = Matrix::from_fn(h_lg.rows(), joint.len(), |_, j| joint[j]);
    h_lg.concat_cols(&cond)
}

/// Tape version: `cond` is 1 x (E+S) and is broadcast over the rows of `h`.
pub fn concat_condition_var(tape: &mut Tape, h: Var, cond: Var) -> Result<Var> {
    let rows = tape.value(h).rows();
    if tape.value(cond).rows() != 1 {
        return Err(Error::Shape("condition must be a single row".into()));
    }
    let tiled = tape.gather_rows(cond, &vec![0; rows])?;
    tape.concat_cols(h, tiled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_get_condition_appended() {
        let h = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let out = concat_condition(&h, &[0.6, 0.8], &[-1.0]).unwrap();
        assert_eq!(out.shape(), (2, 5));
        assert_eq!(out.row(0), &[1.0, 2.0, 0.6, 0.8, -1.0]);
        assert_eq!(out.row(1), &[3.0, 4.0, 0.6, 0.8, -1.0]);
        assert!(concat_condition(&Matrix::zeros(0, 2), &[1.0], &[]).is_err());
    }

    #[test]
    fn tape_version_agrees_and_sums_gradient() {
        let h = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone());
        let c = tape.param(Matrix::row_vector(&[0.5, 0.25]));
        let out = concat_condition_var(&mut tape, hv, c).unwrap();
        assert_eq!(tape.value(out), &concat_condition(&h, &[0.5], &[0.25]).unwrap());
        let s = tape.sum(out);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(c).data(), &[3.0, 3.0]);
    }
}
