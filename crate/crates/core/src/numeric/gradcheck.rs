use serde::Serialize;

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Worst-case agreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index into the concatenation of all parameter matrices.
    pub worst_param_index: usize,
}

fn evaluate<F>(params: &[Matrix], loss_fn: &F) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = loss_fn(&mut tape, &vars)?;
    Ok((tape, vars, loss))
}

/// Loss value and `d loss / d params` for a loss built on a fresh tape.
pub fn grad<F>(params: &[Matrix], loss_fn: F) -> Result<(f64, Vec<Matrix>)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, vars, loss) = evaluate(params, &loss_fn)?;
    let grads = tape.backward(loss)?;
    Ok((
        tape.scalar_value(loss),
        vars.iter().map(|&v| grads.get(v)).collect(),
    ))
}

/// Compares [`grad`] with central differences at step `epsilon` for every
/// parameter entry. Relative error is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check<F>(params: &[Matrix], loss_fn: F, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(epsilon > 0.0) {
        return Err(crate::Error::InvalidInput(format!(
            "finite-difference step must be positive, got {epsilon}"
        )));
    }
    let (_, analytic) = grad(params, &loss_fn)?;
    let loss_at = |p: &[Matrix]| -> Result<f64> {
        let (tape, _, loss) = evaluate(p, &loss_fn)?;
        Ok(tape.scalar_value(loss))
    };

    let mut work: Vec<Matrix> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param_index: 0,
    };
    let mut flat = 0;
    for (pi, g) in analytic.iter().enumerate() {
        for k in 0..g.len() {
            let orig = work[pi].data()[k];
            work[pi].data_mut()[k] = orig + epsilon;
            let plus = loss_at(&work)?;
            work[pi].data_mut()[k] = orig - epsilon;
            let minus = loss_at(&work)?;
            work[pi].data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = g.data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > report.max_rel_error {
                report = GradCheckReport {
                    max_rel_error: rel,
                    worst_param_index: flat,
                };
            }
            flat += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    #[test]
    fn quadratic_passes() {
        let p = vec![Matrix::from_rows(&[vec![1.5, -2.0], vec![0.25, 3.0]]).unwrap()];
        let report = finite_diff_check(
            &p,
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                Ok(t.sum(sq))
            },
            1e-3,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
    }

    #[test]
    fn op_chain_matches_central_differences() {
        let mut rng = Rng::new(1);
        let p = vec![rng.normal_matrix(3, 4, 1.0), rng.normal_matrix(4, 2, 1.0)];
        let report = finite_diff_check(
            &p,
            |t, v| {
                let h = t.matmul(v[0], v[1])?;
                let h = t.tanh(h);
                let s = t.sigmoid(h);
                let sp = t.softplus(s);
                let e = t.exp(sp);
                let n = t.l2_normalize_rows(e)?;
                let sm = t.softmax_rows(n)?;
                let tr = t.transpose(sm);
                let sl = t.slice_cols(tr, 1, 3)?;
                let cat = t.concat_cols(sl, tr)?;
                let g = t.gather_rows(cat, &[0, 1, 1])?;
                let sq = t.mul(g, g)?;
                Ok(t.mean(sq))
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn rejects_bad_epsilon() {
        let p = vec![Matrix::scalar(1.0)];
        assert!(finite_diff_check(&p, |t, v| Ok(t.sum(v[0])), 0.0).is_err());
    }
}
