use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct DtwPath {
    pub pairs: Vec<(usize, usize)>,
    /// Summed Euclidean distance over `pairs`.
    pub cost: f64,
}

pub fn frame_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Monotone alignment with steps (1,0), (0,1), (1,1). Among equal-cost
/// paths the shorter one wins, so swapping the inputs mirrors the result.
pub fn dtw_align(a: &Matrix, b: &Matrix) -> Result<DtwPath> {
    let (ta, tb) = (a.rows(), b.rows());
    if ta == 0 || tb == 0 {
        return Err(Error::Shape("dtw needs non-empty sequences".into()));
    }
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!("frame widths {} and {} differ", a.cols(), b.cols())));
    }
    let idx = |i: usize, j: usize| i * tb + j;
    let mut cost = vec![f64::INFINITY; ta * tb];
    let mut len = vec![0usize; ta * tb];
    let mut from = vec![0u8; ta * tb];
    for i in 0..ta {
        for j in 0..tb {
            let c = frame_distance(a.row(i), b.row(j));
            if i == 0 && j == 0 {
                cost[0] = c;
                len[0] = 1;
                continue;
            }
            // 0 diagonal, 1 up (i-1), 2 left (j-1)
            let mut best: Option<(f64, usize, u8)> = None;
            let mut consider = |pred: Option<(usize, usize)>, tag: u8| {
                let Some((pi, pj)) = pred else {
                    return;
                };
                let k = idx(pi, pj);
                let cand = (cost[k], len[k], tag);
                best = match best {
                    Some(b) if (b.0, b.1) <= (cand.0, cand.1) => Some(b),
                    _ => Some(cand),
                };
            };
            consider((i > 0 && j > 0).then(|| (i - 1, j - 1)), 0);
            consider((i > 0).then(|| (i - 1, j)), 1);
            consider((j > 0).then(|| (i, j - 1)), 2);
            let (pc, pl, tag) = best.expect("at least one predecessor");
            cost[idx(i, j)] = pc + c;
            len[idx(i, j)] = pl + 1;
            from[idx(i, j)] = tag;
        }
    }
    let mut pairs = Vec::with_capacity(len[idx(ta - 1, tb - 1)]);
    let (mut i, mut j) = (ta - 1, tb - 1);
    loop {
        pairs.push((i, j));
        if i == 0 && j == 0 {
            break;
        }
        match from[idx(i, j)] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
    }
    pairs.reverse();
    Ok(DtwPath {
        pairs,
        cost: cost[idx(ta - 1, tb - 1)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    #[test]
    fn identical_sequences_align_diagonally() {
        let mut rng = Rng::new(1);
        let a = rng.normal_matrix(5, 3, 1.0);
        let p = dtw_align(&a, &a).unwrap();
        assert_eq!(p.cost, 0.0);
        assert_eq!(p.pairs, (0..5).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn duplicated_frame_adds_one_step() {
        let mut rng = Rng::new(2);
        let a = rng.normal_matrix(5, 3, 1.0);
        let b = a.gather_rows(&[0, 1, 2, 2, 3, 4]).unwrap();
        let p = dtw_align(&a, &b).unwrap();
        assert_eq!(p.cost, 0.0);
        assert_eq!(p.pairs.len(), 6);
    }

    #[test]
    fn path_is_monotone_and_contiguous() {
        let mut rng = Rng::new(3);
        let a = rng.normal_matrix(7, 2, 1.0);
        let b = rng.normal_matrix(4, 2, 1.0);
        let p = dtw_align(&a, &b).unwrap();
        assert_eq!(p.pairs[0], (0, 0));
        assert_eq!(*p.pairs.last().unwrap(), (6, 3));
        for w in p.pairs.windows(2) {
            let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            assert!(matches!((di, dj), (1, 0) | (0, 1) | (1, 1)));
        }
        let sum: f64 = p.pairs.iter().map(|&(i, j)| frame_distance(a.row(i), b.row(j))).sum();
        assert!((sum - p.cost).abs() < 1e-12);
    }

    #[test]
    fn mirrored_inputs_mirror_cost() {
        let mut rng = Rng::new(4);
        let a = rng.normal_matrix(6, 3, 1.0);
        let b = rng.normal_matrix(9, 3, 1.0);
        let ab = dtw_align(&a, &b).unwrap();
        let ba = dtw_align(&b, &a).unwrap();
        assert_eq!(ab.cost, ba.cost);
        assert_eq!(ab.pairs.len(), ba.pairs.len());
    }

    #[test]
    fn shape_errors() {
        assert!(dtw_align(&Matrix::zeros(0, 2), &Matrix::zeros(3, 2)).is_err());
        assert!(dtw_align(&Matrix::zeros(2, 2), &Matrix::zeros(3, 3)).is_err());
    }
}
