//! Emotion prompt alignment.
//!
//! Each implicit modality (vision, audio, text) is encoded by its own MLP and
//! projected into a shared embedding space. Emotion prompts are rows of a
//! learnable table, projected through the anchor modality's prompt matrix.
//! Training pulls each sample's implicit embedding towards its prompt with a
//! temperature-scaled symmetric cross-entropy over in-batch cosine logits; at
//! inference the prompt with the highest cosine similarity to the fused
//! implicit embedding is the aligned emotion embedding.

mod checkpoint;
mod eval;
mod params;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, AlignCheckpoint, CHECKPOINT_MAGIC};
pub use eval::{classification_report, eval_alignment, AlignmentEval};
pub use params::{AlignDims, EpAlignParams, Modality, ModalityEncoder, MAX_LOGIT_SCALE};
pub use train::{model_loss_graph, train_epalign, TrainAlignConfig, TrainedAlign};

use crate::error::{Error, Result};
use crate::numeric::{self, Matrix, Tape, Var};
use params::{symmetric_ce, AlignVars};

/// One training tuple: per-modality features plus the emotion-prompt label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalSample {
    pub vision: Vec<f64>,
    pub audio: Vec<f64>,
    pub text: Vec<f64>,
    pub label: usize,
}

impl MultimodalSample {
    pub fn feature(&self, m: Modality) -> &[f64] {
        match m {
            Modality::Vision => &self.vision,
            Modality::Audio => &self.audio,
            Modality::Text => &self.text,
        }
    }

    /// The subset of features named by `modalities`.
    pub fn features(&self, modalities: &[Modality]) -> ModalityFeatures {
        let mut f = ModalityFeatures::default();
        for &m in modalities {
            f.set(m, self.feature(m).to_vec());
        }
        f
    }
}

/// Whatever modalities are available for one inference query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModalityFeatures {
    #[serde(default, rename = "vis", skip_serializing_if = "Option::is_none")]
    pub vision: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<Vec<f64>>,
    #[serde(default, rename = "tex", alias = "text", skip_serializing_if = "Option::is_none")]
    pub text: Option<Vec<f64>>,
}

impl ModalityFeatures {
    pub fn get(&self, m: Modality) -> Option<&[f64]> {
        match m {
            Modality::Vision => self.vision.as_deref(),
            Modality::Audio => self.audio.as_deref(),
            Modality::Text => self.text.as_deref(),
        }
    }

    pub fn set(&mut self, m: Modality, v: Vec<f64>) {
        match m {
            Modality::Vision => self.vision = Some(v),
            Modality::Audio => self.audio = Some(v),
            Modality::Text => self.text = Some(v),
        }
    }

    pub fn available(&self) -> Vec<Modality> {
        Modality::ALL
            .into_iter()
            .filter(|&m| self.get(m).is_some())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentResult {
    pub predicted_class: usize,
    /// Unit-norm prompt embedding of the predicted class.
    pub u_emo: Vec<f64>,
    pub per_class_similarity: Vec<f64>,
}

fn check_input(x: &[f64], m: Modality, params: &EpAlignParams) -> Result<()> {
    let want = params.dims.input[m.index()];
    if x.len() != want {
        return Err(Error::Shape(format!(
            "{m} features have {} values, encoder expects {want}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{m} features are not finite")));
    }
    Ok(())
}

/// `f^mu`: the modality encoder applied to one feature vector.
pub fn encode_modality(x: &[f64], modality: Modality, params: &EpAlignParams) -> Result<Vec<f64>> {
    check_input(x, modality, params)?;
    let mut tape = Tape::new();
    let vars = AlignVars::constants(&mut tape, params);
    let xv = tape.constant(Matrix::row_vector(x));
    let f = vars.encode(&mut tape, modality, xv)?;
    Ok(tape.value(f).data().to_vec())
}

/// `u^mu = f^mu . W^{mu-pro}`.
pub fn project_implicit(f_mu: &[f64], modality: Modality, params: &EpAlignParams) -> Result<Vec<f64>> {
    if f_mu.len() != params.dims.embed {
        return Err(Error::Shape(format!(
            "feature has {} values, projection expects {}",
            f_mu.len(),
            params.dims.embed
        )));
    }
    Ok(Matrix::row_vector(f_mu)
        .matmul(&params.implicit_proj[modality.index()])?
        .into_data())
}

/// `u^prop`: the class's prompt feature projected into the anchor modality's space.
pub fn project_prompt(class: usize, anchor: Modality, params: &EpAlignParams) -> Result<Vec<f64>> {
    if class >= params.dims.classes {
        return Err(Error::InvalidLabel {
            label: class,
            classes: params.dims.classes,
        });
    }
    Ok(Matrix::row_vector(params.prompt_table.row(class))
        .matmul(&params.prompt_proj[anchor.index()])?
        .into_data())
}

/// `logits[i][j] = e^t . cos(U_exp[i], U_imp[j])`.
pub fn alignment_logits(u_exp: &Matrix, u_imp: &Matrix, log_temperature: f64) -> Result<Matrix> {
    if u_exp.rows() == 0 || u_imp.rows() == 0 {
        return Err(Error::InvalidInput("empty embedding batch".into()));
    }
    if u_exp.cols() != u_imp.cols() {
        return Err(Error::Shape(format!(
            "explicit width {} vs implicit width {}",
            u_exp.cols(),
            u_imp.cols()
        )));
    }
    let a = numeric::l2_normalize_rows(u_exp)?;
    let b = numeric::l2_normalize_rows(u_imp)?;
    Ok(a.matmul(&b.transpose())?.scale(log_temperature.exp()))
}

/// Symmetric cross-entropy over a square logit matrix, positives on the diagonal.
pub fn alignment_loss(logits: &Matrix) -> Result<f64> {
    if logits.rows() == 0 || logits.rows() != logits.cols() {
        return Err(Error::Shape(format!(
            "alignment loss needs a non-empty square matrix, got {}x{}",
            logits.rows(),
            logits.cols()
        )));
    }
    logits.ensure_finite("logits")?;
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let loss = symmetric_ce(&mut tape, l)?;
    Ok(tape.scalar_value(loss))
}

/// Symmetric contrastive loss built on a tape from raw explicit/implicit
/// embeddings and a log-temperature (1 x 1).
pub fn alignment_loss_graph(tape: &mut Tape, u_exp: Var, u_imp: Var, log_temperature: Var) -> Result<Var> {
    let scale = tape.exp(log_temperature);
    let logits = params::cosine_logits(tape, u_exp, u_imp, scale)?;
    symmetric_ce(tape, logits)
}

/// Unit-norm anchored prompt embeddings for every class (C x E).
pub fn prompt_embeddings(params: &EpAlignParams) -> Result<Matrix> {
    let raw = params
        .prompt_table
        .matmul(&params.prompt_proj[params.anchor.index()])?;
    numeric::l2_normalize_rows(&raw)
}

/// Fused implicit embedding: mean of the unit-norm per-modality embeddings, re-normalized.
pub fn fused_embedding(features: &ModalityFeatures, params: &EpAlignParams) -> Result<Vec<f64>> {
    let available = features.available();
    if available.is_empty() {
        return Err(Error::InvalidInput("no modality provided".into()));
    }
    let mut acc = vec![0.0; params.dims.embed];
    for &m in &available {
        let x = features.get(m).unwrap_or_default();
        let f = encode_modality(x, m, params)?;
        let u = numeric::normalize(&project_implicit(&f, m, params)?)?;
        for (a, v) in acc.iter_mut().zip(u) {
            *a += v;
        }
    }
    let n = available.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    numeric::normalize(&acc)
}

/// Scores a fused implicit embedding against every prompt; the best prompt's
/// unit embedding becomes `u_emo`. The temperature does not affect the ranking.
pub fn align_infer(features: &ModalityFeatures, params: &EpAlignParams) -> Result<AlignmentResult> {
    let fused = fused_embedding(features, params)?;
    let prompts = prompt_embeddings(params)?;
    let per_class_similarity: Vec<f64> = prompts
        .iter_rows()
        .map(|p| numeric::dot(p, &fused).clamp(-1.0, 1.0))
        .collect();
    let predicted_class = argmax(&per_class_similarity);
    Ok(AlignmentResult {
        predicted_class,
        u_emo: prompts.row(predicted_class).to_vec(),
        per_class_similarity,
    })
}

/// Index of the first maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    fn small_params() -> EpAlignParams {
        let dims = AlignDims {
            input: [6, 5, 4],
            hidden: 7,
            embed: 3,
            classes: 4,
        };
        EpAlignParams::init(dims, Modality::Text, 11).unwrap()
    }

    #[test]
    fn zero_encoder_gives_zero_feature() {
        let mut p = small_params();
        let e = &mut p.encoders[Modality::Audio.index()];
        for m in [&mut e.w1, &mut e.b1, &mut e.w2, &mut e.b2] {
            *m = Matrix::zeros(m.rows(), m.cols());
        }
        let f = encode_modality(&[1.0, -2.0, 0.5, 3.0, 0.1], Modality::Audio, &p).unwrap();
        assert_eq!(f, vec![0.0; 3]);
    }

    #[test]
    fn identity_encoder_is_tanh() {
        let dims = AlignDims {
            input: [3, 3, 3],
            hidden: 3,
            embed: 3,
            classes: 2,
        };
        let mut p = EpAlignParams::init(dims, Modality::Text, 0).unwrap();
        p.encoders[0] = ModalityEncoder {
            w1: Matrix::identity(3),
            b1: Matrix::zeros(1, 3),
            w2: Matrix::identity(3),
            b2: Matrix::zeros(1, 3),
        };
        let x = [0.5, -1.0, 2.0];
        let f = encode_modality(&x, Modality::Vision, &p).unwrap();
        for (a, b) in f.iter().zip(x) {
            assert_eq!(*a, b.tanh());
        }
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let p = small_params();
        assert!(matches!(
            encode_modality(&[1.0; 5], Modality::Vision, &p),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn encode_is_bitwise_stable() {
        let x = [0.3, -0.1, 0.7, 1.1, -2.0, 0.0];
        let a = encode_modality(&x, Modality::Vision, &small_params()).unwrap();
        let b = encode_modality(&x, Modality::Vision, &small_params()).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn implicit_projection_cases() {
        let mut p = small_params();
        let f = [0.2, -0.4, 1.5];
        p.implicit_proj[1] = Matrix::identity(3);
        assert_eq!(project_implicit(&f, Modality::Audio, &p).unwrap(), f.to_vec());
        p.implicit_proj[1] = Matrix::zeros(3, 3);
        assert_eq!(project_implicit(&f, Modality::Audio, &p).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn implicit_projection_two_by_two() {
        let dims = AlignDims {
            input: [2, 2, 2],
            hidden: 2,
            embed: 2,
            classes: 2,
        };
        let mut p = EpAlignParams::init(dims, Modality::Text, 0).unwrap();
        p.implicit_proj[0] = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        // [5, 6] . [[1,2],[3,4]] = [5+18, 10+24]
        let u = project_implicit(&[5.0, 6.0], Modality::Vision, &p).unwrap();
        assert_eq!(u, vec![23.0, 34.0]);

        p.prompt_table = Matrix::from_rows(&[vec![1.0, -1.0], vec![2.0, 0.5]]).unwrap();
        p.prompt_proj[2] = Matrix::from_rows(&[vec![0.5, 1.0], vec![-1.0, 2.0]]).unwrap();
        // [2, 0.5] . [[0.5,1],[-1,2]] = [1 - 0.5, 2 + 1]
        assert_eq!(project_prompt(1, Modality::Text, &p).unwrap(), vec![0.5, 3.0]);
    }

    #[test]
    fn prompt_projection_cases() {
        let mut p = small_params();
        p.prompt_proj[0] = Matrix::identity(3);
        assert_eq!(
            project_prompt(2, Modality::Vision, &p).unwrap(),
            p.prompt_table.row(2).to_vec()
        );
        let small = small_params();
        let a = project_prompt(1, Modality::Vision, &small).unwrap();
        let b = project_prompt(1, Modality::Audio, &small).unwrap();
        assert_ne!(a, b);
        assert!(matches!(
            project_prompt(4, Modality::Vision, &small),
            Err(Error::InvalidLabel { label: 4, classes: 4 })
        ));
    }

    #[test]
    fn logits_identity_and_scale() {
        let e = Matrix::identity(3);
        let l = alignment_logits(&e, &e, 0.0).unwrap();
        assert_eq!(l, Matrix::identity(3));
        let v = Matrix::row_vector(&[1.0, 2.0]);
        let l = alignment_logits(&v, &v, 100f64.ln()).unwrap();
        assert!((l.get(0, 0) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn logits_match_entrywise_cosine() {
        let mut rng = Rng::new(3);
        let a = rng.normal_matrix(3, 4, 1.0);
        let b = rng.normal_matrix(3, 4, 1.0);
        let t = 0.7;
        let l = alignment_logits(&a, &b, t).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let (x, y) = (a.row(i), b.row(j));
                let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
                let nx = x.iter().map(|p| p * p).sum::<f64>().sqrt();
                let ny = y.iter().map(|p| p * p).sum::<f64>().sqrt();
                let oracle = t.exp() * dot / (nx * ny);
                assert!((l.get(i, j) - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn logits_reject_zero_rows() {
        let a = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(alignment_logits(&a, &b, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn loss_closed_forms() {
        assert_eq!(alignment_loss(&Matrix::scalar(17.3)).unwrap(), 0.0);
        let uniform = Matrix::filled(4, 4, 2.5);
        assert!((alignment_loss(&uniform).unwrap() - 2.0 * 4f64.ln()).abs() < 1e-12);
        let peaked = Matrix::from_fn(8, 8, |i, j| if i == j { 50.0 } else { -50.0 });
        assert!(alignment_loss(&peaked).unwrap() < 1e-10);
        let bad = Matrix::from_rows(&[vec![0.0, f64::INFINITY], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(alignment_loss(&bad), Err(Error::InvalidInput(_))));
        assert!(alignment_loss(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn infer_picks_matching_prompt() {
        let mut p = small_params();
        let x = [0.4, -0.3, 1.2, 0.0, 0.9];
        let features = ModalityFeatures {
            audio: Some(x.to_vec()),
            ..Default::default()
        };
        let fused = fused_embedding(&features, &p).unwrap();
        // make prompt 2 equal to the fused embedding exactly
        p.prompt_proj[Modality::Text.index()] = Matrix::identity(3);
        p.prompt_table.row_mut(2).copy_from_slice(&fused);
        let r = align_infer(&features, &p).unwrap();
        assert_eq!(r.predicted_class, 2);
        assert!((r.per_class_similarity[2] - 1.0).abs() < 1e-12);
        assert!((numeric::norm(&r.u_emo) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infer_needs_a_modality() {
        let p = small_params();
        assert!(matches!(
            align_infer(&ModalityFeatures::default(), &p),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn infer_ignores_temperature() {
        let mut p = small_params();
        let features = ModalityFeatures {
            vision: Some(vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]),
            text: Some(vec![1.0, -1.0, 0.5, 0.25]),
            ..Default::default()
        };
        let a = align_infer(&features, &p).unwrap();
        p.log_temperature = -3.0;
        let b = align_infer(&features, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loss_graph_gradients_match_finite_differences() {
        let mut rng = Rng::new(17);
        for _ in 0..3 {
            let params = vec![
                rng.normal_matrix(4, 8, 1.0),
                rng.normal_matrix(4, 8, 1.0),
                Matrix::scalar(rng.uniform_range(0.0, 2.0)),
            ];
            let report = numeric::finite_diff_check(
                &params,
                |t, v| alignment_loss_graph(t, v[0], v[1], v[2]),
                1e-3,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        let p = small_params();
        let mut rng = Rng::new(5);
        let data: Vec<MultimodalSample> = (0..4)
            .map(|i| MultimodalSample {
                vision: (0..6).map(|_| rng.normal()).collect(),
                audio: (0..5).map(|_| rng.normal()).collect(),
                text: (0..4).map(|_| rng.normal()).collect(),
                label: i,
            })
            .collect();
        let report = numeric::finite_diff_check(
            &p.to_tensors(),
            |t, v| model_loss_graph(t, v, &data, &Modality::ALL, Modality::Audio),
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn modality_list_parsing() {
        assert_eq!(
            Modality::parse_list("tex,vis").unwrap(),
            vec![Modality::Vision, Modality::Text]
        );
        assert!(Modality::parse_list("smell").is_err());
        assert!(Modality::parse_list("").is_err());
    }
}
