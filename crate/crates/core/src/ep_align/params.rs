use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng, Tape, Var};

/// Upper bound on the logit scale `e^t`.
pub const MAX_LOGIT_SCALE: f64 = 100.0;

/// Implicit emotion sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "vis")]
    Vision,
    #[serde(rename = "audio")]
    Audio,
    #[serde(rename = "tex")]
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Vision, Modality::Audio, Modality::Text];

    pub fn index(self) -> usize {
        match self {
            Modality::Vision => 0,
            Modality::Audio => 1,
            Modality::Text => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Vision => "vis",
            Modality::Audio => "audio",
            Modality::Text => "tex",
        }
    }

    /// Parses a comma-separated list such as `vis,audio,tex`.
    pub fn parse_list(s: &str) -> Result<Vec<Modality>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: Modality = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no modalities given".into()));
        }
        out.sort();
        Ok(out)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vis" | "vision" => Ok(Modality::Vision),
            "audio" => Ok(Modality::Audio),
            "tex" | "text" => Ok(Modality::Text),
            other => Err(Error::Config(format!(
                "unknown modality `{other}` (expected vis, audio or tex)"
            ))),
        }
    }
}

/// Sizes of every EP-Align tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignDims {
    /// Input feature width per modality, indexed by [`Modality::index`].
    pub input: [usize; 3],
    pub hidden: usize,
    pub embed: usize,
    pub classes: usize,
}

impl Default for AlignDims {
    fn default() -> Self {
        Self {
            input: [64, 64, 64],
            hidden: 64,
            embed: 32,
            classes: 5,
        }
    }
}

/// Two-layer MLP with a tanh hidden layer and linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityEncoder {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl ModalityEncoder {
    fn init(rng: &mut Rng, input: usize, hidden: usize, embed: usize) -> Self {
        Self {
            w1: rng.glorot(input, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: rng.glorot(hidden, embed),
            b2: Matrix::zeros(1, embed),
        }
    }
}

/// Every learnable EP-Align tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpAlignParams {
    pub dims: AlignDims,
    /// Modality whose prompt projection anchors the explicit embeddings.
    pub anchor: Modality,
    pub encoders: [ModalityEncoder; 3],
    /// One learnable prompt feature per emotion class (C x E).
    pub prompt_table: Matrix,
    /// Implicit projections `W^{mu-pro}` (E x E), per modality.
    pub implicit_proj: [Matrix; 3],
    /// Prompt projections `W^{pro-eta}` (E x E), per anchor modality.
    pub prompt_proj: [Matrix; 3],
    /// Log of the logit scale.
    pub log_temperature: f64,
}

pub(crate) const TENSOR_COUNT: usize = 12 + 1 + 3 + 3 + 1;

impl EpAlignParams {
    pub fn init(dims: AlignDims, anchor: Modality, seed: u64) -> Result<Self> {
        if dims.classes < 2 || dims.embed == 0 || dims.hidden == 0 {
            return Err(Error::Config(format!("invalid EP-Align dims {dims:?}")));
        }
        let enc = |m: Modality| {
            let mut rng = Rng::stream(seed, &format!("ep_align.encoder.{}", m.name()));
            ModalityEncoder::init(&mut rng, dims.input[m.index()], dims.hidden, dims.embed)
        };
        let proj = |kind: &str, m: Modality| {
            let mut rng = Rng::stream(seed, &format!("ep_align.{kind}.{}", m.name()));
            rng.glorot(dims.embed, dims.embed)
        };
        let mut prompt_rng = Rng::stream(seed, "ep_align.prompt_table");
        Ok(Self {
            dims,
            anchor,
            encoders: Modality::ALL.map(enc),
            prompt_table: prompt_rng.normal_matrix(dims.classes, dims.embed, 1.0),
            implicit_proj: Modality::ALL.map(|m| proj("implicit_proj", m)),
            prompt_proj: Modality::ALL.map(|m| proj("prompt_proj", m)),
            log_temperature: (1.0f64 / 0.07).ln(),
        })
    }

    pub fn logit_scale(&self) -> f64 {
        self.log_temperature.exp()
    }

    /// Flat tensor list in a fixed order (see [`EpAlignParams::from_tensors`]).
    pub fn to_tensors(&self) -> Vec<Matrix> {
        let mut out = Vec::with_capacity(TENSOR_COUNT);
        for e in &self.encoders {
            out.extend([e.w1.clone(), e.b1.clone(), e.w2.clone(), e.b2.clone()]);
        }
        out.push(self.prompt_table.clone());
        out.extend(self.implicit_proj.iter().cloned());
        out.extend(self.prompt_proj.iter().cloned());
        out.push(Matrix::scalar(self.log_temperature));
        out
    }

    pub fn from_tensors(dims: AlignDims, anchor: Modality, t: &[Matrix]) -> Result<Self> {
        if t.len() != TENSOR_COUNT {
            return Err(Error::Shape(format!(
                "expected {TENSOR_COUNT} EP-Align tensors, got {}",
                t.len()
            )));
        }
        let enc = |i: usize| ModalityEncoder {
            w1: t[4 * i].clone(),
            b1: t[4 * i + 1].clone(),
            w2: t[4 * i + 2].clone(),
            b2: t[4 * i + 3].clone(),
        };
        let params = Self {
            dims,
            anchor,
            encoders: [enc(0), enc(1), enc(2)],
            prompt_table: t[12].clone(),
            implicit_proj: [t[13].clone(), t[14].clone(), t[15].clone()],
            prompt_proj: [t[16].clone(), t[17].clone(), t[18].clone()],
            log_temperature: t[19].data()[0],
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        let expect = |m: &Matrix, r: usize, c: usize, what: &str| -> Result<()> {
            if m.shape() != (r, c) {
                return Err(Error::Shape(format!(
                    "{what}: expected {r}x{c}, found {}x{}",
                    m.rows(),
                    m.cols()
                )));
            }
            m.ensure_finite(what)
        };
        for m in Modality::ALL {
            let e = &self.encoders[m.index()];
            expect(&e.w1, d.input[m.index()], d.hidden, "encoder w1")?;
            expect(&e.b1, 1, d.hidden, "encoder b1")?;
            expect(&e.w2, d.hidden, d.embed, "encoder w2")?;
            expect(&e.b2, 1, d.embed, "encoder b2")?;
            expect(&self.implicit_proj[m.index()], d.embed, d.embed, "implicit projection")?;
            expect(&self.prompt_proj[m.index()], d.embed, d.embed, "prompt projection")?;
        }
        expect(&self.prompt_table, d.classes, d.embed, "prompt table")?;
        if !self.log_temperature.is_finite() {
            return Err(Error::InvalidInput("log temperature is not finite".into()));
        }
        Ok(())
    }
}

/// The EP-Align tensors placed on a tape, in [`EpAlignParams::to_tensors`] order.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AlignVars {
    pub encoders: [[Var; 4]; 3],
    pub prompt_table: Var,
    pub implicit_proj: [Var; 3],
    pub prompt_proj: [Var; 3],
    pub log_temperature: Var,
}

impl AlignVars {
    pub fn from_vars(v: &[Var]) -> Self {
        Self {
            encoders: [
                [v[0], v[1], v[2], v[3]],
                [v[4], v[5], v[6], v[7]],
                [v[8], v[9], v[10], v[11]],
            ],
            prompt_table: v[12],
            implicit_proj: [v[13], v[14], v[15]],
            prompt_proj: [v[16], v[17], v[18]],
            log_temperature: v[19],
        }
    }

    pub fn constants(tape: &mut Tape, params: &EpAlignParams) -> Self {
        let vars: Vec<Var> = params
            .to_tensors()
            .into_iter()
            .map(|m| tape.constant(m))
            .collect();
        Self::from_vars(&vars)
    }

    /// `f^mu` for a batch of inputs (N x D_mu).
    pub fn encode(&self, tape: &mut Tape, m: Modality, x: Var) -> Result<Var> {
        let [w1, b1, w2, b2] = self.encoders[m.index()];
        let h = tape.matmul(x, w1)?;
        let h = tape.add_row(h, b1)?;
        let h = tape.tanh(h);
        let o = tape.matmul(h, w2)?;
        tape.add_row(o, b2)
    }

    /// `u^mu = f^mu . W^{mu-pro}`.
    pub fn project_implicit(&self, tape: &mut Tape, m: Modality, f: Var) -> Result<Var> {
        tape.matmul(f, self.implicit_proj[m.index()])
    }

    /// `u^prop = f^prop . W^{pro-eta}` for each label.
    pub fn project_prompts(&self, tape: &mut Tape, labels: &[usize], anchor: Modality) -> Result<Var> {
        let f = tape.gather_rows(self.prompt_table, labels)?;
        tape.matmul(f, self.prompt_proj[anchor.index()])
    }

    /// `e^t . norm(U_exp) . norm(U_imp)^T`.
    pub fn logits(&self, tape: &mut Tape, u_exp: Var, u_imp: Var) -> Result<Var> {
        let scale = tape.exp(self.log_temperature);
        cosine_logits(tape, u_exp, u_imp, scale)
    }
}

pub(crate) fn cosine_logits(tape: &mut Tape, u_exp: Var, u_imp: Var, scale: Var) -> Result<Var> {
    let a = tape.l2_normalize_rows(u_exp)?;
    let b = tape.l2_normalize_rows(u_imp)?;
    let bt = tape.transpose(b);
    let sim = tape.matmul(a, bt)?;
    tape.mul_scalar(sim, scale)
}

/// Symmetric cross-entropy with positives on the diagonal.
pub(crate) fn symmetric_ce(tape: &mut Tape, logits: Var) -> Result<Var> {
    let rows = tape.diag_cross_entropy(logits)?;
    let lt = tape.transpose(logits);
    let cols = tape.diag_cross_entropy(lt)?;
    tape.add(rows, cols)
}
