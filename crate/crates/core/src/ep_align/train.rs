use serde::{Deserialize, Serialize};

use super::params::{symmetric_ce, AlignDims, AlignVars, EpAlignParams, Modality, MAX_LOGIT_SCALE};
use super::MultimodalSample;
use crate::error::{Error, Result};
use crate::numeric::{Adam, AdamConfig, Matrix, Rng, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainAlignConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Implicit modalities fused into `U_imp`.
    pub modalities: Vec<Modality>,
    pub anchor: Modality,
    pub hidden: usize,
    pub embed: usize,
    pub classes: usize,
}

impl Default for TrainAlignConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 30,
            lr: 1e-3,
            seed: 42,
            modalities: Modality::ALL.to_vec(),
            anchor: Modality::Text,
            hidden: 64,
            embed: 32,
            classes: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedAlign {
    pub params: EpAlignParams,
    /// Monitor loss before the first update.
    pub initial_loss: f64,
    /// Monitor loss after each epoch.
    pub loss_curve: Vec<f64>,
}

/// Indices ordered so that consecutive positions cycle through the classes,
/// each class's samples and each round's class order shuffled.
fn class_interleaved(labels: &[usize], classes: usize, rng: &mut Rng) -> Vec<usize> {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }
    for list in &mut per_class {
        rng.shuffle(list);
    }
    let rounds = per_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut order: Vec<usize> = (0..classes).collect();
    let mut out = Vec::with_capacity(labels.len());
    for r in 0..rounds {
        rng.shuffle(&mut order);
        out.extend(order.iter().filter_map(|&c| per_class[c].get(r).copied()));
    }
    out
}

/// Same grouping without shuffling, used to measure the loss.
fn monitor_order(labels: &[usize], classes: usize) -> Vec<usize> {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }
    let rounds = per_class.iter().map(Vec::len).max().unwrap_or(0);
    (0..rounds)
        .flat_map(|r| per_class.iter().filter_map(move |list| list.get(r).copied()))
        .collect()
}

struct Batch {
    inputs: Vec<Matrix>,
    labels: Vec<usize>,
}

fn make_batch(data: &[MultimodalSample], idx: &[usize], modalities: &[Modality]) -> Result<Batch> {
    let inputs = modalities
        .iter()
        .map(|&m| {
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| data[i].feature(m).to_vec()).collect();
            Matrix::from_rows(&rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Batch {
        inputs,
        labels: idx.iter().map(|&i| data[i].label).collect(),
    })
}

/// The symmetric contrastive loss of one batch on the tape.
fn batch_loss(
    tape: &mut Tape,
    vars: &AlignVars,
    batch: &Batch,
    modalities: &[Modality],
    anchor: Modality,
) -> Result<Var> {
    let u_exp = vars.project_prompts(tape, &batch.labels, anchor)?;
    let mut u_imp: Option<Var> = None;
    for (&m, x) in modalities.iter().zip(&batch.inputs) {
        let xv = tape.constant(x.clone());
        let f = vars.encode(tape, m, xv)?;
        let u = vars.project_implicit(tape, m, f)?;
        u_imp = Some(match u_imp {
            None => u,
            Some(acc) => tape.add(acc, u)?,
        });
    }
    let u_imp = u_imp.ok_or_else(|| Error::Config("no implicit modality configured".into()))?;
    let u_imp = tape.scale(u_imp, 1.0 / modalities.len() as f64);
    let logits = vars.logits(tape, u_exp, u_imp)?;
    symmetric_ce(tape, logits)
}

/// Full-model contrastive loss of `data` as one batch, with `vars` laid out as
/// [`EpAlignParams::to_tensors`]. Used to check gradients end to end.
pub fn model_loss_graph(
    tape: &mut Tape,
    vars: &[Var],
    data: &[MultimodalSample],
    modalities: &[Modality],
    anchor: Modality,
) -> Result<Var> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let batch = make_batch(data, &idx, modalities)?;
    batch_loss(tape, &AlignVars::from_vars(vars), &batch, modalities, anchor)
}

fn validate(dataset: &[MultimodalSample], config: &TrainAlignConfig) -> Result<AlignDims> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::Config("empty training set".into()))?;
    if config.batch_size == 0 || config.batch_size > dataset.len() {
        return Err(Error::Config(format!(
            "batch size {} must be in 1..={}",
            config.batch_size,
            dataset.len()
        )));
    }
    if config.modalities.is_empty() {
        return Err(Error::Config("no implicit modality configured".into()));
    }
    if !(config.lr >= 0.0 && config.lr.is_finite()) {
        return Err(Error::Config(format!("invalid learning rate {}", config.lr)));
    }
    let dims = AlignDims {
        input: [first.vision.len(), first.audio.len(), first.text.len()],
        hidden: config.hidden,
        embed: config.embed,
        classes: config.classes,
    };
    for (i, s) in dataset.iter().enumerate() {
        if s.label >= config.classes {
            return Err(Error::InvalidLabel {
                label: s.label,
                classes: config.classes,
            });
        }
        for m in Modality::ALL {
            let f = s.feature(m);
            if f.len() != dims.input[m.index()] || f.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "sample {i}: {m} features malformed"
                )));
            }
        }
    }
    Ok(dims)
}

/// Trains EP-Align with Adam on class-interleaved mini-batches.
///
/// The reported loss is measured on a fixed, unshuffled batching of the whole
/// dataset so the curve depends only on the parameters.
pub fn train_epalign(dataset: &[MultimodalSample], config: &TrainAlignConfig) -> Result<TrainedAlign> {
    let dims = validate(dataset, config)?;
    let mut modalities = config.modalities.clone();
    modalities.sort();
    modalities.dedup();
    let anchor = config.anchor;
    let k = config.batch_size;

    let init = EpAlignParams::init(dims, anchor, config.seed)?;
    let mut tensors = init.to_tensors();
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), &tensors);
    let mut rng = Rng::stream(config.seed, "ep_align.batches");
    let labels: Vec<usize> = dataset.iter().map(|s| s.label).collect();

    let monitor: Vec<Batch> = monitor_order(&labels, dims.classes)
        .chunks_exact(k)
        .map(|idx| make_batch(dataset, idx, &modalities))
        .collect::<Result<_>>()?;
    let monitor_loss = |tensors: &[Matrix]| -> Result<f64> {
        let mut total = 0.0;
        for batch in &monitor {
            let mut tape = Tape::new();
            let vars: Vec<Var> = tensors.iter().map(|t| tape.constant(t.clone())).collect();
            let loss = batch_loss(&mut tape, &AlignVars::from_vars(&vars), batch, &modalities, anchor)?;
            total += tape.scalar_value(loss);
        }
        Ok(total / monitor.len() as f64)
    };

    let initial_loss = monitor_loss(&tensors)?;
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let log_t_index = tensors.len() - 1;
    for _ in 0..config.epochs {
        let order = class_interleaved(&labels, dims.classes, &mut rng);
        for idx in order.chunks_exact(k) {
            let batch = make_batch(dataset, idx, &modalities)?;
            let mut tape = Tape::new();
            let vars: Vec<Var> = tensors.iter().map(|t| tape.param(t.clone())).collect();
            let loss = batch_loss(&mut tape, &AlignVars::from_vars(&vars), &batch, &modalities, anchor)?;
            let grads = tape.backward(loss)?;
            let g: Vec<Matrix> = vars.iter().map(|&v| grads.get(v)).collect();
            let mut refs: Vec<&mut Matrix> = tensors.iter_mut().collect();
            adam.step(&mut refs, &g)?;
            let t = &mut tensors[log_t_index].data_mut()[0];
            *t = t.min(MAX_LOGIT_SCALE.ln());
        }
        loss_curve.push(monitor_loss(&tensors)?);
    }

    Ok(TrainedAlign {
        params: EpAlignParams::from_tensors(dims, anchor, &tensors)?,
        initial_loss,
        loss_curve,
    })
}
