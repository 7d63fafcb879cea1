//! Objective speech metrics (WER, CER, MCD with DTW, SECS) and MOS
//! aggregation with Student-t confidence intervals.

mod dtw;
mod mos;
mod report;
mod speech;
mod text;

pub use dtw::{dtw_align, frame_distance, DtwPath};
pub use mos::{mos_aggregate, t_interval, MosSummary};
pub use report::{evaluate, median, EvalItem, EvalReport, MosField, UtteranceScores};
pub use speech::{
    analysis_mel, mcd, mcd_from_cepstra, secs, speaker_embedding, speaker_embedding_from_mel,
    MCD_COEFFS, MIN_EMBED_FRAMES,
};
pub use text::{
    cer, char_counts, edit_distance, normalize_text, wer, word_counts, EditOps, ErrorCounts,
};
