//! Dense linear algebra, a gradient tape, Adam and seeded randomness.

mod gradcheck;
mod matrix;
mod optim;
mod rng;
mod tape;

pub use gradcheck::{finite_diff_check, grad, GradCheckReport};
pub use matrix::{cosine_similarity, dot, l2_normalize_rows, norm, normalize, softmax_rows, Matrix};
pub use optim::{Adam, AdamConfig};
pub use rng::Rng;
pub use tape::{Gradients, Tape, Var};
