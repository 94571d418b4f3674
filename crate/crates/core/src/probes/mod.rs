//! The four probe families, their objectives, and training.
//!
//! | family       | map `g(h)`      | target                          |
//! |--------------|-----------------|---------------------------------|
//! | `Structural` | `B h`           | squared norm ≈ tree distance    |
//! | `Orthogonal` | `d̄ ⊙ V h`      | same, plus DSO penalty on `V`   |
//! | `Headword`   | `B h`           | softmax over `−‖g(h_i − h_j)‖`  |
//! | `Control`    | `B h`           | norm ≈ GloVe distance (Huber)   |

mod loss;
mod optim;
mod params;
mod train;

pub use loss::{
    ctrl_loss_grad, dso, head_loss_grad, huber, objective, ortho_loss_grad, struct_loss_grad,
    LossGrad, ObjectiveSettings,
};
pub use optim::{adamw_step, AdamWConfig, AdamWState, StepContext};
pub use params::{random_orthogonal, Checkpoint, Family, ProbeParams, CHECKPOINT_MAGIC};
pub use train::{
    dev_metric, lr_factor, select_best_layer, train_probe, train_probe_from, EarlyStopping,
    EpochRecord, Schedule, StopDecision, TrainConfig, TrainingLog,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensors::GloveTable;
use crate::treebank::{same_xpos_pairs, SentenceParse};

/// Same-XPOS word pair with its GloVe distance (0-based indices).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlPair {
    pub i: usize,
    pub j: usize,
    pub target: f64,
}

/// One sentence ready for probe training or evaluation.
#[derive(Clone, Debug)]
pub struct ProbeExample {
    pub parse: SentenceParse,
    /// `N x d` hidden states, one row per word.
    pub states: DMatrix<f64>,
    /// Gold tree distances as floats.
    pub distances: DMatrix<f64>,
    /// Gold heads per word, `0` = ROOT.
    pub heads: Vec<usize>,
    pub control_pairs: Vec<ControlPair>,
}

impl ProbeExample {
    pub fn new(parse: &SentenceParse, states: DMatrix<f64>) -> Result<Self> {
        let n = parse.len();
        if states.nrows() != n {
            return Err(Error::Alignment {
                sentence: 0,
                message: format!("{} state rows for {n} tokens", states.nrows()),
            });
        }
        let distances = DMatrix::from_fn(n, n, |i, j| parse.distance(i + 1, j + 1) as f64);
        Ok(ProbeExample {
            heads: parse.heads(),
            parse: parse.clone(),
            states,
            distances,
            control_pairs: Vec::new(),
        })
    }

    /// Attaches control targets: same-XPOS pairs whose words are both in the
    /// GloVe vocabulary, with the Euclidean distance of their vectors.
    pub fn with_control_targets(mut self, glove: &GloveTable) -> Self {
        self.control_pairs = same_xpos_pairs(&self.parse)
            .into_iter()
            .filter_map(|(i, j)| {
                let target = glove.distance(&self.parse.tokens[i - 1].form, &self.parse.tokens[j - 1].form)?;
                Some(ControlPair {
                    i: i - 1,
                    j: j - 1,
                    target,
                })
            })
            .collect();
        self
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }
}
