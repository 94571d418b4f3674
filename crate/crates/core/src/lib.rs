//! Syntactic probes on transformer hidden states, tree decoding, BLiMP
//! minimal-pair outcomes, and the regressions that relate the two.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`treebank`]: CoNLL-U parsing and gold tree distances.
//! - [`tensors`]: the `HSB1` hidden-state format, GloVe tables, export
//!   manifests, and embedding subtraction.
//! - [`probes`]: the structural, orthogonal, head-word and control probes,
//!   their objectives, AdamW, and the training loop.
//! - [`metrics`]: MST decoding, UUAS, UAS and Spearman correlation.
//! - [`outcomes`]: minimal pairs, accuracy, and critical edges.
//! - [`stats`]: OLS, Holm–Bonferroni, likelihood-ratio and Welch tests.
//! - [`synth`]: corpora with a planted tree geometry.
//!
//! ```
//! use synprobe::treebank::parse_conllu;
//! use synprobe::metrics::{extract_mst, score_uuas};
//! use nalgebra::DMatrix;
//!
//! let doc = "1\tDogs\tdog\tNOUN\tNNS\t_\t2\tnsubj\t_\t_\n\
//!            2\tbark\tbark\tVERB\tVBP\t_\t0\troot\t_\t_\n\n";
//! let parse = &parse_conllu(doc)?[0];
//! let d = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
//! let mst = extract_mst(&d, &parse.punct_mask());
//! assert_eq!(score_uuas(&mst, parse), 1.0);
//! # Ok::<(), synprobe::Error>(())
//! ```

pub mod error;
pub mod metrics;
pub mod outcomes;
pub mod probes;
pub mod stats;
pub mod synth;
pub mod tensors;
pub mod treebank;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/hidden-states.md")]
    mod hidden_states {}
    #[doc = include_str!("../../../book/src/probes.md")]
    mod probes {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/minimal-pairs.md")]
    mod minimal_pairs {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
