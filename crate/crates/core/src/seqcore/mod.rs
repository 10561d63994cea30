//! Residue alphabet, sequence records, FASTA input and pairwise alignment.

pub mod align;
pub mod alphabet;
pub mod fasta;
pub mod record;

pub use align::{derive_mutations, edit_distance, global_align, sequence_identity, Alignment};
pub use alphabet::Alphabet;
pub use fasta::parse_fasta;
pub use record::{AntibodyRecord, CdrSpans, Label, Stage};
