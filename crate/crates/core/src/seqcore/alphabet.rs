//! Residue alphabet and token vocabulary.
//!
//! Token layout: the four special tokens occupy ids `0..4`, followed by the
//! twenty canonical amino acids in alphabetical one-letter order and the
//! unknown residue `X` (ids `4..25`).

/// The twenty canonical amino acids followed by the unknown residue.
pub const RESIDUES: &[u8; 21] = b"ACDEFGHIKLMNPQRSTVWYX";

/// The canonical residues only (no `X`).
pub const CANONICAL: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

pub const PAD: u32 = 0;
pub const MASK: u32 = 1;
pub const SEP: u32 = 2;
pub const CLS: u32 = 3;

pub const N_SPECIALS: usize = 4;
pub const VOCAB_SIZE: usize = N_SPECIALS + RESIDUES.len();

/// Token id of the unknown residue `X`.
pub const UNKNOWN: u32 = (N_SPECIALS + 20) as u32;

const fn build_lookup() -> [u8; 256] {
    let mut table = [u8::MAX; 256];
    let mut i = 0;
    while i < RESIDUES.len() {
        table[RESIDUES[i] as usize] = i as u8;
        i += 1;
    }
    table
}

static LOOKUP: [u8; 256] = build_lookup();

/// Stateless view of the token vocabulary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Alphabet;

impl Alphabet {
    pub const fn vocab_size(self) -> usize {
        VOCAB_SIZE
    }

    /// Token id for an uppercase residue letter.
    #[inline]
    pub fn token(self, residue: u8) -> Option<u32> {
        match LOOKUP[residue as usize] {
            u8::MAX => None,
            i => Some(N_SPECIALS as u32 + i as u32),
        }
    }

    #[inline]
    pub fn residue(self, token: u32) -> Option<u8> {
        let t = token as usize;
        if (N_SPECIALS..VOCAB_SIZE).contains(&t) {
            Some(RESIDUES[t - N_SPECIALS])
        } else {
            None
        }
    }

    #[inline]
    pub fn is_special(self, token: u32) -> bool {
        (token as usize) < N_SPECIALS
    }

    #[inline]
    pub fn is_residue(self, b: u8) -> bool {
        LOOKUP[b as usize] != u8::MAX
    }

    /// Token ids of the canonical residues (used for RANDOM replacement).
    pub fn canonical_tokens(self) -> impl Iterator<Item = u32> {
        (N_SPECIALS as u32)..(N_SPECIALS as u32 + 20)
    }

    /// Token ids of every residue including `X`.
    pub fn residue_tokens(self) -> std::ops::Range<u32> {
        (N_SPECIALS as u32)..(VOCAB_SIZE as u32)
    }

    pub fn special_name(self, token: u32) -> Option<&'static str> {
        match token {
            PAD => Some("[PAD]"),
            MASK => Some("[MASK]"),
            SEP => Some("[SEP]"),
            CLS => Some("[CLS]"),
            _ => None,
        }
    }
}

/// Validates a residue string. Returns the offending byte position on failure.
pub fn validate(seq: &str) -> Result<(), (usize, char)> {
    match seq.bytes().position(|b| !Alphabet.is_residue(b)) {
        None => Ok(()),
        Some(i) => Err((i, seq[i..].chars().next().unwrap_or('?'))),
    }
}

/// Antibody sequences may carry `X`, but such records are worth flagging.
pub fn has_unknown(seq: &str) -> bool {
    seq.bytes().any(|b| b == b'X')
}
