//! Training instances for the three pretraining objectives.
//!
//! Paired layout: `[CLS] a_1..a_m [SEP] g_1..g_n`. Antibody residue `i`
//! sits at token index `1 + i`, germline residue `j` at `m + 2 + j`.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::transformer::ModelInput;
use crate::seqcore::align::germline_to_antibody;
use crate::seqcore::alphabet::{Alphabet, CLS, MASK, SEP};
use crate::seqcore::AntibodyRecord;

pub const DEFAULT_MAX_LEN: usize = 400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedEncoding {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub antibody_len: usize,
    pub germline_len: usize,
}

fn tokens_of(seq: &str) -> Result<Vec<u32>> {
    seq.bytes()
        .enumerate()
        .map(|(i, b)| {
            Alphabet
                .token(b)
                .ok_or_else(|| Error::InvalidSequence(format!("'{}' at position {i}", b as char)))
        })
        .collect()
}

impl PairedEncoding {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn antibody_index(&self, i: usize) -> usize {
        1 + i
    }

    pub fn germline_index(&self, j: usize) -> usize {
        self.antibody_len + 2 + j
    }

    pub fn sep_index(&self) -> usize {
        self.antibody_len + 1
    }

    /// Recovers `(antibody, germline)`.
    pub fn decode(&self) -> Result<(String, String)> {
        let residues = |range: std::ops::Range<usize>| -> Result<String> {
            self.token_ids[range]
                .iter()
                .map(|&t| Alphabet.residue(t).map(char::from).ok_or_else(|| Error::input(format!("token {t} is not a residue"))))
                .collect()
        };
        let m = self.antibody_len;
        Ok((residues(1..1 + m)?, residues(m + 2..m + 2 + self.germline_len)?))
    }

    pub fn to_input(&self) -> ModelInput {
        ModelInput::from_encoding(self)
    }
}

pub fn encode_pair_strs(antibody: &str, germline: &str, max_len: usize) -> Result<PairedEncoding> {
    let (m, n) = (antibody.len(), germline.len());
    let length = m + n + 2;
    if length > max_len {
        return Err(Error::Overflow { length, max_len });
    }
    if m == 0 || n == 0 {
        return Err(Error::input("paired encoding needs non-empty antibody and germline"));
    }
    let mut token_ids = Vec::with_capacity(length);
    token_ids.push(CLS);
    token_ids.extend(tokens_of(antibody)?);
    token_ids.push(SEP);
    token_ids.extend(tokens_of(germline)?);
    let mut segment_ids = vec![0u8; m + 1];
    segment_ids.resize(length, 1);
    Ok(PairedEncoding { token_ids, segment_ids, antibody_len: m, germline_len: n })
}

/// `[CLS] a_1..a_m [SEP] g_1..g_n`; never truncates.
pub fn encode_pair(record: &AntibodyRecord, max_len: usize) -> Result<PairedEncoding> {
    encode_pair_strs(&record.antibody, &record.germline, max_len)
        .map_err(|e| match e {
            Error::InvalidSequence(msg) => Error::InvalidSequence(format!("record '{}': {msg}", record.id)),
            other => other,
        })
}

/// Antibody-only input `[CLS] a_1..a_m` used by the downstream tasks.
pub fn encode_single(antibody: &str, max_len: usize) -> Result<ModelInput> {
    let length = antibody.len() + 1;
    if length > max_len {
        return Err(Error::Overflow { length, max_len });
    }
    if antibody.is_empty() {
        return Err(Error::input("empty antibody"));
    }
    let mut tokens = vec![CLS];
    tokens.extend(tokens_of(antibody)?);
    let segments = vec![0u8; tokens.len()];
    Ok(ModelInput::from_tokens(tokens, segments))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskAction {
    Mask,
    Random,
    Keep,
}

/// Which side of the pair MLM may select from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskScope {
    #[default]
    Both,
    AntibodyOnly,
    GermlineOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskingPlan {
    /// Token indices, ascending.
    pub selected: Vec<usize>,
    pub actions: Vec<MaskAction>,
    /// Original token ids at `selected`.
    pub targets: Vec<u32>,
    /// Token written at each selected index.
    pub replacements: Vec<u32>,
}

impl MaskingPlan {
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn apply(&self, tokens: &[u32]) -> Vec<u32> {
        let mut out = tokens.to_vec();
        for (&i, &r) in self.selected.iter().zip(&self.replacements) {
            out[i] = r;
        }
        out
    }

    pub fn restore(&self, masked: &[u32]) -> Vec<u32> {
        let mut out = masked.to_vec();
        for (&i, &t) in self.selected.iter().zip(&self.targets) {
            out[i] = t;
        }
        out
    }
}

/// Selects `round(ratio * maskable)` non-special positions uniformly and
/// draws an 80/10/10 MASK/RANDOM/KEEP action for each.
pub fn mlm_plan(enc: &PairedEncoding, ratio: f64, scope: MaskScope, rng: &mut impl Rng) -> Result<MaskingPlan> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::config(format!("mask ratio {ratio} outside [0, 1]")));
    }
    let m = enc.antibody_len;
    let maskable: Vec<usize> = (0..enc.len())
        .filter(|&i| !Alphabet.is_special(enc.token_ids[i]))
        .filter(|&i| match scope {
            MaskScope::Both => true,
            MaskScope::AntibodyOnly => i <= m,
            MaskScope::GermlineOnly => i > m + 1,
        })
        .collect();
    let k = (ratio * maskable.len() as f64).round() as usize;
    let mut selected: Vec<usize> = index::sample(rng, maskable.len(), k).into_iter().map(|i| maskable[i]).collect();
    selected.sort_unstable();
    let mut actions = Vec::with_capacity(k);
    let mut replacements = Vec::with_capacity(k);
    let targets: Vec<u32> = selected.iter().map(|&i| enc.token_ids[i]).collect();
    for &t in &targets {
        let u: f64 = rng.gen();
        let (action, replacement) = if u < 0.8 {
            (MaskAction::Mask, MASK)
        } else if u < 0.9 {
            (MaskAction::Random, Alphabet.canonical_tokens().nth(rng.gen_range(0..20)).unwrap())
        } else {
            (MaskAction::Keep, t)
        };
        actions.push(action);
        replacements.push(replacement);
    }
    Ok(MaskingPlan { selected, actions, targets, replacements })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgpInstance {
    pub encoding: PairedEncoding,
    /// 1 when the paired germline is the antibody's true ancestor.
    pub label: u8,
    /// Batch index of the record whose germline was swapped in.
    pub partner: Option<usize>,
}

/// Swaps each record's germline, with probability `p`, for the germline of a
/// uniformly chosen other batch member.
pub fn agp_batch(records: &[&AntibodyRecord], p: f64, max_len: usize, rng: &mut impl Rng) -> Result<Vec<AgpInstance>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("swap probability {p} outside [0, 1]")));
    }
    if records.len() < 2 && p > 0.0 {
        return Err(Error::input("ancestor-germline negatives need a batch of at least two records"));
    }
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if p > 0.0 && rng.gen_bool(p) {
                let mut j = rng.gen_range(0..records.len() - 1);
                if j >= i {
                    j += 1;
                }
                let germline = &records[j].germline;
                let encoding = encode_pair_strs(&r.antibody, germline, max_len)?;
                // A partner that happens to share the exact germline is still the ancestor.
                let label = u8::from(*germline == r.germline);
                Ok(AgpInstance { encoding, label, partner: Some(j) })
            } else {
                Ok(AgpInstance { encoding: encode_pair(r, max_len)?, label: 1, partner: None })
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MppInstance {
    /// Encoding with the antibody mutation positions replaced by MASK.
    pub encoding: PairedEncoding,
    /// One 0/1 label per germline residue.
    pub germline_labels: Vec<u8>,
    /// Masked antibody token indices, ascending.
    pub masked_positions: Vec<usize>,
    /// True antibody tokens at `masked_positions`.
    pub masked_targets: Vec<u32>,
}

impl MppInstance {
    /// Token indices of the germline residues, in germline order.
    pub fn germline_rows(&self) -> Vec<usize> {
        (0..self.encoding.germline_len).map(|j| self.encoding.germline_index(j)).collect()
    }
}

/// Masks the antibody at every mutated position and labels the germline.
pub fn mpp_build(record: &AntibodyRecord, max_len: usize) -> Result<MppInstance> {
    let mut encoding = encode_pair(record, max_len)?;
    let n = encoding.germline_len;
    let mut germline_labels = vec![0u8; n];
    let map = germline_to_antibody(record.antibody.as_bytes(), record.germline.as_bytes());
    let mut masked = Vec::with_capacity(record.mutations.len());
    for &j in &record.mutations {
        if j >= n {
            return Err(Error::input(format!("record '{}': mutation {j} outside germline", record.id)));
        }
        germline_labels[j] = 1;
        if let Some(i) = map[j] {
            masked.push(encoding.antibody_index(i));
        }
    }
    masked.sort_unstable();
    let masked_targets = masked.iter().map(|&t| encoding.token_ids[t]).collect();
    for &t in &masked {
        encoding.token_ids[t] = MASK;
    }
    Ok(MppInstance { encoding, germline_labels, masked_positions: masked, masked_targets })
}

/// One line of the instance inspection format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceLine {
    Mlm { id: String, token_ids: Vec<u32>, segment_ids: Vec<u8>, plan: MaskingPlan },
    Agp { id: String, token_ids: Vec<u32>, segment_ids: Vec<u8>, label: u8 },
    Mpp { id: String, token_ids: Vec<u32>, segment_ids: Vec<u8>, labels: Vec<u8>, masked_positions: Vec<usize>, targets: Vec<u32> },
}

pub fn write_instances_jsonl<W: std::io::Write>(mut w: W, lines: &[InstanceLine]) -> Result<()> {
    for l in lines {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
