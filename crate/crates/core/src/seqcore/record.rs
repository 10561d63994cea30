use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqcore::alphabet;

/// B-cell developmental stage, ordered from least to most mature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Immature,
    Transitional,
    Mature,
    Plasmacytes,
    MemoryIgdPlus,
    MemoryIgdMinus,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Immature,
        Stage::Transitional,
        Stage::Mature,
        Stage::Plasmacytes,
        Stage::MemoryIgdPlus,
        Stage::MemoryIgdMinus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Stage> {
        Stage::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Immature => "immature",
            Stage::Transitional => "transitional",
            Stage::Mature => "mature",
            Stage::Plasmacytes => "plasmacytes",
            Stage::MemoryIgdPlus => "memory_igd_plus",
            Stage::MemoryIgdMinus => "memory_igd_minus",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let stage = match norm.as_str() {
            "immature" => Stage::Immature,
            "transitional" => Stage::Transitional,
            "mature" => Stage::Mature,
            "plasmacytes" | "plasmacyte" => Stage::Plasmacytes,
            "memory_igd_plus" | "memory_igd+" => Stage::MemoryIgdPlus,
            "memory_igd_minus" | "memory_igd_" | "memory_igd−" => Stage::MemoryIgdMinus,
            _ => return Err(Error::input(format!("unknown B-cell stage '{s}'"))),
        };
        Ok(stage)
    }
}

/// Task label payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// Sequence-level class (binary or multiclass).
    Class(usize),
    /// One 0/1 label per antibody residue.
    Tokens(Vec<u8>),
}

impl Label {
    /// CSV rendering: classes as integers, token labels as `t:` followed by
    /// one `0`/`1` character per residue.
    pub fn to_field(&self) -> String {
        match self {
            Label::Class(c) => c.to_string(),
            Label::Tokens(t) => {
                let mut s = String::with_capacity(t.len() + 2);
                s.push_str("t:");
                s.extend(t.iter().map(|&b| if b > 0 { '1' } else { '0' }));
                s
            }
        }
    }

    pub fn from_field(s: &str) -> Result<Option<Label>> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(None);
        }
        if let Some(bits) = s.strip_prefix("t:") {
            let labels = bits
                .bytes()
                .map(|b| match b {
                    b'0' => Ok(0),
                    b'1' => Ok(1),
                    _ => Err(Error::input(format!("bad token label character '{}'", b as char))),
                })
                .collect::<Result<Vec<u8>>>()?;
            return Ok(Some(Label::Tokens(labels)));
        }
        s.parse::<usize>()
            .map(|c| Some(Label::Class(c)))
            .map_err(|_| Error::input(format!("bad label '{s}'")))
    }

    pub fn class(&self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(*c),
            Label::Tokens(_) => None,
        }
    }
}

/// Half-open CDR1/2/3 spans into the antibody sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdrSpans {
    pub cdr1: Option<(usize, usize)>,
    pub cdr2: Option<(usize, usize)>,
    pub cdr3: Option<(usize, usize)>,
}

impl CdrSpans {
    pub fn iter(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        [self.cdr1, self.cdr2, self.cdr3].into_iter().flatten().map(|(s, e)| s..e)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.iter().any(|r| r.contains(&i))
    }

    fn validate(&self, m: usize) -> Result<()> {
        let spans: Vec<Range<usize>> = self.iter().collect();
        for r in &spans {
            if r.start >= r.end || r.end > m {
                return Err(Error::input(format!("CDR span {r:?} outside antibody of length {m}")));
            }
        }
        for (i, a) in spans.iter().enumerate() {
            for b in &spans[i + 1..] {
                if a.start < b.end && b.start < a.end {
                    return Err(Error::input(format!("CDR spans {a:?} and {b:?} overlap")));
                }
            }
        }
        Ok(())
    }
}

/// One antibody with its germline ancestor and annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntibodyRecord {
    pub id: String,
    pub antibody: String,
    pub germline: String,
    pub cdr: CdrSpans,
    /// Germline indices carrying a somatic mutation.
    pub mutations: BTreeSet<usize>,
    pub label: Option<Label>,
    pub profile_id: Option<String>,
    pub stage: Option<Stage>,
    /// Clonal redundancy count, when the source provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redundancy: Option<u32>,
}

impl AntibodyRecord {
    pub fn new(id: impl Into<String>, antibody: impl Into<String>, germline: impl Into<String>) -> Self {
        AntibodyRecord {
            id: id.into(),
            antibody: antibody.into(),
            germline: germline.into(),
            cdr: CdrSpans::default(),
            mutations: BTreeSet::new(),
            label: None,
            profile_id: None,
            stage: None,
            redundancy: None,
        }
    }

    pub fn cdr3(&self) -> Option<&str> {
        self.cdr.cdr3.map(|(s, e)| &self.antibody[s..e])
    }

    /// Checks the structural invariants. Returns whether the antibody
    /// contains the unknown residue `X` (flagged, not rejected).
    pub fn validate(&self, max_len: usize) -> Result<bool> {
        let (m, n) = (self.antibody.len(), self.germline.len());
        if m == 0 || n == 0 {
            return Err(Error::input(format!("record '{}' has an empty sequence", self.id)));
        }
        if m > max_len || n > max_len {
            return Err(Error::input(format!("record '{}' exceeds max_len {max_len}", self.id)));
        }
        for (name, seq) in [("antibody", &self.antibody), ("germline", &self.germline)] {
            if let Err((pos, c)) = alphabet::validate(seq) {
                return Err(Error::InvalidSequence(format!(
                    "record '{}' {name} has '{c}' at position {pos}",
                    self.id
                )));
            }
        }
        self.cdr.validate(m)?;
        if let Some(&last) = self.mutations.iter().next_back() {
            if last >= n {
                return Err(Error::input(format!(
                    "record '{}' mutation position {last} outside germline",
                    self.id
                )));
            }
        }
        if let Some(Label::Tokens(t)) = &self.label {
            if t.len() != m {
                return Err(Error::input(format!(
                    "record '{}' has {} token labels for {m} residues",
                    self.id,
                    t.len()
                )));
            }
        }
        Ok(alphabet::has_unknown(&self.antibody))
    }

    /// V-gene key used for germline-usage statistics: the germline prefix
    /// preceding the CDR3 span.
    pub fn v_gene_key(&self) -> &str {
        match self.cdr.cdr3 {
            Some((s, _)) => &self.germline[..s.min(self.germline.len())],
            None => &self.germline,
        }
    }
}
