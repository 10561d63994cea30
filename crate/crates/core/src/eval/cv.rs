//! Grouped k-fold splits.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqcore::AntibodyRecord;
use crate::simgen::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    /// Identical antibody strings share a group.
    BySequence,
    ByProfile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

pub fn group_key(r: &AntibodyRecord, grouping: Grouping) -> Result<&str> {
    match grouping {
        Grouping::BySequence => Ok(&r.antibody),
        Grouping::ByProfile => r
            .profile_id
            .as_deref()
            .ok_or_else(|| Error::input(format!("record '{}' has no profile id", r.id))),
    }
}

/// Splits group keys into `k` folds of near-equal group counts. Groups are
/// shuffled with `seed`; no group straddles two folds.
pub fn kfold_keys(keys: &[&str], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::config("k-fold needs k >= 2"));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, &key) in keys.iter().enumerate() {
        groups.entry(key).or_default().push(i);
    }
    if groups.len() < k {
        return Err(Error::input(format!("{} groups cannot fill {k} folds", groups.len())));
    }
    let mut order: Vec<Vec<usize>> = groups.into_values().collect();
    order.shuffle(&mut stream_rng(seed, 0x6b66_6f6c_64));
    let g = order.len();
    let mut fold_of = vec![0usize; keys.len()];
    for (gi, members) in order.iter().enumerate() {
        let f = gi * k / g;
        for &i in members {
            fold_of[i] = f;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (valid, train): (Vec<usize>, Vec<usize>) = (0..keys.len()).partition(|&i| fold_of[i] == f);
            Fold { train, valid }
        })
        .collect())
}

pub fn kfold(records: &[AntibodyRecord], k: usize, grouping: Grouping, seed: u64) -> Result<Vec<Fold>> {
    let keys = records.iter().map(|r| group_key(r, grouping)).collect::<Result<Vec<_>>>()?;
    kfold_keys(&keys, k, seed)
}
