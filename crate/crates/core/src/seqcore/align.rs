//! Edit distance, identity and global alignment.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

pub const GAP: u8 = b'-';

pub const MATCH_SCORE: i32 = 1;
pub const MISMATCH_SCORE: i32 = -1;
pub const GAP_SCORE: i32 = -2;

/// Levenshtein distance with unit costs.
pub fn edit_distance(s: &[u8], t: &[u8]) -> usize {
    if s.len() < t.len() {
        return edit_distance(t, s);
    }
    if t.is_empty() {
        return s.len();
    }
    let mut prev: Vec<usize> = (0..=t.len()).collect();
    let mut cur = vec![0usize; t.len() + 1];
    for (i, &a) in s.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &b) in t.iter().enumerate() {
            let sub = prev[j] + usize::from(a != b);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[t.len()]
}

/// `1 - edit_distance / len(query)`, clamped at zero.
///
/// The query (predicted) sequence provides the denominator.
pub fn sequence_identity(query: &[u8], target: &[u8]) -> Result<f64> {
    if query.is_empty() {
        return Err(Error::input("sequence identity of an empty query"));
    }
    let d = edit_distance(query, target);
    if d >= query.len() {
        return Ok(0.0);
    }
    Ok((query.len() - d) as f64 / query.len() as f64)
}

/// Two gapped rows of equal length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub a: Vec<u8>,
    pub g: Vec<u8>,
    pub score: i32,
}

impl Alignment {
    pub fn a_str(&self) -> &str {
        std::str::from_utf8(&self.a).unwrap()
    }

    pub fn g_str(&self) -> &str {
        std::str::from_utf8(&self.g).unwrap()
    }

    /// For each ungapped position of `g`, the aligned index into `a` (if any).
    pub fn g_to_a(&self) -> Vec<Option<usize>> {
        let mut out = Vec::new();
        let (mut ia, mut ig) = (0usize, 0usize);
        for (&ca, &cg) in self.a.iter().zip(&self.g) {
            if cg != GAP {
                out.push((ca != GAP).then_some(ia));
                ig += 1;
            }
            if ca != GAP {
                ia += 1;
            }
        }
        debug_assert_eq!(out.len(), ig);
        out
    }
}

#[inline]
fn pair_score(x: u8, y: u8) -> i32 {
    if x == y {
        MATCH_SCORE
    } else {
        MISMATCH_SCORE
    }
}

/// Needleman-Wunsch global alignment of `a` against `g`.
///
/// Traceback prefers the diagonal, then up (gap in `g`), then left (gap in `a`).
pub fn global_align(a: &[u8], g: &[u8]) -> Alignment {
    let (n, m) = (a.len(), g.len());
    let w = m + 1;
    let mut dp = vec![0i32; (n + 1) * w];
    for i in 1..=n {
        dp[i * w] = i as i32 * GAP_SCORE;
    }
    for j in 1..=m {
        dp[j] = j as i32 * GAP_SCORE;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = dp[(i - 1) * w + j - 1] + pair_score(a[i - 1], g[j - 1]);
            let up = dp[(i - 1) * w + j] + GAP_SCORE;
            let left = dp[i * w + j - 1] + GAP_SCORE;
            dp[i * w + j] = diag.max(up).max(left);
        }
    }

    let mut ra = Vec::with_capacity(n + m);
    let mut rg = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 && here == dp[(i - 1) * w + j - 1] + pair_score(a[i - 1], g[j - 1]) {
            ra.push(a[i - 1]);
            rg.push(g[j - 1]);
            i -= 1;
            j -= 1;
        } else if i > 0 && here == dp[(i - 1) * w + j] + GAP_SCORE {
            ra.push(a[i - 1]);
            rg.push(GAP);
            i -= 1;
        } else {
            ra.push(GAP);
            rg.push(g[j - 1]);
            j -= 1;
        }
    }
    ra.reverse();
    rg.reverse();
    Alignment { a: ra, g: rg, score: dp[n * w + m] }
}

/// Germline indices where the aligned antibody residue differs from a known
/// (non-`X`) germline residue. Columns with a gap on either side are skipped.
pub fn derive_mutations(a: &[u8], g: &[u8]) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    if a.is_empty() || g.is_empty() {
        return out;
    }
    let aln = global_align(a, g);
    let mut gi = 0usize;
    for (&ca, &cg) in aln.a.iter().zip(&aln.g) {
        if cg == GAP {
            continue;
        }
        if ca != GAP && cg != b'X' && ca != cg {
            out.insert(gi);
        }
        gi += 1;
    }
    out
}

/// Map from germline index to antibody index. Equal-length pairs are taken
/// positionwise; otherwise the global alignment decides.
pub fn germline_to_antibody(a: &[u8], g: &[u8]) -> Vec<Option<usize>> {
    if a.len() == g.len() {
        (0..g.len()).map(Some).collect()
    } else {
        global_align(a, g).g_to_a()
    }
}
