//! Synthetic repertoire generator.
//!
//! Germlines are assembled from a random V/D/J segment library with random
//! junctional insertions (rendered as `X`), then somatically hypermutated.
//! Every record carries its exact ground-truth mutation set, CDR spans,
//! B-cell stage and profile label.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::seqcore::alphabet::CANONICAL;
use crate::seqcore::{AntibodyRecord, CdrSpans, Label, Stage};

/// Deterministic RNG for one logical stream of a seeded run.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct LibraryConfig {
    pub n_v: usize,
    pub n_d: usize,
    pub n_j: usize,
    pub v_len: (usize, usize),
    pub d_len: (usize, usize),
    pub j_len: (usize, usize),
}

impl Default for LibraryConfig {
    fn default() -> Self {
        LibraryConfig { n_v: 48, n_d: 24, n_j: 6, v_len: (80, 100), d_len: (5, 15), j_len: (10, 20) }
    }
}

impl LibraryConfig {
    /// Short segments whose paired encodings fit the desk model's max_len of 128.
    pub fn desk() -> Self {
        LibraryConfig { n_v: 24, n_d: 12, n_j: 4, v_len: (24, 32), d_len: (4, 8), j_len: (8, 12) }
    }

    fn validate(&self) -> Result<()> {
        if self.n_v == 0 || self.n_d == 0 || self.n_j == 0 {
            return Err(Error::config("every segment pool needs at least one segment"));
        }
        for (name, (lo, hi), min) in
            [("v_len", self.v_len, 12), ("d_len", self.d_len, 1), ("j_len", self.j_len, 3)]
        {
            if lo > hi || lo < min {
                return Err(Error::config(format!("{name} must be an increasing range with lower bound >= {min}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneLibrary {
    pub v_segments: Vec<String>,
    pub d_segments: Vec<String>,
    pub j_segments: Vec<String>,
    pub seed: u64,
}

fn random_residues(rng: &mut impl Rng, len: usize) -> String {
    (0..len).map(|_| CANONICAL[rng.gen_range(0..20)] as char).collect()
}

impl GeneLibrary {
    pub fn generate(cfg: &LibraryConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(seed, 0);
        let mut pool = |n: usize, (lo, hi): (usize, usize)| -> Vec<String> {
            (0..n)
                .map(|_| {
                    let len = rng.gen_range(lo..=hi);
                    random_residues(&mut rng, len)
                })
                .collect()
        };
        let v_segments = pool(cfg.n_v, cfg.v_len);
        let d_segments = pool(cfg.n_d, cfg.d_len);
        let j_segments = pool(cfg.n_j, cfg.j_len);
        Ok(GeneLibrary { v_segments, d_segments, j_segments, seed })
    }

    pub fn from_segments(v: Vec<String>, d: Vec<String>, j: Vec<String>) -> Result<Self> {
        if v.is_empty() || d.is_empty() || j.is_empty() {
            return Err(Error::config("every segment pool needs at least one segment"));
        }
        let all = v.iter().chain(&d).chain(&j);
        for s in all {
            if s.is_empty() || !s.bytes().all(|b| CANONICAL.contains(&b)) {
                return Err(Error::InvalidSequence(format!("segment '{s}' is not canonical residues")));
            }
        }
        if v.iter().any(|s| s.len() < 3) || j.iter().any(|s| s.len() < 3) {
            return Err(Error::config("V and J segments need at least 3 residues"));
        }
        Ok(GeneLibrary { v_segments: v, d_segments: d, j_segments: j, seed: 0 })
    }
}

/// A recombined germline and its annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recombination {
    pub germline: String,
    pub cdr: CdrSpans,
    pub v_index: usize,
    pub d_index: usize,
    pub j_index: usize,
}

/// V ++ N1 ++ D ++ N2 ++ J with `X` junctional insertions.
pub fn recombine(lib: &GeneLibrary, junction: (usize, usize), rng: &mut impl Rng) -> Recombination {
    let v_index = rng.gen_range(0..lib.v_segments.len());
    let d_index = rng.gen_range(0..lib.d_segments.len());
    let j_index = rng.gen_range(0..lib.j_segments.len());
    let n1 = rng.gen_range(junction.0..=junction.1);
    let n2 = rng.gen_range(junction.0..=junction.1);
    let (v, d, j) = (&lib.v_segments[v_index], &lib.d_segments[d_index], &lib.j_segments[j_index]);

    let mut germline = String::with_capacity(v.len() + n1 + d.len() + n2 + j.len());
    germline.push_str(v);
    germline.extend(std::iter::repeat('X').take(n1));
    germline.push_str(d);
    germline.extend(std::iter::repeat('X').take(n2));
    germline.push_str(j);

    let vl = v.len();
    let cdr3 = (vl - 3, (vl + n1 + d.len() + n2 + 3).min(germline.len()));
    // CDR1/CDR2 sit at fixed relative offsets inside V, modelled on a ~98-residue V domain.
    let at = |x: usize| x * vl / 98;
    let cdr = CdrSpans {
        cdr1: Some((at(26), at(34).max(at(26) + 1))),
        cdr2: Some((at(51), at(59).max(at(51) + 1))),
        cdr3: Some(cdr3),
    };
    Recombination { germline, cdr, v_index, d_index, j_index }
}

fn different_residue(rng: &mut impl Rng, original: u8) -> u8 {
    loop {
        let r = CANONICAL[rng.gen_range(0..20)];
        if r != original {
            return r;
        }
    }
}

/// Point substitutions at rate `rate`; `X` positions are realized with a
/// uniform residue and never reported as mutations.
pub fn hypermutate(germline: &str, rate: f64, rng: &mut impl Rng) -> (String, BTreeSet<usize>) {
    let mut mutations = BTreeSet::new();
    let antibody: Vec<u8> = germline
        .bytes()
        .enumerate()
        .map(|(i, g)| {
            if g == b'X' {
                CANONICAL[rng.gen_range(0..20)]
            } else if rng.gen_bool(rate.clamp(0.0, 1.0)) {
                mutations.insert(i);
                different_residue(rng, g)
            } else {
                g
            }
        })
        .collect();
    (String::from_utf8(antibody).unwrap(), mutations)
}

/// Hypermutation with single-residue insertions and deletions outside the
/// CDRs. CDR spans are carried over to antibody coordinates. The returned
/// mutation set covers substitutions only.
pub fn hypermutate_with_indels(
    germline: &str,
    cdr: &CdrSpans,
    rate: f64,
    indel_rate: f64,
    rng: &mut impl Rng,
) -> (String, BTreeSet<usize>, CdrSpans) {
    let g = germline.as_bytes();
    let mut out = Vec::with_capacity(g.len() + 4);
    let mut map = vec![0usize; g.len() + 1];
    let mut mutations = BTreeSet::new();
    for (i, &c) in g.iter().enumerate() {
        map[i] = out.len();
        let protected = cdr.contains(i) || i == 0;
        if !protected && c != b'X' && rng.gen_bool(indel_rate.clamp(0.0, 1.0)) {
            if rng.gen_bool(0.5) {
                continue; // deletion
            }
            out.push(CANONICAL[rng.gen_range(0..20)]);
        }
        if c == b'X' {
            out.push(CANONICAL[rng.gen_range(0..20)]);
        } else if rng.gen_bool(rate.clamp(0.0, 1.0)) {
            mutations.insert(i);
            out.push(different_residue(rng, c));
        } else {
            out.push(c);
        }
    }
    map[g.len()] = out.len();
    let shift = |span: Option<(usize, usize)>| span.map(|(s, e)| (map[s], map[e]));
    let spans = CdrSpans { cdr1: shift(cdr.cdr1), cdr2: shift(cdr.cdr2), cdr3: shift(cdr.cdr3) };
    (String::from_utf8(out).unwrap(), mutations, spans)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepertoireSpec {
    pub n_profiles: usize,
    pub sequences_per_profile: usize,
    pub shm_rate: f64,
    pub junction_insert_range: (usize, usize),
    pub stage_mix: [f64; 6],
    pub stage_multipliers: [f64; 6],
    pub positive_fraction: f64,
    pub disease_motif: Option<String>,
    pub motif_fraction: f64,
    /// Opt-in insertion/deletion rate; zero keeps mutation ground truth exact.
    pub indel_rate: f64,
    pub seed: u64,
}

impl Default for RepertoireSpec {
    fn default() -> Self {
        RepertoireSpec {
            n_profiles: 4,
            sequences_per_profile: 100,
            shm_rate: 0.05,
            junction_insert_range: (0, 3),
            stage_mix: [1.0 / 6.0; 6],
            stage_multipliers: [0.2, 0.5, 1.0, 1.5, 2.0, 2.0],
            positive_fraction: 0.5,
            disease_motif: None,
            motif_fraction: 0.0,
            indel_rate: 0.0,
            seed: 42,
        }
    }
}

/// Keys accepted in a simulation spec file.
pub const SPEC_KEYS: &[&str] = &[
    "n_profiles",
    "sequences_per_profile",
    "shm_rate",
    "junction_insert_range",
    "stage_mix",
    "stage_multipliers",
    "positive_fraction",
    "disease_motif",
    "motif_fraction",
    "indel_rate",
    "seed",
    "library_seed",
    "library",
    "n_v",
    "n_d",
    "n_j",
    "v_len",
    "d_len",
    "j_len",
];

fn six(v: Vec<f64>, key: &str) -> Result<[f64; 6]> {
    v.try_into().map_err(|_| Error::config(format!("{key} needs exactly six values")))
}

impl RepertoireSpec {
    pub fn validate(&self) -> Result<()> {
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        if !prob(self.shm_rate) || !prob(self.motif_fraction) || !prob(self.positive_fraction) || !prob(self.indel_rate) {
            return Err(Error::config("probabilities must lie in [0, 1]"));
        }
        if self.stage_mix.iter().any(|&p| !prob(p)) || (self.stage_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("stage_mix must be probabilities summing to 1"));
        }
        if self.stage_multipliers.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
            return Err(Error::config("stage multipliers must be finite and non-negative"));
        }
        if self.junction_insert_range.0 > self.junction_insert_range.1 {
            return Err(Error::config("junction_insert_range is empty"));
        }
        if let Some(m) = &self.disease_motif {
            if m.is_empty() || !m.bytes().all(|b| CANONICAL.contains(&b)) {
                return Err(Error::config("disease_motif must be canonical residues"));
            }
        }
        Ok(())
    }

    /// Reads a spec plus its library configuration from flat key-value text.
    /// `library = desk` selects the short-segment library preset.
    pub fn from_kv(kv: &KvConfig) -> Result<(RepertoireSpec, LibraryConfig, u64)> {
        kv.ensure_known(SPEC_KEYS)?;
        let d = RepertoireSpec::default();
        let spec = RepertoireSpec {
            n_profiles: kv.get_or("n_profiles", d.n_profiles)?,
            sequences_per_profile: kv.get_or("sequences_per_profile", d.sequences_per_profile)?,
            shm_rate: kv.get_or("shm_rate", d.shm_rate)?,
            junction_insert_range: kv.get_range("junction_insert_range")?.unwrap_or(d.junction_insert_range),
            stage_mix: match kv.get_list("stage_mix")? {
                Some(v) => six(v, "stage_mix")?,
                None => d.stage_mix,
            },
            stage_multipliers: match kv.get_list("stage_multipliers")? {
                Some(v) => six(v, "stage_multipliers")?,
                None => d.stage_multipliers,
            },
            positive_fraction: kv.get_or("positive_fraction", d.positive_fraction)?,
            disease_motif: kv.get_str("disease_motif").filter(|s| !s.is_empty()).map(str::to_string),
            motif_fraction: kv.get_or("motif_fraction", d.motif_fraction)?,
            indel_rate: kv.get_or("indel_rate", d.indel_rate)?,
            seed: kv.get_or("seed", d.seed)?,
        };
        spec.validate()?;
        let mut lib = match kv.get_str("library") {
            None | Some("default") => LibraryConfig::default(),
            Some("desk") => LibraryConfig::desk(),
            Some(other) => return Err(Error::config(format!("unknown library preset '{other}'"))),
        };
        lib.n_v = kv.get_or("n_v", lib.n_v)?;
        lib.n_d = kv.get_or("n_d", lib.n_d)?;
        lib.n_j = kv.get_or("n_j", lib.n_j)?;
        lib.v_len = kv.get_range("v_len")?.unwrap_or(lib.v_len);
        lib.d_len = kv.get_range("d_len")?.unwrap_or(lib.d_len);
        lib.j_len = kv.get_range("j_len")?.unwrap_or(lib.j_len);
        lib.validate()?;
        let library_seed = kv.get_or("library_seed", spec.seed)?;
        Ok((spec, lib, library_seed))
    }

    pub fn n_positive(&self) -> usize {
        (self.positive_fraction * self.n_profiles as f64).round() as usize
    }
}

fn sample_stage(mix: &[f64; 6], rng: &mut impl Rng) -> Stage {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in mix.iter().enumerate() {
        acc += p;
        if u < acc {
            return Stage::ALL[i];
        }
    }
    // Rounding slack: fall back to the last stage with mass.
    let last = mix.iter().rposition(|&p| p > 0.0).unwrap_or(5);
    Stage::ALL[last]
}

/// Generates `n_profiles * sequences_per_profile` records.
///
/// Each record draws from its own RNG stream keyed by its index, so the
/// output does not depend on the order records are produced in.
pub fn generate_repertoire(spec: &RepertoireSpec, lib: &GeneLibrary) -> Result<Vec<AntibodyRecord>> {
    spec.validate()?;
    let n = spec.sequences_per_profile;
    let profile_stream = |p: usize| u64::MAX - p as u64;

    let mut order: Vec<usize> = (0..spec.n_profiles).collect();
    order.shuffle(&mut stream_rng(spec.seed, u64::MAX - spec.n_profiles as u64 - 1));
    let mut positive = vec![false; spec.n_profiles];
    for &p in order.iter().take(spec.n_positive()) {
        positive[p] = true;
    }

    // Exactly round(motif_fraction * n) carriers per positive profile.
    let carriers: Vec<Vec<bool>> = (0..spec.n_profiles)
        .map(|p| {
            let mut flags = vec![false; n];
            if positive[p] && spec.disease_motif.is_some() {
                let k = (spec.motif_fraction * n as f64).round() as usize;
                let mut rng = stream_rng(spec.seed, profile_stream(p));
                for i in rand::seq::index::sample(&mut rng, n, k.min(n)) {
                    flags[i] = true;
                }
            }
            flags
        })
        .collect();

    let width = spec.n_profiles.max(1).to_string().len().max(3);
    let swidth = n.max(1).to_string().len().max(5);
    (0..spec.n_profiles * n)
        .into_par_iter()
        .map(|idx| {
            let (p, s) = (idx / n, idx % n);
            let mut rng = stream_rng(spec.seed, idx as u64);
            let rec = recombine(lib, spec.junction_insert_range, &mut rng);
            let stage = sample_stage(&spec.stage_mix, &mut rng);
            let rate = (spec.shm_rate * spec.stage_multipliers[stage.index()]).min(1.0);
            let (antibody, mutations, cdr) = if spec.indel_rate > 0.0 {
                hypermutate_with_indels(&rec.germline, &rec.cdr, rate, spec.indel_rate, &mut rng)
            } else {
                let (a, m) = hypermutate(&rec.germline, rate, &mut rng);
                (a, m, rec.cdr.clone())
            };
            let mut record = AntibodyRecord::new(format!("p{p:0width$}-s{s:0swidth$}"), antibody, rec.germline);
            record.cdr = cdr;
            record.mutations = mutations;
            record.stage = Some(stage);
            record.profile_id = Some(format!("p{p:0width$}"));
            record.label = Some(Label::Class(usize::from(positive[p])));
            if carriers[p][s] {
                splice_motif(&mut record, spec.disease_motif.as_deref().unwrap(), &mut rng)?;
            }
            Ok(record)
        })
        .collect()
}

/// Overwrites a random window of the CDR3 with `motif` and refreshes the
/// mutation set over that window.
pub fn splice_motif(record: &mut AntibodyRecord, motif: &str, rng: &mut impl Rng) -> Result<()> {
    let (s, e) = record
        .cdr
        .cdr3
        .ok_or_else(|| Error::input(format!("record '{}' has no CDR3", record.id)))?;
    if motif.len() > e - s {
        return Err(Error::input(format!(
            "motif of length {} longer than CDR3 span of {} in record '{}'",
            motif.len(),
            e - s,
            record.id
        )));
    }
    let start = rng.gen_range(s..=e - motif.len());
    let mut ab = std::mem::take(&mut record.antibody).into_bytes();
    ab[start..start + motif.len()].copy_from_slice(motif.as_bytes());
    let same_coords = ab.len() == record.germline.len();
    if same_coords {
        let g = record.germline.as_bytes();
        for p in start..start + motif.len() {
            if g[p] != b'X' && ab[p] != g[p] {
                record.mutations.insert(p);
            } else {
                record.mutations.remove(&p);
            }
        }
    }
    record.antibody = String::from_utf8(ab).unwrap();
    if !same_coords {
        record.mutations = crate::seqcore::derive_mutations(record.antibody.as_bytes(), record.germline.as_bytes());
    }
    Ok(())
}
