//! Corpus construction: deduplication, CDR3-keyed identity filtering,
//! shuffled chunking and the CSV / JSONL record formats.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqcore::{derive_mutations, sequence_identity, AntibodyRecord, CdrSpans, Label, Stage};
use crate::simgen::stream_rng;

pub const DEFAULT_CHUNK_SIZE: usize = 1000;
pub const DEFAULT_IDENTITY: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkRole {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusChunk {
    pub index: usize,
    pub records: Vec<AntibodyRecord>,
    pub role: ChunkRole,
}

/// Chunks plus any warnings raised while building them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedCorpus {
    pub chunks: Vec<CorpusChunk>,
    pub warnings: Vec<String>,
}

impl ChunkedCorpus {
    pub fn train(&self) -> impl Iterator<Item = &AntibodyRecord> {
        self.chunks.iter().filter(|c| c.role == ChunkRole::Train).flat_map(|c| &c.records)
    }

    pub fn validation(&self) -> &[AntibodyRecord] {
        self.chunks.last().map(|c| c.records.as_slice()).unwrap_or(&[])
    }
}

/// Keeps the first occurrence of every antibody string, in input order.
pub fn dedup(records: Vec<AntibodyRecord>) -> Vec<AntibodyRecord> {
    let mut seen = HashSet::with_capacity(records.len());
    records.into_iter().filter(|r| seen.insert(r.antibody.clone())).collect()
}

/// Groups records by exact CDR3 string and, within each group, keeps a
/// record only if its identity to every representative kept so far (visited
/// in id order) is below `threshold`. Survivors are returned in input order.
pub fn cluster_filter(records: Vec<AntibodyRecord>, threshold: f64) -> Result<Vec<AntibodyRecord>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::config(format!("identity threshold {threshold} outside [0, 1]")));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let key = r.cdr3().ok_or_else(|| Error::input(format!("record '{}' has no CDR3 span", r.id)))?;
        groups.entry(key).or_default().push(i);
    }
    let mut keep = vec![false; records.len()];
    for members in groups.values_mut() {
        members.sort_by(|&a, &b| records[a].id.cmp(&records[b].id).then(a.cmp(&b)));
        let mut reps: Vec<usize> = Vec::new();
        for &i in members.iter() {
            let q = records[i].antibody.as_bytes();
            let mut redundant = false;
            for &r in &reps {
                if sequence_identity(q, records[r].antibody.as_bytes())? >= threshold {
                    redundant = true;
                    break;
                }
            }
            if !redundant {
                reps.push(i);
                keep[i] = true;
            }
        }
    }
    Ok(records.into_iter().zip(keep).filter_map(|(r, k)| k.then_some(r)).collect())
}

/// Fisher-Yates shuffle followed by fixed-size chunking; the last chunk is
/// the validation set.
pub fn shuffle_and_chunk(mut records: Vec<AntibodyRecord>, chunk_size: usize, seed: u64) -> Result<ChunkedCorpus> {
    if chunk_size == 0 {
        return Err(Error::config("chunk_size must be at least 1"));
    }
    if records.is_empty() {
        return Err(Error::input("cannot chunk an empty corpus"));
    }
    let mut rng = stream_rng(seed, 0x6368_756e_6b);
    records.shuffle(&mut rng);
    let mut chunks = Vec::new();
    let mut rest = records.into_iter().peekable();
    while rest.peek().is_some() {
        let records: Vec<AntibodyRecord> = rest.by_ref().take(chunk_size).collect();
        chunks.push(CorpusChunk { index: chunks.len(), records, role: ChunkRole::Train });
    }
    chunks.last_mut().expect("nonempty").role = ChunkRole::Validation;
    let mut warnings = Vec::new();
    if chunks.len() == 1 {
        warnings.push(format!(
            "chunk_size {chunk_size} covers the whole corpus: the training set is empty"
        ));
    }
    Ok(ChunkedCorpus { chunks, warnings })
}

/// Flat CSV row. `mutations` and `redundancy` are optional trailing columns.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    id: String,
    antibody: String,
    germline: String,
    cdr1_start: Option<usize>,
    cdr1_end: Option<usize>,
    cdr2_start: Option<usize>,
    cdr2_end: Option<usize>,
    cdr3_start: Option<usize>,
    cdr3_end: Option<usize>,
    profile_id: Option<String>,
    stage: Option<String>,
    label: Option<String>,
    #[serde(default)]
    mutations: Option<String>,
    #[serde(default)]
    redundancy: Option<u32>,
}

/// One JSONL chunk line: the CSV fields plus the sorted mutation indices.
#[derive(Debug, Serialize, Deserialize)]
struct JsonRow {
    id: String,
    antibody: String,
    germline: String,
    cdr1_start: Option<usize>,
    cdr1_end: Option<usize>,
    cdr2_start: Option<usize>,
    cdr2_end: Option<usize>,
    cdr3_start: Option<usize>,
    cdr3_end: Option<usize>,
    profile_id: Option<String>,
    stage: Option<String>,
    label: Option<String>,
    mutations: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    redundancy: Option<u32>,
}

fn span(s: Option<usize>, e: Option<usize>, id: &str) -> Result<Option<(usize, usize)>> {
    match (s, e) {
        (Some(s), Some(e)) => Ok(Some((s, e))),
        (None, None) => Ok(None),
        _ => Err(Error::input(format!("record '{id}' has a half-specified CDR span"))),
    }
}

fn split_span(s: Option<(usize, usize)>) -> (Option<usize>, Option<usize>) {
    (s.map(|x| x.0), s.map(|x| x.1))
}

fn nonempty(s: Option<String>) -> Option<String> {
    s.filter(|v| !v.trim().is_empty())
}

fn parse_mutations(s: &str, id: &str) -> Result<Vec<usize>> {
    s.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::input(format!("record '{id}': bad mutation index '{t}'"))))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn build_record(
    id: String,
    antibody: String,
    germline: String,
    spans: [Option<usize>; 6],
    profile_id: Option<String>,
    stage: Option<String>,
    label: Option<String>,
    mutations: Option<Vec<usize>>,
    redundancy: Option<u32>,
) -> Result<AntibodyRecord> {
    let mut r = AntibodyRecord::new(id, antibody.trim().to_ascii_uppercase(), germline.trim().to_ascii_uppercase());
    r.cdr = CdrSpans {
        cdr1: span(spans[0], spans[1], &r.id)?,
        cdr2: span(spans[2], spans[3], &r.id)?,
        cdr3: span(spans[4], spans[5], &r.id)?,
    };
    r.profile_id = nonempty(profile_id);
    r.stage = nonempty(stage).map(|s| s.parse::<Stage>()).transpose()?;
    r.label = match nonempty(label) {
        Some(l) => Label::from_field(&l)?,
        None => None,
    };
    r.mutations = match mutations {
        Some(m) => m.into_iter().collect(),
        None => derive_mutations(r.antibody.as_bytes(), r.germline.as_bytes()),
    };
    r.redundancy = redundancy;
    r.validate(usize::MAX)?;
    Ok(r)
}

fn mutation_field(r: &AntibodyRecord) -> String {
    r.mutations.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";")
}

/// Reads the corpus CSV. When the optional `mutations` column is absent the
/// mutation set is derived by aligning antibody and germline.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<AntibodyRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::Fields).from_reader(reader);
    let has_mutations = rdr.headers()?.iter().any(|h| h == "mutations");
    let mut out = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row?;
        let muts = if has_mutations {
            Some(parse_mutations(row.mutations.as_deref().unwrap_or(""), &row.id)?)
        } else {
            None
        };
        out.push(build_record(
            row.id,
            row.antibody,
            row.germline,
            [row.cdr1_start, row.cdr1_end, row.cdr2_start, row.cdr2_end, row.cdr3_start, row.cdr3_end],
            row.profile_id,
            row.stage,
            row.label,
            muts,
            row.redundancy,
        )?);
    }
    Ok(out)
}

pub fn write_csv<W: Write>(writer: W, records: &[AntibodyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        let (a, b) = split_span(r.cdr.cdr1);
        let (c, d) = split_span(r.cdr.cdr2);
        let (e, f) = split_span(r.cdr.cdr3);
        w.serialize(CsvRow {
            id: r.id.clone(),
            antibody: r.antibody.clone(),
            germline: r.germline.clone(),
            cdr1_start: a,
            cdr1_end: b,
            cdr2_start: c,
            cdr2_end: d,
            cdr3_start: e,
            cdr3_end: f,
            profile_id: r.profile_id.clone(),
            stage: r.stage.map(|s| s.name().to_string()),
            label: r.label.as_ref().map(Label::to_field),
            mutations: Some(mutation_field(r)),
            redundancy: r.redundancy,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn to_json_row(r: &AntibodyRecord) -> JsonRow {
    let (a, b) = split_span(r.cdr.cdr1);
    let (c, d) = split_span(r.cdr.cdr2);
    let (e, f) = split_span(r.cdr.cdr3);
    JsonRow {
        id: r.id.clone(),
        antibody: r.antibody.clone(),
        germline: r.germline.clone(),
        cdr1_start: a,
        cdr1_end: b,
        cdr2_start: c,
        cdr2_end: d,
        cdr3_start: e,
        cdr3_end: f,
        profile_id: r.profile_id.clone(),
        stage: r.stage.map(|s| s.name().to_string()),
        label: r.label.as_ref().map(Label::to_field),
        mutations: r.mutations.iter().copied().collect(),
        redundancy: r.redundancy,
    }
}

pub fn write_jsonl<W: Write>(mut writer: W, records: &[AntibodyRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, &to_json_row(r))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_jsonl<R: Read>(reader: R) -> Result<Vec<AntibodyRecord>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow =
            serde_json::from_str(&line).map_err(|e| Error::input(format!("JSONL line {}: {e}", n + 1)))?;
        out.push(build_record(
            row.id,
            row.antibody,
            row.germline,
            [row.cdr1_start, row.cdr1_end, row.cdr2_start, row.cdr2_end, row.cdr3_start, row.cdr3_end],
            row.profile_id,
            row.stage,
            row.label,
            Some(row.mutations),
            row.redundancy,
        )?);
    }
    Ok(out)
}

/// Loads records from a `.csv` or `.jsonl` file.
pub fn load_records(path: &Path) -> Result<Vec<AntibodyRecord>> {
    let file = std::fs::File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => read_jsonl(file),
        _ => read_csv(file),
    }
}

pub fn save_csv(path: &Path, records: &[AntibodyRecord]) -> Result<()> {
    write_csv(std::io::BufWriter::new(std::fs::File::create(path)?), records)
}

/// Writes `chunk_NNNN.jsonl` files into `dir`; returns their names.
pub fn write_chunks(dir: &Path, corpus: &ChunkedCorpus) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for c in &corpus.chunks {
        let name = match c.role {
            ChunkRole::Train => format!("chunk_{:04}.jsonl", c.index),
            ChunkRole::Validation => format!("chunk_{:04}.validation.jsonl", c.index),
        };
        write_jsonl(std::io::BufWriter::new(std::fs::File::create(dir.join(&name))?), &c.records)?;
        names.push(name);
    }
    Ok(names)
}

/// Reads a chunk directory written by [`write_chunks`].
pub fn read_chunks(dir: &Path) -> Result<ChunkedCorpus> {
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("chunk_") && n.ends_with(".jsonl"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::input(format!("no chunk files in {}", dir.display())));
    }
    let mut chunks = Vec::new();
    for (index, name) in names.iter().enumerate() {
        let role = if name.ends_with(".validation.jsonl") { ChunkRole::Validation } else { ChunkRole::Train };
        let records = read_jsonl(std::fs::File::open(dir.join(name))?)?;
        chunks.push(CorpusChunk { index, records, role });
    }
    if chunks.iter().filter(|c| c.role == ChunkRole::Validation).count() != 1
        || chunks.last().map(|c| c.role) != Some(ChunkRole::Validation)
    {
        return Err(Error::input("chunk directory must end with exactly one validation chunk"));
    }
    Ok(ChunkedCorpus { chunks, warnings: Vec::new() })
}
