use std::collections::{BTreeMap, BTreeSet};

use abevo::corpus::{cluster_filter, dedup, read_csv, shuffle_and_chunk, write_csv};
use abevo::eval::cv::kfold_keys;
use abevo::eval::metrics::auc;
use abevo::eval::ranking::trimmed_mean;
use abevo::eval::special::{chi2_sf, gamma_p, t_two_sided};
use abevo::objectives::{encode_pair_strs, mlm_plan, MaskScope};
use abevo::seqcore::alphabet::Alphabet;
use abevo::seqcore::{edit_distance, sequence_identity};
use abevo::simgen::stream_rng;
use abevo::{AntibodyRecord, Label};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use statrs::function::gamma::gamma_lr;

fn seq(alphabet: &'static str, len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = String> {
    proptest::collection::vec(proptest::sample::select(alphabet.as_bytes().to_vec()), len)
        .prop_map(|v| String::from_utf8(v).unwrap())
}

fn records(max: usize) -> impl Strategy<Value = Vec<AntibodyRecord>> {
    proptest::collection::vec((seq("ACD", 6..=10), 0..50usize, 0..2usize), 1..=max).prop_map(|v| {
        v.into_iter()
            .map(|(s, id, label)| {
                let mut r = AntibodyRecord::new(format!("r{id:02}"), s.clone(), s);
                r.cdr.cdr3 = Some((2, 5));
                r.label = Some(Label::Class(label));
                r
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn edit_distance_is_a_metric(a in seq("ACDE", 0..=12), b in seq("ACDE", 0..=12), c in seq("ACDE", 0..=12)) {
        let (ab, ba) = (edit_distance(a.as_bytes(), b.as_bytes()), edit_distance(b.as_bytes(), a.as_bytes()));
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(ab == 0, a == b);
        prop_assert!(ab <= a.len().max(b.len()));
        prop_assert!(ab >= a.len().abs_diff(b.len()));
        let ac = edit_distance(a.as_bytes(), c.as_bytes());
        let cb = edit_distance(c.as_bytes(), b.as_bytes());
        prop_assert!(ab <= ac + cb);
    }

    #[test]
    fn identity_is_bounded(a in seq("ACDE", 1..=12), b in seq("ACDE", 0..=12)) {
        let id = sequence_identity(a.as_bytes(), b.as_bytes()).unwrap();
        prop_assert!((0.0..=1.0).contains(&id));
        prop_assert_eq!(id == 1.0, a == b);
    }

    #[test]
    fn dedup_is_idempotent(recs in records(40)) {
        let once = dedup(recs.clone());
        let seqs: BTreeSet<&str> = once.iter().map(|r| r.antibody.as_str()).collect();
        prop_assert_eq!(seqs.len(), once.len());
        let all: BTreeSet<&str> = recs.iter().map(|r| r.antibody.as_str()).collect();
        prop_assert_eq!(&seqs, &all);
        prop_assert_eq!(dedup(once.clone()), once);
    }

    #[test]
    fn chunks_partition_the_corpus(recs in records(60), size in 1usize..20, seed in any::<u64>()) {
        let n = recs.len();
        let c = shuffle_and_chunk(recs.clone(), size, seed).unwrap();
        prop_assert_eq!(c.chunks.len(), n.div_ceil(size));
        for ch in &c.chunks[..c.chunks.len() - 1] {
            prop_assert_eq!(ch.records.len(), size);
        }
        let mut got: Vec<String> = c.chunks.iter().flat_map(|ch| ch.records.iter().map(|r| format!("{}{}", r.id, r.antibody))).collect();
        let mut want: Vec<String> = recs.iter().map(|r| format!("{}{}", r.id, r.antibody)).collect();
        got.sort();
        want.sort();
        prop_assert_eq!(got, want);
        prop_assert_eq!(c.train().count() + c.validation().len(), n);
    }

    #[test]
    fn cluster_filter_survivors_are_distinct_and_stable(recs in records(60), t in 0.3f64..=1.0) {
        let kept = cluster_filter(recs.clone(), t).unwrap();
        // Input order preserved.
        let mut it = recs.iter();
        for k in &kept {
            prop_assert!(it.any(|r| r == k));
        }
        // Within a CDR3 group, each survivor is below threshold against every
        // survivor visited before it.
        let mut groups: BTreeMap<&str, Vec<&AntibodyRecord>> = BTreeMap::new();
        for r in &kept {
            groups.entry(r.cdr3().unwrap()).or_default().push(r);
        }
        for g in groups.values_mut() {
            g.sort_by(|a, b| a.id.cmp(&b.id));
            for i in 0..g.len() {
                for j in 0..i {
                    prop_assert!(sequence_identity(g[i].antibody.as_bytes(), g[j].antibody.as_bytes()).unwrap() < t);
                }
            }
        }
        prop_assert_eq!(cluster_filter(kept.clone(), t).unwrap(), kept);
    }

    #[test]
    fn auc_matches_pair_counting(pairs in proptest::collection::vec((0..8u8, any::<bool>()), 2..40)) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 8.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let (p, n) = (labels.iter().filter(|&&l| l).count(), labels.iter().filter(|&&l| !l).count());
        prop_assume!(p > 0 && n > 0);
        let mut num = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        prop_assert_eq!(auc(&scores, &labels).unwrap(), num / (p * n) as f64);
    }

    #[test]
    fn trimmed_mean_invariants(
        v in proptest::collection::vec(-100.0f64..100.0, 1..60),
        frac in 0.0f64..0.49,
        shift in 0.0f64..10.0,
        seed in any::<u64>(),
    ) {
        let m = trimmed_mean(&v, frac).unwrap();
        let mut shuffled = v.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut stream_rng(seed, 0));
        prop_assert!((trimmed_mean(&shuffled, frac).unwrap() - m).abs() < 1e-9);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
        let up: Vec<f64> = v.iter().map(|x| x + shift).collect();
        prop_assert!(trimmed_mean(&up, frac).unwrap() >= m - 1e-9);
    }

    #[test]
    fn special_functions_match_statrs(x in 0.01f64..60.0, dof in 1u32..30, t in -8.0f64..8.0) {
        let k = dof as f64;
        let chi = ChiSquared::new(k).unwrap();
        prop_assert!((chi2_sf(x, k).unwrap() - chi.sf(x)).abs() < 1e-10);
        prop_assert!((gamma_p(k / 2.0, x).unwrap() - gamma_lr(k / 2.0, x)).abs() < 1e-10);
        let st = StudentsT::new(0.0, 1.0, k).unwrap();
        prop_assert!((t_two_sided(t, k).unwrap() - 2.0 * st.sf(t.abs())).abs() < 1e-10);
    }

    #[test]
    fn masking_plan_invariants(a in seq("ACDEFGHIKLMNPQRSTVWY", 1..=30), g in seq("ACDEFGHIKLMNPQRSTVWY", 1..=30), ratio in 0.0f64..=1.0, seed in any::<u64>()) {
        let enc = encode_pair_strs(&a, &g, 64).unwrap();
        let plan = mlm_plan(&enc, ratio, MaskScope::Both, &mut stream_rng(seed, 0)).unwrap();
        let maskable = enc.token_ids.iter().filter(|&&t| !Alphabet.is_special(t)).count();
        prop_assert_eq!(plan.len(), (ratio * maskable as f64).round() as usize);
        prop_assert!(plan.selected.windows(2).all(|w| w[0] < w[1]));
        for (&i, &t) in plan.selected.iter().zip(&plan.targets) {
            prop_assert!(!Alphabet.is_special(enc.token_ids[i]));
            prop_assert_eq!(enc.token_ids[i], t);
        }
        prop_assert_eq!(plan.restore(&plan.apply(&enc.token_ids)), enc.token_ids.clone());
    }

    #[test]
    fn kfold_partitions_groups(keys in proptest::collection::vec(0..12u8, 2..80), k in 2usize..6, seed in any::<u64>()) {
        let names: Vec<String> = keys.iter().map(|k| format!("g{k}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let groups: BTreeSet<&str> = refs.iter().copied().collect();
        prop_assume!(groups.len() >= k);
        let folds = kfold_keys(&refs, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = vec![0usize; refs.len()];
        for f in &folds {
            prop_assert!(!f.valid.is_empty());
            let tr: BTreeSet<&str> = f.train.iter().map(|&i| refs[i]).collect();
            prop_assert!(f.valid.iter().all(|&i| !tr.contains(refs[i])));
            prop_assert_eq!(f.train.len() + f.valid.len(), refs.len());
            f.valid.iter().for_each(|&i| seen[i] += 1);
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn csv_round_trip(recs in records(20)) {
        let mut buf = Vec::new();
        write_csv(&mut buf, &recs).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), recs);
    }
}
