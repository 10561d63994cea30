//! Objective losses built on the tape.

use crate::error::{Error, Result};
use crate::model::tensor::{Tape, Var};
use crate::objectives::{MaskingPlan, MppInstance};

/// Mean negative log-likelihood over the masked set.
pub fn loss_mlm(tape: &mut Tape<'_>, logits: Var, plan: &MaskingPlan) -> Result<Var> {
    if plan.is_empty() {
        return Err(Error::input("MLM loss over an empty mask set"));
    }
    Ok(tape.cross_entropy(logits, &plan.selected, &plan.targets))
}

/// Binary cross-entropy of the ancestor logit against `label`.
pub fn loss_agp(tape: &mut Tape<'_>, score: Var, label: u8) -> Var {
    tape.bce_with_logits(score, &[0], &[f64::from(label)])
}

/// Mean germline-position BCE plus mean NLL over the masked mutation
/// positions (zero when nothing is masked).
pub fn loss_mpp(tape: &mut Tape<'_>, germline_logits: Var, residue_logits: Var, inst: &MppInstance) -> Var {
    let rows = inst.germline_rows();
    let labels: Vec<f64> = inst.germline_labels.iter().map(|&y| f64::from(y)).collect();
    let position = tape.bce_with_logits(germline_logits, &rows, &labels);
    if inst.masked_positions.is_empty() {
        return position;
    }
    let residue = tape.cross_entropy(residue_logits, &inst.masked_positions, &inst.masked_targets);
    tape.add(position, residue)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ParamStore;
    use crate::objectives::{encode_pair_strs, mpp_build, MaskAction};
    use crate::seqcore::AntibodyRecord;
    use crate::simgen::stream_rng;
    use rand::Rng;
    use std::collections::BTreeSet;

    fn plan_one(pos: usize, target: u32) -> MaskingPlan {
        MaskingPlan { selected: vec![pos], actions: vec![MaskAction::Mask], targets: vec![target], replacements: vec![1] }
    }

    #[test]
    fn uniform_logits_give_ln_vocab() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let logits = tape.constant(3, 25, vec![0.0; 75]);
        let l = loss_mlm(&mut tape, logits, &plan_one(1, 7)).unwrap();
        assert!((tape.scalar(l) - 25f64.ln()).abs() < 1e-12);
        assert!((tape.scalar(l) - 3.2189).abs() < 1e-4);
    }

    #[test]
    fn confident_correct_logits_give_near_zero() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let mut v = vec![0.0; 25];
        v[7] = 1e3;
        let logits = tape.constant(1, 25, v);
        let l = loss_mlm(&mut tape, logits, &plan_one(0, 7)).unwrap();
        assert!(tape.scalar(l) < 1e-12);
        let empty = MaskingPlan { selected: vec![], actions: vec![], targets: vec![], replacements: vec![] };
        assert!(loss_mlm(&mut tape, logits, &empty).is_err());
    }

    #[test]
    fn mlm_matches_direct_log_softmax() {
        let mut rng = stream_rng(4, 0);
        let store = ParamStore::new();
        for _ in 0..20 {
            let vals: Vec<f64> = (0..6 * 25).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let plan = MaskingPlan {
                selected: vec![0, 2, 5],
                actions: vec![MaskAction::Mask; 3],
                targets: vec![4, 11, 24],
                replacements: vec![1; 3],
            };
            let mut tape = Tape::new(&store);
            let logits = tape.constant(6, 25, vals.clone());
            let l = loss_mlm(&mut tape, logits, &plan).unwrap();
            // Oracle: -log(exp(z_t) / sum exp(z)), summed naively.
            let mut oracle = 0.0;
            for (&r, &t) in plan.selected.iter().zip(&plan.targets) {
                let row = &vals[r * 25..(r + 1) * 25];
                let denom: f64 = row.iter().map(|z| z.exp()).sum();
                oracle += -(row[t as usize].exp() / denom).ln();
            }
            oracle /= 3.0;
            assert!((tape.scalar(l) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn agp_examples() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let z = tape.constant(1, 1, vec![0.0]);
        let l = loss_agp(&mut tape, z, 1);
        assert!((tape.scalar(l) - 2f64.ln()).abs() < 1e-15);
        let z = tape.constant(1, 1, vec![10.0]);
        let l = loss_agp(&mut tape, z, 1);
        assert!(tape.scalar(l) < 1e-4);

        let mut rng = stream_rng(5, 0);
        let mut sum = 0.0;
        let mut oracle = 0.0;
        for _ in 0..50 {
            let z: f64 = rng.gen_range(-8.0..8.0);
            let y: u8 = rng.gen_range(0..2);
            let v = tape.constant(1, 1, vec![z]);
            let l = loss_agp(&mut tape, v, y);
            sum += tape.scalar(l);
            let p = 1.0 / (1.0 + (-z).exp());
            oracle += -(f64::from(y) * p.ln() + (1.0 - f64::from(y)) * (1.0 - p).ln());
        }
        assert!((sum / 50.0 - oracle / 50.0).abs() < 1e-12);
    }

    fn mpp_instance(ab: &str, g: &str, muts: &[usize]) -> MppInstance {
        let mut r = AntibodyRecord::new("r", ab, g);
        r.mutations = muts.iter().copied().collect::<BTreeSet<_>>();
        mpp_build(&r, 400).unwrap()
    }

    #[test]
    fn mpp_examples() {
        let store = ParamStore::new();
        let inst = mpp_instance("CARD", "CARD", &[]);
        let t = inst.encoding.len();
        let mut tape = Tape::new(&store);
        let gl = tape.constant(t, 1, vec![-10.0; t]);
        let rl = tape.constant(t, 25, vec![0.0; t * 25]);
        let l = loss_mpp(&mut tape, gl, rl, &inst);
        assert!(tape.scalar(l) < 1e-4);

        let inst = mpp_instance("CAWD", "CARD", &[2]);
        let t = inst.encoding.len();
        let mut gv = vec![-20.0; t];
        gv[inst.encoding.germline_index(2)] = 20.0;
        let mut rv = vec![0.0; t * 25];
        rv[inst.masked_positions[0] * 25 + inst.masked_targets[0] as usize] = 50.0;
        let gl = tape.constant(t, 1, gv);
        let rl = tape.constant(t, 25, rv);
        let l = loss_mpp(&mut tape, gl, rl, &inst);
        assert!(tape.scalar(l) < 1e-4);
    }

    #[test]
    fn mpp_matches_two_term_oracle() {
        let mut rng = stream_rng(6, 0);
        let store = ParamStore::new();
        let inst = mpp_instance("CAWDKLY", "CARDKMY", &[2, 5]);
        let t = inst.encoding.len();
        let gv: Vec<f64> = (0..t).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let rv: Vec<f64> = (0..t * 25).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let mut tape = Tape::new(&store);
        let gl = tape.constant(t, 1, gv.clone());
        let rl = tape.constant(t, 25, rv.clone());
        let l = loss_mpp(&mut tape, gl, rl, &inst);

        let n = inst.germline_labels.len() as f64;
        let mut first = 0.0;
        for (j, &y) in inst.germline_labels.iter().enumerate() {
            let z = gv[inst.encoding.germline_index(j)];
            let p = 1.0 / (1.0 + (-z).exp());
            first -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
        }
        let mut second = 0.0;
        for (&r, &tgt) in inst.masked_positions.iter().zip(&inst.masked_targets) {
            let row = &rv[r * 25..(r + 1) * 25];
            let denom: f64 = row.iter().map(|z| z.exp()).sum();
            second -= (row[tgt as usize].exp() / denom).ln();
        }
        let oracle = first / n + second / inst.masked_positions.len() as f64;
        assert!((tape.scalar(l) - oracle).abs() < 1e-12);
        let _ = encode_pair_strs;
    }
}
