//! Finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::model::loss::{loss_agp, loss_mlm, loss_mpp};
use crate::model::params::{Grads, ParamStore};
use crate::model::tensor::Tape;
use crate::model::transformer::{ModelConfig, Transformer};
use crate::objectives::{encode_pair_strs, mlm_plan, mpp_build, MaskScope};
use crate::seqcore::AntibodyRecord;
use crate::simgen::stream_rng;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub objective: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

/// Relative error with a small floor on the denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Compares `loss`'s autograd gradient with central differences on up to
/// `samples` scalars picked at random among those the loss depends on.
/// `loss` must fill the gradient buffer when one is supplied.
pub fn gradient_check<F>(params: &ParamStore, loss: F, samples: usize, h: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, Option<&mut Grads>) -> Result<f64>,
{
    let mut grads = params.zeros_like();
    loss(params, Some(&mut grads))?;
    let mut pool: Vec<(usize, usize)> = Vec::new();
    for id in params.ids() {
        for (k, g) in grads.data[id].iter().enumerate() {
            if *g != 0.0 {
                pool.push((id, k));
            }
        }
    }
    if pool.len() < samples {
        // Sparse gradient: fall back to every scalar.
        pool = params.ids().flat_map(|id| (0..params.get(id).len()).map(move |k| (id, k))).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, pool.len(), samples.min(pool.len()));
    let mut work = params.clone();
    let mut worst = (0.0, String::new());
    for i in picks.iter() {
        let (id, k) = pool[i];
        let orig = work.get(id)[k];
        work.get_mut(id)[k] = orig + h;
        let up = loss(&work, None)?;
        work.get_mut(id)[k] = orig - h;
        let down = loss(&work, None)?;
        work.get_mut(id)[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(grads.data[id][k], numeric);
        if err > worst.0 || worst.1.is_empty() {
            worst = (err, format!("{}[{k}]", params.name(id)));
        }
    }
    Ok(GradCheckReport { objective: String::new(), checked: picks.len(), max_rel_error: worst.0, worst: worst.1 })
}

/// Runs the check for the three pretraining losses on a model built from
/// `config`, using a small fixed antibody/germline pair.
pub fn check_pretraining_heads(config: &ModelConfig, samples: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut model = Transformer::new(config.clone())?;
    // Move off the symmetric initial point so every head carries gradient.
    let mut rng = stream_rng(seed, 1);
    for id in model.params.ids() {
        for x in model.params.get_mut(id) {
            *x += 0.1 * crate::model::params::standard_normal(&mut rng);
        }
    }
    let antibody = "EVQLVQPGRSLRLS";
    let germline = "EVQLVKPGGSLRLS";
    let mut record = AntibodyRecord::new("gc", antibody, germline);
    record.mutations = crate::seqcore::derive_mutations(antibody.as_bytes(), germline.as_bytes());
    let enc = encode_pair_strs(antibody, germline, config.max_len)?;
    let plan = mlm_plan(&enc, 0.15, MaskScope::Both, &mut stream_rng(seed, 2))?;
    let masked = crate::objectives::PairedEncoding { token_ids: plan.apply(&enc.token_ids), ..enc.clone() };
    let mpp = mpp_build(&record, config.max_len)?;
    let (m, p) = (&model, &mpp);

    let run = |params: &ParamStore, grads: Option<&mut Grads>, which: usize| -> Result<f64> {
        let mut tape = Tape::new(params);
        let mut r = stream_rng(0, 0);
        let (l, root) = match which {
            0 => {
                let hid = m.forward(&mut tape, &masked.to_input(), false, &mut r)?;
                let logits = m.mlm_logits(&mut tape, &hid);
                let l = loss_mlm(&mut tape, logits, &plan)?;
                (tape.scalar(l), l)
            }
            1 => {
                let hid = m.forward(&mut tape, &enc.to_input(), false, &mut r)?;
                let z = m.ancestor_logit(&mut tape, &hid);
                let l = loss_agp(&mut tape, z, 1);
                (tape.scalar(l), l)
            }
            _ => {
                let hid = m.forward(&mut tape, &p.encoding.to_input(), false, &mut r)?;
                let gl = m.position_logits(&mut tape, &hid);
                let rl = m.mlm_logits(&mut tape, &hid);
                let l = loss_mpp(&mut tape, gl, rl, p);
                (tape.scalar(l), l)
            }
        };
        if let Some(g) = grads {
            tape.backward(root, g);
        }
        Ok(l)
    };
    let mut out = Vec::new();
    for (which, name) in ["mlm", "agp", "mpp"].iter().enumerate() {
        let mut rep = gradient_check(&model.params, |ps, g| run(ps, g, which), samples, DEFAULT_STEP, seed + which as u64)?;
        rep.objective = name.to_string();
        out.push(rep);
    }
    Ok(out)
}
