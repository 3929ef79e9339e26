use gala_core::synth::build_splits;
use gala_train::model::{classify_on, featurize_on, GraphBatch, ModelConfig, ModelParams, Pass};
use gala_train::objectives::{contrastive_on, sample_pairs_ciga, ContrastConfig};
use gala_train::tape::Tape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy)]
enum Objective {
    Plain,
    Featurized,
}

fn loss(params: &ModelParams, batch: &GraphBatch, obj: Objective, grads: bool) -> (f64, Option<Vec<ndarray::Array2<f64>>>) {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let mut pass = Pass::train(None);
    let (logits, emb) = match obj {
        Objective::Plain => classify_on(&mut tape, &bound, params, batch, None, &mut pass),
        Objective::Featurized => {
            let s = featurize_on(&mut tape, &bound, params, batch, &mut pass);
            classify_on(&mut tape, &bound, params, batch, Some(s), &mut pass)
        }
    };
    let mut total = tape.cross_entropy(logits, batch.labels.clone());
    if let Objective::Featurized = obj {
        let a = sample_pairs_ciga(&batch.labels);
        let c = contrastive_on(&mut tape, emb, &a, &ContrastConfig::default());
        let c = tape.scale(c, 2.0);
        total = tape.add(total, c);
    }
    let value = tape.scalar(total);
    let g = grads.then(|| bound.grads(&tape.backward(total), params));
    (value, g)
}

/// Central differences at five randomly chosen weights with non-negligible
/// gradient.
fn check(obj: Objective, seed: u64) {
    let split = build_splits(0.8, 0.6, 3, 11).unwrap();
    let graphs = &split.train[..5];
    let batch = GraphBatch::from_graphs(graphs).unwrap();
    let params = ModelParams::init(ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let (_, g) = loss(&params, &batch, obj, true);
    let g = g.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 5 {
        attempts += 1;
        assert!(attempts < 10_000, "could not find weights with gradient");
        let t = rng.gen_range(0..params.tensors.len());
        let flat = rng.gen_range(0..params.tensors[t].len());
        let (r, c) = (flat / params.tensors[t].ncols(), flat % params.tensors[t].ncols());
        let analytic = g[t][[r, c]];
        if analytic.abs() < 1e-5 {
            continue;
        }
        let h = 1e-6;
        let mut plus = params.clone();
        plus.tensors[t][[r, c]] += h;
        let mut minus = params.clone();
        minus.tensors[t][[r, c]] -= h;
        let numeric = (loss(&plus, &batch, obj, false).0 - loss(&minus, &batch, obj, false).0) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        assert!(rel <= 1e-4, "tensor {t} [{r},{c}]: analytic {analytic} numeric {numeric} rel {rel}");
        checked += 1;
    }
}

#[test]
fn plain_classifier_matches_finite_differences() {
    check(Objective::Plain, 1);
}

#[test]
fn featurized_contrastive_objective_matches_finite_differences() {
    check(Objective::Featurized, 2);
    check(Objective::Featurized, 3);
}
