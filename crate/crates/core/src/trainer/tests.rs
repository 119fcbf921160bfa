use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::Hyper;
use crate::synth::{generate, SynthConfig};

struct Fixture {
    samples: Vec<Sample>,
    lib: TemplateLibrary,
    oracle: PlantedOracle,
}

fn fixture(sources: usize) -> Fixture {
    let corpus = generate(&SynthConfig { sources, seed: 11, ..Default::default() });
    let lib = TemplateLibrary::build_from_corpus(corpus.target_lines(), Some(corpus.source_lines()), 4).unwrap();
    Fixture { samples: corpus.samples, lib, oracle: corpus.oracle }
}

fn small_model(f: &Fixture, seed: u64) -> QstrModel<f64> {
    let (sv, tv) = build_vocabularies(&f.samples, &f.lib);
    let mut h = Hyper::new(sv, tv);
    h.d_model = 16;
    h.n_heads = 2;
    h.n_layers = 1;
    h.ffn_hidden = 32;
    QstrModel::new(h, seed).unwrap()
}

#[test]
fn pcc_examples() {
    let q = [0.1, 0.5, 0.3, 0.9];
    assert!((pcc(&q, &q).unwrap() - 1.0).abs() < 1e-15);
    let anti: Vec<f64> = q.iter().map(|v| 1.0 - v).collect();
    assert!((pcc(&anti, &q).unwrap() + 1.0).abs() < 1e-15);
    assert!(matches!(pcc(&[0.2, 0.2, 0.2], &[0.1, 0.4, 0.3]), Err(TrainError::ZeroVariance)));
    assert!(matches!(pcc(&[0.2], &[0.1]), Err(TrainError::LengthMismatch { .. })));
}

#[test]
fn pcc_matches_two_pass_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x: Vec<f64> = (0..100).map(|_| rng.gen()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 0.3 + rng.gen::<f64>()).collect();
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for i in 0..x.len() {
            cov += (x[i] - mx) * (y[i] - my);
            vx += (x[i] - mx) * (x[i] - mx);
            vy += (y[i] - my) * (y[i] - my);
        }
        let r = cov / (vx * vy).sqrt();
        assert!((pcc(&x, &y).unwrap() - r).abs() < 1e-12);
    }
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let f = fixture(40);
    let mut model = small_model(&f, 1);
    let before = model.content_hash().to_string();
    let config = TrainConfig { learning_rate: 0.0, epochs: 1, ..Default::default() };
    train(&mut model, &f.lib, &f.samples[..1], &[], &f.oracle, &config, |_| {}).unwrap();
    assert_eq!(model.content_hash(), before);
}

#[test]
fn fixed_batch_loss_decreases() {
    let f = fixture(60);
    let mut model = small_model(&f, 2);
    let set = CandidateSet::build(&f.samples[0], &f.lib, &f.oracle, 10, 5).unwrap();
    let mut opt = AdamW::new(model.params(), 0.0);
    let mut losses = Vec::new();
    for _ in 0..=50 {
        let (value, grads) = set.loss_and_grads(&model, 1.0, 1.0).unwrap();
        losses.push(value.total);
        model.update_params(|p| opt.step(p, &grads, 1e-3));
    }
    // monotone while far from the optimum; Adam momentum may then jitter
    for w in losses[..20].windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
    assert!(losses[50] < 0.1 * losses[0], "{losses:?}");
}

#[test]
fn loss_gradient_agrees_with_model_gradient() {
    // d(total)/dθ through the scorer equals Σ_i dL/ds_i · ds_i/dθ
    let f = fixture(30);
    let model = small_model(&f, 3);
    let set = CandidateSet::build(&f.samples[1], &f.lib, &f.oracle, 4, 2).unwrap();
    let (_, grads) = set.loss_and_grads(&model, 1.0, 0.5).unwrap();
    let h = 1e-5;
    let eval = |m: &QstrModel<f64>| {
        let s = set.predict(m).unwrap();
        let q = set.qualities.clone();
        total_loss(&s, &q, 1.0, 0.5).unwrap().total
    };
    for idx in [0usize, 3, 7] {
        let mut up = model.clone();
        up.update_params(|p| p.head_weight[[0, idx]] += h);
        let mut down = model.clone();
        down.update_params(|p| p.head_weight[[0, idx]] -= h);
        let fd = (eval(&up) - eval(&down)) / (2.0 * h);
        assert!((fd - grads.head_weight[[0, idx]]).abs() < 1e-6, "{fd} vs {}", grads.head_weight[[0, idx]]);
    }
}

#[test]
fn same_seed_same_log() {
    let f = fixture(60);
    let config = TrainConfig { epochs: 2, learning_rate: 3e-3, seed: 9, ..Default::default() };
    let run = || {
        let mut model = small_model(&f, 4);
        let out = train(&mut model, &f.lib, &f.samples[..40], &f.samples[40..], &f.oracle, &config, |_| {}).unwrap();
        (out.log, model.content_hash().to_string())
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    assert!(a.iter().all(|e| e.dev_pcc.is_some()));
}

#[test]
fn keeps_best_dev_epoch() {
    let f = fixture(60);
    let config = TrainConfig { epochs: 3, learning_rate: 5e-3, seed: 1, ..Default::default() };
    let mut model = small_model(&f, 5);
    let out = train(&mut model, &f.lib, &f.samples[..40], &f.samples[40..], &f.oracle, &config, |_| {}).unwrap();
    let best = out.log.iter().map(|e| e.dev_pcc.unwrap()).fold(f64::MIN, f64::max);
    assert_eq!(out.log[out.best_epoch].dev_pcc.unwrap(), best);
    let dev = dev_candidate_sets(&f.samples[40..], &f.lib, &f.oracle, 10, 1).unwrap();
    assert!((evaluate_pcc(&model, &dev).unwrap() - best).abs() < 1e-12);
}

#[test]
fn constant_predictions_leave_dev_pcc_undefined() {
    let f = fixture(30);
    let mut model = small_model(&f, 2);
    model.update_params(|p| p.head_weight.fill(0.0));
    let config = TrainConfig { epochs: 2, learning_rate: 0.0, ..Default::default() };
    let out = train(&mut model, &f.lib, &f.samples[..20], &f.samples[20..], &f.oracle, &config, |_| {}).unwrap();
    assert!(out.log.iter().all(|e| e.dev_pcc.is_none()));
    assert_eq!(out.best_epoch, 1);
}

struct Broken;

impl QualityOracle for Broken {
    fn quality(&self, _: &Sample, _: &Candidate) -> Result<f64, TrainError> {
        Ok(f64::NAN)
    }
}

#[test]
fn non_finite_loss_aborts() {
    let f = fixture(20);
    let mut model = small_model(&f, 6);
    let err = train(&mut model, &f.lib, &f.samples, &[], &Broken, &TrainConfig::default(), |_| {}).unwrap_err();
    assert!(matches!(err, TrainError::NonFiniteLoss { epoch: 0, step: 0, .. }), "{err}");
}

#[test]
fn oracle_miss_surfaces() {
    let f = fixture(20);
    let mut model = small_model(&f, 6);
    let empty = PrecomputedOracle::default();
    let err = train(&mut model, &f.lib, &f.samples, &[], &empty, &TrainConfig::default(), |_| {}).unwrap_err();
    assert!(matches!(err, TrainError::OracleMiss { .. }));
}

#[test]
fn config_is_validated() {
    let f = fixture(20);
    let mut model = small_model(&f, 6);
    let bad = TrainConfig { lambda_rank: -1.0, ..Default::default() };
    let err = train(&mut model, &f.lib, &f.samples, &[], &f.oracle, &bad, |_| {}).unwrap_err();
    assert!(matches!(err, TrainError::InvalidConfig(_)));
    assert!(matches!(
        train(&mut model, &f.lib, &[], &[], &f.oracle, &TrainConfig::default(), |_| {}),
        Err(TrainError::EmptyDataset)
    ));
}

#[test]
fn dataset_roundtrip() {
    let f = fixture(10);
    let mut buf = Vec::new();
    write_dataset(&mut buf, &f.samples).unwrap();
    assert_eq!(read_dataset(&buf[..]).unwrap(), f.samples);
    let bad = b"{\"source_tokens\": [], \"source_tree\": \"(A )\"}\n";
    assert!(matches!(read_dataset(&bad[..]), Err(TrainError::Malformed { line: 1, .. })));
}
