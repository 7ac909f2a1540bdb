use super::*;
use crate::lang::parse;
use crate::progen::{class_spec, generate};
use crate::whitebox::{BankConfig, MeanFieldPosterior};

const GAUSS: &str = "m := 1.5; v := 4; c1 := 2; c2 := -1; vx := 0.5
z1 ~ normal(m, v); z2 := z1 * c1; z3 := z2 + c2
obs(normal(z3, vx), 4.2)";

/// Closed-form posterior (mean, var) and evidence for GAUSS.
fn oracle() -> (f64, f64, f64) {
    let var = 1.0 / (1.0 / 4.0 + 4.0 / 0.5);
    let mean = var * (1.5 / 4.0 + 2.0 * 5.2 / 0.5);
    let s = 4.0 * 4.0 + 0.5;
    let z = (-(4.2f64 - 2.0).powi(2) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s).sqrt();
    (mean, var, z)
}

fn gauss_entry(split: Split, seed: u64) -> CorpusEntry {
    let p = parse(GAUSS).unwrap();
    let cache = reference_samples(&p, &ReferenceMethod::Exact, 512, seed).unwrap();
    CorpusEntry::new("g", p, cache, split)
}

fn bank() -> NetworkBank {
    NetworkBank::new(BankConfig::new(8, 1), 3)
}

/// Inference outputs placed directly on a tape.
fn fixed_inference(tape: &mut Tape<'_>, mean: f64, var: f64, log_z: f64) -> TapedInference {
    TapedInference {
        means: tape.input(vec![mean]),
        vars: tape.input(vec![var]),
        log_z: tape.input(vec![log_z]),
        latents: 1,
    }
}

#[test]
fn exact_posterior_reaches_entropy_floor_and_zero_penalty() {
    let (mean, var, z) = oracle();
    let stats = BatchStats { zbar: vec![mean], spread: vec![var], n_hat: z };
    let params = crate::autodiff::ParamSet::new();
    let mut tape = Tape::new(&params);
    let inf = fixed_inference(&mut tape, mean, var, z.ln());
    let (total, parts) = loss_from_inference(&mut tape, &inf, &stats, 2.0).unwrap();
    let entropy = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var).ln();
    assert!((parts.cross_entropy - entropy).abs() < 1e-12);
    assert!(parts.penalty.abs() < 1e-24);
    let g = tape.backward(total).unwrap();
    assert!(g.wrt(inf.log_z).unwrap()[0].abs() < 1e-12);
    assert!(g.wrt(inf.means).unwrap()[0].abs() < 1e-12);
    assert!(g.wrt(inf.vars).unwrap()[0].abs() < 1e-12);
}

#[test]
fn lambda_zero_is_pure_cross_entropy() {
    let p = parse(GAUSS).unwrap();
    let b = bank();
    let stats = BatchStats { zbar: vec![2.0], spread: vec![0.1], n_hat: 0.05 };
    let a = loss(&b, &p, &stats, 0.0).unwrap();
    assert_eq!(a.penalty, 0.0);
    assert_eq!(a.total, a.cross_entropy);
    let c = loss(&b, &p, &stats, 2.0).unwrap();
    assert_eq!(a.cross_entropy, c.cross_entropy);
    assert!(c.penalty > 0.0);
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let p = parse(GAUSS).unwrap();
    let mut b = bank();
    let stats = BatchStats { zbar: vec![2.0], spread: vec![0.1], n_hat: 0.05 };
    let (_, grads) = loss_and_grad(&b, &p, &stats, 2.0).unwrap();
    let flat: Vec<f64> = grads.concat();
    let total = b.params.scalar_count();
    let h = 1e-6;
    for k in (0..total).step_by(total / 25) {
        let x = b.params.flat_get(k);
        b.params.flat_set(k, x + h);
        let up = loss(&b, &p, &stats, 2.0).unwrap().total;
        b.params.flat_set(k, x - h);
        let down = loss(&b, &p, &stats, 2.0).unwrap().total;
        b.params.flat_set(k, x);
        let fd = (up - down) / (2.0 * h);
        assert!((fd - flat[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", flat[k]);
    }
}

#[test]
fn penalty_gradient_is_lambda_times_residual_times_grad_z() {
    let p = parse("a := 0; b := 1; z ~ normal(a, b); obs(normal(z, b), 0.5)").unwrap();
    let b = NetworkBank::new(BankConfig::new(4, 1), 9);
    let stats = BatchStats { zbar: vec![0.2], spread: vec![0.5], n_hat: 0.3 };
    let lambda = 2.0;
    let (_, with) = loss_and_grad(&b, &p, &stats, lambda).unwrap();
    let (_, without) = loss_and_grad(&b, &p, &stats, 0.0).unwrap();
    // hand-written: d/dphi (l/2)(N - Z)^2 = -l (N - Z) dZ/dphi, dZ = Z dlogZ
    let mut tape = Tape::new(&b.params);
    let inf = b.infer_taped(&mut tape, &p).unwrap();
    let z = tape.scalar(inf.log_z).exp();
    let dlogz = tape.backward(inf.log_z).unwrap().into_params();
    for ((w, wo), d) in with.iter().zip(&without).zip(&dlogz) {
        for k in 0..w.len() {
            let want = -lambda * (stats.n_hat - z) * z * d[k];
            assert!((w[k] - wo[k] - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
    }
}

#[test]
fn zero_gradient_leaves_parameters_unchanged() {
    let mut b = bank();
    let before = b.params.clone();
    let mut adam = AdamState::new(&b.params, AdamConfig::default());
    let zeros: Vec<Vec<f64>> = b.params.iter().map(|a| vec![0.0; a.data.len()]).collect();
    adam.step(&mut b.params, &zeros).unwrap();
    assert_eq!(b.params, before);
}

#[test]
fn repeated_steps_reduce_loss() {
    let e = gauss_entry(Split::Train, 1);
    let mut b = bank();
    let mut adam = AdamState::new(&b.params, AdamConfig::default());
    let stats = BatchStats::from_cache(e.cache.as_ref().unwrap(), None);
    let losses: Vec<f64> = (0..300)
        .map(|_| grad_step(&mut b, &mut adam, &e.program, &stats, 2.0).unwrap().total)
        .collect();
    let head = losses[..50].iter().sum::<f64>() / 50.0;
    let tail = losses[250..].iter().sum::<f64>() / 50.0;
    assert!(tail < head, "{head} -> {tail}");
}

fn small_config() -> TrainConfig {
    TrainConfig {
        batch: 128,
        epochs: 20,
        log_every: 5,
        deterministic: true,
        ..Default::default()
    }
}

#[test]
fn training_is_deterministic() {
    let corpus = TrainingCorpus::new(vec![gauss_entry(Split::Train, 1), gauss_entry(Split::Test, 2)]);
    let run = || {
        let mut b = bank();
        let r = train(&mut b, &corpus, &small_config(), |_, _| {}).unwrap();
        let mut bytes = Vec::new();
        b.save(&mut bytes, serde_json::json!({})).unwrap();
        (r, bytes)
    };
    let (r1, b1) = run();
    let (r2, b2) = run();
    assert_eq!(b1, b2);
    assert_eq!(r1, r2);
    assert_eq!(r1.log.len(), 5);
    assert!(r1.log.iter().all(|r| r.wall_ms == 0 && r.test_loss.is_finite()));
    assert_eq!(r1.updates, 20);
}

#[test]
fn train_rejects_bad_corpora() {
    let mut b = bank();
    let empty = TrainingCorpus::new(vec![]);
    assert!(matches!(train(&mut b, &empty, &small_config(), |_, _| {}), Err(MetaError::EmptyCorpus)));
    let test_only = TrainingCorpus::new(vec![gauss_entry(Split::Test, 1)]);
    assert!(matches!(train(&mut b, &test_only, &small_config(), |_, _| {}), Err(MetaError::EmptyCorpus)));
    let mut missing = gauss_entry(Split::Train, 1);
    missing.cache = None;
    let c = TrainingCorpus::new(vec![missing]);
    assert!(matches!(train(&mut b, &c, &small_config(), |_, _| {}), Err(MetaError::MissingCache { .. })));
    let big = TrainingCorpus::new(vec![gauss_entry(Split::Train, 1)]);
    let cfg = TrainConfig { batch: 10_000, ..small_config() };
    assert!(matches!(train(&mut b, &big, &cfg, |_, _| {}), Err(MetaError::Config(_))));
    let mut tiny = NetworkBank::new(BankConfig::new(4, 1), 0);
    assert!(matches!(train(&mut tiny, &big, &small_config(), |_, _| {}), Err(MetaError::Shape { .. })));
}

#[test]
fn grouped_updates_match_serial_and_parallel() {
    let corpus = TrainingCorpus::new((0..4).map(|s| gauss_entry(Split::Train, s)).collect());
    let cfg = TrainConfig { group: 2, ..small_config() };
    let mut a = bank();
    let mut b = bank();
    train(&mut a, &corpus, &cfg, |_, _| {}).unwrap();
    train(&mut b, &corpus, &TrainConfig { deterministic: false, ..cfg }, |_, _| {}).unwrap();
    assert_eq!(a.params, b.params);
}

#[test]
fn plateau_stops_training() {
    let corpus = TrainingCorpus::new(vec![gauss_entry(Split::Train, 1)]);
    let cfg = TrainConfig {
        epochs: 500,
        plateau: Some(Plateau { patience: 3, min_improvement: 10.0 }),
        ..small_config()
    };
    let r = train(&mut bank(), &corpus, &cfg, |_, _| {}).unwrap();
    assert!(r.stopped_early);
    assert!(r.updates < 500);
    assert_eq!(r.log.last().unwrap().epoch as u64, r.updates);
}

#[test]
fn zero_bank_predicts_the_same_everywhere() {
    let mut b = NetworkBank::new(BankConfig::new(12, 3), 0);
    b.params.set_all(0.0);
    let entries: Vec<CorpusEntry> = (0..3)
        .map(|s| {
            let g = generate(&class_spec("hierl", None).unwrap(), s).unwrap();
            let p = g.program();
            let cache = reference_samples(&p, &ReferenceMethod::Exact, 64, s).unwrap();
            CorpusEntry::new(format!("h{s}"), p, cache, Split::Test)
        })
        .collect();
    let r = evaluate(&b, &entries).unwrap();
    for p in &r.programs {
        assert_eq!(p.z, Some(1.0));
        for l in &p.latents {
            assert_eq!((l.pred_mean, l.pred_sd), (0.0, 1.0));
        }
        assert!(p.analytic_reference);
    }
}

#[test]
fn oracle_predictor_has_zero_kl_and_flat_baseline_does_not() {
    let entries = vec![gauss_entry(Split::Test, 1)];
    let (mean, var, z) = oracle();
    let exact = evaluate_with::<()>(&entries, |_| Ok((MeanFieldPosterior::new(vec![mean], vec![var]), Some(z)))).unwrap();
    assert!(exact.mean_kl.abs() < 1e-10);
    assert!(exact.mean_z_rel_error.unwrap() < 1e-10);
    assert!(exact.programs[0].means_within(1e-9));
    let flat = evaluate_with::<()>(&entries, |e| Ok((flat_baseline(e.program.latent_count()), None))).unwrap();
    assert!(flat.mean_kl > 3.0);
    assert_eq!(flat.mean_z_rel_error, None);
    let mut csv = Vec::new();
    flat.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 2);
}

#[test]
fn reference_methods_agree_on_conjugate_program() {
    let p = parse(GAUSS).unwrap();
    let (mean, var, z) = oracle();
    let hmc_cfg = crate::samplers::HmcConfig { samples: 2000, warmup: 300, chains: 2, ..Default::default() };
    let methods = [
        ReferenceMethod::Exact,
        ReferenceMethod::Hmc { hmc: hmc_cfg.clone(), is_samples: 20_000 },
        ReferenceMethod::Lais { hmc: hmc_cfg },
        ReferenceMethod::Prior,
    ];
    for m in &methods {
        let c = reference_samples(&p, m, 4000, 5).unwrap();
        let (em, ev) = c.weighted_moments(None);
        assert!((em[0] - mean).abs() < 0.1 * var.sqrt() + 0.05, "{m:?}: {} vs {mean}", em[0]);
        assert!((ev[0] / var - 1.0).abs() < 0.25, "{m:?}: {} vs {var}", ev[0]);
        assert!((c.normaliser() / z - 1.0).abs() < 0.1, "{m:?}: {} vs {z}", c.normaliser());
    }
}
