use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::lang::{canonicalise, fixtures, parse};

const LN_INV_SQRT_2PI: f64 = -0.918_938_533_204_672_7;

fn milky() -> Program {
    canonicalise(&parse(fixtures::MILKY_WAY).unwrap())
}

fn bank_for(p: &Program, seed: u64) -> NetworkBank {
    NetworkBank::new(BankConfig::new(p.var_count(), p.latent_count()), seed)
}

#[test]
fn assign_const_keeps_z_and_zero_intg_is_identity() {
    let p = milky();
    let mut bank = bank_for(&p, 1);
    let h = vec![0.3; 10];
    let c = Command::AssignConst { target: Var(0), value: 4.0 };
    assert_eq!(bank.step(&c, &h, -1.25).unwrap().1, -1.25);

    // zero the integrator so its raw output is 0 and the factor exp(0) = 1
    let ids: Vec<_> = bank.integrator().param_ids().collect();
    for id in ids {
        bank.params.get_mut(id).data.iter_mut().for_each(|x| *x = 0.0);
    }
    let o = Command::Observe { mean: Var(1), var: Var(2), value: 3.0 };
    assert_eq!(bank.step(&o, &h, -1.25).unwrap().1, -1.25);
}

#[test]
fn zero_bank_sample_maps_to_zero_state() {
    let p = milky();
    let mut bank = bank_for(&p, 1);
    bank.params.set_all(0.0);
    let s = Command::Sample { target: Var(4), mean: Var(0), var: Var(1) };
    let (h, _) = bank.step(&s, &[0.7; 10], 0.0).unwrap();
    assert_eq!(h, vec![0.0; 10]);
}

#[test]
fn empty_program_decodes_zero_state() {
    let p = parse("").unwrap();
    let bank = NetworkBank::new(BankConfig::new(3, 2), 5);
    let (post, log_z) = bank.infer(&p).unwrap();
    assert_eq!(log_z, 0.0);
    assert_eq!(post.dim(), 0);
    let full = bank.decode(&[0.0; 10], 2);
    let raw = bank.decoder().eval(&bank.params, &[0.0; 10]);
    assert_eq!(full.means, raw[..2].to_vec());
}

#[test]
fn no_observe_means_unit_z() {
    let p = canonicalise(&parse("a := 1; b := 2; z ~ normal(a, b); y := z * a").unwrap());
    let bank = bank_for(&p, 3);
    assert_eq!(bank.infer(&p).unwrap().1, 0.0);
}

#[test]
fn one_pass_call_counts() {
    for src in [fixtures::MILKY_WAY, fixtures::CLUSTERING, fixtures::MULMOD_EXAMPLE] {
        let p = canonicalise(&parse(src).unwrap());
        let bank = bank_for(&p, 2);
        let (_, _, stats) = bank.infer_with_stats(&p).unwrap();
        assert_eq!(stats.network_calls(), p.commands().len() + 1);
        assert_eq!(stats.integrator_calls, p.observe_count());
    }
}

#[test]
fn z_equals_product_of_replayed_integrator_outputs() {
    let p = canonicalise(&parse(fixtures::CLUSTERING).unwrap());
    let bank = bank_for(&p, 4);
    let (_, log_z) = bank.infer(&p).unwrap();
    let mut h = vec![0.0; 10];
    let mut prod = 1.0;
    for cmd in p.commands() {
        let (kind, x) = bank.encode(cmd).unwrap();
        let mut input = x.clone();
        input.extend_from_slice(&h);
        if kind == NetKind::Observe {
            prod *= bank.integrator().eval(&bank.params, &input)[0].clamp(-30.0, 30.0).exp();
        }
        h = bank.step(cmd, &h, 0.0).unwrap().0;
    }
    assert!((log_z.exp() - prod).abs() <= 1e-12 * prod);
}

#[test]
fn canonical_renaming_gives_identical_inference() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for src in [fixtures::MILKY_WAY, fixtures::CLUSTERING] {
        let p = parse(src).unwrap();
        let mut perm: Vec<usize> = (0..p.var_count()).collect();
        perm.shuffle(&mut rng);
        let names = (0..p.var_count()).map(|i| format!("q{i}")).collect();
        let renamed = p.permute_vars(&perm).with_names(names);
        let (a, b) = (canonicalise(&p), canonicalise(&renamed));
        let bank = bank_for(&a, 6);
        assert_eq!(bank.infer(&a).unwrap(), bank.infer(&b).unwrap());
    }
}

#[test]
fn variances_and_z_positive_for_extreme_parameters() {
    let p = milky();
    let mut bank = bank_for(&p, 9);
    for a in bank.params.iter_mut() {
        a.data.iter_mut().enumerate().for_each(|(i, x)| *x = if i % 2 == 0 { 50.0 } else { -50.0 });
    }
    let (post, log_z) = bank.infer(&p).unwrap();
    assert!(post.vars.iter().all(|&v| v > 0.0));
    assert!(log_z.exp() > 0.0);
}

#[test]
fn log_q_closed_forms() {
    let q = MeanFieldPosterior::standard(3);
    assert!((q.log_q(&[0.0; 3]) - 3.0 * LN_INV_SQRT_2PI).abs() < 1e-14);
    let wide = MeanFieldPosterior::new(vec![1.0, -2.0], vec![0.5, 3.0]);
    let wider = MeanFieldPosterior::new(vec![1.0, -2.0], vec![2.0, 12.0]);
    let d = wide.log_q(&[1.0, -2.0]) - wider.log_q(&[1.0, -2.0]);
    assert!((d - 2.0 * 2f64.ln()).abs() < 1e-14);
}

#[test]
fn taped_matches_plain_and_gradient_matches_fd() {
    let p = milky();
    let bank = bank_for(&p, 10);
    let z = [1.0, -3.0, 2.5];
    let (post, log_z) = bank.infer(&p).unwrap();

    let f = |params: &ParamSet| -> f64 {
        let b = NetworkBank { params: params.clone(), ..bank.clone() };
        let (q, lz) = b.infer(&p).unwrap();
        q.log_q(&z) + lz
    };

    let mut tape = Tape::new(&bank.params);
    let inf = bank.infer_taped(&mut tape, &p).unwrap();
    assert_eq!(tape.value(inf.means), &post.means[..]);
    assert_eq!(tape.value(inf.vars), &post.vars[..]);
    assert_eq!(tape.scalar(inf.log_z), log_z);
    let lq = log_q_taped(&mut tape, &inf, &z).unwrap();
    assert!((tape.scalar(lq) - post.log_q(&z)).abs() < 1e-12);
    let total = tape.add(lq, inf.log_z).unwrap();
    let grads = tape.backward(total).unwrap().into_params();
    let flat: Vec<f64> = grads.concat();

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut coords: Vec<usize> = (0..bank.params.scalar_count()).collect();
    coords.shuffle(&mut rng);
    // restrict to coordinates that actually influence the output
    let mut checked = 0;
    for &k in &coords {
        if flat[k] == 0.0 {
            continue;
        }
        let mut a = bank.params.clone();
        let mut b = bank.params.clone();
        a.flat_set(k, a.flat_get(k) + 1e-6);
        b.flat_set(k, b.flat_get(k) - 1e-6);
        let fd = (f(&a) - f(&b)) / 2e-6;
        let rel = (flat[k] - fd).abs() / flat[k].abs().max(fd.abs()).max(1e-3);
        assert!(rel < 1e-4, "coord {k}: {} vs {fd}", flat[k]);
        checked += 1;
        if checked == 10 {
            break;
        }
    }
    assert_eq!(checked, 10);
}

#[test]
fn dimension_errors() {
    let p = milky();
    let small = NetworkBank::new(BankConfig::new(4, 3), 0);
    assert!(matches!(small.infer(&p), Err(InferError::VarOutOfRange { .. })));
    let few = NetworkBank::new(BankConfig::new(p.var_count(), 2), 0);
    assert!(matches!(few.infer(&p), Err(InferError::TooManyLatents { found: 3, n: 2 })));
    let mut cfg = BankConfig::new(p.var_count(), 3);
    cfg.procedures = vec!["add".into()];
    let no_mul = NetworkBank::new(cfg, 0);
    assert!(matches!(no_mul.infer(&p), Err(InferError::UnknownProcedure(_))));
}

#[test]
fn save_and_load_round_trip() {
    let p = milky();
    let bank = NetworkBank::new(BankConfig::new(p.var_count(), 3).with_scaling(InputScaling::Symlog), 21);
    let mut buf = Vec::new();
    bank.save(&mut buf, serde_json::json!({"epoch": 3})).unwrap();
    let (back, meta) = NetworkBank::load(&buf[..]).unwrap();
    assert_eq!(back, bank);
    assert_eq!(meta["epoch"], 3);
    assert_eq!(back.infer(&p).unwrap(), bank.infer(&p).unwrap());
}

#[test]
fn unary_call_pads_second_argument() {
    let p = canonicalise(&parse(fixtures::MULMOD_EXAMPLE).unwrap());
    let bank = bank_for(&p, 0);
    let call = p.commands().iter().find(|c| matches!(c, Command::Call { .. })).unwrap();
    let (_, x) = bank.encode(call).unwrap();
    let m = p.var_count();
    assert_eq!(x.len(), 3 * m);
    assert!(x[2 * m..].iter().all(|&v| v == 0.0));
    assert_eq!(x[..2 * m].iter().sum::<f64>(), 2.0);
}

#[test]
fn kl_between_gaussians() {
    let p = MeanFieldPosterior::new(vec![0.0], vec![1.0]);
    assert_eq!(p.kl_from(&p), 0.0);
    let q = MeanFieldPosterior::new(vec![1.0], vec![4.0]);
    // 0.5 (ln 4 + (1 + 1) / 4 - 1)
    assert!((q.kl_from(&p) - 0.5 * (4f64.ln() + 0.5 - 1.0)).abs() < 1e-14);
}

#[test]
fn is_pred_scans_twice() {
    let p = milky();
    let bank = bank_for(&p, 3);
    let scans = ScanCounter::new();
    let (q, ws) = is_pred(&bank, &p, 200, 1, &scans).unwrap();
    assert_eq!(scans.get(), 2);
    assert_eq!(ws.tag, crate::ProposalTag::Predicted);
    assert_eq!(q, bank.infer(&p).unwrap().0);
}
