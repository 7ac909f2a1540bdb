use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::lang::parse;
use crate::semantics::Model;
use crate::whitebox::MeanFieldPosterior;

const GAUSS: &str = "m := 1.5; v := 4; c1 := 2; c2 := -1; vx := 0.5
z1 ~ normal(m, v); z2 := z1 * c1; z3 := z2 + c2
obs(normal(z3, vx), 4.2)";

/// Closed-form posterior (mean, var) and marginal likelihood for GAUSS.
fn gauss_oracle() -> (f64, f64, f64) {
    let (m, v, c1, c2, vx, o) = (1.5f64, 4.0f64, 2.0f64, -1.0f64, 0.5f64, 4.2f64);
    let var = 1.0 / (1.0 / v + c1 * c1 / vx);
    let mean = var * (m / v + c1 * (o - c2) / vx);
    let s = c1 * c1 * v + vx;
    let z = (-(o - c1 * m - c2).powi(2) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s).sqrt();
    (mean, var, z)
}

fn model(src: &str) -> Model {
    Model::new(&parse(src).unwrap()).unwrap()
}

#[test]
fn ess_weights_hand_cases() {
    assert_eq!(ess_raw_weights(&[0.25; 8]).unwrap(), 8.0);
    assert_eq!(ess_raw_weights(&[0.0, 0.0, 3.0, 0.0]).unwrap(), 1.0);
    assert!((ess_raw_weights(&[1.0, 1.0, 2.0]).unwrap() - 8.0 / 3.0).abs() < 1e-15);
    let lw = [0.0, f64::NEG_INFINITY, 2f64.ln(), 0.0];
    assert!((ess_log_weights(&lw).unwrap() - 16.0 / 6.0).abs() < 1e-12);
    assert!(ess_log_weights(&[f64::NEG_INFINITY; 3]).is_err());
}

fn ar1(rng: &mut ChaCha8Rng, rho: f64, n: usize) -> Vec<f64> {
    let mut x = rng.sample::<f64, _>(StandardNormal) / (1.0 - rho * rho).sqrt();
    (0..n)
        .map(|_| {
            x = rho * x + rng.sample::<f64, _>(StandardNormal);
            x
        })
        .collect()
}

#[test]
fn ar1_chain_ess() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let chain = ar1(&mut rng, 0.9, n);
    let want = (1.0 - 0.9) / (1.0 + 0.9) * n as f64;
    let got = ess_chain(&chain).unwrap();
    assert!((got - want).abs() < 0.3 * want, "{got} vs {want}");
}

#[test]
fn iid_chains_rhat_and_ess() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let chains: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..10_000).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let r = r_hat(&chains).unwrap();
    assert!((0.99..=1.01).contains(&r), "{r}");
    let e = ess_chains(&chains).unwrap();
    assert!((e - 40_000.0).abs() < 4_000.0, "{e}");
}

#[test]
fn rhat_degenerate_and_errors() {
    let c = vec![2.0; 10];
    assert_eq!(r_hat(&[c.clone(), c.clone()]).unwrap(), 1.0);
    assert!(matches!(r_hat(&[c.clone()]), Err(DiagnosticError::TooFewChains { .. })));
    assert!(matches!(ess_chain(&[1.0, 2.0, 3.0]), Err(DiagnosticError::TooShort(3))));
    assert!(matches!(r_hat(&[c.clone(), vec![1.0; 8]]), Err(DiagnosticError::RaggedChains)));
    // separated chains are flagged
    let a: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
    let b: Vec<f64> = a.iter().map(|x| x + 50.0).collect();
    assert!(r_hat(&[a, b]).unwrap() > 1.5);
}

#[test]
fn autocovariance_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = x.iter().sum::<f64>() / 50.0;
    let fft = autocovariance(&x);
    for lag in [0, 1, 5, 49] {
        let direct = (0..50 - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / 50.0;
        assert!((fft[lag] - direct).abs() < 1e-12);
    }
}

#[test]
fn hmc_standard_normal_moments() {
    let m = model("a := 0; b := 1; z ~ normal(a, b)");
    let cfg = HmcConfig { samples: 50_000, warmup: 1000, chains: 1, seed: 4, ..Default::default() };
    let out = hmc(&m, &cfg).unwrap();
    let d = &out.chains[0].draws;
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64;
    assert!(mean.abs() < 0.02, "{mean}");
    assert!((var - 1.0).abs() < 0.05, "{var}");
    assert_eq!(out.divergences(), 0);
}

/// Kolmogorov–Smirnov against N(0,1) on a thinned chain.
#[test]
fn hmc_ks_smoke_test() {
    let m = model("a := 0; b := 1; z ~ normal(a, b)");
    let cfg = HmcConfig { samples: 50_000, warmup: 1000, chains: 1, seed: 5, ..Default::default() };
    let out = hmc(&m, &cfg).unwrap();
    let mut x: Vec<f64> = out.chains[0].draws.iter().step_by(5).copied().collect();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    let phi = |t: f64| 0.5 * (1.0 + statrs::function::erf::erf(t / std::f64::consts::SQRT_2));
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = phi(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value 1.628 / sqrt(n)
    assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn hmc_conjugate_posterior_within_three_standard_errors() {
    let m = model(GAUSS);
    let (mean, var, _) = gauss_oracle();
    let cfg = HmcConfig { samples: 10_000, warmup: 1000, chains: 1, seed: 6, ..Default::default() };
    let out = hmc(&m, &cfg).unwrap();
    let d = &out.chains[0].draws;
    let n = d.len() as f64;
    let em = d.iter().sum::<f64>() / n;
    let ev = d.iter().map(|x| (x - em).powi(2)).sum::<f64>() / (n - 1.0);
    let ess = ess_chain(d).unwrap();
    let se_mean = (var / ess).sqrt();
    let se_var = var * (2.0 / ess).sqrt();
    assert!((em - mean).abs() < 3.0 * se_mean, "{em} vs {mean}");
    assert!((ev - var).abs() < 3.0 * se_var, "{ev} vs {var}");
}

#[test]
fn hmc_is_deterministic_across_thread_modes() {
    let m = model(GAUSS);
    let cfg = HmcConfig { samples: 500, warmup: 200, chains: 3, seed: 7, ..Default::default() };
    let a = hmc(&m, &cfg).unwrap();
    let b = hmc(&m, &HmcConfig { serial: true, ..cfg.clone() }).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.chains[0].draws, a.chains[1].draws);
    assert!(hmc(&m, &HmcConfig { leapfrog_steps: 0, ..cfg }).is_err());
}

#[test]
fn snis_without_observations_has_unit_weights() {
    let m = model("a := 0; b := 1; z ~ normal(a, b)");
    let ws = snis_prior(&m, 100, 1).unwrap();
    assert!(ws.log_weights.iter().all(|&l| l == 0.0));
    assert_eq!(ws.normaliser(), 1.0);
    assert_eq!(ess_weights(&ws).unwrap(), 100.0);
}

#[test]
fn snis_prior_estimates_conjugate_evidence() {
    let m = model(GAUSS);
    let (_, _, z) = gauss_oracle();
    let ws = snis_prior(&m, 1_000_000, 2).unwrap();
    assert!((ws.normaliser() - z).abs() < 0.01 * z, "{} vs {z}", ws.normaliser());
    assert_eq!(ws, snis_prior(&m, 1_000_000, 2).unwrap());
}

#[test]
fn exact_proposal_gives_flat_weights() {
    let m = model(GAUSS);
    let (mean, var, z) = gauss_oracle();
    let q = MeanFieldPosterior::new(vec![mean], vec![var]);
    let ws = snis_proposal(&m, &q, 1000, 3).unwrap();
    let ess = ess_weights(&ws).unwrap();
    assert!((ess - 1000.0).abs() < 1e-6, "{ess}");
    assert!((ws.normaliser() - z).abs() < 1e-10 * z);

    let narrow = MeanFieldPosterior::new(vec![mean + 3.0 * var.sqrt()], vec![var / 100.0]);
    let bad = snis_proposal(&m, &narrow, 1000, 3).unwrap();
    assert!(ess_weights(&bad).unwrap() < 100.0);
    assert!(snis_proposal(&m, &MeanFieldPosterior::standard(2), 10, 0).is_err());
}

#[test]
fn prior_proposal_reduces_to_snis_prior() {
    let m = model(GAUSS);
    let (_, _, z) = gauss_oracle();
    let prior = MeanFieldPosterior::new(vec![1.5], vec![4.0]);
    let a = snis_proposal(&m, &prior, 200_000, 8).unwrap();
    let b = snis_prior(&m, 200_000, 9).unwrap();
    assert!((a.normaliser() - z).abs() < 0.03 * z);
    assert!((b.normaliser() - z).abs() < 0.03 * z);
}

#[test]
fn lais_from_single_point_chain() {
    let m = model(GAUSS);
    let (mean, _, z) = gauss_oracle();
    let cfg = LaisConfig { proposal_sd: Some(2.0), ..Default::default() };
    let ws = lais(&m, &[mean], 200_000, &cfg, 4).unwrap();
    assert!((ws.normaliser() - z).abs() < 0.02 * z, "{} vs {z}", ws.normaliser());
    assert_eq!(ws, lais(&m, &[mean], 200_000, &cfg, 4).unwrap());
    assert!(matches!(lais(&m, &[], 10, &cfg, 0), Err(ImportanceError::EmptyChain)));

    let prior_only = model("a := 0; b := 1; z ~ normal(a, b)");
    let ws = lais(&prior_only, &[0.3, -0.2, 0.1], 200_000, &LaisConfig { proposal_sd: Some(1.5), ..Default::default() }, 5).unwrap();
    assert!((ws.normaliser() - 1.0).abs() < 0.02);
}

#[test]
fn lais_agrees_with_snis_on_hmc_chain() {
    let m = model(GAUSS);
    let (_, _, z) = gauss_oracle();
    let out = hmc(&m, &HmcConfig { samples: 2000, warmup: 500, chains: 1, seed: 1, ..Default::default() }).unwrap();
    let ws = lais(&m, &out.chains[0].draws, 50_000, &LaisConfig::default(), 6).unwrap();
    assert!((ws.normaliser() - z).abs() < 0.02 * z, "{} vs {z}", ws.normaliser());
}

#[test]
fn cache_round_trip() {
    let p = parse(GAUSS).unwrap();
    let m = Model::new(&p).unwrap();
    let ws = snis_prior(&m, 50, 11).unwrap();
    let mut buf = Vec::new();
    ws.write(&mut buf, &program_hash(&p)).unwrap();
    assert_eq!(&buf[..8], CACHE_MAGIC);
    assert_eq!(buf.len(), 8 + 4 + 32 + 4 + 8 + 1 + 8 + 8 * (50 + 50 + 2));
    let back = WeightedSampleSet::read_for(&buf[..], &p).unwrap();
    assert_eq!(back, ws);
    let other = parse("a := 0; b := 1; z ~ normal(a, b)").unwrap();
    assert!(matches!(WeightedSampleSet::read_for(&buf[..], &other), Err(CacheError::ProgramMismatch)));
}

#[test]
fn weighted_moments_use_normalised_weights() {
    let ws = WeightedSampleSet {
        n: 1,
        samples: vec![0.0, 1.0, 4.0],
        log_weights: vec![0.0, 0.0, 2f64.ln()],
        log_normaliser: 0.0,
        tag: ProposalTag::Prior,
        seed: 0,
    };
    let (m, v) = ws.weighted_moments(None);
    assert!((m[0] - 2.25).abs() < 1e-12);
    let want = 0.25 * 2.25f64.powi(2) + 0.25 * 1.25f64.powi(2) + 0.5 * 1.75f64.powi(2);
    assert!((v[0] - want).abs() < 1e-12);
}
