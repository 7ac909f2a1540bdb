use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Relative error with a small absolute floor so exact zeros compare sanely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Check d f / d inputs on a tape against central differences.
fn gradcheck(inputs: Vec<Vec<f64>>, f: impl Fn(&mut Tape<'_>, &[Tensor]) -> Tensor) {
    let params = ParamSet::new();
    let eval = |xs: &[Vec<f64>]| {
        let mut t = Tape::new(&params);
        let ts: Vec<Tensor> = xs.iter().map(|x| t.input(x.clone())).collect();
        let out = f(&mut t, &ts);
        t.scalar(out)
    };
    let mut t = Tape::new(&params);
    let ts: Vec<Tensor> = inputs.iter().map(|x| t.input(x.clone())).collect();
    let out = f(&mut t, &ts);
    let g = t.backward(out).unwrap();
    let h = 1e-6;
    for (i, x) in inputs.iter().enumerate() {
        let zeros = vec![0.0; x.len()];
        let gi = g.wrt(ts[i]).unwrap_or(&zeros);
        for k in 0..x.len() {
            let mut a = inputs.clone();
            let mut b = inputs.clone();
            a[i][k] += h;
            b[i][k] -= h;
            let fd = (eval(&a) - eval(&b)) / (2.0 * h);
            assert!(rel_err(gi[k], fd) < 1e-4, "input {i}[{k}]: {} vs {fd}", gi[k]);
        }
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

#[test]
fn gradcheck_every_primitive() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let a = rand_vec(&mut rng, 4, -1.5, 1.5);
        let b = rand_vec(&mut rng, 4, -1.5, 1.5);
        let pos = rand_vec(&mut rng, 4, 0.3, 2.0);
        let w = rand_vec(&mut rng, 12, -1.0, 1.0);
        let x3 = rand_vec(&mut rng, 3, -1.0, 1.0);

        gradcheck(vec![a.clone(), b.clone()], |t, x| {
            let s = t.add(x[0], x[1]).unwrap();
            let q = t.square(s);
            t.sum(q)
        });
        gradcheck(vec![a.clone(), b.clone()], |t, x| {
            let s = t.sub(x[0], x[1]).unwrap();
            let m = t.mul(s, x[0]).unwrap();
            let c = t.scale(m, 1.7);
            let c = t.add_scalar(c, 0.3);
            let q = t.square(c);
            t.sum(q)
        });
        gradcheck(vec![a.clone()], |t, x| {
            let y = t.tanh(x[0]);
            let e = t.exp(y);
            t.sum(e)
        });
        gradcheck(vec![pos.clone()], |t, x| {
            let y = t.log(x[0]);
            let q = t.mul(y, y).unwrap();
            t.sum(q)
        });
        gradcheck(vec![w.clone(), x3.clone()], |t, x| {
            let y = matvec_input(t, x[0], 4, x[1]);
            let q = t.square(y);
            t.sum(q)
        });
        gradcheck(vec![a.clone(), b.clone()], |t, x| {
            let c = t.concat(&[x[0], x[1]]);
            let s = t.slice(c, 2, 4);
            let y = t.tanh(s);
            let q = t.square(y);
            t.sum(q)
        });
        gradcheck(vec![a.clone()], |t, x| {
            let c = t.clamp(x[0], -0.7, 0.7);
            let q = t.square(c);
            t.sum(q)
        });
        gradcheck(vec![a.clone(), b.clone(), pos.clone()], |t, x| {
            let l = t.gauss_log_pdf(x[0], x[1], x[2]).unwrap();
            t.sum(l)
        });
        let zbar = rand_vec(&mut rng, 4, -1.0, 1.0);
        let spread = rand_vec(&mut rng, 4, 0.0, 1.0);
        gradcheck(vec![a.clone(), pos.clone()], |t, x| {
            t.gauss_cross_entropy(x[0], x[1], &zbar, &spread).unwrap()
        });
    }
}

/// `matvec` with the matrix supplied as a plain input of `rows` rows.
fn matvec_input(t: &mut Tape<'_>, w: Tensor, rows: usize, x: Tensor) -> Tensor {
    let cols = t.value(x).len();
    // rows of w as separate slices, each dotted with x
    let parts: Vec<Tensor> = (0..rows)
        .map(|r| {
            let row = t.slice(w, r * cols, cols);
            let p = t.mul(row, x).unwrap();
            t.sum(p)
        })
        .collect();
    t.concat(&parts)
}

#[test]
fn gradcheck_matvec_on_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut params = ParamSet::new();
    let w = params.add_uniform("n", "w", 3, 5, &mut rng);
    let x = rand_vec(&mut rng, 5, -1.0, 1.0);
    let loss = |ps: &ParamSet, x: &[f64]| {
        let mut t = Tape::new(ps);
        let wt = t.param(w);
        let xt = t.input(x.to_vec());
        let y = t.matvec(wt, xt).unwrap();
        let q = t.tanh(y);
        let q = t.square(q);
        let s = t.sum(q);
        (t.scalar(s), t.backward(s).unwrap(), xt)
    };
    let (_, g, xt) = loss(&params, &x);
    for k in 0..15 {
        let mut a = params.clone();
        let mut b = params.clone();
        a.flat_set(k, a.flat_get(k) + 1e-6);
        b.flat_set(k, b.flat_get(k) - 1e-6);
        let fd = (loss(&a, &x).0 - loss(&b, &x).0) / 2e-6;
        assert!(rel_err(g.param(w)[k], fd) < 1e-4);
    }
    for k in 0..5 {
        let mut a = x.clone();
        let mut b = x.clone();
        a[k] += 1e-6;
        b[k] -= 1e-6;
        let fd = (loss(&params, &a).0 - loss(&params, &b).0) / 2e-6;
        assert!(rel_err(g.wrt(xt).unwrap()[k], fd) < 1e-4);
    }
}

#[test]
fn shape_errors() {
    let ps = ParamSet::new();
    let mut t = Tape::new(&ps);
    let a = t.input(vec![1.0, 2.0]);
    let b = t.input(vec![1.0]);
    assert!(matches!(t.add(a, b), Err(TapeError::Shape { .. })));
    assert_eq!(t.backward(a).unwrap_err(), TapeError::NotScalar(2));
}

#[test]
fn tanh_gradient_at_zero() {
    let ps = ParamSet::new();
    let mut t = Tape::new(&ps);
    let x = t.input(vec![0.0]);
    let y = t.tanh(x);
    let g = t.backward(y).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[1.0]);
}

#[test]
fn sum_of_parameters_has_unit_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ps = ParamSet::new();
    let net = Mlp::new(&mut ps, "n", 3, 4, 2, &mut rng);
    let mut t = Tape::new(&ps);
    let parts: Vec<Tensor> = net
        .param_ids()
        .map(|id| {
            let p = t.param(id);
            t.sum(p)
        })
        .collect();
    let c = t.concat(&parts);
    let s = t.sum(c);
    let g = t.backward(s).unwrap();
    for id in net.param_ids() {
        assert!(g.param(id).iter().all(|&x| x == 1.0));
    }
}

#[test]
fn zero_network_outputs_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ps = ParamSet::new();
    let net = Mlp::new(&mut ps, "n", 3, 10, 2, &mut rng);
    ps.set_all(0.0);
    assert_eq!(net.eval(&ps, &[1.0, -4.0, 2.0]), vec![0.0, 0.0]);
    let mut t = Tape::new(&ps);
    let x = t.input(vec![1.0, -4.0, 2.0]);
    let y = net.forward(&mut t, x).unwrap();
    assert_eq!(t.value(y), &[0.0, 0.0]);
}

#[test]
fn identity_layers_compose_tanh() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ps = ParamSet::new();
    let net = Mlp::new(&mut ps, "n", 1, 1, 1, &mut rng);
    for a in ps.iter_mut() {
        let v = if a.name.starts_with('w') { 1.0 } else { 0.0 };
        a.data.iter_mut().for_each(|x| *x = v);
    }
    let x = 0.8f64;
    assert!((net.eval(&ps, &[x])[0] - x.tanh().tanh()).abs() < 1e-15);
}

#[test]
fn mlp_matches_straight_line_oracle_and_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut ps = ParamSet::new();
    let net = Mlp::new(&mut ps, "n", 4, 10, 3, &mut rng);
    // randomise biases too
    for a in ps.iter_mut() {
        if a.name.starts_with('b') {
            a.data.iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
        }
    }
    let x = rand_vec(&mut rng, 4, -2.0, 2.0);

    let oracle = |ps: &ParamSet| -> Vec<f64> {
        let get = |n: &str| ps.get(ps.find("n", n).unwrap()).clone();
        let layer = |w: &ParamArray, b: &ParamArray, h: &[f64], act: bool| -> Vec<f64> {
            let mut out = Vec::new();
            for r in 0..w.rows {
                let mut s = b.data[r];
                for c in 0..w.cols {
                    s += w.data[r * w.cols + c] * h[c];
                }
                out.push(if act { s.tanh() } else { s });
            }
            out
        };
        let h1 = layer(&get("w1"), &get("b1"), &x, true);
        let h2 = layer(&get("w2"), &get("b2"), &h1, true);
        layer(&get("w3"), &get("b3"), &h2, false)
    };

    let mut t = Tape::new(&ps);
    let xt = t.input(x.clone());
    let y = net.forward(&mut t, xt).unwrap();
    let want = oracle(&ps);
    for (a, b) in t.value(y).iter().zip(&want) {
        assert!((a - b).abs() < 1e-14);
    }
    assert_eq!(net.eval(&ps, &x), t.value(y));

    let q = t.square(y);
    let loss = t.sum(q);
    let g = t.backward(loss).unwrap();
    let f = |ps: &ParamSet| oracle(ps).iter().map(|v| v * v).sum::<f64>();
    let mut flat = Vec::new();
    for id in net.param_ids() {
        flat.extend_from_slice(g.param(id));
    }
    // param_ids order equals registration order here
    for k in (0..ps.scalar_count()).step_by(7) {
        let mut a = ps.clone();
        let mut b = ps.clone();
        a.flat_set(k, a.flat_get(k) + 1e-6);
        b.flat_set(k, b.flat_get(k) - 1e-6);
        let fd = (f(&a) - f(&b)) / 2e-6;
        assert!(rel_err(flat[k], fd) < 1e-4, "param {k}: {} vs {fd}", flat[k]);
    }
}

#[test]
fn adam_converges_on_quadratic() {
    let mut ps = ParamSet::new();
    let x = ps.add("q", "x", 1, 1, vec![0.0]);
    let mut adam = AdamState::new(&ps, AdamConfig { lr: 0.01, ..Default::default() });
    for _ in 0..2000 {
        let v = ps.get(x).data[0];
        adam.step(&mut ps, &[vec![2.0 * (v - 3.0)]]).unwrap();
    }
    assert!((ps.get(x).data[0] - 3.0).abs() < 1e-2);
}

#[test]
fn adam_zero_gradient_is_noop() {
    let mut ps = ParamSet::new();
    ps.add("q", "x", 2, 1, vec![1.5, -2.0]);
    let before = ps.clone();
    let mut adam = AdamState::new(&ps, AdamConfig::default());
    adam.step(&mut ps, &[vec![0.0, 0.0]]).unwrap();
    assert_eq!(ps, before);
}

#[test]
fn adam_first_step_closed_form() {
    let mut ps = ParamSet::new();
    ps.add("q", "x", 3, 1, vec![0.0; 3]);
    let cfg = AdamConfig::default();
    let mut adam = AdamState::new(&ps, cfg);
    let g = vec![0.5, -3.0, 1e-3];
    adam.step(&mut ps, std::slice::from_ref(&g)).unwrap();
    // bias-corrected m = g, v = g^2, so the step is -lr * g / (|g| + eps)
    for (p, gk) in ps.iter().next().unwrap().data.iter().zip(&g) {
        let want = -cfg.lr * gk / (gk.abs() + cfg.eps);
        assert!((p - want).abs() < 1e-15);
    }
    assert!(adam.step(&mut ps, &[vec![0.0; 2]]).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ps = ParamSet::new();
    Mlp::new(&mut ps, "nn_sa", 5, 10, 10, &mut rng);
    Mlp::new(&mut ps, "nn_de", 10, 50, 4, &mut rng);
    let meta = serde_json::json!({"epoch": 7, "seed": 3});
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &ps, meta.clone()).unwrap();
    assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
    let (back, m) = read_checkpoint(&buf[..]).unwrap();
    assert_eq!(back, ps);
    assert_eq!(m, meta);
    let net = Mlp::bind(&back, "nn_de").unwrap();
    assert_eq!((net.input, net.hidden, net.output), (10, 50, 4));
    buf[0] = b'X';
    assert!(matches!(read_checkpoint(&buf[..]), Err(CheckpointError::BadMagic)));
}
