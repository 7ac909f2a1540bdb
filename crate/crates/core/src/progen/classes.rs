//! The built-in class table.
//!
//! Templates use `{tK}` for the K-th generated constant and `{o}` for an
//! observed value. Squared parameters are injected after squaring.

use super::{ClassSpec, ParamSpec};

fn u(lo: f64, hi: f64) -> ParamSpec {
    ParamSpec { lo, hi, squared: false }
}

fn sq(lo: f64, hi: f64) -> ParamSpec {
    ParamSpec { lo, hi, squared: true }
}

fn spec(class: &str, params: Vec<ParamSpec>, template: &str, halfwidth: Option<f64>) -> ClassSpec {
    ClassSpec {
        class: class.to_string(),
        kind: None,
        graph: None,
        params,
        template: template.to_string(),
        override_halfwidth: halfwidth,
    }
}

pub(super) fn gauss() -> ClassSpec {
    spec(
        "gauss",
        vec![u(-5.0, 5.0), sq(0.0, 20.0), u(-3.0, 3.0), u(-10.0, 10.0), sq(0.5, 10.0)],
        "mz := {t1}; vz := {t2}; c1 := {t3}; c2 := {t4}; vx := {t5}
z1 ~ normal(mz, vz); z2 := z1 * c1; z3 := z2 + c2
obs(normal(z3, vx), {o})",
        Some(2.0),
    )
}

pub(super) fn hierl() -> ClassSpec {
    spec(
        "hierl",
        vec![u(-5.0, 5.0), sq(0.0, 50.0), sq(0.0, 10.0), sq(0.0, 10.0), sq(0.5, 10.0), sq(0.5, 10.0)],
        "mg := {t1}; vg := {t2}; vt1 := {t3}; vt2 := {t4}; vx1 := {t5}; vx2 := {t6}
g ~ normal(mg, vg); t1 ~ normal(g, vt1); t2 ~ normal(g, vt2)
obs(normal(t1, vx1), {o}); obs(normal(t2, vx2), {o})",
        None,
    )
}

pub(super) fn hierd() -> ClassSpec {
    spec(
        "hierd",
        vec![
            u(-10.0, 10.0),
            sq(0.0, 100.0),
            sq(0.0, 10.0),
            sq(0.0, 10.0),
            u(-5.0, 5.0),
            sq(0.0, 10.0),
            u(-5.0, 5.0),
            u(-5.0, 5.0),
            sq(0.5, 10.0),
            sq(0.5, 10.0),
        ],
        "ma0 := {t1}; va0 := {t2}; va1 := {t3}; va2 := {t4}; mb := {t5}
vb := {t6}; d1 := {t7}; d2 := {t8}; vx1 := {t9}; vx2 := {t10}
a0 ~ normal(ma0, va0); a1 ~ normal(a0, va1); a2 ~ normal(a0, va2)
b ~ normal(mb, vb)
t1 := b * d1; t2 := a1 + t1; obs(normal(t2, vx1), {o})
t3 := b * d2; t4 := a2 + t3; obs(normal(t4, vx2), {o})",
        Some(2.0),
    )
}

pub(super) fn cluster() -> ClassSpec {
    let mut t = String::from(
        "mg1 := {t1}; vg1 := {t2}; mg2 := {t3}; vg2 := {t4}; vx := {t5}
g1 ~ normal(mg1, vg1); g2 ~ normal(mg2, vg2)
zero := 0; hund := 100\n",
    );
    for k in 1..=5 {
        t.push_str(&format!(
            "t{k} ~ normal(zero, hund); m{k} := if (t{k} > zero) g1 else g2; obs(normal(m{k}, vx), {{o}})\n"
        ));
    }
    spec(
        "cluster",
        vec![u(-15.0, 15.0), sq(0.5, 50.0), u(-15.0, 15.0), sq(0.5, 50.0), sq(0.5, 10.0)],
        t.trim_end(),
        None,
    )
}

fn milky_params() -> Vec<ParamSpec> {
    vec![
        u(-10.0, 10.0),
        sq(0.0, 30.0),
        u(-2.0, 2.0),
        sq(0.0, 10.0),
        u(-5.0, 5.0),
        sq(0.0, 10.0),
        sq(0.5, 10.0),
        sq(0.5, 10.0),
    ]
}

const MILKY_HEAD: &str = "mmass := {t1}; vmass := {t2}; c1 := {t3}; vg1 := {t4}; c2 := {t5}
vg2 := {t6}; vx1 := {t7}; vx2 := {t8}
mass ~ normal(mmass, vmass)
mass1 := mass * c1; g1 ~ normal(mass1, vg1)
mass2 := mass + c2; g2 ~ normal(mass2, vg2)\n";

pub(super) fn milky() -> ClassSpec {
    let t = format!("{MILKY_HEAD}obs(normal(g1, vx1), {{o}}); obs(normal(g2, vx2), {{o}})");
    spec("milky", milky_params(), &t, None)
}

pub(super) fn milkyo() -> ClassSpec {
    let five = ["{o}"; 5].join(", ");
    let t = format!("{MILKY_HEAD}obs(normal(g1, vx1), [{five}])\nobs(normal(g2, vx2), [{five}])");
    spec("milkyo", milky_params(), &t, None)
}

pub(super) fn rb() -> ClassSpec {
    spec(
        "rb",
        vec![u(-8.0, 8.0), sq(0.0, 5.0), u(-8.0, 8.0), sq(0.0, 5.0), sq(0.5, 10.0)],
        "mz1 := {t1}; vz1 := {t2}; mz2 := {t3}; vz2 := {t4}; vx := {t5}
z1 ~ normal(mz1, vz1); z2 ~ normal(mz2, vz2); r := rosenbrock(z1, z2)
obs(normal(r, vx), {o})",
        Some(1.5),
    )
}

/// A tree over `z0..`: `parents[k - 1]` is the parent of `zk`, and
/// `observed` lists the nodes carrying an observation, in observation order.
struct Tree {
    parents: &'static [usize],
    observed: &'static [usize],
}

const EXT1_GRAPHS: [Tree; 4] = [
    Tree { parents: &[0, 1, 2], observed: &[3] },
    Tree { parents: &[0, 1, 1], observed: &[2, 3] },
    Tree { parents: &[0, 0, 1], observed: &[3, 2] },
    Tree { parents: &[0, 0, 0], observed: &[1, 2, 3] },
];

const EXT2_GRAPHS: [Tree; 5] = [
    Tree { parents: &[0, 0, 0, 1, 1, 2], observed: &[4, 5, 6, 3] },
    Tree { parents: &[0, 0, 0, 1, 2, 3], observed: &[4, 5, 6] },
    Tree { parents: &[0, 0, 1, 1, 2, 2], observed: &[3, 4, 5, 6] },
    Tree { parents: &[0, 0, 0, 0, 1, 2], observed: &[5, 6, 3, 4] },
    Tree { parents: &[0, 0, 1, 1, 1, 2], observed: &[3, 4, 5, 6] },
];

const MULMOD_GRAPHS: [(Tree, usize); 3] = [
    (Tree { parents: &[0, 1], observed: &[2] }, 2),
    (Tree { parents: &[0, 1], observed: &[2] }, 1),
    (Tree { parents: &[0, 0], observed: &[1, 2] }, 2),
];

/// Template for a tree where node `det` is `proc(parent)` and every other
/// node is Gaussian around its parent. Returns the template and its
/// parameter table.
fn tree_template(tree: &Tree, det: usize, proc: &str, root: ParamSpec, var: ParamSpec, obs_var: ParamSpec) -> (String, Vec<ParamSpec>) {
    let mut params = vec![root, var];
    let mut consts = vec!["mz0 := {t1}".to_string(), "vz0 := {t2}".to_string()];
    let mut body = vec!["z0 ~ normal(mz0, vz0)".to_string()];
    for (k, &p) in tree.parents.iter().enumerate().map(|(i, p)| (i + 1, p)) {
        if k == det {
            body.push(format!("z{k} := {proc}(z{p})"));
        } else {
            params.push(var);
            consts.push(format!("vz{k} := {{t{}}}", params.len()));
            body.push(format!("z{k} ~ normal(z{p}, vz{k})"));
        }
    }
    for (j, &x) in tree.observed.iter().enumerate() {
        params.push(obs_var);
        consts.push(format!("vx{} := {{t{}}}", j + 1, params.len()));
        body.push(format!("obs(normal(z{x}, vx{}), {{o}})", j + 1));
    }
    (format!("{}\n{}", consts.join("; "), body.join("\n")), params)
}

/// ext1 type (i, j): `nl` at position i in dependency graph j, both 1-based.
pub(super) fn ext1(i: usize, j: usize) -> ClassSpec {
    let (template, params) = tree_template(&EXT1_GRAPHS[j - 1], i, "nl", u(-5.0, 5.0), sq(0.0, 20.0), sq(0.5, 10.0));
    ClassSpec {
        kind: Some(4 * (i - 1) + j),
        graph: Some(j),
        ..spec("ext1", params, &template, Some(2.0))
    }
}

/// ext2 type for dependency graph j (1-based); `nl` is always z2.
pub(super) fn ext2(j: usize) -> ClassSpec {
    let (template, params) = tree_template(&EXT2_GRAPHS[j - 1], 2, "nl", u(-5.0, 5.0), sq(0.0, 10.0), sq(0.0, 10.0));
    ClassSpec {
        kind: Some(j),
        graph: Some(j),
        ..spec("ext2", params, &template, Some(2.0))
    }
}

pub(super) fn mulmod(t: usize) -> ClassSpec {
    let (tree, det) = &MULMOD_GRAPHS[t - 1];
    let (template, params) = tree_template(tree, *det, "mm", u(-5.0, 5.0), sq(0.0, 20.0), sq(0.5, 10.0));
    ClassSpec {
        kind: Some(t),
        graph: Some(t),
        ..spec("mulmod", params, &template, Some(2.0))
    }
}
