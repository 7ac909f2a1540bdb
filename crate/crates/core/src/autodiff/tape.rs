use super::params::{ParamId, ParamSet};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that
/// created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tensor(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param,
    MatVec(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Sum(usize),
    Concat(Vec<usize>),
    Slice(usize, usize),
    Clamp(usize, f64, f64),
    GaussLogPdf { x: usize, mean: usize, var: usize },
    GaussCrossEntropy { mean: usize, var: usize, zbar: Vec<f64>, spread: Vec<f64> },
}

#[derive(Clone, Debug)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    op: Op,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TapeError {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape { op: &'static str, left: usize, right: usize },
    #[error("backward needs a scalar, got length {0}")]
    NotScalar(usize),
}

/// Reverse-mode tape. Values are vectors; parameter leaves may be
/// matrices (row-major) and are only consumed by [`Tape::matvec`].
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_leaf: Vec<Option<usize>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
            param_leaf: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, op: Op) -> Tensor {
        self.nodes.push(Node { value, rows, op });
        Tensor(self.nodes.len() - 1)
    }

    pub fn value(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.0].value
    }

    pub fn scalar(&self, t: Tensor) -> f64 {
        self.nodes[t.0].value[0]
    }

    /// A constant (non-differentiated) vector. Gradients still flow to it
    /// and can be read back with [`Gradients::wrt`].
    pub fn input(&mut self, v: Vec<f64>) -> Tensor {
        let n = v.len();
        self.push(v, n, Op::Input)
    }

    /// Leaf for a parameter array; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Tensor {
        if let Some(n) = self.param_leaf[id.0] {
            return Tensor(n);
        }
        let p = self.params.get(id);
        let t = self.push(p.data.clone(), p.rows, Op::Param);
        self.param_leaf[id.0] = Some(t.0);
        t
    }

    fn check(&self, op: &'static str, a: Tensor, b: Tensor) -> Result<(), TapeError> {
        let (l, r) = (self.nodes[a.0].value.len(), self.nodes[b.0].value.len());
        if l != r {
            return Err(TapeError::Shape { op, left: l, right: r });
        }
        Ok(())
    }

    fn unary(&mut self, a: Tensor, f: impl Fn(f64) -> f64, op: Op) -> Tensor {
        let v: Vec<f64> = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        let n = v.len();
        self.push(v, n, op)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Tensor,
        b: Tensor,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Tensor, TapeError> {
        self.check(name, a, b)?;
        let v: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let n = v.len();
        Ok(self.push(v, n, op))
    }

    /// `w x` for a row-major matrix `w` with `rows` rows.
    pub fn matvec(&mut self, w: Tensor, x: Tensor) -> Result<Tensor, TapeError> {
        let rows = self.nodes[w.0].rows;
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        let cols = wv.len() / rows.max(1);
        if cols != xv.len() || rows * cols != wv.len() {
            return Err(TapeError::Shape { op: "matvec", left: cols, right: xv.len() });
        }
        let out = (0..rows)
            .map(|r| wv[r * cols..(r + 1) * cols].iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.push(out, rows, Op::MatVec(w.0, x.0)))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, TapeError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, TapeError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, TapeError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, a: Tensor, c: f64) -> Tensor {
        self.unary(a, |x| c * x, Op::Scale(a.0, c))
    }

    pub fn add_scalar(&mut self, a: Tensor, c: f64) -> Tensor {
        self.unary(a, |x| x + c, Op::AddScalar(a.0))
    }

    pub fn tanh(&mut self, a: Tensor) -> Tensor {
        self.unary(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn exp(&mut self, a: Tensor) -> Tensor {
        self.unary(a, f64::exp, Op::Exp(a.0))
    }

    pub fn log(&mut self, a: Tensor) -> Tensor {
        self.unary(a, f64::ln, Op::Log(a.0))
    }

    pub fn square(&mut self, a: Tensor) -> Tensor {
        self.unary(a, |x| x * x, Op::Square(a.0))
    }

    pub fn sum(&mut self, a: Tensor) -> Tensor {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(vec![s], 1, Op::Sum(a.0))
    }

    /// Clamp to `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Tensor, lo: f64, hi: f64) -> Tensor {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a.0, lo, hi))
    }

    pub fn concat(&mut self, parts: &[Tensor]) -> Tensor {
        let mut v = Vec::new();
        for p in parts {
            v.extend_from_slice(&self.nodes[p.0].value);
        }
        let n = v.len();
        self.push(v, n, Op::Concat(parts.iter().map(|p| p.0).collect()))
    }

    pub fn slice(&mut self, a: Tensor, start: usize, len: usize) -> Tensor {
        let v = self.nodes[a.0].value[start..start + len].to_vec();
        self.push(v, len, Op::Slice(a.0, start))
    }

    /// Elementwise `log N(x; mean, var)` with `var` the variance.
    pub fn gauss_log_pdf(&mut self, x: Tensor, mean: Tensor, var: Tensor) -> Result<Tensor, TapeError> {
        self.check("gauss_log_pdf", x, mean)?;
        self.check("gauss_log_pdf", x, var)?;
        let v: Vec<f64> = (0..self.nodes[x.0].value.len())
            .map(|i| {
                let (xi, m, c) = (self.nodes[x.0].value[i], self.nodes[mean.0].value[i], self.nodes[var.0].value[i]);
                -0.5 * (LN_2PI + c.ln()) - (xi - m) * (xi - m) / (2.0 * c)
            })
            .collect();
        let n = v.len();
        Ok(self.push(v, n, Op::GaussLogPdf { x: x.0, mean: mean.0, var: var.0 }))
    }

    /// `-sum_j w_j log N(z_j; mean, var)` summed over coordinates, for a
    /// normalised weighted sample summarised by its per-coordinate weighted
    /// mean `zbar` and weighted variance `spread`.
    pub fn gauss_cross_entropy(
        &mut self,
        mean: Tensor,
        var: Tensor,
        zbar: &[f64],
        spread: &[f64],
    ) -> Result<Tensor, TapeError> {
        self.check("gauss_cross_entropy", mean, var)?;
        let n = self.nodes[mean.0].value.len();
        if zbar.len() != n || spread.len() != n {
            return Err(TapeError::Shape { op: "gauss_cross_entropy", left: n, right: zbar.len() });
        }
        let s: f64 = (0..n)
            .map(|i| {
                let (m, c) = (self.nodes[mean.0].value[i], self.nodes[var.0].value[i]);
                0.5 * (LN_2PI + c.ln()) + (spread[i] + (zbar[i] - m).powi(2)) / (2.0 * c)
            })
            .sum();
        Ok(self.push(
            vec![s],
            1,
            Op::GaussCrossEntropy {
                mean: mean.0,
                var: var.0,
                zbar: zbar.to_vec(),
                spread: spread.to_vec(),
            },
        ))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Tensor) -> Result<Gradients, TapeError> {
        let len = self.nodes[loss.0].value.len();
        if len != 1 {
            return Err(TapeError::NotScalar(len));
        }
        let mut g: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        g[loss.0] = Some(vec![1.0]);
        let acc = |g: &mut Vec<Option<Vec<f64>>>, i: usize, nodes: &[Node], f: &mut dyn FnMut(&mut [f64])| {
            let slot = g[i].get_or_insert_with(|| vec![0.0; nodes[i].value.len()]);
            f(slot);
        };
        for i in (0..=loss.0).rev() {
            let Some(up) = g[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input | Op::Param => {}
                Op::MatVec(w, x) => {
                    let rows = node.rows;
                    let cols = self.nodes[*x].value.len();
                    let xv = &self.nodes[*x].value;
                    let wv = &self.nodes[*w].value;
                    acc(&mut g, *w, &self.nodes, &mut |gw| {
                        for r in 0..rows {
                            for c in 0..cols {
                                gw[r * cols + c] += up[r] * xv[c];
                            }
                        }
                    });
                    acc(&mut g, *x, &self.nodes, &mut |gx| {
                        for r in 0..rows {
                            for c in 0..cols {
                                gx[c] += up[r] * wv[r * cols + c];
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    acc(&mut g, *a, &self.nodes, &mut |ga| ga.iter_mut().zip(&up).for_each(|(x, u)| *x += u));
                    acc(&mut g, *b, &self.nodes, &mut |gb| gb.iter_mut().zip(&up).for_each(|(x, u)| *x += u));
                }
                Op::Sub(a, b) => {
                    acc(&mut g, *a, &self.nodes, &mut |ga| ga.iter_mut().zip(&up).for_each(|(x, u)| *x += u));
                    acc(&mut g, *b, &self.nodes, &mut |gb| gb.iter_mut().zip(&up).for_each(|(x, u)| *x -= u));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    acc(&mut g, *a, &self.nodes, &mut |ga| {
                        for k in 0..ga.len() {
                            ga[k] += up[k] * bv[k];
                        }
                    });
                    acc(&mut g, *b, &self.nodes, &mut |gb| {
                        for k in 0..gb.len() {
                            gb[k] += up[k] * av[k];
                        }
                    });
                }
                Op::Scale(a, c) => {
                    acc(&mut g, *a, &self.nodes, &mut |ga| ga.iter_mut().zip(&up).for_each(|(x, u)| *x += c * u));
                }
                Op::AddScalar(a) => {
                    acc(&mut g, *a, &self.nodes, &mut |ga| ga.iter_mut().zip(&up).for_each(|(x, u)| *x += u));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(&mut g, *a, &self.nodes, &mut |ga| {
                        for k in 0..ga.len() {
                            ga[k] += up[k] * (1.0 - y[k] * y[k]);
                        }
                    });
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    acc(&mut g, *a, &self.nodes, &mut |ga| {
                        for k in 0..ga.len() {
                            ga[k] += up[k] * y[k];
                        }
                    });
                }
                Op::Log(a) => {
                    let x = &self.nodes[*a].value;
                    acc(&mut g, *a, &self.nodes, &mut |ga| {
                        for k in 0..ga.len() {
                            ga[k] += up[k] / x[k];
                        }
                    });
                }
                Op::Square(a) => {
                    let x = &self.nodes[*a].value;
                    acc(&mut g, *a, &self.nodes, &mut |ga| {
                        for k in 0..ga.len() {
                            ga[k] += 2.0 * up[k] * x[k];
                        }
                    });
                }
                Op::Sum(a) => {
                    acc(&mut g, *a, &self.nodes, &mut |ga| ga.iter_mut().for_each(|x| *x += up[0]));
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.nodes[p].value.len();
                        acc(&mut g, p, &self.nodes, &mut |gp| {
                            for k in 0..n {
                                gp[k] += up[off + k];
                            }
                        });
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    acc(&mut g, *a, &self.nodes, &mut |ga| {
                        for (k, u) in up.iter().enumerate() {
                            ga[start + k] += u;
                        }
                    });
                }
                Op::Clamp(a, lo, hi) => {
                    let x = &self.nodes[*a].value;
                    acc(&mut g, *a, &self.nodes, &mut |ga| {
                        for k in 0..ga.len() {
                            if x[k] > *lo && x[k] < *hi {
                                ga[k] += up[k];
                            }
                        }
                    });
                }
                Op::GaussLogPdf { x, mean, var } => {
                    let n = up.len();
                    let (xv, mv, cv) = (&self.nodes[*x].value, &self.nodes[*mean].value, &self.nodes[*var].value);
                    let dm: Vec<f64> = (0..n).map(|k| (xv[k] - mv[k]) / cv[k]).collect();
                    let dv: Vec<f64> = (0..n)
                        .map(|k| -0.5 / cv[k] + (xv[k] - mv[k]).powi(2) / (2.0 * cv[k] * cv[k]))
                        .collect();
                    acc(&mut g, *x, &self.nodes, &mut |gx| (0..n).for_each(|k| gx[k] -= up[k] * dm[k]));
                    acc(&mut g, *mean, &self.nodes, &mut |gm| (0..n).for_each(|k| gm[k] += up[k] * dm[k]));
                    acc(&mut g, *var, &self.nodes, &mut |gv| (0..n).for_each(|k| gv[k] += up[k] * dv[k]));
                }
                Op::GaussCrossEntropy { mean, var, zbar, spread } => {
                    let n = zbar.len();
                    let (mv, cv) = (&self.nodes[*mean].value, &self.nodes[*var].value);
                    acc(&mut g, *mean, &self.nodes, &mut |gm| {
                        (0..n).for_each(|k| gm[k] -= up[0] * (zbar[k] - mv[k]) / cv[k])
                    });
                    acc(&mut g, *var, &self.nodes, &mut |gv| {
                        (0..n).for_each(|k| {
                            let c = cv[k];
                            gv[k] += up[0] * (0.5 / c - (spread[k] + (zbar[k] - mv[k]).powi(2)) / (2.0 * c * c))
                        })
                    });
                }
            }
            g[i] = Some(up);
        }
        let mut params = vec![Vec::new(); self.params.len()];
        for (pid, leaf) in self.param_leaf.iter().enumerate() {
            params[pid] = match leaf.and_then(|n| g.get(n).cloned().flatten()) {
                Some(v) => v,
                None => vec![0.0; self.params.get(ParamId(pid)).data.len()],
            };
        }
        Ok(Gradients { nodes: g, params })
    }
}

/// Result of [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<Vec<f64>>,
}

impl Gradients {
    /// Gradient with respect to any node created before the loss, or zeros
    /// if the loss does not depend on it.
    pub fn wrt(&self, t: Tensor) -> Option<&[f64]> {
        self.nodes.get(t.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, id: ParamId) -> &[f64] {
        &self.params[id.0]
    }

    /// Per-parameter-array gradients, indexed like the parameter set.
    pub fn into_params(self) -> Vec<Vec<f64>> {
        self.params
    }
}
