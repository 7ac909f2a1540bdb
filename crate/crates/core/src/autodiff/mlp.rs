use rand::Rng;

use super::params::{ParamId, ParamSet};
use super::tape::{Tape, TapeError, Tensor};

/// `affine -> tanh -> affine -> tanh -> affine`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    layers: [(ParamId, ParamId); 3],
}

impl Mlp {
    /// Register the six arrays of a new network under `network`.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        network: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Mlp {
        let dims = [(hidden, input), (hidden, hidden), (output, hidden)];
        let mut layers = [(ParamId(0), ParamId(0)); 3];
        for (i, (r, c)) in dims.into_iter().enumerate() {
            let w = params.add_uniform(network, &format!("w{}", i + 1), r, c, rng);
            let b = params.add_zeros(network, &format!("b{}", i + 1), r, 1);
            layers[i] = (w, b);
        }
        Mlp { input, hidden, output, layers }
    }

    /// Rebind to arrays already present in `params` (e.g. after loading).
    pub fn bind(params: &ParamSet, network: &str) -> Option<Mlp> {
        let mut layers = [(ParamId(0), ParamId(0)); 3];
        for (i, l) in layers.iter_mut().enumerate() {
            *l = (
                params.find(network, &format!("w{}", i + 1))?,
                params.find(network, &format!("b{}", i + 1))?,
            );
        }
        let w1 = params.get(layers[0].0);
        let w3 = params.get(layers[2].0);
        Some(Mlp {
            input: w1.cols,
            hidden: w1.rows,
            output: w3.rows,
            layers,
        })
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|(w, b)| [*w, *b])
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Tensor) -> Result<Tensor, TapeError> {
        let mut h = x;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let wt = tape.param(*w);
            let bt = tape.param(*b);
            let a = tape.matvec(wt, h)?;
            h = tape.add(a, bt)?;
            if i < 2 {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }

    /// Untaped forward pass.
    pub fn eval(&self, params: &ParamSet, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let w = params.get(*w);
            let b = &params.get(*b).data;
            let mut out = b.clone();
            for (r, o) in out.iter_mut().enumerate() {
                let row = &w.data[r * w.cols..(r + 1) * w.cols];
                *o += row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
            }
            if i < 2 {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            h = out;
        }
        h
    }
}
