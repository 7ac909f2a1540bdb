use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// One named parameter array. Matrices are row-major with `rows` rows;
/// vectors have `rows == data.len()` and `cols == 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamArray {
    pub network: String,
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// All trainable arrays of a model, in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    arrays: Vec<ParamArray>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, network: &str, name: &str, rows: usize, cols: usize, data: Vec<f64>) -> ParamId {
        assert_eq!(data.len(), rows * cols, "parameter {network}.{name} has wrong length");
        self.arrays.push(ParamArray {
            network: network.to_string(),
            name: name.to_string(),
            rows,
            cols,
            data,
        });
        ParamId(self.arrays.len() - 1)
    }

    /// Weight matrix drawn from U(-1/sqrt(cols), 1/sqrt(cols)).
    pub fn add_uniform<R: Rng + ?Sized>(&mut self, network: &str, name: &str, rows: usize, cols: usize, rng: &mut R) -> ParamId {
        let b = 1.0 / (cols as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-b..b)).collect();
        self.add(network, name, rows, cols, data)
    }

    pub fn add_zeros(&mut self, network: &str, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(network, name, rows, cols, vec![0.0; rows * cols])
    }

    pub fn get(&self, id: ParamId) -> &ParamArray {
        &self.arrays[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamArray {
        &mut self.arrays[id.0]
    }

    pub fn find(&self, network: &str, name: &str) -> Option<ParamId> {
        self.arrays
            .iter()
            .position(|a| a.network == network && a.name == name)
            .map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamArray> {
        self.arrays.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamArray> {
        self.arrays.iter_mut()
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.arrays.iter().map(|a| a.data.len()).sum()
    }

    /// Scalar `k` in concatenated order, for finite-difference probes.
    pub fn flat_get(&self, mut k: usize) -> f64 {
        for a in &self.arrays {
            if k < a.data.len() {
                return a.data[k];
            }
            k -= a.data.len();
        }
        panic!("flat index out of range")
    }

    pub fn flat_set(&mut self, mut k: usize, v: f64) {
        for a in &mut self.arrays {
            if k < a.data.len() {
                a.data[k] = v;
                return;
            }
            k -= a.data.len();
        }
        panic!("flat index out of range")
    }

    pub fn set_all(&mut self, v: f64) {
        for a in &mut self.arrays {
            a.data.iter_mut().for_each(|x| *x = v);
        }
    }
}
