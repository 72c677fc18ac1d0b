//! Small fully connected networks with manual backpropagation.

use std::fmt::Debug;

use ndarray::{Array1, Array2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RlError};

pub trait Real: Float + FromPrimitive + LinalgScalar + ScalarOperand + Debug + Default + Send + Sync + 'static {}
impl<T> Real for T where T: Float + FromPrimitive + LinalgScalar + ScalarOperand + Debug + Default + Send + Sync + 'static {}

fn real<F: Real>(v: f64) -> F {
    F::from_f64(v).expect("representable constant")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Tanh,
}

/// `y = x W + b` for row-major batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Real> Linear<F> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { w: Array2::zeros((inputs, outputs)), b: Array1::zeros(outputs) }
    }
}

/// ReLU hidden layers and a configurable output activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    layers: Vec<Linear<F>>,
    output: Activation,
}

/// Activations saved by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct Cache<F> {
    inputs: Vec<Array2<F>>,
    output: Array2<F>,
}

impl<F> Cache<F> {
    pub fn output(&self) -> &Array2<F> {
        &self.output
    }
}

/// Per-layer parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub layers: Vec<Linear<F>>,
}

impl<F: Real> Mlp<F> {
    /// Uniform fan-in initialization, `U(-1/sqrt(in), 1/sqrt(in))`.
    pub fn new<R: Rng>(sizes: &[usize], output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|s| {
                let bound = 1.0 / (s[0] as f64).sqrt();
                let mut draw = || real::<F>(rng.random_range(-bound..bound));
                Linear {
                    w: Array2::from_shape_simple_fn((s[0], s[1]), &mut draw),
                    b: Array1::from_shape_simple_fn(s[1], &mut draw),
                }
            })
            .collect();
        Self { layers, output }
    }

    pub fn zeros(sizes: &[usize], output: Activation) -> Self {
        let layers = sizes.windows(2).map(|s| Linear::zeros(s[0], s[1])).collect();
        Self { layers, output }
    }

    pub fn from_layers(layers: Vec<Linear<F>>, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(RlError::Checkpoint("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.b.len() != l.w.ncols() {
                return Err(RlError::Checkpoint(format!("layer {i}: bias does not match weights")));
            }
            if i > 0 && layers[i - 1].w.ncols() != l.w.nrows() {
                return Err(RlError::Checkpoint(format!("layer {i}: input size mismatch")));
            }
        }
        Ok(Self { layers, output })
    }

    pub fn layers(&self) -> &[Linear<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear<F>] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.ncols())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.w) + &l.b;
            if i < last {
                z.mapv_inplace(|v| v.max(F::zero()));
            } else if self.output == Activation::Tanh {
                z.mapv_inplace(F::tanh);
            }
            a = z;
        }
        a
    }

    pub fn forward_cached(&self, x: &Array2<F>) -> Cache<F> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.w) + &l.b;
            if i < last {
                z.mapv_inplace(|v| v.max(F::zero()));
            } else if self.output == Activation::Tanh {
                z.mapv_inplace(F::tanh);
            }
            inputs.push(std::mem::replace(&mut a, z));
        }
        Cache { inputs, output: a }
    }

    /// Backpropagates `grad_out = dL/dy`. Returns parameter gradients (when
    /// requested) and `dL/dx`.
    pub fn backward(&self, cache: &Cache<F>, grad_out: &Array2<F>, with_params: bool) -> (Option<Grads<F>>, Array2<F>) {
        let mut dz = grad_out.clone();
        if self.output == Activation::Tanh {
            Zip::from(&mut dz).and(&cache.output).for_each(|d, &y| *d = *d * (F::one() - y * y));
        }
        let mut grads = with_params.then(|| Vec::with_capacity(self.layers.len()));
        for i in (0..self.layers.len()).rev() {
            let input = &cache.inputs[i];
            if let Some(g) = grads.as_mut() {
                g.push(Linear { w: input.t().dot(&dz), b: dz.sum_axis(Axis(0)) });
            }
            let mut da = dz.dot(&self.layers[i].w.t());
            if i > 0 {
                Zip::from(&mut da).and(input).for_each(|d, &a| {
                    if a <= F::zero() {
                        *d = F::zero();
                    }
                });
            }
            dz = da;
        }
        let grads = grads.map(|mut g| {
            g.reverse();
            Grads { layers: g }
        });
        (grads, dz)
    }

    /// `self <- (1 - tau) self + tau online`.
    pub fn soft_update_from(&mut self, online: &Mlp<F>, tau: F) {
        let keep = F::one() - tau;
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            Zip::from(&mut t.w).and(&o.w).for_each(|t, &o| *t = keep * *t + tau * o);
            Zip::from(&mut t.b).and(&o.b).for_each(|t, &o| *t = keep * *t + tau * o);
        }
    }

    /// Flattened parameters, weights then bias per layer.
    pub fn flat_parameters(&self) -> Vec<F> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()).copied()).collect()
    }

    pub fn set_flat_parameters(&mut self, values: &[F]) {
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = it.next().expect("parameter vector too short");
            }
        }
    }
}

impl<F: Real> Grads<F> {
    pub fn flat(&self) -> Vec<F> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()).copied()).collect()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    t: i32,
    m: Vec<Linear<F>>,
    v: Vec<Linear<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(net: &Mlp<F>, lr: F) -> Self {
        let zeros = || net.layers.iter().map(|l| Linear::zeros(l.w.nrows(), l.w.ncols())).collect();
        Self { lr, beta1: real(0.9), beta2: real(0.999), eps: real(1e-8), t: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, net: &mut Mlp<F>, grads: &Grads<F>) {
        self.t += 1;
        let c1 = F::one() - self.beta1.powi(self.t);
        let c2 = F::one() - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let step = self.lr * c2.sqrt() / c1;
        let update = |p: &mut F, m: &mut F, v: &mut F, g: F| {
            *m = b1 * *m + (F::one() - b1) * g;
            *v = b2 * *v + (F::one() - b2) * g * g;
            *p = *p - step * *m / (v.sqrt() + eps);
        };
        for (((layer, g), m), v) in net.layers.iter_mut().zip(&grads.layers).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut layer.w).and(&mut m.w).and(&mut v.w).and(&g.w).for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.b).and(&mut m.b).and(&mut v.b).and(&g.b).for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}
