//! Two-layer perceptron encoder with hand-derived gradients, plus the
//! central-finite-difference checker every loss in the crate is validated
//! against.

use crate::linalg::{Matrix, Vector};
use crate::scalar::Scalar;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Elementwise nonlinearity applied between layers (never after the last).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply<F: Scalar>(self, z: F) -> F {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn deriv_from_output<F: Scalar>(self, a: F) -> F {
        match self {
            Activation::Identity => F::one(),
            Activation::Tanh => F::one() - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F: Scalar> {
    pub weight: Matrix<F>, // out x in
    pub bias: Vector<F>,   // out
}

/// Trainable encoder f_theta. The momentum twin is just another `Encoder`
/// with identical shapes; see `memory::momentum_update`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<F: Scalar> {
    pub layers: Vec<Layer<F>>,
    pub activation: Activation,
    /// L2-normalize the output so dot products are cosine similarities.
    pub normalize: bool,
}

/// Parameter gradients, same shapes as the encoder layers.
#[derive(Debug, Clone)]
pub struct EncoderGrads<F: Scalar> {
    pub layers: Vec<Layer<F>>,
}

impl<F: Scalar> EncoderGrads<F> {
    pub fn zeros_like(enc: &Encoder<F>) -> Self {
        Self {
            layers: enc
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.weight.rows, l.weight.cols),
                    bias: Vector::zeros(l.bias.dim()),
                })
                .collect(),
        }
    }

    pub fn axpy(&mut self, s: F, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.axpy(s, &b.weight);
            a.bias.axpy(s, &b.bias);
        }
    }

    pub fn scale_in_place(&mut self, s: F) {
        for l in &mut self.layers {
            for w in &mut l.weight.data {
                *w *= s;
            }
            for b in &mut l.bias.data {
                *b *= s;
            }
        }
    }

    pub fn flatten(&self) -> Vec<F> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weight.data);
            out.extend_from_slice(&l.bias.data);
        }
        out
    }
}

impl<F: Scalar> Encoder<F> {
    /// Seeded random encoder over the given layer widths, e.g. `[16, 32, 8]`
    /// for input dim 16, hidden 32, output dim 8.
    pub fn random(dims: &[usize], activation: Activation, normalize: bool, seed: u64) -> Self {
        assert!(dims.len() >= 2, "need at least one layer");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        for w in dims.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let mut weight = Matrix::zeros(n_out, n_in);
            for v in &mut weight.data {
                *v = F::c(rng.gen_range(-limit..limit));
            }
            layers.push(Layer {
                weight,
                bias: Vector::zeros(n_out),
            });
        }
        Self {
            layers,
            activation,
            normalize,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows
    }

    /// Forward pass. Output is unit-norm when `normalize` is set.
    pub fn encode(&self, input: &Vector<F>) -> Result<Vector<F>> {
        Ok(self.forward(input)?.output)
    }

    fn forward(&self, input: &Vector<F>) -> Result<Trace<F>> {
        if input.dim() != self.input_dim() {
            return Err(Error::Shape(format!(
                "encode: input dim {} != encoder input dim {}",
                input.dim(),
                self.input_dim()
            )));
        }
        let n_layers = self.layers.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weight.matvec(activations.last().unwrap())?;
            for (zj, &bj) in z.data.iter_mut().zip(&layer.bias.data) {
                *zj += bj;
            }
            let a = if i + 1 < n_layers {
                Vector::new(z.data.iter().map(|&v| self.activation.apply(v)).collect())
            } else {
                z
            };
            activations.push(a);
        }
        let pre_norm = activations.last().unwrap().clone();
        let output = if self.normalize {
            pre_norm.normalized()?
        } else {
            pre_norm.clone()
        };
        Ok(Trace {
            activations,
            pre_norm,
            output,
        })
    }

    /// Chain rule through normalization, the layers, and the activation.
    /// Returns parameter gradients plus the gradient with respect to the input.
    pub fn backprop(
        &self,
        input: &Vector<F>,
        output_grad: &Vector<F>,
    ) -> Result<(EncoderGrads<F>, Vector<F>)> {
        let trace = self.forward(input)?;
        if output_grad.dim() != self.output_dim() {
            return Err(Error::Shape(format!(
                "backprop: upstream dim {} != output dim {}",
                output_grad.dim(),
                self.output_dim()
            )));
        }
        let mut grads = EncoderGrads::zeros_like(self);

        // d/dz of y = z/||z||: (g - y (y.g)) / ||z||
        let mut delta = if self.normalize {
            let n = trace.pre_norm.norm();
            let y = &trace.output;
            let yg = y.dot(output_grad);
            let mut d = output_grad.clone();
            d.axpy(-yg, y);
            d.scale(F::one() / n)
        } else {
            output_grad.clone()
        };

        for l in (0..self.layers.len()).rev() {
            let a_in = &trace.activations[l];
            grads.layers[l].weight.add_outer(F::one(), &delta, a_in);
            grads.layers[l].bias.axpy(F::one(), &delta);
            let g_a = self.layers[l].weight.matvec_t(&delta)?;
            if l > 0 {
                // trace.activations[l] is the post-activation output of layer l-1
                delta = Vector::new(
                    g_a.data
                        .iter()
                        .zip(&trace.activations[l].data)
                        .map(|(&g, &a)| g * self.activation.deriv_from_output(a))
                        .collect(),
                );
            } else {
                delta = g_a;
            }
        }
        Ok((grads, delta))
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data.len() + l.bias.dim())
            .sum()
    }

    /// Parameters flattened layer by layer, weights row-major then bias.
    pub fn flatten_params(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weight.data);
            out.extend_from_slice(&l.bias.data);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[F]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "set_params: got {} values, encoder has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut i = 0;
        for l in &mut self.layers {
            let nw = l.weight.data.len();
            l.weight.data.copy_from_slice(&flat[i..i + nw]);
            i += nw;
            let nb = l.bias.dim();
            l.bias.data.copy_from_slice(&flat[i..i + nb]);
            i += nb;
        }
        Ok(())
    }
}

struct Trace<F: Scalar> {
    activations: Vec<Vector<F>>, // a_0 = input .. a_L = last pre-norm output
    pre_norm: Vector<F>,
    output: Vector<F>,
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport<F: Scalar> {
    pub max_rel_error: F,
    pub per_parameter: Vec<F>,
}

/// Compare an analytic parameter gradient against central finite differences
/// of `loss_fn`. Relative error per parameter is
/// |a - n| / max(|a|, |n|, 1e-12).
pub fn finite_diff_check<F, L>(
    loss_fn: L,
    analytic: &[F],
    state: &Encoder<F>,
    h: F,
) -> Result<GradCheckReport<F>>
where
    F: Scalar,
    L: Fn(&Encoder<F>) -> Result<F>,
{
    let base = state.flatten_params();
    if analytic.len() != base.len() {
        return Err(Error::Shape(format!(
            "finite_diff_check: analytic gradient has {} entries, encoder has {} params",
            analytic.len(),
            base.len()
        )));
    }
    let mut probe = state.clone();
    let floor = F::c(1e-12);
    let mut per_parameter = Vec::with_capacity(base.len());
    let mut max_rel_error = F::zero();
    for i in 0..base.len() {
        let mut params = base.clone();
        params[i] = base[i] + h;
        probe.set_params(&params)?;
        let lp = loss_fn(&probe)?;
        params[i] = base[i] - h;
        probe.set_params(&params)?;
        let lm = loss_fn(&probe)?;
        if !lp.is_finite() || !lm.is_finite() {
            return Err(Error::NonFinite("finite_diff_check loss evaluation".into()));
        }
        let numeric = (lp - lm) / (F::c(2.0) * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if rel > max_rel_error {
            max_rel_error = rel;
        }
        per_parameter.push(rel);
    }
    Ok(GradCheckReport {
        max_rel_error,
        per_parameter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_encoder(normalize: bool) -> Encoder<f64> {
        Encoder {
            layers: vec![Layer {
                weight: Matrix::identity(2),
                bias: Vector::zeros(2),
            }],
            activation: Activation::Identity,
            normalize,
        }
    }

    #[test]
    fn identity_passthrough() {
        let enc = identity_encoder(false);
        let y = enc.encode(&Vector::new(vec![3.0, 4.0])).unwrap();
        assert_eq!(y.data, vec![3.0, 4.0]);
    }

    #[test]
    fn identity_normalized() {
        let enc = identity_encoder(true);
        let y = enc.encode(&Vector::new(vec![3.0, 4.0])).unwrap();
        assert_eq!(y.data, vec![0.6, 0.8]);
    }

    #[test]
    fn two_layer_forward_matches_straight_line_oracle() {
        let enc = Encoder::<f64>::random(&[3, 4, 2], Activation::Tanh, false, 0);
        let x = Vector::new(vec![1.0, 1.0, 1.0]);
        let y = enc.encode(&x).unwrap();
        // Independent straight-line oracle: explicit matvec + tanh + matvec.
        let mut h = enc.layers[0].weight.matvec(&x).unwrap();
        for (v, &b) in h.data.iter_mut().zip(&enc.layers[0].bias.data) {
            *v = (*v + b).tanh();
        }
        let mut o = enc.layers[1].weight.matvec(&h).unwrap();
        for (v, &b) in o.data.iter_mut().zip(&enc.layers[1].bias.data) {
            *v += b;
        }
        for (a, b) in y.data.iter().zip(&o.data) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let enc = identity_encoder(false);
        assert!(matches!(
            enc.encode(&Vector::new(vec![1.0])),
            Err(crate::Error::Shape(_))
        ));
    }

    #[test]
    fn scalar_linear_backprop() {
        // w = 2, x = 3, upstream 1 -> dw = 3, dx = 2
        let enc = Encoder::<f64> {
            layers: vec![Layer {
                weight: Matrix {
                    rows: 1,
                    cols: 1,
                    data: vec![2.0],
                },
                bias: Vector::zeros(1),
            }],
            activation: Activation::Identity,
            normalize: false,
        };
        let (g, gx) = enc
            .backprop(&Vector::new(vec![3.0]), &Vector::new(vec![1.0]))
            .unwrap();
        assert_eq!(g.layers[0].weight.data, vec![3.0]);
        assert_eq!(g.layers[0].bias.data, vec![1.0]);
        assert_eq!(gx.data, vec![2.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let enc = Encoder::<f64>::random(&[3, 4, 2], Activation::Tanh, true, 1);
        let (g, gx) = enc
            .backprop(&Vector::new(vec![0.3, -0.2, 0.9]), &Vector::zeros(2))
            .unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(gx.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backprop_matches_finite_differences() {
        // Loss = sum of outputs on a fixed input, seed-0 encoder.
        let enc = Encoder::<f64>::random(&[3, 4, 2], Activation::Tanh, true, 0);
        let x = Vector::new(vec![0.5, -1.0, 2.0]);
        let upstream = Vector::new(vec![1.0, 1.0]);
        let (g, _) = enc.backprop(&x, &upstream).unwrap();
        let report = finite_diff_check(
            |e: &Encoder<f64>| Ok(e.encode(&x)?.data.iter().sum()),
            &g.flatten(),
            &enc,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{}", report.max_rel_error);
    }

    #[test]
    fn quadratic_loss_check_is_near_exact() {
        let enc = Encoder::<f64>::random(&[2, 3, 2], Activation::Tanh, false, 3);
        // L = ||theta||^2, gradient = 2 theta; exact for central differences.
        let analytic: Vec<f64> = enc.flatten_params().iter().map(|&p| 2.0 * p).collect();
        let report = finite_diff_check(
            |e: &Encoder<f64>| Ok(e.flatten_params().iter().map(|p| p * p).sum()),
            &analytic,
            &enc,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);
    }

    #[test]
    fn constant_loss_has_zero_grads_both_ways() {
        let enc = Encoder::<f64>::random(&[2, 3, 2], Activation::Tanh, false, 4);
        let analytic = vec![0.0; enc.num_params()];
        let report =
            finite_diff_check(|_e: &Encoder<f64>| Ok(7.5), &analytic, &enc, 1e-5).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn forward_is_deterministic() {
        let enc = Encoder::<f64>::random(&[3, 4, 2], Activation::Tanh, true, 0);
        let x = Vector::new(vec![0.1, 0.2, 0.3]);
        let a = enc.encode(&x).unwrap();
        let b = enc.encode(&x).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn normalized_output_unit_norm() {
        let enc = Encoder::<f64>::random(&[3, 4, 2], Activation::Tanh, true, 7);
        for i in 0..10 {
            let x = Vector::new(vec![i as f64 + 0.1, -0.5, 1.0]);
            let y = enc.encode(&x).unwrap();
            assert!((y.norm() - 1.0).abs() < 1e-12);
        }
    }
}
