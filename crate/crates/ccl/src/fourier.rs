//! 1-D discrete Fourier transform of encoder outputs and the amplitude
//! spectrum mapping M(x) = |F(x)| elementwise, with its gradient.
//!
//! Convention: the forward transform is unnormalized (no 1/D or 1/sqrt(D)
//! factor), so the norm identity reads ||x||^2 = (1/D) ||M(x)||^2. Power-of-two
//! lengths use a radix-2 FFT; everything else falls back to the O(D^2)
//! definition.

use crate::linalg::Vector;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Complex spectrum of a real signal, split into real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<F: Scalar> {
    pub real: Vector<F>,
    pub imag: Vector<F>,
}

impl<F: Scalar> Spectrum<F> {
    pub fn dim(&self) -> usize {
        self.real.dim()
    }
}

/// Elementwise modulus of a spectrum; all entries nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeFeature<F: Scalar> {
    pub values: Vector<F>,
}

/// X_k = sum_n x_n (cos(2 pi k n / D) - i sin(2 pi k n / D))
pub fn dft<F: Scalar>(x: &Vector<F>) -> Result<Spectrum<F>> {
    let d = x.dim();
    if d == 0 {
        return Err(Error::Empty("dft of empty vector".into()));
    }
    if d.is_power_of_two() {
        fft_radix2(x)
    } else {
        dft_definition(x)
    }
}

/// O(D^2) transform straight from the definition. Public so tests can pit the
/// fast path against it.
pub fn dft_definition<F: Scalar>(x: &Vector<F>) -> Result<Spectrum<F>> {
    let d = x.dim();
    if d == 0 {
        return Err(Error::Empty("dft of empty vector".into()));
    }
    let two_pi = F::c(std::f64::consts::TAU);
    let df = F::c(d as f64);
    let mut real = Vec::with_capacity(d);
    let mut imag = Vec::with_capacity(d);
    for k in 0..d {
        let mut re = F::zero();
        let mut im = F::zero();
        for (n, &xn) in x.data.iter().enumerate() {
            let angle = two_pi * F::c((k * n) as f64) / df;
            re += xn * angle.cos();
            im -= xn * angle.sin();
        }
        real.push(re);
        imag.push(im);
    }
    Ok(Spectrum {
        real: Vector::new(real),
        imag: Vector::new(imag),
    })
}

fn fft_radix2<F: Scalar>(x: &Vector<F>) -> Result<Spectrum<F>> {
    let d = x.dim();
    debug_assert!(d.is_power_of_two());
    if d == 1 {
        return Ok(Spectrum {
            real: x.clone(),
            imag: Vector::zeros(1),
        });
    }
    let mut re = x.data.clone();
    let mut im = vec![F::zero(); d];

    // Bit-reversal permutation.
    let bits = d.trailing_zeros();
    for i in 0..d {
        let j = (i as u64).reverse_bits() >> (64 - bits) as u64;
        let j = j as usize;
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= d {
        let ang = -std::f64::consts::TAU / len as f64;
        let (w_re, w_im) = (F::c(ang.cos()), F::c(ang.sin()));
        let mut start = 0;
        while start < d {
            let mut cur_re = F::one();
            let mut cur_im = F::zero();
            for k in 0..len / 2 {
                let a = start + k;
                let b = a + len / 2;
                let t_re = re[b] * cur_re - im[b] * cur_im;
                let t_im = re[b] * cur_im + im[b] * cur_re;
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
            start += len;
        }
        len <<= 1;
    }
    Ok(Spectrum {
        real: Vector::new(re),
        imag: Vector::new(im),
    })
}

/// Elementwise modulus, exact (no epsilon).
pub fn amplitude<F: Scalar>(s: &Spectrum<F>) -> AmplitudeFeature<F> {
    amplitude_eps(s, F::zero())
}

/// Modulus with an epsilon guard, sqrt(re^2 + im^2 + eps), used during
/// training so the gradient stays finite at zero-amplitude components.
pub fn amplitude_eps<F: Scalar>(s: &Spectrum<F>, eps: F) -> AmplitudeFeature<F> {
    let values = s
        .real
        .data
        .iter()
        .zip(&s.imag.data)
        .map(|(&re, &im)| (re * re + im * im + eps).sqrt())
        .collect();
    AmplitudeFeature {
        values: Vector::new(values),
    }
}

/// Epsilon used by training-path amplitude gradients.
pub const AMPLITUDE_EPS: f64 = 1e-12;

/// Gradient of `upstream . M(x)` with respect to x, chain rule through the
/// real and imaginary parts. Fails when a component has zero amplitude and
/// `eps` is zero (the modulus is nondifferentiable there).
pub fn amplitude_backward<F: Scalar>(
    x: &Vector<F>,
    upstream: &Vector<F>,
    eps: F,
) -> Result<Vector<F>> {
    let d = x.dim();
    if upstream.dim() != d {
        return Err(Error::Shape(format!(
            "amplitude_backward: upstream dim {} != signal dim {}",
            upstream.dim(),
            d
        )));
    }
    let spec = dft(x)?;
    let amp = amplitude_eps(&spec, eps);
    // Per-component weight u_k / M_k applied to (re_k, im_k).
    let mut wre = Vec::with_capacity(d);
    let mut wim = Vec::with_capacity(d);
    for k in 0..d {
        let m = amp.values.data[k];
        if m == F::zero() {
            return Err(Error::ZeroAmplitude);
        }
        let u = upstream.data[k] / m;
        wre.push(u * spec.real.data[k]);
        wim.push(u * spec.imag.data[k]);
    }
    // d re_k / d x_n = cos(2 pi k n / D), d im_k / d x_n = -sin(2 pi k n / D)
    let two_pi = F::c(std::f64::consts::TAU);
    let df = F::c(d as f64);
    let mut grad = Vec::with_capacity(d);
    for n in 0..d {
        let mut g = F::zero();
        for k in 0..d {
            let angle = two_pi * F::c((k * n) as f64) / df;
            g += wre[k] * angle.cos() - wim[k] * angle.sin();
        }
        grad.push(g);
    }
    Ok(Vector::new(grad))
}

/// | ||x||^2 - (1/D) ||M(x)||^2 | / max(||x||^2, 1e-12)
pub fn parseval_residual<F: Scalar>(x: &Vector<F>) -> Result<F> {
    let spec = dft(x)?;
    let amp = amplitude(&spec);
    let lhs = x.norm_sq();
    let rhs = amp.values.norm_sq() / F::c(x.dim() as f64);
    Ok((lhs - rhs).abs() / lhs.max(F::c(1e-12)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(data: &[f64]) -> Vector<f64> {
        Vector::new(data.to_vec())
    }

    #[test]
    fn delta_input_flat_spectrum() {
        let s = dft(&v(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        for k in 0..4 {
            assert!((s.real.data[k] - 1.0).abs() < 1e-12);
            assert!(s.imag.data[k].abs() < 1e-12);
        }
    }

    #[test]
    fn dc_only() {
        let s = dft(&v(&[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert!((s.real.data[0] - 4.0).abs() < 1e-12);
        for k in 1..4 {
            assert!(s.real.data[k].abs() < 1e-12);
            assert!(s.imag.data[k].abs() < 1e-12);
        }
    }

    #[test]
    fn nyquist_tone() {
        let s = dft(&v(&[1.0, -1.0, 1.0, -1.0])).unwrap();
        let a = amplitude(&s);
        for k in 0..4 {
            let expect = if k == 2 { 4.0 } else { 0.0 };
            assert!((a.values.data[k] - expect).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn empty_vector_errors() {
        assert!(matches!(dft(&v(&[])), Err(crate::Error::Empty(_))));
    }

    #[test]
    fn amplitude_three_four_five() {
        let s = Spectrum {
            real: v(&[3.0, 0.0]),
            imag: v(&[4.0, 0.0]),
        };
        assert_eq!(amplitude(&s).values.data, vec![5.0, 0.0]);
    }

    #[test]
    fn amplitude_of_zero_spectrum() {
        let s = Spectrum {
            real: v(&[0.0, 0.0]),
            imag: v(&[0.0, 0.0]),
        };
        assert_eq!(amplitude(&s).values.data, vec![0.0, 0.0]);
    }

    #[test]
    fn amplitude_of_delta_is_all_ones() {
        let a = amplitude(&dft(&v(&[1.0, 0.0, 0.0, 0.0])).unwrap());
        for &m in &a.values.data {
            assert!((m - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn d1_modulus_is_abs() {
        // D = 1: M(x) = |x|
        let g = amplitude_backward(&v(&[2.0]), &v(&[1.0]), 0.0).unwrap();
        assert!((g.data[0] - 1.0).abs() < 1e-12);
        let g = amplitude_backward(&v(&[-2.0]), &v(&[1.0]), 0.0).unwrap();
        assert!((g.data[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_amplitude_without_guard_errors() {
        assert!(matches!(
            amplitude_backward(&v(&[0.0]), &v(&[1.0]), 0.0),
            Err(crate::Error::ZeroAmplitude)
        ));
        // With the guard, the gradient is finite.
        let g = amplitude_backward(&v(&[0.0]), &v(&[1.0]), 1e-12).unwrap();
        assert!(g.data[0].is_finite());
    }

    #[test]
    fn amplitude_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = v(&x);
        let u = v(&u);
        let g = amplitude_backward(&x, &u, 0.0).unwrap();
        let h = 1e-5;
        for i in 0..8 {
            let mut xp = x.clone();
            xp.data[i] += h;
            let mut xm = x.clone();
            xm.data[i] -= h;
            let f = |xx: &Vector<f64>| u.dot(&amplitude(&dft(xx).unwrap()).values);
            let numeric = (f(&xp) - f(&xm)) / (2.0 * h);
            let rel = (g.data[i] - numeric).abs() / g.data[i].abs().max(numeric.abs()).max(1e-12);
            assert!(rel < 1e-4, "component {i}: rel {rel}");
        }
    }

    #[test]
    fn parseval_trivial_cases() {
        assert!(parseval_residual(&v(&[1.0, 0.0, 0.0, 0.0])).unwrap() < 1e-12);
        assert!(parseval_residual(&v(&[1.0, 1.0, 1.0, 1.0])).unwrap() < 1e-12);
    }

    #[test]
    fn parseval_sweep_d2048() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let x: Vec<f64> = (0..2048).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(parseval_residual(&v(&x)).unwrap() < 1e-9);
        }
    }

    #[test]
    fn fast_matches_definition_on_power_of_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [2usize, 8, 32, 64] {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x = v(&x);
            let fast = fft_radix2(&x).unwrap();
            let slow = dft_definition(&x).unwrap();
            for k in 0..d {
                assert!((fast.real.data[k] - slow.real.data[k]).abs() < 1e-10);
                assert!((fast.imag.data[k] - slow.imag.data[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn conjugate_symmetry_for_real_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = dft(&v(&x)).unwrap();
        for k in 1..12 {
            assert!((s.real.data[k] - s.real.data[12 - k]).abs() < 1e-10);
            assert!((s.imag.data[k] + s.imag.data[12 - k]).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn transform_is_linear(
            xs in proptest::collection::vec(-10.0f64..10.0, 8),
            ys in proptest::collection::vec(-10.0f64..10.0, 8),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let x = v(&xs);
            let y = v(&ys);
            let combo = x.scale(a).add(&y.scale(b));
            let lhs = dft(&combo).unwrap();
            let sx = dft(&x).unwrap();
            let sy = dft(&y).unwrap();
            for k in 0..8 {
                let re = a * sx.real.data[k] + b * sy.real.data[k];
                let im = a * sx.imag.data[k] + b * sy.imag.data[k];
                prop_assert!((lhs.real.data[k] - re).abs() < 1e-10);
                prop_assert!((lhs.imag.data[k] - im).abs() < 1e-10);
            }
        }

        #[test]
        fn parseval_holds(xs in proptest::collection::vec(-10.0f64..10.0, 1..40)) {
            prop_assert!(parseval_residual(&v(&xs)).unwrap() < 1e-9);
        }

        #[test]
        fn amplitude_distance_contraction(
            xs in proptest::collection::vec(-5.0f64..5.0, 16),
            ys in proptest::collection::vec(-5.0f64..5.0, 16),
        ) {
            // ||M(a) - M(b)|| <= ||F(a) - F(b)|| = sqrt(D) ||a - b||
            let a = v(&xs);
            let b = v(&ys);
            let ma = amplitude(&dft(&a).unwrap()).values;
            let mb = amplitude(&dft(&b).unwrap()).values;
            let lhs = ma.dist(&mb);
            let rhs = (16.0f64).sqrt() * a.dist(&b);
            prop_assert!(lhs <= rhs + 1e-9, "{lhs} vs {rhs}");
        }
    }
}
