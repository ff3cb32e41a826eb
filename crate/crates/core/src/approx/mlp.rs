use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;

use super::{lit, Real};
use crate::envs::SimRng;

/// Fully connected network with ReLU hidden layers and a linear output.
///
/// Layer `l` maps `sizes[l]` inputs to `sizes[l + 1]` outputs as `x W + b`,
/// with `W` stored row-major as `(in, out)` followed by `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    params: Vec<T>,
}

/// Activations recorded by [`Mlp::forward_tape`], consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpTape<T> {
    /// Input of every layer; entry 0 is the network input.
    inputs: Vec<Array2<T>>,
}

impl<T: Real> Mlp<T> {
    /// Uniform `±1/sqrt(fan_in)` initialization of weights and biases.
    pub fn new(sizes: &[usize], rng: &mut SimRng) -> Self {
        let mut net = Self::zeros(sizes);
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out + fan_out] {
                *p = lit(rng.random_range(-bound..bound));
            }
            off += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Mlp {
            sizes: sizes.to_vec(),
            params: vec![T::zero(); n],
        }
    }

    /// Builds a network from an existing flat parameter vector.
    pub fn from_params(sizes: &[usize], params: Vec<T>) -> Option<Self> {
        let net = Self::zeros(sizes);
        (net.params.len() == params.len()).then(|| Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Offset of layer `l` in the flat parameter vector.
    fn offset(&self, l: usize) -> usize {
        self.sizes[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn layer(&self, l: usize) -> (ArrayView2<'_, T>, ArrayView1<'_, T>) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offset(l);
        let w = ArrayView2::from_shape((i, o), &self.params[off..off + i * o]).unwrap();
        let b = ArrayView1::from(&self.params[off + i * o..off + i * o + o]);
        (w, b)
    }

    fn check_input(&self, x: &ArrayView2<T>) {
        assert_eq!(
            x.ncols(),
            self.input_dim(),
            "network input has {} columns, expected {}",
            x.ncols(),
            self.input_dim()
        );
    }

    fn affine(&self, l: usize, x: &ArrayView2<T>) -> Array2<T> {
        let (w, b) = self.layer(l);
        let mut y = Array2::from_shape_fn((x.nrows(), w.ncols()), |(_, j)| b[j]);
        general_mat_mul(T::one(), x, &w, T::one(), &mut y);
        y
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        self.check_input(&x);
        let mut h = self.affine(0, &x);
        for l in 1..self.num_layers() {
            h.mapv_inplace(relu);
            h = self.affine(l, &h.view());
        }
        h
    }

    pub fn forward_tape(&self, x: ArrayView2<T>) -> (Array2<T>, MlpTape<T>) {
        self.check_input(&x);
        let mut inputs = Vec::with_capacity(self.num_layers());
        inputs.push(x.to_owned());
        let mut h = self.affine(0, &x);
        for l in 1..self.num_layers() {
            h.mapv_inplace(relu);
            let next = self.affine(l, &h.view());
            inputs.push(h);
            h = next;
        }
        (h, MlpTape { inputs })
    }

    /// Reverse pass for the batch recorded in `tape`.
    ///
    /// Parameter gradients are accumulated into `grad` when given; the
    /// gradient with respect to the network input is returned when
    /// `want_input` is set.
    pub fn backward(
        &self,
        tape: &MlpTape<T>,
        dy: Array2<T>,
        mut grad: Option<&mut [T]>,
        want_input: bool,
    ) -> Option<Array2<T>> {
        assert_eq!(dy.ncols(), self.output_dim());
        assert_eq!(dy.nrows(), tape.inputs[0].nrows());
        if let Some(g) = grad.as_deref() {
            assert_eq!(g.len(), self.params.len());
        }
        let mut dy = dy;
        for l in (0..self.num_layers()).rev() {
            let x = &tape.inputs[l];
            let (w, _) = self.layer(l);
            if let Some(g) = grad.as_deref_mut() {
                let (i, o) = (self.sizes[l], self.sizes[l + 1]);
                let off = self.offset(l);
                let (gw, gb) = g[off..off + i * o + o].split_at_mut(i * o);
                let mut gw = ArrayViewMut2::from_shape((i, o), gw).unwrap();
                general_mat_mul(T::one(), &x.t(), &dy, T::one(), &mut gw);
                for (acc, s) in gb.iter_mut().zip(dy.sum_axis(Axis(0))) {
                    *acc += s;
                }
            }
            if l == 0 && !want_input {
                return None;
            }
            let mut dx = dy.dot(&w.t());
            if l > 0 {
                ndarray::Zip::from(&mut dx)
                    .and(x)
                    .for_each(|d, &a| *d = if a > T::zero() { *d } else { T::zero() });
            }
            dy = dx;
        }
        Some(dy)
    }

    /// Converts every parameter to another element type.
    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            sizes: self.sizes.clone(),
            params: self.params.iter().map(|p| lit(p.to_f64().unwrap())).collect(),
        }
    }
}

#[inline]
fn relu<T: Real>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use rand::SeedableRng;

    /// Straightforward triple-loop evaluation used as an oracle.
    fn oracle_forward(net: &Mlp<f64>, x: &[f64]) -> Vec<f64> {
        let sizes = net.sizes();
        let p = net.params();
        let mut h = x.to_vec();
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            let (i, o) = (sizes[l], sizes[l + 1]);
            let mut y = vec![0.0; o];
            for (j, yj) in y.iter_mut().enumerate() {
                let mut acc = p[off + i * o + j];
                for (k, hk) in h.iter().enumerate() {
                    acc += hk * p[off + k * o + j];
                }
                *yj = if l + 2 < sizes.len() { acc.max(0.0) } else { acc };
            }
            off += i * o + o;
            h = y;
        }
        h
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[3, 4, 2]);
        let y = net.forward(array![[1.0, -2.0, 3.0]].view());
        assert_eq!(y, array![[0.0, 0.0]]);
    }

    #[test]
    fn single_identity_path_copies_input() {
        let mut net = Mlp::<f64>::zeros(&[2, 1]);
        net.params_mut()[1] = 1.0; // W[1][0]
        let y = net.forward(array![[5.0, 7.5]].view());
        assert_eq!(y, array![[7.5]]);
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let mut rng = SimRng::seed_from_u64(3);
        let net = Mlp::<f64>::new(&[5, 8, 7, 3], &mut rng);
        let x = Array2::from_shape_fn((6, 5), |_| rng.random_range(-2.0..2.0));
        let y = net.forward(x.view());
        for r in 0..6 {
            let o = oracle_forward(&net, x.row(r).as_slice().unwrap());
            for (a, b) in y.row(r).iter().zip(&o) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let (yt, _) = net.forward_tape(x.view());
        assert_eq!(y, yt);
    }

    #[test]
    fn f32_forward_agrees_with_f64() {
        let mut rng = SimRng::seed_from_u64(4);
        let net = Mlp::<f64>::new(&[4, 16, 16, 2], &mut rng);
        let x = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let y64 = net.forward(x.view());
        let y32 = net.cast::<f32>().forward(x.mapv(|v| v as f32).view());
        for (a, b) in y64.iter().zip(y32.iter()) {
            assert!((a - *b as f64).abs() < 1e-6);
        }
    }

    fn sq_loss(net: &Mlp<f64>, x: &Array2<f64>, t: &Array2<f64>) -> f64 {
        let y = net.forward(x.view());
        0.5 * (&y - t).mapv(|v| v * v).sum()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = SimRng::seed_from_u64(5);
        let mut net = Mlp::<f64>::new(&[3, 8, 8, 2], &mut rng);
        let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let t = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));
        let (y, tape) = net.forward_tape(x.view());
        let mut g = vec![0.0; net.num_params()];
        let dx = net.backward(&tape, &y - &t, Some(&mut g), true).unwrap();
        let h = 1e-5;
        for i in 0..net.num_params() {
            let p0 = net.params()[i];
            net.params_mut()[i] = p0 + h;
            let lp = sq_loss(&net, &x, &t);
            net.params_mut()[i] = p0 - h;
            let lm = sq_loss(&net, &x, &t);
            net.params_mut()[i] = p0;
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-4 * fd.abs().max(g[i].abs()) + 1e-9,
                "param {i}: fd {fd} analytic {}",
                g[i]
            );
        }
        // input gradient
        for r in 0..4 {
            for c in 0..3 {
                let mut xp = x.clone();
                xp[[r, c]] += h;
                let mut xm = x.clone();
                xm[[r, c]] -= h;
                let fd = (sq_loss(&net, &xp, &t) - sq_loss(&net, &xm, &t)) / (2.0 * h);
                assert!((fd - dx[[r, c]]).abs() <= 1e-4 * fd.abs().max(1e-6));
            }
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut rng = SimRng::seed_from_u64(6);
        let net = Mlp::<f64>::new(&[2, 4, 1], &mut rng);
        let x = array![[0.3, -0.2], [1.0, 0.5]];
        let (_, tape) = net.forward_tape(x.view());
        let mut g = vec![0.0; net.num_params()];
        net.backward(&tape, Array2::zeros((2, 1)), Some(&mut g), false);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_regression_gradient_is_normal_equation_residual() {
        // y = x w + b, loss = 0.5 |y - t|^2  =>  dw = X^T r, db = sum r
        let mut rng = SimRng::seed_from_u64(8);
        let net = Mlp::<f64>::new(&[3, 1], &mut rng);
        let x = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let t = Array2::from_shape_fn((5, 1), |_| rng.random_range(-1.0..1.0));
        let (y, tape) = net.forward_tape(x.view());
        let r = &y - &t;
        let mut g = vec![0.0; net.num_params()];
        net.backward(&tape, r.clone(), Some(&mut g), false);
        let dw: Array1<f64> = x.t().dot(&r.column(0));
        for k in 0..3 {
            assert!((g[k] - dw[k]).abs() < 1e-12);
        }
        assert!((g[3] - r.sum()).abs() < 1e-12);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = Mlp::<f32>::new(&[4, 32, 2], &mut SimRng::seed_from_u64(1));
        let b = Mlp::<f32>::new(&[4, 32, 2], &mut SimRng::seed_from_u64(1));
        let c = Mlp::<f32>::new(&[4, 32, 2], &mut SimRng::seed_from_u64(2));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
