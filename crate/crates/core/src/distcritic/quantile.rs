use ndarray::{Array2, ArrayView2};

use crate::approx::{lit, Real};

/// Default Huber threshold. Pairs with `|u| <= kappa` are penalized
/// quadratically, which turns the minimizer into an expectile; keeping the
/// threshold far below the spread of the targets preserves quantile semantics.
pub const HUBER_KAPPA: f64 = 0.01;

/// Cumulative probabilities `(2i - 1) / 2N` attached to the atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct CumProbs(Vec<f64>);

impl CumProbs {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one atom");
        CumProbs(
            (1..=n)
                .map(|i| (2 * i - 1) as f64 / (2 * n) as f64)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// Quantile-regression Huber loss averaged over samples and over every
/// `(atom, target)` pair, with its gradient in the atoms.
///
/// `atoms` is `(batch, N)`, `targets` is `(batch, K)`; the pair term is
/// `|tau_i - 1{u < 0}| * huber_kappa(u) / kappa` with `u = target - atom`.
pub fn quantile_huber_loss<T: Real>(
    atoms: ArrayView2<T>,
    targets: ArrayView2<T>,
    probs: &CumProbs,
    kappa: f64,
) -> (T, Array2<T>) {
    let (b, n) = atoms.dim();
    let k = targets.ncols();
    assert_eq!(n, probs.len(), "atom count differs from quantile grid");
    assert_eq!(targets.nrows(), b);
    assert!(k >= 1);
    assert!(kappa > 0.0);
    let kappa = lit::<T>(kappa);
    let inv_kappa = T::one() / kappa;
    let half = lit::<T>(0.5);
    let half_kappa = half * kappa;
    let scale = T::one() / lit::<T>((b * n * k) as f64);
    let kt = lit::<T>(k as f64);
    let mut grad = Array2::zeros((b, n));
    let mut total = T::zero();
    let mut ys: Vec<T> = Vec::with_capacity(k);
    let mut prefix = vec![T::zero(); k + 1];
    for r in 0..b {
        // Sorted targets split into a quadratic band around each atom and two
        // linear tails whose contributions only need counts and prefix sums.
        ys.clear();
        ys.extend(targets.row(r).iter().copied());
        if !ys.is_sorted() {
            ys.sort_unstable_by(|p, q| p.partial_cmp(q).expect("non-finite target"));
        }
        for j in 0..k {
            prefix[j + 1] = prefix[j] + ys[j];
        }
        for i in 0..n {
            let a = atoms[[r, i]];
            let tau = lit::<T>(probs.get(i));
            let one_tau = T::one() - tau;
            let lo = ys.partition_point(|&t| t - a < -kappa);
            let hi = lo + ys[lo..].partition_point(|&t| t - a <= kappa);
            let (nlo, nhi) = (lit::<T>(lo as f64), kt - lit::<T>(hi as f64));
            let mut l = one_tau * (nlo * a - prefix[lo] - nlo * half_kappa)
                + tau * (prefix[k] - prefix[hi] - nhi * a - nhi * half_kappa);
            let mut g = tau * nhi - one_tau * nlo;
            for &t in &ys[lo..hi] {
                let u = t - a;
                let w = if u < T::zero() { one_tau } else { tau };
                l += w * half * u * u * inv_kappa;
                g += w * u * inv_kappa;
            }
            total += l;
            // d/d atom = -d/du
            grad[[r, i]] = -g * scale;
        }
    }
    (total * scale, grad)
}
