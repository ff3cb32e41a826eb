//! Bootstrapped regression targets for the two critic ensembles.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::approx::{lit, Real};

/// Truncated pooled target for the value ensemble.
///
/// For every sample the `M * N` target atoms evaluated at `(s', a')` are
/// pooled, sorted ascending and the largest `drop_per_critic * M` are
/// discarded. The kept atoms `z` become `r + gamma * z`, or `r` alone on
/// termination. No entropy term enters the backup.
pub fn tqc_value_target<T: Real>(
    next_atoms: &[ArrayView2<T>],
    rewards: ArrayView1<T>,
    terminated: ArrayView1<T>,
    gamma: f64,
    drop_per_critic: usize,
) -> Array2<T> {
    let m = next_atoms.len();
    assert!(m >= 1);
    let (b, n) = next_atoms[0].dim();
    assert!(drop_per_critic < n, "cannot drop every atom");
    assert!(next_atoms.iter().all(|a| a.dim() == (b, n)));
    assert_eq!(rewards.len(), b);
    assert_eq!(terminated.len(), b);
    let keep = m * n - drop_per_critic * m;
    let gamma = lit::<T>(gamma);
    let mut out = Array2::zeros((b, keep));
    let mut pool = Vec::with_capacity(m * n);
    for r in 0..b {
        let done = terminated[r] > T::zero();
        let reward = rewards[r];
        if done {
            out.row_mut(r).fill(reward);
            continue;
        }
        pool.clear();
        for a in next_atoms {
            pool.extend(a.row(r).iter().copied());
        }
        pool.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite atoms"));
        for (o, &z) in out.row_mut(r).iter_mut().zip(&pool[..keep]) {
            *o = reward + gamma * z;
        }
    }
    out
}

/// Max-based reachability target for one critic:
/// `(1 - gamma) h(s') + gamma * max(h(s'), atom(s', a'))`, and `h(s')` on
/// termination.
pub fn reachability_target<T: Real>(
    next_atoms: ArrayView2<T>,
    h_next: ArrayView1<T>,
    terminated: ArrayView1<T>,
    gamma: f64,
) -> Array2<T> {
    let (b, n) = next_atoms.dim();
    assert_eq!(h_next.len(), b);
    assert_eq!(terminated.len(), b);
    let g = lit::<T>(gamma);
    let one_g = T::one() - g;
    Array2::from_shape_fn((b, n), |(r, j)| {
        let h = h_next[r];
        if terminated[r] > T::zero() {
            h
        } else {
            one_g * h + g * h.max(next_atoms[[r, j]])
        }
    })
}
