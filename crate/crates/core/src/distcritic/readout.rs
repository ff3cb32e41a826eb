//! Scalar summaries of the atoms one ensemble produces at a single `(s, a)`.
//!
//! `atoms[i][j]` is atom `j` of critic `i`.

use super::CumProbs;

/// Mean over all atoms of all critics.
pub fn ensemble_mean(atoms: &[&[f64]]) -> f64 {
    let count: usize = atoms.iter().map(|a| a.len()).sum();
    atoms.iter().flat_map(|a| a.iter()).sum::<f64>() / count as f64
}

/// Mean of the atoms whose cumulative probability is strictly above `tau`,
/// averaged over the ensemble. When no probability exceeds `tau` the single
/// highest-probability atom of each critic is used.
pub fn tail_mean(atoms: &[&[f64]], probs: &CumProbs, tau: f64) -> f64 {
    assert!((0.0..=1.0).contains(&tau), "tau must lie in [0, 1]");
    let n = probs.len();
    let mut chosen: Vec<usize> = (0..n).filter(|&j| probs.get(j) > tau).collect();
    if chosen.is_empty() {
        chosen.push(n - 1);
    }
    let mut sum = 0.0;
    for a in atoms {
        assert_eq!(a.len(), n);
        sum += chosen.iter().map(|&j| a[j]).sum::<f64>();
    }
    sum / (chosen.len() * atoms.len()) as f64
}

/// Mean over unordered critic pairs of the L1 distance between their sorted
/// atom vectors, divided by the number of atoms.
pub fn disagreement_l1(atoms: &[&[f64]]) -> f64 {
    let m = atoms.len();
    assert!(m >= 2, "disagreement needs at least two critics");
    let n = atoms[0].len();
    let sorted: Vec<Vec<f64>> = atoms
        .iter()
        .map(|a| {
            let mut v = a.to_vec();
            v.sort_by(|x, y| x.total_cmp(y));
            v
        })
        .collect();
    let mut total = 0.0;
    for i in 0..m {
        for k in i + 1..m {
            total += sorted[i]
                .iter()
                .zip(&sorted[k])
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        }
    }
    total / (m * (m - 1) / 2) as f64 / n as f64
}
