use crate::envs::{CartPoleGc, SimRng};
use crate::goal::GcAgent;
use crate::Result;

use super::explore::{run_eval_episode, Controller, Gate};
use super::CoverageConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageCell {
    pub start_bin: usize,
    pub goal_bin: usize,
    pub success_rate: f64,
    pub episodes: usize,
}

impl CoverageCell {
    pub const CSV_HEADER: [&'static str; 4] = ["start_bin", "goal_bin", "success_rate", "episodes"];
}

/// Success rates on a start-position by goal-position grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    pub start_bins: usize,
    pub goal_bins: usize,
    /// Row-major by start bin.
    pub cells: Vec<CoverageCell>,
}

/// Centre of bin `i` of `n` equal bins over `[-limit, limit]`.
pub fn bin_center(i: usize, n: usize, limit: f64) -> f64 {
    limit * (-1.0 + (2 * i + 1) as f64 / n as f64)
}

impl CoverageMap {
    pub fn cell(&self, start: usize, goal: usize) -> &CoverageCell {
        &self.cells[start * self.goal_bins + goal]
    }

    /// Cells in the outermost start or goal bins.
    pub fn is_boundary(&self, c: &CoverageCell) -> bool {
        c.start_bin == 0 || c.goal_bin == 0 || c.start_bin + 1 == self.start_bins || c.goal_bin + 1 == self.goal_bins
    }

    /// The half of the cells nearest the grid centre, ties broken by
    /// row-major order.
    pub fn central_half(&self) -> Vec<&CoverageCell> {
        let mid = |i: usize, n: usize| (i as f64 + 0.5) / n as f64 - 0.5;
        let mut order: Vec<&CoverageCell> = self.cells.iter().collect();
        order.sort_by(|a, b| {
            let da = mid(a.start_bin, self.start_bins).hypot(mid(a.goal_bin, self.goal_bins));
            let db = mid(b.start_bin, self.start_bins).hypot(mid(b.goal_bin, self.goal_bins));
            da.total_cmp(&db)
        });
        order.truncate(self.cells.len() / 2);
        order
    }

    pub fn boundary_mean(&self) -> f64 {
        mean(self.cells.iter().filter(|c| self.is_boundary(c)).map(|c| c.success_rate))
    }

    pub fn central_mean(&self) -> f64 {
        mean(self.central_half().into_iter().map(|c| c.success_rate))
    }

    pub fn overall_mean(&self) -> f64 {
        mean(self.cells.iter().map(|c| c.success_rate))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Evaluates the policy mean, gated when `gate` is given, from noisy resets
/// around each start-bin centre towards each goal-bin centre.
pub fn eval_coverage(
    env: &CartPoleGc,
    gc: &GcAgent<f32>,
    gate: Option<Gate<'_>>,
    cfg: &CoverageConfig,
    rng: &mut SimRng,
) -> Result<CoverageMap> {
    let mut ctl = Controller::new(gc, gate)?;
    let mut cells = Vec::with_capacity(cfg.start_bins * cfg.goal_bins);
    for sb in 0..cfg.start_bins {
        let x0 = bin_center(sb, cfg.start_bins, cfg.limit);
        for gb in 0..cfg.goal_bins {
            let g = bin_center(gb, cfg.goal_bins, cfg.limit);
            let mut hits = 0;
            for _ in 0..cfg.episodes_per_cell {
                let s = env.reset_noisy_at(x0, rng);
                hits += run_eval_episode(env, &mut ctl, s, g)? as usize;
            }
            cells.push(CoverageCell {
                start_bin: sb,
                goal_bin: gb,
                success_rate: hits as f64 / cfg.episodes_per_cell as f64,
                episodes: cfg.episodes_per_cell,
            });
        }
    }
    Ok(CoverageMap {
        start_bins: cfg.start_bins,
        goal_bins: cfg.goal_bins,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goal::GcConfig;
    use rand::SeedableRng;

    fn map(n: usize, f: impl Fn(usize, usize) -> f64) -> CoverageMap {
        let cells = (0..n)
            .flat_map(|s| (0..n).map(move |g| (s, g)))
            .map(|(s, g)| CoverageCell {
                start_bin: s,
                goal_bin: g,
                success_rate: f(s, g),
                episodes: 1,
            })
            .collect();
        CoverageMap {
            start_bins: n,
            goal_bins: n,
            cells,
        }
    }

    #[test]
    fn bin_centres_are_symmetric() {
        assert!((bin_center(0, 8, 2.16) + bin_center(7, 8, 2.16)).abs() < 1e-12);
        assert!((bin_center(0, 8, 2.16) + 2.16 * 7.0 / 8.0).abs() < 1e-12);
        assert_eq!(bin_center(1, 3, 2.0), 0.0);
    }

    #[test]
    fn region_selection() {
        let m = map(8, |_, _| 0.0);
        assert_eq!(m.cells.iter().filter(|c| m.is_boundary(c)).count(), 64 - 36);
        let central = m.central_half();
        assert_eq!(central.len(), 32);
        assert!(central.iter().all(|c| (1..7).contains(&c.start_bin) && (1..7).contains(&c.goal_bin)));
        let m = map(4, |s, g| if (1..3).contains(&s) && (1..3).contains(&g) { 1.0 } else { 0.5 });
        assert_eq!(m.boundary_mean(), 0.5);
        // 4 inner cells plus 4 of the 8 edge-adjacent ones
        assert_eq!(m.central_mean(), 0.75);
    }

    #[test]
    fn diagonal_cells_start_on_the_goal() {
        let env = CartPoleGc::default();
        let gc = GcAgent::<f32>::new(5, &GcConfig { hidden: vec![4], critics: 1, ..GcConfig::default() }, &mut SimRng::seed_from_u64(0));
        let cfg = CoverageConfig {
            start_bins: 4,
            goal_bins: 4,
            episodes_per_cell: 2,
            ..CoverageConfig::default()
        };
        let m = eval_coverage(&env, &gc, None, &cfg, &mut SimRng::seed_from_u64(1)).unwrap();
        assert_eq!(m.cells.len(), 16);
        for i in 0..4 {
            assert_eq!(m.cell(i, i).success_rate, 1.0);
        }
    }
}
