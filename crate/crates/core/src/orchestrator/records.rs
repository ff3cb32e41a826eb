//! CSV outputs of the run modes.

use std::fs::File;
use std::path::Path;

use crate::goal::EpisodeBuffer;
use crate::selector::ActingPolicy;
use crate::{Error, Result};

use super::coverage::{CoverageCell, CoverageMap};
use super::explore::{MetricsRow, StepRisk};
use super::failures::FailureRow;

/// One executed exploration step as written to the transition dump.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    pub goal: f64,
    pub obs: [f64; 4],
    pub action: f64,
    pub policy: ActingPolicy,
    pub risk_gc: f64,
    pub risk_safety: f64,
    pub r_s: f64,
    pub r_g: f64,
    pub h_next: f64,
    pub terminated: bool,
}

impl StepRecord {
    pub const CSV_HEADER: [&'static str; 15] = [
        "episode",
        "step",
        "goal",
        "x",
        "x_dot",
        "theta",
        "theta_dot",
        "action",
        "policy",
        "risk_gc",
        "risk_safety",
        "r_s",
        "r_g",
        "h_next",
        "terminated",
    ];

    /// Flattens a buffer and its per-step risks, in insertion order.
    pub fn from_buffer(buffer: &EpisodeBuffer, risks: &[StepRisk]) -> Vec<StepRecord> {
        let mut out = Vec::with_capacity(buffer.len());
        for (e, ep) in buffer.episodes().iter().enumerate() {
            for (s, t) in ep.transitions.iter().enumerate() {
                let risk = risks.get(out.len()).copied().unwrap_or(StepRisk {
                    gc: f64::NAN,
                    safety: f64::NAN,
                });
                out.push(StepRecord {
                    episode: e,
                    step: s,
                    goal: ep.goal,
                    obs: [t.obs[0], t.obs[1], t.obs[2], t.obs[3]],
                    action: t.action,
                    policy: t.acting,
                    risk_gc: risk.gc,
                    risk_safety: risk.safety,
                    r_s: t.r_s,
                    r_g: t.r_g,
                    h_next: t.h_next,
                    terminated: t.terminated,
                });
            }
        }
        out
    }

    fn fields(&self) -> Vec<String> {
        let mut f = vec![self.episode.to_string(), self.step.to_string(), num(self.goal)];
        f.extend(self.obs.iter().map(|&v| num(v)));
        f.extend([
            num(self.action),
            self.policy.as_str().to_string(),
            num(self.risk_gc),
            num(self.risk_safety),
            num(self.r_s),
            num(self.r_g),
            num(self.h_next),
            (self.terminated as u8).to_string(),
        ]);
        f
    }

    fn parse(r: &csv::StringRecord, line: u64) -> Result<StepRecord> {
        let bad = |what: &str| Error::Config(format!("transition dump line {line}: bad {what}"));
        if r.len() != Self::CSV_HEADER.len() {
            return Err(bad("field count"));
        }
        let f = |i: usize| -> Result<f64> { r[i].parse().map_err(|_| bad(Self::CSV_HEADER[i])) };
        let u = |i: usize| -> Result<usize> { r[i].parse().map_err(|_| bad(Self::CSV_HEADER[i])) };
        Ok(StepRecord {
            episode: u(0)?,
            step: u(1)?,
            goal: f(2)?,
            obs: [f(3)?, f(4)?, f(5)?, f(6)?],
            action: f(7)?,
            policy: ActingPolicy::parse(&r[8]).ok_or_else(|| bad("policy"))?,
            risk_gc: f(9)?,
            risk_safety: f(10)?,
            r_s: f(11)?,
            r_g: f(12)?,
            h_next: f(13)?,
            terminated: match &r[14] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("terminated")),
            },
        })
    }
}

/// Shortest text that parses back to the same value.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

fn write_all(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_all(
        path,
        &MetricsRow::CSV_HEADER,
        rows.iter().map(|m| {
            vec![
                m.step.to_string(),
                m.cumulative_mistakes.to_string(),
                num(m.success_rate),
                num(m.safety_usage_frac),
            ]
        }),
    )
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    read_all(path, &MetricsRow::CSV_HEADER, |r, line| {
        let bad = || Error::Config(format!("{} line {line}: malformed row", path.display()));
        Ok(MetricsRow {
            step: r[0].parse().map_err(|_| bad())?,
            cumulative_mistakes: r[1].parse().map_err(|_| bad())?,
            success_rate: r[2].parse().map_err(|_| bad())?,
            safety_usage_frac: r[3].parse().map_err(|_| bad())?,
        })
    })
}

pub fn write_steps(path: &Path, rows: &[StepRecord]) -> Result<()> {
    write_all(path, &StepRecord::CSV_HEADER, rows.iter().map(StepRecord::fields))
}

pub fn read_steps(path: &Path) -> Result<Vec<StepRecord>> {
    read_all(path, &StepRecord::CSV_HEADER, StepRecord::parse)
}

pub fn write_coverage(path: &Path, map: &CoverageMap) -> Result<()> {
    write_all(
        path,
        &CoverageCell::CSV_HEADER,
        map.cells.iter().map(|c| {
            vec![
                c.start_bin.to_string(),
                c.goal_bin.to_string(),
                num(c.success_rate),
                c.episodes.to_string(),
            ]
        }),
    )
}

pub fn read_coverage(path: &Path) -> Result<CoverageMap> {
    let cells = read_all(path, &CoverageCell::CSV_HEADER, |r, line| {
        let bad = || Error::Config(format!("{} line {line}: malformed row", path.display()));
        Ok(CoverageCell {
            start_bin: r[0].parse().map_err(|_| bad())?,
            goal_bin: r[1].parse().map_err(|_| bad())?,
            success_rate: r[2].parse().map_err(|_| bad())?,
            episodes: r[3].parse().map_err(|_| bad())?,
        })
    })?;
    let start_bins = cells.iter().map(|c| c.start_bin + 1).max().unwrap_or(0);
    let goal_bins = cells.iter().map(|c| c.goal_bin + 1).max().unwrap_or(0);
    if cells.len() != start_bins * goal_bins {
        return Err(Error::Config(format!("{}: incomplete grid", path.display())));
    }
    Ok(CoverageMap {
        start_bins,
        goal_bins,
        cells,
    })
}

pub fn write_failures(path: &Path, rows: &[FailureRow]) -> Result<()> {
    write_all(
        path,
        &FailureRow::CSV_HEADER,
        rows.iter().map(|f| {
            vec![
                f.episode.to_string(),
                f.step.to_string(),
                num(f.risk),
                num(f.th_raise),
                num(f.th_lower),
                num(f.disagree_value),
                num(f.disagree_reach),
                f.policy.as_str().to_string(),
            ]
        }),
    )
}

fn read_all<R>(
    path: &Path,
    header: &[&str],
    parse: impl Fn(&csv::StringRecord, u64) -> Result<R>,
) -> Result<Vec<R>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let got = rdr.headers().map_err(|e| csv_err(path, e))?;
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::Config(format!("{}: unexpected header", path.display())));
    }
    let mut out = Vec::new();
    for (i, r) in rdr.records().enumerate() {
        let r = r.map_err(|e| csv_err(path, e))?;
        out.push(parse(&r, i as u64 + 2)?);
    }
    Ok(out)
}
