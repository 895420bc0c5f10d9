//! Monte-Carlo measurement of marking convergence time.
//!
//! A victim collecting marked packets can name the attack path once two
//! conditions hold: every path router has delivered at least one mark,
//! and the per-router mark counts are strictly decreasing with distance,
//! so sorting the tally by count yields the path order with no ties. The
//! number of packets needed for that is the convergence time. This module
//! estimates its distribution over many seeded trials, sweeps marking
//! probability and hop count, and reports Student-t confidence intervals.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use rand::Rng;

use crate::ppm::PpmError;
use crate::rng::{stream, trial_seed};
use crate::stats::{t_confidence_interval, ConfidenceInterval};
use crate::topology::{build_linear_path, AttackPath, TopologyError};

/// Errors from the convergence harness.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvergenceError {
    Topology(TopologyError),
    Marking(PpmError),
    /// Sweeps need at least two trials per cell for an interval.
    TooFewTrials,
    /// A packet budget of zero can never converge.
    ZeroBudget,
    /// Sweeps reject empty hop-count or probability grids.
    EmptyGrid,
    /// Every trial of every candidate cell hit the packet budget.
    NoConvergedTrials,
}

impl fmt::Display for ConvergenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Topology(e) => write!(f, "topology: {e}"),
            Self::Marking(e) => write!(f, "marking: {e}"),
            Self::TooFewTrials => write!(f, "need at least two trials per cell"),
            Self::ZeroBudget => write!(f, "packet budget must be at least 1"),
            Self::EmptyGrid => write!(f, "sweep grids must be non-empty"),
            Self::NoConvergedTrials => write!(f, "no cell produced a converged trial"),
        }
    }
}

impl core::error::Error for ConvergenceError {}

impl From<TopologyError> for ConvergenceError {
    fn from(e: TopologyError) -> Self {
        Self::Topology(e)
    }
}

impl From<PpmError> for ConvergenceError {
    fn from(e: PpmError) -> Self {
        Self::Marking(e)
    }
}

/// Which of the two convergence conditions a trial enforces. Both default
/// on; disabling one is only useful for studying the conditions in
/// isolation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvergenceCriteria {
    /// Condition (i): every path router has at least one surviving mark.
    pub require_all_routers: bool,
    /// Condition (ii): counts strictly decrease with distance, so the
    /// sorted tally is unambiguous. Vacuous for single-router paths.
    pub require_strict_order: bool,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        Self { require_all_routers: true, require_strict_order: true }
    }
}

/// Default per-trial packet budget.
pub const DEFAULT_MAX_PACKETS: u64 = 1_000_000;

/// How a single trial ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialOutcome {
    /// Both enabled conditions first held after this many packets.
    Converged { packets: u64 },
    /// The budget ran out first.
    Exhausted { packets: u64 },
}

impl TrialOutcome {
    pub fn converged(&self) -> bool {
        matches!(self, Self::Converged { .. })
    }

    pub fn packets(&self) -> u64 {
        match *self {
            Self::Converged { packets } | Self::Exhausted { packets } => packets,
        }
    }
}

/// One trial's outcome together with the seed that reproduces it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvergenceResult {
    pub outcome: TrialOutcome,
    pub trial_seed: u64,
}

/// Runs one trial: packets are sent one at a time, each router marking
/// with probability `p`, until the enabled conditions hold or the budget
/// runs out. Returns the packet count at which convergence first held.
pub fn convergence_trial<R: Rng + ?Sized>(
    path: &AttackPath,
    p: f64,
    criteria: ConvergenceCriteria,
    max_packets: u64,
    rng: &mut R,
) -> Result<TrialOutcome, ConvergenceError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(PpmError::BadParameter("marking probability outside [0, 1]").into());
    }
    if max_packets == 0 {
        return Err(ConvergenceError::ZeroBudget);
    }
    let n = path.hop_count();
    // counts[d - 1] is the tally of the router d hops from the victim.
    let mut counts = vec![0u64; n];
    for packet in 1..=max_packets {
        // Traversal order is attacker-side first (distance n down to 1);
        // the last marker wins, which is the smallest marked distance.
        let mut winner = None;
        for i in 0..n {
            if rng.gen::<f64>() < p {
                winner = Some(n - i);
            }
        }
        if let Some(d) = winner {
            counts[d - 1] += 1;
        } else if packet > 1 {
            // No count changed, so the check that failed last packet
            // would fail again.
            continue;
        }
        let all = !criteria.require_all_routers || counts.iter().all(|&c| c >= 1);
        let ordered =
            !criteria.require_strict_order || counts.windows(2).all(|w| w[0] > w[1]);
        if all && ordered {
            return Ok(TrialOutcome::Converged { packets: packet });
        }
    }
    Ok(TrialOutcome::Exhausted { packets: max_packets })
}

/// Aggregate over one sweep cell: a fixed `(hop_count, p)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub hop_count: u32,
    pub marking_probability: f64,
    pub trials: u32,
    pub converged: u32,
    pub exhausted: u32,
    /// Mean packets to converge, over converged trials only.
    pub mean_packets: Option<f64>,
    /// Student-t interval around the mean (needs two converged trials).
    pub interval: Option<ConfidenceInterval>,
}

impl SweepSummary {
    /// True when exhausted trials exceed 1% of the cell, at which point
    /// the converged-only mean is noticeably censored and should be read
    /// with care.
    pub fn exhaustion_warning(&self) -> bool {
        u64::from(self.exhausted) * 100 > u64::from(self.trials)
    }
}

/// Runs the trials of one cell, each from its own derived seed.
pub fn cell_trials(
    hop_count: u32,
    p: f64,
    trials: u32,
    criteria: ConvergenceCriteria,
    max_packets: u64,
    base_seed: u64,
) -> Result<Vec<ConvergenceResult>, ConvergenceError> {
    if trials == 0 {
        return Err(ConvergenceError::TooFewTrials);
    }
    let scenario = build_linear_path(hop_count, p)?;
    let mut out = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let seed = trial_seed(base_seed, hop_count, p, t);
        let outcome =
            convergence_trial(&scenario.path, p, criteria, max_packets, &mut stream(seed))?;
        out.push(ConvergenceResult { outcome, trial_seed: seed });
    }
    Ok(out)
}

/// Summarises one cell's trials at the given confidence level.
pub fn convergence_cell(
    hop_count: u32,
    p: f64,
    trials: u32,
    criteria: ConvergenceCriteria,
    max_packets: u64,
    confidence: f64,
    base_seed: u64,
) -> Result<SweepSummary, ConvergenceError> {
    let results = cell_trials(hop_count, p, trials, criteria, max_packets, base_seed)?;
    let times: Vec<f64> = results
        .iter()
        .filter(|r| r.outcome.converged())
        .map(|r| r.outcome.packets() as f64)
        .collect();
    let converged = times.len() as u32;
    let mean_packets = if times.is_empty() {
        None
    } else {
        Some(times.iter().sum::<f64>() / times.len() as f64)
    };
    Ok(SweepSummary {
        hop_count,
        marking_probability: p,
        trials,
        converged,
        exhausted: trials - converged,
        mean_packets,
        interval: t_confidence_interval(&times, confidence),
    })
}

/// Full sweep over every `(hop_count, p)` pair, hop counts outermost.
/// Every cell derives its trial seeds from `base_seed` and the cell
/// coordinates, so re-running reproduces every number and cells may be
/// computed in any order.
pub fn convergence_sweep(
    hop_counts: &[u32],
    p_grid: &[f64],
    trials: u32,
    criteria: ConvergenceCriteria,
    max_packets: u64,
    confidence: f64,
    base_seed: u64,
) -> Result<Vec<SweepSummary>, ConvergenceError> {
    if hop_counts.is_empty() || p_grid.is_empty() {
        return Err(ConvergenceError::EmptyGrid);
    }
    if trials < 2 {
        return Err(ConvergenceError::TooFewTrials);
    }
    let mut out = Vec::with_capacity(hop_counts.len() * p_grid.len());
    for &n in hop_counts {
        for &p in p_grid {
            out.push(convergence_cell(n, p, trials, criteria, max_packets, confidence, base_seed)?);
        }
    }
    Ok(out)
}

/// The grid probability minimising mean convergence time for `hop_count`,
/// among cells with at least one converged trial. Ties go to the smaller
/// probability.
pub fn optimal_marking_probability(
    summaries: &[SweepSummary],
    hop_count: u32,
) -> Result<f64, ConvergenceError> {
    let mut best: Option<(f64, f64)> = None;
    for s in summaries.iter().filter(|s| s.hop_count == hop_count) {
        let Some(mean) = s.mean_packets else { continue };
        let p = s.marking_probability;
        best = Some(match best {
            None => (mean, p),
            Some((bm, bp)) => {
                if mean < bm || (mean == bm && p < bp) {
                    (mean, p)
                } else {
                    (bm, bp)
                }
            }
        });
    }
    best.map(|(_, p)| p).ok_or(ConvergenceError::NoConvergedTrials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::sqrt;

    fn default_cell(n: u32, p: f64, trials: u32, seed: u64) -> SweepSummary {
        convergence_cell(
            n,
            p,
            trials,
            ConvergenceCriteria::default(),
            DEFAULT_MAX_PACKETS,
            0.95,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn single_router_at_certainty_converges_immediately() {
        let s = build_linear_path(1, 1.0).unwrap();
        let out = convergence_trial(
            &s.path,
            1.0,
            ConvergenceCriteria::default(),
            10,
            &mut stream(1),
        )
        .unwrap();
        assert_eq!(out, TrialOutcome::Converged { packets: 1 });
    }

    #[test]
    fn certain_marking_on_two_hops_never_converges() {
        // R_1 overwrites R_2's mark on every packet, so R_2 can never be
        // seen: survival(1, 2) = 0.
        let s = build_linear_path(2, 1.0).unwrap();
        let out = convergence_trial(
            &s.path,
            1.0,
            ConvergenceCriteria::default(),
            5_000,
            &mut stream(9),
        )
        .unwrap();
        assert_eq!(out, TrialOutcome::Exhausted { packets: 5_000 });
    }

    /// For one router, convergence needs exactly the first marked packet,
    /// so the time is geometric with mean 1/p.
    #[test]
    fn geometric_oracle_single_hop() {
        let trials = 2_000u32;
        let p = 0.25f64;
        let cell = default_cell(1, p, trials, 42);
        assert_eq!(cell.converged, trials);
        let mean = cell.mean_packets.unwrap();
        let expect = 1.0 / p;
        // Standard error of the mean of a geometric sample.
        let se = sqrt((1.0 - p) / (p * p)) / sqrt(f64::from(trials));
        assert!(
            (mean - expect).abs() < 4.0 * se,
            "mean {mean}, want {expect} +- {}",
            4.0 * se
        );
        // The reported mean always sits inside its own interval.
        let ci = cell.interval.unwrap();
        assert!(ci.lo <= mean && mean <= ci.hi);
    }

    #[test]
    fn converged_trials_need_at_least_hop_count_packets() {
        for (n, seed) in [(4u32, 3u64), (7, 4)] {
            let results =
                cell_trials(n, 0.2, 64, ConvergenceCriteria::default(), 100_000, seed).unwrap();
            for r in results {
                if r.outcome.converged() {
                    assert!(r.outcome.packets() >= u64::from(n));
                }
            }
        }
    }

    #[test]
    fn trials_replay_from_their_recorded_seed() {
        let results =
            cell_trials(3, 0.2, 16, ConvergenceCriteria::default(), 100_000, 77).unwrap();
        let s = build_linear_path(3, 0.2).unwrap();
        for r in &results {
            let again = convergence_trial(
                &s.path,
                0.2,
                ConvergenceCriteria::default(),
                100_000,
                &mut stream(r.trial_seed),
            )
            .unwrap();
            assert_eq!(again, r.outcome);
        }
    }

    #[test]
    fn sweeps_are_reproducible() {
        let hops = [2u32, 3];
        let ps = [0.2, 0.4];
        let run = || {
            convergence_sweep(
                &hops,
                &ps,
                40,
                ConvergenceCriteria::default(),
                100_000,
                0.95,
                1234,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn interval_narrows_with_more_trials() {
        let narrow = default_cell(2, 0.4, 480, 5).interval.unwrap();
        let wide = default_cell(2, 0.4, 60, 5).interval.unwrap();
        assert!(narrow.half_width < wide.half_width);
    }

    #[test]
    fn disabled_conditions_are_vacuous() {
        let s = build_linear_path(3, 0.0).unwrap();
        let none = ConvergenceCriteria { require_all_routers: false, require_strict_order: false };
        let out = convergence_trial(&s.path, 0.0, none, 10, &mut stream(2)).unwrap();
        assert_eq!(out, TrialOutcome::Converged { packets: 1 });
    }

    #[test]
    fn exhaustion_is_counted_and_flagged() {
        let cell = default_cell(2, 1.0, 5, 11);
        assert_eq!(cell.converged, 0);
        assert_eq!(cell.exhausted, 5);
        assert_eq!(cell.mean_packets, None);
        assert!(cell.exhaustion_warning());
        assert_eq!(
            optimal_marking_probability(&[cell], 2),
            Err(ConvergenceError::NoConvergedTrials)
        );
    }

    #[test]
    fn optimal_probability_prefers_smaller_on_ties() {
        let mk = |p: f64, mean: f64| SweepSummary {
            hop_count: 3,
            marking_probability: p,
            trials: 10,
            converged: 10,
            exhausted: 0,
            mean_packets: Some(mean),
            interval: None,
        };
        let summaries = [mk(0.1, 50.0), mk(0.2, 40.0), mk(0.3, 40.0), mk(0.4, 60.0)];
        assert_eq!(optimal_marking_probability(&summaries, 3).unwrap(), 0.2);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let crit = ConvergenceCriteria::default();
        assert_eq!(
            convergence_sweep(&[], &[0.1], 10, crit, 100, 0.95, 1),
            Err(ConvergenceError::EmptyGrid)
        );
        assert_eq!(
            convergence_sweep(&[3], &[], 10, crit, 100, 0.95, 1),
            Err(ConvergenceError::EmptyGrid)
        );
        assert_eq!(
            convergence_sweep(&[3], &[0.1], 1, crit, 100, 0.95, 1),
            Err(ConvergenceError::TooFewTrials)
        );
        let s = build_linear_path(2, 0.5).unwrap();
        assert_eq!(
            convergence_trial(&s.path, 0.5, crit, 0, &mut stream(1)),
            Err(ConvergenceError::ZeroBudget)
        );
        assert!(convergence_trial(&s.path, 1.5, crit, 10, &mut stream(1)).is_err());
    }
}
