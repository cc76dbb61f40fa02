//! Discretization baseline: solve the relaxation over a finite index set,
//! add the most violated index, repeat until the full constraint holds to
//! tolerance.

use nalgebra::DVector;
use std::time::Instant;

use crate::path::{initial_point, solve_two_step, PathConfig, Schedule, SolveStatus};
use crate::problem::{IndexSet, SisdpProblem};
use crate::reduction::{global_max, ReductionConfig};

/// Finite index set under refinement, with the relaxed solution that
/// produced it.
#[derive(Debug, Clone)]
pub struct ExchangeState {
    /// Current indices, ascending.
    pub indices: Vec<f64>,
    /// Completed rounds.
    pub round: usize,
    /// Solution of the last relaxation.
    pub last_x: DVector<f64>,
    /// Indices appended after the initial endpoints, in insertion order.
    pub added: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: usize,
    pub n_indices: usize,
    pub inner_iters: usize,
    pub max_violation: f64,
    pub wall_ms: f64,
}

pub const ROUND_HEADER: &str = "round,n_indices,inner_iters,max_violation,wall_ms";

impl RoundRecord {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{:e},{:e}",
            self.round, self.n_indices, self.inner_iters, self.max_violation, self.wall_ms
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExchangeStatus {
    /// Worst violation at the last relaxed solution is at or below the
    /// tolerance.
    Feasible,
    /// A relaxation solve ended without converging.
    InnerFailed { round: usize, status: SolveStatus },
    /// The newest index collides with an existing one: the relaxations are
    /// not being solved accurately enough to make progress.
    DuplicateIndex { tau: f64 },
    /// Round budget exhausted.
    RoundLimit,
}

impl std::fmt::Display for ExchangeStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExchangeStatus::Feasible => write!(f, "feasible"),
            ExchangeStatus::InnerFailed { round, status } => {
                write!(f, "inner solve failed in round {round}: {status}")
            }
            ExchangeStatus::DuplicateIndex { tau } => {
                write!(f, "duplicate index {tau} proposed")
            }
            ExchangeStatus::RoundLimit => write!(f, "round limit reached"),
        }
    }
}

#[derive(Debug)]
pub struct ExchangeOutcome {
    pub x: DVector<f64>,
    pub state: ExchangeState,
    pub rounds: Vec<RoundRecord>,
    pub status: ExchangeStatus,
}

impl ExchangeOutcome {
    pub fn rounds_csv(&self) -> String {
        let mut out = String::from(ROUND_HEADER);
        out.push('\n');
        for r in &self.rounds {
            out.push_str(&r.csv());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExchangeConfig {
    /// Violation tolerance for accepting the relaxed solution.
    pub theta: f64,
    /// Indices closer than this to an existing one are rejected as
    /// duplicates.
    pub dedup_radius: f64,
    pub max_rounds: usize,
    pub path: PathConfig,
}

impl Default for ExchangeConfig {
    fn default() -> Self {
        ExchangeConfig {
            theta: 1e-6,
            dedup_radius: 1e-9,
            max_rounds: 60,
            path: PathConfig::default(),
        }
    }
}

/// Worst index of the full problem at `x`, when it violates beyond `theta`.
pub fn most_violated(
    problem: &SisdpProblem,
    x: &DVector<f64>,
    theta: f64,
    cfg: &ReductionConfig,
) -> Option<f64> {
    let (tau, value) = global_max(problem, x, cfg)?;
    if value > theta {
        Some(tau)
    } else {
        None
    }
}

/// Runs the exchange loop from the interval endpoints. The returned state is
/// meaningful for every status: on failure it holds the last consistent
/// round.
pub fn solve_exchange(problem: &SisdpProblem, config: &ExchangeConfig) -> ExchangeOutcome {
    let (lo, hi) = match problem.index_set {
        IndexSet::Interval { lo, hi } => (lo, hi),
        _ => panic!("exchange refinement needs an interval index set"),
    };
    let mut indices = vec![lo, hi];
    let mut added = Vec::new();
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut last_x = problem.default_x0.clone();

    let status = loop {
        let round = rounds.len();
        if round >= config.max_rounds {
            break ExchangeStatus::RoundLimit;
        }
        let timer = Instant::now();
        let finite = problem.with_index_set(IndexSet::Finite(indices.clone()));
        let w0 = match initial_point(&finite, &config.path.reduction) {
            Ok(w) => w,
            Err(_) => {
                break ExchangeStatus::InnerFailed { round, status: SolveStatus::FallbackFailed }
            }
        };
        let sched = Schedule::standard(problem.m, 1.0);
        let out = solve_two_step(&finite, w0, sched, &config.path);
        last_x = out.iterate.x.clone();
        let inner_iters = out.trace.rows.len();
        if out.trace.status != SolveStatus::Converged {
            rounds.push(RoundRecord {
                round,
                n_indices: indices.len(),
                inner_iters,
                max_violation: f64::NAN,
                wall_ms: timer.elapsed().as_secs_f64() * 1e3,
            });
            break ExchangeStatus::InnerFailed { round, status: out.trace.status };
        }

        let worst = global_max(problem, &last_x, &config.path.reduction);
        let violation = worst.map(|(_, v)| v.max(0.0)).unwrap_or(0.0);
        rounds.push(RoundRecord {
            round,
            n_indices: indices.len(),
            inner_iters,
            max_violation: violation,
            wall_ms: timer.elapsed().as_secs_f64() * 1e3,
        });

        let tau = match worst {
            Some((tau, value)) if value > config.theta => tau,
            _ => break ExchangeStatus::Feasible,
        };
        if indices.iter().any(|t| (t - tau).abs() <= config.dedup_radius) {
            break ExchangeStatus::DuplicateIndex { tau };
        }
        let pos = indices.partition_point(|&t| t < tau);
        indices.insert(pos, tau);
        added.push(tau);
    };

    ExchangeOutcome {
        x: last_x.clone(),
        state: ExchangeState { indices, round: rounds.len(), last_x, added },
        rounds,
        status,
    }
}
