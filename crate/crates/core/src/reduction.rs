//! Local reduction of the semi-infinite constraint.
//!
//! Near a point x the constraint `g(x, tau) <= 0 for all tau in T` behaves
//! like finitely many smooth constraints `g_i(x) = g(x, tau_i(x)) <= 0`, one
//! per local maximizer tau_i of `g(x, .)` close enough to the global max.
//! This module finds those maximizers on a grid, refines them by safeguarded
//! Newton steps on `dg/dtau = 0`, differentiates the maximizer functions
//! through the implicit function theorem, and tracks how maximizers
//! correspond across iterates so multipliers can follow them.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::problem::{IndexSet, SisdpProblem};

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("degenerate interior maximizer at tau = {tau}: curvature {curvature:.3e} is not negative")]
    Degenerate { tau: f64, curvature: f64 },
}

/// How a maximizer sits in the index interval. Boundary and fixed maximizers
/// do not move with x (their tau-gradient is zero); interior ones do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaximizerKind {
    Interior,
    BoundaryLeft,
    BoundaryRight,
    /// A member of a finite index set.
    Fixed,
}

/// One reduced constraint `g_i(x) = g(x, tau_i(x))` with its derivatives.
#[derive(Debug, Clone)]
pub struct Maximizer {
    pub tau: f64,
    pub kind: MaximizerKind,
    /// g(x, tau_i).
    pub value: f64,
    /// Gradient of g_i; equals the partial x-gradient of g by the envelope
    /// property at interior maximizers.
    pub grad: DVector<f64>,
    /// Hessian of g_i.
    pub hess: DMatrix<f64>,
    /// Gradient of tau_i(x); zero for boundary and fixed maximizers.
    pub dtau_dx: DVector<f64>,
}

/// The local maximizers within `delta_red` of the global max, plus the
/// (unclamped) global max value itself.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub maximizers: Vec<Maximizer>,
    /// max over T of g(x, .); negative infinity when T is empty.
    pub global_max: f64,
}

impl ReducedModel {
    pub fn p(&self) -> usize {
        self.maximizers.len()
    }

    /// The feasibility error `max(0, max_tau g(x, tau))`.
    pub fn theta(&self) -> f64 {
        self.global_max.max(0.0)
    }

    pub fn empty() -> Self {
        ReducedModel { maximizers: vec![], global_max: f64::NEG_INFINITY }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReductionConfig {
    /// Number of grid intervals; the grid has grid_n + 1 points.
    pub grid_n: usize,
    /// Maximizers within this band of the global max enter the model.
    pub delta_red: f64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig { grid_n: 100, delta_red: 0.1 }
    }
}

/// Derivatives of one maximizer function, from the implicit function theorem.
#[derive(Debug, Clone)]
pub struct ImplicitDerivatives {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub dtau_dx: DVector<f64>,
}

/// Differentiates `x -> g(x, tau(x))` at a maximizer.
///
/// At an interior maximizer, `dg/dtau = 0` defines tau(x) implicitly and
///
/// ```text
///     grad tau = -(d2g/dtau2)^{-1} grad_x dg/dtau,
///     grad g_i = grad_x g                  (envelope property),
///     hess g_i = hess_xx g + grad_x(dg/dtau) (grad tau)^T  (symmetrized).
/// ```
///
/// Boundary and fixed maximizers do not move, so the plain x-derivatives
/// apply. Errors when an interior maximizer has curvature above -1e-10, where
/// the implicit function theorem degenerates.
pub fn implicit_derivatives(
    problem: &SisdpProblem,
    x: &DVector<f64>,
    tau: f64,
    kind: MaximizerKind,
) -> Result<ImplicitDerivatives, ReductionError> {
    let c = &problem.constraint;
    let value = c.value(x, tau);
    let grad = c.grad_x(x, tau);
    let mut hess = c.hess_xx(x, tau);
    let mut dtau_dx = DVector::zeros(problem.n);
    if kind == MaximizerKind::Interior {
        let curvature = c.dtau2(x, tau);
        if curvature >= -1e-10 {
            return Err(ReductionError::Degenerate { tau, curvature });
        }
        let cross = c.grad_x_dtau(x, tau);
        dtau_dx = &cross / (-curvature);
        let outer = &cross * dtau_dx.transpose();
        hess += (&outer + outer.transpose()) * 0.5;
    }
    Ok(ImplicitDerivatives { value, grad, hess, dtau_dx })
}

enum Refined {
    Stationary,
    AtLo,
    AtHi,
}

/// Safeguarded 1-D Newton on `dg/dtau = 0`, projected onto [lo, hi]. Falls
/// back to uphill steps of one grid cell where the curvature is not usably
/// negative, and stops on tiny derivatives, tiny steps, or a boundary with
/// one-sided descent.
fn refine(
    problem: &SisdpProblem,
    x: &DVector<f64>,
    tau0: f64,
    lo: f64,
    hi: f64,
    grid_h: f64,
) -> (f64, Refined) {
    let c = &problem.constraint;
    let mut tau = tau0;
    for _ in 0..30 {
        let h1 = c.dtau(x, tau);
        if tau == lo && h1 < 0.0 {
            return (lo, Refined::AtLo);
        }
        if tau == hi && h1 > 0.0 {
            return (hi, Refined::AtHi);
        }
        if h1.abs() <= 1e-10 {
            break;
        }
        let h2 = c.dtau2(x, tau);
        let mut step = if h2 < -1e-12 * (1.0 + h1.abs()) {
            -h1 / h2
        } else {
            h1.signum() * grid_h
        };
        step = step.clamp(-2.0 * grid_h, 2.0 * grid_h);
        let next = (tau + step).clamp(lo, hi);
        if (next - tau).abs() <= 1e-14 {
            break;
        }
        tau = next;
    }
    if tau == lo {
        (lo, Refined::AtLo)
    } else if tau == hi {
        (hi, Refined::AtHi)
    } else {
        (tau, Refined::Stationary)
    }
}

fn grid_local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    (0..n)
        .filter(|&k| {
            let left_ok = k == 0 || values[k] >= values[k - 1];
            let right_ok = k == n - 1 || values[k] >= values[k + 1];
            left_ok && right_ok
        })
        .collect()
}

/// Largest value of `g(x, .)` over the index set, with its argmax, refined
/// off the grid. `None` when the index set is empty.
pub fn global_max(
    problem: &SisdpProblem,
    x: &DVector<f64>,
    cfg: &ReductionConfig,
) -> Option<(f64, f64)> {
    match &problem.index_set {
        IndexSet::Empty => None,
        IndexSet::Finite(taus) => taus
            .iter()
            .map(|&t| (t, problem.constraint.value(x, t)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            ,
        IndexSet::Interval { .. } => {
            let refined = refined_candidates(problem, x, cfg);
            refined
                .iter()
                .map(|r| (r.0, r.1))
                .max_by(|a, b| a.1.total_cmp(&b.1))
        }
    }
}

/// All deduplicated refined local maximizers: (tau, value, kind).
fn refined_candidates(
    problem: &SisdpProblem,
    x: &DVector<f64>,
    cfg: &ReductionConfig,
) -> Vec<(f64, f64, MaximizerKind)> {
    let (lo, hi) = match problem.index_set {
        IndexSet::Interval { lo, hi } => (lo, hi),
        _ => unreachable!("refined_candidates is only called on intervals"),
    };
    let n = cfg.grid_n;
    let h = (hi - lo) / n as f64;
    let values: Vec<f64> = (0..=n)
        .map(|k| problem.constraint.value(x, lo + k as f64 * h))
        .collect();
    let vmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let vmin = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if vmax - vmin <= 1e-12 {
        // Flat constraint: the endpoints stand in for the whole interval.
        return vec![
            (lo, problem.constraint.value(x, lo), MaximizerKind::BoundaryLeft),
            (hi, problem.constraint.value(x, hi), MaximizerKind::BoundaryRight),
        ];
    }

    let mut refined: Vec<(f64, f64, MaximizerKind)> = Vec::new();
    for k in grid_local_maxima(&values) {
        let tau0 = lo + k as f64 * h;
        let (tau, r) = refine(problem, x, tau0, lo, hi, h);
        let kind = match r {
            Refined::AtLo => MaximizerKind::BoundaryLeft,
            Refined::AtHi => MaximizerKind::BoundaryRight,
            Refined::Stationary => MaximizerKind::Interior,
        };
        refined.push((tau, problem.constraint.value(x, tau), kind));
    }
    dedup_refined(refined)
}

/// Sorts by tau and merges points closer than 1e-6 (several grid candidates
/// refining into one maximizer), keeping the higher value per cluster.
fn dedup_refined(
    mut refined: Vec<(f64, f64, MaximizerKind)>,
) -> Vec<(f64, f64, MaximizerKind)> {
    refined.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64, MaximizerKind)> = Vec::new();
    for cand in refined {
        match out.last_mut() {
            Some(last) if (cand.0 - last.0).abs() <= 1e-6 => {
                if cand.1 > last.1 {
                    *last = cand;
                }
            }
            _ => out.push(cand),
        }
    }
    out
}

/// Detects the reduced model at x: grid scan, Newton refinement,
/// deduplication, the `delta_red` band filter, and implicit-function
/// derivatives for every kept maximizer.
///
/// Total by construction: an interior maximizer whose curvature degenerates
/// is kept with frozen derivatives (tau-gradient zero) rather than erroring.
pub fn detect_maximizers(
    problem: &SisdpProblem,
    x: &DVector<f64>,
    cfg: &ReductionConfig,
) -> ReducedModel {
    match &problem.index_set {
        IndexSet::Empty => ReducedModel::empty(),
        IndexSet::Finite(taus) => {
            if taus.is_empty() {
                return ReducedModel::empty();
            }
            let values: Vec<f64> = taus.iter().map(|&t| problem.constraint.value(x, t)).collect();
            let gmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let maximizers = taus
                .iter()
                .zip(&values)
                .filter(|(_, &v)| v > gmax - cfg.delta_red)
                .map(|(&t, _)| build_maximizer(problem, x, t, MaximizerKind::Fixed))
                .collect();
            ReducedModel { maximizers, global_max: gmax }
        }
        IndexSet::Interval { .. } => {
            let refined = refined_candidates(problem, x, cfg);
            let gmax = refined
                .iter()
                .map(|r| r.1)
                .fold(f64::NEG_INFINITY, f64::max);
            let maximizers = refined
                .iter()
                .filter(|r| r.1 > gmax - cfg.delta_red)
                .map(|&(tau, _, kind)| build_maximizer(problem, x, tau, kind))
                .collect();
            ReducedModel { maximizers, global_max: gmax }
        }
    }
}

fn build_maximizer(
    problem: &SisdpProblem,
    x: &DVector<f64>,
    tau: f64,
    kind: MaximizerKind,
) -> Maximizer {
    match implicit_derivatives(problem, x, tau, kind) {
        Ok(d) => Maximizer {
            tau,
            kind,
            value: d.value,
            grad: d.grad,
            hess: d.hess,
            dtau_dx: d.dtau_dx,
        },
        Err(ReductionError::Degenerate { .. }) => {
            // Freeze the maximizer: zero tau-gradient, plain x-derivatives.
            let c = &problem.constraint;
            Maximizer {
                tau,
                kind,
                value: c.value(x, tau),
                grad: c.grad_x(x, tau),
                hess: c.hess_xx(x, tau),
                dtau_dx: DVector::zeros(problem.n),
            }
        }
    }
}

/// Partial injective map from old maximizer indices to new ones, with the
/// multipliers carried along it (unmatched new maximizers start at zero).
#[derive(Debug, Clone)]
pub struct Correspondence {
    pub map: Vec<Option<usize>>,
    pub y_new: Vec<f64>,
}

impl Correspondence {
    /// True when every listed old index survived into the new model.
    pub fn covers(&self, indices: impl IntoIterator<Item = usize>) -> bool {
        indices.into_iter().all(|i| self.map[i].is_some())
    }
}

/// Matches maximizers of `new` to those of `old` after a step `dx`: old
/// maximizer i predicts its new position as `tau_i + grad tau_i . dx`, and a
/// new maximizer within 1e-1 of the prediction may claim it. Pairs are
/// assigned greedily by prediction error, injectively on both sides.
pub fn track(
    old: &ReducedModel,
    new: &ReducedModel,
    dx: &DVector<f64>,
    y_old: &[f64],
) -> Correspondence {
    assert_eq!(y_old.len(), old.p());
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, mo) in old.maximizers.iter().enumerate() {
        let predicted = mo.tau + mo.dtau_dx.dot(dx);
        for (j, mn) in new.maximizers.iter().enumerate() {
            let r = (mn.tau - predicted).abs();
            if r <= 1e-1 {
                pairs.push((r, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut map = vec![None; old.p()];
    let mut claimed = vec![false; new.p()];
    let mut y_new = vec![0.0; new.p()];
    for (_, i, j) in pairs {
        if map[i].is_none() && !claimed[j] {
            map[i] = Some(j);
            claimed[j] = true;
            y_new[j] = y_old[i];
        }
    }
    Correspondence { map, y_new }
}
