//! Branch and bound for the indicator problem. Node bounds come from the
//! perspective relaxation with the diagonal extracted once at the root,
//! so every node is a conic-quadratic solve, not a semidefinite one.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::Serialize;

use crate::conic::{solve, SolveStatus, SolverSettings};
use crate::decomposition::{
    extract_optimal_diagonal, repair_decomposition, DiagonalDecomposition,
};
use crate::error::Error;
use crate::formulations::{build_fixed_pattern, relax, Relaxation};
use crate::instance::{Pattern, QiInstance};
use crate::real::Real;
use crate::value::ExtReal;

/// Free x_i closer to {0, 1} than this are considered integral.
const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branching {
    MostFractional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSelection {
    BestBound,
}

#[derive(Debug, Clone)]
pub struct BnBSettings<T> {
    pub abs_gap: T,
    pub rel_gap: T,
    pub max_nodes: usize,
    pub branching: Branching,
    pub node_selection: NodeSelection,
    pub solver: SolverSettings<T>,
}

impl<T: Real> Default for BnBSettings<T> {
    fn default() -> Self {
        BnBSettings {
            abs_gap: T::of(1e-6),
            rel_gap: T::of(1e-6),
            max_nodes: 100_000,
            branching: Branching::MostFractional,
            node_selection: NodeSelection::BestBound,
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BnBStatus {
    /// Optimum proved within the gap settings. An infeasible instance is
    /// also Solved: the optimum over an empty set, +inf.
    Solved,
    NodeLimit,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeAction {
    /// Relaxation solved, children created.
    Branched,
    /// Relaxation point was integral; nothing to branch on.
    Fathomed,
    /// Bound could not beat the incumbent.
    PrunedByBound,
    /// Node relaxation proved infeasible.
    Infeasible,
    /// Still open when the search stopped.
    Open,
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real + Serialize")]
pub struct NodeRecord<T> {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub bound: ExtReal<T>,
    pub action: NodeAction,
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real + Serialize")]
pub struct BnBReport<T> {
    pub status: BnBStatus,
    pub optimal_value: ExtReal<T>,
    pub incumbent_pattern: Option<Pattern>,
    pub incumbent_y: Option<Vec<T>>,
    /// Number of node relaxations solved, the root included.
    pub node_count: usize,
    /// Bound of the root node (perspective form with the extracted
    /// diagonal, nothing fixed).
    pub root_bound: ExtReal<T>,
    /// Incumbent value minus the best bound still open at termination;
    /// zero when the tree was exhausted.
    pub proof_gap: T,
    pub d_star_used: DiagonalDecomposition<T>,
    pub node_log: Vec<NodeRecord<T>>,
}

/// Rounds a fractional point to the pattern of its large coordinates and
/// solves that pattern exactly. None when the pattern is infeasible.
pub fn round_heuristic<T: Real>(
    inst: &QiInstance<T>,
    x: &[T],
    settings: &SolverSettings<T>,
) -> Result<Option<(Pattern, Vec<T>, T)>, Error> {
    let half = T::of(0.5);
    let pattern = Pattern::new(x.iter().map(|&v| v >= half).collect());
    solve_pattern(inst, &pattern, settings)
}

/// Exact value of one pattern: the fixed convex subproblem, solved with
/// the plain epigraph of Q (no diagonal split), so heuristic values stay
/// independent of the root extraction. An unconverged objective is not an
/// upper bound and must never become the incumbent; such patterns are
/// skipped after escalation fails.
fn solve_pattern<T: Real>(
    inst: &QiInstance<T>,
    pattern: &Pattern,
    settings: &SolverSettings<T>,
) -> Result<Option<(Pattern, Vec<T>, T)>, Error> {
    let fixing: Vec<Option<bool>> = pattern.bits().iter().map(|&b| Some(b)).collect();
    let built = build_fixed_pattern(inst, &fixing, None)?;
    let sol = solve_escalating(&built.prog, settings)?;
    match sol.status {
        SolveStatus::Optimal => {
            let n = inst.n;
            let mut y = sol.z[n..2 * n].to_vec();
            for i in 0..n {
                if !pattern.get(i) {
                    y[i] = T::zero();
                }
            }
            Ok(Some((pattern.clone(), y, sol.objective)))
        }
        _ => Ok(None),
    }
}

/// Retries a stalled solve with flipped equilibration and larger budgets.
/// Returns the final attempt either way; the caller decides what a still
/// unconverged status means for it.
fn solve_escalating<T: Real>(
    prog: &crate::conic::ConicProgram<T>,
    settings: &SolverSettings<T>,
) -> Result<crate::conic::ConicSolution<T>, Error> {
    let mut sol = solve(prog, settings)?;
    if sol.status != SolveStatus::IterLimit {
        return Ok(sol);
    }
    let retries = [
        (settings.max_iters, !settings.scaling),
        (settings.max_iters.saturating_mul(5), settings.scaling),
        (settings.max_iters.saturating_mul(5), !settings.scaling),
        (settings.max_iters.saturating_mul(25), settings.scaling),
        (settings.max_iters.saturating_mul(25), !settings.scaling),
    ];
    for (max_iters, scaling) in retries {
        let relaxed = SolverSettings { max_iters, scaling, ..settings.clone() };
        sol = solve(prog, &relaxed)?;
        if sol.status != SolveStatus::IterLimit {
            return Ok(sol);
        }
    }
    Ok(sol)
}

struct Open<T> {
    bound: T,
    seq: usize,
    id: usize,
    depth: usize,
    fixing: Vec<Option<bool>>,
    x: Vec<T>,
    y: Vec<T>,
}

impl<T: Real> PartialEq for Open<T> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl<T: Real> Eq for Open<T> {}
impl<T: Real> PartialOrd for Open<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Open<T> {
    // Max-heap: "greatest" is the smallest bound, ties broken first-in
    // first-out so runs are reproducible.
    fn cmp(&self, other: &Self) -> Ordering {
        match other.bound.partial_cmp(&self.bound) {
            Some(Ordering::Equal) | None => other.seq.cmp(&self.seq),
            Some(o) => o,
        }
    }
}

struct Search<'a, T> {
    inst: &'a QiInstance<T>,
    settings: &'a BnBSettings<T>,
    d: Vec<T>,
    node_count: usize,
    log: Vec<NodeRecord<T>>,
    incumbent: Option<(Pattern, Vec<T>, T)>,
    tried_patterns: HashSet<Pattern>,
}

enum Expanded<T> {
    Solved(T, Vec<T>, Vec<T>),
    Infeasible,
    Unbounded,
}

impl<T: Real> Search<'_, T> {
    /// Solves one node relaxation, records it, and feeds the rounding
    /// heuristic. Returns the node's bound and fractional point.
    fn expand(
        &mut self,
        fixing: &[Option<bool>],
        parent: Option<usize>,
        depth: usize,
    ) -> Result<(usize, Expanded<T>), Error> {
        let id = self.log.len();
        self.node_count += 1;
        let built = build_fixed_pattern(self.inst, fixing, Some(&self.d))?;
        let sol = solve_escalating(&built.prog, &self.settings.solver)?;
        if sol.status == SolveStatus::IterLimit {
            // A bound from an unconverged iterate could prune the optimum;
            // refusing to continue is the only sound option left.
            return Err(Error::Numeric(format!(
                "node relaxation at depth {depth} failed to converge after escalation"
            )));
        }
        let outcome = match sol.status {
            SolveStatus::PrimalInfeasible => {
                self.log.push(NodeRecord {
                    id,
                    parent,
                    depth,
                    bound: ExtReal::PosInf,
                    action: NodeAction::Infeasible,
                });
                Expanded::Infeasible
            }
            SolveStatus::DualInfeasible => {
                self.log.push(NodeRecord {
                    id,
                    parent,
                    depth,
                    bound: ExtReal::NegInf,
                    action: NodeAction::Open,
                });
                Expanded::Unbounded
            }
            SolveStatus::Optimal | SolveStatus::IterLimit => {
                debug_assert_eq!(sol.status, SolveStatus::Optimal);
                let n = self.inst.n;
                let x = sol.z[..n].to_vec();
                let y = sol.z[n..2 * n].to_vec();
                self.log.push(NodeRecord {
                    id,
                    parent,
                    depth,
                    bound: ExtReal::Finite(sol.objective),
                    action: NodeAction::Open,
                });
                self.try_round(&x)?;
                Expanded::Solved(sol.objective, x, y)
            }
        };
        Ok((id, outcome))
    }

    fn try_round(&mut self, x: &[T]) -> Result<(), Error> {
        let half = T::of(0.5);
        let pattern = Pattern::new(x.iter().map(|&v| v >= half).collect());
        if !self.tried_patterns.insert(pattern.clone()) {
            return Ok(());
        }
        if let Some((p, y, v)) = solve_pattern(self.inst, &pattern, &self.settings.solver)? {
            let better = match &self.incumbent {
                None => true,
                Some((_, _, best)) => v < *best,
            };
            if better {
                self.incumbent = Some((p, y, v));
            }
        }
        Ok(())
    }

    fn prune_margin(&self) -> T {
        match &self.incumbent {
            None => T::zero(),
            Some((_, _, v)) => self
                .settings
                .abs_gap
                .max(self.settings.rel_gap * (T::one() + v.abs())),
        }
    }
}

/// Free coordinate with the largest indicator violation y_i (1 - x_i),
/// if any violation is beyond noise; first index wins ties.
fn most_violated_indicator<T: Real>(
    fixing: &[Option<bool>],
    x: &[T],
    y: &[T],
) -> Option<usize> {
    let mut pick: Option<(usize, T)> = None;
    for i in 0..x.len() {
        if fixing[i].is_some() {
            continue;
        }
        let v = y[i].abs() * (T::one() - x[i]).max(T::zero());
        if v > T::of(INT_TOL) * (T::one() + y[i].abs())
            && pick.is_none_or(|(_, best)| v > best)
        {
            pick = Some((i, v));
        }
    }
    pick.map(|(i, _)| i)
}

/// Exact solve by best-bound branch and bound. The diagonal for the node
/// relaxations comes from one strengthened-relaxation solve at the root
/// (repaired if the duals are noisy, zero if unavailable).
pub fn solve_bnb<T: Real>(
    inst: &QiInstance<T>,
    settings: &BnBSettings<T>,
) -> Result<BnBReport<T>, Error> {
    if settings.abs_gap <= T::zero() || settings.rel_gap <= T::zero() {
        return Err(Error::InvalidArgument("gap settings must be positive".into()));
    }
    let n = inst.n;
    let root_relax = relax(inst, &Relaxation::OptPersp, &settings.solver)?;
    let d_star = match root_relax.status {
        SolveStatus::Optimal => match extract_optimal_diagonal(inst, &root_relax) {
            Ok(dd) if dd.is_feasible(&inst.q) => dd,
            Ok(dd) => repair_decomposition(&inst.q, &dd.d)?,
            Err(_) => DiagonalDecomposition::user_supplied(&inst.q, vec![T::zero(); n])?,
        },
        SolveStatus::DualInfeasible => {
            return Ok(BnBReport {
                status: BnBStatus::Unbounded,
                optimal_value: ExtReal::NegInf,
                incumbent_pattern: None,
                incumbent_y: None,
                node_count: 0,
                root_bound: ExtReal::NegInf,
                proof_gap: T::zero(),
                d_star_used: DiagonalDecomposition::user_supplied(&inst.q, vec![T::zero(); n])?,
                node_log: Vec::new(),
            });
        }
        // An infeasible or unconverged strengthening still leaves the
        // search sound; fall back to the plain split.
        _ => DiagonalDecomposition::user_supplied(&inst.q, vec![T::zero(); n])?,
    };

    let mut search = Search {
        inst,
        settings,
        d: d_star.d.clone(),
        node_count: 0,
        log: Vec::new(),
        incumbent: None,
        tried_patterns: HashSet::new(),
    };
    let mut heap: BinaryHeap<Open<T>> = BinaryHeap::new();
    let mut seq = 0usize;

    let root_fixing = vec![None; n];
    let (root_id, root_outcome) = search.expand(&root_fixing, None, 0)?;
    let root_bound = search.log[root_id].bound;
    match root_outcome {
        Expanded::Unbounded => {
            return Ok(finish(
                BnBStatus::Unbounded,
                ExtReal::NegInf,
                search,
                root_bound,
                T::zero(),
                d_star,
            ));
        }
        Expanded::Infeasible => {
            return Ok(finish(
                BnBStatus::Solved,
                ExtReal::PosInf,
                search,
                root_bound,
                T::zero(),
                d_star,
            ));
        }
        Expanded::Solved(bound, x, y) => {
            heap.push(Open { bound, seq, id: root_id, depth: 0, fixing: root_fixing, x, y });
            seq += 1;
        }
    }

    let mut status = BnBStatus::Solved;
    let mut open_floor: Option<T> = None;
    while let Some(node) = heap.pop() {
        if search.node_count >= settings.max_nodes {
            status = BnBStatus::NodeLimit;
            open_floor = Some(
                heap.iter()
                    .map(|o| o.bound)
                    .fold(node.bound, |a, b| a.min(b)),
            );
            break;
        }
        if let Some((_, _, inc)) = &search.incumbent {
            if node.bound >= *inc - search.prune_margin() {
                search.log[node.id].action = NodeAction::PrunedByBound;
                continue;
            }
        }

        // Most fractional free coordinate; first index wins ties.
        let mut pick: Option<(usize, T)> = None;
        for i in 0..n {
            if node.fixing[i].is_some() {
                continue;
            }
            let frac = node.x[i].min(T::one() - node.x[i]);
            if pick.is_none_or(|(_, best)| frac > best) {
                pick = Some((i, frac));
            }
        }
        let branch_on = match pick {
            Some((i, frac)) if frac > T::of(INT_TOL) => i,
            // Integral x alone is not enough to stop: a node whose
            // diagonal is zero at coordinate i never couples x_i to y_i,
            // so the relaxation happily reports x_i = 0 with y_i > 0.
            // Separate the worst such indicator violation instead.
            _ => match most_violated_indicator(&node.fixing, &node.x, &node.y) {
                Some(i) => i,
                None => {
                    // Integer feasible: the relaxation value is attained at
                    // a feasible point of the original problem, so it is an
                    // upper bound as well; take it even if the heuristic
                    // solve of the same pattern was skipped earlier.
                    search.log[node.id].action = NodeAction::Fathomed;
                    let half = T::of(0.5);
                    let pattern =
                        Pattern::new(node.x.iter().map(|&v| v >= half).collect());
                    let mut y = node.y.clone();
                    for i in 0..n {
                        if !pattern.get(i) {
                            y[i] = T::zero();
                        }
                    }
                    let better = match &search.incumbent {
                        None => true,
                        Some((_, _, best)) => node.bound < *best,
                    };
                    if better {
                        search.incumbent = Some((pattern, y, node.bound));
                    }
                    continue;
                }
            },
        };
        search.log[node.id].action = NodeAction::Branched;

        for value in [false, true] {
            let mut fixing = node.fixing.clone();
            fixing[branch_on] = Some(value);
            let (id, outcome) = search.expand(&fixing, Some(node.id), node.depth + 1)?;
            match outcome {
                Expanded::Unbounded => {
                    return Ok(finish(
                        BnBStatus::Unbounded,
                        ExtReal::NegInf,
                        search,
                        root_bound,
                        T::zero(),
                        d_star,
                    ));
                }
                Expanded::Infeasible => {}
                Expanded::Solved(bound, x, y) => {
                    heap.push(Open { bound, seq, id, depth: node.depth + 1, fixing, x, y });
                    seq += 1;
                }
            }
        }
    }

    let (optimal_value, proof_gap) = match (&search.incumbent, status) {
        (Some((_, _, v)), BnBStatus::Solved) => (ExtReal::Finite(*v), T::zero()),
        (Some((_, _, v)), _) => {
            let floor = open_floor.unwrap_or(*v);
            (ExtReal::Finite(*v), (*v - floor).max(T::zero()))
        }
        // Every leaf proved infeasible.
        (None, BnBStatus::Solved) => (ExtReal::PosInf, T::zero()),
        (None, _) => (ExtReal::PosInf, T::zero()),
    };
    Ok(finish(status, optimal_value, search, root_bound, proof_gap, d_star))
}

fn finish<T: Real>(
    status: BnBStatus,
    optimal_value: ExtReal<T>,
    search: Search<'_, T>,
    root_bound: ExtReal<T>,
    proof_gap: T,
    d_star: DiagonalDecomposition<T>,
) -> BnBReport<T> {
    let (incumbent_pattern, incumbent_y) = match search.incumbent {
        Some((p, y, _)) => (Some(p), Some(y)),
        None => (None, None),
    };
    BnBReport {
        status,
        optimal_value,
        incumbent_pattern,
        incumbent_y,
        node_count: search.node_count,
        root_bound,
        proof_gap,
        d_star_used: d_star,
        node_log: search.log,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::SideConstraint;
    use crate::linalg::SymMatrix;
    use crate::oracle::brute_force;

    fn settings() -> BnBSettings<f64> {
        BnBSettings::default()
    }

    fn one_coordinate() -> QiInstance<f64> {
        QiInstance::new(
            vec![3.0],
            vec![-4.0],
            SymMatrix::from_rows(&[vec![1.0]]).unwrap(),
        )
    }

    fn two_coordinate() -> QiInstance<f64> {
        QiInstance::new(
            vec![1.0, 1.0],
            vec![-3.0, -3.0],
            SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap(),
        )
    }

    #[test]
    fn one_coordinate_solves_at_the_root() {
        let report = solve_bnb(&one_coordinate(), &settings()).unwrap();
        assert_eq!(report.status, BnBStatus::Solved);
        let v = report.optimal_value.finite().unwrap();
        assert!((v + 1.0).abs() < 1e-6, "value {v}");
        assert!(report.node_count <= 3, "node count {}", report.node_count);
        assert_eq!(
            report.incumbent_pattern.as_ref().unwrap(),
            &Pattern::new(vec![true])
        );
        let y = report.incumbent_y.as_ref().unwrap();
        assert!((y[0] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn two_coordinate_matches_the_oracle() {
        let inst = two_coordinate();
        let report = solve_bnb(&inst, &settings()).unwrap();
        assert_eq!(report.status, BnBStatus::Solved);
        let v = report.optimal_value.finite().unwrap();
        assert!((v + 0.125).abs() < 1e-6, "value {v}");
        let root = report.root_bound.finite().unwrap();
        assert!(root <= v + 1e-6, "root bound {root} above optimum {v}");
    }

    #[test]
    fn nonnegative_costs_solve_at_the_root() {
        let inst = QiInstance::new(
            vec![1.0, 2.0],
            vec![0.5, 0.0],
            SymMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        );
        let report = solve_bnb(&inst, &settings()).unwrap();
        assert_eq!(report.status, BnBStatus::Solved);
        let v = report.optimal_value.finite().unwrap();
        assert!(v.abs() < 1e-6, "value {v}");
    }

    #[test]
    fn child_bounds_never_drop_below_the_parent() {
        let inst = two_coordinate();
        let report = solve_bnb(&inst, &settings()).unwrap();
        let scale = 1.0 + inst.q.max_abs();
        for rec in &report.node_log {
            let Some(parent) = rec.parent else { continue };
            let (ExtReal::Finite(child), ExtReal::Finite(par)) =
                (rec.bound, report.node_log[parent].bound)
            else {
                continue;
            };
            assert!(
                child >= par - 1e-6 * scale,
                "node {} bound {child} under parent {par}",
                rec.id
            );
        }
    }

    #[test]
    fn infeasible_side_constraints_report_plus_infinity() {
        let mut inst = one_coordinate();
        // x + y <= -1 cannot hold with x, y >= 0.
        inst.side_constraints.push(SideConstraint {
            gx: vec![1.0],
            gy: vec![1.0],
            rhs: -1.0,
        });
        let report = solve_bnb(&inst, &settings()).unwrap();
        assert_eq!(report.status, BnBStatus::Solved);
        assert_eq!(report.optimal_value, ExtReal::PosInf);
        assert!(report.incumbent_pattern.is_none());
    }

    #[test]
    fn node_limit_reports_the_remaining_gap() {
        let mut s = settings();
        s.max_nodes = 1;
        let report = solve_bnb(&two_coordinate(), &s).unwrap();
        assert_eq!(report.status, BnBStatus::NodeLimit);
        // The heuristic at the root already found an incumbent; the gap
        // against the open bound must be reported, not hidden.
        assert!(report.incumbent_pattern.is_some());
        assert!(report.proof_gap >= 0.0);
    }

    #[test]
    fn random_instances_match_the_oracle() {
        use crate::instance::{random_instance, GenParams};
        for trial in 0u64..6 {
            let n = 2 + (trial as usize % 3);
            let params = GenParams {
                rank_k: 1 + trial as usize % n,
                diag_shift: if trial % 2 == 0 { 0.5 } else { 0.0 },
                num_side_constraints: (trial % 2) as usize,
                ..GenParams::default()
            };
            let inst = random_instance(n, 900 + trial, &params).unwrap();
            let report = solve_bnb(&inst, &settings()).unwrap();
            let oracle = brute_force(&inst, &settings().solver).unwrap();
            match (report.optimal_value, oracle.optimal_value) {
                (ExtReal::Finite(b), ExtReal::Finite(o)) => {
                    let tol = 1e-5 * (1.0 + o.abs());
                    assert!((b - o).abs() <= tol, "trial {trial}: bnb {b} vs oracle {o}");
                }
                (b, o) => assert_eq!(b, o, "trial {trial}"),
            }
        }
    }
}
