//! Approximate G-optimal designs over finite action sets and their rounding into
//! per-round coresets.
//!
//! Designs are computed by Frank-Wolfe with away steps on the log-det objective.
//! By the Kiefer-Wolfowitz equivalence theorem the maximiser of `log det M(pi)` is
//! also G-optimal with `max_a ||a||^2_{M(pi)^{-1}} = dim(span A)`, so the g-value
//! doubles as a convergence certificate.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RangeEigen, SpanBasis};

/// Slack allowed on the unit-norm bound of action vectors.
const NORM_SLACK: f64 = 1e-9;

/// Finite set of `K >= 1` action vectors in `R^d`, each of Euclidean norm at most one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActionSetFile", into = "ActionSetFile")]
pub struct ActionSet {
    dim: usize,
    actions: Vec<DVector<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionSetFile {
    dim: usize,
    actions: Vec<Vec<f64>>,
}

impl TryFrom<ActionSetFile> for ActionSet {
    type Error = Error;

    fn try_from(f: ActionSetFile) -> Result<Self> {
        ActionSet::new(f.dim, f.actions.into_iter().map(DVector::from_vec).collect())
    }
}

impl From<ActionSet> for ActionSetFile {
    fn from(a: ActionSet) -> Self {
        ActionSetFile {
            dim: a.dim,
            actions: a.actions.iter().map(|v| v.as_slice().to_vec()).collect(),
        }
    }
}

impl ActionSet {
    pub fn new(dim: usize, actions: Vec<DVector<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("action dimension must be positive".into()));
        }
        if actions.is_empty() {
            return Err(Error::InvalidInput("action set is empty".into()));
        }
        for (i, a) in actions.iter().enumerate() {
            if a.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "action {i} has dimension {} but the set has dimension {dim}",
                    a.len()
                )));
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("action {i} is not finite")));
            }
            let n = a.norm();
            if n > 1.0 + NORM_SLACK {
                return Err(Error::InvalidInput(format!(
                    "action {i} has norm {n} > 1"
                )));
            }
        }
        Ok(ActionSet { dim, actions })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        Self::new(dim, rows.into_iter().map(DVector::from_vec).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[DVector<f64>] {
        &self.actions
    }

    pub fn get(&self, index: usize) -> &DVector<f64> {
        &self.actions[index]
    }

    /// The sub-collection at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<ActionSet> {
        let actions = indices
            .iter()
            .map(|&i| {
                self.actions
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidInput(format!("action index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        ActionSet::new(self.dim, actions)
    }

    /// Dimension of the linear span of the actions.
    pub fn effective_dim(&self) -> usize {
        linalg::span_basis(&self.actions, linalg::RANK_TOL).rank()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }
}

/// Client model: every reward from a distinct client (M1), or all rewards of one
/// action aggregated and privatised by a single client (M2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClientModel {
    M1,
    M2,
}

impl fmt::Display for ClientModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClientModel::M1 => f.write_str("M1"),
            ClientModel::M2 => f.write_str("M2"),
        }
    }
}

/// Tuning knobs for [`compute_design_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignOptions {
    /// Target: `gvalue <= (1 + tol) * effective_dim`.
    pub tol: f64,
    pub max_iters: usize,
    /// Constant in the support bound `C * r * max(1, ln ln r)`.
    pub support_constant: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            tol: 0.01,
            max_iters: 20_000,
            support_constant: 4.0,
        }
    }
}

/// Upper bound on the support size of a design in a span of dimension `r`.
pub fn support_bound(support_constant: f64, r: usize) -> usize {
    let r_f = r.max(1) as f64;
    let loglog = r_f.ln().ln();
    let factor = if loglog.is_finite() { loglog.max(1.0) } else { 1.0 };
    (support_constant * r_f * factor).floor() as usize
}

/// A probability distribution over the actions of an [`ActionSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    /// Positive weights keyed by action index; absent indices have weight zero.
    pub weights: BTreeMap<usize, f64>,
    /// `M(pi) = sum_a pi(a) a a^T` in ambient coordinates.
    #[serde(with = "crate::serde_util::matrix")]
    pub gram: DMatrix<f64>,
    /// `max_a ||a||^2_{M(pi)^+}`.
    pub gvalue: f64,
    pub effective_dim: usize,
    pub iterations: usize,
    /// Whether the `(1 + tol)` certificate was reached (the `2 r` bound always holds).
    pub converged: bool,
}

impl Design {
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights.keys().copied()
    }

    pub fn support_len(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.weights.get(&index).copied().unwrap_or(0.0)
    }
}

/// [`compute_design_with`] using the default support constant.
pub fn compute_design(actions: &ActionSet, tol: f64, max_iters: usize) -> Result<Design> {
    compute_design_with(
        actions,
        &DesignOptions {
            tol,
            max_iters,
            ..DesignOptions::default()
        },
    )
}

/// Approximate G-optimal design over `actions`.
///
/// Works inside the span of the actions, so rank-deficient sets report their
/// effective dimension and are certified against `2 * effective_dim`.
pub fn compute_design_with(actions: &ActionSet, opts: &DesignOptions) -> Result<Design> {
    if !(opts.tol > 0.0) || !opts.tol.is_finite() {
        return Err(Error::InvalidInput(format!("design tolerance must be positive, got {}", opts.tol)));
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidInput("max_iters must be positive".into()));
    }
    let k = actions.len();
    let span = linalg::span_basis(actions.actions(), linalg::RANK_TOL);
    let r = span.rank();

    if r == 0 {
        // Every action is the zero vector: any distribution is optimal.
        return Ok(Design {
            weights: BTreeMap::from([(0, 1.0)]),
            gram: DMatrix::zeros(actions.dim(), actions.dim()),
            gvalue: 0.0,
            effective_dim: 0,
            iterations: 0,
            converged: true,
        });
    }

    let reduced: Vec<DVector<f64>> = actions.actions().iter().map(|a| span.coords(a)).collect();
    let mut solver = FrankWolfe::new(&reduced, &span, r);
    let (iterations, converged) = solver.run(opts.tol, opts.max_iters);

    // Drop negligible weights and renormalise.
    let prune = 1e-6 / k as f64;
    for w in solver.weights.iter_mut() {
        if *w < prune {
            *w = 0.0;
        }
    }
    let total: f64 = solver.weights.iter().sum();
    for w in solver.weights.iter_mut() {
        *w /= total;
    }

    let bound = support_bound(opts.support_constant, r);
    if solver.support_len() > bound {
        solver.reduce_support(bound, 2.0 * r as f64);
    }

    let g = solver.gvalues().ok_or(Error::FailsToConverge {
        gvalue: f64::INFINITY,
        effective_dim: r,
    })?;
    let gvalue = g.iter().cloned().fold(0.0, f64::max);
    if gvalue > 2.0 * r as f64 {
        return Err(Error::FailsToConverge {
            gvalue,
            effective_dim: r,
        });
    }

    let weights: BTreeMap<usize, f64> = solver
        .weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| (i, w))
        .collect();
    let mut gram = DMatrix::zeros(actions.dim(), actions.dim());
    for (&i, &w) in &weights {
        let a = actions.get(i);
        gram.ger(w, a, a, 1.0);
    }

    Ok(Design {
        weights,
        gram,
        gvalue,
        effective_dim: r,
        iterations,
        converged: converged && gvalue <= (1.0 + opts.tol) * r as f64,
    })
}

/// Frank-Wolfe with away steps for `max log det M(pi)` in reduced coordinates.
struct FrankWolfe<'a> {
    points: &'a [DVector<f64>],
    r: usize,
    weights: Vec<f64>,
}

impl<'a> FrankWolfe<'a> {
    /// Starts from the uniform distribution on the pivots of the rank-revealing
    /// factorisation, which span the reduced space.
    fn new(points: &'a [DVector<f64>], span: &SpanBasis, r: usize) -> Self {
        let mut weights = vec![0.0; points.len()];
        for &p in &span.pivots {
            weights[p] = 1.0 / r as f64;
        }
        FrankWolfe { points, r, weights }
    }

    fn support_len(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    fn moment(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.r, self.r);
        for (b, &w) in self.points.iter().zip(&self.weights) {
            if w > 0.0 {
                m.ger(w, b, b, 1.0);
            }
        }
        m
    }

    /// `||b_a||^2_{M^{-1}}` for every point, or `None` if `M` is singular.
    fn gvalues(&self) -> Option<Vec<f64>> {
        let chol = self.moment().cholesky()?;
        let l = chol.l();
        Some(
            self.points
                .iter()
                .map(|b| {
                    let y = l
                        .solve_lower_triangular(b)
                        .expect("Cholesky factor has a positive diagonal");
                    y.norm_squared()
                })
                .collect(),
        )
    }

    /// Returns `(iterations, converged)`.
    fn run(&mut self, tol: f64, max_iters: usize) -> (usize, bool) {
        let r = self.r as f64;
        for it in 0..max_iters {
            let Some(g) = self.gvalues() else {
                return (it, false);
            };
            // Lowest index wins ties.
            let (j_max, g_max) = argmax(&g, |_| true);
            if g_max <= (1.0 + tol) * r {
                return (it, true);
            }
            let (j_min, g_min) = argmin(&g, |i| self.weights[i] > 0.0);
            let eps_toward = g_max / r - 1.0;
            let eps_away = 1.0 - g_min / r;

            if eps_toward >= eps_away || self.support_len() == 1 {
                let beta = (g_max - r) / (r * (g_max - 1.0));
                for w in self.weights.iter_mut() {
                    *w *= 1.0 - beta;
                }
                self.weights[j_max] += beta;
            } else {
                let pj = self.weights[j_min];
                let beta_max = pj / (1.0 - pj);
                let beta = if g_min > 1.0 {
                    ((r - g_min) / (r * (g_min - 1.0))).min(beta_max)
                } else {
                    beta_max
                };
                for w in self.weights.iter_mut() {
                    *w *= 1.0 + beta;
                }
                if beta >= beta_max {
                    self.weights[j_min] = 0.0;
                } else {
                    self.weights[j_min] -= beta;
                }
            }
        }
        let done = self
            .gvalues()
            .map(|g| g.iter().cloned().fold(0.0, f64::max) <= (1.0 + tol) * r)
            .unwrap_or(false);
        (max_iters, done)
    }

    /// Greedily removes the lightest support point and re-optimises over the
    /// remaining support while the full-set g-value stays within `g_cap`.
    fn reduce_support(&mut self, bound: usize, g_cap: f64) {
        while self.support_len() > bound {
            let (j, _) = argmin(&self.weights, |i| self.weights[i] > 0.0);
            let saved = self.weights.clone();
            self.weights[j] = 0.0;
            let total: f64 = self.weights.iter().sum();
            for w in self.weights.iter_mut() {
                *w /= total;
            }
            self.polish_on_support(200);
            let ok = self
                .gvalues()
                .map(|g| g.iter().cloned().fold(0.0, f64::max) <= g_cap)
                .unwrap_or(false);
            if !ok {
                self.weights = saved;
                return;
            }
        }
    }

    /// Multiplicative (Titterington) updates restricted to the current support.
    fn polish_on_support(&mut self, steps: usize) {
        let r = self.r as f64;
        for _ in 0..steps {
            let Some(g) = self.gvalues() else { return };
            for (w, gi) in self.weights.iter_mut().zip(&g) {
                *w *= gi / r;
            }
            let total: f64 = self.weights.iter().sum();
            for w in self.weights.iter_mut() {
                *w /= total;
            }
        }
    }
}

fn argmax(xs: &[f64], admit: impl Fn(usize) -> bool) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (i, &x) in xs.iter().enumerate() {
        if admit(i) && x > best.1 {
            best = (i, x);
        }
    }
    best
}

fn argmin(xs: &[f64], admit: impl Fn(usize) -> bool) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, &x) in xs.iter().enumerate() {
        if admit(i) && x < best.1 {
            best = (i, x);
        }
    }
    best
}

/// Multiset of actions realised from a design for one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coreset {
    /// `(action index, play count)` for every action in the design's support.
    pub entries: Vec<(usize, u64)>,
    pub total: u64,
    pub model: ClientModel,
    pub nu: Option<f64>,
}

impl Coreset {
    pub fn support_len(&self) -> usize {
        self.entries.len()
    }
}

/// `ceil(x)`, snapping values within floating-point noise of an integer.
fn ceil_count(x: f64) -> u64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest as u64
    } else {
        x.ceil() as u64
    }
}

/// Rounds `design` into play counts for a batch of nominal size `budget`:
/// `ceil(m pi(a))` under M1 and `ceil(m max(pi(a), nu))` under M2.
pub fn build_coreset(design: &Design, budget: u64, model: ClientModel, nu: f64) -> Result<Coreset> {
    if budget == 0 {
        return Err(Error::InvalidInput("coreset budget must be positive".into()));
    }
    let m = budget as f64;
    let entries: Vec<(usize, u64)> = match model {
        ClientModel::M1 => design
            .weights
            .iter()
            .map(|(&i, &w)| (i, ceil_count(m * w)))
            .collect(),
        ClientModel::M2 => {
            if !(nu > 0.0 && nu < 1.0) {
                return Err(Error::InvalidNu(nu));
            }
            design
                .weights
                .iter()
                .map(|(&i, &w)| (i, ceil_count(m * w.max(nu))))
                .collect()
        }
    };
    let total = entries.iter().map(|&(_, n)| n).sum();
    Ok(Coreset {
        entries,
        total,
        model,
        nu: matches!(model, ClientModel::M2).then_some(nu),
    })
}

/// `<a, M^+ a>` with the pseudoinverse restricted to the range of `gram`.
pub fn weighted_norm_sq(a: &DVector<f64>, gram: &DMatrix<f64>) -> Result<f64> {
    if a.len() != gram.nrows() || gram.nrows() != gram.ncols() {
        return Err(Error::InvalidInput("dimension mismatch between vector and Gram matrix".into()));
    }
    RangeEigen::new(gram).pinv_quad(a)
}
