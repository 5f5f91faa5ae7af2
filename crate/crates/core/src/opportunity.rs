//! Opportunity process, adjustment process and the measures derived from them.
//!
//! The opportunity process `L(n)` is the conditional minimal expected squared
//! error of hedging the constant payoff 1 from node `n`. On a tree it follows
//! from one backward pass starting at `L = 1` on the leaves:
//!
//! ```text
//! m0     = Σ p_k L_k
//! bbar_u = Σ p_k L_k Δ_k
//! cbar_u = Σ p_k L_k Δ_k Δ_kᵀ
//! ã      = cbar_u⁺ bbar_u
//! L      = m0 − bbar_uᵀ cbar_u⁺ bbar_u
//! ```
//!
//! Moments are kept unnormalized; the opportunity-neutral characteristics are
//! `b* = bbar_u / m0`, `c̃* = cbar_u / m0` and `ĉ* = c̃* − b* b*ᵀ`.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dvec, pinv_psd, OneStepMoments, SymMatrix};
use crate::tree::ScenarioTree;

/// `L(n)` at or below this value is reported as [`Error::DegenerateStep`].
pub const DEGENERATE_L: f64 = 1e-12;

/// Per-node quantities of one backward step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOpportunity {
    pub increments: Vec<DVector<f64>>,
    pub moments: OneStepMoments,
    pub cbar_pinv: SymMatrix,
    /// Adjustment process `ã`.
    pub a_tilde: DVector<f64>,
    /// Extended adjustment process `â = (1 + ΔA^K) ã`.
    pub a_hat: DVector<f64>,
    /// `ΔA^K = m0 / L − 1`.
    pub dak: f64,
    pub b_sstar: DVector<f64>,
    pub c_tilde_sstar: SymMatrix,
    pub c_hat_sstar: SymMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpportunitySurface {
    l: Vec<f64>,
    /// `1 − L`, accumulated without cancellation (see [`sharpe_ratio`]).
    shortfall: Vec<f64>,
    steps: Vec<StepOpportunity>,
}

impl OpportunitySurface {
    /// Opportunity process at node `n`.
    pub fn l(&self, n: usize) -> f64 {
        self.l[n]
    }

    pub fn l0(&self) -> f64 {
        self.l[0]
    }

    pub fn l_values(&self) -> &[f64] {
        &self.l
    }

    /// `1 − L(n)`
    pub fn shortfall(&self, n: usize) -> f64 {
        self.shortfall[n]
    }

    /// Step data of an interior node.
    pub fn step(&self, n: usize) -> &StepOpportunity {
        &self.steps[n]
    }

    pub fn steps(&self) -> &[StepOpportunity] {
        &self.steps
    }

    pub fn a_tilde(&self, n: usize) -> &DVector<f64> {
        &self.steps[n].a_tilde
    }

    pub fn sharpe_ratio(&self, n: usize) -> f64 {
        sharpe_ratio(self, n)
    }
}

fn step_at(
    tree: &ScenarioTree,
    l: &[f64],
    shortfall: &[f64],
    n: usize,
) -> Result<(f64, f64, StepOpportunity)> {
    let node = tree.node(n);
    let increments: Vec<DVector<f64>> = tree.increments(n).iter().map(|v| dvec(v)).collect();
    let weights: Vec<f64> = node.children.iter().map(|e| e.p * l[e.node]).collect();
    let moments = OneStepMoments::assemble(&weights, &increments);
    let cbar_pinv = pinv_psd(&moments.cbar_u)?;
    let a_tilde = cbar_pinv.mul_vec(&moments.bbar_u);
    let value = moments.m0 - moments.bbar_u.dot(&a_tilde);
    if !(value > DEGENERATE_L) {
        return Err(Error::DegenerateStep { node: n, value });
    }
    let tradeoff = moments.bbar_u.dot(&a_tilde);
    let deficit = node
        .children
        .iter()
        .map(|e| e.p * shortfall[e.node])
        .sum::<f64>()
        + tradeoff;
    let dak = moments.m0 / value - 1.0;
    let a_hat = &a_tilde * (1.0 + dak);
    let b_sstar = &moments.bbar_u / moments.m0;
    let c_tilde_sstar = moments.cbar_u.scaled(1.0 / moments.m0);
    let c_hat_sstar = c_tilde_sstar.minus_outer(&b_sstar);
    Ok((
        value,
        deficit,
        StepOpportunity {
            increments,
            moments,
            cbar_pinv,
            a_tilde,
            a_hat,
            dak,
            b_sstar,
            c_tilde_sstar,
            c_hat_sstar,
        },
    ))
}

/// Backward induction for `L` and `ã` over the whole tree.
pub fn compute_opportunity(tree: &ScenarioTree) -> Result<OpportunitySurface> {
    let interior = tree.interior().len();
    let mut l = vec![1.0; tree.len()];
    let mut shortfall = vec![0.0; tree.len()];
    let mut steps: Vec<Option<StepOpportunity>> = vec![None; interior];
    for t in (0..tree.horizon()).rev() {
        let slice = tree.slice(t);
        let results: Vec<Result<(f64, f64, StepOpportunity)>> = slice
            .clone()
            .into_par_iter()
            .map(|n| step_at(tree, &l, &shortfall, n))
            .collect();
        for (n, res) in slice.zip(results) {
            let (value, deficit, step) = res?;
            l[n] = value;
            shortfall[n] = deficit;
            steps[n] = Some(step);
        }
    }
    Ok(OpportunitySurface {
        l,
        shortfall,
        steps: steps
            .into_iter()
            .map(|s| s.expect("every interior node visited"))
            .collect(),
    })
}

/// Maximal conditional Sharpe ratio on the remaining horizon, `√(1/L − 1)`.
///
/// Evaluated as `√((1 − L)/L)` with `1 − L = Σ p_k (1 − L_k) + bbar_uᵀ cbar_u⁺ bbar_u`
/// carried through the backward pass, which stays accurate when `L` is close to 1.
pub fn sharpe_ratio(surf: &OpportunitySurface, n: usize) -> f64 {
    (surf.shortfall(n) / surf.l(n)).max(0.0).sqrt()
}

/// One-step and cumulative weights of the variance-optimal signed martingale
/// measure `Q*` and the opportunity-neutral measure `P*`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSurface {
    /// Per interior node and child: `(L_k / L(n)) (1 − ãᵀ Δ_k)`; may be negative.
    pub qstar_w: Vec<Vec<f64>>,
    /// Per interior node and child: `p_k L_k / m0`.
    pub pstar_p: Vec<Vec<f64>>,
    /// Per interior node and child: `1 − âᵀ (Δ_k − b*)`.
    pub nstar_f: Vec<Vec<f64>>,
    /// Per leaf: cumulative `dQ*/dP`.
    pub z_qstar: Vec<f64>,
    /// Per leaf: cumulative `dP*/dP`.
    pub z_pstar: Vec<f64>,
    /// Number of interior nodes with at least one negative `Q*` weight.
    pub negative_weight_nodes: usize,
}

pub fn measures(tree: &ScenarioTree, surf: &OpportunitySurface) -> MeasureSurface {
    let interior = tree.interior();
    let mut qstar_w = Vec::with_capacity(interior.len());
    let mut pstar_p = Vec::with_capacity(interior.len());
    let mut nstar_f = Vec::with_capacity(interior.len());
    for n in interior.clone() {
        let step = surf.step(n);
        let children = &tree.node(n).children;
        let ln = surf.l(n);
        qstar_w.push(
            children
                .iter()
                .zip(&step.increments)
                .map(|(e, delta)| surf.l(e.node) / ln * (1.0 - step.a_tilde.dot(delta)))
                .collect::<Vec<_>>(),
        );
        pstar_p.push(
            children
                .iter()
                .map(|e| e.p * surf.l(e.node) / step.moments.m0)
                .collect::<Vec<_>>(),
        );
        nstar_f.push(
            step.increments
                .iter()
                .map(|delta| 1.0 - step.a_hat.dot(&(delta - &step.b_sstar)))
                .collect::<Vec<_>>(),
        );
    }
    let negative_weight_nodes = qstar_w
        .iter()
        .filter(|w| w.iter().any(|&x| x < 0.0))
        .count();

    // cumulative densities, forward over the breadth-first order
    let mut zq = vec![1.0; tree.len()];
    let mut zp = vec![1.0; tree.len()];
    for n in interior {
        for (k, e) in tree.node(n).children.iter().enumerate() {
            zq[e.node] = zq[n] * qstar_w[n][k];
            zp[e.node] = zp[n] * pstar_p[n][k] / e.p;
        }
    }
    MeasureSurface {
        qstar_w,
        pstar_p,
        nstar_f,
        z_qstar: tree.leaves().map(|m| zq[m]).collect(),
        z_pstar: tree.leaves().map(|m| zp[m]).collect(),
        negative_weight_nodes,
    }
}

/// Mean-variance tradeoff increments and the flags derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct MvtReport {
    /// `ΔK̂(n) = bᵀ ĉ⁺ b` for unweighted one-step moments, per interior node.
    pub dk_hat: Vec<f64>,
    pub deterministic_mvt: bool,
    pub pstar_is_p: bool,
    /// When the MVT is deterministic: the largest relative deviation of
    /// `L(n)` from `ε(K̂)_t / ε(K̂)_T`.
    pub deterministic_l_error: Option<f64>,
}

/// Same-slice values within this tolerance count as identical.
pub const MVT_TOL: f64 = 1e-10;

pub fn mvt_process(tree: &ScenarioTree, surf: &OpportunitySurface) -> Result<MvtReport> {
    let mut dk_hat = Vec::with_capacity(tree.interior().len());
    for n in tree.interior() {
        let node = tree.node(n);
        let probs: Vec<f64> = node.children.iter().map(|e| e.p).collect();
        let m = OneStepMoments::assemble(&probs, &surf.step(n).increments);
        let c_hat = m.cbar_u.minus_outer(&m.bbar_u);
        let pinv = pinv_psd(&c_hat)?;
        dk_hat.push(pinv.bilinear(&m.bbar_u, &m.bbar_u));
    }
    let near = |a: f64, b: f64| (a - b).abs() <= MVT_TOL * a.abs().max(b.abs()).max(1.0);
    let per_slice: Vec<f64> = (0..tree.horizon())
        .map(|t| dk_hat[tree.slice(t).start])
        .collect();
    let deterministic_mvt =
        (0..tree.horizon()).all(|t| tree.slice(t).all(|n| near(dk_hat[n], per_slice[t])));
    let ms = measures(tree, surf);
    let pstar_is_p = ms.z_pstar.iter().all(|&z| (z - 1.0).abs() <= MVT_TOL);
    let deterministic_l_error = deterministic_mvt.then(|| {
        let mut tail = vec![1.0; tree.horizon() + 1];
        for t in (0..tree.horizon()).rev() {
            tail[t] = tail[t + 1] / (1.0 + per_slice[t]);
        }
        (0..tree.len())
            .map(|n| {
                let expected = tail[tree.node(n).time];
                (surf.l(n) - expected).abs() / expected
            })
            .fold(0.0, f64::max)
    });
    Ok(MvtReport {
        dk_hat,
        deterministic_mvt,
        pstar_is_p,
        deterministic_l_error,
    })
}

/// Value of the efficient strategy started at `start`, i.e. the products
/// `Π (1 − ãᵀ Δ)` along each path out of `start`. Returns `(node, value)`
/// for `start` and every descendant in breadth-first order.
pub fn efficient_value_process(
    tree: &ScenarioTree,
    surf: &OpportunitySurface,
    start: usize,
) -> Vec<(usize, f64)> {
    let mut out = vec![(start, 1.0)];
    let mut i = 0;
    while i < out.len() {
        let (n, value) = out[i];
        if !tree.is_leaf(n) {
            let step = surf.step(n);
            for (e, delta) in tree.node(n).children.iter().zip(&step.increments) {
                out.push((e.node, value * (1.0 - step.a_tilde.dot(delta))));
            }
        }
        i += 1;
    }
    out
}
