//! Mean value process, pure hedge coefficient, feedback strategy and the
//! exact expected squared hedging error.
//!
//! The hedging problem at node `n` with wealth `G` is solved by the value
//! function `L(n) (G − V(n))² + ε(n)`, where `ε(n)` accumulates the residual
//! terms `e(·)` of the subtree. Minimizing the one-step quadratic gives the
//! feedback holding `φ = ξ − (G − V) ã` with `ξ = cbar_u⁺ dbar_u`.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::opportunity::{MeasureSurface, OpportunitySurface};
use crate::tree::{Claim, ScenarioTree};

/// Mean value process `V`, indexed by node.
///
/// Backward recursion with the one-step `Q*` weights
/// `V(n) = Σ p_k (L_k / L(n)) (1 − ãᵀ Δ_k) V_k`, starting from `V = H` on the leaves.
pub fn compute_mean_value(
    tree: &ScenarioTree,
    surf: &OpportunitySurface,
    claim: &Claim,
) -> Vec<f64> {
    let mut v = vec![0.0; tree.len()];
    for m in tree.leaves() {
        v[m] = claim.at(tree, m);
    }
    for t in (0..tree.horizon()).rev() {
        let slice = tree.slice(t);
        let values: Vec<f64> = slice
            .clone()
            .into_par_iter()
            .map(|n| {
                let step = surf.step(n);
                let ln = surf.l(n);
                let mut total_weight = 0.0;
                let mut value = 0.0;
                for (e, delta) in tree.node(n).children.iter().zip(&step.increments) {
                    let w = e.p * surf.l(e.node) / ln * (1.0 - step.a_tilde.dot(delta));
                    total_weight += w;
                    value += w * v[e.node];
                }
                debug_assert!(
                    (total_weight - 1.0).abs() < 1e-8,
                    "Q* weights at node {n} sum to {total_weight}"
                );
                value
            })
            .collect();
        for (n, x) in slice.zip(values) {
            v[n] = x;
        }
    }
    v
}

/// Pure hedge coefficient `ξ = cbar_u⁺ dbar_u` together with the weighted
/// cross-moment `dbar_u = Σ p_k L_k Δ_k (V_k − V(n))`, per interior node.
pub fn compute_pure_hedge(
    tree: &ScenarioTree,
    surf: &OpportunitySurface,
    v: &[f64],
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    tree.interior()
        .into_par_iter()
        .map(|n| {
            let step = surf.step(n);
            let mut dbar = DVector::zeros(tree.num_assets());
            for (e, delta) in tree.node(n).children.iter().zip(&step.increments) {
                dbar.axpy(e.p * surf.l(e.node) * (v[e.node] - v[n]), delta, 1.0);
            }
            (step.cbar_pinv.mul_vec(&dbar), dbar)
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HedgePlan {
    /// Mean value process per node.
    pub v: Vec<f64>,
    /// Pure hedge coefficient per interior node.
    pub xi: Vec<DVector<f64>>,
    pub dbar_u: Vec<DVector<f64>>,
    /// Conditional residual `e(n) = Σ p_k L_k (V_k − V(n) − ξᵀ Δ_k)²` per interior node,
    /// equal to `Σ p_k L_k (V_k − V(n))² − dbar_uᵀ ξ`.
    pub e: Vec<f64>,
    /// `max(1, max |H|)`.
    pub scale: f64,
}

impl HedgePlan {
    pub fn compute(tree: &ScenarioTree, surf: &OpportunitySurface, claim: &Claim) -> Self {
        let v = compute_mean_value(tree, surf, claim);
        let (xi, dbar_u) = compute_pure_hedge(tree, surf, &v);
        let e = tree
            .interior()
            .map(|n| {
                let step = surf.step(n);
                tree.node(n)
                    .children
                    .iter()
                    .zip(&step.increments)
                    .map(|(c, delta)| {
                        c.p * surf.l(c.node) * (v[c.node] - v[n] - xi[n].dot(delta)).powi(2)
                    })
                    .sum()
            })
            .collect();
        HedgePlan {
            v,
            xi,
            dbar_u,
            e,
            scale: claim.scale(),
        }
    }

    /// Optimal initial endowment `V₀`.
    pub fn v0(&self) -> f64 {
        self.v[0]
    }

    /// Feedback holding at interior node `n` when current wealth is `wealth`.
    pub fn feedback(&self, surf: &OpportunitySurface, n: usize, wealth: f64) -> DVector<f64> {
        &self.xi[n] - surf.a_tilde(n) * (wealth - self.v[n])
    }
}

/// Initial endowment choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Endowment {
    /// Use `V₀`.
    Auto,
    Fixed(f64),
}

impl Endowment {
    pub fn resolve(self, plan: &HedgePlan) -> f64 {
        match self {
            Endowment::Auto => plan.v0(),
            Endowment::Fixed(x) => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HedgeReport {
    pub v0_used: f64,
    pub v0_opt: f64,
    pub l0: f64,
    pub total_error: f64,
    /// `L₀ (v0 − V₀)²`
    pub endowment_term: f64,
    /// Per interior node.
    pub e: Vec<f64>,
    /// `Σ_{n at t} P(n) e(n)` for `t = 0..T`.
    pub slice_error: Vec<f64>,
}

/// Expected squared hedging error of the optimal strategy for endowment `v0`.
pub fn hedging_error(
    tree: &ScenarioTree,
    surf: &OpportunitySurface,
    plan: &HedgePlan,
    v0: f64,
) -> HedgeReport {
    let endowment_term = surf.l0() * (v0 - plan.v0()).powi(2);
    let slice_error: Vec<f64> = (0..tree.horizon())
        .map(|t| tree.slice(t).map(|n| tree.prob(n) * plan.e[n]).sum())
        .collect();
    let total_error = endowment_term + slice_error.iter().sum::<f64>();
    HedgeReport {
        v0_used: v0,
        v0_opt: plan.v0(),
        l0: surf.l0(),
        total_error,
        endowment_term,
        e: plan.e.clone(),
        slice_error,
    }
}

/// Wealth at every node and holdings at every interior node of a strategy
/// run forward over the whole tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub wealth: Vec<f64>,
    pub holdings: Vec<DVector<f64>>,
}

impl Rollout {
    /// `Σ_m P(m) (G_m − H_m)²`
    pub fn expected_sq_error(&self, tree: &ScenarioTree, claim: &Claim) -> f64 {
        tree.leaves()
            .map(|m| tree.prob(m) * (self.wealth[m] - claim.at(tree, m)).powi(2))
            .sum()
    }
}

/// Runs a self-financing strategy over every path. `holding(n, wealth)`
/// gives the position held over the step out of interior node `n`.
pub fn forward<F>(tree: &ScenarioTree, v0: f64, mut holding: F) -> Rollout
where
    F: FnMut(usize, f64) -> DVector<f64>,
{
    let mut wealth = vec![0.0; tree.len()];
    wealth[0] = v0;
    let mut holdings = Vec::with_capacity(tree.interior().len());
    for n in tree.interior() {
        let phi = holding(n, wealth[n]);
        for (k, e) in tree.node(n).children.iter().enumerate() {
            let gain: f64 = tree
                .increment(n, k)
                .iter()
                .zip(phi.iter())
                .map(|(d, h)| d * h)
                .sum();
            wealth[e.node] = wealth[n] + gain;
        }
        holdings.push(phi);
    }
    Rollout { wealth, holdings }
}

/// The optimal feedback strategy `φ = ξ − (G − V) ã` over every path.
pub fn rollout_all(
    tree: &ScenarioTree,
    surf: &OpportunitySurface,
    plan: &HedgePlan,
    v0: f64,
) -> Rollout {
    forward(tree, v0, |n, g| plan.feedback(surf, n, g))
}

/// One step of a single-path rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub node: usize,
    pub wealth: f64,
    pub holding: DVector<f64>,
}

/// Feedback strategy along one path given as child slots from the root.
/// Returns every step taken and the terminal wealth.
pub fn rollout_strategy(
    tree: &ScenarioTree,
    surf: &OpportunitySurface,
    plan: &HedgePlan,
    v0: f64,
    path: &[usize],
) -> (Vec<PathStep>, f64) {
    let mut n = tree.root();
    let mut wealth = v0;
    let mut steps = Vec::with_capacity(path.len());
    for &k in path {
        let holding = plan.feedback(surf, n, wealth);
        let gain = surf.step(n).increments[k].dot(&holding);
        steps.push(PathStep {
            node: n,
            wealth,
            holding,
        });
        wealth += gain;
        n = tree.node(n).children[k].node;
    }
    (steps, wealth)
}

/// Largest component of the `P*`-orthogonality residual
/// `Σ_k p*_k Δ_k ((V_k − V) − ξᵀ Δ_k)` over all interior nodes.
pub fn fs_residual_check(
    tree: &ScenarioTree,
    surf: &OpportunitySurface,
    ms: &MeasureSurface,
    plan: &HedgePlan,
) -> f64 {
    tree.interior()
        .map(|n| {
            let step = surf.step(n);
            let mut r = DVector::zeros(tree.num_assets());
            for (k, (e, delta)) in tree
                .node(n)
                .children
                .iter()
                .zip(&step.increments)
                .enumerate()
            {
                let residual = (plan.v[e.node] - plan.v[n]) - plan.xi[n].dot(delta);
                r.axpy(ms.pstar_p[n][k] * residual, delta, 1.0);
            }
            r.amax()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opportunity::{compute_opportunity, measures};
    use crate::tree::{
        attach_claim, build_binomial, build_iid_multinomial, ClaimSpec, Increment, StepMode,
    };

    fn trinomial() -> (ScenarioTree, Claim) {
        let law = [
            Increment::new(vec![1.0], 0.3),
            Increment::new(vec![0.0], 0.4),
            Increment::new(vec![-1.0], 0.3),
        ];
        let t = build_iid_multinomial(&[10.0], &law, 1, StepMode::Additive).unwrap();
        let c = attach_claim(&t, &ClaimSpec::Call { strike: 10.0 }).unwrap();
        (t, c)
    }

    fn complete_binomial() -> (ScenarioTree, Claim) {
        let t = build_binomial(&[10.0], 1.1, 0.9, 0.6, 1).unwrap();
        let c = attach_claim(&t, &ClaimSpec::Call { strike: 10.0 }).unwrap();
        (t, c)
    }

    #[test]
    fn martingale_trinomial_call() {
        let (t, c) = trinomial();
        let s = compute_opportunity(&t).unwrap();
        let plan = HedgePlan::compute(&t, &s, &c);
        assert!((plan.v0() - 0.3).abs() < 1e-15);
        assert!((plan.xi[0][0] - 0.5).abs() < 1e-15);
        assert!((plan.e[0] - 0.06).abs() < 1e-15);
        let rep = hedging_error(&t, &s, &plan, 0.3);
        assert!((rep.total_error - 0.06).abs() < 1e-15);
        let roll = rollout_all(&t, &s, &plan, 0.3);
        let errors: Vec<f64> = t.leaves().map(|m| c.at(&t, m) - roll.wealth[m]).collect();
        for (got, want) in errors.iter().zip([0.2, -0.3, 0.2]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((roll.expected_sq_error(&t, &c) - 0.06).abs() < 1e-15);
        let shifted = hedging_error(&t, &s, &plan, 0.5);
        assert!((shifted.total_error - 0.10).abs() < 1e-15);
        let ms = measures(&t, &s);
        assert!(fs_residual_check(&t, &s, &ms, &plan) < 1e-15);
    }

    #[test]
    fn complete_binomial_replicates() {
        let (t, c) = complete_binomial();
        let s = compute_opportunity(&t).unwrap();
        let plan = HedgePlan::compute(&t, &s, &c);
        assert!((plan.v0() - 0.5).abs() < 1e-14);
        assert!((plan.xi[0][0] - 0.5).abs() < 1e-14);
        let rep = hedging_error(&t, &s, &plan, plan.v0());
        assert!(rep.total_error.abs() < 1e-14);
        let roll = rollout_all(&t, &s, &plan, 0.5);
        for m in t.leaves() {
            assert!((roll.wealth[m] - c.at(&t, m)).abs() < 1e-14);
        }
        let ms = measures(&t, &s);
        assert!(fs_residual_check(&t, &s, &ms, &plan) < 1e-14);
    }

    #[test]
    fn constant_claim() {
        let law = [
            Increment::new(vec![1.0], 0.6),
            Increment::new(vec![-1.0], 0.4),
        ];
        let t = build_iid_multinomial(&[10.0], &law, 3, StepMode::Additive).unwrap();
        let c = attach_claim(&t, &ClaimSpec::Constant { value: 2.5 }).unwrap();
        let s = compute_opportunity(&t).unwrap();
        let plan = HedgePlan::compute(&t, &s, &c);
        assert!(plan.v.iter().all(|&v| (v - 2.5).abs() < 1e-13));
        assert!(plan.xi.iter().all(|x| x.amax() < 1e-13));
    }

    #[test]
    fn single_path_matches_full_rollout() {
        let law = [
            Increment::new(vec![1.0], 0.6),
            Increment::new(vec![-1.0], 0.4),
        ];
        let t = build_iid_multinomial(&[10.0], &law, 3, StepMode::Additive).unwrap();
        let c = attach_claim(&t, &ClaimSpec::Call { strike: 10.0 }).unwrap();
        let s = compute_opportunity(&t).unwrap();
        let plan = HedgePlan::compute(&t, &s, &c);
        let full = rollout_all(&t, &s, &plan, 0.2);
        let (steps, terminal) = rollout_strategy(&t, &s, &plan, 0.2, &[1, 0, 1]);
        let leaf = t
            .node(t.node(t.node(0).children[1].node).children[0].node)
            .children[1]
            .node;
        assert_eq!(terminal, full.wealth[leaf]);
        for st in &steps {
            assert_eq!(st.wealth, full.wealth[st.node]);
            assert_eq!(st.holding, full.holdings[st.node]);
        }
    }
}
