//! Brute-force reference solvers for small trees.
//!
//! These solve the hedging and measure problems directly over the full
//! finite-dimensional strategy (or density) space. They share nothing with
//! the engine except [`pinv_psd`]: moments, recursions and weights are
//! rebuilt here from raw prices and edge probabilities.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{pinv_psd, SymMatrix};
use crate::tree::{Claim, ScenarioTree};

/// Largest number of leaves the oracles accept.
pub const MAX_ORACLE_LEAVES: usize = 2000;
const REFINEMENT_STEPS: usize = 3;
const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution {
    pub min_error: f64,
    /// Optimal endowment when it was free, otherwise the fixed value.
    pub v0_opt: f64,
    /// Subtree nodes in breadth-first order, starting with the subtree root.
    pub nodes: Vec<usize>,
    /// Wealth of the optimal strategy at each of `nodes`.
    pub value_process: Vec<f64>,
}

impl LsqSolution {
    /// Wealth at node `n`, if `n` belongs to the solved subtree.
    pub fn value_at(&self, n: usize) -> Option<f64> {
        self.nodes
            .iter()
            .position(|&m| m == n)
            .map(|i| self.value_process[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    /// `E[z²]` of the optimal signed density.
    pub second_moment: f64,
    /// Signed density `dQ/dP` per leaf in leaf order.
    pub leaf_density: Vec<f64>,
}

/// Solves `G x = rhs` in the minimum-norm sense with a few steps of
/// iterative refinement.
fn solve_psd(g: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let pinv = pinv_psd(&SymMatrix::new(g.clone())?)?;
    let mut x = pinv.mul_vec(rhs);
    for _ in 0..REFINEMENT_STEPS {
        let r = rhs - g * &x;
        x += pinv.mul_vec(&r);
    }
    Ok(x)
}

fn check_size(leaves: usize) -> Result<()> {
    if leaves > MAX_ORACLE_LEAVES {
        return Err(Error::TooLarge {
            leaves,
            limit: MAX_ORACLE_LEAVES,
        });
    }
    Ok(())
}

/// Subtree enumeration with conditional probabilities and raw increments.
struct Subtree {
    nodes: Vec<usize>,
    /// Position in `nodes` of each interior subtree node, or `None`.
    interior_pos: Vec<Option<usize>>,
    leaves: Vec<usize>,
    cond_prob: Vec<f64>,
    parent: Vec<Option<(usize, usize)>>,
}

impl Subtree {
    fn new(tree: &ScenarioTree, root: usize) -> Self {
        let mut nodes = vec![root];
        let mut cond_prob = vec![0.0; tree.len()];
        let mut parent = vec![None; tree.len()];
        cond_prob[root] = 1.0;
        let mut i = 0;
        while i < nodes.len() {
            let n = nodes[i];
            for (k, e) in tree.node(n).children.iter().enumerate() {
                cond_prob[e.node] = cond_prob[n] * e.p;
                parent[e.node] = Some((n, k));
                nodes.push(e.node);
            }
            i += 1;
        }
        let mut interior_pos = vec![None; tree.len()];
        let mut count = 0;
        for &n in &nodes {
            if !tree.node(n).children.is_empty() {
                interior_pos[n] = Some(count);
                count += 1;
            }
        }
        let leaves = nodes
            .iter()
            .copied()
            .filter(|&n| tree.node(n).children.is_empty())
            .collect();
        Subtree {
            nodes,
            interior_pos,
            leaves,
            cond_prob,
            parent,
        }
    }

    fn num_interior(&self) -> usize {
        self.interior_pos.iter().flatten().count()
    }

    /// Edges from the subtree root down to `m`, as `(parent, child)` pairs.
    fn edges_to(&self, m: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut cur = m;
        while let Some((p, _)) = self.parent[cur] {
            out.push((p, cur));
            cur = p;
        }
        out
    }
}

fn raw_increment(tree: &ScenarioTree, from: usize, to: usize) -> Vec<f64> {
    tree.node(to)
        .price
        .iter()
        .zip(&tree.node(from).price)
        .map(|(a, b)| a - b)
        .collect()
}

/// Minimizes `E[(v0 + θ•S_T − H)²]` over all holdings `θ(n) ∈ R^d` on the
/// whole tree, with the endowment fixed (`Some`) or free (`None`).
pub fn lsq_projection(tree: &ScenarioTree, claim: &Claim, v0: Option<f64>) -> Result<LsqSolution> {
    let payoff: Vec<f64> = tree.leaves().map(|m| claim.at(tree, m)).collect();
    lsq_subtree(tree, &payoff, tree.root(), v0)
}

/// Least-squares hedge of `payoff` (indexed by leaf position) on the subtree
/// rooted at `root`, under the conditional probabilities of that subtree.
pub fn lsq_subtree(
    tree: &ScenarioTree,
    payoff: &[f64],
    root: usize,
    v0: Option<f64>,
) -> Result<LsqSolution> {
    let sub = Subtree::new(tree, root);
    check_size(sub.leaves.len())?;
    let d = tree.num_assets();
    let holdings_dim = sub.num_interior() * d;
    let dim = holdings_dim + usize::from(v0.is_none());
    let h = |m: usize| payoff[tree.leaf_pos(m).expect("leaf")];

    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    let mut row: Vec<(usize, f64)> = Vec::new();
    for &m in &sub.leaves {
        row.clear();
        for (p, c) in sub.edges_to(m) {
            let base = sub.interior_pos[p].expect("interior") * d;
            for (i, x) in raw_increment(tree, p, c).into_iter().enumerate() {
                row.push((base + i, x));
            }
        }
        if v0.is_none() {
            row.push((holdings_dim, 1.0));
        }
        let w = sub.cond_prob[m];
        let target = h(m) - v0.unwrap_or(0.0);
        for &(i, xi) in &row {
            rhs[i] += w * xi * target;
            for &(j, xj) in &row {
                gram[(i, j)] += w * xi * xj;
            }
        }
    }
    let x = if dim == 0 {
        DVector::zeros(0)
    } else {
        solve_psd(&gram, &rhs)?
    };
    let start = v0.unwrap_or_else(|| x[holdings_dim]);

    let mut wealth = vec![0.0; tree.len()];
    wealth[root] = start;
    for &n in &sub.nodes {
        if let Some(pos) = sub.interior_pos[n] {
            for e in &tree.node(n).children {
                let gain: f64 = raw_increment(tree, n, e.node)
                    .iter()
                    .enumerate()
                    .map(|(i, dx)| dx * x[pos * d + i])
                    .sum();
                wealth[e.node] = wealth[n] + gain;
            }
        }
    }
    let min_error = sub
        .leaves
        .iter()
        .map(|&m| sub.cond_prob[m] * (wealth[m] - h(m)).powi(2))
        .sum();
    Ok(LsqSolution {
        min_error,
        v0_opt: start,
        value_process: sub.nodes.iter().map(|&n| wealth[n]).collect(),
        nodes: sub.nodes,
    })
}

/// Conditional minimal `E[(1 − θ•S_T)²]` from `node`, the brute-force
/// counterpart of the opportunity process.
pub fn node_conditional_check(tree: &ScenarioTree, node: usize) -> Result<f64> {
    let ones = vec![1.0; tree.num_leaves()];
    Ok(lsq_subtree(tree, &ones, node, Some(0.0))?.min_error)
}

/// Maximal conditional Sharpe ratio of the gains from `node`, read off the
/// least-squares projection of the constant 1 onto the gains space.
pub fn max_sharpe(tree: &ScenarioTree, node: usize) -> Result<f64> {
    let ones = vec![1.0; tree.num_leaves()];
    let sol = lsq_subtree(tree, &ones, node, Some(0.0))?;
    let sub = Subtree::new(tree, node);
    let (mut mean, mut second) = (0.0, 0.0);
    for &m in &sub.leaves {
        let g = sol.value_at(m).expect("leaf in subtree");
        mean += sub.cond_prob[m] * g;
        second += sub.cond_prob[m] * g * g;
    }
    let var = second - mean * mean;
    Ok(if var <= 0.0 { 0.0 } else { mean / var.sqrt() })
}

/// Sharpe ratio of the gains of fixed holdings `theta` (per interior node
/// position) from the root.
pub fn sharpe_of(tree: &ScenarioTree, theta: &[Vec<f64>]) -> f64 {
    let mut gain = vec![0.0; tree.len()];
    for n in tree.interior() {
        for e in &tree.node(n).children {
            let dx = raw_increment(tree, n, e.node);
            gain[e.node] = gain[n] + dx.iter().zip(&theta[n]).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let (mut mean, mut second) = (0.0, 0.0);
    for m in tree.leaves() {
        mean += tree.prob(m) * gain[m];
        second += tree.prob(m) * gain[m] * gain[m];
    }
    let var = second - mean * mean;
    if var <= 0.0 {
        0.0
    } else {
        mean / var.sqrt()
    }
}

/// Minimizes `E[z²]` over signed densities `z` with `E[z] = 1` that make
/// every one-step price increment a martingale increment.
pub fn martingale_qp(tree: &ScenarioTree) -> Result<QpSolution> {
    let sub = Subtree::new(tree, tree.root());
    check_size(sub.leaves.len())?;
    let d = tree.num_assets();
    let rows = 1 + sub.num_interior() * d;

    // constraint coefficients a[r][leaf]; z = Aᵀν with (A W Aᵀ) ν = e₀
    let mut a = DMatrix::<f64>::zeros(rows, sub.leaves.len());
    for (j, &m) in sub.leaves.iter().enumerate() {
        a[(0, j)] = 1.0;
        for (p, c) in sub.edges_to(m) {
            let base = 1 + sub.interior_pos[p].expect("interior") * d;
            for (i, x) in raw_increment(tree, p, c).into_iter().enumerate() {
                a[(base + i, j)] = x;
            }
        }
    }
    let w = DVector::from_iterator(
        sub.leaves.len(),
        sub.leaves.iter().map(|&m| sub.cond_prob[m]),
    );
    let aw = DMatrix::from_fn(rows, sub.leaves.len(), |r, j| a[(r, j)] * w[j]);
    let schur = &aw * a.transpose();
    let mut e = DVector::zeros(rows);
    e[0] = 1.0;
    let nu = solve_psd(&schur, &e)?;
    let residual = (&schur * &nu - &e).amax();
    if residual > FEASIBILITY_TOL {
        return Err(Error::Infeasible { residual });
    }
    let z = a.transpose() * nu;
    let mut leaf_density = vec![0.0; tree.num_leaves()];
    for (j, &m) in sub.leaves.iter().enumerate() {
        leaf_density[tree.leaf_pos(m).expect("leaf")] = z[j];
    }
    let second_moment = z.iter().zip(w.iter()).map(|(z, w)| w * z * z).sum();
    Ok(QpSolution {
        second_moment,
        leaf_density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{
        attach_claim, build_binomial, build_iid_multinomial, ClaimSpec, Edge, Increment, Node,
        StepMode,
    };

    fn binomial_06() -> ScenarioTree {
        let law = [
            Increment::new(vec![1.0], 0.6),
            Increment::new(vec![-1.0], 0.4),
        ];
        build_iid_multinomial(&[10.0], &law, 1, StepMode::Additive).unwrap()
    }

    #[test]
    fn complete_binomial_free_endowment() {
        let t = build_binomial(&[10.0], 1.1, 0.9, 0.6, 1).unwrap();
        let c = attach_claim(&t, &ClaimSpec::Call { strike: 10.0 }).unwrap();
        let sol = lsq_projection(&t, &c, None).unwrap();
        assert!(sol.min_error.abs() < 1e-20);
        assert!((sol.v0_opt - 0.5).abs() < 1e-12);
    }

    #[test]
    fn martingale_trinomial_fixed_endowment() {
        let law = [
            Increment::new(vec![1.0], 0.3),
            Increment::new(vec![0.0], 0.4),
            Increment::new(vec![-1.0], 0.3),
        ];
        let t = build_iid_multinomial(&[10.0], &law, 1, StepMode::Additive).unwrap();
        let c = attach_claim(&t, &ClaimSpec::Call { strike: 10.0 }).unwrap();
        let sol = lsq_projection(&t, &c, Some(0.3)).unwrap();
        assert!((sol.min_error - 0.06).abs() < 1e-14);
    }

    #[test]
    fn empty_strategy_space() {
        let t = binomial_06();
        let ones = vec![1.0; 2];
        let sol = lsq_subtree(&t, &ones, 1, Some(0.25)).unwrap();
        assert!((sol.min_error - 0.75f64.powi(2)).abs() < 1e-15);
        assert_eq!(node_conditional_check(&t, 2).unwrap(), 1.0);
    }

    #[test]
    fn opportunity_of_binomial() {
        let t = binomial_06();
        assert!((node_conditional_check(&t, 0).unwrap() - 0.96).abs() < 1e-14);
        assert!((max_sharpe(&t, 0).unwrap() - 0.2 / 0.96f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn qp_cases() {
        let law = [
            Increment::new(vec![1.0], 0.3),
            Increment::new(vec![0.0], 0.4),
            Increment::new(vec![-1.0], 0.3),
        ];
        let mart = build_iid_multinomial(&[10.0], &law, 2, StepMode::Additive).unwrap();
        let q = martingale_qp(&mart).unwrap();
        assert!((q.second_moment - 1.0).abs() < 1e-12);
        assert!(q.leaf_density.iter().all(|z| (z - 1.0).abs() < 1e-12));

        let q = martingale_qp(&binomial_06()).unwrap();
        assert!((q.second_moment - 1.0 / 0.96).abs() < 1e-12);
        assert!((q.leaf_density[0] - 0.8 / 0.96).abs() < 1e-12);
        assert!((q.leaf_density[1] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn riskless_step_is_infeasible() {
        let nodes = vec![
            Node {
                time: 0,
                price: vec![10.0],
                parent: None,
                children: vec![Edge { node: 1, p: 1.0 }],
                regime: None,
            },
            Node {
                time: 1,
                price: vec![11.0],
                parent: Some(0),
                children: vec![],
                regime: None,
            },
        ];
        let t = ScenarioTree::from_nodes(1, 1, nodes).unwrap();
        assert!(matches!(martingale_qp(&t), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn size_bound() {
        let law = [
            Increment::new(vec![1.0], 0.3),
            Increment::new(vec![0.0], 0.4),
            Increment::new(vec![-1.0], 0.3),
        ];
        let t = build_iid_multinomial(&[10.0], &law, 7, StepMode::Additive).unwrap();
        let c = attach_claim(&t, &ClaimSpec::Constant { value: 1.0 }).unwrap();
        assert!(matches!(
            lsq_projection(&t, &c, None),
            Err(Error::TooLarge { leaves: 2187, .. })
        ));
        assert!(matches!(martingale_qp(&t), Err(Error::TooLarge { .. })));
    }
}
