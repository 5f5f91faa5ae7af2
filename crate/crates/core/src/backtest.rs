//! Monte Carlo and exact-expectation backtests of hedging strategies.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::hedging::{forward, hedging_error, HedgePlan};
use crate::linalg::{pinv_psd, OneStepMoments};
use crate::opportunity::OpportunitySurface;
use crate::tree::{Claim, ScenarioTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Optimal feedback strategy `ξ − (G − V) ã`.
    Mvh,
    /// Pure hedge coefficient `ξ` without feedback.
    PureXi,
    /// Hedge computed as if `S` were a `P`-martingale.
    Gkw,
    /// Pure investment `(H − G) ã` for a constant claim.
    Markowitz,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Mvh => "mvh",
            StrategyKind::PureXi => "pure_xi",
            StrategyKind::Gkw => "gkw",
            StrategyKind::Markowitz => "markowitz",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Mvh, Self::PureXi, Self::Gkw, Self::Markowitz]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

/// Draws `n` root-to-leaf paths by the edge probabilities.
///
/// Path `i` uses ChaCha8 stream `i` under key `seed`, so the result does not
/// depend on evaluation order or worker count.
pub fn sample_paths(tree: &ScenarioTree, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::bad("paths", "must be at least 1"));
    }
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let mut node = tree.root();
            while !tree.is_leaf(node) {
                let u: f64 = rng.gen();
                let children = &tree.node(node).children;
                let mut acc = 0.0;
                let mut next = children.last().expect("interior node").node;
                for e in children {
                    acc += e.p;
                    if u < acc {
                        next = e.node;
                        break;
                    }
                }
                node = next;
            }
            node
        })
        .collect())
}

/// How a strategy's squared error is averaged.
#[derive(Debug, Clone, Copy)]
pub enum Evaluation<'a> {
    /// Weight every leaf by its probability.
    Exact,
    /// Average over sampled leaves.
    Sampled(&'a [usize]),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub strategy: StrategyKind,
    pub num_paths: usize,
    pub mean_sq_error: f64,
    pub std_error: f64,
    pub analytic_error: Option<f64>,
    pub exact: bool,
}

/// Hedge of `claim` computed as if `L ≡ 1`: `V` is the plain conditional
/// expectation under `P` and the holding is the `P`-regression of
/// `V`-increments on price increments.
pub fn gkw_hedge(tree: &ScenarioTree, claim: &Claim) -> Result<Vec<DVector<f64>>> {
    let mut v = vec![0.0; tree.len()];
    for m in tree.leaves() {
        v[m] = claim.at(tree, m);
    }
    for n in tree.interior().rev() {
        v[n] = tree.node(n).children.iter().map(|e| e.p * v[e.node]).sum();
    }
    tree.interior()
        .map(|n| {
            let node = tree.node(n);
            let increments: Vec<DVector<f64>> = tree
                .increments(n)
                .iter()
                .map(|x| DVector::from_column_slice(x))
                .collect();
            let probs: Vec<f64> = node.children.iter().map(|e| e.p).collect();
            let m = OneStepMoments::assemble(&probs, &increments);
            let mut cross = DVector::zeros(tree.num_assets());
            for (e, delta) in node.children.iter().zip(&increments) {
                cross.axpy(e.p * (v[e.node] - v[n]), delta, 1.0);
            }
            Ok(pinv_psd(&m.cbar_u)?.mul_vec(&cross))
        })
        .collect()
}

/// Holdings of a strategy as a function of `(node, wealth)`.
pub struct StrategyRule<'a> {
    kind: StrategyKind,
    surf: &'a OpportunitySurface,
    plan: &'a HedgePlan,
    gkw: Option<Vec<DVector<f64>>>,
    target: f64,
}

impl<'a> StrategyRule<'a> {
    pub fn new(
        tree: &ScenarioTree,
        surf: &'a OpportunitySurface,
        plan: &'a HedgePlan,
        claim: &Claim,
        kind: StrategyKind,
    ) -> Result<Self> {
        let mut target = 0.0;
        let gkw = match kind {
            StrategyKind::Gkw => Some(gkw_hedge(tree, claim)?),
            StrategyKind::Markowitz => {
                target = claim
                    .constant_value()
                    .ok_or_else(|| Error::IncompatibleClaim {
                        strategy: kind.name().to_string(),
                    })?;
                None
            }
            _ => None,
        };
        Ok(Self {
            kind,
            surf,
            plan,
            gkw,
            target,
        })
    }

    pub fn holding(&self, n: usize, wealth: f64) -> DVector<f64> {
        match self.kind {
            StrategyKind::Mvh => self.plan.feedback(self.surf, n, wealth),
            StrategyKind::PureXi => self.plan.xi[n].clone(),
            StrategyKind::Gkw => self.gkw.as_ref().expect("gkw hedge")[n].clone(),
            StrategyKind::Markowitz => self.surf.a_tilde(n) * (self.target - wealth),
        }
    }
}

/// Terminal wealth of a strategy along the root path to `leaf`.
fn path_wealth(tree: &ScenarioTree, rule: &StrategyRule<'_>, v0: f64, leaf: usize) -> f64 {
    let mut wealth = v0;
    for (n, k) in tree.path_to(leaf) {
        let phi = rule.holding(n, wealth);
        wealth += tree
            .increment(n, k)
            .iter()
            .zip(phi.iter())
            .map(|(d, h)| d * h)
            .sum::<f64>();
    }
    wealth
}

pub fn run_strategy(
    tree: &ScenarioTree,
    surf: &OpportunitySurface,
    plan: &HedgePlan,
    claim: &Claim,
    kind: StrategyKind,
    v0: f64,
    eval: Evaluation<'_>,
) -> Result<BacktestReport> {
    let rule = StrategyRule::new(tree, surf, plan, claim, kind)?;
    let analytic_error =
        (kind == StrategyKind::Mvh).then(|| hedging_error(tree, surf, plan, v0).total_error);
    let report = match eval {
        Evaluation::Exact => {
            let roll = forward(tree, v0, |n, g| rule.holding(n, g));
            BacktestReport {
                strategy: kind,
                num_paths: tree.num_leaves(),
                mean_sq_error: roll.expected_sq_error(tree, claim),
                std_error: 0.0,
                analytic_error,
                exact: true,
            }
        }
        Evaluation::Sampled(paths) => {
            let errors: Vec<f64> = paths
                .par_iter()
                .map(|&leaf| (path_wealth(tree, &rule, v0, leaf) - claim.at(tree, leaf)).powi(2))
                .collect();
            let n = errors.len() as f64;
            let mean = errors.iter().sum::<f64>() / n;
            let var = if errors.len() > 1 {
                errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            BacktestReport {
                strategy: kind,
                num_paths: errors.len(),
                mean_sq_error: mean,
                std_error: (var / n).sqrt(),
                analytic_error,
                exact: false,
            }
        }
    };
    Ok(report)
}

/// One row of [`compare_report`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub n_paths: usize,
    pub mean_sq_error: f64,
    pub std_error: f64,
    pub analytic_error: Option<f64>,
    pub ratio_to_mvh: Option<f64>,
}

pub fn comparison_rows(reports: &[BacktestReport]) -> Vec<ComparisonRow> {
    reports
        .iter()
        .map(|r| {
            let mvh = reports
                .iter()
                .find(|m| {
                    m.strategy == StrategyKind::Mvh
                        && m.exact == r.exact
                        && m.num_paths == r.num_paths
                })
                .map(|m| m.mean_sq_error);
            ComparisonRow {
                strategy: r.strategy.name().to_string(),
                n_paths: r.num_paths,
                mean_sq_error: r.mean_sq_error,
                std_error: r.std_error,
                analytic_error: r.analytic_error,
                ratio_to_mvh: mvh.map(|m| {
                    if r.mean_sq_error == m {
                        1.0
                    } else {
                        r.mean_sq_error / m
                    }
                }),
            }
        })
        .collect()
}

pub const REPORT_COLUMNS: &str =
    "strategy,n_paths,mean_sq_error,std_error,analytic_error,ratio_to_mvh";

/// CSV comparison table, one row per strategy.
pub fn compare_report(reports: &[BacktestReport]) -> String {
    let opt = |x: Option<f64>| x.map(g17).unwrap_or_default();
    let mut out = String::from(REPORT_COLUMNS);
    out.push('\n');
    for row in comparison_rows(reports) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.strategy,
            row.n_paths,
            g17(row.mean_sq_error),
            g17(row.std_error),
            opt(row.analytic_error),
            opt(row.ratio_to_mvh)
        )
        .unwrap();
    }
    out
}

/// Fixed-width table for terminals.
pub fn pretty_report(reports: &[BacktestReport]) -> String {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into());
    let mut out = format!(
        "{:<10} {:>8} {:>14} {:>14} {:>14} {:>10}\n",
        "strategy", "paths", "mean_sq_err", "std_err", "analytic", "ratio"
    );
    for row in comparison_rows(reports) {
        writeln!(
            out,
            "{:<10} {:>8} {:>14.6e} {:>14.6e} {:>14} {:>10}",
            row.strategy,
            row.n_paths,
            row.mean_sq_error,
            row.std_error,
            opt(row.analytic_error),
            row.ratio_to_mvh
                .map(|r| format!("{r:.4}"))
                .unwrap_or_else(|| "-".into())
        )
        .unwrap();
    }
    out
}
