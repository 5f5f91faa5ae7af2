//! Engine-versus-oracle comparisons and structural identity checks.
//!
//! Each check produces one [`Check`] line. Structural identities are
//! reported once per identity, at the node where the violation is largest.

use std::fmt;

use nalgebra::DVector;

use crate::error::Result;
use crate::fmt::g17;
use crate::hedging::{hedging_error, rollout_all, HedgePlan};
use crate::linalg::pinv_psd;
use crate::opportunity::{
    efficient_value_process, sharpe_ratio, MeasureSurface, OpportunitySurface,
};
use crate::oracle;
use crate::tree::{Claim, ScenarioTree};

/// Default relative tolerance for engine/oracle agreement.
pub const ORACLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub node: usize,
    pub engine: f64,
    pub oracle: f64,
    pub rel_err: f64,
    pub tol: f64,
}

impl Check {
    /// Relative comparison `|x − y| / max(|x|, |y|, floor)`.
    pub fn relative(
        name: &str,
        node: usize,
        engine: f64,
        oracle: f64,
        floor: f64,
        tol: f64,
    ) -> Self {
        let denom = engine.abs().max(oracle.abs()).max(floor);
        let rel_err = if engine == oracle {
            0.0
        } else {
            (engine - oracle).abs() / denom
        };
        Check {
            name: name.to_string(),
            node,
            engine,
            oracle,
            rel_err,
            tol,
        }
    }

    /// One-sided check `engine ≤ bound` (reported with `rel_err = max(engine − bound, 0)`).
    pub fn at_most(name: &str, node: usize, engine: f64, bound: f64) -> Self {
        Check {
            name: name.to_string(),
            node,
            engine,
            oracle: bound,
            rel_err: (engine - bound).max(0.0),
            tol: 0.0,
        }
    }

    pub fn pass(&self) -> bool {
        self.rel_err <= self.tol && !self.rel_err.is_nan()
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CHECK {} node={} engine={} oracle={} rel_err={} {}",
            self.name,
            self.node,
            g17(self.engine),
            g17(self.oracle),
            g17(self.rel_err),
            if self.pass() { "PASS" } else { "FAIL" }
        )
    }
}

/// Keeps the check with the largest normalized violation.
fn worst(checks: impl IntoIterator<Item = Check>) -> Option<Check> {
    let score = |c: &Check| {
        if c.tol > 0.0 {
            c.rel_err / c.tol
        } else {
            c.rel_err
        }
    };
    checks
        .into_iter()
        .fold(None, |best: Option<Check>, c| match best {
            Some(b) if score(&b) >= score(&c) => Some(b),
            _ => Some(c),
        })
}

fn vec_check(
    name: &str,
    node: usize,
    lhs: &DVector<f64>,
    rhs: &DVector<f64>,
    magnitude: f64,
    tol: f64,
) -> Check {
    let diff = (lhs - rhs).amax();
    let denom = magnitude.max(rhs.amax());
    let rel_err = if diff == 0.0 { 0.0 } else { diff / denom };
    Check {
        name: name.to_string(),
        node,
        engine: lhs.amax(),
        oracle: rhs.amax(),
        rel_err,
        tol,
    }
}

/// Identity checks on the opportunity, measure and hedge surfaces.
pub fn structural_checks(
    tree: &ScenarioTree,
    surf: &OpportunitySurface,
    ms: &MeasureSurface,
    plan: &HedgePlan,
) -> Result<Vec<Check>> {
    let scale = plan.scale;
    let mut groups: Vec<(&str, Vec<Check>)> = Vec::new();
    let mut push = |name: &'static str, c: Check| match groups.iter_mut().find(|(n, _)| *n == name)
    {
        Some((_, v)) => v.push(c),
        None => groups.push((name, vec![c])),
    };
    for n in 0..tree.len() {
        let l = surf.l(n);
        push("l_range", Check::at_most("l_range", n, l, 1.0));
        push("l_positive", Check::at_most("l_positive", n, -l, 0.0));
    }
    for n in tree.interior() {
        let step = surf.step(n);
        let node = tree.node(n);
        let l = surf.l(n);
        let m0 = step.moments.m0;
        push(
            "l_submartingale",
            Check::at_most("l_submartingale", n, l - m0, 1e-15 * m0),
        );
        push(
            "opportunity_fixed_point",
            Check::relative(
                "opportunity_fixed_point",
                n,
                l * (1.0 + step.dak),
                m0,
                0.0,
                1e-12,
            ),
        );
        push(
            "moment_range",
            Check::at_most(
                "moment_range",
                n,
                step.moments.range_residual(&step.cbar_pinv),
                1e-9,
            ),
        );

        let c_tilde_pinv = pinv_psd(&step.c_tilde_sstar)?;
        let c_hat_pinv = pinv_psd(&step.c_hat_sstar)?;
        let bt = c_tilde_pinv.bilinear(&step.b_sstar, &step.b_sstar);
        let bh = c_hat_pinv.bilinear(&step.b_sstar, &step.b_sstar);
        push(
            "tradeoff_product",
            Check::relative("tradeoff_product", n, (1.0 + bh) * (1.0 - bt), 1.0, 1.0, 1e-9),
        );
        push(
            "dak_tradeoff",
            Check::relative("dak_tradeoff", n, 1.0 + step.dak, 1.0 + bh, 1.0, 1e-9),
        );
        let ct_a = step.c_tilde_sstar.mul_vec(&step.a_tilde);
        let ch_a = step.c_hat_sstar.mul_vec(&step.a_hat);
        let b_bound = step.c_tilde_sstar.matrix().diagonal().amax().sqrt();
        let mag_t = (step.c_tilde_sstar.matrix().amax() * step.a_tilde.amax()).max(b_bound);
        let mag_h = (step.c_hat_sstar.matrix().amax() * step.a_hat.amax()).max(b_bound);
        push(
            "adjustment_tilde",
            vec_check("adjustment_tilde", n, &ct_a, &step.b_sstar, mag_t, 1e-9),
        );
        push(
            "adjustment_hat",
            vec_check("adjustment_hat", n, &ch_a, &step.b_sstar, mag_h, 1e-9),
        );

        let inc_scale = step.increments.iter().map(|d| d.amax()).fold(1.0, f64::max);
        let mass: f64 = node
            .children
            .iter()
            .zip(&ms.qstar_w[n])
            .map(|(e, w)| e.p * w)
            .sum();
        push(
            "qstar_mass",
            Check::relative("qstar_mass", n, mass, 1.0, 1.0, 1e-10),
        );
        let mut drift = DVector::zeros(tree.num_assets());
        for ((e, w), delta) in node
            .children
            .iter()
            .zip(&ms.qstar_w[n])
            .zip(&step.increments)
        {
            drift.axpy(e.p * w, delta, 1.0);
        }
        push(
            "qstar_martingale",
            Check::at_most("qstar_martingale", n, drift.amax(), 1e-10 * inc_scale),
        );
        let psum: f64 = ms.pstar_p[n].iter().sum();
        push(
            "pstar_mass",
            Check::relative("pstar_mass", n, psum, 1.0, 1.0, 1e-12),
        );
        for (k, e) in node.children.iter().enumerate() {
            let lhs = surf.l(e.node) / m0 * ms.nstar_f[n][k];
            push(
                "qstar_pstar_factor",
                Check::relative("qstar_pstar_factor", n, lhs, ms.qstar_w[n][k], 1.0, 1e-10),
            );
        }

        let v_next: f64 = node
            .children
            .iter()
            .zip(&ms.qstar_w[n])
            .map(|(e, w)| e.p * w * plan.v[e.node])
            .sum();
        push(
            "value_martingale",
            Check::relative("value_martingale", n, v_next, plan.v[n], scale, 1e-10),
        );
        let dbar_proj = step
            .moments
            .cbar_u
            .mul_vec(&step.cbar_pinv.mul_vec(&plan.dbar_u[n]));
        let dmag = plan.dbar_u[n].amax().max(1e-300);
        push(
            "dbar_range",
            Check::at_most(
                "dbar_range",
                n,
                (dbar_proj - &plan.dbar_u[n]).amax() / dmag,
                1e-9,
            ),
        );
        push(
            "residual_nonnegative",
            Check::at_most("residual_nonnegative", n, -plan.e[n], 1e-12 * scale),
        );
        let spread: f64 = node
            .children
            .iter()
            .map(|c| c.p * surf.l(c.node) * (plan.v[c.node] - plan.v[n]).powi(2))
            .sum();
        let gram_form = spread - plan.dbar_u[n].dot(&plan.xi[n]);
        push(
            "residual_gram_form",
            Check::relative(
                "residual_gram_form",
                n,
                plan.e[n],
                gram_form,
                spread.max(scale * scale),
                1e-9,
            ),
        );
    }

    let fs = crate::hedging::fs_residual_check(tree, surf, ms, plan);
    push(
        "fs_orthogonality",
        Check::at_most("fs_orthogonality", 0, fs, 1e-9 * scale),
    );

    let l0 = surf.l0();
    let eff = efficient_value_process(tree, surf, 0);
    for &(m, value) in &eff {
        if let Some(pos) = tree.leaf_pos(m) {
            push(
                "qstar_density_identity",
                Check::relative(
                    "qstar_density_identity",
                    m,
                    ms.z_qstar[pos],
                    value / l0,
                    1.0,
                    1e-10,
                ),
            );
            push(
                "pstar_density_bound",
                Check::at_most(
                    "pstar_density_bound",
                    m,
                    ms.z_pstar[pos],
                    (1.0 + 1e-12) / l0,
                ),
            );
        }
    }
    let (mut mean, mut second) = (0.0, 0.0);
    for (m, z) in tree.leaves().zip(&ms.z_qstar) {
        mean += tree.prob(m) * z;
        second += tree.prob(m) * z * z;
    }
    push(
        "qstar_unit_mass",
        Check::relative("qstar_unit_mass", 0, mean, 1.0, 1.0, 1e-9),
    );
    push(
        "qstar_second_moment",
        Check::relative("qstar_second_moment", 0, second, 1.0 / l0, 0.0, 1e-9),
    );

    Ok(groups.into_iter().filter_map(|(_, v)| worst(v)).collect())
}

/// Engine values that may be supplied from an earlier run instead of being
/// recomputed, to verify stored results.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EngineOverride {
    pub l0: Option<f64>,
    pub v0_opt: Option<f64>,
    pub total_error: Option<f64>,
}

/// All engine/oracle comparisons for one tree and claim.
///
/// `v0` is the endowment used for the fixed-endowment comparison.
pub fn oracle_checks(
    tree: &ScenarioTree,
    claim: &Claim,
    surf: &OpportunitySurface,
    ms: &MeasureSurface,
    plan: &HedgePlan,
    v0: f64,
    tol: f64,
    engine: EngineOverride,
) -> Result<Vec<Check>> {
    let scale = plan.scale;
    let l0 = engine.l0.unwrap_or(surf.l0());
    let v0_opt = engine.v0_opt.unwrap_or(plan.v0());
    let mut out = Vec::new();

    let fixed = oracle::lsq_projection(tree, claim, Some(v0))?;
    let total = engine
        .total_error
        .unwrap_or(hedging_error(tree, surf, plan, v0).total_error);
    out.push(Check::relative(
        "lsq_total_error",
        0,
        total,
        fixed.min_error,
        scale * scale,
        tol,
    ));

    let free = oracle::lsq_projection(tree, claim, None)?;
    out.push(Check::relative(
        "lsq_v0_opt",
        0,
        v0_opt,
        free.v0_opt,
        scale,
        tol,
    ));
    let at_opt = hedging_error(tree, surf, plan, plan.v0()).total_error;
    out.push(Check::relative(
        "lsq_min_error",
        0,
        at_opt,
        free.min_error,
        scale * scale,
        tol,
    ));
    let roll = rollout_all(tree, surf, plan, plan.v0());
    for (&n, &w) in free.nodes.iter().zip(&free.value_process) {
        out.push(Check::relative(
            "lsq_value_process",
            n,
            roll.wealth[n],
            w,
            scale,
            tol,
        ));
    }

    let qp = oracle::martingale_qp(tree)?;
    out.push(Check::relative(
        "qp_second_moment",
        0,
        1.0 / l0,
        qp.second_moment,
        0.0,
        tol,
    ));
    for (pos, m) in tree.leaves().enumerate() {
        out.push(Check::relative(
            "qp_leaf_density",
            m,
            ms.z_qstar[pos],
            qp.leaf_density[pos],
            1.0,
            tol,
        ));
    }

    for n in 0..tree.len() {
        let engine_l = if n == 0 { l0 } else { surf.l(n) };
        let oracle_l = oracle::node_conditional_check(tree, n)?;
        out.push(Check::relative(
            "opportunity",
            n,
            engine_l,
            oracle_l,
            0.0,
            tol,
        ));
    }
    for n in tree.interior() {
        let engine_sr = if n == 0 {
            (1.0 / l0 - 1.0).max(0.0).sqrt()
        } else {
            sharpe_ratio(surf, n)
        };
        out.push(Check::relative(
            "sharpe",
            n,
            engine_sr,
            oracle::max_sharpe(tree, n)?,
            1e-12,
            tol * 10.0,
        ));
    }
    Ok(out)
}
