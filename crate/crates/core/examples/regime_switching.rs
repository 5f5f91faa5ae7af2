use mvhedge::hedging::{hedging_error, HedgePlan};
use mvhedge::opportunity::{compute_opportunity, measures, mvt_process};
use mvhedge::oracle::lsq_projection;
use mvhedge::tree::{attach_claim, build_regime_switching, ClaimSpec, Increment, StepMode};

fn main() -> mvhedge::Result<()> {
    let calm = vec![
        Increment::new(vec![0.5], 0.6),
        Increment::new(vec![-0.5], 0.4),
    ];
    let stressed = vec![
        Increment::new(vec![2.0], 0.55),
        Increment::new(vec![-2.0], 0.45),
    ];
    let transition = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
    let tree = build_regime_switching(
        &[10.0],
        &[calm, stressed],
        &transition,
        0,
        4,
        StepMode::Additive,
    )?;
    let claim = attach_claim(&tree, &ClaimSpec::Call { strike: 10.0 })?;
    let surf = compute_opportunity(&tree)?;
    let ms = measures(&tree, &surf);
    let plan = HedgePlan::compute(&tree, &surf, &claim);

    let mvt = mvt_process(&tree, &surf)?;
    for n in tree.slice(1) {
        println!(
            "t=1 node {n} regime {:?}: dK = {:.6} L = {:.6}",
            tree.node(n).regime,
            mvt.dk_hat[n],
            surf.l(n)
        );
    }
    println!(
        "deterministic MVT: {}  P* = P: {}",
        mvt.deterministic_mvt, mvt.pstar_is_p
    );
    let spread = ms
        .z_pstar
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &z| (lo.min(z), hi.max(z)));
    println!("z_pstar range: {:.6} .. {:.6}", spread.0, spread.1);

    let engine = hedging_error(&tree, &surf, &plan, plan.v0()).total_error;
    let oracle = lsq_projection(&tree, &claim, None)?;
    println!("V0 engine {:.12} oracle {:.12}", plan.v0(), oracle.v0_opt);
    println!(
        "error engine {:.12} oracle {:.12}",
        engine, oracle.min_error
    );
    Ok(())
}
