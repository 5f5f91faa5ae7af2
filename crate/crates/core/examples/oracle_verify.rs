use mvhedge::hedging::HedgePlan;
use mvhedge::opportunity::{compute_opportunity, measures};
use mvhedge::tree::{attach_claim, build_random, ClaimSpec, RandomTreeSpec};
use mvhedge::verify::{oracle_checks, structural_checks, EngineOverride, ORACLE_TOL};

fn main() -> mvhedge::Result<()> {
    let tree = build_random(&RandomTreeSpec {
        periods: 3,
        num_assets: 1,
        min_branching: 3,
        max_branching: 3,
        drift: 0.3,
        redundant: false,
        martingale: false,
        seed: 7,
    })?;
    let claim = attach_claim(
        &tree,
        &ClaimSpec::Put {
            strike: tree.node(0).price[0],
        },
    )?;
    let surf = compute_opportunity(&tree)?;
    let ms = measures(&tree, &surf);
    let plan = HedgePlan::compute(&tree, &surf, &claim);

    let mut checks = structural_checks(&tree, &surf, &ms, &plan)?;
    checks.extend(oracle_checks(
        &tree,
        &claim,
        &surf,
        &ms,
        &plan,
        plan.v0(),
        ORACLE_TOL,
        EngineOverride::default(),
    )?);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.pass()).count();
    println!("SUMMARY checks={} failed={failed}", checks.len());
    Ok(())
}
