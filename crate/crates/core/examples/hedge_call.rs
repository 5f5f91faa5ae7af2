use mvhedge::hedging::{hedging_error, rollout_all, HedgePlan};
use mvhedge::opportunity::compute_opportunity;
use mvhedge::tree::{attach_claim, build_iid_multinomial, ClaimSpec, Increment, StepMode};

fn main() -> mvhedge::Result<()> {
    let law = vec![
        Increment::new(vec![1.2], 0.35),
        Increment::new(vec![0.1], 0.4),
        Increment::new(vec![-0.9], 0.25),
    ];
    let tree = build_iid_multinomial(&[10.0], &law, 3, StepMode::Additive)?;
    let claim = attach_claim(&tree, &ClaimSpec::Call { strike: 10.5 })?;
    let surf = compute_opportunity(&tree)?;
    let plan = HedgePlan::compute(&tree, &surf, &claim);

    println!("V0 = {:.12}  xi0 = {:.12}", plan.v0(), plan.xi[0][0]);
    for v0 in [plan.v0(), plan.v0() - 0.2, 0.0] {
        let report = hedging_error(&tree, &surf, &plan, v0);
        println!(
            "v0 = {v0:.6}: total error {:.12} (endowment term {:.12})",
            report.total_error, report.endowment_term
        );
    }

    let roll = rollout_all(&tree, &surf, &plan, plan.v0());
    let leaf = tree.leaves().next().unwrap();
    for (n, _) in tree.path_to(leaf) {
        println!(
            "node {n:>3}: wealth {:>10.6} V {:>10.6} phi {:>10.6}",
            roll.wealth[n], plan.v[n], roll.holdings[n][0]
        );
    }
    println!(
        "terminal: wealth {:.6} claim {:.6}",
        roll.wealth[leaf],
        claim.at(&tree, leaf)
    );
    Ok(())
}
