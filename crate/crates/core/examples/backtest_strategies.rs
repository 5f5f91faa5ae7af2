use mvhedge::backtest::{pretty_report, run_strategy, sample_paths, Evaluation, StrategyKind};
use mvhedge::hedging::HedgePlan;
use mvhedge::opportunity::compute_opportunity;
use mvhedge::tree::{attach_claim, build_iid_multinomial, ClaimSpec, Increment, StepMode};

fn main() -> mvhedge::Result<()> {
    let law = vec![
        Increment::new(vec![1.2], 0.35),
        Increment::new(vec![0.1], 0.4),
        Increment::new(vec![-0.9], 0.25),
    ];
    let tree = build_iid_multinomial(&[10.0], &law, 6, StepMode::Additive)?;
    let claim = attach_claim(&tree, &ClaimSpec::Call { strike: 11.0 })?;
    let surf = compute_opportunity(&tree)?;
    let plan = HedgePlan::compute(&tree, &surf, &claim);
    let paths = sample_paths(&tree, 50_000, 42)?;

    let kinds = [StrategyKind::Mvh, StrategyKind::PureXi, StrategyKind::Gkw];
    let mut reports = Vec::new();
    for kind in kinds {
        reports.push(run_strategy(
            &tree,
            &surf,
            &plan,
            &claim,
            kind,
            plan.v0(),
            Evaluation::Sampled(&paths),
        )?);
    }
    for kind in kinds {
        reports.push(run_strategy(
            &tree,
            &surf,
            &plan,
            &claim,
            kind,
            plan.v0(),
            Evaluation::Exact,
        )?);
    }
    print!("{}", pretty_report(&reports));
    Ok(())
}
