#![allow(dead_code)]

use mvhedge::hedging::HedgePlan;
use mvhedge::opportunity::{compute_opportunity, measures, MeasureSurface, OpportunitySurface};
use mvhedge::tree::{attach_claim, build_random, Claim, ClaimSpec, RandomTreeSpec, ScenarioTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub seed: u64,
    pub tree: ScenarioTree,
    pub claim: Claim,
    pub surf: OpportunitySurface,
    pub ms: MeasureSurface,
    pub plan: HedgePlan,
}

/// Random desk-scale case: periods ≤ 4, branching ≤ 3, d ≤ 2, random drift
/// and claim. Draws that hit a degenerate step are redrawn.
pub fn random_case(seed: u64) -> Case {
    random_case_with(seed, false)
}

/// As [`random_case`], with zero conditional drift at every node when `martingale` is set.
pub fn random_case_with(seed: u64, martingale: bool) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_ca5e);
    loop {
        let num_assets = rng.gen_range(1..=2);
        let redundant = num_assets == 2 && rng.gen_bool(0.25);
        let min_branching = if num_assets == 2 && !redundant { 3 } else { 2 };
        let spec = RandomTreeSpec {
            periods: rng.gen_range(1..=4),
            num_assets,
            min_branching,
            max_branching: 3,
            drift: rng.gen_range(0.0..0.5),
            redundant,
            martingale,
            seed: rng.gen(),
        };
        let tree = build_random(&spec).unwrap();
        let Ok(surf) = compute_opportunity(&tree) else {
            continue;
        };
        if surf.l_values().iter().any(|&l| l < 1e-4) {
            continue;
        }
        let tiny_step = tree
            .interior()
            .any(|n| surf.step(n).increments.iter().all(|d| d.amax() < 1e-2));
        if tiny_step {
            continue;
        }
        let claim = if rng.gen_bool(0.5) {
            let strike = tree.node(0).price[0] + rng.gen_range(-1.0..1.0);
            attach_claim(&tree, &ClaimSpec::Call { strike }).unwrap()
        } else {
            let values = (0..tree.num_leaves())
                .map(|_| rng.gen_range(-3.0..5.0))
                .collect();
            attach_claim(&tree, &ClaimSpec::PerLeaf { values }).unwrap()
        };
        let ms = measures(&tree, &surf);
        let plan = HedgePlan::compute(&tree, &surf, &claim);
        return Case {
            seed,
            tree,
            claim,
            surf,
            ms,
            plan,
        };
    }
}

pub fn case_from(tree: ScenarioTree, claim: Claim) -> Case {
    let surf = compute_opportunity(&tree).unwrap();
    let ms = measures(&tree, &surf);
    let plan = HedgePlan::compute(&tree, &surf, &claim);
    Case {
        seed: 0,
        tree,
        claim,
        surf,
        ms,
        plan,
    }
}

pub fn rel(a: f64, b: f64, floor: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs()).max(floor)
    }
}
