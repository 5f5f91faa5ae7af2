use mvhedge::tree::{
    build_binomial, build_iid_multinomial, build_random, validate_tree, Increment, RandomTreeSpec,
    StepMode,
};

fn main() -> mvhedge::Result<()> {
    let binomial = build_binomial(&[100.0], 1.1, 0.9, 0.55, 4)?;
    let law = vec![
        Increment::new(vec![0.04], 0.3),
        Increment::new(vec![0.0], 0.4),
        Increment::new(vec![-0.03], 0.3),
    ];
    let trinomial = build_iid_multinomial(&[100.0], &law, 3, StepMode::Multiplicative)?;
    let random = build_random(&RandomTreeSpec {
        periods: 3,
        num_assets: 2,
        min_branching: 3,
        max_branching: 4,
        drift: 0.2,
        redundant: false,
        martingale: false,
        seed: 7,
    })?;

    for (name, t) in [
        ("binomial", &binomial),
        ("trinomial", &trinomial),
        ("random", &random),
    ] {
        let total: f64 = t.leaves().map(|m| t.prob(m)).sum();
        println!(
            "{name:<10} assets={} T={} nodes={} leaves={} leaf mass={total:.15} violations={}",
            t.num_assets(),
            t.horizon(),
            t.len(),
            t.num_leaves(),
            validate_tree(t).len()
        );
    }

    let leaf = trinomial.leaves().next().unwrap();
    println!("first trinomial leaf path: {:?}", trinomial.path_to(leaf));
    Ok(())
}
