use mvhedge::opportunity::{compute_opportunity, mvt_process};
use mvhedge::tree::{build_iid_multinomial, Increment, StepMode};

fn main() -> mvhedge::Result<()> {
    let law = vec![
        Increment::new(vec![1.0], 0.6),
        Increment::new(vec![-1.0], 0.4),
    ];
    let tree = build_iid_multinomial(&[10.0], &law, 4, StepMode::Additive)?;
    let surf = compute_opportunity(&tree)?;

    println!(
        "{:>5} {:>4} {:>20} {:>20} {:>12}",
        "node", "t", "L", "a_tilde", "sharpe"
    );
    for t in 0..tree.horizon() {
        let n = tree.slice(t).start;
        println!(
            "{n:>5} {t:>4} {:>20.15} {:>20.15} {:>12.8}",
            surf.l(n),
            surf.a_tilde(n)[0],
            surf.sharpe_ratio(n)
        );
    }
    println!("L0 = {:.15} (0.96^4 = {:.15})", surf.l0(), 0.96f64.powi(4));

    let mvt = mvt_process(&tree, &surf)?;
    println!(
        "deterministic MVT: {}  P* = P: {}  max rel error of L vs exp(K): {:e}",
        mvt.deterministic_mvt,
        mvt.pstar_is_p,
        mvt.deterministic_l_error.unwrap_or(f64::NAN)
    );
    Ok(())
}
