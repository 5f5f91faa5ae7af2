use mvhedge::opportunity::{compute_opportunity, measures};
use mvhedge::oracle::martingale_qp;
use mvhedge::tree::{build_iid_multinomial, Increment, StepMode};

fn main() -> mvhedge::Result<()> {
    let law = vec![
        Increment::new(vec![2.0], 0.45),
        Increment::new(vec![1.0], 0.45),
        Increment::new(vec![-1.0], 0.1),
    ];
    let tree = build_iid_multinomial(&[10.0], &law, 2, StepMode::Additive)?;
    let surf = compute_opportunity(&tree)?;
    let ms = measures(&tree, &surf);

    println!("root one-step weights (signed): {:?}", ms.qstar_w[0]);
    println!(
        "nodes with negative Q* weight: {}",
        ms.negative_weight_nodes
    );

    let qp = martingale_qp(&tree)?;
    println!("1/L0           = {:.15}", 1.0 / surf.l0());
    println!("QP E[z^2]      = {:.15}", qp.second_moment);
    let worst = qp
        .leaf_density
        .iter()
        .zip(&ms.z_qstar)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max |z_qp - z_engine| = {worst:e}");
    println!("opportunity-neutral densities: {:?}", ms.z_pstar);
    Ok(())
}
