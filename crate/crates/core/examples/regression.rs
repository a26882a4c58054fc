//! Log-log regression of rollout error on validation loss with the Wald
//! slope test, on exact and noisy synthetic data.
//!
//! cargo run --example regression

use acoustic_repro::analysis::{boxplot_stats, loglog_regression};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> acoustic_repro::Result<()> {
    let exact: Vec<(f64, f64)> = (0..10)
        .map(|i| {
            let x = 1e-3 * 1.5f64.powi(i);
            (x, 3.0 * x.powf(0.7))
        })
        .collect();
    let fit = loglog_regression(&exact)?;
    println!(
        "exact data:  A = {:.12}  B = {:.12}  R2 = {:.12}  p = {:.2e}",
        fit.exponent, fit.prefactor, fit.r_squared, fit.p_value
    );

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noisy: Vec<(f64, f64)> = exact
        .iter()
        .map(|&(x, y)| (x, y * (1.0 + rng.random_range(-0.3..0.3))))
        .collect();
    let fit = loglog_regression(&noisy)?;
    println!(
        "noisy data:  A = {:.4}  B = {:.4}  R2 = {:.3}  slope se {:.3}  p = {:.2e}",
        fit.exponent, fit.prefactor, fit.r_squared, fit.slope_std_err, fit.p_value
    );

    let flat: Vec<(f64, f64)> = exact.iter().map(|&(x, _)| (x, 2.0)).collect();
    let fit = loglog_regression(&flat)?;
    println!("flat data:   A = {}  R2 = {}  p = {}", fit.exponent, fit.r_squared, fit.p_value);

    let values: Vec<f64> = noisy.iter().map(|p| p.1).collect();
    let b = boxplot_stats(&values)?;
    println!("box: q1 {:.4} median {:.4} q3 {:.4} outliers {:?}", b.q1, b.median, b.q3, b.outliers);
    Ok(())
}
