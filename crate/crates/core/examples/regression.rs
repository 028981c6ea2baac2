//! Range rate against range: OLS with adjusted R-squared and the ANOVA F test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reargap::stats::{distribution_summary, linear_regression_anova};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 300;
    let range: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..60.0)).collect();
    let rdot: Vec<f64> = range
        .iter()
        .map(|r| 0.004 * r - 0.2 + rng.random_range(-2.0..2.0))
        .collect();

    let s = distribution_summary(&rdot)?;
    println!(
        "range rate: n={} mean={:.3} std={:.3} p10={:.3} p50={:.3} p90={:.3}",
        s.n, s.mean, s.std, s.percentiles.p10, s.percentiles.p50, s.percentiles.p90
    );
    let r = linear_regression_anova(&range, &rdot)?;
    println!("slope {:.5}, intercept {:.4}", r.slope, r.intercept);
    println!("R2 {:.4}, adjusted R2 {:.4}", r.r2, r.adjusted_r2);
    println!("F({}, {}) = {:.3}, p = {:.4}", r.df.0, r.df.1, r.f_stat, r.p_value);
    Ok(())
}
