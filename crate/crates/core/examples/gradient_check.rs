//! Finite-difference check of every analytic gradient, then a manual check of
//! one loss on a custom input.
//!
//! cargo run --release --example gradient_check

use shadowphys::gradcheck::{check_all, relative_error, TOLERANCE};
use shadowphys::image::Image;
use shadowphys::losses::loss_identity;

fn main() -> shadowphys::Result<()> {
    for c in check_all(20, 1) {
        let verdict = if c.passed() { "ok" } else { "FAIL" };
        println!("{:12} {:3} trials  max rel err {:.2e}  {verdict}", c.loss, c.trials, c.max_rel_error);
    }

    let target = Image::from_fn(3, 4, |r, c| [0.1 * r as f64, 0.05 * c as f64, 0.5])?;
    let x: Vec<f64> = (0..36).map(|i| 0.37 + 0.011 * i as f64).collect();
    let (_, grad) = loss_identity(&Image::new(3, 4, x.clone())?, &target)?;
    let err = relative_error(&grad, &x, |v| {
        loss_identity(&Image::new(3, 4, v.to_vec()).unwrap(), &target).unwrap().0
    });
    println!("identity on a custom point: {err:.2e} (tolerance {TOLERANCE:.0e})");
    Ok(())
}
