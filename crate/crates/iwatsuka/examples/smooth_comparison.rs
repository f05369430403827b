//! Replaces the sharp field step by linear and cubic ramps and checks the
//! band functions move by no more than the distance between the field
//! primitives.  The cubic ramp hugs the step tighter and perturbs the
//! bands less, at the same ramp width.

use iwatsuka::bands::{compare_sharp_smooth, BandsOptions};
use iwatsuka::profiles::FieldProfile;

fn main() -> iwatsuka::Result<()> {
    let (bm, bp) = (1.0, 1.5);
    let sharp = FieldProfile::sharp(bm, bp)?;
    let opts = BandsOptions::default();

    println!("{:>28} {:>12} {:>14} {:>10}", "ramp", "sup|B_eps-B|", "max sqrt gap", "within");
    for eps in [0.05, 0.1, 0.2] {
        for smooth in [
            FieldProfile::smooth_linear(bm, bp, eps)?,
            FieldProfile::smooth_cubic(bm, bp, eps)?,
        ] {
            let cmp = compare_sharp_smooth(&sharp, &smooth, -2.7, 2.7, 19, 1, &opts)?;
            println!(
                "{:>28} {:>12.6} {:>14.6e} {:>10}",
                smooth.id(),
                cmp.sup_beta_distance,
                cmp.max_sqrt_gap,
                cmp.pass && cmp.pass_abs
            );
        }
    }
    Ok(())
}
