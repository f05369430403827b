//! Prices the full cascade of certified constants for one trust window:
//! the step-profile slope floor, the ramp amplitude it survives, the
//! electromagnetic perturbation budgets on top of that, and the long-time
//! velocity floor.  The budgets are tiny because every stage pays its
//! worst case, but each one is explicit and machine-checkable.

use iwatsuka::ledger::build_ledger;

fn main() -> iwatsuka::Result<()> {
    let (band, ratio, delta) = (1, 1.5, 0.1);
    let b_minus = 1.0;
    let ledger = build_ledger(band, ratio, delta)?;

    println!("band {band}, step ratio {ratio}, window half-width {delta}, b_minus {b_minus}\n");
    println!("step stage:      slope floor coefficient {:.6e}", ledger.step_floor_coefficient);

    let s = &ledger.smooth;
    println!(
        "ramp stage:      amplitude {:.6e}, split 2^{}, condition {:.4} <= 1/2: {}",
        s.amplitude,
        s.split.trailing_zeros(),
        s.condition_value,
        s.certified
    );
    println!(
        "                 ramp half-width cap {:.6e}, current floor {:.6e}",
        s.epsilon_cap(b_minus),
        s.current_floor(b_minus)
    );

    let p = &ledger.perturbed;
    println!(
        "field stage:     gauge cap {:.6e}, scalar cap {:.6e}, split 2^{}, certified {}",
        p.field_cap(b_minus),
        p.potential_cap(b_minus),
        p.split.trailing_zeros(),
        p.certified
    );
    println!("                 current floor {:.6e}", p.current_floor(b_minus));

    let a = &ledger.asymptotic;
    println!(
        "long-time stage: velocity floor {:.6e}, transverse gauge cap {:.6e}",
        a.velocity_floor(b_minus),
        a.transverse_cap(b_minus)
    );
    Ok(())
}
