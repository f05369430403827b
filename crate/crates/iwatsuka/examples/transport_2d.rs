//! Runs the full two-dimensional evolution twice: once clean, comparing
//! the centroid track against the exact fiber synthesis, and once with a
//! compact gauge bump parked on the edge channel, watching how far the
//! current sags while the packet drifts across it.

use iwatsuka::evolve2d::{
    effective_packet, fibered_vs_grid, velocity_probe, EvolveOptions, Grid2D,
};
use iwatsuka::fiber::FiberGrid;
use iwatsuka::profiles::{Bump2d, FieldProfile, PerturbationSpec};
use iwatsuka::wavepacket::Envelope;

fn main() -> iwatsuka::Result<()> {
    let profile = FieldProfile::sharp(1.0, 1.5)?;
    let x = FiberGrid::covering(-4.5, 5.5, 0.1)?;
    let grid = Grid2D::new(x, 20.0, 0.2)?;
    let packet = effective_packet(&profile, 1, 0.5, 1.7, 17, Envelope::Gaussian, &grid)?;
    let opts = EvolveOptions::default();

    let cmp = fibered_vs_grid(&packet, &grid, &opts, 400, 5)?;
    println!("clean run: centroid moved {:.4}", cmp.displacement);
    println!(
        "largest gap to the fiber reference {:.3e} ({:.3e} relative), norm drift {:.2e}",
        cmp.max_error, cmp.rel_error, cmp.trace.norm_drift
    );

    let bump = Bump2d {
        amplitude: 0.15,
        x0: 0.5,
        y0: 0.8,
        half_width_x: 1.0,
        half_width_y: 1.2,
    };
    let perturbation = PerturbationSpec { a2: Some(bump), ..Default::default() };
    let probe = velocity_probe(&packet, &perturbation, &grid, &opts, 2000, 9)?;
    println!("\ngauge bump of amplitude {} parked on the channel:", bump.amplitude);
    println!("clean current {:.6}", packet.edge_current());
    println!(
        "with the bump: starts {:.6}, sags to {:.6}, late mean {:.6}",
        probe.initial_current, probe.dip, probe.late_mean
    );
    Ok(())
}
