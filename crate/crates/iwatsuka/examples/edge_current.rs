//! Builds wave packets filling a trust window of the first band and
//! compares their edge current against the certified floor.  All three
//! tapers clear the floor with a wide margin; the floor is what survives
//! every admissible perturbation, not a tight estimate.

use iwatsuka::bands::{derivative_lower_bound, BandsOptions};
use iwatsuka::profiles::FieldProfile;
use iwatsuka::wavepacket::{Envelope, WavePacket};

fn main() -> iwatsuka::Result<()> {
    let profile = FieldProfile::sharp(1.0, 1.5)?;
    let (band, delta) = (1, 0.1);
    let floor = 0.5 * derivative_lower_bound(&profile, band, delta)?;

    println!("profile {}, band {band}, window half-width {delta}", profile.id());
    println!("certified current floor {floor:.6e}\n");
    for envelope in [Envelope::Indicator, Envelope::Gaussian, Envelope::Hann] {
        let packet =
            WavePacket::in_window(&profile, band, delta, 33, envelope, &BandsOptions::default())?;
        let current = packet.edge_current();
        let (lo, hi) = packet.energy_window();
        println!(
            "{:>9}: current {current:.6e} ({:8.1}x floor), energies [{lo:.4}, {hi:.4}]",
            envelope.id(),
            current / floor
        );
    }
    Ok(())
}
