//! Evolves a window packet through the fiber decomposition, where time
//! evolution is exact per momentum, and fits the drift of its centroid.
//! The fitted slope reproduces twice the packet's edge current and stays
//! inside the window spanned by the band slopes.

use iwatsuka::bands::BandsOptions;
use iwatsuka::profiles::FieldProfile;
use iwatsuka::wavepacket::{fibered_transport, Envelope, WavePacket};

fn main() -> iwatsuka::Result<()> {
    let profile = FieldProfile::sharp(1.0, 1.5)?;
    let packet =
        WavePacket::in_window(&profile, 1, 0.1, 33, Envelope::Hann, &BandsOptions::default())?;
    let tr = fibered_transport(&packet, 10.0, 9)?;

    println!("profile {}, band 1 window packet", profile.id());
    println!("{:>8} {:>12}", "t", "<y>(t)");
    for (t, y) in tr.times.iter().zip(&tr.mean_y) {
        println!("{t:8.3} {y:12.6}");
    }
    println!(
        "\nfitted slope {:.6e} vs predicted {:.6e} (relative error {:.2e})",
        tr.slope, tr.predicted_slope, tr.rel_err
    );
    println!(
        "velocity window [{:.4e}, {:.4e}], inside: {}, norm drift {:.2e}",
        tr.velocity_window.0, tr.velocity_window.1, tr.within_window, tr.norm_drift
    );
    Ok(())
}
