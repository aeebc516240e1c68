//! Recomputes the CWT reconstruction constants stored in `dsp::cwt`.
//!
//! Run with `cargo run --release --example calibrate_cwt`.

use vibropt::dsp::cwt::{calibrate_reconstruction, WaveletKind};

fn main() {
    for kind in WaveletKind::ALL {
        let c = calibrate_reconstruction(kind);
        println!("{kind}: {c:.16}  (stored {:.16})", kind.recon_constant());
    }
}
