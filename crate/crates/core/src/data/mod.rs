//! Training-pair simulation and corpus manifests.

pub mod degrade;
pub mod manifest;
pub mod sim;
pub mod toy;

pub use degrade::{
    apply_eq, apply_rir, direct_window, mix_at_snr, multiband_eq_taps, peak_index, random_multiband_eq, reshape_rir,
    schroeder_t60,
};
pub use manifest::{Manifest, ManifestEntry, Split};
pub use sim::{change_speed, held_out_spec, sample_spec, simulate_pair, Assets, AugmentationConfig, SimulationSpec};
pub use toy::{make_toy_dataset, ToyCorpusConfig};
