//! Generator and discriminator networks over named parameter sets.

pub mod discriminator;
pub mod generator;
pub mod params;

pub use discriminator::{
    multi_scale_forward, spec_disc_forward, wave_disc_forward, DiscriminatorSet, DiscriminatorVerdict,
    FeatureMapStack, MelNorm, SpecDiscConfig, SpecDiscriminator, VerdictVars, WaveDiscConfig, WaveDiscriminator,
    DISC_NAMES,
};
pub use generator::{generator_forward, Generator, GeneratorConfig, GeneratorOutput, GeneratorVars};
pub use params::{Bound, Layout, Params};
