//! Multi-coil acquisition forward model: coil k-space synthesis, Cartesian
//! undersampling, thermal noise and root-sum-of-squares combination.

mod image;
mod kspace;
mod mask;
mod noise;
mod sensitivity;

pub use image::ReconImage;
pub use kspace::{rss_combine, synthesize_kspace, MultiCoilKSpace};
pub use mask::{MaskPattern, SamplingMask};
pub use noise::{
    add_thermal_noise, estimate_background_noise, estimate_background_noise_rss,
    thermal_equivalent_eta, NoiseModel,
};
pub use sensitivity::SensitivityMaps;
