//! Feature extraction, PCA, and the map between PCA latents and a
//! generator's native controls.

mod calibration;
mod extractor;
mod pca;

pub use calibration::{fit_latent_space, CalibratedGenerator, Calibration, LatentSpace};
pub use extractor::{FeatureExtractor, ReferenceExtractor, REFERENCE_FEATURE_DIM};
pub use pca::{canonical_sign, fit_pca, jacobi_eigen, mean_and_covariance, FeatureVector, PcaModel};
