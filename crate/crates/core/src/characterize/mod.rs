//! In-situ characterization: shot-noise normalization of measured traces,
//! a least-squares fit of the ENMO parameters, synthetic data, local
//! identifiability and squeezer efficiency inference.

mod fit;
mod identify;
pub mod lm;
mod model;
mod squeezer;
mod synth;
mod trace;

pub use fit::{fit_dataset, initial_angle, FitOptions, FitResult, FrozenParam, ParamEstimate, ResidualSpace};
pub use identify::{identifiability_report, IdentifiabilityReport, NullDirection};
pub use model::{detected_variance, model_variance, FitParams, ParamKind};
pub use squeezer::{angle_flatness, infer_efficiency_from_squeezing, squeezing_levels_db, SqueezerEstimate};
pub use synth::{synth_dataset, DesignGroup, SynthDesign};
pub use trace::{shot_noise_normalize, DetuningGroup, PowerSpectrum, Trace, TraceSet, ValueScale};
