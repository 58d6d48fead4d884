//! Image ingestion, palette fitting, quantization and stimulus sets.

pub mod container;
pub mod dataset;
pub mod image;
pub mod noise;
pub mod palette;
pub mod synthetic;

pub use self::container::{NamedImage, TokenDataset};
pub use self::dataset::{load_dataset, Role, StimulusMeta, StimulusRecord};
pub use self::image::{resize, RawImage};
pub use self::noise::generate_noise_set;
pub use self::palette::{fit_palette, quantize, render, Palette, PaletteFit, PalettedImage};
