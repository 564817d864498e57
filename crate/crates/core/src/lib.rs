//! Zoom-and-learn (ZOLE) self-adaptation for deep stereo matching.
//!
//! A pre-trained differentiable stereo model is finetuned on an unlabeled
//! target domain by learning from its own zoomed-in predictions, while a
//! per-patch graph Laplacian regularizer decides which of the extra details
//! are kept. Labeled synthetic pairs keep the model anchored.
//!
//! Module map:
//!
//! | module      | contents                                              |
//! |-------------|-------------------------------------------------------|
//! | [`types`]   | images, disparity maps, stereo pairs                  |
//! | [`patch`]   | non-overlapping patch tiling, extract / scatter       |
//! | [`rng`]     | seeded, platform-stable randomness                    |
//! | [`imgio`]   | PFM / PGM / PPM I/O, bilinear resampling              |
//! | [`graph`]   | ε-neighborhood patch graphs and Laplacian regularizer |
//! | [`model`]   | stereo model contract, toy reference model, SGD       |
//! | [`loss`]    | L1 data terms, graph loss, composite objective        |
//! | [`adapt`]   | zoom targets and the adaptation loop                  |
//! | [`eval`]    | view synthesis, PSNR, SSIM, EPE, 3ER                  |
//! | [`datagen`] | procedural stereo scenes, degradations, augmentation  |
//! | [`dataset`] | on-disk dataset directories and manifests             |
//! | [`cli`]     | the `zole` command-line front end                     |

pub mod adapt;
pub mod cli;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod imgio;
pub mod loss;
pub mod model;
pub mod patch;
pub mod rng;
pub mod types;

pub use error::{Error, Result};
pub use patch::PatchGrid;
pub use rng::Rng;
pub use types::{DisparityMap, Field, Image, Origin, StereoPair};
