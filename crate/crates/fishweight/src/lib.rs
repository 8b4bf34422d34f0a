//! Weight estimation for harvested fish from silhouette mask areas.
//!
//! The crate covers the numerical side of an area-to-weight pipeline:
//!
//! 1. **imaging** – one-channel image / binary mask / probability-map types
//!    with calibrated area extraction, thresholding, CLAHE, blur, and the
//!    log-sum regression head.
//! 2. **dataset** – calibrated area–weight samples, CSV ingestion, and
//!    deterministic train/validation splitting.
//! 3. **augment** – seeded image–mask pair augmentation (rotate, scale,
//!    crop, flip, blur/CLAHE gating).
//! 4. **trainmath** – segmentation losses (BCE, soft Dice and the two
//!    composite forms), regression metrics, and the linear LR schedule.
//! 5. **fitting** – one-factor (`M = c·S^1.5`) and two-factor (`M = a·S^b`)
//!    power-law fits by log-scale MSE, linear-scale MSE, and RANSAC in log
//!    space, plus prediction, evaluation, and outlier flagging.
//! 6. **synth** – seeded synthetic sample and silhouette generators used as
//!    the test oracle for the fitters.
//!
//! Units are fixed throughout: areas in cm², weights in grams, image
//! calibration in mm-per-pixel (1 mm/px means 10000 pixels = 100 cm²).

pub mod augment;
pub mod dataset;
pub mod fitting;
pub mod imaging;
pub mod synth;
pub mod trainmath;
