//! Continuous-time stereo event-camera visual odometry.
//!
//! Events from a stereo pair are grouped into short clusters, turned into
//! feature tracklets, screened with a motion-compensated RANSAC and fed to a
//! sliding-window Gauss-Newton estimator whose motion prior is a
//! white-noise-on-acceleration Gaussian process on SE(3).

pub mod camera;
pub mod error;
pub mod estimator;
pub mod events;
pub mod features;
pub mod metrics;
pub mod pipeline;
pub mod ransac;
pub mod se3;
pub mod synth;
pub mod tracklets;
pub mod trajectory;
pub mod tum;

pub use error::*;
