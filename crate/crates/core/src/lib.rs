//! Exponential Adams–Bashforth and Rush–Larsen integrators for stiff split
//! ODEs `dy/dt = a(t,y) y + b(t,y)`, classical comparison schemes, the
//! Beeler–Reuter ventricular action-potential model, and the post-processing
//! used to measure accuracy (piecewise cubic interpolation, relative `L∞`
//! error, activation/recovery times).
//!
//! ```
//! use stiffexp::integrators::{integrate, SchemeSpec};
//! use stiffexp::ionic::{BeelerReuter, VOLTAGE};
//! use stiffexp::postprocess::extract_biomarkers;
//!
//! let model = BeelerReuter::default();
//! let spec: SchemeSpec = "RL_2".parse().unwrap();
//! let run = integrate(&model, &spec, 7920).unwrap();
//! let traj = run.into_trajectory().expect("stable at h = 0.05");
//! let bm = extract_biomarkers(&traj, VOLTAGE).unwrap();
//! assert!(bm.t_a > 19.0 && bm.t_a < 22.0);
//! ```

pub mod integrators;
pub mod ionic;
pub mod newton;
pub mod phi;
pub mod postprocess;
pub mod split;

pub use integrators::{integrate, Family, Integration, SchemeSpec, StatusReport};
pub use ionic::{BeelerReuter, StimulusProfile};
pub use split::{SplitSystem, TimeMesh, Trajectory};
