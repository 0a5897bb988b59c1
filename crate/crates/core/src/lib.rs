//! Boundary output-feedback control of a reaction-diffusion equation with
//! collocated sensing and Robin actuation, under sample-and-hold and
//! event-triggered implementation.
//!
//! - [`specfun`]: the entire-function series behind the Bessel kernels
//! - [`kernels`]: closed-form backstepping kernels, gains and transforms
//! - [`spectral`]: Sturm-Liouville spectra and the sampling certificate
//! - [`trigger`]: dynamic event trigger and sampling schedules
//! - [`pdesim`]: implicit-Euler closed-loop simulation
//!
//! Everything is generic over [`Real`]; the `*F64` aliases fix `T = f64`.

// NaN must fail validation, so `!(x > 0)` is intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod pdesim;
pub mod scalar;
pub mod specfun;
pub mod spectral;
pub mod trigger;

pub use error::{Error, Result};
pub use grid::{Grid, GridFunction};
pub use kernels::{build_kernel_set, KernelSet, PlantParams};
pub use pdesim::{run, InitialCondition, Scheduler, SimConfig, TrajectoryLog};
pub use scalar::Real;
pub use spectral::{build_certificate, CertificateOptions, SamplingCertificate};
pub use trigger::{TriggerDesign, TriggerParams};

pub type PlantParamsF64 = PlantParams<f64>;
pub type KernelSetF64 = KernelSet<f64>;
pub type GridFunctionF64 = GridFunction<f64>;
pub type SamplingCertificateF64 = SamplingCertificate<f64>;
pub type TriggerParamsF64 = TriggerParams<f64>;
pub type SimConfigF64 = SimConfig<f64>;
pub type TrajectoryLogF64 = TrajectoryLog<f64>;
