//! Event-camera stream super-resolution with Spike Response Model networks.
//!
//! The crate covers the whole pipeline: event I/O and voxelisation
//! ([`events`]), SRM neuron dynamics ([`srm`]), the two-layer spiking networks
//! with polarity-split execution ([`model`]), loss, backpropagation and Adam
//! ([`training`]), and stream-level evaluation ([`metrics`]).

pub mod error;
pub mod events;
pub mod metrics;
pub mod model;
pub mod srm;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use events::voxel::SpikeTensor;
pub use events::{Event, EventStream, Polarity};
pub use tensor::{Shape4, Tensor4};
