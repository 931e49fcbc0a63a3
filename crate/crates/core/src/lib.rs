//! Joint antenna placement and computation offloading for fluid-antenna
//! multi-access edge computing.
//!
//! The numerical core is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the precision for common uses.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod channel;
pub mod cli;
pub mod export;
pub mod ippso;
pub mod latency;
pub mod linalg;
pub mod pso;
pub mod scalar;
pub mod scenario;
pub mod validation;

pub use cli::cli_main;

pub type ChannelMatrixF64 = channel::ChannelMatrix<f64>;
pub type ChannelMatrixF32 = channel::ChannelMatrix<f32>;
pub type UserChannelSpecF64 = channel::UserChannelSpec<f64>;
pub type UserChannelSpecF32 = channel::UserChannelSpec<f32>;
pub type AllocationStateF64 = latency::AllocationState<f64>;
pub type AllocationStateF32 = latency::AllocationState<f32>;
pub type AllocationProblemF64 = alloc::AllocationProblem<f64>;
pub type AllocationProblemF32 = alloc::AllocationProblem<f32>;
pub type SwarmConfigF64 = pso::SwarmConfig<f64>;
pub type SwarmConfigF32 = pso::SwarmConfig<f32>;
pub type ScenarioInstanceF64 = scenario::ScenarioInstance<f64>;
pub type ScenarioInstanceF32 = scenario::ScenarioInstance<f32>;
pub type IppsoConfigF64 = ippso::IppsoConfig<f64>;
pub type IppsoConfigF32 = ippso::IppsoConfig<f32>;
pub type RunResultF64 = ippso::RunResult<f64>;
pub type RunResultF32 = ippso::RunResult<f32>;
