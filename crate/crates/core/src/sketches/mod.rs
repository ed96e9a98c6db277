//! Decayed streaming summaries.

mod adr;
mod amc;
mod decay;
mod sampler;
mod spacesaving;

pub use adr::{nearest_rank_index, quantile, AdaptableDampedReservoir};
pub use amc::{AmortizedMaintenanceCounter, MaintenancePolicy};
pub use decay::DecayDriver;
pub use sampler::{
    build_sampler, AdrSampler, Averageable, PerPeriodSampler, PerTupleDecaySampler, Sampler,
    TimeAverageSampler, UniformReservoir,
};
pub use spacesaving::SpaceSaving;
