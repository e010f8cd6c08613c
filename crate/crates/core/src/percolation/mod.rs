pub mod config;
pub mod enumerate;
pub mod estimators;
pub mod events;

pub use config::{LazyConfig, Occupancy, SiteConfig};
pub use estimators::{SiteTable, TwoPointTable};
