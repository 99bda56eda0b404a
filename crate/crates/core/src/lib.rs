pub mod pdf;
pub mod bait;
pub mod fixtures;
pub mod seo;
pub mod visual;
pub mod analytics;
pub mod intel;
pub mod pipeline;
