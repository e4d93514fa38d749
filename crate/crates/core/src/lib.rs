//! Credibility nudges for social media feeds: source registry, reply
//! analysis, annotation, survey scoring and the statistics used to evaluate
//! them.

pub mod dataset;
pub mod feed;
pub mod nudge;
pub mod registry;
pub mod replies;
pub mod report;
pub mod service;
pub mod stats;
pub mod survey;
