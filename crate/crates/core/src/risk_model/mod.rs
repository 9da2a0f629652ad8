//! Risk catalogs, expert edge data, cross-year mappings and event histories.

pub mod catalog;
pub mod history;
pub mod mapping;

pub use catalog::{
    load_network, load_network_files, load_pair_counts, load_risk_catalog, normalize_likelihood,
    Category, ExpertPairCount, LikelihoodScale, Risk, RiskNetwork,
};
pub use history::{load_history, load_history_file, HistoryMatrix, Month};
pub use mapping::{map_cross_year, AlignmentReport, CrossYearMapping, MappingEntry};
