//! Scenario runner, reports and the regression suite.

pub mod report;
pub mod run;
pub mod scenario;
pub mod suite;
pub mod svg;
