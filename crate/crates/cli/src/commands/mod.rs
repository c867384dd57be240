pub mod nuisance;
pub mod report;
pub mod sweep;
pub mod train;
pub mod verify;
