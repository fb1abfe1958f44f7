pub mod estimate;
pub mod oracle;
pub mod sweep;
pub mod verify;
