pub mod error;
pub mod num;
