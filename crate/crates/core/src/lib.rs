pub mod algebra;
pub mod bath;
pub mod cli;
pub mod config;
pub mod error;
pub mod fitting;
pub mod gkls;
pub mod multitime;
pub mod oracle;
pub mod quadrature;
pub mod sparse;
