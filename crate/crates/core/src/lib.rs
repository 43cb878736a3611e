pub mod global;
pub mod lp;
pub mod model;
pub mod pricing;
pub mod colgen;
pub mod bnp;
pub mod problems;
pub mod oracle;
