pub mod corpus;
pub mod eval;
pub mod index;
pub mod note;
pub mod serve;
pub mod tuning;
