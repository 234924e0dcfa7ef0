pub mod cli;
pub mod corpus;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod tone;
pub mod trends;
