pub mod expr;
pub mod linalg;
pub mod par;
pub mod system;
pub mod observability;
pub mod models;
pub mod oracles;
