pub mod conv;
pub mod elementwise;
pub mod linalg;
mod norm;
mod reduce;
mod shape;
