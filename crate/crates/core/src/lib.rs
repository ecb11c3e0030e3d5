pub mod bubbles;
pub mod error;
pub mod fit;
pub mod interaction;
pub mod norms;
pub mod projection;
pub mod quadrature;
pub mod reduction;
pub mod sharp_example;

pub use bubbles::{Bubble, BubbleFamily, Kernel, ProblemParams};
pub use error::{Error, Result};
