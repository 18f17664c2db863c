mod dual;
mod uob;

pub use dual::*;
pub use uob::*;
