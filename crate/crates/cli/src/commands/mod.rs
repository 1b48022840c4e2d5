mod dynamics;
mod spectral;

pub use dynamics::{amplitude, decay, forced, resonance};
pub use spectral::{classify, mode, spectrum, trace, zones};
