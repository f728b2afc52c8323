//! Small dense networks with hand-derived gradients and Adam.

mod adam;
mod checkpoint;
pub mod heads;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::NetworkCheckpoint;
pub use mlp::{ForwardCache, Layer, Mlp};
