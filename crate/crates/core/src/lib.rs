//! Hybrid Lorentz/Euclidean attention for partially relevant video retrieval.
//!
//! Parallel attention blocks in Euclidean space and on the Lorentz hyperboloid
//! are fused per position by a mean-guided interaction module. Training adds a
//! query-diversity hinge and an entailment-cone loss that keeps each text
//! embedding inside the cone of its video. Gradients come from a small tape
//! in [`diff`].
//!
//! Runnable examples live in `examples/`:
//!
//! - `manifold` exp/log maps, distances, centroid
//! - `autodiff` tape gradients against central differences
//! - `gradcheck` finite-difference suite over every block and loss
//! - `attention` Gaussian masks, a hybrid block and its fusion weights
//! - `encode` gaze, glance and query embeddings, pair scores
//! - `losses` the three training terms on a random batch
//! - `cones` half-aperture and exterior angle for hand-placed points
//! - `pipeline` synthetic corpus, training, held-out evaluation
//! - `checkpoint` save, reload, resume
//! - `norms` origin distances before and after training
//!
//! ```text
//! cargo run --release --example pipeline -- 20
//! ```

pub mod attention;
pub mod diff;
pub mod error;
pub mod harness;
pub mod manifold;
pub mod model;
pub mod objectives;

pub use error::{Error, Result};
