//! Small tanh networks, Adam, and the learned modified field trained
//! through an integrator step.

mod adam;
mod checkpoint;
mod grad;
mod mlp;
mod model;

pub use adam::AdamState;
pub use checkpoint::{fmt17, load_model, model_from_json, model_to_json, save_model, FORMAT_VERSION};
pub use grad::{dataset_loss, step_loss_and_grad, training_step, MIDPOINT_UNROLL};
pub use mlp::{Mlp, MlpTape};
pub use model::{ModelTape, ModifiedFieldModel};
