pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod optim;
pub mod params;
pub mod tensor;
pub mod transformer;

pub use checkpoint::{Checkpoint, Dtype};
pub use optim::{Adam, Schedule};
pub use params::{Grads, ParamStore};
pub use tensor::{Tape, Var};
pub use transformer::{HeadKind, Hidden, ModelConfig, ModelInput, Transformer};
