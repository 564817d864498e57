//! The differentiable stereo model contract, a from-scratch reference model,
//! plain gradient descent, and checkpoint files.

mod checkpoint;
mod params;
mod toy;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use params::{sgd_step, Layout, ModelParams, ParamGrad, TensorSpec};
pub use toy::{ToyModel, TOY_FEATURES};

use crate::rng::Rng;
use crate::types::{DisparityMap, Field, Image};
use crate::Result;

/// A differentiable stereo matcher `D = S(P; Θ)`.
///
/// `backward` must return the exact gradient of `⟨cotangent, forward(P, Θ)⟩`
/// with respect to `Θ`.
pub trait StereoModel: Send + Sync {
    /// Largest disparity the model can output.
    fn max_disparity(&self) -> usize;

    fn layout(&self) -> &Layout;

    fn init_params(&self, rng: &mut Rng) -> ModelParams;

    fn forward(&self, left: &Image, right: &Image, params: &ModelParams) -> Result<DisparityMap>;

    fn backward(&self, left: &Image, right: &Image, params: &ModelParams, cotangent: &Field) -> Result<ParamGrad>;

    /// Forward pass, then backward with the cotangent produced by `loss`.
    ///
    /// Implementations may override this to reuse forward intermediates.
    fn forward_backward(
        &self,
        left: &Image,
        right: &Image,
        params: &ModelParams,
        loss: &mut dyn FnMut(&DisparityMap) -> Result<Field>,
    ) -> Result<(DisparityMap, ParamGrad)> {
        let pred = self.forward(left, right, params)?;
        let cot = loss(&pred)?;
        let grad = self.backward(left, right, params, &cot)?;
        Ok((pred, grad))
    }
}
