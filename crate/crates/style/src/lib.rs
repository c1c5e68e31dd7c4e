//! Multi-style generative network for visible-to-thermal style transfer.
//!
//! A frozen VGG-16 trunk supplies multi-scale features. Gram statistics of
//! those features define the style objective; the generator learns to match
//! them through a CoMatch layer while preserving content features.

pub mod error;
pub mod features;
pub mod generator;
pub mod gram;
pub mod loss;
pub mod stylize;
pub mod train;

pub use error::{Result, StyleError};
pub use features::{extract_features, FeatureMap, FeaturePyramid, LossNetwork, WeightSource};
pub use generator::Generator;
pub use gram::{comatch, gram, GramMatrix};
pub use loss::{
    content_loss, objective, set_style_targets, style_loss, tv_loss, LossWeights, ObjectiveTerms, StyleTargets,
};
pub use stylize::{stylize_dataset, stylize_image};
pub use train::{train_msgnet, train_on_images, Checkpoint, LossRecord, StyleTrainConfig, TrainLog, TrainOutcome};

/// Weighted objective for one content/style pair through `generator`.
///
/// Sets the generator's style to `x_s`, so the returned graph reaches both
/// the generator parameters and, through them, the style branch.
pub fn total_objective(
    generator: &mut Generator,
    x_c: &thermoscope_tensor::Tensor,
    x_s: &thermoscope_tensor::Tensor,
    weights: &LossWeights,
    network: &LossNetwork,
) -> Result<(thermoscope_tensor::Tensor, ObjectiveTerms)> {
    weights.validate()?;
    generator.set_style(x_s)?;
    let content = extract_features(&x_c.detach(), network)?.content().detach();
    let targets = set_style_targets(x_s, network)?;
    let generated = generator.forward(x_c)?;
    let generated = match generated.rank() {
        3 => {
            let s = generated.shape().to_vec();
            generated.reshape(&[1, s[0], s[1], s[2]])?
        }
        _ => generated,
    };
    objective(&generated, &content, &targets, weights, network)
}
