pub mod config;
pub mod graph;
pub mod infer;
pub mod params;

pub use config::{bipedalnet_v1, bipedalnet_v1_acc, preset_by_name, LayerKind, LayerSpec, NetworkConfig, Shape};
pub use graph::{backward_ste, forward_train, update_running_stats, Batch, ForwardCache, Gradients, LayerGrad, Mode};
pub use infer::{argmax, fold_batchnorm, forward_infer, BinarizedModel, Comparison, ModelLayer, Threshold};
pub use params::{binarize, Affine, BatchNormParams, LatentWeights, LayerParams, Precision};
