//! The encrypted multilayer perceptron and its training loop.

mod activation;
mod depth;
mod io;
mod model;
mod plain;
mod train;

pub use activation::{
    cheb_fit_silu, poly_eval_ct, poly_level_cost, silu, silu_derivative, ActivationPoly, Powers,
    DEFAULT_DEGREE, DEFAULT_DOMAIN,
};
pub use depth::DepthAudit;
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, ModelFile};
pub use model::{
    argmax, bias_axis, decrypt_model, encrypt_model, init_model, layer_layouts, predict_plain,
    weight_axis, EncryptedLayer, EncryptedModel, LayerSpec, NetworkSpec, PlainLayer, PlainModel,
    PlainTrace, DEFAULT_DIMS,
};
pub use plain::{plain_gradients, plain_loss, plain_sgd_update, plain_train_epochs};
pub use train::{
    backward, batch_gradients, epoch_order, forward, forward_train, loss_grad, mse_loss,
    predict_encrypted, sgd_update, train, train_epochs, ForwardPass, LayerGrad, Probe, RoundStats,
    Schedule, TrainTrace,
};
