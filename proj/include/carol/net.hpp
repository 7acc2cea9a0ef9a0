#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace carol {

enum class Activation { Identity, Tanh, Relu, Softmax };

std::string to_string(Activation act);
Activation parse_activation(std::string_view name);

struct LayerSpec {
  Eigen::Index in_dim = 0;
  Eigen::Index out_dim = 0;
  Activation activation = Activation::Identity;
};

// One trainable feed-forward model. A layer computes act(W x + b) with W of
// shape out_dim x in_dim. Adam moment buffers live next to the parameters so
// the struct is the complete optimizer state; they stay shape-congruent with
// the parameters at all times.
struct FeedForwardNet {
  std::vector<LayerSpec> layers;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  std::vector<Eigen::MatrixXd> weight_m, weight_v;
  std::vector<Eigen::VectorXd> bias_m, bias_v;
  long step_count = 0;
};

struct NetGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

// Pre- and post-activations recorded by a forward pass over the layer range
// [first_layer, last_layer]. post.front() is the input that was fed in.
struct ForwardCache {
  int first_layer = 0;
  int last_layer = -1;
  std::vector<Eigen::VectorXd> pre;
  std::vector<Eigen::VectorXd> post;
};

// Row-per-sample variant used by the batched passes.
struct BatchCache {
  int first_layer = 0;
  int last_layer = -1;
  std::vector<Eigen::MatrixXd> pre;
  std::vector<Eigen::MatrixXd> post;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

// Glorot-uniform weights (bound sqrt(6/(in+out))) from a seeded generator,
// zero biases, zero moments.
FeedForwardNet make_net(std::vector<LayerSpec> layers, std::uint64_t seed);

// The denoising autoencoder: [feat_dim -> emb_dim, tanh] followed by
// [emb_dim -> feat_dim, softmax]. The embedding is the hidden activation.
FeedForwardNet init_encoder(std::uint64_t seed, Eigen::Index feat_dim, Eigen::Index emb_dim);

NetGradients zero_gradients(const FeedForwardNet& net);
void add_scaled(NetGradients& into, const NetGradients& from, double weight);

// Runs layers [first_layer, last_layer] (inclusive; last_layer < 0 means the
// final layer) and returns the last activation. Purely a function of the
// state and input.
Eigen::VectorXd forward(const FeedForwardNet& net, const Eigen::VectorXd& input,
                        ForwardCache* cache = nullptr, int first_layer = 0,
                        int last_layer = -1);

// Backpropagates output_grad through the layers covered by the cache,
// accumulating parameter gradients into accum and returning the gradient
// with respect to the cached input.
Eigen::VectorXd backward(const FeedForwardNet& net, const ForwardCache& cache,
                         const Eigen::VectorXd& output_grad, NetGradients& accum);

Eigen::MatrixXd forward_batch(const FeedForwardNet& net, const Eigen::MatrixXd& inputs,
                              BatchCache* cache = nullptr, int first_layer = 0,
                              int last_layer = -1);
Eigen::MatrixXd backward_batch(const FeedForwardNet& net, const BatchCache& cache,
                               const Eigen::MatrixXd& output_grads, NetGradients& accum);

// Bias-corrected adaptive moment update. Rejects non-finite gradients and
// guarantees finite parameters afterwards.
void adam_step(FeedForwardNet& net, const NetGradients& grads, double lr);

// Versioned textual checkpoint: layer specs plus row-major parameter arrays,
// printed with enough digits to reload bit-identically. Moment buffers are
// not part of the format.
void save_net(const FeedForwardNet& net, const std::string& path);
FeedForwardNet load_net(const std::string& path);

}  // namespace carol
