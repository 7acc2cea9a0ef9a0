#include "carol/net.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "carol/errors.hpp"
#include "carol/rng.hpp"

namespace carol {

std::string to_string(Activation act) {
  switch (act) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Softmax: return "softmax";
  }
  throw std::logic_error("unknown Activation");
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "softmax") return Activation::Softmax;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

namespace {

void check_layer_spec(const LayerSpec& spec) {
  if (spec.in_dim <= 0 || spec.out_dim <= 0)
    throw ConfigError("layer dimensions must be positive");
}

template <typename Vec>
void apply_activation(Activation act, const Vec& pre, Vec& post) {
  switch (act) {
    case Activation::Identity:
      post = pre;
      return;
    case Activation::Tanh:
      post = pre.array().tanh().matrix();
      return;
    case Activation::Relu:
      post = pre.array().max(0.0).matrix();
      return;
    case Activation::Softmax:
      post = pre;
      return;  // handled per row below
  }
}

void softmax_inplace(Eigen::Ref<Eigen::VectorXd> v) {
  const double m = v.maxCoeff();
  v = (v.array() - m).exp().matrix();
  v /= v.sum();
}

// Gradient through the activation: turns dL/dpost into dL/dpre.
Eigen::VectorXd activation_backward(Activation act, const Eigen::VectorXd& pre,
                                    const Eigen::VectorXd& post,
                                    const Eigen::VectorXd& grad_post) {
  switch (act) {
    case Activation::Identity:
      return grad_post;
    case Activation::Tanh:
      return (grad_post.array() * (1.0 - post.array().square())).matrix();
    case Activation::Relu:
      return (grad_post.array() * (pre.array() > 0.0).cast<double>()).matrix();
    case Activation::Softmax: {
      const double dot = grad_post.dot(post);
      return (post.array() * (grad_post.array() - dot)).matrix();
    }
  }
  throw std::logic_error("unknown Activation");
}

int resolve_last_layer(const FeedForwardNet& net, int last_layer) {
  const int n = static_cast<int>(net.layers.size());
  if (last_layer < 0) return n - 1;
  return last_layer;
}

void check_layer_range(const FeedForwardNet& net, int first_layer, int last_layer) {
  const int n = static_cast<int>(net.layers.size());
  if (n == 0) throw std::invalid_argument("net has no layers");
  if (first_layer < 0 || last_layer >= n || first_layer > last_layer)
    throw std::invalid_argument("invalid layer range");
}

}  // namespace

FeedForwardNet make_net(std::vector<LayerSpec> layers, std::uint64_t seed) {
  if (layers.empty()) throw ConfigError("net needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    check_layer_spec(layers[l]);
    if (l > 0 && layers[l].in_dim != layers[l - 1].out_dim)
      throw ConfigError("layer dimensions do not chain");
  }
  FeedForwardNet net;
  net.layers = std::move(layers);
  Rng rng(seed);
  for (const LayerSpec& spec : net.layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(spec.in_dim + spec.out_dim));
    Eigen::MatrixXd w(spec.out_dim, spec.in_dim);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        w(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(spec.out_dim));
    net.weight_m.push_back(Eigen::MatrixXd::Zero(spec.out_dim, spec.in_dim));
    net.weight_v.push_back(Eigen::MatrixXd::Zero(spec.out_dim, spec.in_dim));
    net.bias_m.push_back(Eigen::VectorXd::Zero(spec.out_dim));
    net.bias_v.push_back(Eigen::VectorXd::Zero(spec.out_dim));
  }
  return net;
}

FeedForwardNet init_encoder(std::uint64_t seed, Eigen::Index feat_dim, Eigen::Index emb_dim) {
  if (feat_dim <= 0 || emb_dim <= 0)
    throw ConfigError("feat_dim and emb_dim must be positive");
  return make_net({{feat_dim, emb_dim, Activation::Tanh},
                   {emb_dim, feat_dim, Activation::Softmax}},
                  seed);
}

NetGradients zero_gradients(const FeedForwardNet& net) {
  NetGradients g;
  for (const LayerSpec& spec : net.layers) {
    g.weights.emplace_back(Eigen::MatrixXd::Zero(spec.out_dim, spec.in_dim));
    g.biases.emplace_back(Eigen::VectorXd::Zero(spec.out_dim));
  }
  return g;
}

void add_scaled(NetGradients& into, const NetGradients& from, double weight) {
  if (into.weights.size() != from.weights.size())
    throw std::invalid_argument("gradient layer count mismatch");
  for (std::size_t l = 0; l < into.weights.size(); ++l) {
    into.weights[l] += weight * from.weights[l];
    into.biases[l] += weight * from.biases[l];
  }
}

Eigen::VectorXd forward(const FeedForwardNet& net, const Eigen::VectorXd& input,
                        ForwardCache* cache, int first_layer, int last_layer) {
  last_layer = resolve_last_layer(net, last_layer);
  check_layer_range(net, first_layer, last_layer);
  if (input.size() != net.layers[first_layer].in_dim)
    throw std::invalid_argument("forward: input dimension mismatch");

  if (cache) {
    cache->first_layer = first_layer;
    cache->last_layer = last_layer;
    cache->pre.clear();
    cache->post.clear();
    cache->post.push_back(input);
  }
  Eigen::VectorXd x = input;
  for (int l = first_layer; l <= last_layer; ++l) {
    Eigen::VectorXd pre = net.weights[l] * x + net.biases[l];
    Eigen::VectorXd post;
    apply_activation(net.layers[l].activation, pre, post);
    if (net.layers[l].activation == Activation::Softmax) softmax_inplace(post);
    if (cache) {
      cache->pre.push_back(pre);
      cache->post.push_back(post);
    }
    x = std::move(post);
  }
  return x;
}

Eigen::VectorXd backward(const FeedForwardNet& net, const ForwardCache& cache,
                         const Eigen::VectorXd& output_grad, NetGradients& accum) {
  const int first = cache.first_layer;
  const int last = cache.last_layer;
  check_layer_range(net, first, last);
  const int covered = last - first + 1;
  if (static_cast<int>(cache.pre.size()) != covered ||
      static_cast<int>(cache.post.size()) != covered + 1)
    throw std::invalid_argument("backward: stale or mismatched cache");
  if (accum.weights.size() != net.layers.size())
    throw std::invalid_argument("backward: gradient accumulator shape mismatch");
  if (output_grad.size() != net.layers[last].out_dim)
    throw std::invalid_argument("backward: output gradient dimension mismatch");

  Eigen::VectorXd g = output_grad;
  for (int l = last; l >= first; --l) {
    const int k = l - first;
    if (cache.pre[k].size() != net.layers[l].out_dim ||
        cache.post[k].size() != net.layers[l].in_dim)
      throw std::invalid_argument("backward: stale or mismatched cache");
    const Eigen::VectorXd dz =
        activation_backward(net.layers[l].activation, cache.pre[k], cache.post[k + 1], g);
    accum.weights[l].noalias() += dz * cache.post[k].transpose();
    accum.biases[l] += dz;
    g.noalias() = net.weights[l].transpose() * dz;
  }
  return g;
}

Eigen::MatrixXd forward_batch(const FeedForwardNet& net, const Eigen::MatrixXd& inputs,
                              BatchCache* cache, int first_layer, int last_layer) {
  last_layer = resolve_last_layer(net, last_layer);
  check_layer_range(net, first_layer, last_layer);
  if (inputs.cols() != net.layers[first_layer].in_dim)
    throw std::invalid_argument("forward_batch: input dimension mismatch");

  if (cache) {
    cache->first_layer = first_layer;
    cache->last_layer = last_layer;
    cache->pre.clear();
    cache->post.clear();
    cache->post.push_back(inputs);
  }
  Eigen::MatrixXd x = inputs;
  for (int l = first_layer; l <= last_layer; ++l) {
    Eigen::MatrixXd pre = x * net.weights[l].transpose();
    pre.rowwise() += net.biases[l].transpose();
    Eigen::MatrixXd post;
    switch (net.layers[l].activation) {
      case Activation::Identity: post = pre; break;
      case Activation::Tanh: post = pre.array().tanh().matrix(); break;
      case Activation::Relu: post = pre.array().max(0.0).matrix(); break;
      case Activation::Softmax: {
        const Eigen::VectorXd row_max = pre.rowwise().maxCoeff();
        post = (pre.array().colwise() - row_max.array()).exp().matrix();
        const Eigen::VectorXd sums = post.rowwise().sum();
        post.array().colwise() /= sums.array();
        break;
      }
    }
    if (cache) {
      cache->pre.push_back(pre);
      cache->post.push_back(post);
    }
    x = std::move(post);
  }
  return x;
}

Eigen::MatrixXd backward_batch(const FeedForwardNet& net, const BatchCache& cache,
                               const Eigen::MatrixXd& output_grads, NetGradients& accum) {
  const int first = cache.first_layer;
  const int last = cache.last_layer;
  check_layer_range(net, first, last);
  const int covered = last - first + 1;
  if (static_cast<int>(cache.pre.size()) != covered ||
      static_cast<int>(cache.post.size()) != covered + 1)
    throw std::invalid_argument("backward_batch: stale or mismatched cache");
  if (output_grads.rows() != cache.post.front().rows() ||
      output_grads.cols() != net.layers[last].out_dim)
    throw std::invalid_argument("backward_batch: output gradient shape mismatch");

  Eigen::MatrixXd g = output_grads;
  for (int l = last; l >= first; --l) {
    const int k = l - first;
    Eigen::MatrixXd dz;
    switch (net.layers[l].activation) {
      case Activation::Identity: dz = g; break;
      case Activation::Tanh:
        dz = (g.array() * (1.0 - cache.post[k + 1].array().square())).matrix();
        break;
      case Activation::Relu:
        dz = (g.array() * (cache.pre[k].array() > 0.0).cast<double>()).matrix();
        break;
      case Activation::Softmax: {
        const Eigen::VectorXd dots =
            (g.array() * cache.post[k + 1].array()).rowwise().sum().matrix();
        dz = (cache.post[k + 1].array() * (g.array().colwise() - dots.array())).matrix();
        break;
      }
    }
    accum.weights[l].noalias() += dz.transpose() * cache.post[k];
    accum.biases[l] += dz.colwise().sum().transpose();
    g.noalias() = dz * net.weights[l];
  }
  return g;
}

void adam_step(FeedForwardNet& net, const NetGradients& grads, double lr) {
  if (lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (grads.weights.size() != net.layers.size())
    throw std::invalid_argument("adam_step: gradient shape mismatch");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (grads.weights[l].rows() != net.weights[l].rows() ||
        grads.weights[l].cols() != net.weights[l].cols() ||
        grads.biases[l].size() != net.biases[l].size())
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    if (!grads.weights[l].allFinite() || !grads.biases[l].allFinite())
      throw NumericalError("non-finite gradient in layer " + std::to_string(l));
  }

  net.step_count += 1;
  const double t = static_cast<double>(net.step_count);
  const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
  const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& wm = net.weight_m[l];
    auto& wv = net.weight_v[l];
    wm = kAdamBeta1 * wm + (1.0 - kAdamBeta1) * grads.weights[l];
    wv = (kAdamBeta2 * wv.array() +
          (1.0 - kAdamBeta2) * grads.weights[l].array().square())
             .matrix();
    net.weights[l].array() -=
        lr * (wm.array() / bc1) / ((wv.array() / bc2).sqrt() + kAdamEpsilon);

    auto& bm = net.bias_m[l];
    auto& bv = net.bias_v[l];
    bm = kAdamBeta1 * bm + (1.0 - kAdamBeta1) * grads.biases[l];
    bv = (kAdamBeta2 * bv.array() +
          (1.0 - kAdamBeta2) * grads.biases[l].array().square())
             .matrix();
    net.biases[l].array() -=
        lr * (bm.array() / bc1) / ((bv.array() / bc2).sqrt() + kAdamEpsilon);

    if (!net.weights[l].allFinite() || !net.biases[l].allFinite())
      throw NumericalError("non-finite parameter after optimizer step in layer " +
                           std::to_string(l));
  }
}

namespace {

constexpr char kCheckpointMagic[] = "carol-ffnet";
constexpr int kCheckpointVersion = 1;

void write_value(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

}  // namespace

void save_net(const FeedForwardNet& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "layers " << net.layers.size() << '\n';
  for (const LayerSpec& spec : net.layers)
    out << "layer " << spec.in_dim << ' ' << spec.out_dim << ' '
        << to_string(spec.activation) << '\n';
  out << "step_count " << net.step_count << '\n';
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    out << "weights " << l << '\n';
    const Eigen::MatrixXd& w = net.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        if (c) out << ' ';
        write_value(out, w(r, c));
      }
      out << '\n';
    }
    out << "biases " << l << '\n';
    for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) {
      if (i) out << ' ';
      write_value(out, net.biases[l](i));
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

FeedForwardNet load_net(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic)
    throw DataError("not a checkpoint file: " + path);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  std::string word;
  std::size_t n_layers = 0;
  if (!(in >> word >> n_layers) || word != "layers")
    throw DataError("malformed checkpoint: " + path);
  std::vector<LayerSpec> specs;
  for (std::size_t l = 0; l < n_layers; ++l) {
    LayerSpec spec;
    std::string act;
    if (!(in >> word >> spec.in_dim >> spec.out_dim >> act) || word != "layer")
      throw DataError("malformed checkpoint layer: " + path);
    spec.activation = parse_activation(act);
    specs.push_back(spec);
  }
  long step_count = 0;
  if (!(in >> word >> step_count) || word != "step_count")
    throw DataError("malformed checkpoint: " + path);

  FeedForwardNet net = make_net(specs, /*seed=*/0);
  net.step_count = step_count;
  for (std::size_t l = 0; l < n_layers; ++l) {
    std::size_t idx = 0;
    if (!(in >> word >> idx) || word != "weights" || idx != l)
      throw DataError("malformed checkpoint weights: " + path);
    Eigen::MatrixXd& w = net.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        if (!(in >> w(r, c))) throw DataError("truncated checkpoint: " + path);
    if (!(in >> word >> idx) || word != "biases" || idx != l)
      throw DataError("malformed checkpoint biases: " + path);
    for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
      if (!(in >> net.biases[l](i))) throw DataError("truncated checkpoint: " + path);
    if (!w.allFinite() || !net.biases[l].allFinite())
      throw DataError("non-finite parameter in checkpoint: " + path);
  }
  return net;
}

}  // namespace carol
