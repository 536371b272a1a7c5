#include "simhand/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "simhand/io.hpp"

namespace simhand {

namespace {

std::vector<int> layer_dims(const EncoderConfig& c) {
  std::vector<int> dims;
  dims.push_back(c.input_dim);
  for (int h : c.hidden) dims.push_back(h);
  dims.push_back(c.feature_dim);
  dims.push_back(c.projection_dim);
  return dims;
}

void validate_config(const EncoderConfig& c) {
  if (c.input_dim < 1) throw std::invalid_argument("input_dim must be positive");
  for (int h : c.hidden)
    if (h < 1) throw std::invalid_argument("hidden dims must be positive");
  if (c.feature_dim < 1) throw std::invalid_argument("feature_dim must be positive");
  if (c.projection_dim < 1) throw std::invalid_argument("projection_dim must be positive");
  if (c.projection_dim % 2 != 0)
    throw std::invalid_argument("projection_dim must be even");
}

}  // namespace

EncoderModel EncoderModel::random(const EncoderConfig& config, std::uint64_t seed) {
  validate_config(config);
  EncoderModel model;
  model.config = config;
  const std::vector<int> dims = layer_dims(config);
  Rng rng(derive_seed(seed, 0xe4c0));
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    const double bound = std::sqrt(6.0 / (in + out));  // Glorot uniform
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer;
    layer.weight.resize(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weight(r, c) = u(rng);
    layer.bias = Eigen::VectorXd::Zero(out);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

EncoderModel EncoderModel::identity(int dim) {
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument("identity encoder needs an even dim >= 2");
  EncoderModel model;
  model.config.input_dim = dim;
  model.config.hidden.clear();
  model.config.feature_dim = dim;
  model.config.projection_dim = dim;
  DenseLayer feature{Eigen::MatrixXd::Identity(dim, dim), Eigen::VectorXd::Zero(dim)};
  DenseLayer projection{Eigen::MatrixXd::Identity(dim, dim), Eigen::VectorXd::Zero(dim)};
  model.layers.push_back(std::move(feature));
  model.layers.push_back(std::move(projection));
  return model;
}

ForwardTape encoder_forward(const EncoderModel& model, const Eigen::MatrixXd& batch) {
  if (batch.cols() != model.config.input_dim)
    throw std::invalid_argument("batch width does not match encoder input_dim");
  ForwardTape tape;
  tape.inputs.reserve(model.layers.size() + 1);
  tape.inputs.push_back(batch);
  const int last_hidden = model.last_hidden();
  for (int l = 0; l < model.layer_count(); ++l) {
    const DenseLayer& layer = model.layers[l];
    Eigen::MatrixXd y =
        (tape.inputs.back() * layer.weight.transpose()).rowwise() + layer.bias.transpose();
    if (l <= last_hidden) y = y.array().tanh();
    tape.inputs.push_back(std::move(y));
  }
  return tape;
}

Gradients encoder_backward(const EncoderModel& model, const ForwardTape& tape,
                           const Eigen::MatrixXd& grad_output) {
  if (tape.inputs.size() != model.layers.size() + 1)
    throw std::invalid_argument("tape does not match model");
  Gradients grads;
  grads.layers.resize(model.layers.size());
  Eigen::MatrixXd delta = grad_output;
  const int last_hidden = model.last_hidden();
  for (int l = model.layer_count() - 1; l >= 0; --l) {
    const Eigen::MatrixXd& x = tape.inputs[l];
    if (l <= last_hidden) {
      // y = tanh(u): dL/du = dL/dy * (1 - y^2), with y stored on the tape.
      delta = delta.array() * (1.0 - tape.inputs[l + 1].array().square());
    }
    grads.layers[l].weight = delta.transpose() * x;
    grads.layers[l].bias = delta.colwise().sum().transpose();
    if (l > 0) delta = delta * model.layers[l].weight;
  }
  return grads;
}

SgdMomentum::SgdMomentum(double learning_rate, double momentum)
    : lr_(learning_rate), momentum_(momentum) {
  if (learning_rate < 0.0) throw std::invalid_argument("learning rate must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("momentum must be in [0,1)");
}

void SgdMomentum::step(EncoderModel& model, const Gradients& grads) {
  if (grads.layers.size() != model.layers.size())
    throw std::invalid_argument("gradient/model shape mismatch");
  if (velocity_.empty()) {
    velocity_.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      velocity_[l].weight = Eigen::MatrixXd::Zero(model.layers[l].weight.rows(),
                                                  model.layers[l].weight.cols());
      velocity_[l].bias = Eigen::VectorXd::Zero(model.layers[l].bias.size());
    }
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    velocity_[l].weight = momentum_ * velocity_[l].weight + grads.layers[l].weight;
    velocity_[l].bias = momentum_ * velocity_[l].bias + grads.layers[l].bias;
    model.layers[l].weight -= lr_ * velocity_[l].weight;
    model.layers[l].bias -= lr_ * velocity_[l].bias;
  }
}

namespace {
constexpr char kModelMagic[5] = "SIMM";
constexpr std::uint32_t kModelVersion = 1;
}  // namespace

void save_encoder(const EncoderModel& model, const std::filesystem::path& path) {
  BinaryWriter w(path);
  w.magic(kModelMagic);
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(model.config.input_dim));
  w.u32(static_cast<std::uint32_t>(model.config.hidden.size()));
  for (int h : model.config.hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(model.config.feature_dim));
  w.u32(static_cast<std::uint32_t>(model.config.projection_dim));
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const DenseLayer& layer : model.layers) {
    w.u32(static_cast<std::uint32_t>(layer.weight.rows()));
    w.u32(static_cast<std::uint32_t>(layer.weight.cols()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) w.f64(layer.weight(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) w.f64(layer.bias(r));
  }
  w.close();
}

EncoderModel load_encoder(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kModelMagic, "encoder model");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion)
    throw std::runtime_error("unsupported encoder model version " + std::to_string(version));
  EncoderModel model;
  model.config.input_dim = static_cast<int>(r.u32());
  const std::uint32_t n_hidden = r.u32();
  model.config.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i)
    model.config.hidden.push_back(static_cast<int>(r.u32()));
  model.config.feature_dim = static_cast<int>(r.u32());
  model.config.projection_dim = static_cast<int>(r.u32());
  const std::uint32_t n_layers = r.u32();
  if (n_layers != n_hidden + 2) throw std::runtime_error("corrupt encoder model header");
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    DenseLayer layer;
    layer.weight.resize(rows, cols);
    for (std::uint32_t rr = 0; rr < rows; ++rr)
      for (std::uint32_t cc = 0; cc < cols; ++cc) layer.weight(rr, cc) = r.f64();
    layer.bias.resize(rows);
    for (std::uint32_t rr = 0; rr < rows; ++rr) layer.bias(rr) = r.f64();
    model.layers.push_back(std::move(layer));
  }
  return model;
}

}  // namespace simhand
