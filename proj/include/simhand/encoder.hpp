#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "simhand/rng.hpp"

namespace simhand {

// Dense encoder + projection head. Hidden layers use tanh; the feature and
// projection layers stay linear so an identity-initialized single layer is an
// exact pass-through. Everything runs in double precision — the gradient and
// loss checks rely on it.
struct EncoderConfig {
  int input_dim = 64 * 64;
  std::vector<int> hidden{256, 128};
  int feature_dim = 64;
  int projection_dim = 32;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct EncoderModel {
  EncoderConfig config;
  std::vector<DenseLayer> layers;  // hidden..., feature, projection

  static EncoderModel random(const EncoderConfig& config, std::uint64_t seed);
  // Square pass-through model: one linear layer with identity weights.
  static EncoderModel identity(int dim);

  int layer_count() const { return static_cast<int>(layers.size()); }
  // Layers up to and including this index apply tanh.
  int last_hidden() const { return static_cast<int>(config.hidden.size()) - 1; }
};

// Activations kept for the backward pass. inputs[0] is the batch input,
// inputs[l+1] the output of layer l; back() is the projection output.
struct ForwardTape {
  std::vector<Eigen::MatrixXd> inputs;
  const Eigen::MatrixXd& output() const { return inputs.back(); }
  // Feature-layer output (input of the projection head).
  const Eigen::MatrixXd& features() const { return inputs[inputs.size() - 2]; }
};

ForwardTape encoder_forward(const EncoderModel& model, const Eigen::MatrixXd& batch);

struct Gradients {
  std::vector<DenseLayer> layers;  // same shapes as the model
};

// grad_output is d(loss)/d(projection output); returns parameter gradients.
Gradients encoder_backward(const EncoderModel& model, const ForwardTape& tape,
                           const Eigen::MatrixXd& grad_output);

class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum);
  void step(EncoderModel& model, const Gradients& grads);

 private:
  double lr_;
  double momentum_;
  std::vector<DenseLayer> velocity_;
};

void save_encoder(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_encoder(const std::filesystem::path& path);

}  // namespace simhand
