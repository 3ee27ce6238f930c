#pragma once

// Fully connected ReLU network with softmax output, trained by mini-batch
// backpropagation on categorical cross-entropy.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "authid/binary_io.hpp"
#include "authid/matrix.hpp"
#include "authid/rng.hpp"

namespace authid {

enum class LayerKind : std::uint8_t { input, dense, dropout, output };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t width = 0;     // dense only
  double dropout_rate = 0.0; // dropout only

  static LayerSpec input() { return {LayerKind::input, 0, 0.0}; }
  static LayerSpec dense(std::size_t width) { return {LayerKind::dense, width, 0.0}; }
  static LayerSpec dropout(double rate) { return {LayerKind::dropout, 0, rate}; }
  static LayerSpec output() { return {LayerKind::output, 0, 0.0}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct OptimizerSpec {
  enum class Kind : std::uint8_t { adam, sgd };

  Kind kind = Kind::adam;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  double momentum = 0.0;

  static OptimizerSpec adam(double learning_rate = 0.01, double beta1 = 0.9, double beta2 = 0.999,
                            double epsilon = 1e-7);
  static OptimizerSpec sgd(double learning_rate = 0.001, double momentum = 0.0);
  void validate() const;

  friend bool operator==(const OptimizerSpec&, const OptimizerSpec&) = default;
};

inline constexpr std::size_t kDefaultHiddenWidth = 128;
inline constexpr double kDefaultDropoutRate = 0.25;
inline constexpr std::size_t kDefaultMetaEpochs = 300;

struct MlpConfig {
  std::vector<LayerSpec> layers;
  OptimizerSpec optimizer;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::size_t patience = 10;           // epochs without validation improvement
  double validation_fraction = 0.1;    // stratified hold-out for early stopping
  std::uint64_t seed = 0;

  // input, 8 x dense, dropout, dense, dropout, dense, output; Adam(0.01).
  static MlpConfig base_default(std::size_t width = kDefaultHiddenWidth, double dropout = kDefaultDropoutRate);
  // input, 8 x dense, dropout, 2 x dense, dropout, dense, dropout, dense,
  // dropout, dense, dropout, output; SGD(0.001, momentum 0); 300 epochs.
  static MlpConfig meta_default(std::size_t width = kDefaultHiddenWidth, double dropout = kDefaultDropoutRate);

  void validate() const;
  std::uint64_t digest() const;
  void encode(BinaryWriter& w) const;
  static MlpConfig decode(BinaryReader& r);
};

// Optimizer state for one flat parameter vector.
class Optimizer {
 public:
  Optimizer(const OptimizerSpec& spec, std::size_t n_params);
  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const noexcept { return t_; }

 private:
  OptimizerSpec spec_;
  std::vector<double> m_;  // first moment, or velocity for SGD
  std::vector<double> v_;
  std::size_t t_ = 0;
};

class Mlp {
 public:
  Mlp() = default;
  // All parameters start at zero. Throws ConfigError on a malformed layer list.
  Mlp(std::vector<LayerSpec> layers, std::size_t input_dim, std::size_t n_classes);

  // Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights, zero biases.
  void initialize(Rng& rng);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t n_classes() const noexcept { return n_classes_; }
  const std::vector<LayerSpec>& layers() const noexcept { return specs_; }

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  // Output-layer pre-activations (dropout inactive).
  std::vector<double> logits(std::span<const double> x) const;
  std::vector<double> predict_proba(std::span<const double> x) const;

  // Mean cross-entropy over `rows`; `grad` receives the matching mean
  // gradient. Dropout is active iff `dropout_seed` is set, and a given seed
  // always draws the same masks.
  double loss_and_gradient(const FeatureMatrix& x, std::span<const std::size_t> labels,
                           std::span<const std::size_t> rows, std::span<double> grad,
                           std::optional<std::uint64_t> dropout_seed) const;

  double mean_loss(const FeatureMatrix& x, std::span<const std::size_t> labels,
                   std::span<const std::size_t> rows) const;

  void encode(BinaryWriter& w) const;
  static Mlp decode(BinaryReader& r);

 private:
  struct Layer {
    LayerKind kind;
    std::size_t in = 0;
    std::size_t out = 0;
    double rate = 0.0;
    std::size_t offset = 0;  // weights (out x in, row-major) then biases (out)
  };

  std::vector<LayerSpec> specs_;
  std::vector<Layer> layers_;  // input layer omitted
  std::size_t input_dim_ = 0;
  std::size_t n_classes_ = 0;
  std::vector<double> params_;
};

struct MlpTrainingSummary {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_validation_loss = 0.0;  // NaN when no validation split was possible
  double final_training_loss = 0.0;
  std::size_t validation_size = 0;
  double validation_accuracy = 0.0;   // at the retained weights; NaN without a split
};

struct TrainedMlp {
  Mlp net;
  MlpTrainingSummary summary;
};

// Throws DivergenceError if a training loss becomes non-finite, ConfigError on
// an invalid config, Error on empty data or out-of-range labels.
TrainedMlp train_mlp(const FeatureMatrix& x, std::span<const std::size_t> labels, std::size_t n_classes,
                     const MlpConfig& config);

}  // namespace authid
