#include "authid/learners/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "authid/digest.hpp"
#include "authid/error.hpp"
#include "authid/learners/probability.hpp"
#include "authid/simd/kernels.hpp"

namespace authid {

// --- configuration -------------------------------------------------------------

OptimizerSpec OptimizerSpec::adam(double learning_rate, double beta1, double beta2, double epsilon) {
  OptimizerSpec s;
  s.kind = Kind::adam;
  s.learning_rate = learning_rate;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

OptimizerSpec OptimizerSpec::sgd(double learning_rate, double momentum) {
  OptimizerSpec s;
  s.kind = Kind::sgd;
  s.learning_rate = learning_rate;
  s.momentum = momentum;
  return s;
}

void OptimizerSpec::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("optimizer: learning rate must be > 0");
  if (kind == Kind::adam) {
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("optimizer: beta1 must be in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("optimizer: beta2 must be in (0,1)");
    if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be > 0");
  } else if (!(momentum >= 0.0)) {
    throw ConfigError("optimizer: momentum must be >= 0");
  }
}

MlpConfig MlpConfig::base_default(std::size_t width, double dropout) {
  MlpConfig c;
  c.layers.push_back(LayerSpec::input());
  for (int i = 0; i < 8; ++i) c.layers.push_back(LayerSpec::dense(width));
  c.layers.push_back(LayerSpec::dropout(dropout));
  c.layers.push_back(LayerSpec::dense(width));
  c.layers.push_back(LayerSpec::dropout(dropout));
  c.layers.push_back(LayerSpec::dense(width));
  c.layers.push_back(LayerSpec::output());
  c.optimizer = OptimizerSpec::adam(0.01, 0.9, 0.999);
  return c;
}

MlpConfig MlpConfig::meta_default(std::size_t width, double dropout) {
  MlpConfig c;
  c.layers.push_back(LayerSpec::input());
  for (int i = 0; i < 8; ++i) c.layers.push_back(LayerSpec::dense(width));
  c.layers.push_back(LayerSpec::dropout(dropout));
  c.layers.push_back(LayerSpec::dense(width));
  c.layers.push_back(LayerSpec::dense(width));
  for (int i = 0; i < 3; ++i) {
    c.layers.push_back(LayerSpec::dropout(dropout));
    c.layers.push_back(LayerSpec::dense(width));
  }
  c.layers.push_back(LayerSpec::dropout(dropout));
  c.layers.push_back(LayerSpec::output());
  c.optimizer = OptimizerSpec::sgd(0.001, 0.0);
  c.epochs = kDefaultMetaEpochs;
  return c;
}

namespace {

void validate_layers(const std::vector<LayerSpec>& layers) {
  if (layers.size() < 2 || layers.front().kind != LayerKind::input || layers.back().kind != LayerKind::output)
    throw ConfigError("mlp: layer sequence must start with input and end with output");
  for (std::size_t i = 1; i + 1 < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kind == LayerKind::dense && l.width < 1) throw ConfigError("mlp: dense width must be >= 1");
    if (l.kind == LayerKind::dropout && !(l.dropout_rate > 0.0 && l.dropout_rate < 1.0))
      throw ConfigError("mlp: dropout rate must be in (0,1)");
    if (l.kind == LayerKind::input || l.kind == LayerKind::output)
      throw ConfigError("mlp: input/output layers may only appear at the ends");
  }
}

}  // namespace

void MlpConfig::validate() const {
  validate_layers(layers);
  optimizer.validate();
  if (batch_size < 1) throw ConfigError("mlp: batch size must be >= 1");
  if (epochs < 1) throw ConfigError("mlp: epochs must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("mlp: validation fraction must be in [0,1)");
}

void MlpConfig::encode(BinaryWriter& w) const {
  w.u64(layers.size());
  for (const auto& l : layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u64(l.width);
    w.f64(l.dropout_rate);
  }
  w.u8(static_cast<std::uint8_t>(optimizer.kind));
  w.f64(optimizer.learning_rate);
  w.f64(optimizer.beta1);
  w.f64(optimizer.beta2);
  w.f64(optimizer.epsilon);
  w.f64(optimizer.momentum);
  w.u64(batch_size);
  w.u64(epochs);
  w.u64(patience);
  w.f64(validation_fraction);
  w.u64(seed);
}

MlpConfig MlpConfig::decode(BinaryReader& r) {
  MlpConfig c;
  c.layers.resize(r.u64());
  for (auto& l : c.layers) {
    l.kind = static_cast<LayerKind>(r.u8());
    l.width = r.u64();
    l.dropout_rate = r.f64();
  }
  c.optimizer.kind = static_cast<OptimizerSpec::Kind>(r.u8());
  c.optimizer.learning_rate = r.f64();
  c.optimizer.beta1 = r.f64();
  c.optimizer.beta2 = r.f64();
  c.optimizer.epsilon = r.f64();
  c.optimizer.momentum = r.f64();
  c.batch_size = r.u64();
  c.epochs = r.u64();
  c.patience = r.u64();
  c.validation_fraction = r.f64();
  c.seed = r.u64();
  return c;
}

std::uint64_t MlpConfig::digest() const {
  BinaryWriter w;
  encode(w);
  return Digest{}.update(w.bytes()).value();
}

// --- optimizer -------------------------------------------------------------------

Optimizer::Optimizer(const OptimizerSpec& spec, std::size_t n_params) : spec_(spec), m_(n_params, 0.0) {
  spec_.validate();
  if (spec_.kind == OptimizerSpec::Kind::adam) v_.assign(n_params, 0.0);
}

void Optimizer::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double lr = spec_.learning_rate;
  if (spec_.kind == OptimizerSpec::Kind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = spec_.momentum * m_[i] - lr * grad[i];
      params[i] += m_[i];
    }
    return;
  }
  const double b1 = spec_.beta1, b2 = spec_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + spec_.epsilon);
  }
}

// --- network ---------------------------------------------------------------------

Mlp::Mlp(std::vector<LayerSpec> layers, std::size_t input_dim, std::size_t n_classes)
    : specs_(std::move(layers)), input_dim_(input_dim), n_classes_(n_classes) {
  validate_layers(specs_);
  if (input_dim_ < 1) throw ConfigError("mlp: input dimension must be >= 1");
  if (n_classes_ < 2) throw ConfigError("mlp: at least 2 classes are required");
  std::size_t width = input_dim_;
  std::size_t offset = 0;
  for (std::size_t i = 1; i < specs_.size(); ++i) {
    const auto& s = specs_[i];
    Layer l{s.kind, width, width, s.dropout_rate, offset};
    if (s.kind == LayerKind::dense || s.kind == LayerKind::output) {
      l.out = s.kind == LayerKind::dense ? s.width : n_classes_;
      offset += l.out * l.in + l.out;
    }
    layers_.push_back(l);
    width = l.out;
  }
  params_.assign(offset, 0.0);
}

void Mlp::initialize(Rng& rng) {
  for (const auto& l : layers_) {
    if (l.kind == LayerKind::dropout) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in));
    for (std::size_t k = 0; k < l.in * l.out; ++k) params_[l.offset + k] = rng.uniform(-limit, limit);
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(l.offset + l.in * l.out), l.out, 0.0);
  }
}

std::vector<double> Mlp::logits(std::span<const double> x) const {
  if (x.size() != input_dim_) throw DimensionError(input_dim_, x.size());
  std::vector<double> cur(x.begin(), x.end()), next;
  for (const auto& l : layers_) {
    if (l.kind == LayerKind::dropout) continue;
    next.resize(l.out);
    const double* w = params_.data() + l.offset;
    const double* b = w + l.in * l.out;
    for (std::size_t o = 0; o < l.out; ++o) {
      double z = simd::dot(w + o * l.in, cur.data(), l.in) + b[o];
      next[o] = (l.kind == LayerKind::dense && z < 0.0) ? 0.0 : z;
    }
    cur.swap(next);
  }
  return cur;
}

std::vector<double> Mlp::predict_proba(std::span<const double> x) const { return softmax(logits(x)); }

double Mlp::loss_and_gradient(const FeatureMatrix& x, std::span<const std::size_t> labels,
                              std::span<const std::size_t> rows, std::span<double> grad,
                              std::optional<std::uint64_t> dropout_seed) const {
  if (x.cols() != input_dim_) throw DimensionError(input_dim_, x.cols());
  if (grad.size() != params_.size()) throw Error("mlp: gradient buffer has the wrong size");
  std::fill(grad.begin(), grad.end(), 0.0);
  if (rows.empty()) return 0.0;

  const std::size_t n_layers = layers_.size();
  // acts[i] is the input of layer i; acts[n_layers] holds the logits.
  std::vector<std::vector<double>> acts(n_layers + 1);
  acts[0].resize(input_dim_);
  for (std::size_t i = 0; i < n_layers; ++i) acts[i + 1].resize(layers_[i].out);
  std::vector<std::vector<double>> masks(n_layers);
  std::vector<double> delta, delta_in;
  std::optional<Rng> mask_rng;
  if (dropout_seed) mask_rng.emplace(*dropout_seed);

  const double inv_batch = 1.0 / static_cast<double>(rows.size());
  double total_loss = 0.0;

  for (std::size_t row : rows) {
    auto xr = x.row(row);
    std::copy(xr.begin(), xr.end(), acts[0].begin());
    for (std::size_t i = 0; i < n_layers; ++i) {
      const auto& l = layers_[i];
      const auto& in = acts[i];
      auto& out = acts[i + 1];
      if (l.kind == LayerKind::dropout) {
        auto& mask = masks[i];
        mask.assign(l.in, 1.0);
        if (mask_rng) {
          const double keep_scale = 1.0 / (1.0 - l.rate);
          for (auto& m : mask) m = mask_rng->bernoulli(l.rate) ? 0.0 : keep_scale;
        }
        for (std::size_t k = 0; k < l.in; ++k) out[k] = in[k] * mask[k];
        continue;
      }
      const double* w = params_.data() + l.offset;
      const double* b = w + l.in * l.out;
      for (std::size_t o = 0; o < l.out; ++o) {
        double z = simd::dot(w + o * l.in, in.data(), l.in) + b[o];
        out[o] = (l.kind == LayerKind::dense && z < 0.0) ? 0.0 : z;
      }
    }

    const std::size_t y = labels[row];
    auto p = softmax(acts[n_layers]);
    total_loss += cross_entropy(p, y);
    // d/dz of -log(p_y + floor) = (p_y / (p_y + floor)) * (p - onehot(y))
    const double scale = p[y] / (p[y] + kCrossEntropyFloor) * inv_batch;
    delta.assign(p.begin(), p.end());
    delta[y] -= 1.0;
    for (auto& d : delta) d *= scale;

    for (std::size_t i = n_layers; i-- > 0;) {
      const auto& l = layers_[i];
      const bool need_input_grad = i > 0;
      if (l.kind == LayerKind::dropout) {
        for (std::size_t k = 0; k < l.in; ++k) delta[k] *= masks[i][k];
        continue;
      }
      const auto& in = acts[i];
      if (l.kind == LayerKind::dense) {
        const auto& out = acts[i + 1];
        for (std::size_t o = 0; o < l.out; ++o)
          if (out[o] <= 0.0) delta[o] = 0.0;
      }
      const double* w = params_.data() + l.offset;
      double* gw = grad.data() + l.offset;
      double* gb = gw + l.in * l.out;
      if (need_input_grad) delta_in.assign(l.in, 0.0);
      for (std::size_t o = 0; o < l.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        simd::axpy(d, in.data(), gw + o * l.in, l.in);
        gb[o] += d;
        if (need_input_grad) simd::axpy(d, w + o * l.in, delta_in.data(), l.in);
      }
      if (need_input_grad) delta.swap(delta_in);
    }
  }
  return total_loss * inv_batch;
}

double Mlp::mean_loss(const FeatureMatrix& x, std::span<const std::size_t> labels,
                      std::span<const std::size_t> rows) const {
  if (rows.empty()) return 0.0;
  double total = 0.0;
  for (auto r : rows) total += cross_entropy(predict_proba(x.row(r)), labels[r]);
  return total / static_cast<double>(rows.size());
}

void Mlp::encode(BinaryWriter& w) const {
  w.u64(specs_.size());
  for (const auto& s : specs_) {
    w.u8(static_cast<std::uint8_t>(s.kind));
    w.u64(s.width);
    w.f64(s.dropout_rate);
  }
  w.u64(input_dim_);
  w.u64(n_classes_);
  w.f64s(params_);
}

Mlp Mlp::decode(BinaryReader& r) {
  std::vector<LayerSpec> specs(r.u64());
  for (auto& s : specs) {
    s.kind = static_cast<LayerKind>(r.u8());
    s.width = r.u64();
    s.dropout_rate = r.f64();
  }
  const std::size_t input_dim = r.u64();
  const std::size_t n_classes = r.u64();
  Mlp net;
  try {
    net = Mlp(std::move(specs), input_dim, n_classes);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid stored network: ") + e.what());
  }
  auto params = r.f64s();
  if (params.size() != net.params_.size()) throw FormatError("stored network has the wrong parameter count");
  net.params_ = std::move(params);
  return net;
}

// --- training --------------------------------------------------------------------

TrainedMlp train_mlp(const FeatureMatrix& x, std::span<const std::size_t> labels, std::size_t n_classes,
                     const MlpConfig& config) {
  config.validate();
  if (x.rows() == 0) throw Error("mlp: empty training set");
  if (labels.size() != x.rows()) throw Error("mlp: label count does not match sample count");
  for (auto y : labels)
    if (y >= n_classes) throw Error("mlp: label index out of range");

  TrainedMlp result{Mlp(config.layers, x.cols(), n_classes), {}};
  Mlp& net = result.net;
  Rng init_rng(derive_seed(config.seed, 1));
  net.initialize(init_rng);

  // Stratified validation hold-out.
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  Rng split_rng(derive_seed(config.seed, 2));
  std::vector<std::size_t> train_rows, val_rows;
  for (auto& members : by_class) {
    split_rng.shuffle(std::span<std::size_t>(members));
    std::size_t n_val = 0;
    if (members.size() >= 2) {
      n_val = static_cast<std::size_t>(
          std::floor(config.validation_fraction * static_cast<double>(members.size()) + 0.5));
      n_val = std::min(n_val, members.size() - 1);
    }
    val_rows.insert(val_rows.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_rows.insert(train_rows.end(), members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(val_rows.begin(), val_rows.end());
  result.summary.validation_size = val_rows.size();

  Optimizer optimizer(config.optimizer, net.parameters().size());
  std::vector<double> grad(net.parameters().size());
  std::vector<double> best_params(net.parameters().begin(), net.parameters().end());
  double best_val = std::numeric_limits<double>::infinity();
  Rng order_rng(derive_seed(config.seed, 3));

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(train_rows));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train_rows.size(); start += config.batch_size) {
      std::size_t end = std::min(train_rows.size(), start + config.batch_size);
      std::span<const std::size_t> batch(train_rows.data() + start, end - start);
      double loss = net.loss_and_gradient(x, labels, batch, grad, order_rng.next_u64());
      if (!std::isfinite(loss)) throw DivergenceError(static_cast<int>(epoch));
      epoch_loss += loss * static_cast<double>(batch.size());
      optimizer.step(net.parameters(), grad);
    }
    result.summary.final_training_loss = epoch_loss / static_cast<double>(train_rows.size());
    result.summary.epochs_run = epoch;

    if (val_rows.empty()) continue;
    double val = net.mean_loss(x, labels, val_rows);
    if (!std::isfinite(val)) throw DivergenceError(static_cast<int>(epoch));
    if (val < best_val) {
      best_val = val;
      result.summary.best_epoch = epoch;
      std::copy(net.parameters().begin(), net.parameters().end(), best_params.begin());
    } else if (epoch - result.summary.best_epoch >= config.patience) {
      break;
    }
  }

  if (val_rows.empty()) {
    result.summary.best_epoch = result.summary.epochs_run;
    result.summary.best_validation_loss = std::numeric_limits<double>::quiet_NaN();
    result.summary.validation_accuracy = std::numeric_limits<double>::quiet_NaN();
  } else {
    std::copy(best_params.begin(), best_params.end(), net.parameters().begin());
    result.summary.best_validation_loss = best_val;
    std::size_t correct = 0;
    for (auto r : val_rows) correct += argmax(net.predict_proba(x.row(r))) == labels[r];
    result.summary.validation_accuracy = static_cast<double>(correct) / static_cast<double>(val_rows.size());
  }
  return result;
}

}  // namespace authid
