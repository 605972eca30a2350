#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dactd/common.hpp"

namespace dactd {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Feature table over a finite local-state space: row s is phi(s).
template <typename Scalar>
class FeatureMap {
public:
  explicit FeatureMap(MatrixX<Scalar> table) : table_(std::move(table)) {
    if (table_.rows() == 0 || table_.cols() == 0) throw ArgumentError("empty feature table");
  }

  /// One-hot features; full column rank and sup-norm exactly 1.
  static FeatureMap tabular(int n_states) {
    return FeatureMap(MatrixX<Scalar>::Identity(n_states, n_states));
  }

  int dim() const noexcept { return static_cast<int>(table_.cols()); }
  int n_states() const noexcept { return static_cast<int>(table_.rows()); }
  const MatrixX<Scalar>& table() const noexcept { return table_; }
  Scalar bound() const { return table_.cwiseAbs().maxCoeff(); }

  VectorX<Scalar> eval(int s) const {
    check(s);
    return table_.row(s).transpose();
  }

  /// dim x M matrix of features, one column per state.
  MatrixX<Scalar> batch(std::span<const int> states) const {
    MatrixX<Scalar> out(dim(), static_cast<Eigen::Index>(states.size()));
    for (std::size_t k = 0; k < states.size(); ++k) {
      check(states[k]);
      out.col(static_cast<Eigen::Index>(k)) = table_.row(states[k]).transpose();
    }
    return out;
  }

private:
  void check(int s) const {
    if (s < 0 || s >= n_states()) throw ArgumentError("local state " + std::to_string(s) + " out of range");
  }

  MatrixX<Scalar> table_;
};

/// V(s; v) = v . phi(s).
template <typename Scalar>
class LinearCritic {
public:
  explicit LinearCritic(FeatureMap<Scalar> features)
      : features_(std::move(features)), v_(VectorX<Scalar>::Zero(features_.dim())) {}

  const FeatureMap<Scalar>& features() const noexcept { return features_; }
  VectorX<Scalar>& params() noexcept { return v_; }
  const VectorX<Scalar>& params() const noexcept { return v_; }

  Scalar value(int s) const { return v_.dot(features_.eval(s)); }
  VectorX<Scalar> grad(int s) const { return features_.eval(s); }

  VectorX<Scalar> values(std::span<const int> states) const {
    return features_.batch(states).transpose() * v_;
  }
  /// sum_k w_k grad V(s_k).
  VectorX<Scalar> weighted_grad(std::span<const int> states, const VectorX<Scalar>& w) const {
    return features_.batch(states) * w;
  }

private:
  FeatureMap<Scalar> features_;
  VectorX<Scalar> v_;
};

/// Fully connected network with leaky-rectifier hidden layers and a linear
/// output layer. Parameters live in one flat vector, layer by layer: the
/// column-major weight matrix (out x in) followed by the bias.
template <typename Scalar>
class Mlp {
public:
  explicit Mlp(std::vector<int> sizes, Scalar leaky_slope = Scalar(0.3))
      : sizes_(std::move(sizes)), slope_(leaky_slope) {
    if (sizes_.size() < 2) throw ArgumentError("network needs input and output sizes");
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw ArgumentError("layer sizes must be positive");
      offsets_.push_back(n);
      n += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
    }
    params_ = VectorX<Scalar>::Zero(static_cast<Eigen::Index>(n));
  }

  const std::vector<int>& sizes() const noexcept { return sizes_; }
  Scalar leaky_slope() const noexcept { return slope_; }
  int n_inputs() const noexcept { return sizes_.front(); }
  int n_outputs() const noexcept { return sizes_.back(); }
  int n_layers() const noexcept { return static_cast<int>(sizes_.size()) - 1; }
  Eigen::Index n_params() const noexcept { return params_.size(); }

  VectorX<Scalar>& params() noexcept { return params_; }
  const VectorX<Scalar>& params() const noexcept { return params_; }

  /// Weights uniform in [-0.5, 0.5] / sqrt(fan_in); biases zero.
  void init_uniform(Rng& rng) {
    params_.setZero();
    for (int l = 0; l < n_layers(); ++l) {
      auto w = weights(l);
      const Scalar scale = Scalar(1) / std::sqrt(Scalar(sizes_[l]));
      for (Eigen::Index k = 0; k < w.size(); ++k)
        w.data()[k] = (Scalar(uniform01(rng)) - Scalar(0.5)) * scale;
    }
  }

  /// Outputs for a batch of inputs, one column per sample.
  MatrixX<Scalar> forward(const MatrixX<Scalar>& x) const {
    MatrixX<Scalar> a = x;
    for (int l = 0; l < n_layers(); ++l) {
      MatrixX<Scalar> z = (weights(l) * a).colwise() + bias(l);
      a = l + 1 < n_layers() ? activate(z) : z;
    }
    return a;
  }

  /// Gradient w.r.t. the parameters of sum(upstream .* forward(x)).
  VectorX<Scalar> backward(const MatrixX<Scalar>& x, const MatrixX<Scalar>& upstream) const {
    std::vector<MatrixX<Scalar>> pre;    // pre-activations per layer
    std::vector<MatrixX<Scalar>> post{x};  // layer inputs
    for (int l = 0; l < n_layers(); ++l) {
      pre.push_back((weights(l) * post.back()).colwise() + bias(l));
      if (l + 1 < n_layers()) post.push_back(activate(pre.back()));
    }
    VectorX<Scalar> grad(params_.size());
    MatrixX<Scalar> g = upstream;
    for (int l = n_layers() - 1; l >= 0; --l) {
      const auto rows = sizes_[l + 1];
      const auto cols = sizes_[l];
      Eigen::Map<MatrixX<Scalar>>(grad.data() + offsets_[l], rows, cols) = g * post[l].transpose();
      Eigen::Map<VectorX<Scalar>>(grad.data() + offsets_[l] + rows * cols, rows) = g.rowwise().sum();
      if (l > 0) {
        g = weights(l).transpose() * g;
        g.array() *= pre[l - 1].array().unaryExpr([s = slope_](Scalar v) { return v > 0 ? Scalar(1) : s; });
      }
    }
    return grad;
  }

private:
  Eigen::Map<MatrixX<Scalar>> weights(int l) {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
  }
  Eigen::Map<const MatrixX<Scalar>> weights(int l) const {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
  }
  Eigen::Map<const VectorX<Scalar>> bias(int l) const {
    return {params_.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]};
  }
  MatrixX<Scalar> activate(const MatrixX<Scalar>& z) const {
    return z.unaryExpr([s = slope_](Scalar v) { return v > 0 ? v : s * v; });
  }

  std::vector<int> sizes_;
  Scalar slope_;
  std::vector<std::size_t> offsets_;
  VectorX<Scalar> params_;
};

/// Hidden layer sizes plus the feature input and scalar output.
template <typename Scalar>
class MlpCritic {
public:
  MlpCritic(FeatureMap<Scalar> features, const std::vector<int>& hidden, Scalar leaky_slope = Scalar(0.3))
      : features_(std::move(features)), net_(layer_sizes(features_.dim(), hidden, 1), leaky_slope) {}

  const FeatureMap<Scalar>& features() const noexcept { return features_; }
  Mlp<Scalar>& net() noexcept { return net_; }
  const Mlp<Scalar>& net() const noexcept { return net_; }
  VectorX<Scalar>& params() noexcept { return net_.params(); }
  const VectorX<Scalar>& params() const noexcept { return net_.params(); }

  Scalar value(int s) const { return net_.forward(features_.eval(s))(0, 0); }
  VectorX<Scalar> grad(int s) const {
    return net_.backward(features_.eval(s), MatrixX<Scalar>::Ones(1, 1));
  }
  VectorX<Scalar> values(std::span<const int> states) const {
    return net_.forward(features_.batch(states)).row(0).transpose();
  }
  VectorX<Scalar> weighted_grad(std::span<const int> states, const VectorX<Scalar>& w) const {
    return net_.backward(features_.batch(states), w.transpose());
  }

  static std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
  }

private:
  FeatureMap<Scalar> features_;
  Mlp<Scalar> net_;
};

/// Inverse-CDF draw over indices in ascending order.
template <typename Scalar>
int sample_categorical(const VectorX<Scalar>& p, Rng& rng) {
  const Scalar u = Scalar(uniform01(rng));
  Scalar cdf = 0;
  const auto n = static_cast<int>(p.size());
  for (int a = 0; a + 1 < n; ++a) {
    cdf += p[a];
    if (u < cdf) return a;
  }
  return n - 1;
}

/// pi(a | s) = softmax(logits(phi(s)))_a over a finite local action set.
/// With no hidden layers the logits are linear (tabular for one-hot features).
template <typename Scalar>
class SoftmaxPolicy {
public:
  SoftmaxPolicy(FeatureMap<Scalar> features, const std::vector<int>& hidden, int n_actions,
                Scalar leaky_slope = Scalar(0.3))
      : features_(std::move(features)),
        net_(MlpCritic<Scalar>::layer_sizes(features_.dim(), hidden, n_actions), leaky_slope) {
    if (n_actions < 1) throw ArgumentError("policy needs at least one action");
  }

  const FeatureMap<Scalar>& features() const noexcept { return features_; }
  int n_actions() const noexcept { return net_.n_outputs(); }
  int n_states() const noexcept { return features_.n_states(); }
  Mlp<Scalar>& net() noexcept { return net_; }
  const Mlp<Scalar>& net() const noexcept { return net_; }
  VectorX<Scalar>& params() noexcept { return net_.params(); }
  const VectorX<Scalar>& params() const noexcept { return net_.params(); }

  VectorX<Scalar> logits(int s) const { return net_.forward(features_.eval(s)).col(0); }

  VectorX<Scalar> probabilities(int s) const {
    VectorX<Scalar> l = logits(s);
    const Scalar top = l.maxCoeff();
    VectorX<Scalar> e = (l.array() - top).exp().matrix();
    return e / e.sum();
  }

  /// Rows are local states, columns actions.
  MatrixX<Scalar> table() const {
    MatrixX<Scalar> out(n_states(), n_actions());
    for (int s = 0; s < n_states(); ++s) out.row(s) = probabilities(s).transpose();
    return out;
  }

  Scalar log_prob(int s, int a) const {
    check_action(a);
    VectorX<Scalar> l = logits(s);
    const Scalar top = l.maxCoeff();
    return l[a] - top - std::log((l.array() - top).exp().sum());
  }

  /// grad_theta log pi(a | s).
  VectorX<Scalar> score(int s, int a) const {
    check_action(a);
    VectorX<Scalar> upstream = -probabilities(s);
    upstream[a] += Scalar(1);
    return net_.backward(features_.eval(s), upstream);
  }

  /// Inverse-CDF draw over actions in ascending order.
  int sample(int s, Rng& rng) const { return sample_categorical(probabilities(s), rng); }

private:
  void check_action(int a) const {
    if (a < 0 || a >= n_actions()) throw ArgumentError("action " + std::to_string(a) + " outside the action set");
  }

  FeatureMap<Scalar> features_;
  Mlp<Scalar> net_;
};

/// Central finite differences of a scalar function of a parameter vector.
template <typename Scalar, typename F>
VectorX<Scalar> finite_difference_gradient(F&& f, VectorX<Scalar> params, Scalar step) {
  VectorX<Scalar> grad(params.size());
  for (Eigen::Index k = 0; k < params.size(); ++k) {
    const Scalar keep = params[k];
    params[k] = keep + step;
    const Scalar up = f(params);
    params[k] = keep - step;
    const Scalar down = f(params);
    params[k] = keep;
    grad[k] = (up - down) / (Scalar(2) * step);
  }
  return grad;
}

/// max|a - b| / max(max|a|, max|b|); zero when both vanish.
template <typename Scalar>
Scalar relative_error(const VectorX<Scalar>& analytic, const VectorX<Scalar>& numeric) {
  const Scalar scale = std::max(analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
  if (scale == Scalar(0)) return Scalar(0);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

// Checkpoints: "dactd-params <kind> <n_sizes> <sizes...>", then the count and
// one value per line at round-trip precision.

struct Checkpoint {
  std::string kind;
  std::vector<int> sizes;
  Eigen::VectorXd params;
};

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  out << "dactd-params " << ck.kind << ' ' << ck.sizes.size();
  for (int s : ck.sizes) out << ' ' << s;
  out << '\n' << ck.params.size() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index k = 0; k < ck.params.size(); ++k) out << ck.params[k] << '\n';
}

inline Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint ck;
  std::string magic;
  std::size_t n_sizes = 0;
  if (!(in >> magic >> ck.kind >> n_sizes) || magic != "dactd-params")
    throw ArgumentError("not a parameter checkpoint");
  ck.sizes.resize(n_sizes);
  for (auto& s : ck.sizes)
    if (!(in >> s)) throw ArgumentError("truncated checkpoint header");
  Eigen::Index count = 0;
  if (!(in >> count) || count < 0) throw ArgumentError("bad checkpoint parameter count");
  ck.params.resize(count);
  for (Eigen::Index k = 0; k < count; ++k)
    if (!(in >> ck.params[k])) throw ArgumentError("truncated checkpoint values");
  return ck;
}

inline Checkpoint checkpoint_of(const Mlp<double>& net) { return {"mlp", net.sizes(), net.params()}; }
inline Checkpoint checkpoint_of(const LinearCritic<double>& c) {
  return {"linear", {c.features().dim()}, c.params()};
}

}  // namespace dactd
