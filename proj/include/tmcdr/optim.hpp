#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmcdr/error.hpp"
#include "tmcdr/linalg.hpp"

namespace tmcdr {

struct Segment {
  std::string name;
  std::size_t offset;
  std::size_t length;
  bool operator==(const Segment&) const = default;
};

/// Flat parameter vector with named, contiguous segments.
class FlatParams {
 public:
  FlatParams() = default;

  explicit FlatParams(Vector values) : values_(std::move(values)) {
    segments_.push_back({"all", 0, values_.size()});
  }

  FlatParams(Vector values, std::vector<Segment> segments)
      : values_(std::move(values)), segments_(std::move(segments)) {
    validate();
  }

  /// Builds zeroed parameters from (name, length) pairs laid out in order.
  static FlatParams zeros(const std::vector<std::pair<std::string, std::size_t>>& layout) {
    std::vector<Segment> segs;
    std::size_t off = 0;
    for (const auto& [name, len] : layout) {
      segs.push_back({name, off, len});
      off += len;
    }
    return FlatParams(Vector(off, 0.0), std::move(segs));
  }

  std::size_t size() const noexcept { return values_.size(); }
  Vector& values() noexcept { return values_; }
  const Vector& values() const noexcept { return values_; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }

  std::span<double> segment(std::string_view name) {
    const auto& s = find(name);
    return {values_.data() + s.offset, s.length};
  }
  std::span<const double> segment(std::string_view name) const {
    const auto& s = find(name);
    return {values_.data() + s.offset, s.length};
  }

  /// Same layout, different values.
  FlatParams with_values(Vector values) const {
    require_same_dim(values.size(), values_.size(), "FlatParams::with_values");
    FlatParams out = *this;
    out.values_ = std::move(values);
    return out;
  }

  bool operator==(const FlatParams&) const = default;

 private:
  const Segment& find(std::string_view name) const {
    for (const auto& s : segments_) {
      if (s.name == name) return s;
    }
    throw ArgumentError("FlatParams: no segment named '" + std::string(name) + "'");
  }

  void validate() const {
    std::size_t expect = 0;
    for (const auto& s : segments_) {
      if (s.offset != expect) throw ArgumentError("FlatParams: segments must be contiguous and ordered");
      expect += s.length;
    }
    if (expect != values_.size()) throw ArgumentError("FlatParams: segments do not cover the values");
  }

  Vector values_;
  std::vector<Segment> segments_;
};

inline FlatParams sgd_step(const FlatParams& params, std::span<const double> grad, double lr) {
  require_same_dim(params.size(), grad.size(), "sgd_step");
  if (lr < 0.0) throw ArgumentError("sgd_step: negative learning rate");
  FlatParams out = params;
  auto& v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * grad[i];
  return out;
}

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const AdamOptions&) const = default;
};

struct AdamState {
  std::size_t step = 0;
  Vector m;
  Vector v;
  AdamOptions options;

  AdamState() = default;
  AdamState(std::size_t n, AdamOptions opts) : m(n, 0.0), v(n, 0.0), options(opts) {}

  bool operator==(const AdamState&) const = default;
};

namespace detail {

inline void adam_update_coord(AdamState& s, double& p, double g, std::size_t i, double c1, double c2) {
  const auto& o = s.options;
  s.m[i] = o.beta1 * s.m[i] + (1.0 - o.beta1) * g;
  s.v[i] = o.beta2 * s.v[i] + (1.0 - o.beta2) * g * g;
  const double m_hat = s.m[i] / c1;
  const double v_hat = s.v[i] / c2;
  p -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
}

}  // namespace detail

/// Adam with bias correction. Returns the advanced state and updated params.
inline std::pair<AdamState, FlatParams> adam_step(AdamState state, FlatParams params,
                                                  std::span<const double> grad) {
  require_same_dim(params.size(), grad.size(), "adam_step");
  require_same_dim(state.m.size(), grad.size(), "adam_step");
  require_same_dim(state.v.size(), grad.size(), "adam_step");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.options.beta1, t);
  const double c2 = 1.0 - std::pow(state.options.beta2, t);
  auto& p = params.values();
  for (std::size_t i = 0; i < p.size(); ++i) detail::adam_update_coord(state, p[i], grad[i], i, c1, c2);
  return {std::move(state), std::move(params)};
}

/// Adam over the rows of a large table where only `rows` received gradient.
/// Moments of untouched rows are left alone; the step counter is shared.
inline void adam_step_rows(AdamState& state, std::span<double> params, std::span<const double> grad,
                           std::span<const std::size_t> rows, std::size_t row_width) {
  require_same_dim(params.size(), grad.size(), "adam_step_rows");
  require_same_dim(state.m.size(), params.size(), "adam_step_rows");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.options.beta1, t);
  const double c2 = 1.0 - std::pow(state.options.beta2, t);
  for (auto r : rows) {
    for (std::size_t j = r * row_width; j < (r + 1) * row_width; ++j) {
      detail::adam_update_coord(state, params[j], grad[j], j, c1, c2);
    }
  }
}

using ScalarFn = std::function<double(const FlatParams&)>;
using GradientFn = std::function<Vector(const FlatParams&)>;

/// Central-difference gradient of f at params.
inline Vector finite_diff_grad(const ScalarFn& f, const FlatParams& params, double eps = 1e-5) {
  if (!(eps > 0.0)) throw ArgumentError("finite_diff_grad: eps must be positive");
  Vector g(params.size());
  FlatParams probe = params;
  auto& x = probe.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f(probe);
    x[i] = orig - eps;
    const double fm = f(probe);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw OracleError("finite_diff_grad: non-finite function value at coordinate " + std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

/// H*vec approximated by a central difference of the gradient map along vec.
/// The step is taken along vec/|vec| and rescaled, so eps is an absolute step
/// length in parameter space regardless of |vec|.
inline Vector hessian_vector_product(const GradientFn& grad, const FlatParams& params,
                                     std::span<const double> vec, double eps = 1e-4) {
  require_same_dim(params.size(), vec.size(), "hessian_vector_product");
  if (!(eps > 0.0)) throw ArgumentError("hessian_vector_product: eps must be positive");
  const double scale = norm(vec);
  if (scale == 0.0) return Vector(vec.size(), 0.0);
  Vector plus = params.values(), minus = params.values();
  for (std::size_t i = 0; i < vec.size(); ++i) {
    const double step = eps * vec[i] / scale;
    plus[i] += step;
    minus[i] -= step;
  }
  const Vector gp = grad(params.with_values(std::move(plus)));
  const Vector gm = grad(params.with_values(std::move(minus)));
  require_same_dim(gp.size(), vec.size(), "hessian_vector_product");
  require_same_dim(gm.size(), vec.size(), "hessian_vector_product");
  if (!all_finite(gp) || !all_finite(gm)) throw OracleError("hessian_vector_product: non-finite gradient");
  Vector out(vec.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * (gp[i] - gm[i]) / (2.0 * eps);
  return out;
}

}  // namespace tmcdr
