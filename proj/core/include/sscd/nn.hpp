#pragma once

#include <map>
#include <memory>
#include <string>

#include "sscd/nn_ops.hpp"
#include "sscd/rng.hpp"

namespace sscd::nn {

using ag::Var;

// Owns every trainable parameter and persistent buffer of one model, keyed by
// hierarchical name. Initialization draws a per-name rng stream, so parameter
// values do not depend on registration order.
template <class T>
class ParamStore {
public:
  explicit ParamStore(std::uint64_t init_seed = 0) : key_(init_seed) {}

  Var<T> create_conv_weight(const std::string& name, std::vector<int> shape,
                            double init_std = 0.02) {
    Tensor<T> t(std::move(shape));
    Rng rng = key_.with(name).rng();
    fill_truncated_normal(t, rng, init_std);
    return add(name, std::move(t));
  }

  Var<T> create_zeros(const std::string& name, std::vector<int> shape) {
    return add(name, Tensor<T>(std::move(shape)));
  }

  Var<T> create_ones(const std::string& name, std::vector<int> shape) {
    return add(name, Tensor<T>(std::move(shape), T{1}));
  }

  void register_buffer(const std::string& name, Tensor<T>* buffer) {
    if (buffers_.count(name)) throw std::invalid_argument("duplicate buffer " + name);
    buffers_[name] = buffer;
  }

  const std::map<std::string, Var<T>>& params() const { return params_; }
  const std::map<std::string, Tensor<T>*>& buffers() const { return buffers_; }

  Var<T> find(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter " + name);
    return it->second;
  }

  std::int64_t total_params() const {
    std::int64_t n = 0;
    for (const auto& [name, v] : params_) n += v->value.numel();
    return n;
  }

  std::int64_t count_params_with_prefix(const std::string& prefix) const {
    std::int64_t n = 0;
    for (const auto& [name, v] : params_)
      if (name.rfind(prefix, 0) == 0) n += v->value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, v] : params_) v->zero_grad();
  }

  void set_requires_grad(bool rg) {
    for (auto& [name, v] : params_) v->requires_grad = rg;
  }

  // Deep copy of all parameter values and buffers, for checkpoints/snapshots.
  std::map<std::string, Tensor<T>> snapshot() const {
    std::map<std::string, Tensor<T>> out;
    for (const auto& [name, v] : params_) out.emplace(name, v->value);
    for (const auto& [name, b] : buffers_) out.emplace(name, *b);
    return out;
  }

  void restore(const std::map<std::string, Tensor<T>>& snap) {
    for (auto& [name, v] : params_) {
      auto it = snap.find(name);
      if (it == snap.end()) throw std::out_of_range("snapshot missing " + name);
      if (!v->value.same_shape(it->second))
        throw std::invalid_argument("snapshot shape mismatch for " + name);
      v->value = it->second;
    }
    for (auto& [name, b] : buffers_) {
      auto it = snap.find(name);
      if (it == snap.end()) throw std::out_of_range("snapshot missing " + name);
      *b = it->second;
    }
  }

  // Copies values between two parameter subtrees (e.g. main -> aux decoder).
  void copy_subtree(const std::string& src_prefix, const std::string& dst_prefix) {
    for (auto& [name, v] : params_) {
      if (name.rfind(src_prefix, 0) != 0) continue;
      const std::string dst = dst_prefix + name.substr(src_prefix.size());
      find(dst)->value = v->value;
    }
  }

private:
  Var<T> add(const std::string& name, Tensor<T> t) {
    if (params_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    auto v = ag::make_leaf(std::move(t), true);
    params_.emplace(name, v);
    return v;
  }

  StreamKey key_;
  std::map<std::string, Var<T>> params_;
  std::map<std::string, Tensor<T>*> buffers_;
};

template <class T>
struct Conv2d {
  Var<T> w;
  Var<T> b;  // null when the conv feeds a batch norm
  ag::ConvGeom geom;

  Conv2d() = default;
  Conv2d(ParamStore<T>& ps, const std::string& name, int in_c, int out_c, int k,
         int stride, int pad, int dilation, bool bias) {
    w = ps.create_conv_weight(name + ".w", {out_c, in_c, k, k});
    if (bias) b = ps.create_zeros(name + ".b", {out_c});
    geom = ag::ConvGeom{stride, pad, dilation};
  }

  Var<T> operator()(const Var<T>& x) const { return ag::conv2d(x, w, b, geom); }
};

template <class T>
struct BatchNorm2d {
  Var<T> gamma;
  Var<T> beta;
  std::shared_ptr<ag::BatchNormState<T>> state;

  BatchNorm2d() = default;
  BatchNorm2d(ParamStore<T>& ps, const std::string& name, int channels) {
    gamma = ps.create_ones(name + ".gamma", {channels});
    beta = ps.create_zeros(name + ".beta", {channels});
    state = std::make_shared<ag::BatchNormState<T>>(channels);
    ps.register_buffer(name + ".running_mean", &state->running_mean);
    ps.register_buffer(name + ".running_var", &state->running_var);
  }

  Var<T> operator()(const Var<T>& x, bool training) const {
    return ag::batch_norm(x, gamma, beta, *state, training);
  }
};

// CBR_k: k x k conv (no bias) + batch norm + relu.
template <class T>
struct ConvBnRelu {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;

  ConvBnRelu() = default;
  ConvBnRelu(ParamStore<T>& ps, const std::string& name, int in_c, int out_c,
             int k, int stride = 1, int dilation = 1)
      : conv(ps, name + ".conv", in_c, out_c, k, stride,
             dilation * (k - 1) / 2, dilation, /*bias=*/false),
        bn(ps, name + ".bn", out_c) {}

  Var<T> operator()(const Var<T>& x, bool training) const {
    return ag::relu(bn(conv(x), training));
  }
};

}  // namespace sscd::nn
