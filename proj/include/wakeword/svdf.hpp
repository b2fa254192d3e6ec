/* Copyright 2026 The Wakeword Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wakeword/common.hpp"
#include "wakeword/features.hpp"
#include "wakeword/matrix.hpp"
#include "wakeword/rng.hpp"
#include "wakeword/tokens.hpp"

namespace wakeword {

// One SVDF layer: per node, a rank-1 factorization into a feature filter
// over the current input frame and a time filter over the node's last M
// feature-filter outputs (causal, zero-padded before the first frame).
template <class T>
struct SvdfLayerParams {
  Matrix<T> feature_filters;  // N x F
  Matrix<T> time_filters;     // N x M
  std::vector<T> bias;        // N

  int nodes() const { return static_cast<int>(feature_filters.rows()); }
  int input_dim() const { return static_cast<int>(feature_filters.cols()); }
  int memory() const { return static_cast<int>(time_filters.cols()); }
};

template <class T>
struct ModelParams {
  std::vector<SvdfLayerParams<T>> layers;
  Matrix<T> output_weights;  // n_tokens x N_last
  std::vector<T> output_bias;
  FeatureConfig feature_config;
  std::vector<std::string> token_inventory = wakeword::token_inventory();

  int input_dim() const {
    return layers.empty() ? 0 : layers.front().input_dim();
  }
  int num_classes() const { return static_cast<int>(output_weights.rows()); }

  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.layers.reserve(layers.size());
    for (const auto& l : layers) {
      SvdfLayerParams<U> lu;
      lu.feature_filters = l.feature_filters.template cast<U>();
      lu.time_filters = l.time_filters.template cast<U>();
      lu.bias.assign(l.bias.begin(), l.bias.end());
      out.layers.push_back(std::move(lu));
    }
    out.output_weights = output_weights.template cast<U>();
    out.output_bias.assign(output_bias.begin(), output_bias.end());
    out.feature_config = feature_config;
    out.token_inventory = token_inventory;
    return out;
  }
};

// All parameter tensors in their declared (checkpoint) order.
template <class T>
std::vector<std::span<T>> tensor_views(ModelParams<T>& p) {
  std::vector<std::span<T>> v;
  for (auto& l : p.layers) {
    v.emplace_back(l.feature_filters.data());
    v.emplace_back(l.time_filters.data());
    v.emplace_back(l.bias);
  }
  v.emplace_back(p.output_weights.data());
  v.emplace_back(p.output_bias);
  return v;
}

template <class T>
std::vector<std::span<const T>> tensor_views(const ModelParams<T>& p) {
  std::vector<std::span<const T>> v;
  for (const auto& l : p.layers) {
    v.emplace_back(l.feature_filters.data());
    v.emplace_back(l.time_filters.data());
    v.emplace_back(l.bias);
  }
  v.emplace_back(p.output_weights.data());
  v.emplace_back(p.output_bias);
  return v;
}

template <class T>
size_t param_count(const ModelParams<T>& p) {
  size_t n = 0;
  for (auto s : tensor_views(p)) n += s.size();
  return n;
}

template <class T>
ModelParams<T> zeros_like(const ModelParams<T>& p) {
  ModelParams<T> z = p;
  for (auto s : tensor_views(z))
    for (auto& x : s) x = T(0);
  return z;
}

struct SvdfArch {
  int num_layers = 3;
  int nodes = 32;
  int memory = 4;
};

template <class T>
void validate_dims(const ModelParams<T>& p) {
  check_arg(!p.layers.empty(), "model has no layers");
  check_arg(p.token_inventory.size() ==
                static_cast<size_t>(p.output_weights.rows()),
            "output rows must match token inventory");
  int dim = p.feature_config.num_mels;
  for (size_t i = 0; i < p.layers.size(); ++i) {
    const auto& l = p.layers[i];
    if (l.input_dim() != dim)
      throw Error(ErrorKind::kDimMismatch,
                  "layer " + std::to_string(i) + ": input dim " +
                      std::to_string(l.input_dim()) + ", expected " +
                      std::to_string(dim));
    if (l.memory() < 1 || l.nodes() < 1 ||
        l.time_filters.rows() != l.feature_filters.rows() ||
        l.bias.size() != static_cast<size_t>(l.nodes()))
      throw Error(ErrorKind::kDimMismatch,
                  "layer " + std::to_string(i) + ": inconsistent shapes");
    dim = l.nodes();
  }
  if (static_cast<int>(p.output_weights.cols()) != dim)
    throw Error(ErrorKind::kDimMismatch,
                "output layer expects " +
                    std::to_string(p.output_weights.cols()) +
                    " inputs, last layer emits " + std::to_string(dim));
  check_arg(p.output_bias.size() == static_cast<size_t>(p.output_weights.rows()),
            "output bias size");
}

template <class T = double>
ModelParams<T> init_model(const SvdfArch& arch, const FeatureConfig& fcfg,
                          uint64_t seed) {
  check_arg(arch.num_layers >= 1 && arch.nodes >= 1 && arch.memory >= 1,
            "architecture dims must be positive");
  Rng rng(derive_seed(seed, "model_init"));
  ModelParams<T> p;
  p.feature_config = fcfg;
  int dim = fcfg.num_mels;
  for (int i = 0; i < arch.num_layers; ++i) {
    SvdfLayerParams<T> l;
    l.feature_filters = Matrix<T>(arch.nodes, dim);
    double a = std::sqrt(6.0 / (dim + arch.nodes));
    for (auto& w : l.feature_filters.data())
      w = static_cast<T>(rng.uniform(-a, a));
    l.time_filters = Matrix<T>(arch.nodes, arch.memory);
    double b = 1.0 / std::sqrt(static_cast<double>(arch.memory));
    for (auto& w : l.time_filters.data())
      w = static_cast<T>(rng.uniform(-b, b));
    l.bias.assign(arch.nodes, T(0));
    p.layers.push_back(std::move(l));
    dim = arch.nodes;
  }
  p.output_weights = Matrix<T>(kNumTokens, dim);
  double c = std::sqrt(6.0 / (dim + kNumTokens));
  for (auto& w : p.output_weights.data())
    w = static_cast<T>(rng.uniform(-c, c));
  p.output_bias.assign(kNumTokens, T(0));
  validate_dims(p);
  return p;
}

namespace detail {

template <class T>
void log_softmax_row(T* x, size_t n) {
  T m = x[0];
  for (size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  T acc = T(0);
  for (size_t i = 0; i < n; ++i) acc += std::exp(x[i] - m);
  T lse = m + std::log(acc);
  for (size_t i = 0; i < n; ++i) x[i] -= lse;
}

}  // namespace detail

// Everything the backward pass needs, captured during forward.
template <class T>
struct ForwardCache {
  std::vector<Matrix<T>> inputs;        // per layer: T x F input
  std::vector<Matrix<T>> filter_outs;   // per layer: T x N feature-filter outs
  std::vector<Matrix<T>> preacts;       // per layer: T x N pre-ReLU
  Matrix<T> hidden_last;                // T x N_last post-ReLU
  Matrix<T> probs;                      // T x C softmax probabilities
};

// Runs the encoder over a whole utterance. Per layer, per node n, frame t:
//   a[t,n] = feature_filter_n . input[t]
//   h[t,n] = relu( sum_m time_filter_n[m] * a[t-m,n] + bias_n ),  a[<0] = 0
// then logits = W h + b and a log-softmax per frame.
template <class T>
Matrix<T> forward(const ModelParams<T>& params, const Matrix<T>& feats,
                  ForwardCache<T>* cache = nullptr) {
  validate_dims(params);
  check_arg(feats.rows() >= 1, "forward needs at least one frame");
  if (static_cast<int>(feats.cols()) != params.input_dim())
    throw Error(ErrorKind::kDimMismatch,
                "layer 0: features have dim " + std::to_string(feats.cols()) +
                    ", model expects " + std::to_string(params.input_dim()));
  const size_t t_max = feats.rows();
  if (cache) {
    cache->inputs.clear();
    cache->filter_outs.clear();
    cache->preacts.clear();
  }

  Matrix<T> x = feats;
  for (const auto& layer : params.layers) {
    const int n_nodes = layer.nodes();
    const int f_dim = layer.input_dim();
    const int mem = layer.memory();
    Matrix<T> a(t_max, n_nodes);
    for (size_t t = 0; t < t_max; ++t) {
      const T* xt = x.row(t);
      T* at = a.row(t);
      for (int n = 0; n < n_nodes; ++n) {
        const T* f = layer.feature_filters.row(n);
        T acc = T(0);
        for (int k = 0; k < f_dim; ++k) acc += f[k] * xt[k];
        at[n] = acc;
      }
    }
    Matrix<T> z(t_max, n_nodes);
    for (size_t t = 0; t < t_max; ++t) {
      T* zt = z.row(t);
      for (int n = 0; n < n_nodes; ++n) {
        const T* tf = layer.time_filters.row(n);
        T acc = layer.bias[n];
        for (int m = 0; m < mem; ++m) {
          if (static_cast<size_t>(m) > t) break;
          acc += tf[m] * a(t - m, n);
        }
        zt[n] = acc;
      }
    }
    Matrix<T> h(t_max, n_nodes);
    for (size_t i = 0; i < z.size(); ++i)
      h.data()[i] = z.data()[i] > T(0) ? z.data()[i] : T(0);
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->filter_outs.push_back(std::move(a));
      cache->preacts.push_back(std::move(z));
    }
    x = std::move(h);
  }

  const int n_classes = params.num_classes();
  const int n_last = static_cast<int>(x.cols());
  Matrix<T> logprobs(t_max, n_classes);
  for (size_t t = 0; t < t_max; ++t) {
    const T* ht = x.row(t);
    T* out = logprobs.row(t);
    for (int c = 0; c < n_classes; ++c) {
      const T* w = params.output_weights.row(c);
      T acc = params.output_bias[c];
      for (int n = 0; n < n_last; ++n) acc += w[n] * ht[n];
      out[c] = acc;
    }
    detail::log_softmax_row(out, n_classes);
  }
  if (cache) {
    cache->hidden_last = std::move(x);
    cache->probs = Matrix<T>(t_max, n_classes);
    for (size_t i = 0; i < logprobs.size(); ++i)
      cache->probs.data()[i] = std::exp(logprobs.data()[i]);
  }
  return logprobs;
}

// Analytic gradients of the loss w.r.t. every parameter. `demissions` is the
// loss gradient w.r.t. the emitted log-probabilities (the loss functions in
// loss.hpp return it projected so rows sum to zero, which makes it equal to
// the gradient w.r.t. the pre-softmax logits).
template <class T>
ModelParams<T> backward(const ModelParams<T>& params,
                        const ForwardCache<T>& cache,
                        const Matrix<T>& demissions) {
  if (cache.inputs.size() != params.layers.size() || cache.probs.empty() ||
      cache.hidden_last.rows() != cache.probs.rows())
    throw Error(ErrorKind::kInvalidArgument,
                "stale cache: not produced by a matching forward()");
  for (size_t i = 0; i < params.layers.size(); ++i) {
    if (static_cast<int>(cache.inputs[i].cols()) !=
            params.layers[i].input_dim() ||
        static_cast<int>(cache.filter_outs[i].cols()) !=
            params.layers[i].nodes())
      throw Error(ErrorKind::kInvalidArgument,
                  "stale cache: layer " + std::to_string(i) +
                      " dims do not match params");
  }
  if (!demissions.same_shape(cache.probs))
    throw Error(ErrorKind::kDimMismatch,
                "demissions shape does not match forward output");

  const size_t t_max = demissions.rows();
  const int n_classes = params.num_classes();
  ModelParams<T> grads = zeros_like(params);

  // Through the log-softmax: dlogit = g - p * sum(g).
  Matrix<T> dlogit(t_max, n_classes);
  for (size_t t = 0; t < t_max; ++t) {
    const T* g = demissions.row(t);
    const T* p = cache.probs.row(t);
    T s = T(0);
    for (int c = 0; c < n_classes; ++c) s += g[c];
    T* d = dlogit.row(t);
    for (int c = 0; c < n_classes; ++c) d[c] = g[c] - p[c] * s;
  }

  // Output projection.
  const int n_last = static_cast<int>(cache.hidden_last.cols());
  Matrix<T> dh(t_max, n_last);
  for (size_t t = 0; t < t_max; ++t) {
    const T* d = dlogit.row(t);
    const T* h = cache.hidden_last.row(t);
    for (int c = 0; c < n_classes; ++c) {
      T* gw = grads.output_weights.row(c);
      for (int n = 0; n < n_last; ++n) gw[n] += d[c] * h[n];
      grads.output_bias[c] += d[c];
    }
    T* dht = dh.row(t);
    for (int n = 0; n < n_last; ++n) {
      T acc = T(0);
      for (int c = 0; c < n_classes; ++c)
        acc += params.output_weights(c, n) * d[c];
      dht[n] = acc;
    }
  }

  for (size_t li = params.layers.size(); li-- > 0;) {
    const auto& layer = params.layers[li];
    auto& glayer = grads.layers[li];
    const int n_nodes = layer.nodes();
    const int f_dim = layer.input_dim();
    const int mem = layer.memory();
    const Matrix<T>& a = cache.filter_outs[li];
    const Matrix<T>& z = cache.preacts[li];
    const Matrix<T>& x = cache.inputs[li];

    // ReLU (subgradient 0 at 0), bias, and time-filter taps.
    Matrix<T> dz(t_max, n_nodes);
    for (size_t i = 0; i < dz.size(); ++i)
      dz.data()[i] = z.data()[i] > T(0) ? dh.data()[i] : T(0);
    for (size_t t = 0; t < t_max; ++t) {
      const T* dzt = dz.row(t);
      for (int n = 0; n < n_nodes; ++n) {
        glayer.bias[n] += dzt[n];
        T* gtf = glayer.time_filters.row(n);
        for (int m = 0; m < mem; ++m) {
          if (static_cast<size_t>(m) > t) break;
          gtf[m] += dzt[n] * a(t - m, n);
        }
      }
    }
    // Back to the feature-filter outputs: a[t,n] feeds z[t..t+M-1,n].
    Matrix<T> da(t_max, n_nodes);
    for (size_t t = 0; t < t_max; ++t) {
      T* dat = da.row(t);
      for (int n = 0; n < n_nodes; ++n) {
        const T* tf = layer.time_filters.row(n);
        T acc = T(0);
        for (int m = 0; m < mem; ++m) {
          size_t tt = t + static_cast<size_t>(m);
          if (tt >= t_max) break;
          acc += tf[m] * dz(tt, n);
        }
        dat[n] = acc;
      }
    }
    // Feature filters and the gradient flowing into the layer input.
    Matrix<T> dx(t_max, f_dim);
    for (size_t t = 0; t < t_max; ++t) {
      const T* dat = da.row(t);
      const T* xt = x.row(t);
      T* dxt = dx.row(t);
      for (int n = 0; n < n_nodes; ++n) {
        const T* f = layer.feature_filters.row(n);
        T* gf = glayer.feature_filters.row(n);
        const T d = dat[n];
        if (d != T(0)) {
          for (int k = 0; k < f_dim; ++k) {
            gf[k] += d * xt[k];
            dxt[k] += d * f[k];
          }
        }
      }
    }
    dh = std::move(dx);
  }
  return grads;
}

// Streaming inference state: per layer, a ring buffer of the last M
// feature-filter outputs per node. Feeding frames 0..t reproduces batch
// forward()'s row t.
template <class T>
class StreamingState {
 public:
  explicit StreamingState(const ModelParams<T>& params) {
    validate_dims(params);
    for (const auto& l : params.layers) {
      mem_.emplace_back(static_cast<size_t>(l.memory()),
                        static_cast<size_t>(l.nodes()));
      filled_.push_back(0);
    }
    pos_.assign(params.layers.size(), 0);
  }

  std::vector<T> step(const ModelParams<T>& params, std::span<const T> frame) {
    check_arg(params.layers.size() == mem_.size(),
              "state does not match model");
    check_arg(static_cast<int>(frame.size()) == params.input_dim(),
              "frame dim mismatch");
    std::vector<T> x(frame.begin(), frame.end());
    std::vector<T> h;
    for (size_t li = 0; li < params.layers.size(); ++li) {
      const auto& layer = params.layers[li];
      const int n_nodes = layer.nodes();
      const int f_dim = layer.input_dim();
      const int mem = layer.memory();
      Matrix<T>& ring = mem_[li];
      int& pos = pos_[li];
      T* slot = ring.row(static_cast<size_t>(pos));
      for (int n = 0; n < n_nodes; ++n) {
        const T* f = layer.feature_filters.row(n);
        T acc = T(0);
        for (int k = 0; k < f_dim; ++k) acc += f[k] * x[k];
        slot[n] = acc;
      }
      if (filled_[li] < mem) ++filled_[li];
      h.assign(static_cast<size_t>(n_nodes), T(0));
      for (int n = 0; n < n_nodes; ++n) {
        const T* tf = layer.time_filters.row(n);
        T acc = layer.bias[n];
        // Tap order matches batch forward exactly (m = 0 is the newest).
        for (int m = 0; m < filled_[li]; ++m) {
          int idx = pos - m;
          if (idx < 0) idx += mem;
          acc += tf[m] * ring(static_cast<size_t>(idx), n);
        }
        h[n] = acc > T(0) ? acc : T(0);
      }
      pos = (pos + 1) % mem;
      x = std::move(h);
    }
    const int n_classes = params.num_classes();
    std::vector<T> out(static_cast<size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c) {
      const T* w = params.output_weights.row(c);
      T acc = params.output_bias[c];
      for (size_t n = 0; n < x.size(); ++n) acc += w[n] * x[n];
      out[static_cast<size_t>(c)] = acc;
    }
    detail::log_softmax_row(out.data(), out.size());
    return out;
  }

 private:
  std::vector<Matrix<T>> mem_;
  std::vector<int> pos_;
  std::vector<int> filled_;
};

// ---------------------------------------------------------------------------
// Checkpoint format "WWD1": little-endian; version, feature config, token
// inventory, architecture dims, then flat 32-bit float tensors in declared
// order. Round-trips are bit-exact for float parameters.

inline constexpr uint32_t kCheckpointVersion = 1;

template <class T>
void save_checkpoint(const ModelParams<T>& params, const std::string& path) {
  validate_dims(params);
  auto os = io::open_out(path);
  os.write("WWD1", 4);
  io::write_u32(os, kCheckpointVersion);
  const FeatureConfig& f = params.feature_config;
  io::write_u32(os, static_cast<uint32_t>(f.sample_rate_hz));
  io::write_u32(os, static_cast<uint32_t>(f.frame_length));
  io::write_u32(os, static_cast<uint32_t>(f.frame_shift));
  io::write_u32(os, static_cast<uint32_t>(f.fft_size));
  io::write_u32(os, static_cast<uint32_t>(f.num_mels));
  io::write_f64(os, f.mel_low_hz);
  io::write_f64(os, f.mel_high_hz);
  io::write_f64(os, f.preemphasis);
  io::write_f64(os, f.energy_floor);
  io::write_f64(os, f.log_offset);
  io::write_u32(os, static_cast<uint32_t>(params.token_inventory.size()));
  for (const auto& name : params.token_inventory) io::write_string(os, name);
  io::write_u32(os, static_cast<uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    io::write_u32(os, static_cast<uint32_t>(l.input_dim()));
    io::write_u32(os, static_cast<uint32_t>(l.nodes()));
    io::write_u32(os, static_cast<uint32_t>(l.memory()));
  }
  io::write_u32(os, static_cast<uint32_t>(params.output_weights.rows()));
  io::write_u32(os, static_cast<uint32_t>(params.output_weights.cols()));
  for (auto view : tensor_views(params))
    for (T v : view) io::write_f32(os, static_cast<float>(v));
  if (!os) throw Error(ErrorKind::kIo, "write failed: " + path);
}

template <class T = float>
ModelParams<T> load_checkpoint(const std::string& path,
                               const FeatureConfig* expected = nullptr) {
  auto is = io::open_in(path);
  char magic[4];
  if (!is.read(magic, 4))
    throw Error(ErrorKind::kTruncated, "empty checkpoint: " + path);
  if (std::string_view(magic, 4) != "WWD1")
    throw Error(ErrorKind::kBadFormat, "bad checkpoint magic: " + path);
  uint32_t version = io::read_u32(is, "version");
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::kBadFormat,
                "unsupported checkpoint version " + std::to_string(version));
  ModelParams<T> p;
  FeatureConfig& f = p.feature_config;
  f.sample_rate_hz = static_cast<int>(io::read_u32(is, "sample_rate"));
  f.frame_length = static_cast<int>(io::read_u32(is, "frame_length"));
  f.frame_shift = static_cast<int>(io::read_u32(is, "frame_shift"));
  f.fft_size = static_cast<int>(io::read_u32(is, "fft_size"));
  f.num_mels = static_cast<int>(io::read_u32(is, "num_mels"));
  f.mel_low_hz = io::read_f64(is, "mel_low");
  f.mel_high_hz = io::read_f64(is, "mel_high");
  f.preemphasis = io::read_f64(is, "preemphasis");
  f.energy_floor = io::read_f64(is, "energy_floor");
  f.log_offset = io::read_f64(is, "log_offset");
  uint32_t n_tokens = io::read_u32(is, "token count");
  p.token_inventory.clear();
  for (uint32_t i = 0; i < n_tokens; ++i)
    p.token_inventory.push_back(io::read_string(is, "token name"));
  uint32_t n_layers = io::read_u32(is, "layer count");
  std::vector<std::array<uint32_t, 3>> dims(n_layers);
  for (auto& d : dims) {
    d[0] = io::read_u32(is, "layer input dim");
    d[1] = io::read_u32(is, "layer nodes");
    d[2] = io::read_u32(is, "layer memory");
  }
  uint32_t out_rows = io::read_u32(is, "output rows");
  uint32_t out_cols = io::read_u32(is, "output cols");

  uint32_t prev = static_cast<uint32_t>(f.num_mels);
  for (uint32_t i = 0; i < n_layers; ++i) {
    if (dims[i][0] != prev)
      throw Error(ErrorKind::kDimMismatch,
                  "layer " + std::to_string(i) + " input dim " +
                      std::to_string(dims[i][0]) + " does not chain from " +
                      std::to_string(prev));
    if (dims[i][1] == 0 || dims[i][2] == 0)
      throw Error(ErrorKind::kDimMismatch,
                  "layer " + std::to_string(i) + " has zero dims");
    prev = dims[i][1];
  }
  if (out_cols != prev || out_rows != n_tokens)
    throw Error(ErrorKind::kDimMismatch, "output projection dims");

  for (uint32_t i = 0; i < n_layers; ++i) {
    SvdfLayerParams<T> l;
    l.feature_filters = Matrix<T>(dims[i][1], dims[i][0]);
    l.time_filters = Matrix<T>(dims[i][1], dims[i][2]);
    l.bias.assign(dims[i][1], T(0));
    p.layers.push_back(std::move(l));
  }
  p.output_weights = Matrix<T>(out_rows, out_cols);
  p.output_bias.assign(out_rows, T(0));
  for (auto view : tensor_views(p))
    for (T& v : view) v = static_cast<T>(io::read_f32(is, "tensor data"));

  if (expected != nullptr && !(*expected == f))
    throw Error(ErrorKind::kConfigMismatch,
                "checkpoint feature config does not match the frontend "
                "(e.g. num_mels " + std::to_string(f.num_mels) + " vs " +
                    std::to_string(expected->num_mels) + ")");
  validate_dims(p);
  return p;
}

}  // namespace wakeword
