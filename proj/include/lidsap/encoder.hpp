// Copyright 2026 The lidsap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// B x R encoder built from time-channel separable convolutions.
//
//   prologue : dw(K_p) -> pw(in -> C_0) -> BN -> ReLU -> dropout
//   block b  : R sub-blocks of dw(K_b) -> pw -> BN -> ReLU -> dropout; on the
//              last one the skip path (identity, or pw 1x1 + BN when the
//              channel count changes) joins after BN, before the ReLU
//   epilogue : pw(C_last -> out_channels) -> BN -> ReLU -> dropout
//
// Every convolution has stride 1 and dilation 1, so T is preserved. Padded
// frames (t >= length) are excluded from batch statistics and stay zero
// throughout, which keeps valid frames independent of the padding amount.

#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "lidsap/ops.hpp"
#include "lidsap/random.hpp"
#include "lidsap/tensor.hpp"

namespace lidsap {

struct EncoderConfig {
  std::size_t input_dim = 40;
  std::size_t repeats = 5;  // R: sub-blocks per block
  std::vector<std::size_t> channels;
  std::vector<std::size_t> kernel_sizes;
  std::size_t prologue_kernel = 33;
  std::size_t out_channels = 512;
  double dropout_rate = 0.0;

  std::size_t blocks() const { return channels.size(); }

  /// 15 blocks as 5 groups x 3 repeats, kernels 33..75, 512 channels, R = 5.
  static EncoderConfig quartznet_15x5() {
    EncoderConfig c;
    c.repeats = 5;
    for (std::size_t k : {33u, 39u, 51u, 63u, 75u}) {
      for (int rep = 0; rep < 3; ++rep) {
        c.channels.push_back(512);
        c.kernel_sizes.push_back(k);
      }
    }
    c.prologue_kernel = 33;
    c.out_channels = 512;
    return c;
  }

  /// Desk-scale configuration used by the gradient and learning tests.
  static EncoderConfig tiny() {
    EncoderConfig c;
    c.repeats = 2;
    c.channels = {8, 8, 8};
    c.kernel_sizes = {3, 5, 7};
    c.prologue_kernel = 3;
    c.out_channels = 16;
    return c;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("invalid encoder config: " + m); };
    if (input_dim == 0) fail("input_dim must be positive");
    if (channels.empty()) fail("need at least one block");
    if (repeats == 0) fail("repeats must be positive");
    if (channels.size() != kernel_sizes.size()) fail("channels and kernel_sizes differ in length");
    for (auto c : channels) {
      if (c == 0) fail("channel counts must be positive");
    }
    for (auto k : kernel_sizes) {
      if (k == 0 || k % 2 == 0) fail("kernel sizes must be odd");
    }
    if (prologue_kernel == 0 || prologue_kernel % 2 == 0) fail("prologue kernel must be odd");
    if (out_channels == 0) fail("out_channels must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

template <typename T>
struct SubBlockParams {
  std::optional<Tensor<T>> depthwise;  // C_in x K; absent on the epilogue
  Tensor<T> pointwise;                 // C_out x C_in
  BatchNormState<T> bn;
};

template <typename T>
struct BlockParams {
  std::vector<SubBlockParams<T>> sub_blocks;
  std::optional<Tensor<T>> skip_projection;  // C_out x C_in when channels change
  std::optional<BatchNormState<T>> skip_bn;
};

template <typename T>
struct EncoderParams {
  using value_type = T;
  EncoderConfig config;
  SubBlockParams<T> prologue;
  std::vector<BlockParams<T>> blocks;
  SubBlockParams<T> epilogue;
};

namespace detail {

void visit_bn(const std::string& prefix, auto& bn, auto&& f) {
  f(prefix + ".gamma", bn.gamma, true);
  f(prefix + ".beta", bn.beta, true);
  f(prefix + ".running_mean", bn.running_mean, false);
  f(prefix + ".running_var", bn.running_var, false);
}

void visit_sub_block(const std::string& prefix, auto& sb, auto&& f) {
  if (sb.depthwise) f(prefix + ".dw", *sb.depthwise, true);
  f(prefix + ".pw", sb.pointwise, true);
  visit_bn(prefix + ".bn", sb.bn, f);
}

}  // namespace detail

/// Calls f(name, tensor, trainable) for every tensor in a fixed order. Works
/// on const and non-const params alike.
template <typename P, typename F>
  requires std::is_same_v<std::remove_const_t<P>, EncoderParams<typename std::remove_const_t<P>::value_type>>
void visit_tensors(P& p, F&& f, const std::string& prefix = "encoder") {
  detail::visit_sub_block(prefix + ".prologue", p.prologue, f);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    auto& blk = p.blocks[b];
    const std::string bp = prefix + ".block" + std::to_string(b);
    for (std::size_t r = 0; r < blk.sub_blocks.size(); ++r) {
      detail::visit_sub_block(bp + ".sub" + std::to_string(r), blk.sub_blocks[r], f);
    }
    if (blk.skip_projection) f(bp + ".skip.pw", *blk.skip_projection, true);
    if (blk.skip_bn) detail::visit_bn(bp + ".skip.bn", *blk.skip_bn, f);
  }
  detail::visit_sub_block(prefix + ".epilogue", p.epilogue, f);
}

/// Allocates shapes from the config alone, all tensors zero except BN
/// gamma/running_var (one). Used by checkpoint loading and gradient buffers.
template <typename T>
EncoderParams<T> allocate_encoder(const EncoderConfig& config) {
  config.validate();
  EncoderParams<T> p;
  p.config = config;
  auto zero_sb = [](std::size_t c_in, std::size_t c_out, std::size_t k) {
    SubBlockParams<T> sb;
    if (k > 0) sb.depthwise = Tensor<T>({c_in, k});
    sb.pointwise = Tensor<T>({c_out, c_in});
    sb.bn = BatchNormState<T>(c_out);
    return sb;
  };
  p.prologue = zero_sb(config.input_dim, config.channels[0], config.prologue_kernel);
  std::size_t c_in = config.channels[0];
  for (std::size_t b = 0; b < config.blocks(); ++b) {
    const std::size_t c_out = config.channels[b];
    BlockParams<T> blk;
    for (std::size_t r = 0; r < config.repeats; ++r) {
      blk.sub_blocks.push_back(zero_sb(r == 0 ? c_in : c_out, c_out, config.kernel_sizes[b]));
    }
    if (c_in != c_out) {
      blk.skip_projection = Tensor<T>({c_out, c_in});
      blk.skip_bn = BatchNormState<T>(c_out);
    }
    p.blocks.push_back(std::move(blk));
    c_in = c_out;
  }
  p.epilogue = zero_sb(c_in, config.out_channels, 0);
  return p;
}

/// Zero-mean normal conv weights with variance 2/fan_in, BN gamma 1 and
/// beta 0; deterministic in `seed`.
template <typename T>
EncoderParams<T> build_encoder(const EncoderConfig& config, std::uint64_t seed) {
  EncoderParams<T> p = allocate_encoder<T>(config);
  Rng rng = derive_rng(seed, {stream::kInit, 0});
  visit_tensors(p, [&](const std::string& name, Tensor<T>& t, bool) {
    if (!name.ends_with(".dw") && !name.ends_with(".pw")) return;
    // Both layouts keep fan-in on dim 1: C_in x K and C_out x C_in.
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(t.dim(1))));
    for (auto& v : t.storage()) v = static_cast<T>(dist(rng));
  });
  return p;
}

/// Same shapes as `p`, every tensor zero. Used as a gradient accumulator.
template <typename T>
EncoderParams<T> zeros_like(const EncoderParams<T>& p) {
  EncoderParams<T> z = p;
  visit_tensors(z, [](const std::string&, Tensor<T>& t, bool) { t.fill(T{0}); });
  return z;
}

template <typename T>
std::size_t count_trainable(const EncoderParams<T>& p) {
  std::size_t n = 0;
  visit_tensors(p, [&](const std::string&, const Tensor<T>& t, bool trainable) {
    if (trainable) n += t.size();
  });
  return n;
}

// ---------------------------------------------------------------------------
// Forward / backward.

template <typename T>
struct SubBlockCache {
  Tensor<T> input;
  Tensor<T> dw_out;  // empty when the sub-block has no depthwise stage
  BatchNormCache<T> bn;
  Tensor<T> activation;  // post-ReLU, pre-dropout
  Tensor<T> dropout_mask;
};

template <typename T>
struct BlockCache {
  std::vector<SubBlockCache<T>> sub_blocks;
  BatchNormCache<T> skip_bn;
};

template <typename T>
struct EncoderCache {
  bool valid = false;
  Mode mode = Mode::kEval;
  std::vector<std::size_t> lengths;
  SubBlockCache<T> prologue;
  std::vector<BlockCache<T>> blocks;
  SubBlockCache<T> epilogue;
};

namespace detail {

template <typename T>
Tensor<T> conv_bn(const SubBlockParams<T>& p, const Tensor<T>& in, std::span<const std::size_t> lens,
                  Mode mode, SubBlockCache<T>* cache) {
  Tensor<T> h = p.depthwise ? depthwise_conv1d(in, *p.depthwise) : Tensor<T>();
  const Tensor<T>& pw_in = p.depthwise ? h : in;
  Tensor<T> z = pointwise_conv1d(pw_in, p.pointwise);
  Tensor<T> y = batch_norm_1d_apply(z, p.bn, mode, cache ? &cache->bn : nullptr, lens);
  if (cache) {
    cache->input = in;
    cache->dw_out = std::move(h);
  }
  return y;
}

template <typename T>
Tensor<T> activate(const Tensor<T>& pre, double rate, Mode mode, Rng* rng, SubBlockCache<T>* cache) {
  Tensor<T> a = relu(pre);
  Tensor<T> mask;
  Tensor<T> out = dropout(a, rate, rng, mode, cache ? &mask : nullptr);
  if (cache) {
    cache->activation = std::move(a);
    cache->dropout_mask = std::move(mask);
  }
  return out;
}

/// Gradient w.r.t. the BN output (pre-activation) given the sub-block output grad.
template <typename T>
Tensor<T> activate_backward(const SubBlockCache<T>& c, const Tensor<T>& grad_out) {
  return relu_backward(c.activation, dropout_backward(c.dropout_mask, grad_out));
}

/// Backprop from the BN output to the sub-block input, accumulating grads.
template <typename T>
Tensor<T> conv_bn_backward(const SubBlockParams<T>& p, const SubBlockCache<T>& c,
                           const Tensor<T>& grad_pre, SubBlockParams<T>& g) {
  auto gbn = batch_norm_1d_backward(c.bn, p.bn, grad_pre);
  g.bn.gamma += gbn.gamma;
  g.bn.beta += gbn.beta;
  const Tensor<T>& pw_in = p.depthwise ? c.dw_out : c.input;
  auto gpw = pointwise_conv1d_backward(pw_in, p.pointwise, gbn.x, false);
  g.pointwise += gpw.weights;
  if (!p.depthwise) return std::move(gpw.x);
  auto gdw = depthwise_conv1d_backward(c.input, *p.depthwise, gpw.x);
  *g.depthwise += gdw.kernels;
  return std::move(gdw.x);
}

}  // namespace detail

/// Runs the encoder on N x input_dim x T features. `lengths` (one per item,
/// empty = all T) marks valid frames. Parameters are read-only; in train mode
/// the batch statistics are left in `cache` for encoder_update_running_stats.
template <typename T>
Tensor<T> encoder_forward(const EncoderParams<T>& p, const Tensor<T>& features,
                          std::span<const std::size_t> lengths, Mode mode, Rng* rng,
                          EncoderCache<T>* cache) {
  const Ncw s = as_ncw(features, "encoder_forward");
  if (features.rank() != 3) throw ShapeError("encoder_forward: features must be N x F x T");
  if (s.c != p.config.input_dim) {
    throw ShapeError("encoder_forward: feature dim " + std::to_string(s.c) + " != input_dim " +
                     std::to_string(p.config.input_dim));
  }
  const auto lens = detail::resolve_lengths(s, lengths);
  if (mode == Mode::kTrain) {
    std::size_t total = 0;
    for (auto l : lens) total += l;
    if (total < 2) throw std::invalid_argument("encoder_forward: train mode needs at least 2 valid frames in the batch");
  }
  EncoderCache<T> local;
  if (!cache && mode == Mode::kTrain) cache = &local;
  if (cache) {
    *cache = EncoderCache<T>{};
    cache->mode = mode;
    cache->lengths = lens;
    cache->blocks.resize(p.blocks.size());
  }
  const double rate = p.config.dropout_rate;

  Tensor<T> x = features;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t t = lens[n]; t < s.t; ++t) x.at(n, c, t) = T{0};
    }
  }

  x = detail::activate(detail::conv_bn(p.prologue, x, lens, mode, cache ? &cache->prologue : nullptr),
                       rate, mode, rng, cache ? &cache->prologue : nullptr);

  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const auto& blk = p.blocks[b];
    BlockCache<T>* bc = cache ? &cache->blocks[b] : nullptr;
    if (bc) bc->sub_blocks.resize(blk.sub_blocks.size());
    const Tensor<T> block_in = x;
    for (std::size_t r = 0; r < blk.sub_blocks.size(); ++r) {
      SubBlockCache<T>* sc = bc ? &bc->sub_blocks[r] : nullptr;
      Tensor<T> pre = detail::conv_bn(blk.sub_blocks[r], x, lens, mode, sc);
      if (r + 1 == blk.sub_blocks.size()) {
        if (blk.skip_projection) {
          Tensor<T> proj = pointwise_conv1d(block_in, *blk.skip_projection);
          pre += batch_norm_1d_apply(proj, *blk.skip_bn, mode, bc ? &bc->skip_bn : nullptr, lens);
        } else {
          pre += block_in;
        }
      }
      x = detail::activate(pre, rate, mode, rng, sc);
    }
  }

  x = detail::activate(detail::conv_bn(p.epilogue, x, lens, mode, cache ? &cache->epilogue : nullptr),
                       rate, mode, rng, cache ? &cache->epilogue : nullptr);
  if (cache) cache->valid = true;
  return x;
}

/// Folds the batch statistics of a train-mode forward into the running
/// estimates.
template <typename T>
void encoder_update_running_stats(EncoderParams<T>& p, const EncoderCache<T>& cache) {
  if (!cache.valid || cache.mode != Mode::kTrain) {
    throw std::logic_error("encoder_update_running_stats: no train-mode forward cached");
  }
  update_running_stats(p.prologue.bn, cache.prologue.bn.stats);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    auto& blk = p.blocks[b];
    for (std::size_t r = 0; r < blk.sub_blocks.size(); ++r) {
      update_running_stats(blk.sub_blocks[r].bn, cache.blocks[b].sub_blocks[r].bn.stats);
    }
    if (blk.skip_bn) update_running_stats(*blk.skip_bn, cache.blocks[b].skip_bn.stats);
  }
  update_running_stats(p.epilogue.bn, cache.epilogue.bn.stats);
}

template <typename T>
struct EncoderGrads {
  Tensor<T> features;
  EncoderParams<T> params;
};

/// Exact adjoint of encoder_forward for the cached batch.
template <typename T>
EncoderGrads<T> encoder_backward(const EncoderParams<T>& p, const EncoderCache<T>& cache,
                                 const Tensor<T>& grad_out) {
  if (!cache.valid) throw std::logic_error("encoder_backward: no cached forward");
  EncoderGrads<T> g{Tensor<T>(), zeros_like(p)};
  Tensor<T> grad = detail::conv_bn_backward(p.epilogue, cache.epilogue,
                                            detail::activate_backward(cache.epilogue, grad_out),
                                            g.params.epilogue);
  for (std::size_t bi = p.blocks.size(); bi-- > 0;) {
    const auto& blk = p.blocks[bi];
    const auto& bc = cache.blocks[bi];
    auto& gb = g.params.blocks[bi];
    Tensor<T> skip_grad;
    for (std::size_t r = blk.sub_blocks.size(); r-- > 0;) {
      const auto& sc = bc.sub_blocks[r];
      Tensor<T> grad_pre = detail::activate_backward(sc, grad);
      if (r + 1 == blk.sub_blocks.size()) {
        if (blk.skip_projection) {
          auto gbn = batch_norm_1d_backward(bc.skip_bn, *blk.skip_bn, grad_pre);
          gb.skip_bn->gamma += gbn.gamma;
          gb.skip_bn->beta += gbn.beta;
          auto gpw = pointwise_conv1d_backward(bc.sub_blocks[0].input, *blk.skip_projection, gbn.x, false);
          *gb.skip_projection += gpw.weights;
          skip_grad = std::move(gpw.x);
        } else {
          skip_grad = grad_pre;
        }
      }
      grad = detail::conv_bn_backward(blk.sub_blocks[r], sc, grad_pre, gb.sub_blocks[r]);
    }
    grad += skip_grad;
  }
  grad = detail::conv_bn_backward(p.prologue, cache.prologue,
                                  detail::activate_backward(cache.prologue, grad), g.params.prologue);
  // Padded input frames never influence the output.
  const Ncw s = as_ncw(grad, "encoder_backward");
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t t = cache.lengths[n]; t < s.t; ++t) grad.at(n, c, t) = T{0};
    }
  }
  g.features = std::move(grad);
  return g;
}

}  // namespace lidsap
