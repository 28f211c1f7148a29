/*
 * Copyright 2026 The stratvr Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cmath>

#include "stratvr/rng.hpp"
#include "stratvr/trainer.hpp"

namespace stratvr {

namespace {

// Offsets of each block inside the flat parameter vector.
struct Layout {
  std::size_t w1, b1, wl, bl, we, be, end;

  explicit Layout(const ModelShape& s) {
    w1 = 0;
    b1 = w1 + s.hidden * s.features;
    wl = b1 + s.hidden;
    bl = wl + s.classes * s.hidden;
    we = bl + s.classes;
    be = we + s.embed * s.hidden;
    end = be + s.embed;
  }
};

void check_shape(const ModelShape& s) {
  if (s.features == 0 || s.hidden == 0 || s.classes == 0 || s.embed == 0) {
    throw InvalidInput("model sizes must be positive");
  }
}

}  // namespace

std::size_t ModelShape::parameter_count() const noexcept { return Layout(*this).end; }

ToyModel::ToyModel(ModelShape shape, std::vector<double> params)
    : shape_(shape), params_(std::move(params)) {
  check_shape(shape_);
  if (params_.size() != shape_.parameter_count()) throw InvalidInput("parameter vector has the wrong length");
}

ToyModel ToyModel::zeros(ModelShape shape) {
  check_shape(shape);
  return ToyModel(shape, std::vector<double>(shape.parameter_count(), 0.0));
}

ToyModel ToyModel::random(ModelShape shape, std::uint64_t seed, double input_gain) {
  check_shape(shape);
  const Layout at(shape);
  std::vector<double> p(at.end, 0.0);
  PhiloxStream rng(seed, 0);
  const auto fill = [&](std::size_t from, std::size_t to, std::size_t fan_in, double gain = 1.0) {
    const double scale = gain / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = from; i < to; ++i) p[i] = scale * rng.normal();
  };
  fill(at.w1, at.b1, shape.features, input_gain);
  fill(at.wl, at.bl, shape.hidden);
  fill(at.we, at.be, shape.hidden);
  return ToyModel(shape, std::move(p));
}

ForwardCache forward_pass(const ToyModel& model, const PixelLattice& lattice) {
  std::vector<PixelIndex> all(lattice.size());
  for (PixelIndex p = 0; p < all.size(); ++p) all[p] = p;
  return forward_pass(model, lattice, all);
}

ForwardCache forward_pass(const ToyModel& model, const PixelLattice& lattice,
                          std::span<const PixelIndex> pixels) {
  const ModelShape& s = model.shape();
  if (lattice.payload_dim() != s.features) {
    throw InvalidInput("lattice payload has " + std::to_string(lattice.payload_dim()) +
                       " features, model expects " + std::to_string(s.features));
  }
  const Layout at(s);
  const auto theta = model.params();
  ForwardCache cache;
  cache.pixels.assign(pixels.begin(), pixels.end());
  const std::size_t n = pixels.size();
  cache.hidden.resize(n * s.hidden);
  std::vector<double> logits(n * s.classes), raw(n * s.embed);
  for (std::size_t i = 0; i < n; ++i) {
    if (pixels[i] >= lattice.size()) throw InvalidInput("pixel outside lattice");
    const auto x = lattice.payload_at(pixels[i]);
    double* h = &cache.hidden[i * s.hidden];
    for (std::size_t j = 0; j < s.hidden; ++j) {
      double a = theta[at.b1 + j];
      for (std::size_t f = 0; f < s.features; ++f) a += theta[at.w1 + j * s.features + f] * x[f];
      h[j] = std::tanh(a);
    }
    for (std::size_t k = 0; k < s.classes; ++k) {
      double z = theta[at.bl + k];
      for (std::size_t j = 0; j < s.hidden; ++j) z += theta[at.wl + k * s.hidden + j] * h[j];
      logits[i * s.classes + k] = z;
    }
    for (std::size_t e = 0; e < s.embed; ++e) {
      double z = theta[at.be + e];
      for (std::size_t j = 0; j < s.hidden; ++j) z += theta[at.we + e * s.hidden + j] * h[j];
      raw[i * s.embed + e] = z;
    }
  }
  cache.map = RepresentationMap::from_raw(std::move(raw), s.embed, std::move(logits), s.classes);
  return cache;
}

RepresentationMap forward(const ToyModel& model, const PixelLattice& lattice) {
  return forward_pass(model, lattice).map;
}

namespace {

void backward_impl(const ToyModel& model, const PixelLattice& lattice, const ForwardCache& cache,
                   std::span<const double> grad_logits, std::span<const double> grad_embed,
                   bool embed_is_normalized, std::span<double> grad_params) {
  const ModelShape& s = model.shape();
  const Layout at(s);
  const std::size_t n = cache.pixels.size();
  if (grad_params.size() != at.end) throw InvalidInput("gradient buffer has the wrong length");
  if (!grad_logits.empty() && grad_logits.size() != n * s.classes) {
    throw InvalidInput("logit gradient has the wrong shape");
  }
  if (!grad_embed.empty() && grad_embed.size() != n * s.embed) {
    throw InvalidInput("embedding gradient has the wrong shape");
  }
  const auto theta = model.params();
  std::vector<double> d_raw(s.embed), d_hidden(s.hidden);
  for (std::size_t i = 0; i < n; ++i) {
    const double* h = &cache.hidden[i * s.hidden];
    std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
    if (!grad_logits.empty()) {
      for (std::size_t k = 0; k < s.classes; ++k) {
        const double g = grad_logits[i * s.classes + k];
        if (g == 0.0) continue;
        grad_params[at.bl + k] += g;
        for (std::size_t j = 0; j < s.hidden; ++j) {
          grad_params[at.wl + k * s.hidden + j] += g * h[j];
          d_hidden[j] += g * theta[at.wl + k * s.hidden + j];
        }
      }
    }
    if (!grad_embed.empty()) {
      const auto row = grad_embed.subspan(i * s.embed, s.embed);
      if (embed_is_normalized) {
        std::fill(d_raw.begin(), d_raw.end(), 0.0);
        normalize_backward(cache.map.raw_embedding(i), cache.map.norms[i], row, d_raw);
      } else {
        std::copy(row.begin(), row.end(), d_raw.begin());
      }
      for (std::size_t e = 0; e < s.embed; ++e) {
        const double g = d_raw[e];
        if (g == 0.0) continue;
        grad_params[at.be + e] += g;
        for (std::size_t j = 0; j < s.hidden; ++j) {
          grad_params[at.we + e * s.hidden + j] += g * h[j];
          d_hidden[j] += g * theta[at.we + e * s.hidden + j];
        }
      }
    }
    const auto x = lattice.payload_at(cache.pixels[i]);
    for (std::size_t j = 0; j < s.hidden; ++j) {
      const double da = d_hidden[j] * (1.0 - h[j] * h[j]);
      if (da == 0.0) continue;
      grad_params[at.b1 + j] += da;
      for (std::size_t f = 0; f < s.features; ++f) grad_params[at.w1 + j * s.features + f] += da * x[f];
    }
  }
}

}  // namespace

void backward(const ToyModel& model, const PixelLattice& lattice, const ForwardCache& cache,
              std::span<const double> grad_logits, std::span<const double> grad_embeddings,
              std::span<double> grad_params) {
  backward_impl(model, lattice, cache, grad_logits, grad_embeddings, true, grad_params);
}

void backward_raw(const ToyModel& model, const PixelLattice& lattice, const ForwardCache& cache,
                  std::span<const double> grad_logits, std::span<const double> grad_raw,
                  std::span<double> grad_params) {
  backward_impl(model, lattice, cache, grad_logits, grad_raw, false, grad_params);
}

}  // namespace stratvr
