#pragma once

// Non-local means with periodic boundaries.
//
// Weight between pixel i and neighbor j = i + o (o in the search window):
//   w_ij = exp(-||patch_i - patch_j||^2 / (h^2 * patch_pixels * channels))
// where the squared patch distance runs over all channels. Rows are
// normalized to one for plain NLM; DsgNlmWeights builds the symmetric doubly
// stochastic variant used as a linear, proximable smoother.

#include <cmath>
#include <cstddef>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "vista/denoiser.hpp"
#include "vista/error.hpp"
#include "vista/image.hpp"

namespace vista {

struct NlmParams {
  std::size_t window_radius = 1;  // (2r+1)^2 search window
  std::size_t patch_radius = 1;   // (2r+1)^2 patch
  double h = 60.0 / 255.0;
  friend bool operator==(const NlmParams&, const NlmParams&) = default;
};

struct Offset {
  long dy = 0;
  long dx = 0;
};

namespace detail {

inline void validate_nlm(const NlmParams& p) {
  if (!(p.h > 0.0)) throw Error("nlm: filtering parameter h must be > 0");
}

inline std::size_t wrap(long v, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((v % m) + m) % m);
}

inline std::vector<Offset> window_offsets(std::size_t radius) {
  std::vector<Offset> offs;
  const long r = static_cast<long>(radius);
  for (long dy = -r; dy <= r; ++dy)
    for (long dx = -r; dx <= r; ++dx) offs.push_back({dy, dx});
  return offs;
}

// out(y, x) = in((y + dy) mod H, (x + dx) mod W) for one plane.
inline void shift_plane(std::span<const double> in, std::span<double> out, std::size_t H,
                        std::size_t W, Offset o) {
  const std::size_t sx = wrap(o.dx, W);
  for (std::size_t y = 0; y < H; ++y) {
    const double* src = in.data() + wrap(static_cast<long>(y) + o.dy, H) * W;
    double* dst = out.data() + y * W;
    std::memcpy(dst, src + sx, (W - sx) * sizeof(double));
    std::memcpy(dst + (W - sx), src, sx * sizeof(double));
  }
}

// Periodic (2r+1)x(2r+1) box sum, separable.
inline void box_sum_periodic(std::vector<double>& map, std::size_t H, std::size_t W,
                             std::size_t r, std::vector<double>& scratch) {
  if (r == 0) return;
  const long rr = static_cast<long>(r);
  scratch.assign(H * W, 0.0);
  std::vector<std::size_t> cols(W + 2 * r);
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = wrap(static_cast<long>(j) - rr, W);
  for (std::size_t y = 0; y < H; ++y) {
    const double* row = map.data() + y * W;
    double* out = scratch.data() + y * W;
    for (std::size_t x = 0; x < W; ++x) {
      double s = 0.0;
      for (std::size_t q = 0; q <= 2 * r; ++q) s += row[cols[x + q]];
      out[x] = s;
    }
  }
  std::fill(map.begin(), map.end(), 0.0);
  for (long q = -rr; q <= rr; ++q) {
    for (std::size_t y = 0; y < H; ++y) {
      const double* src = scratch.data() + wrap(static_cast<long>(y) + q, H) * W;
      double* dst = map.data() + y * W;
      for (std::size_t x = 0; x < W; ++x) dst[x] += src[x];
    }
  }
}

// Raw NLM weight maps, one per window offset: maps[k][i] = w(i, i + offs[k]).
// Offsets come in +/- pairs; the map for -o is the map for o shifted by -o,
// which makes w(i, j) == w(j, i) bit for bit.
inline std::vector<std::vector<double>> raw_weight_maps(const Image& guide, const NlmParams& p,
                                                        const std::vector<Offset>& offs) {
  const std::size_t H = guide.height(), W = guide.width(), C = guide.channels();
  const std::size_t N = H * W;
  const double patch_pixels = std::pow(2.0 * static_cast<double>(p.patch_radius) + 1.0, 2);
  const double scale = 1.0 / (p.h * p.h * patch_pixels * static_cast<double>(C));
  const std::size_t K = offs.size();

  std::vector<std::vector<double>> maps(K);
  std::vector<double> shifted(N), dist(N), scratch;
  for (std::size_t k = 0; k < K; ++k) {
    const Offset o = offs[k];
    const std::size_t mirror = K - 1 - k;  // offs is symmetric about its center
    if (mirror < k) {
      // w(i, i - o) = w(i - o, i) = maps[mirror][i - o]
      maps[k].resize(N);
      shift_plane(maps[mirror], maps[k], H, W, Offset{o.dy, o.dx});
      continue;
    }
    std::fill(dist.begin(), dist.end(), 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      const auto plane = guide.plane(c);
      shift_plane(plane, shifted, H, W, o);
      for (std::size_t i = 0; i < N; ++i) {
        const double d = plane[i] - shifted[i];
        dist[i] += d * d;
      }
    }
    box_sum_periodic(dist, H, W, p.patch_radius, scratch);
    for (double& v : dist) v = std::exp(-v * scale);
    maps[k] = dist;
  }
  return maps;
}

}  // namespace detail

// Reference implementation: explicit loops over pixels, window, patch and
// channels. O(W^2 P^2 C N).
inline Image nlm_denoise_naive(const Image& x, const NlmParams& p) {
  detail::validate_nlm(p);
  const std::size_t H = x.height(), W = x.width(), C = x.channels();
  const long wr = static_cast<long>(p.window_radius), pr = static_cast<long>(p.patch_radius);
  const double patch_pixels = std::pow(2.0 * static_cast<double>(pr) + 1.0, 2);
  const double denom = p.h * p.h * patch_pixels * static_cast<double>(C);
  Image out(x.dims());
  std::vector<double> num(C);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t xx = 0; xx < W; ++xx) {
      std::fill(num.begin(), num.end(), 0.0);
      double den = 0.0;
      for (long dy = -wr; dy <= wr; ++dy) {
        for (long dx = -wr; dx <= wr; ++dx) {
          double d2 = 0.0;
          for (long py = -pr; py <= pr; ++py) {
            for (long px = -pr; px <= pr; ++px) {
              const std::size_t ay = detail::wrap(static_cast<long>(y) + py, H);
              const std::size_t ax = detail::wrap(static_cast<long>(xx) + px, W);
              const std::size_t by = detail::wrap(static_cast<long>(y) + dy + py, H);
              const std::size_t bx = detail::wrap(static_cast<long>(xx) + dx + px, W);
              for (std::size_t c = 0; c < C; ++c) {
                const double d = x.at(c, ay, ax) - x.at(c, by, bx);
                d2 += d * d;
              }
            }
          }
          const double w = std::exp(-d2 / denom);
          const std::size_t ny = detail::wrap(static_cast<long>(y) + dy, H);
          const std::size_t nx = detail::wrap(static_cast<long>(xx) + dx, W);
          for (std::size_t c = 0; c < C; ++c) num[c] += w * x.at(c, ny, nx);
          den += w;
        }
      }
      for (std::size_t c = 0; c < C; ++c) out.at(c, y, xx) = num[c] / den;
    }
  }
  return out;
}

// Shift-and-accumulate NLM: for each window offset, a whole-image squared
// difference map is box-filtered over the patch footprint, exponentiated and
// accumulated. Memory grows with the window (one weight map per offset).
inline Image nlm_denoise(const Image& x, const NlmParams& p) {
  detail::validate_nlm(p);
  const std::size_t H = x.height(), W = x.width(), C = x.channels(), N = H * W;
  const auto offs = detail::window_offsets(p.window_radius);
  const auto maps = detail::raw_weight_maps(x, p, offs);
  Image out(x.dims());
  std::vector<double> den(N, 0.0), shifted(N);
  for (std::size_t k = 0; k < offs.size(); ++k) {
    const auto& w = maps[k];
    for (std::size_t i = 0; i < N; ++i) den[i] += w[i];
    for (std::size_t c = 0; c < C; ++c) {
      detail::shift_plane(x.plane(c), shifted, H, W, offs[k]);
      auto dst = out.plane(c);
      for (std::size_t i = 0; i < N; ++i) dst[i] += w[i] * shifted[i];
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < N; ++i) dst[i] /= den[i];
  }
  return out;
}

inline Denoiser nlm_denoiser(const NlmParams& p) {
  detail::validate_nlm(p);
  return Denoiser("nlm(window_radius=" + std::to_string(p.window_radius) +
                      ",patch_radius=" + std::to_string(p.patch_radius) +
                      ",h=" + detail::fmt_param(p.h) + ")",
                  [p](const Image& x) { return nlm_denoise(x, p); });
}

// Symmetric, nonnegative, doubly stochastic NLM smoothing matrix with weights
// frozen against a guide image. Row i holds one weight per window offset.
class DsgNlmWeights {
 public:
  const Dims& guide_dims() const noexcept { return dims_; }
  const NlmParams& params() const noexcept { return params_; }
  const std::vector<Offset>& offsets() const noexcept { return offsets_; }
  std::size_t center_index() const noexcept { return offsets_.size() / 2; }

  double weight(std::size_t pixel, std::size_t k) const noexcept {
    return weights_[pixel * offsets_.size() + k];
  }

  std::size_t neighbor(std::size_t pixel, std::size_t k) const noexcept {
    const std::size_t y = pixel / dims_.width, x = pixel % dims_.width;
    return detail::wrap(static_cast<long>(y) + offsets_[k].dy, dims_.height) * dims_.width +
           detail::wrap(static_cast<long>(x) + offsets_[k].dx, dims_.width);
  }

  double row_sum(std::size_t pixel) const noexcept {
    double s = 0.0;
    for (std::size_t k = 0; k < offsets_.size(); ++k) s += weight(pixel, k);
    return s;
  }

  // W x, the same weights applied to every channel.
  Image apply(const Image& x) const {
    if (x.height() != dims_.height || x.width() != dims_.width)
      throw DimensionError("dsg_nlm: image " + x.dims().str() + " does not match guide " +
                           dims_.str());
    const std::size_t H = dims_.height, W = dims_.width, N = H * W, K = offsets_.size();
    Image out(x.dims());
    std::vector<double> shifted(N);
    for (std::size_t c = 0; c < x.channels(); ++c) {
      auto dst = out.plane(c);
      for (std::size_t k = 0; k < K; ++k) {
        detail::shift_plane(x.plane(c), shifted, H, W, offsets_[k]);
        for (std::size_t i = 0; i < N; ++i) dst[i] += weights_[i * K + k] * shifted[i];
      }
    }
    return out;
  }

  friend DsgNlmWeights build_dsg_weights(const Image& guide, const NlmParams& p);

 private:
  Dims dims_;
  NlmParams params_;
  std::vector<Offset> offsets_;
  std::vector<double> weights_;
};

// Raw symmetric NLM weights from the guide, rescaled as w_ij / sqrt(d_i d_j)
// with d_i the raw row sums, then the diagonal absorbs 1 - (row sum) so each
// row sums to one. Throws if a diagonal entry would turn negative.
inline DsgNlmWeights build_dsg_weights(const Image& guide, const NlmParams& p) {
  detail::validate_nlm(p);
  const std::size_t H = guide.height(), W = guide.width(), N = H * W;
  if (2 * p.window_radius + 1 > std::min(H, W))
    throw DimensionError("dsg_nlm: search window larger than the guide image");

  DsgNlmWeights out;
  out.dims_ = guide.dims();
  out.params_ = p;
  out.offsets_ = detail::window_offsets(p.window_radius);
  const std::size_t K = out.offsets_.size();
  const auto maps = detail::raw_weight_maps(guide, p, out.offsets_);

  std::vector<double> d(N, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < N; ++i) d[i] += maps[k][i];

  out.weights_.resize(N * K);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t j = out.neighbor(i, k);
      out.weights_[i * K + k] = maps[k][i] / std::sqrt(d[i] * d[j]);
    }
  }
  const std::size_t center = out.center_index();
  for (std::size_t i = 0; i < N; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += out.weights_[i * K + k];
    double& diag = out.weights_[i * K + center];
    diag += 1.0 - s;
    if (diag < 0.0)
      throw Error("dsg_nlm: negative diagonal at pixel " + std::to_string(i) +
                  " (h too small for the window)");
  }
  return out;
}

// x -> W x with frozen weights; a linear map.
inline Denoiser dsg_nlm_denoiser(DsgNlmWeights weights) {
  auto shared = std::make_shared<const DsgNlmWeights>(std::move(weights));
  const NlmParams& p = shared->params();
  return Denoiser("dsg_nlm(window_radius=" + std::to_string(p.window_radius) +
                      ",patch_radius=" + std::to_string(p.patch_radius) +
                      ",h=" + detail::fmt_param(p.h) + ")",
                  [shared](const Image& x) { return shared->apply(x); });
}

}  // namespace vista
