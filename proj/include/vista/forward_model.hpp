#pragma once

// Linear measurement operators and the data-fidelity term
//   f(x) = 1/2 ||A x - y||^2.
// All convolutions use periodic boundaries, so adjoints are exact.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "vista/error.hpp"
#include "vista/image.hpp"

namespace vista {

struct Kernel {
  std::size_t height = 1;
  std::size_t width = 1;
  std::vector<double> taps{1.0};  // row-major

  double at(std::size_t r, std::size_t c) const noexcept { return taps[r * width + c]; }
  double sum() const noexcept {
    double s = 0.0;
    for (double t : taps) s += t;
    return s;
  }
  // Tap that lands on the output pixel itself.
  std::size_t center_row() const noexcept { return height / 2; }
  std::size_t center_col() const noexcept { return width / 2; }

  friend bool operator==(const Kernel&, const Kernel&) = default;
};

inline Kernel make_kernel(std::size_t height, std::size_t width, std::vector<double> taps) {
  if (height == 0 || width == 0 || taps.size() != height * width)
    throw DimensionError("kernel taps do not match " + std::to_string(height) + "x" +
                         std::to_string(width));
  for (double t : taps)
    if (!std::isfinite(t)) throw Error("kernel taps must be finite");
  return Kernel{height, width, std::move(taps)};
}

inline Kernel gaussian_kernel(std::size_t size, double sigma) {
  if (size % 2 == 0) throw Error("gaussian kernel size must be odd, got " + std::to_string(size));
  if (!(sigma > 0.0)) throw Error("gaussian kernel sigma must be > 0");
  const double half = static_cast<double>(size / 2);
  std::vector<double> taps(size * size);
  double total = 0.0;
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const double dy = static_cast<double>(r) - half, dx = static_cast<double>(c) - half;
      taps[r * size + c] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      total += taps[r * size + c];
    }
  for (double& t : taps) t /= total;
  return Kernel{size, size, std::move(taps)};
}

// Text format: "H W" on the first line, then H lines of W floats. Taps are
// renormalized when the sum is within 1e-3 of one; otherwise rejected.
inline Kernel parse_kernel(std::istream& in, const std::string& what = "kernel") {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  auto parse_number = [&](const std::string& tok) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || !std::isfinite(v))
      throw ParseError(what + ": bad number '" + tok + "'", lineno);
    return v;
  };

  if (!next_line()) throw ParseError(what + ": empty kernel file", 0);
  std::istringstream header(line);
  std::string th, tw, extra;
  if (!(header >> th >> tw) || (header >> extra))
    throw ParseError(what + ": expected 'H W' header", lineno);
  const double hd = parse_number(th), wd = parse_number(tw);
  if (hd < 1 || wd < 1 || hd != std::floor(hd) || wd != std::floor(wd) || hd * wd > 1e6)
    throw ParseError(what + ": invalid kernel size", lineno);
  const auto h = static_cast<std::size_t>(hd), w = static_cast<std::size_t>(wd);

  std::vector<double> taps;
  taps.reserve(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    if (!next_line()) throw ParseError(what + ": expected " + std::to_string(h) + " rows", lineno);
    std::istringstream row(line);
    std::string tok;
    std::size_t count = 0;
    while (row >> tok) {
      taps.push_back(parse_number(tok));
      ++count;
    }
    if (count != w)
      throw ParseError(what + ": expected " + std::to_string(w) + " values, got " +
                           std::to_string(count), lineno);
  }
  if (next_line()) throw ParseError(what + ": trailing data after kernel rows", lineno);

  Kernel k{h, w, std::move(taps)};
  const double s = k.sum();
  if (std::abs(s - 1.0) >= 1e-3)
    throw ParseError(what + ": kernel taps sum to " + std::to_string(s) + ", expected 1", 0);
  for (double& t : k.taps) t /= s;
  return k;
}

inline Kernel load_kernel(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open kernel file " + path.string());
  return parse_kernel(in, path.string());
}

namespace detail {

// out(i,j) = sum_{a,b} taps(a,b) * x((i + a - row_shift) mod H, (j + b - col_shift) mod W)
// over each channel plane. row_shift = center gives correlation; convolution is
// correlation with the flipped kernel.
inline Image correlate_periodic(const Image& x, const Kernel& k, std::size_t row_shift,
                                std::size_t col_shift) {
  const std::size_t H = x.height(), W = x.width();
  const std::size_t PH = H + k.height - 1, PW = W + k.width - 1;
  std::vector<double> padded(PH * PW);
  std::vector<std::size_t> col_src(PW);
  for (std::size_t s = 0; s < PW; ++s)
    col_src[s] = (s + W * (1 + k.width) - col_shift) % W;
  Image out(x.dims());
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const auto src = x.plane(c);
    for (std::size_t r = 0; r < PH; ++r) {
      const std::size_t sr = (r + H * (1 + k.height) - row_shift) % H;
      const double* row = src.data() + sr * W;
      double* prow = padded.data() + r * PW;
      for (std::size_t s = 0; s < PW; ++s) prow[s] = row[col_src[s]];
    }
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < H; ++i) {
      double* orow = dst.data() + i * W;
      for (std::size_t a = 0; a < k.height; ++a) {
        const double* prow = padded.data() + (i + a) * PW;
        for (std::size_t b = 0; b < k.width; ++b) {
          const double t = k.taps[a * k.width + b];
          if (t == 0.0) continue;
          const double* p = prow + b;
          for (std::size_t j = 0; j < W; ++j) orow[j] += t * p[j];
        }
      }
    }
  }
  return out;
}

inline Kernel flipped(const Kernel& k) {
  Kernel f = k;
  for (std::size_t r = 0; r < k.height; ++r)
    for (std::size_t c = 0; c < k.width; ++c)
      f.taps[r * k.width + c] = k.at(k.height - 1 - r, k.width - 1 - c);
  return f;
}

}  // namespace detail

// y = k * x with periodic boundary; kernel tap (center_row, center_col) is
// the zero-shift tap.
inline Image convolve_periodic(const Image& x, const Kernel& k) {
  return detail::correlate_periodic(x, detail::flipped(k), k.height - 1 - k.center_row(),
                                    k.width - 1 - k.center_col());
}

// Adjoint of convolve_periodic.
inline Image correlate_periodic(const Image& x, const Kernel& k) {
  return detail::correlate_periodic(x, k, k.center_row(), k.center_col());
}

struct IdentityModel {};
struct CircularConvolution {
  Kernel kernel;
};
struct DownsampledConvolution {
  Kernel kernel;
  std::size_t factor = 2;
};

using ModelVariant = std::variant<IdentityModel, CircularConvolution, DownsampledConvolution>;

class ForwardModel {
 public:
  ForwardModel(ModelVariant variant, Dims input) : variant_(std::move(variant)), input_(input) {
    validate_dims(input_);
    output_ = input_;
    if (auto* d = std::get_if<DownsampledConvolution>(&variant_)) {
      if (d->factor < 1) throw DimensionError("downsampling factor must be >= 1");
      if (input_.height % d->factor != 0 || input_.width % d->factor != 0)
        throw DimensionError("downsampling factor " + std::to_string(d->factor) +
                             " does not divide " + input_.str());
      output_.height /= d->factor;
      output_.width /= d->factor;
    }
  }

  static ForwardModel identity(Dims input) { return {IdentityModel{}, input}; }
  static ForwardModel blur(Kernel k, Dims input) { return {CircularConvolution{std::move(k)}, input}; }
  static ForwardModel downsample(Kernel k, std::size_t factor, Dims input) {
    return {DownsampledConvolution{std::move(k), factor}, input};
  }

  const Dims& input_dims() const noexcept { return input_; }
  const Dims& output_dims() const noexcept { return output_; }
  const ModelVariant& variant() const noexcept { return variant_; }

  std::string describe() const {
    return std::visit(
        [](const auto& m) -> std::string {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, IdentityModel>) {
            return "identity";
          } else if constexpr (std::is_same_v<M, CircularConvolution>) {
            return "blur(" + std::to_string(m.kernel.height) + "x" +
                   std::to_string(m.kernel.width) + ")";
          } else {
            return "downsample(" + std::to_string(m.kernel.height) + "x" +
                   std::to_string(m.kernel.width) + ", factor=" + std::to_string(m.factor) + ")";
          }
        },
        variant_);
  }

  Image apply(const Image& x) const {
    require_same_dims(input_, x.dims(), "ForwardModel::apply");
    return std::visit(
        [&](const auto& m) -> Image {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, IdentityModel>) {
            return x;
          } else if constexpr (std::is_same_v<M, CircularConvolution>) {
            return convolve_periodic(x, m.kernel);
          } else {
            const Image blurred = convolve_periodic(x, m.kernel);
            Image out(output_);
            for (std::size_t c = 0; c < out.channels(); ++c)
              for (std::size_t i = 0; i < out.height(); ++i)
                for (std::size_t j = 0; j < out.width(); ++j)
                  out.at(c, i, j) = blurred.at(c, i * m.factor, j * m.factor);
            return out;
          }
        },
        variant_);
  }

  Image adjoint(const Image& u) const {
    require_same_dims(output_, u.dims(), "ForwardModel::adjoint");
    return std::visit(
        [&](const auto& m) -> Image {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, IdentityModel>) {
            return u;
          } else if constexpr (std::is_same_v<M, CircularConvolution>) {
            return correlate_periodic(u, m.kernel);
          } else {
            Image up(input_);
            for (std::size_t c = 0; c < u.channels(); ++c)
              for (std::size_t i = 0; i < u.height(); ++i)
                for (std::size_t j = 0; j < u.width(); ++j)
                  up.at(c, i * m.factor, j * m.factor) = u.at(c, i, j);
            return correlate_periodic(up, m.kernel);
          }
        },
        variant_);
  }

  // A^T A x
  Image normal(const Image& x) const { return adjoint(apply(x)); }

 private:
  ModelVariant variant_;
  Dims input_;
  Dims output_;
};

// Forward model plus observation y.
struct Problem {
  Problem(ForwardModel m, Image y) : model(std::move(m)), observation(std::move(y)) {
    require_same_dims(model.output_dims(), observation.dims(), "Problem observation");
  }

  ForwardModel model;
  Image observation;
};

inline double data_loss(const Problem& problem, const Image& x) {
  return 0.5 * std::pow(distance(problem.model.apply(x), problem.observation), 2);
}

// A^T (A x - y)
inline Image grad_f(const Problem& problem, const Image& x) {
  return problem.model.adjoint(problem.model.apply(x) - problem.observation);
}

struct CgSettings {
  double tol = 1e-6;
  std::size_t max_iter = 200;
  friend bool operator==(const CgSettings&, const CgSettings&) = default;
};

struct CgStats {
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

// argmin_x 1/2 ||A x - y||^2 + 1/(2 mu) ||x - z||^2, by conjugate gradient on
// (A^T A + I/mu) x = A^T y + z/mu, warm-started at z.
inline Image prox_f(const Problem& problem, const Image& z, double mu,
                    const CgSettings& cg = {}, CgStats* stats = nullptr) {
  if (!(mu > 0.0)) throw Error("prox_f: mu must be > 0");
  require_same_dims(problem.model.input_dims(), z.dims(), "prox_f");
  const double inv_mu = 1.0 / mu;
  auto system = [&](const Image& v) { return lincomb(1.0, problem.model.normal(v), inv_mu, v); };

  const Image rhs = lincomb(1.0, problem.model.adjoint(problem.observation), inv_mu, z);
  const double rhs_norm = norm(rhs);
  Image x = z;
  Image r = rhs - system(x);
  double rr = dot(r, r);
  const double target = cg.tol * rhs_norm;
  std::size_t it = 0;
  if (std::sqrt(rr) > target) {
    Image p = r;
    for (; it < cg.max_iter; ++it) {
      const Image q = system(p);
      const double alpha = rr / dot(p, q);
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * q[i];
      }
      const double rr_new = dot(r, r);
      if (std::sqrt(rr_new) <= target) {
        rr = rr_new;
        ++it;
        break;
      }
      const double beta = rr_new / rr;
      rr = rr_new;
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    }
    // The recursive residual drifts from the true one; confirm on exit.
    r = rhs - system(x);
    rr = dot(r, r);
  }
  const double rel = rhs_norm > 0.0 ? std::sqrt(rr) / rhs_norm : std::sqrt(rr);
  if (stats) *stats = CgStats{it, rel};
  if (!(std::sqrt(rr) <= target) && rhs_norm > 0.0)
    throw ConvergenceError("prox_f: conjugate gradient did not converge in " +
                               std::to_string(cg.max_iter) + " iterations", rel);
  return x;
}

}  // namespace vista
