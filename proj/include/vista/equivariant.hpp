#pragma once

// Dihedral group D4 acting on images, and the equivariant denoiser wrapper
//   averaged: x -> 1/8 sum_g g^-1 D(g x)
//   sampled:  x -> g^-1 D(g x) with g drawn uniformly per call.

#include <array>
#include <memory>
#include <mutex>
#include <string>

#include "vista/denoiser.hpp"
#include "vista/error.hpp"
#include "vista/image.hpp"

namespace vista {

// Element g = rot90^rotations o (flip if flipped); rotations counterclockwise,
// flip mirrors columns.
struct D4Element {
  unsigned rotations = 0;  // 0..3
  bool flipped = false;

  bool turns_quarter() const noexcept { return rotations % 2 == 1; }
  friend bool operator==(const D4Element&, const D4Element&) = default;
};

inline constexpr std::array<D4Element, 8> kD4 = {{{0, false}, {1, false}, {2, false}, {3, false},
                                                  {0, true},  {1, true},  {2, true},  {3, true}}};

namespace detail {

inline Image rot90(const Image& x) {
  const std::size_t H = x.height(), W = x.width();
  Image out(Dims{W, H, x.channels()});
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t col = 0; col < W; ++col) out.at(c, W - 1 - col, y) = x.at(c, y, col);
  return out;
}

inline Image flip_columns(const Image& x) {
  Image out(x.dims());
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t y = 0; y < x.height(); ++y)
      for (std::size_t col = 0; col < x.width(); ++col)
        out.at(c, y, x.width() - 1 - col) = x.at(c, y, col);
  return out;
}

inline void require_square_for(const D4Element& g, const Image& x) {
  if (g.turns_quarter() && !x.dims().square())
    throw DimensionError("D4 quarter-turn requires a square image, got " + x.dims().str());
}

}  // namespace detail

inline Image d4_apply(const D4Element& g, const Image& x) {
  detail::require_square_for(g, x);
  Image out = g.flipped ? detail::flip_columns(x) : x;
  for (unsigned r = 0; r < g.rotations % 4; ++r) out = detail::rot90(out);
  return out;
}

inline Image d4_inverse(const D4Element& g, const Image& x) {
  detail::require_square_for(g, x);
  Image out = x;
  for (unsigned r = 0; r < (4 - g.rotations % 4) % 4; ++r) out = detail::rot90(out);
  return g.flipped ? detail::flip_columns(out) : out;
}

enum class EquivariantMode { averaged, sampled };

inline Denoiser equivariant_wrap(Denoiser inner, EquivariantMode mode, Rng rng = Rng{0}) {
  if (mode == EquivariantMode::averaged) {
    return Denoiser("equivariant_avg(" + inner.descriptor() + ")", [inner](const Image& x) {
      Image acc(x.dims());
      for (const D4Element& g : kD4) acc += d4_inverse(g, inner(d4_apply(g, x)));
      return acc * (1.0 / 8.0);
    });
  }
  struct State {
    std::mutex lock;
    Rng rng;
  };
  auto state = std::make_shared<State>();
  state->rng = rng;
  return Denoiser("equivariant_sampled(" + inner.descriptor() + ",seed=" +
                      std::to_string(rng.seed()) + ")",
                  [inner, state](const Image& x) {
                    D4Element g;
                    {
                      std::lock_guard guard(state->lock);
                      g = kD4[state->rng.index(kD4.size())];
                    }
                    return d4_inverse(g, inner(d4_apply(g, x)));
                  });
}

}  // namespace vista
