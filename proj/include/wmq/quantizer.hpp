#pragma once

// Symmetric per-output-channel, weight-only post-training quantization.
//
//   s_j = max|W_j| / (2^(b-1) - 1)
//   q_j = clip(round(W_j / s_j), -(2^(b-1) - 1), 2^(b-1) - 1)
//   W~_j = s_j * q_j
//
// Rounding is half-away-from-zero. A row whose max is zero gets s_j = 0 and
// zero codes. Scales are held one precision step wider than the weights so
// that fake quantization is a bit-exact fixed point: the dequantized row max
// rounds back to the original max, which reproduces the same scale.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wmq/error.hpp"

namespace wmq {

inline constexpr int kMinBits = 2;
inline constexpr int kMaxBits = 8;

/// Largest code magnitude at bitwidth b.
constexpr int clip_bound(int bits) noexcept { return (1 << (bits - 1)) - 1; }

template <class T>
struct wide_scalar;
template <>
struct wide_scalar<float> {
  using type = double;
};
template <>
struct wide_scalar<double> {
  using type = long double;
};
template <class T>
using wide_scalar_t = typename wide_scalar<T>::type;

template <class T>
struct QuantizedTensor {
  using scale_type = wide_scalar_t<T>;

  int bits = 0;
  std::int64_t out_channels = 0;
  std::int64_t in_channels = 0;
  std::vector<scale_type> scales;  // one per output row
  std::vector<std::int8_t> codes;  // row-major, out_channels x in_channels
};

inline void check_bits(int bits) {
  if (bits < kMinBits || bits > kMaxBits)
    throw ValidationError("bitwidth " + std::to_string(bits) + " outside [" + std::to_string(kMinBits) + ", " +
                          std::to_string(kMaxBits) + "]");
}

template <class T>
QuantizedTensor<T> quantize_tensor(std::span<const T> weights, std::int64_t out_channels, std::int64_t in_channels,
                                   int bits) {
  using W = wide_scalar_t<T>;
  check_bits(bits);
  if (out_channels <= 0 || in_channels <= 0 ||
      static_cast<std::size_t>(out_channels * in_channels) != weights.size())
    throw ValidationError("weight shape does not match data length");
  for (T v : weights)
    if (!std::isfinite(v)) throw ValidationError("non-finite weight passed to quantizer");

  const int qmax = clip_bound(bits);
  QuantizedTensor<T> q;
  q.bits = bits;
  q.out_channels = out_channels;
  q.in_channels = in_channels;
  q.scales.resize(static_cast<std::size_t>(out_channels));
  q.codes.resize(weights.size());

  for (std::int64_t j = 0; j < out_channels; ++j) {
    const auto row = weights.subspan(static_cast<std::size_t>(j * in_channels), static_cast<std::size_t>(in_channels));
    W row_max = 0;
    for (T v : row) row_max = std::max(row_max, static_cast<W>(std::fabs(v)));
    if (row_max == 0) continue;  // s_j = 0, codes stay 0
    const W s = row_max / static_cast<W>(qmax);
    q.scales[static_cast<std::size_t>(j)] = s;
    for (std::int64_t k = 0; k < in_channels; ++k) {
      W r = std::round(static_cast<W>(row[static_cast<std::size_t>(k)]) / s);
      if (r > qmax) r = qmax;
      if (r < -qmax) r = -qmax;
      q.codes[static_cast<std::size_t>(j * in_channels + k)] = static_cast<std::int8_t>(r);
    }
  }
  return q;
}

template <class T>
std::vector<T> dequantize_tensor(const QuantizedTensor<T>& q) {
  using W = wide_scalar_t<T>;
  std::vector<T> out(q.codes.size());
  for (std::int64_t j = 0; j < q.out_channels; ++j) {
    const W s = q.scales[static_cast<std::size_t>(j)];
    for (std::int64_t k = 0; k < q.in_channels; ++k) {
      const auto i = static_cast<std::size_t>(j * q.in_channels + k);
      out[i] = static_cast<T>(s * static_cast<W>(q.codes[i]));
    }
  }
  return out;
}

/// dequantize(quantize(W, b)); same shape as W.
template <class T>
std::vector<T> fake_quantize_tensor(std::span<const T> weights, std::int64_t out_channels, std::int64_t in_channels,
                                    int bits) {
  return dequantize_tensor(quantize_tensor(weights, out_channels, in_channels, bits));
}

/// Checks the QuantizedTensor invariants; throws ValidationError.
template <class T>
void validate_quantized(const QuantizedTensor<T>& q) {
  check_bits(q.bits);
  if (q.scales.size() != static_cast<std::size_t>(q.out_channels))
    throw ValidationError("scales length differs from out_channels");
  if (q.codes.size() != static_cast<std::size_t>(q.out_channels * q.in_channels))
    throw ValidationError("codes length differs from shape");
  const int qmax = clip_bound(q.bits);
  for (std::int64_t j = 0; j < q.out_channels; ++j) {
    const auto s = q.scales[static_cast<std::size_t>(j)];
    if (!(s >= 0)) throw ValidationError("negative or NaN scale");
    for (std::int64_t k = 0; k < q.in_channels; ++k) {
      const int c = q.codes[static_cast<std::size_t>(j * q.in_channels + k)];
      if (c > qmax || c < -qmax) throw ValidationError("code outside clip bound");
      if (s == 0 && c != 0) throw ValidationError("non-zero code in zero-scale row");
    }
  }
}

}  // namespace wmq
