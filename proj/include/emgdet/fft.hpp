#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

#include "emgdet/error.hpp"

namespace emgdet::fft {

using cplx = std::complex<double>;

constexpr double kPi = 3.14159265358979323846;

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
inline void fft_pow2(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n < 2) return;
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const cplx wlen(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& value : a) value *= scale;
  }
}

// DFT of arbitrary length. Power-of-two sizes run radix-2 directly; other
// sizes go through Bluestein's chirp-z reduction to a power-of-two FFT.
// Reusing a plan amortizes the chirp tables across repeated transforms.
class DftPlan {
 public:
  explicit DftPlan(std::size_t n) : n_(n) {
    require(n >= 1, ErrorKind::invalid_argument, "DFT length must be >= 1");
    if ((n & (n - 1)) == 0) return;  // radix-2 path needs no tables
    m_ = next_pow2(2 * n - 1);
    chirp_.resize(n);
    kernel_fft_.assign(m_, cplx(0.0, 0.0));
    for (std::size_t k = 0; k < n; ++k) {
      // angle = pi * k^2 / n, computed with k^2 mod 2n to keep precision
      const std::size_t k2 = (k * k) % (2 * n);
      const double angle = kPi * static_cast<double>(k2) / static_cast<double>(n);
      chirp_[k] = cplx(std::cos(angle), -std::sin(angle));
      kernel_fft_[k] = std::conj(chirp_[k]);
      if (k != 0) kernel_fft_[m_ - k] = std::conj(chirp_[k]);
    }
    fft_pow2(kernel_fft_, false);
  }

  std::size_t length() const { return n_; }

  std::vector<cplx> forward(const std::vector<cplx>& input) const {
    require(input.size() == n_, ErrorKind::dimension_mismatch,
            "DFT input length does not match plan");
    if ((n_ & (n_ - 1)) == 0) {
      std::vector<cplx> out = input;
      fft_pow2(out, false);
      return out;
    }
    std::vector<cplx> work(m_, cplx(0.0, 0.0));
    for (std::size_t k = 0; k < n_; ++k) work[k] = input[k] * chirp_[k];
    fft_pow2(work, false);
    for (std::size_t k = 0; k < m_; ++k) work[k] *= kernel_fft_[k];
    fft_pow2(work, true);
    std::vector<cplx> out(n_);
    for (std::size_t k = 0; k < n_; ++k) out[k] = work[k] * chirp_[k];
    return out;
  }

  std::vector<cplx> forward_real(const std::vector<double>& input) const {
    std::vector<cplx> tmp(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) tmp[i] = cplx(input[i], 0.0);
    return forward(tmp);
  }

 private:
  std::size_t n_;
  std::size_t m_ = 0;
  std::vector<cplx> chirp_;
  std::vector<cplx> kernel_fft_;
};

namespace detail {

inline std::vector<double> convolve_direct(const std::vector<double>& a,
                                           const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = a[i];
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += ai * b[j];
  }
  return out;
}

}  // namespace detail

// Full linear convolution. Small products are computed directly; large ones
// use overlap-save with a bounded FFT block so memory stays flat for long
// recordings.
inline std::vector<double> convolve_full(const std::vector<double>& signal,
                                         const std::vector<double>& kernel) {
  require(!signal.empty() && !kernel.empty(), ErrorKind::empty_input,
          "convolution requires non-empty inputs");
  const std::size_t out_len = signal.size() + kernel.size() - 1;
  if (static_cast<double>(signal.size()) * static_cast<double>(kernel.size()) < 262144.0) {
    return detail::convolve_direct(signal, kernel);
  }

  constexpr std::size_t kMaxBlock = std::size_t(1) << 20;
  std::size_t block = next_pow2(2 * kernel.size());
  block = std::min(std::max(block, std::size_t(1) << 14), kMaxBlock);
  if (block < 2 * kernel.size()) block = next_pow2(2 * kernel.size());
  const std::size_t step = block - kernel.size() + 1;

  std::vector<cplx> kernel_fft(block, cplx(0.0, 0.0));
  for (std::size_t i = 0; i < kernel.size(); ++i) kernel_fft[i] = cplx(kernel[i], 0.0);
  fft_pow2(kernel_fft, false);

  std::vector<double> out(out_len, 0.0);
  std::vector<cplx> work(block);
  for (std::size_t start = 0; start < out_len; start += step) {
    // Overlap-save: the block holds signal[start - klen + 1 .. start + step - 1].
    std::fill(work.begin(), work.end(), cplx(0.0, 0.0));
    const std::ptrdiff_t offset =
        static_cast<std::ptrdiff_t>(start) - static_cast<std::ptrdiff_t>(kernel.size()) + 1;
    for (std::size_t i = 0; i < block; ++i) {
      const std::ptrdiff_t src = offset + static_cast<std::ptrdiff_t>(i);
      if (src >= 0 && src < static_cast<std::ptrdiff_t>(signal.size())) {
        work[i] = cplx(signal[static_cast<std::size_t>(src)], 0.0);
      }
    }
    fft_pow2(work, false);
    for (std::size_t i = 0; i < block; ++i) work[i] *= kernel_fft[i];
    fft_pow2(work, true);
    const std::size_t valid = std::min(step, out_len - start);
    for (std::size_t i = 0; i < valid; ++i) {
      out[start + i] = work[kernel.size() - 1 + i].real();
    }
  }
  return out;
}

}  // namespace emgdet::fft
