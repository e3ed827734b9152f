#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "emgdet/error.hpp"

namespace emgdet {

inline constexpr double kSignificanceLevel = 0.05;

namespace stats_detail {

// Two-sided tail of the standard normal.
inline double normal_two_sided_p(double z) {
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

// Ranks with ties resolved by midranks.
inline std::vector<double> midranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;  // average of i+1 .. j+1
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace stats_detail

struct WilcoxonResult {
  double statistic = 0.0;  // W+ : rank sum of positive differences
  double p_value = 1.0;
  std::size_t n_used = 0;  // pairs remaining after discarding zero differences
  bool exact = false;
};

// Wilcoxon signed-rank test, two-sided. Zero differences are discarded
// (Wilcoxon's original rule). Exact null distribution for n <= 25 remaining
// pairs (tie configurations included, via the doubled-rank distribution);
// normal approximation with tie-corrected variance and continuity correction
// beyond that.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                           const std::vector<double>& b) {
  require(a.size() == b.size(), ErrorKind::dimension_mismatch,
          "paired samples must have equal length");
  require(!a.empty(), ErrorKind::empty_input, "empty paired samples");

  std::vector<double> diffs;
  diffs.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  require(!diffs.empty(), ErrorKind::degenerate_statistic,
          "all paired differences are zero; test undefined");

  const std::size_t n = diffs.size();
  std::vector<double> magnitudes(n);
  for (std::size_t i = 0; i < n; ++i) magnitudes[i] = std::abs(diffs[i]);
  const auto ranks = stats_detail::midranks(magnitudes);

  double w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (diffs[i] > 0.0) w_plus += ranks[i];
  }

  WilcoxonResult result;
  result.statistic = w_plus;
  result.n_used = n;

  if (n <= 25) {
    // Exact distribution of W+ over all 2^n sign assignments, conditional on
    // the observed (possibly tied) ranks. Midranks are multiples of 0.5, so
    // doubling them gives an integer-valued dynamic program.
    std::vector<std::uint64_t> doubled(n);
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      doubled[i] = static_cast<std::uint64_t>(std::llround(2.0 * ranks[i]));
      total += doubled[i];
    }
    std::vector<double> counts(total + 1, 0.0);
    counts[0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t r = doubled[i];
      for (std::size_t s = total + 1; s-- > r;) {
        counts[s] += counts[s - r];
      }
    }
    const double denom = std::pow(2.0, static_cast<double>(n));
    const auto w2 = static_cast<std::uint64_t>(std::llround(2.0 * w_plus));
    double tail_le = 0.0, tail_ge = 0.0;
    for (std::size_t s = 0; s <= total; ++s) {
      if (s <= w2) tail_le += counts[s];
      if (s >= w2) tail_ge += counts[s];
    }
    result.p_value = std::min(1.0, 2.0 * std::min(tail_le, tail_ge) / denom);
    result.exact = true;
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    double tie_term = 0.0;
    {
      std::vector<double> sorted = magnitudes;
      std::sort(sorted.begin(), sorted.end());
      std::size_t i = 0;
      while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
      }
    }
    const double variance = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    require(variance > 0.0, ErrorKind::degenerate_statistic,
            "zero variance in Wilcoxon normal approximation");
    double numerator = w_plus - mean;
    // Continuity correction toward the mean.
    if (numerator > 0.5) {
      numerator -= 0.5;
    } else if (numerator < -0.5) {
      numerator += 0.5;
    } else {
      numerator = 0.0;
    }
    result.p_value = stats_detail::normal_two_sided_p(numerator / std::sqrt(variance));
    result.exact = false;
  }
  return result;
}

struct KendallResult {
  double tau = 0.0;  // tau-b (tie corrected)
  double p_value = 1.0;
};

namespace stats_detail {

// Counts discordant pairs by merge-sorting y after a stable sort by x.
inline std::uint64_t merge_count(std::vector<double>& y, std::vector<double>& buffer,
                                 std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = merge_count(y, buffer, lo, mid) + merge_count(y, buffer, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (y[j] < y[i]) {
      swaps += mid - i;
      buffer[k++] = y[j++];
    } else {
      buffer[k++] = y[i++];
    }
  }
  while (i < mid) buffer[k++] = y[i++];
  while (j < hi) buffer[k++] = y[j++];
  std::copy(buffer.begin() + static_cast<std::ptrdiff_t>(lo),
            buffer.begin() + static_cast<std::ptrdiff_t>(hi),
            y.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace stats_detail

// Kendall's tau-b with the normal approximation on the tie-corrected
// variance. O(n log n) (Knight's algorithm).
inline KendallResult kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), ErrorKind::dimension_mismatch, "x/y length mismatch");
  const std::size_t n = x.size();
  require(n >= 2, ErrorKind::invalid_argument, "kendall_tau needs at least two observations");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });

  // Tie bookkeeping: joint ties (same x and y), x ties, y ties.
  double n1 = 0.0, n2 = 0.0, n3 = 0.0;       // pair counts: x ties, y ties, joint ties
  double vt = 0.0, vu = 0.0;                  // Sum t(t-1)(2t+5) terms
  double t2_sum = 0.0, u2_sum = 0.0;          // Sum t(t-1), u(u-1)
  double t3_sum = 0.0, u3_sum = 0.0;          // Sum t(t-1)(t-2), u(u-1)(u-2)
  {
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
      const double t = static_cast<double>(j - i + 1);
      n1 += t * (t - 1.0) / 2.0;
      vt += t * (t - 1.0) * (2.0 * t + 5.0);
      t2_sum += t * (t - 1.0);
      t3_sum += t * (t - 1.0) * (t - 2.0);
      // joint ties within the x group
      std::size_t p = i;
      while (p <= j) {
        std::size_t q = p;
        while (q + 1 <= j && y[order[q + 1]] == y[order[p]]) ++q;
        const double s = static_cast<double>(q - p + 1);
        n3 += s * (s - 1.0) / 2.0;
        p = q + 1;
      }
      i = j + 1;
    }
  }
  {
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[i];
    std::sort(ys.begin(), ys.end());
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && ys[j + 1] == ys[i]) ++j;
      const double u = static_cast<double>(j - i + 1);
      n2 += u * (u - 1.0) / 2.0;
      vu += u * (u - 1.0) * (2.0 * u + 5.0);
      u2_sum += u * (u - 1.0);
      u3_sum += u * (u - 1.0) * (u - 2.0);
      i = j + 1;
    }
  }

  std::vector<double> y_sorted_by_x(n);
  for (std::size_t i = 0; i < n; ++i) y_sorted_by_x[i] = y[order[i]];
  std::vector<double> buffer(n);
  const auto discordant_swaps = stats_detail::merge_count(y_sorted_by_x, buffer, 0, n);

  const double n0 = static_cast<double>(n) * (static_cast<double>(n) - 1.0) / 2.0;
  // concordant - discordant = n0 - n1 - n2 + n3 - 2*swaps
  const double diff = n0 - n1 - n2 + n3 - 2.0 * static_cast<double>(discordant_swaps);
  const double denom = std::sqrt((n0 - n1) * (n0 - n2));
  require(denom > 0.0, ErrorKind::degenerate_statistic,
          "all observations tied in x or y; tau undefined");

  KendallResult result;
  result.tau = diff / denom;

  const double nn = static_cast<double>(n);
  const double v0 = nn * (nn - 1.0) * (2.0 * nn + 5.0);
  double variance = (v0 - vt - vu) / 18.0;
  variance += t2_sum * u2_sum / (2.0 * nn * (nn - 1.0));
  if (n > 2) {
    variance += t3_sum * u3_sum / (9.0 * nn * (nn - 1.0) * (nn - 2.0));
  }
  require(variance > 0.0, ErrorKind::degenerate_statistic,
          "zero variance in Kendall normal approximation");
  result.p_value = stats_detail::normal_two_sided_p(diff / std::sqrt(variance));
  return result;
}

inline bool significant(double p_value) { return p_value < kSignificanceLevel; }

}  // namespace emgdet
