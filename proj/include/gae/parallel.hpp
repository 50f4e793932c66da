#pragma once

#include "gae/common.hpp"

#include <omp.h>

#include <algorithm>
#include <vector>

namespace gae::parallel {

// Items per reduction block. Fixed, so the floating-point summation order of
// the parallel path is a function of the problem size only.
inline constexpr long kBlockSize = 64;

namespace detail {

// Block sums combined pairwise in index order. The summation order depends
// only on n, so the serial and threaded paths give bit-identical results.
template <class Fn>
Vec reduce_blocks(long n, long dim, Fn&& fn, bool threaded) {
  const long blocks = (n + kBlockSize - 1) / kBlockSize;
  std::vector<Vec> partial(static_cast<std::size_t>(blocks));
  auto run_block = [&](long b) {
    Vec acc = Vec::Zero(dim);
    const long end = std::min(n, (b + 1) * kBlockSize);
    for (long i = b * kBlockSize; i < end; ++i) fn(i, acc);
    partial[static_cast<std::size_t>(b)] = std::move(acc);
  };
  if (threaded) {
#pragma omp parallel for schedule(static)
    for (long b = 0; b < blocks; ++b) run_block(b);
  } else {
    for (long b = 0; b < blocks; ++b) run_block(b);
  }
  for (long width = 1; width < blocks; width *= 2) {
    for (long b = 0; b + width < blocks; b += 2 * width) {
      partial[static_cast<std::size_t>(b)] += partial[static_cast<std::size_t>(b + width)];
    }
  }
  return blocks > 0 ? partial.front() : Vec::Zero(dim);
}

}  // namespace detail

// Sums fn(i, acc) contributions for i in [0, n) into a vector of length dim.
// fn must add (not assign) its contribution into acc.
template <class Fn>
Vec reduce_serial(long n, long dim, Fn&& fn) {
  return detail::reduce_blocks(n, dim, fn, false);
}

template <class Fn>
Vec reduce_blocked(long n, long dim, Fn&& fn) {
  return detail::reduce_blocks(n, dim, fn, true);
}

template <class Fn>
Vec reduce(Exec exec, long n, long dim, Fn&& fn) {
  return exec == Exec::Serial ? reduce_serial(n, dim, fn) : reduce_blocked(n, dim, fn);
}

// Scalar convenience wrapper.
template <class Fn>
double reduce_scalar(Exec exec, long n, Fn&& fn) {
  auto wrapped = [&](long i, Vec& acc) { acc[0] += fn(i); };
  return reduce(exec, n, 1, wrapped)[0];
}

// Applies fn(i) for i in [0, n); each call must write only to slot i.
template <class Fn>
void for_each_index(Exec exec, long n, Fn&& fn) {
  if (exec == Exec::Serial) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) fn(i);
}

}  // namespace gae::parallel
