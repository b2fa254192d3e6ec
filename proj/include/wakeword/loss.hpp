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

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "wakeword/common.hpp"
#include "wakeword/matrix.hpp"
#include "wakeword/tokens.hpp"

namespace wakeword {

// Stand-in for -inf in log space; avoids NaN from inf - inf.
inline constexpr double kLogZero = -1e30;

namespace detail {

template <class T>
T log_add(T a, T b) {
  if (a < b) std::swap(a, b);
  if (a <= static_cast<T>(kLogZero)) return static_cast<T>(kLogZero);
  T d = b - a;
  if (d < static_cast<T>(-80)) return a;  // exp underflows anyway
  return a + std::log1p(std::exp(d));
}

}  // namespace detail

// Loss value plus its gradient w.r.t. the emission log-probabilities.
// Gradients are returned projected onto the log-softmax tangent (rows sum
// to zero), which makes them exactly the gradient w.r.t. the pre-softmax
// logits; svdf::backward composes with either convention unchanged.
template <class T>
struct LossResult {
  T loss = T(0);
  Matrix<T> demissions;
  bool feasible = true;  // false: loss = +inf, gradient all zero
};

// Frame-wise cross-entropy against a full per-frame alignment.
// loss = -(1/T) sum_t logprobs[t, target[t]]
template <class T>
LossResult<T> ce_loss(const Matrix<T>& logprobs, std::span<const int> target) {
  check_arg(logprobs.rows() == target.size(),
            "alignment length must equal the number of frames");
  check_arg(logprobs.rows() > 0, "empty emission matrix");
  const size_t t_max = logprobs.rows();
  const size_t n_classes = logprobs.cols();
  for (int tok : target) {
    if (tok == kBlankToken)
      throw Error(ErrorKind::kInvalidArgument,
                  "blank is never a cross-entropy target");
    check_arg(tok >= 0 && static_cast<size_t>(tok) < n_classes,
              "target token out of range");
  }
  LossResult<T> res;
  res.demissions = Matrix<T>(t_max, n_classes);
  const T inv_t = T(1) / static_cast<T>(t_max);
  T loss = T(0);
  for (size_t t = 0; t < t_max; ++t) {
    const T* lp = logprobs.row(t);
    loss -= lp[target[t]];
    T* g = res.demissions.row(t);
    // softmax(row) - onehot, scaled by 1/T
    for (size_t c = 0; c < n_classes; ++c) g[c] = std::exp(lp[c]) * inv_t;
    g[target[t]] -= inv_t;
  }
  res.loss = loss * inv_t;
  return res;
}

// Standard CTC over the expanded sequence blank,l1,blank,...,lL,blank.
// Forward/backward in log space; numerically stable for long utterances.
// An infeasible (T, target) pair yields +inf loss with a zero gradient and
// feasible=false rather than an exception, so one corrupt corpus row
// cannot abort a training run.
template <class T>
LossResult<T> ctc_loss(const Matrix<T>& logprobs, std::span<const int> target,
                       int blank = kBlankToken) {
  check_arg(logprobs.rows() > 0, "empty emission matrix");
  check_arg(!target.empty(), "CTC target must contain at least one token");
  const size_t t_max = logprobs.rows();
  const size_t n_classes = logprobs.cols();
  for (int tok : target) {
    if (tok == blank)
      throw Error(ErrorKind::kInvalidArgument,
                  "CTC target must not contain the blank token");
    check_arg(tok >= 0 && static_cast<size_t>(tok) < n_classes,
              "target token out of range");
  }

  const size_t len = target.size();
  size_t repeats = 0;
  for (size_t i = 0; i + 1 < len; ++i)
    if (target[i] == target[i + 1]) ++repeats;

  LossResult<T> res;
  res.demissions = Matrix<T>(t_max, n_classes, T(0));
  if (t_max < len + repeats) {
    res.loss = std::numeric_limits<T>::infinity();
    res.feasible = false;
    return res;
  }

  // Expanded labels: blank at even s, target[(s-1)/2] at odd s.
  const size_t s_max = 2 * len + 1;
  auto label = [&](size_t s) -> int {
    return (s % 2 == 0) ? blank : target[(s - 1) / 2];
  };
  // Skip transition s-2 -> s is allowed between distinct non-blank labels.
  auto can_skip = [&](size_t s) -> bool {
    return s % 2 == 1 && s >= 2 && target[(s - 1) / 2] != target[(s - 3) / 2];
  };

  const T logzero = static_cast<T>(kLogZero);
  Matrix<T> alpha(t_max, s_max, logzero);
  alpha(0, 0) = logprobs(0, static_cast<size_t>(blank));
  if (s_max > 1) alpha(0, 1) = logprobs(0, static_cast<size_t>(target[0]));
  for (size_t t = 1; t < t_max; ++t) {
    const T* lp = logprobs.row(t);
    const T* prev = alpha.row(t - 1);
    T* cur = alpha.row(t);
    for (size_t s = 0; s < s_max; ++s) {
      T acc = prev[s];
      if (s >= 1) acc = detail::log_add(acc, prev[s - 1]);
      if (can_skip(s)) acc = detail::log_add(acc, prev[s - 2]);
      cur[s] = (acc <= logzero) ? logzero : acc + lp[label(s)];
    }
  }
  T log_p = detail::log_add(alpha(t_max - 1, s_max - 1),
                            s_max >= 2 ? alpha(t_max - 1, s_max - 2) : logzero);
  if (log_p <= logzero) {
    // No admissible path carries probability (can happen with hard-zero
    // emissions); treat like infeasibility.
    res.loss = std::numeric_limits<T>::infinity();
    res.feasible = false;
    return res;
  }
  res.loss = -log_p;

  // beta[t][s]: completion probability from s emitting frames t+1..T-1,
  // so alpha + beta sums to log_p at every t.
  Matrix<T> beta(t_max, s_max, logzero);
  beta(t_max - 1, s_max - 1) = T(0);
  if (s_max >= 2) beta(t_max - 1, s_max - 2) = T(0);
  for (size_t t = t_max - 1; t-- > 0;) {
    const T* lp_next = logprobs.row(t + 1);
    const T* nxt = beta.row(t + 1);
    T* cur = beta.row(t);
    for (size_t s = 0; s < s_max; ++s) {
      T acc = (nxt[s] <= logzero) ? logzero
                                  : nxt[s] + lp_next[label(s)];
      if (s + 1 < s_max && nxt[s + 1] > logzero)
        acc = detail::log_add(acc, nxt[s + 1] + lp_next[label(s + 1)]);
      if (s + 2 < s_max && can_skip(s + 2) && nxt[s + 2] > logzero)
        acc = detail::log_add(acc, nxt[s + 2] + lp_next[label(s + 2)]);
      cur[s] = acc;
    }
  }

  // Posterior per symbol, then project: grad = p - posterior (rows sum 0).
  std::vector<T> acc_by_class(n_classes);
  for (size_t t = 0; t < t_max; ++t) {
    std::fill(acc_by_class.begin(), acc_by_class.end(), logzero);
    const T* a = alpha.row(t);
    const T* b = beta.row(t);
    for (size_t s = 0; s < s_max; ++s) {
      if (a[s] <= logzero || b[s] <= logzero) continue;
      int k = label(s);
      acc_by_class[k] = detail::log_add(acc_by_class[k], a[s] + b[s]);
    }
    const T* lp = logprobs.row(t);
    T* g = res.demissions.row(t);
    for (size_t c = 0; c < n_classes; ++c) {
      T posterior = (acc_by_class[c] <= logzero)
                        ? T(0)
                        : std::exp(acc_by_class[c] - log_p);
      g[c] = std::exp(lp[c]) - posterior;
    }
  }
  return res;
}

// Exhaustive verification oracle: enumerates every frame-label path,
// collapses it (merge repeats, then drop blanks), and sums the probability
// of paths matching the target. Only usable for tiny T.
template <class T>
T ctc_bruteforce(const Matrix<T>& logprobs, std::span<const int> target,
                 int blank = kBlankToken) {
  const size_t t_max = logprobs.rows();
  const size_t n_classes = logprobs.cols();
  check_arg(t_max >= 1, "empty emission matrix");
  if (t_max > 6)
    throw Error(ErrorKind::kInvalidArgument,
                "brute-force enumeration limited to T <= 6");
  double total = kLogZero;
  std::vector<int> path(t_max, 0);
  std::vector<int> collapsed;
  collapsed.reserve(t_max);
  while (true) {
    collapsed.clear();
    int prev = -1;
    for (size_t t = 0; t < t_max; ++t) {
      int s = path[t];
      if (s != prev && s != blank) collapsed.push_back(s);
      prev = s;
    }
    if (collapsed.size() == target.size() &&
        std::equal(collapsed.begin(), collapsed.end(), target.begin())) {
      double lp = 0.0;
      for (size_t t = 0; t < t_max; ++t)
        lp += static_cast<double>(logprobs(t, static_cast<size_t>(path[t])));
      total = detail::log_add(total, lp);
    }
    // base-n_classes odometer
    size_t d = 0;
    while (d < t_max) {
      if (++path[d] < static_cast<int>(n_classes)) break;
      path[d] = 0;
      ++d;
    }
    if (d == t_max) break;
  }
  if (total <= kLogZero) return std::numeric_limits<T>::infinity();
  return static_cast<T>(-total);
}

}  // namespace wakeword
