#pragma once

// Retraction of a computably closed Banach subspace M of a metric space X
// by probabilistic projections, composed with modified limits.

#include <banachkit/exactnum.hpp>
#include <banachkit/operators.hpp>
#include <banachkit/spaces.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

namespace banachkit {

/// max{x - y, 0}
inline CReal trunc_minus(const CReal& x, const CReal& y) { return max(x - y, CReal(0)); }

/// Crossing point of a strictly decreasing H with the level c, clamped to
/// [lo, hi].  Probes at 3/8 and 5/8: one of H(m1) > c, H(m2) < c always certifies.
inline CReal clamped_decreasing_inverse(std::function<CReal(const Rat&)> H, CReal c, Rat lo,
                                        Rat hi, std::size_t budget = kDefaultBudget) {
  auto fn = std::make_shared<std::function<CReal(const Rat&)>>(std::move(H));
  Rat bound = max_of(abs_of(lo), abs_of(hi));
  return CReal(
      [fn, c, lo, hi, budget](long k) -> Rat {
        Rat a = lo, b = hi;
        Rat width = pow2(-(k + 1));
        long p = 0;
        while (b - a > width) {
          Rat m1 = a + (b - a) * Rat(3, 8), m2 = a + (b - a) * Rat(5, 8);
          bool moved = false;
          for (std::size_t step = 0; step < budget && !moved; ++step, ++p) {
            if (soft_compare((*fn)(m1), c, p) == Ordering::Greater) {
              a = m1;
              moved = true;
            } else if (soft_compare((*fn)(m2), c, p) == Ordering::Less) {
              b = m2;
              moved = true;
            }
          }
          if (!moved) throw BudgetExceeded("clamped inverse did not separate");
          p = std::max(p - 4, 0L);
        }
        return (a + b) / 2;
      },
      bound);
}

/// X with a closed subspace M; M's dense elements a_0, a_1, ... carry the
/// Banach operations and exact norms.
template <class Elem>
struct RetractionSetup {
  MetricPresentation<Elem> ambient;
  BanachPresentation<Elem> m;
  std::function<CReal(const Elem&)> dist_to_m;
};

/// R^2 with the Euclidean metric, M = x-axis enumerated as a_i = (rational_at(i), 0).
inline RetractionSetup<Vec2> plane_xaxis() {
  auto plane_space = plane();
  BanachPresentation<Vec2> axis = plane_space;
  axis.metric_space.name = "xaxis";
  axis.metric_space.dense = [](std::uint64_t i) { return Vec2{rational_at(i), Rat(0)}; };
  axis.metric_space.exact = true;  // |(q, 0)| = |q|
  return {plane_space.metric_space, axis, [](const Vec2& v) { return CReal(abs_of(v.y)); }};
}

/// R as a subspace of itself.
inline RetractionSetup<Rat> line_in_line() {
  auto line = real_line();
  return {line.metric_space, line, [](const Rat&) { return CReal(0); }};
}

/// Evaluation of the retraction at a fixed dense element x of X.
template <class Elem>
class RetractionAt {
 public:
  RetractionAt(RetractionSetup<Elem> setup, Elem x)
      : state_(std::make_shared<State>(std::move(setup), std::move(x))) {
    state_->to_m = state_->setup.dist_to_m(state_->x);
    // ||f_n - f_{n+1}|| <= 2 (d(x, a_0) + 1) bounds the slope of y |-> f_y.
    Rat d0 = dist(0).approx(0) + 1;
    state_->slope = 2 * (d0 + 1);
  }

  const Elem& x() const { return state_->x; }

  /// d(x, a_i)
  CReal dist(std::uint64_t i) const {
    std::lock_guard lock(state_->mutex);
    auto& cache = state_->dist;
    while (cache.size() <= i)
      cache.push_back(state_->setup.ambient.metric(state_->x, state_->setup.m.metric_space.dense(cache.size())));
    return cache[i];
  }

  /// d(x, M_n) = min_{i <= n} d(x, a_i)
  CReal dist_prefix(std::uint64_t n) const {
    std::lock_guard lock(state_->mutex);
    auto& cache = state_->prefix;
    while (cache.size() <= n) {
      CReal next = dist(cache.size());
      cache.push_back(cache.empty() ? next : min(cache.back(), next));
    }
    return cache[n];
  }

  /// Weights of mu_{n,x} on a_0..a_n.
  std::vector<CReal> mu(std::uint64_t n) const {
    CReal threshold = dist_prefix(n) + CReal(pow2(-static_cast<long>(n)));
    std::vector<CReal> numerators;
    CReal total(0);
    for (std::uint64_t i = 0; i <= n; ++i) {
      numerators.push_back(trunc_minus(threshold, dist(i)));
      total = total + numerators.back();
    }
    Rat lower = pow2(-static_cast<long>(n));
    std::vector<CReal> out;
    for (const auto& num : numerators) out.push_back(divide(num, total, lower));
    return out;
  }

  /// f_n(x) = sum mu_{n,x}(a) a, within 2^-k.
  Elem f(std::uint64_t n, long k) const {
    const auto& m = state_->setup.m;
    auto w = mu(n);
    Rat size(1);
    for (std::uint64_t i = 0; i <= n; ++i)
      size = max_of(size, *m.norm(m.metric_space.dense(i)).exact());
    long p = k + 1 + ceil_log2(size * (n + 1));
    Elem out = m.zero;
    for (std::uint64_t i = 0; i <= n; ++i)
      out = m.add(out, m.scale(w[i].approx(p), m.metric_space.dense(i)));
    return out;
  }

  /// f_y(x) = (1 - lambda) f_n(x) + lambda f_{n+1}(x) for rational y = n + lambda >= 0.
  Elem f_interp(const Rat& y, long k) const {
    if (y < 0) throw ContractViolation("f_y needs y >= 0");
    auto n = static_cast<std::uint64_t>(floor_of(y).get_ui());
    Rat lambda = y - Rat(floor_of(y));
    const auto& m = state_->setup.m;
    if (lambda == 0) return f(n, k);
    return m.add(m.scale(Rat(1 - lambda), f(n, k + 1)), m.scale(lambda, f(n + 1, k + 1)));
  }

  /// f_y(x) for real y >= 0, within 2^-k.
  Elem f_interp(const CReal& y, long k) const {
    long p = k + 2 + ceil_log2(state_->slope);
    Rat q = max_of(y.approx(p), Rat(0));
    return f_interp(q, k + 1);
  }

  /// h_x(y) = d(x, M_y) + 2^-(y+4) for rational y >= 0.
  CReal h(const Rat& y) const {
    auto n = static_cast<std::uint64_t>(floor_of(y).get_ui());
    Rat lambda = y - Rat(floor_of(y));
    CReal d = lambda == 0 ? dist_prefix(n)
                          : CReal(Rat(1 - lambda)) * dist_prefix(n) + CReal(lambda) * dist_prefix(n + 1);
    return d + pow2_neg(CReal(Rat(y + 4)));
  }

  /// Minimal y with d(x, M) = 2^-y, or with h_x(y - 1) <= 2^-(n+3) and y >= n + 3.
  CReal y_index(std::uint64_t n) const {
    {
      std::lock_guard lock(state_->mutex);
      if (auto it = state_->y.find(n); it != state_->y.end()) return it->second;
    }
    auto self = *this;
    auto ln = static_cast<long>(n);
    CReal level = pow2(-(ln + 3));
    auto H = [self](const Rat& y) { return self.h(Rat(y - 1)); };
    auto option1 = [](const CReal& d) { return max(neg_log2(d, 256), CReal(0)); };

    // d >= 2^-(n+8): option 2 if any lies in [n+3, n+8].
    PartialFn large = [=](const CReal& d) {
      return min(option1(d), clamped_decreasing_inverse(H, level, Rat(ln + 3), Rat(ln + 8)));
    };
    // d <= 2^-(n+4): option 2 exists; option 1 wins only if d > 2^-y2.
    PartialFn small = [=](const CReal& d) {
      long hi = ln + 3;
      CReal edge = pow2(-(ln + 4));
      for (std::size_t step = 0;; ++step) {
        if (step >= kDefaultBudget) throw BudgetExceeded("no y with h(y-1) below the level");
        long p = static_cast<long>(step) + ln + 3;
        if (soft_compare(d, edge, p) == Ordering::Greater)
          throw BudgetExceeded("distance outside the small branch");
        if (soft_compare(H(Rat(hi)), level, p) == Ordering::Less) break;
        ++hi;
      }
      CReal y2 = clamped_decreasing_inverse(H, level, Rat(ln + 3), Rat(hi));
      PartialFn take_y2 = [y2](const CReal&) { return y2; };
      return case_op(take_y2, option1, pow2_neg(y2))(d);
    };
    CReal y = case_op(small, large, CReal(pow2(-(ln + 5))))(state_->to_m);
    std::lock_guard lock(state_->mutex);
    return state_->y.emplace(n, y).first->second;
  }

  /// g_n(x) = f_{y_{n,x}}(x) within 2^-k.
  Elem g(std::uint64_t n, long k) const { return f_interp(y_index(n), k); }

  /// The retraction value as a point of M: ml of w_n = g_{n+2}(x) within 2^-(n+4).
  Point<Elem> retract() const {
    auto self = *this;
    return ml<Elem>(state_->setup.m, [self](std::uint64_t n) {
      return self.g(n + 2, static_cast<long>(n) + 4);
    });
  }

 private:
  struct State {
    State(RetractionSetup<Elem> s, Elem p) : setup(std::move(s)), x(std::move(p)) {}
    RetractionSetup<Elem> setup;
    Elem x;
    CReal to_m;
    Rat slope;
    std::vector<CReal> dist, prefix;
    std::map<std::uint64_t, CReal> y;
    std::recursive_mutex mutex;
  };
  std::shared_ptr<State> state_;
};

/// Dense element of M within 2^-k of g(x).
template <class Elem>
Elem retract(const RetractionSetup<Elem>& setup, const Elem& x, long k) {
  return RetractionAt<Elem>(setup, x).retract().approx(k);
}

}  // namespace banachkit
