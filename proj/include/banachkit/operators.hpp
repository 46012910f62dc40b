#pragma once

// Modified sequences and limits, the Case operator, the accumulation
// operators and limits of fast-converging probability distributions.

#include <banachkit/exactnum.hpp>
#include <banachkit/spaces.hpp>

#include <bit>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

namespace banachkit {

// ---------------------------------------------------------------------------
// Modified limits

/// w^m_0 = w_0, w^m_{k+1} = w^m_k + lambda_k (w_{k+1} - w^m_k) with lambda_k = 1
/// when ||w_{k+1} - w^m_k|| <= 2^-k and 2^-k / ||w_{k+1} - w^m_k|| otherwise.
/// The space must have exact rational norms on dense elements.
template <class Elem>
std::function<Elem(std::uint64_t)> modified_sequence(const BanachPresentation<Elem>& space,
                                                     std::function<Elem(std::uint64_t)> w) {
  if (!space.metric_space.exact)
    throw ContractViolation("modified_sequence needs exact norms on dense elements");
  struct State {
    std::mutex mutex;
    std::vector<Elem> terms;
  };
  auto state = std::make_shared<State>();
  return [space, w = std::move(w), state](std::uint64_t n) {
    std::lock_guard lock(state->mutex);
    if (state->terms.empty()) state->terms.push_back(w(0));
    while (state->terms.size() <= n) {
      auto k = static_cast<long>(state->terms.size()) - 1;
      const Elem& prev = state->terms.back();
      Elem step = space.sub(w(static_cast<std::uint64_t>(k) + 1), prev);
      Rat size = *space.norm(step).exact();
      Rat limit = pow2(-k);
      Elem next = size <= limit ? space.add(prev, step)
                                : space.add(prev, space.scale(Rat(limit / size), step));
      state->terms.push_back(std::move(next));
    }
    return state->terms[n];
  };
}

/// Limit of the modified sequence.  Total: the modified sequence is always
/// fast-converging.
template <class Elem>
Point<Elem> ml(const BanachPresentation<Elem>& space, std::function<Elem(std::uint64_t)> w) {
  return Point<Elem>(space.metric_space, modified_sequence(space, std::move(w)));
}

// ---------------------------------------------------------------------------
// Case

/// Partial real function; throwing Partiality means undefined.
using PartialFn = std::function<CReal(const CReal&)>;

/// Case(f, g, y)(x) = f(x) if x < y, g(x) if x > y, the common value if
/// x = y and f(y) = g(y).
inline PartialFn case_op(PartialFn f, PartialFn g, CReal y, std::size_t budget = 256) {
  return [f = std::move(f), g = std::move(g), y, budget](const CReal& x) {
    struct Branch {
      std::optional<CReal> value;
      bool failed = false;
    };
    auto state = std::make_shared<std::pair<Branch, Branch>>();
    auto get = [x](const PartialFn& h, Branch& b) -> const CReal* {
      if (!b.value && !b.failed) {
        try {
          b.value = h(x);
        } catch (const Partiality&) {
          b.failed = true;
        }
      }
      return b.value ? &*b.value : nullptr;
    };
    auto decide = [f, g, y, x, budget, state, get](long k) -> Rat {
      auto agree = [&]() -> std::optional<Rat> {
        const CReal* fv = get(f, state->first);
        const CReal* gv = get(g, state->second);
        if (!fv || !gv) return std::nullopt;
        try {
          Rat a = fv->approx(k + 2), b = gv->approx(k + 2);
          if (abs_of(a - b) <= pow2(-(k + 1))) return a;
        } catch (const Partiality&) {
        }
        return std::nullopt;
      };
      bool exact_tie = x.is_exact() && y.is_exact() && *x.exact() == *y.exact();
      for (std::size_t step = 0; step < budget; ++step) {
        if (!exact_tie) {
          auto s = static_cast<long>(step);
          Ordering o = soft_compare(x, y, k + s * (s + 1) / 2);
          if (o != Ordering::Indistinguishable) {
            bool less = o == Ordering::Less;
            const CReal* v = less ? get(f, state->first) : get(g, state->second);
            if (!v) throw BudgetExceeded("Case: the selected branch is undefined");
            return v->approx(k);
          }
        }
        if (auto v = agree()) return *v;
        if (exact_tie) break;
      }
      throw BudgetExceeded("Case undecided: x and y inseparable and branches disagree");
    };
    Rat first = decide(0);
    return CReal(decide, abs_of(first) + 1);
  };
}

// ---------------------------------------------------------------------------
// Accumulation

template <class Elem>
struct AccExact {
  Elem value;
  std::vector<Rat> coefficients;
  std::size_t crossing;
};

/// n is the first index with sum_{i<=n} f(i) > 1 and lambda = 1 - sum_{i<n} f(i);
/// returns sum_{i<n} f(i) g(i) + lambda g(n).
template <class Elem>
AccExact<Elem> acc_exact(const BanachPresentation<Elem>& space, const std::vector<Rat>& f,
                         const std::vector<Elem>& g) {
  Rat partial(0);
  for (std::size_t n = 0; n < f.size(); ++n) {
    if (f[n] < 0) throw ContractViolation("accumulation weights must be nonnegative");
    if (partial + f[n] > 1) {
      if (g.size() <= n) throw ContractViolation("accumulation needs g up to the crossing index");
      AccExact<Elem> out{space.zero, {}, n};
      for (std::size_t i = 0; i < n; ++i) out.coefficients.push_back(f[i]);
      out.coefficients.push_back(1 - partial);
      for (std::size_t i = 0; i <= n; ++i)
        out.value = space.add(out.value, space.scale(out.coefficients[i], g[i]));
      return out;
    }
    partial += f[n];
  }
  throw InsufficientMass("accumulation weights never exceed total mass 1");
}

template <class Elem>
struct AccApprox {
  Elem value;
  int algorithm;       // 1: certified strict crossing, 2: guess n = m1
  std::size_t index;   // crossing index (algorithm 1) or m1 (algorithm 2)
};

namespace detail {

inline bool certified_below_one(const CReal& s, long p, const Rat& tol) {
  if (auto e = s.exact()) return *e < 1;
  return s.approx(p) + tol < 1;
}
inline bool certified_above_one(const CReal& s, long p, const Rat& tol) {
  if (auto e = s.exact()) return *e > 1;
  return s.approx(p) - tol > 1;
}

}  // namespace detail

/// Dense element within 2^-k of the accumulation of f and g.  Algorithm 1
/// searches for a certified strict crossing; algorithm 2 for m1 < n1 with
///   i)   m1 = 0 or sum_{i<m1} f < 1
///   ii)  |sum_{i<=m1} f - 1| < eps
///   iii) sum_{m1<i<n1} f < eps
///   iv)  sum_{i<=n1} f > 1
/// where eps = 2^-(k+3)/N, and then guesses n = m1.  Both run one precision
/// level per round, algorithm 1 first.
template <class Elem>
AccApprox<Elem> acc_approx(const BanachPresentation<Elem>& space,
                           std::function<CReal(std::uint64_t)> f,
                           std::function<Point<Elem>(std::uint64_t)> g, long k,
                           std::size_t budget = kDefaultBudget) {
  std::vector<CReal> weights, sums;
  auto extend = [&]() {
    CReal w = f(weights.size());
    weights.push_back(w);
    sums.push_back(sums.empty() ? w : sums.back() + w);
  };

  // n-hat: some index whose partial sum certifiably exceeds 1.
  std::size_t n_hat = 0;
  for (std::size_t t = 0;; ++t) {
    if (t >= budget) throw BudgetExceeded("accumulation weights never exceed total mass 1");
    extend();
    // Precision grows with t, logarithmically so long zero-weight runs stay cheap.
    long p = 2 * static_cast<long>(std::bit_width(t)) + 1;
    if (detail::certified_above_one(sums[t], p, pow2(-p))) {
      n_hat = t;
      break;
    }
  }

  std::vector<Point<Elem>> points;
  Rat N(1);
  for (std::size_t i = 0; i <= n_hat; ++i) {
    points.push_back(g(i));
    Rat a = space.norm(points[i].approx(0)).approx(0);
    N = max_of(N, Rat(ceil_of(a) + 2));
  }

  // sum_{i<n} f(i) g(i) + (1 - sum_{i<n} f(i)) g(n) within 2^-q.
  auto evaluate = [&](std::size_t n, long q) {
    Rat terms((n + 1) * (n + 1));
    long p = q + 1 + ceil_log2(terms * (N + 1) + 2);
    Elem out = space.zero;
    Rat used(0);
    for (std::size_t i = 0; i < n; ++i) {
      Rat c = weights[i].approx(p);
      if (c == 0) continue;
      used += c;
      out = space.add(out, space.scale(c, points[i].approx(p)));
    }
    return space.add(out, space.scale(Rat(1 - used), points[n].approx(p)));
  };

  Rat eps = pow2(-(k + 3)) / N;
  for (std::size_t round = 0; round < budget; ++round) {
    auto p = static_cast<long>(round);
    Rat tol = pow2(-p);
    for (std::size_t n = 0; n <= n_hat; ++n) {
      if (n > 0 && !detail::certified_below_one(sums[n - 1], p, tol)) break;
      if (detail::certified_above_one(sums[n], p, tol)) return {evaluate(n, k), 1, n};
    }
    for (std::size_t m1 = 0; m1 < n_hat; ++m1) {
      if (m1 > 0 && !detail::certified_below_one(sums[m1 - 1], p, tol)) break;
      if (abs_of(sums[m1].approx(p) - 1) + tol >= eps) continue;
      for (std::size_t n1 = m1 + 1; n1 <= n_hat; ++n1) {
        Rat between = n1 == m1 + 1 ? Rat(0) : Rat((sums[n1 - 1] - sums[m1]).approx(p) + tol);
        if (between >= eps) break;
        if (detail::certified_above_one(sums[n1], p, tol)) return {evaluate(m1, k + 1), 2, m1};
      }
    }
  }
  throw BudgetExceeded("accumulation undecided within the step budget");
}

/// Probability distribution on N with exact rational weights.
using ProbDist = std::map<std::uint64_t, Rat>;

inline Rat total_mass(const ProbDist& mu) {
  Rat s(0);
  for (const auto& [i, w] : mu) s += w;
  return s;
}

/// m |-> sum{f(i) | i < n, g(i) = m} + lambda [g(n) = m].
inline ProbDist acc_star(std::function<Rat(std::uint64_t)> f,
                         std::function<std::uint64_t(std::uint64_t)> g,
                         std::size_t budget = kDefaultBudget) {
  ProbDist mu;
  Rat partial(0);
  for (std::uint64_t n = 0; n < budget; ++n) {
    Rat w = f(n);
    if (w < 0) throw ContractViolation("accumulation weights must be nonnegative");
    Rat share = partial + w > 1 ? Rat(1 - partial) : w;
    if (share != 0) mu[g(n)] += share;
    if (partial + w > 1) {
      std::erase_if(mu, [](const auto& kv) { return kv.second == 0; });
      return mu;
    }
    partial += w;
  }
  throw BudgetExceeded("accumulation weights never exceed total mass 1");
}

/// Limit of distributions fast-converging in the space: the smallest index of
/// positive weight at each level.
template <class Elem>
Point<Elem> prob_fast_limit(const MetricPresentation<Elem>& space,
                            std::function<ProbDist(std::uint64_t)> mus) {
  return fast_limit<Elem>(space, [mus = std::move(mus)](std::uint64_t k) {
    for (const auto& [i, w] : mus(k))
      if (w > 0) return i;
    throw ContractViolation("distribution " + std::to_string(k) + " has no positive weight");
  });
}

}  // namespace banachkit
