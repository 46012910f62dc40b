#pragma once

// Computable metric and Banach space presentations, points of completions as
// fast-converging streams, and computably closed subsets.

#include <banachkit/exactnum.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace banachkit {

// ---------------------------------------------------------------------------
// Enumerations

/// Cantor pairing N^2 -> N.
inline std::uint64_t pair_index(std::uint64_t i, std::uint64_t j) {
  std::uint64_t s = i + j;
  return s * (s + 1) / 2 + j;
}

inline std::pair<std::uint64_t, std::uint64_t> unpair_index(std::uint64_t n) {
  Int disc = Int(static_cast<unsigned long>(n)) * 8 + 1;
  Int root;
  mpz_sqrt(root.get_mpz_t(), disc.get_mpz_t());
  std::uint64_t s = (root.get_ui() - 1) / 2;
  std::uint64_t j = n - s * (s + 1) / 2;
  return {s - j, j};
}

/// 0, 1, -1, 2, -2, ...
inline long zigzag(std::uint64_t n) {
  if (n == 0) return 0;
  long t = static_cast<long>((n + 1) / 2);
  return (n % 2 == 1) ? t : -t;
}

inline std::uint64_t unzigzag(long v) {
  if (v == 0) return 0;
  return v > 0 ? static_cast<std::uint64_t>(2 * v - 1) : static_cast<std::uint64_t>(-2 * v);
}

/// Signed Calkin-Wilf enumeration of Q: 0, 1, -1, 1/2, -1/2, 2, -2, 1/3, ...
/// Index 2j-1 holds the j-th Calkin-Wilf rational, index 2j its negative.
inline Rat rational_at(std::uint64_t index) {
  if (index == 0) return Rat(0);
  std::uint64_t j = (index + 1) / 2;
  Int a(1), b(1);
  int top = 63;
  while (((j >> top) & 1U) == 0) --top;
  for (int bit = top - 1; bit >= 0; --bit) {
    if (((j >> bit) & 1U) == 0) b = a + b;  // left child a/(a+b)
    else a = a + b;                         // right child (a+b)/b
  }
  Rat r(a, b);
  r.canonicalize();
  return index % 2 == 1 ? r : Rat(-r);
}

/// Inverse of rational_at.  Throws ContractViolation when the index does not
/// fit in 64 bits.
inline std::uint64_t index_of_rational(const Rat& q) {
  if (q == 0) return 0;
  Int a = abs_of(q).get_num(), b = q.get_den();
  std::vector<int> bits;
  while (!(a == 1 && b == 1)) {
    if (a < b) { b -= a; bits.push_back(0); }
    else { a -= b; bits.push_back(1); }
    if (bits.size() > 61) throw ContractViolation("rational too deep for a 64-bit index");
  }
  std::uint64_t j = 1;
  for (auto it = bits.rbegin(); it != bits.rend(); ++it) j = (j << 1) | static_cast<std::uint64_t>(*it);
  return q > 0 ? 2 * j - 1 : 2 * j;
}

// ---------------------------------------------------------------------------
// Presentations

struct Vec2 {
  Rat x, y;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline Vec2 operator+(const Vec2& a, const Vec2& b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(const Vec2& a, const Vec2& b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(const Rat& s, const Vec2& v) { return {s * v.x, s * v.y}; }

inline std::string to_string(const Vec2& v) {
  return "(" + to_string(v.x) + "," + to_string(v.y) + ")";
}

/// Completion of a computable metric on an enumerated set {x_n}.
template <class Elem>
struct MetricPresentation {
  std::string name;
  std::function<Elem(std::uint64_t)> dense;
  std::function<CReal(const Elem&, const Elem&)> metric;
  /// Metric values on dense elements are exact rationals.
  bool exact = false;

  /// |result - d(x_n, x_m)| <= 2^-k
  Rat dist(std::uint64_t n, std::uint64_t m, long k) const {
    return metric(dense(n), dense(m)).approx(k);
  }
};

/// A metric presentation whose metric comes from a norm, with exact rational
/// vector operations on the dense elements.
template <class Elem>
struct BanachPresentation {
  MetricPresentation<Elem> metric_space;
  std::function<Elem(const Elem&, const Elem&)> add;
  std::function<Elem(const Rat&, const Elem&)> scale;
  std::function<CReal(const Elem&)> norm;
  Elem zero;

  Elem sub(const Elem& a, const Elem& b) const { return add(a, scale(Rat(-1), b)); }
};

template <class Elem>
BanachPresentation<Elem> make_banach(std::string name, std::function<Elem(std::uint64_t)> dense,
                                     std::function<Elem(const Elem&, const Elem&)> add,
                                     std::function<Elem(const Rat&, const Elem&)> scale,
                                     std::function<CReal(const Elem&)> norm, Elem zero,
                                     bool exact) {
  BanachPresentation<Elem> b;
  b.add = add;
  b.scale = scale;
  b.norm = norm;
  b.zero = zero;
  b.metric_space.name = std::move(name);
  b.metric_space.dense = std::move(dense);
  b.metric_space.exact = exact;
  b.metric_space.metric = [add, scale, norm](const Elem& u, const Elem& v) {
    return norm(add(u, scale(Rat(-1), v)));
  };
  return b;
}

/// R presented by Q in the signed Calkin-Wilf order; |.| is exact.
inline BanachPresentation<Rat> real_line() {
  return make_banach<Rat>(
      "R", rational_at, [](const Rat& a, const Rat& b) { return Rat(a + b); },
      [](const Rat& s, const Rat& v) { return Rat(s * v); },
      [](const Rat& v) { return CReal(abs_of(v)); }, Rat(0), true);
}

/// Dyadic index n = <j, zigzag a> |-> a / 2^j.
inline Rat dyadic_at(std::uint64_t index) {
  auto [level, code] = unpair_index(index);
  return Rat(zigzag(code)) * pow2(-static_cast<long>(level));
}

/// Smallest index of a / 2^level in the dyadic enumeration (same rational may
/// appear at several levels).
inline std::uint64_t dyadic_index(long numerator, long level) {
  return pair_index(static_cast<std::uint64_t>(level), unzigzag(numerator));
}

/// R presented by the dyadic rationals.
inline BanachPresentation<Rat> dyadic_line() {
  auto b = real_line();
  b.metric_space.name = "Rdyadic";
  b.metric_space.dense = dyadic_at;
  return b;
}

/// R^2 with the Euclidean norm, dense set Q^2 enumerated as
/// <i, j> |-> (rational_at(i), rational_at(j)).  Norm values are algebraic,
/// so the exactness flag is off.
inline BanachPresentation<Vec2> plane() {
  return make_banach<Vec2>(
      "R2",
      [](std::uint64_t n) {
        auto [i, j] = unpair_index(n);
        return Vec2{rational_at(i), rational_at(j)};
      },
      [](const Vec2& a, const Vec2& b) { return a + b; },
      [](const Rat& s, const Vec2& v) { return s * v; },
      [](const Vec2& v) { return sqrt(CReal(Rat(v.x * v.x + v.y * v.y))); }, Vec2{}, false);
}

// ---------------------------------------------------------------------------
// Points

/// A point of the completion: a stream n |-> x_n with d(x_n, x_{n+1}) <= 2^-n.
/// The modulus is checked on every queried entry.
template <class Elem>
class Point {
 public:
  using Stream = std::function<Elem(std::uint64_t)>;

  Point(MetricPresentation<Elem> space, Stream stream)
      : state_(std::make_shared<State>(std::move(space), std::move(stream))) {}

  static Point constant(MetricPresentation<Elem> space, Elem value) {
    Point p(std::move(space), [value](std::uint64_t) { return value; });
    p.state_->entries.push_back(std::move(value));
    p.state_->constant = true;
    return p;
  }

  /// Entry n; checks the modulus for every entry up to n.
  Elem entry(std::uint64_t n) const {
    std::lock_guard lock(state_->mutex);
    if (state_->constant) return state_->entries.front();
    while (state_->entries.size() <= n) {
      std::uint64_t i = state_->entries.size();
      Elem next = state_->stream(i);
      if (i > 0) check_gap(state_->entries.back(), next, i - 1);
      state_->entries.push_back(std::move(next));
    }
    return state_->entries[n];
  }

  /// Dense element within 2^-k of the point (reads entry k+1).
  Elem approx(long k) const { return entry(static_cast<std::uint64_t>(std::max(k, -1L) + 1)); }

  const MetricPresentation<Elem>& space() const { return state_->space; }

 private:
  struct State {
    State(MetricPresentation<Elem> s, Stream st) : space(std::move(s)), stream(std::move(st)) {}
    MetricPresentation<Elem> space;
    Stream stream;
    std::vector<Elem> entries;
    bool constant = false;
    std::mutex mutex;
  };

  void check_gap(const Elem& a, const Elem& b, std::uint64_t n) const {
    CReal d = state_->space.metric(a, b);
    Rat limit = pow2(-static_cast<long>(n));
    bool violated;
    if (d.is_exact()) {
      violated = *d.exact() > limit;
    } else {
      long p = static_cast<long>(n) + 16;
      violated = d.approx(p) - pow2(-p) > limit;
    }
    if (violated)
      throw ContractViolation("fast-convergence modulus violated between entries " +
                              std::to_string(n) + " and " + std::to_string(n + 1));
  }

  std::shared_ptr<State> state_;
};

/// The point represented by the index stream gamma.
template <class Elem>
Point<Elem> fast_limit(const MetricPresentation<Elem>& space,
                       std::function<std::uint64_t(std::uint64_t)> gamma) {
  auto dense = space.dense;
  return Point<Elem>(space, [dense, gamma](std::uint64_t n) { return dense(gamma(n)); });
}

/// |result - d(p, q)| <= 2^-k.
template <class Elem>
Rat point_dist(const Point<Elem>& p, const Point<Elem>& q, long k) {
  // Entries k+3 are within 2^-(k+2) of their limits.
  auto depth = static_cast<std::uint64_t>(std::max(k + 3, 0L));
  return p.space().metric(p.entry(depth), q.entry(depth)).approx(k + 2);
}

// ---------------------------------------------------------------------------
// Computably closed subsets

template <class Elem>
struct ClosedSubset {
  MetricPresentation<Elem> ambient;
  std::function<Elem(std::uint64_t)> sub_dense;
  std::function<CReal(const Elem&)> dist;

  /// d(p, Y) within 2^-k for a point of the completion.
  Rat dist_point(const Point<Elem>& p, long k) const { return dist(p.approx(k + 1)).approx(k + 1); }
};

/// Validates the distance oracle on the first `samples` dense elements at
/// precision `k`; throws ContractViolation with a counterexample.
template <class Elem>
ClosedSubset<Elem> make_closed_subset(MetricPresentation<Elem> ambient,
                                      std::function<Elem(std::uint64_t)> sub_dense,
                                      std::function<CReal(const Elem&)> dist,
                                      std::uint64_t samples = 20, long k = 8) {
  Rat tol = pow2(-k);
  for (std::uint64_t i = 0; i < samples; ++i) {
    Elem a = sub_dense(i);
    if (dist(a).approx(k) > 2 * tol)
      throw ContractViolation("distance does not vanish on sub-dense element " +
                              std::to_string(i));
  }
  for (std::uint64_t n = 0; n < samples; ++n) {
    Elem x = ambient.dense(n);
    Rat dx = dist(x).approx(k);
    for (std::uint64_t i = 0; i < samples; ++i) {
      Rat dxa = ambient.metric(x, sub_dense(i)).approx(k);
      if (dx > dxa + 3 * tol)
        throw ContractViolation("distance exceeds d(x_" + std::to_string(n) + ", a_" +
                                std::to_string(i) + ")");
    }
  }
  return ClosedSubset<Elem>{std::move(ambient), std::move(sub_dense), std::move(dist)};
}

}  // namespace banachkit
