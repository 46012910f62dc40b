#pragma once

// The rational Urysohn space U0 as a growing finite Q-metric space, one-point
// Katetov extensions, finite embedding extension, and an isometric embedding
// of a computable metric space into the completion U with closed image.

#include <banachkit/exactnum.hpp>
#include <banachkit/spaces.hpp>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace banachkit {

/// Finite space with rational (pseudo)metric given as a full symmetric matrix.
class FiniteQMetric {
 public:
  FiniteQMetric() = default;
  explicit FiniteQMetric(std::vector<std::vector<Rat>> d) : d_(std::move(d)) {
    for (const auto& row : d_)
      if (row.size() != d_.size()) throw ContractViolation("distance matrix is not square");
  }

  std::size_t size() const { return d_.size(); }
  const Rat& at(std::size_t i, std::size_t j) const { return d_.at(i).at(j); }
  const std::vector<std::vector<Rat>>& matrix() const { return d_; }

  /// Appends a point with the given distances to the existing ones.
  void append(const std::vector<Rat>& to_existing) {
    if (to_existing.size() != d_.size()) throw ContractViolation("append needs one distance per point");
    for (std::size_t i = 0; i < d_.size(); ++i) d_[i].push_back(to_existing[i]);
    auto row = to_existing;
    row.push_back(Rat(0));
    d_.push_back(std::move(row));
  }

  /// Restriction to the first n points.
  FiniteQMetric prefix(std::size_t n) const {
    std::vector<std::vector<Rat>> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i].assign(d_[i].begin(), d_[i].begin() + n);
    return FiniteQMetric(std::move(out));
  }

  /// Zero diagonal, symmetry, nonnegativity and the triangle inequality, exactly.
  bool is_pseudometric() const {
    std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
      if (d_[i][i] != 0) return false;
      for (std::size_t j = 0; j < n; ++j) {
        if (d_[i][j] < 0 || d_[i][j] != d_[j][i]) return false;
        for (std::size_t l = 0; l < n; ++l)
          if (d_[i][l] > d_[i][j] + d_[j][l]) return false;
      }
    }
    return true;
  }

  bool operator==(const FiniteQMetric&) const = default;

 private:
  std::vector<std::vector<Rat>> d_;
};

/// Partial function from points of a FiniteQMetric to distances.
using KatetovFn = std::map<std::size_t, Rat>;

/// |phi(a) - phi(b)| <= d(a,b) <= phi(a) + phi(b) and phi >= 0 on the domain.
inline bool katetov_check(const KatetovFn& phi, const FiniteQMetric& space) {
  for (const auto& [a, va] : phi) {
    if (a >= space.size()) throw ContractViolation("Katetov domain exceeds the space");
    if (va < 0) return false;
    for (const auto& [b, vb] : phi) {
      const Rat& d = space.at(a, b);
      if (abs_of(va - vb) > d || d > va + vb) return false;
    }
  }
  return true;
}

/// phi-hat(x) = min_a (phi(a) + d(a, x)).  An empty phi is read as {0: 1}.
inline std::vector<Rat> canonical_extension(const KatetovFn& phi, const FiniteQMetric& space) {
  KatetovFn seed = phi;
  if (seed.empty() && space.size() > 0) seed[0] = 1;
  std::vector<Rat> out;
  for (std::size_t x = 0; x < space.size(); ++x) {
    std::optional<Rat> best;
    for (const auto& [a, v] : seed) {
      Rat c = v + space.at(a, x);
      if (!best || c < *best) best = c;
    }
    out.push_back(*best);
  }
  return out;
}

/// The space with one new point at distances phi-hat.
inline FiniteQMetric one_point_extend(const FiniteQMetric& space, const KatetovFn& phi) {
  if (!katetov_check(phi, space)) throw ContractViolation("not a Katetov function");
  FiniteQMetric out = space;
  out.append(canonical_extension(phi, space));
  return out;
}

/// d(p, c) >= r for a point c.
struct Protection {
  std::size_t center;
  Rat radius;
};

struct Realization {
  KatetovFn phi;
  std::size_t witness;
  bool scheduled;  // false for a demanded extension
};

/// U0 grown by a deterministic schedule.  Stage s runs over the nonempty
/// subsets A of the first s points (bitmask order) and over the functions
/// A -> V_s in lexicographic order, V_s = {a/b : 1 <= b <= s, 0 < a/b <= s};
/// each Katetov candidate without a witness gets a new point at distances
/// phi-hat.  Demanded extensions are appended the same way.
class U0Builder {
 public:
  U0Builder() : space_(std::vector<std::vector<Rat>>{{Rat(0)}}) { start_stage(1); }

  const FiniteQMetric& space() const { return space_; }
  std::size_t size() const { return space_.size(); }
  const std::vector<Realization>& log() const { return log_; }
  std::size_t stage() const { return stage_; }

  /// Runs the schedule until there are at least n points.
  void grow_to(std::size_t n) {
    while (size() < n) step();
  }

  /// Processes one schedule candidate.
  void step() {
    KatetovFn phi;
    for (std::size_t i = 0, slot = 0; i < subset_points_; ++i)
      if (mask_ >> i & 1) phi[i] = values_[digits_[slot++]];
    if (katetov_check(phi, space_) && !find_witness(phi, {})) add_point(phi, true);
    next_candidate();
  }

  /// First point p with d(p, a) = phi(a) on the domain and all protections.
  std::optional<std::size_t> find_witness(const KatetovFn& phi,
                                          const std::vector<Protection>& protect) const {
    for (std::size_t p = 0; p < size(); ++p) {
      bool ok = std::all_of(phi.begin(), phi.end(),
                            [&](const auto& kv) { return space_.at(p, kv.first) == kv.second; }) &&
                std::all_of(protect.begin(), protect.end(),
                            [&](const Protection& c) { return space_.at(p, c.center) >= c.radius; });
      if (ok) return p;
    }
    return std::nullopt;
  }

  /// A witness of phi respecting the protections, appended if none exists.
  std::size_t realize(const KatetovFn& phi, const std::vector<Protection>& protect = {}) {
    if (!katetov_check(phi, space_)) throw ContractViolation("not a Katetov function");
    if (auto p = find_witness(phi, protect)) return *p;
    auto ext = canonical_extension(phi, space_);
    for (const auto& c : protect)
      if (ext.at(c.center) < c.radius)
        throw ContractViolation("protection radius around point " + std::to_string(c.center) +
                                " cannot be respected");
    if (std::any_of(ext.begin(), ext.end(), [](const Rat& v) { return v == 0; }))
      throw ContractViolation("extension would duplicate a point");
    return add_point(phi, false);
  }

 private:
  std::size_t add_point(const KatetovFn& phi, bool scheduled) {
    space_.append(canonical_extension(phi, space_));
    log_.push_back({phi, size() - 1, scheduled});
    return size() - 1;
  }

  void start_stage(std::size_t s) {
    stage_ = s;
    subset_points_ = std::min(s, size());
    std::set<Rat> vs;
    for (std::size_t b = 1; b <= s; ++b)
      for (std::size_t a = 1; a <= s * b; ++a) vs.insert(make_rat(a, b));
    values_.assign(vs.begin(), vs.end());
    mask_ = 1;
    digits_.assign(static_cast<std::size_t>(std::popcount(mask_)), 0);
  }

  void next_candidate() {
    for (std::size_t i = digits_.size(); i-- > 0;) {
      if (++digits_[i] < values_.size()) return;
      digits_[i] = 0;
    }
    if (++mask_ < (std::uint64_t{1} << subset_points_)) {
      digits_.assign(static_cast<std::size_t>(std::popcount(mask_)), 0);
      return;
    }
    start_stage(stage_ + 1);
  }

  FiniteQMetric space_;
  std::vector<Realization> log_;
  std::size_t stage_ = 0;
  std::size_t subset_points_ = 0;
  std::vector<Rat> values_;
  std::uint64_t mask_ = 0;
  std::vector<std::size_t> digits_;
};

/// First n points of the scheduled U0.
inline FiniteQMetric u0_prefix(std::size_t n) {
  if (n == 0) return {};
  U0Builder b;
  b.grow_to(n);
  return b.space().prefix(n);
}

/// Extends f: A -> U0 (A = domain of f inside the pseudometric space B) to all
/// of B, one point at a time in index order.
inline std::vector<std::size_t> extend_embedding(U0Builder& builder, const FiniteQMetric& b,
                                                 const std::map<std::size_t, std::size_t>& f) {
  std::map<std::size_t, std::size_t> g = f;
  for (const auto& [x, u] : f)
    for (const auto& [y, v] : f)
      if (builder.space().at(u, v) != b.at(x, y))
        throw ContractViolation("initial map is not isometric");
  for (std::size_t x = 0; x < b.size(); ++x) {
    if (g.count(x)) continue;
    KatetovFn phi;
    for (const auto& [a, u] : g) phi[u] = b.at(a, x);
    g[x] = builder.realize(phi);
  }
  std::vector<std::size_t> out;
  for (const auto& [x, u] : g) out.push_back(u);
  return out;
}

/// Isometric embedding of the completion of (N, d), d a rational pseudometric,
/// into U.  Point n goes to the constant stream at U0 index image(n), chosen
/// with d(u_j, image(n)) >= r_{j,n} for all j <= n, where r_{j,n} = k 2^-n for
/// the largest k with d(u_j, image(i)) >= (k+2) 2^-n for all i < n (0 if none;
/// r_{j,0} = 0).
class UrysohnEmbedding {
 public:
  using Metric = std::function<Rat(std::uint64_t, std::uint64_t)>;

  explicit UrysohnEmbedding(Metric d) : state_(std::make_shared<State>(std::move(d))) {}

  template <class Elem>
  static UrysohnEmbedding of_space(const MetricPresentation<Elem>& x) {
    if (!x.exact) throw ContractViolation("embedding needs exact rational distances on dense elements");
    return UrysohnEmbedding([x](std::uint64_t i, std::uint64_t j) {
      return *x.metric(x.dense(i), x.dense(j)).exact();
    });
  }

  /// U0 index of the image of dense point n.
  std::size_t image(std::uint64_t n) const {
    std::lock_guard lock(state_->mutex);
    extend_to(n + 1);
    return state_->images[n];
  }

  /// r_{j,n}
  Rat radius(std::uint64_t j, std::uint64_t n) const {
    if (j > n) throw ContractViolation("radius r_{j,n} needs j <= n");
    std::lock_guard lock(state_->mutex);
    extend_to(n + 1);
    return state_->radii[n][j];
  }

  /// d_U(u_i, u_j)
  Rat u_dist(std::uint64_t i, std::uint64_t j) const {
    std::lock_guard lock(state_->mutex);
    state_->builder.grow_to(std::max(i, j) + 1);
    return state_->builder.space().at(i, j);
  }

  /// U as the completion of U0 (grown on demand by this embedding's builder).
  MetricPresentation<std::uint64_t> u_space() const {
    auto self = *this;
    return {"U", [](std::uint64_t i) { return i; },
            [self](const std::uint64_t& i, const std::uint64_t& j) { return CReal(self.u_dist(i, j)); },
            true};
  }

  /// g(x) for x the limit of dense points gamma(0), gamma(1), ... of X.
  Point<std::uint64_t> embed(std::function<std::uint64_t(std::uint64_t)> gamma) const {
    auto self = *this;
    return Point<std::uint64_t>(u_space(), [self, gamma = std::move(gamma)](std::uint64_t m) {
      return static_cast<std::uint64_t>(self.image(gamma(m)));
    });
  }

  /// d(u_j, g(X)) within 2^-k: at stage m >= j the tail of the image keeps
  /// distance >= D_m - 6 2^-m, D_m = min_{i<m} d(u_j, image(i)).
  Rat dist_to_image(std::uint64_t j, long k) const {
    auto m = static_cast<std::uint64_t>(std::max({k + 3, static_cast<long>(j), 1L}));
    std::lock_guard lock(state_->mutex);
    extend_to(m);
    state_->builder.grow_to(j + 1);
    Rat best = state_->builder.space().at(j, state_->images[0]);
    for (std::uint64_t i = 1; i < m; ++i) best = min_of(best, state_->builder.space().at(j, state_->images[i]));
    return max_of(best - 3 * pow2(-static_cast<long>(m)), Rat(0));
  }

  /// The image as a computably closed subset of U.
  ClosedSubset<std::uint64_t> image_subset() const {
    auto self = *this;
    return {u_space(), [self](std::uint64_t n) { return static_cast<std::uint64_t>(self.image(n)); },
            [self](const std::uint64_t& j) {
              return CReal([self, j](long k) { return self.dist_to_image(j, k); },
                           self.dist_to_image(j, 0) + 1);
            }};
  }

  const U0Builder& builder() const { return state_->builder; }

 private:
  struct State {
    explicit State(Metric m) : d(std::move(m)) {}
    Metric d;
    U0Builder builder;
    std::vector<std::size_t> images;
    std::vector<std::vector<Rat>> radii;
    std::recursive_mutex mutex;
  };

  void extend_to(std::uint64_t count) const {
    auto& s = *state_;
    while (s.images.size() < count) {
      std::uint64_t n = s.images.size();
      s.builder.grow_to(n + 1);
      const auto& u = s.builder.space();
      std::vector<Rat> r(n + 1, Rat(0));
      std::vector<Protection> protect;
      if (n > 0) {
        Rat scale = pow2(static_cast<long>(n));
        for (std::uint64_t j = 0; j <= n; ++j) {
          Rat near = u.at(j, s.images[0]);
          for (std::uint64_t i = 1; i < n; ++i) near = min_of(near, u.at(j, s.images[i]));
          Int k = floor_of(near * scale) - 2;
          if (k > 0) r[j] = Rat(k) / scale;
          protect.push_back({j, r[j]});
        }
      }
      KatetovFn phi;
      for (std::uint64_t i = 0; i < n; ++i) {
        Rat v = s.d(i, n);
        auto [it, fresh] = phi.emplace(s.images[i], v);
        if (!fresh && it->second != v) throw ContractViolation("source distances are not a pseudometric");
      }
      s.images.push_back(s.builder.realize(phi, protect));
      s.radii.push_back(std::move(r));
    }
  }

  std::shared_ptr<State> state_;
};

}  // namespace banachkit
