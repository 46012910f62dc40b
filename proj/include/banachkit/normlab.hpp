#pragma once

// Norm constructions: the base pairs top/bot, the quantifier operators, the
// formula compiler, witnesses, exact unit-ball suprema, the three-ball space
// M_F and Euclidean products.

#include <banachkit/exactnum.hpp>
#include <banachkit/spaces.hpp>

#include <cctype>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace banachkit {

// ---------------------------------------------------------------------------
// Finitely supported rational sequences

struct QVec {
  std::map<std::uint64_t, Rat> entries;

  static QVec unit(std::uint64_t i) { return QVec{}.with(i, Rat(1)); }

  QVec with(std::uint64_t i, const Rat& value) const {
    QVec out = *this;
    if (value == 0) out.entries.erase(i);
    else out.entries[i] = value;
    return out;
  }

  Rat at(std::uint64_t i) const {
    auto it = entries.find(i);
    return it == entries.end() ? Rat(0) : it->second;
  }

  bool is_zero() const { return entries.empty(); }

  friend bool operator==(const QVec&, const QVec&) = default;
};

inline QVec operator+(const QVec& a, const QVec& b) {
  QVec out = a;
  for (const auto& [i, v] : b.entries) {
    Rat s = out.at(i) + v;
    if (s == 0) out.entries.erase(i);
    else out.entries[i] = s;
  }
  return out;
}

inline QVec operator*(const Rat& s, const QVec& v) {
  if (s == 0) return {};
  QVec out = v;
  for (auto& [i, x] : out.entries) x *= s;
  return out;
}

inline QVec operator-(const QVec& a, const QVec& b) { return a + Rat(-1) * b; }

inline std::string to_string(const QVec& v) {
  std::string out = "{";
  bool first = true;
  for (const auto& [i, x] : v.entries) {
    if (!first) out += ",";
    first = false;
    out += std::to_string(i) + ":" + to_string(x);
  }
  return out + "}";
}

/// Dense enumeration: 0 |-> Theta, n+1 = <a, c> + 1 |-> (rational_at(a), qvec_at(c) shifted by one).
inline QVec qvec_at(std::uint64_t n) {
  std::vector<Rat> head;
  while (n != 0) {
    auto [a, rest] = unpair_index(n - 1);
    head.push_back(rational_at(a));
    n = rest;
  }
  QVec out;
  for (std::size_t i = 0; i < head.size(); ++i) out = out.with(i, head[i]);
  return out;
}

/// Split a vector over N^2 = <component, coordinate> into its components.
inline std::map<std::uint64_t, QVec> split_components(const QVec& v) {
  std::map<std::uint64_t, QVec> parts;
  for (const auto& [i, x] : v.entries) {
    auto [n, j] = unpair_index(i);
    parts[n].entries[j] = x;
  }
  return parts;
}

inline QVec embed_component(std::uint64_t n, const QVec& w) {
  QVec out;
  for (const auto& [j, x] : w.entries) out.entries[pair_index(n, j)] = x;
  return out;
}

// ---------------------------------------------------------------------------
// Norm / functional pairs

struct NormedPair {
  std::string label;
  std::function<Rat(const QVec&)> norm;
  std::function<Rat(const QVec&)> functional;
  /// Child pairs of a quantifier node; empty for leaves.
  std::function<NormedPair(std::uint64_t)> child;
};

/// l1 norm with F = sum of entries.  F attains its norm at e_0.
inline NormedPair make_top() {
  return {"top",
          [](const QVec& v) {
            Rat s(0);
            for (const auto& [i, x] : v.entries) s += abs_of(x);
            return s;
          },
          [](const QVec& v) {
            Rat s(0);
            for (const auto& [i, x] : v.entries) s += x;
            return s;
          },
          {}};
}

/// max norm with F = sum 2^-(n+1) v(n).  Norm 1, never attained.
inline NormedPair make_bot() {
  return {"bot",
          [](const QVec& v) {
            Rat m(0);
            for (const auto& [i, x] : v.entries) m = max_of(m, abs_of(x));
            return m;
          },
          [](const QVec& v) {
            Rat s(0);
            for (const auto& [i, x] : v.entries) s += pow2(-static_cast<long>(i) - 1) * x;
            return s;
          },
          {}};
}

namespace detail {

inline std::function<NormedPair(std::uint64_t)> memoize_children(
    std::function<NormedPair(std::uint64_t)> children) {
  struct Memo {
    std::mutex mutex;
    std::map<std::uint64_t, NormedPair> cache;
  };
  auto memo = std::make_shared<Memo>();
  return [memo, children = std::move(children)](std::uint64_t n) {
    {
      std::lock_guard lock(memo->mutex);
      auto it = memo->cache.find(n);
      if (it != memo->cache.end()) return it->second;
    }
    NormedPair p = children(n);
    std::lock_guard lock(memo->mutex);
    return memo->cache.emplace(n, std::move(p)).first->second;
  };
}

}  // namespace detail

/// ||f||_E = sum_n ||f(n)||_n, F_E(f) = sum_n F_n(f(n)).
inline NormedPair combine_exists(std::function<NormedPair(std::uint64_t)> children) {
  auto child = detail::memoize_children(std::move(children));
  NormedPair out;
  out.label = "exists";
  out.child = child;
  out.norm = [child](const QVec& v) {
    Rat s(0);
    for (const auto& [n, w] : split_components(v)) s += child(n).norm(w);
    return s;
  };
  out.functional = [child](const QVec& v) {
    Rat s(0);
    for (const auto& [n, w] : split_components(v)) s += child(n).functional(w);
    return s;
  };
  return out;
}

/// ||f||_A = sum_n 2^-(n+1) max(||f(n)||_n, ||f(n+1)||_{n+1}),
/// F_A(f) = sum_n 2^-(n+2) (F_n(f(n)) + F_{n+1}(f(n+1))).
inline NormedPair combine_forall(std::function<NormedPair(std::uint64_t)> children) {
  auto child = detail::memoize_children(std::move(children));
  NormedPair out;
  out.label = "forall";
  out.child = child;
  out.norm = [child](const QVec& v) {
    std::map<std::uint64_t, Rat> norms;
    for (const auto& [n, w] : split_components(v)) norms[n] = child(n).norm(w);
    auto norm_at = [&norms](std::uint64_t n) {
      auto it = norms.find(n);
      return it == norms.end() ? Rat(0) : it->second;
    };
    Rat s(0);
    for (const auto& [n, a] : norms) {
      // term n, and term n-1 unless n-1 is itself in the support
      s += pow2(-static_cast<long>(n) - 1) * max_of(a, norm_at(n + 1));
      if (n > 0 && !norms.contains(n - 1)) s += pow2(-static_cast<long>(n)) * a;
    }
    return s;
  };
  out.functional = [child](const QVec& v) {
    Rat s(0);
    for (const auto& [n, w] : split_components(v)) {
      Rat weight = pow2(-static_cast<long>(n) - 2);
      if (n > 0) weight += pow2(-static_cast<long>(n) - 1);
      s += weight * child(n).functional(w);
    }
    return s;
  };
  return out;
}

/// Banach presentation of the completion of (QVec, pair.norm).
inline BanachPresentation<QVec> presentation_of(const NormedPair& pair) {
  auto norm = pair.norm;
  return make_banach<QVec>(
      pair.label, qvec_at, [](const QVec& a, const QVec& b) { return a + b; },
      [](const Rat& s, const QVec& v) { return s * v; },
      [norm](const QVec& v) { return CReal(norm(v)); }, QVec{}, true);
}

// ---------------------------------------------------------------------------
// Formulas

struct Formula {
  enum class Kind { Top, Bot, Or, And };
  Kind kind = Kind::Top;
  std::vector<Formula> children;

  static Formula top() { return {Kind::Top, {}}; }
  static Formula bot() { return {Kind::Bot, {}}; }
  static Formula any(std::vector<Formula> cs) { return {Kind::Or, std::move(cs)}; }
  static Formula all(std::vector<Formula> cs) { return {Kind::And, std::move(cs)}; }
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

namespace detail {

class FormulaParser {
 public:
  explicit FormulaParser(std::string_view text) : text_(text) {}

  Formula parse_all() {
    Formula f = parse();
    skip();
    if (pos_ != text_.size()) throw ParseError("trailing input", pos_);
    return f;
  }

 private:
  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool take(std::string_view word) {
    skip();
    if (text_.substr(pos_, word.size()) == word) {
      pos_ += word.size();
      return true;
    }
    return false;
  }

  void expect(char c) {
    skip();
    if (pos_ >= text_.size() || text_[pos_] != c)
      throw ParseError(std::string("expected '") + c + "'", pos_);
    ++pos_;
  }

  Formula parse() {
    skip();
    std::size_t start = pos_;
    if (take("or")) return Formula::any(parse_list());
    if (take("and")) return Formula::all(parse_list());
    if (take("T")) return Formula::top();
    if (take("F")) return Formula::bot();
    throw ParseError("expected T, F, or( or and(", start);
  }

  std::vector<Formula> parse_list() {
    expect('(');
    std::vector<Formula> cs;
    cs.push_back(parse());
    skip();
    while (pos_ < text_.size() && text_[pos_] == ',') {
      ++pos_;
      cs.push_back(parse());
      skip();
    }
    expect(')');
    return cs;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// phi := T | F | or(phi {,phi}) | and(phi {,phi}), whitespace insensitive.
inline Formula parse_formula(std::string_view text) {
  return detail::FormulaParser(text).parse_all();
}

inline std::string to_string(const Formula& f) {
  switch (f.kind) {
    case Formula::Kind::Top: return "T";
    case Formula::Kind::Bot: return "F";
    default: break;
  }
  std::string out = f.kind == Formula::Kind::Or ? "or(" : "and(";
  for (std::size_t i = 0; i < f.children.size(); ++i) {
    if (i > 0) out += ",";
    out += to_string(f.children[i]);
  }
  return out + ")";
}

inline bool truth(const Formula& f) {
  switch (f.kind) {
    case Formula::Kind::Top: return true;
    case Formula::Kind::Bot: return false;
    case Formula::Kind::Or:
      for (const auto& c : f.children)
        if (truth(c)) return true;
      return false;
    case Formula::Kind::And:
      for (const auto& c : f.children)
        if (!truth(c)) return false;
      return true;
  }
  return false;
}

/// Child n of a node after padding: bot tail for Or, top tail for And.
inline Formula padded_child(const Formula& f, std::uint64_t n) {
  if (n < f.children.size()) return f.children[n];
  return f.kind == Formula::Kind::Or ? Formula::bot() : Formula::top();
}

inline NormedPair compile_formula(const Formula& f) {
  switch (f.kind) {
    case Formula::Kind::Top: return make_top();
    case Formula::Kind::Bot: return make_bot();
    case Formula::Kind::Or:
      return combine_exists([f](std::uint64_t n) { return compile_formula(padded_child(f, n)); });
    case Formula::Kind::And:
      return combine_forall([f](std::uint64_t n) { return compile_formula(padded_child(f, n)); });
  }
  throw ContractViolation("unknown formula node");
}

// ---------------------------------------------------------------------------
// Witnesses

/// Truncated witness for a true formula.  And nodes keep components 0..m-1,
/// each filled with the child's truncation at m+1.
inline QVec witness_truncation(const Formula& f, long m) {
  switch (f.kind) {
    case Formula::Kind::Top: return QVec::unit(0);
    case Formula::Kind::Bot: break;
    case Formula::Kind::Or:
      for (std::uint64_t n = 0; n < f.children.size(); ++n)
        if (truth(f.children[n])) return embed_component(n, witness_truncation(f.children[n], m));
      break;
    case Formula::Kind::And: {
      QVec out;
      for (long n = 0; n < m; ++n) {
        auto un = static_cast<std::uint64_t>(n);
        out = out + embed_component(un, witness_truncation(padded_child(f, un), m + 1));
      }
      return out;
    }
  }
  throw ContractViolation("witness requested for a false formula");
}

/// Point of the compiled space with norm 1 and F = 1, or nothing if f is false.
/// Entry m is the truncation at m+2.
inline std::optional<Point<QVec>> synthesize_witness(const Formula& f) {
  if (!truth(f)) return std::nullopt;
  auto space = presentation_of(compile_formula(f)).metric_space;
  return Point<QVec>(space, [f](std::uint64_t m) {
    return witness_truncation(f, static_cast<long>(m) + 2);
  });
}

// ---------------------------------------------------------------------------
// Exact suprema on restricted unit balls

namespace detail {

/// max c.x subject to A x <= b, x >= 0, with b >= 0.  Dense tableau, Bland's
/// rule.  Throws ContractViolation if unbounded.
inline Rat simplex_max(const std::vector<std::vector<Rat>>& A, const std::vector<Rat>& b,
                       const std::vector<Rat>& c) {
  std::size_t rows = A.size(), vars = c.size(), cols = vars + rows + 1;
  std::vector<std::vector<Rat>> t(rows + 1, std::vector<Rat>(cols, Rat(0)));
  std::vector<std::size_t> basis(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < vars; ++j) t[i][j] = A[i][j];
    t[i][vars + i] = 1;
    t[i][cols - 1] = b[i];
    basis[i] = vars + i;
  }
  for (std::size_t j = 0; j < vars; ++j) t[rows][j] = -c[j];
  for (;;) {
    std::size_t enter = cols;
    for (std::size_t j = 0; j + 1 < cols; ++j)
      if (t[rows][j] < 0) { enter = j; break; }
    if (enter == cols) break;
    std::size_t leave = rows;
    Rat best;
    for (std::size_t i = 0; i < rows; ++i) {
      if (t[i][enter] <= 0) continue;
      Rat ratio = t[i][cols - 1] / t[i][enter];
      if (leave == rows || ratio < best || (ratio == best && basis[i] < basis[leave])) {
        leave = i;
        best = ratio;
      }
    }
    if (leave == rows) throw ContractViolation("linear program is unbounded");
    Rat pivot = t[leave][enter];
    for (auto& x : t[leave]) x /= pivot;
    for (std::size_t i = 0; i <= rows; ++i) {
      if (i == leave || t[i][enter] == 0) continue;
      Rat factor = t[i][enter];
      for (std::size_t j = 0; j < cols; ++j) t[i][j] -= factor * t[leave][j];
    }
    basis[leave] = enter;
  }
  return t[rows][cols - 1];
}

}  // namespace detail

/// Exact supremum of F over the unit ball restricted to components 0..J and
/// leaf coordinates 0..m.
inline Rat sup_unit_ball(const Formula& f, long J, long m) {
  switch (f.kind) {
    case Formula::Kind::Top: return Rat(1);
    case Formula::Kind::Bot: return 1 - pow2(-(m + 1));
    case Formula::Kind::Or: {
      Rat best(0);
      for (long n = 0; n <= J; ++n)
        best = max_of(best, sup_unit_ball(padded_child(f, static_cast<std::uint64_t>(n)), J, m));
      return best;
    }
    case Formula::Kind::And: break;
  }
  // Variables t_0..t_J (component scales) then u_0..u_J.
  auto size = static_cast<std::size_t>(J + 1);
  std::vector<Rat> c(2 * size, Rat(0));
  for (std::size_t n = 0; n < size; ++n) {
    Rat s = sup_unit_ball(padded_child(f, n), J, m);
    long e = static_cast<long>(n) + 2;
    c[n] = n == 0 ? Rat(s / 4) : Rat(3 * s * pow2(-e));
  }
  std::vector<std::vector<Rat>> A;
  std::vector<Rat> b;
  std::vector<Rat> budget(2 * size, Rat(0));
  for (std::size_t n = 0; n < size; ++n) budget[size + n] = pow2(-static_cast<long>(n) - 1);
  A.push_back(budget);
  b.emplace_back(1);
  for (std::size_t n = 0; n < size; ++n) {
    std::vector<Rat> row(2 * size, Rat(0));
    row[n] = 1;
    row[size + n] = -1;
    A.push_back(row);
    b.emplace_back(0);
    if (n + 1 < size) {
      std::vector<Rat> next(2 * size, Rat(0));
      next[n + 1] = 1;
      next[size + n] = -1;
      A.push_back(next);
      b.emplace_back(0);
    }
  }
  return detail::simplex_max(A, b, c);
}

// ---------------------------------------------------------------------------
// Three balls in M_F

struct Triple {
  Rat x, y;
  QVec z;
};

struct BallProblem {
  NormedPair base;
  std::vector<Triple> centers;

  /// max{|x|, |y|, ||z||, |x + y + F(z)|}
  Rat norm(const Triple& t) const {
    Rat out = max_of(abs_of(t.x), abs_of(t.y));
    out = max_of(out, base.norm(t.z));
    return max_of(out, abs_of(t.x + t.y + base.functional(t.z)));
  }

  Rat distance(const Triple& a, const Triple& b) const {
    return norm(Triple{a.x - b.x, a.y - b.y, a.z - b.z});
  }
};

inline BallProblem alfsen_effros(NormedPair pair) {
  return {std::move(pair),
          {Triple{Rat(2), Rat(0), {}}, Triple{Rat(0), Rat(2), {}}, Triple{Rat(2), Rat(2), {}}}};
}

/// All three center distances <= 1 + 2^-k.
inline bool check_triple_membership(const BallProblem& bp, const Triple& pt, long k) {
  for (const auto& c : bp.centers)
    if (bp.distance(pt, c) > 1 + pow2(-k)) return false;
  return true;
}

/// Point-valued z: reads z within 2^-(k+1), so the test tolerates 2^-k.
inline bool check_triple_membership(const BallProblem& bp, const Rat& x, const Rat& y,
                                    const Point<QVec>& z, long k) {
  return check_triple_membership(bp, Triple{x, y, z.approx(k + 1)}, k);
}

// ---------------------------------------------------------------------------
// Euclidean products

struct EuclideanProduct {
  using Element = std::map<std::uint64_t, Triple>;
  std::function<BallProblem(std::uint64_t)> problem;

  CReal norm(const Element& e) const {
    Rat sum(0);
    for (const auto& [n, t] : e) {
      Rat a = problem(n).norm(t);
      sum += a * a;
    }
    return sqrt(CReal(sum));
  }

  /// Center i of triple n, placed in coordinate n.
  Element center(std::uint64_t n, std::size_t i) const { return {{n, problem(n).centers.at(i)}}; }

  CReal distance(const Element& a, const Element& b) const {
    Element diff = a;
    for (const auto& [n, t] : b) {
      Triple& d = diff[n];
      d = Triple{d.x - t.x, d.y - t.y, d.z - t.z};
    }
    return norm(diff);
  }

  bool check_membership(std::uint64_t n, const Element& e, long k) const {
    for (std::size_t i = 0; i < 3; ++i)
      if (distance(e, center(n, i)).approx(k + 1) > 1 + pow2(-k)) return false;
    return true;
  }
};

inline EuclideanProduct euclidean_product(std::function<BallProblem(std::uint64_t)> problems) {
  struct Memo {
    std::mutex mutex;
    std::map<std::uint64_t, BallProblem> cache;
  };
  auto memo = std::make_shared<Memo>();
  return {[memo, problems = std::move(problems)](std::uint64_t n) {
    std::lock_guard lock(memo->mutex);
    auto it = memo->cache.find(n);
    if (it == memo->cache.end()) it = memo->cache.emplace(n, problems(n)).first;
    return it->second;
  }};
}

}  // namespace banachkit
