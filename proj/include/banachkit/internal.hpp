#pragma once

// Internal computability: sequence numbers, external transformers F-hat on
// representative streams, the tent partition Phi_sigma, the internalizer
// x |-> ml_k acc(h_x, g), and an interpreter for the combinator language.

#include <banachkit/exactnum.hpp>
#include <banachkit/operators.hpp>
#include <banachkit/spaces.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace banachkit {

using Seq = std::vector<std::uint64_t>;

// ---------------------------------------------------------------------------
// Sequence numbers

namespace detail {

inline Int cantor_pair(const Int& i, const Int& j) {
  Int s = i + j;
  return Int(s * (s + 1) / 2 + j);
}

inline std::pair<Int, Int> cantor_unpair(const Int& n) {
  Int w;
  Int disc = 8 * n + 1;
  mpz_sqrt(w.get_mpz_t(), disc.get_mpz_t());
  w = (w - 1) / 2;
  Int j = n - w * (w + 1) / 2;
  return {Int(w - j), j};
}

}  // namespace detail

/// 0 codes (); a :: rest is coded <a, code(rest)> + 1.
inline Int encode_seq(const Seq& s) {
  Int code = 0;
  for (auto it = s.rbegin(); it != s.rend(); ++it) code = detail::cantor_pair(Int(*it), code) + 1;
  return code;
}

inline Seq decode_seq(Int code) {
  if (code < 0) throw ContractViolation("negative sequence number");
  Seq out;
  while (code != 0) {
    auto [a, rest] = detail::cantor_unpair(Int(code - 1));
    out.push_back(a.get_ui());
    code = rest;
  }
  return out;
}

/// sigma is an initial segment of tau (sigma = tau allowed).
inline bool is_prefix(const Seq& sigma, const Seq& tau) {
  return sigma.size() <= tau.size() && std::equal(sigma.begin(), sigma.end(), tau.begin());
}

// ---------------------------------------------------------------------------
// External transformers

/// Index of the dyadic rational v in dyadic_line().
inline std::uint64_t dyadic_code(const Rat& v) {
  auto level = exact_neg_log2(Rat(1, 1) / Rat(v.get_den()));
  if (!level) throw ContractViolation("not a dyadic rational: " + v.get_str());
  return dyadic_index(v.get_num().get_si(), *level);
}

/// Memoized monotone F-hat: Seq -> Seq.  Each query is checked against the
/// cached value of its immediate prefix.
class FHat {
 public:
  FHat(std::string name, std::function<Seq(const Seq&)> fn)
      : state_(std::make_shared<State>(std::move(name), std::move(fn))) {}

  const std::string& name() const { return state_->name; }

  Seq operator()(const Seq& sigma) const {
    std::lock_guard lock(state_->mutex);
    auto& cache = state_->cache;
    if (auto it = cache.find(sigma); it != cache.end()) return it->second;
    Seq out = state_->fn(sigma);
    if (!sigma.empty()) {
      Seq parent(sigma.begin(), sigma.end() - 1);
      if (auto it = cache.find(parent); it != cache.end() && !is_prefix(it->second, out))
        throw ContractViolation("F-hat is not monotone at a queried pair");
    }
    return cache.emplace(sigma, std::move(out)).first->second;
  }

 private:
  struct State {
    State(std::string n, std::function<Seq(const Seq&)> f) : name(std::move(n)), fn(std::move(f)) {}
    std::string name;
    std::function<Seq(const Seq&)> fn;
    std::map<Seq, Seq> cache;
    std::mutex mutex;
  };
  std::shared_ptr<State> state_;
};

/// The identity transformer on the dyadic presentation of R.
inline FHat identity_fhat() {
  return FHat("id", [](const Seq& s) { return s; });
}

/// Emits the representative (round(q, m+2))_m, one entry per input entry.
inline FHat constant_fhat(const Rat& q) {
  return FHat("const:" + q.get_str(), [q](const Seq& s) {
    Seq out;
    for (std::size_t m = 0; m < s.size(); ++m)
      out.push_back(dyadic_code(round_dyadic(q, static_cast<long>(m) + 2)));
    return out;
  });
}

/// x |-> a x + b: output entry m is a x_{m+c} + b (rounded to 2^-(m+c+2) when
/// a or b is not dyadic), 2^c >= |a| (one more when rounding).
inline FHat affine_fhat(const Rat& a, const Rat& b) {
  auto dyadic = [](const Rat& q) { return exact_neg_log2(Rat(1, 1) / Rat(q.get_den())).has_value(); };
  bool exact = dyadic(a) && dyadic(b);
  long c = a == 0 ? 0 : std::max(ceil_log2(abs_of(a)), 0L);
  if (!exact) ++c;
  return FHat("affine:" + a.get_str() + "," + b.get_str(), [a, b, c, exact](const Seq& s) {
    Seq out;
    std::optional<std::uint64_t> prev;
    Rat v;
    for (std::size_t m = 0; m + static_cast<std::size_t>(c) < s.size(); ++m) {
      std::uint64_t in = s[m + static_cast<std::size_t>(c)];
      if (exact && prev == in) {
        out.push_back(out.back());
        continue;
      }
      prev = in;
      v = a * dyadic_at(in) + b;
      if (!exact) v = round_dyadic(v, static_cast<long>(m) + c + 2);
      out.push_back(dyadic_code(v));
    }
    return out;
  });
}

// ---------------------------------------------------------------------------
// Tents

/// phi_{sigma,i}(x) = clamp(2 - 2^(i+3) d(x, x_{sigma(i)}), 0, 1) on the dyadic line.
inline CReal tent(const Seq& sigma, std::size_t i, const CReal& x) {
  if (i >= sigma.size()) throw ContractViolation("tent index beyond the sequence");
  CReal d = abs(x - CReal(dyadic_at(sigma[i])));
  CReal ramp = CReal(2) - CReal(pow2(static_cast<long>(i) + 3)) * d;
  return min(max(ramp, CReal(0)), CReal(1));
}

/// Phi_sigma at a rational point.
inline Rat big_phi_at(const Seq& sigma, const Rat& x) {
  Rat out(1), d;
  for (std::size_t i = 0; i < sigma.size() && out != 0; ++i) {
    if (i == 0 || sigma[i] != sigma[i - 1]) d = abs_of(x - dyadic_at(sigma[i]));
    Rat ramp = 2 - pow2(static_cast<long>(i) + 3) * d;
    out *= min_of(max_of(ramp, Rat(0)), Rat(1));
  }
  return out;
}

/// Phi_sigma(x) = prod_i phi_{sigma,i}(x).  Exact 0 or 1 when certified from
/// one approximation of x; otherwise Phi of approximations, which is
/// 2^(lh+3)-Lipschitz.
inline CReal big_phi(const Seq& sigma, const CReal& x) {
  if (x.is_exact()) return CReal(big_phi_at(sigma, *x.exact()));
  auto len = static_cast<long>(sigma.size());
  long p0 = len + 4;
  Rat xa = x.approx(p0), e = pow2(-p0);
  bool one = true;
  Rat d;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (i == 0 || sigma[i] != sigma[i - 1]) d = abs_of(xa - dyadic_at(sigma[i]));
    auto il = static_cast<long>(i);
    if (d - e >= pow2(-(il + 2))) return CReal(0);
    if (d + e > pow2(-(il + 3))) one = false;
  }
  if (one) return CReal(1);
  return CReal([sigma, x, len](long k) -> Rat { return big_phi_at(sigma, x.approx(k + len + 4)); },
               Rat(1));
}

// ---------------------------------------------------------------------------
// Delta_level

/// A computable enumeration of members of Delta_level = {sigma : lh(F-hat(sigma)) >= level}.
/// Blocks L = level, level+1, ...: the constant sequences (j 2^-(L+2))^L for
/// |j| <= (L - level + 1) 2^(L+2) in zigzag order, keeping members of
/// Delta_level; a block is used only if its j = 0 sequence is a member.
class DeltaEnumeration {
 public:
  struct Entry {
    Seq sigma;
    std::uint64_t last_output;
  };

  DeltaEnumeration(FHat fhat, long level, long max_blocks = 64)
      : fhat_(std::move(fhat)), level_(std::max(level, 1L)), max_blocks_(max_blocks) {
    block_ = level_ - 1;
    next_block();
  }

  long level() const { return level_; }

  Entry at(std::size_t n) {
    while (entries_.size() <= n) advance();
    return entries_[n];
  }

 private:
  static Seq constant_seq(long j, long L) {
    return Seq(static_cast<std::size_t>(L), dyadic_index(j, L + 2));
  }

  void next_block() {
    for (;;) {
      ++block_;
      if (block_ - level_ >= max_blocks_)
        throw BudgetExceeded("F-hat output never reaches the required length");
      if (static_cast<long>(fhat_(constant_seq(0, block_)).size()) >= level_) break;
    }
    radius_ = Int(block_ - level_ + 1) * Int(pow2(block_ + 2));
    cursor_ = 0;
  }

  void advance() {
    for (;;) {
      long j = zigzag(cursor_);
      if (Int(j < 0 ? -j : j) > radius_) {
        next_block();
        continue;
      }
      ++cursor_;
      Seq s = constant_seq(j, block_);
      Seq out = fhat_(s);
      if (static_cast<long>(out.size()) >= level_) {
        entries_.push_back({std::move(s), out.back()});
        return;
      }
    }
  }

  FHat fhat_;
  long level_;
  long max_blocks_;
  long block_ = 0;
  Int radius_;
  std::uint64_t cursor_ = 0;
  std::vector<Entry> entries_;
};

// ---------------------------------------------------------------------------
// Internalizer

/// f: R -> R given by F-hat on the dyadic presentation, rebuilt internally:
/// h_x(n) = Phi_{sigma_n}(x), g(n) = y_{last entry of F-hat(sigma_n)},
/// f_k(x) = acc(h_x, g) over Delta_{k+2}, so ||f_k(x) - f(x)|| <= 2^-k, and
/// f(x) = ml of w_k, w_k within 2^-(k+2) of f_{k+2}(x).
class Internalizer {
 public:
  explicit Internalizer(FHat fhat, std::size_t budget = std::size_t{1} << 22)
      : state_(std::make_shared<State>(std::move(fhat))), budget_(budget) {}

  const FHat& fhat() const { return state_->fhat; }

  /// Delta_level enumeration (shared per level).
  DeltaEnumeration& delta(long level) const {
    std::lock_guard lock(state_->mutex);
    auto it = state_->deltas.find(level);
    if (it == state_->deltas.end())
      it = state_->deltas.emplace(level, std::make_shared<DeltaEnumeration>(state_->fhat, level)).first;
    return *it->second;
  }

  DeltaEnumeration::Entry sigma(long level, std::size_t n) const {
    auto& d = delta(level);
    std::lock_guard lock(state_->mutex);
    return d.at(n);
  }

  /// f_k(x) as a dense element within 2^-q, with the algorithm and crossing index.
  AccApprox<Rat> f_k(const CReal& x, long k, long q) const {
    long level = std::max(k + 2, 1L);
    auto self = *this;
    auto space = dyadic_line();
    return acc_approx<Rat>(
        space, [self, x, level](std::uint64_t n) { return big_phi(self.sigma(level, n).sigma, x); },
        [self, level, space](std::uint64_t n) {
          return Point<Rat>::constant(space.metric_space, dyadic_at(self.sigma(level, n).last_output));
        },
        q, budget_);
  }

  /// w_k = f_{k+2}(x) within 2^-(k+2).
  Rat w(const CReal& x, long k) const { return f_k(x, k + 2, k + 2).value; }

  Point<Rat> operator()(const CReal& x) const {
    auto self = *this;
    return ml<Rat>(dyadic_line(), [self, x](std::uint64_t k) { return self.w(x, static_cast<long>(k)); });
  }

  Point<Rat> operator()(const Point<Rat>& x) const { return (*this)(as_real(x)); }

  static CReal as_real(const Point<Rat>& x) {
    return CReal([x](long k) -> Rat { return x.approx(k); }, abs_of(x.approx(0)) + 1);
  }

 private:
  struct State {
    explicit State(FHat f) : fhat(std::move(f)) {}
    FHat fhat;
    std::map<long, std::shared_ptr<DeltaEnumeration>> deltas;
    std::recursive_mutex mutex;
  };
  std::shared_ptr<State> state_;
  std::size_t budget_;
};

/// Prefixes (gamma(0), ..., gamma(n-1)) of the representative gamma(i) = x
/// rounded to 2^-(i+4) that lie in Delta_level; each has Phi = 1 at x.
inline std::vector<Seq> full_tent_witnesses(const FHat& fhat, const CReal& x, long level,
                                         std::size_t count, std::size_t max_length = 64) {
  std::vector<Seq> out;
  Seq sigma;
  while (out.size() < count) {
    if (sigma.size() >= max_length) throw BudgetExceeded("no prefix of the representative in Delta");
    auto i = static_cast<long>(sigma.size());
    sigma.push_back(dyadic_code(round_dyadic(x.approx(i + 6), i + 4)));
    if (static_cast<long>(fhat(sigma).size()) >= std::max(level, 1L)) out.push_back(sigma);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Programs

/// Sorts of the combinator language.  X and M are presented over the reals
/// (dense rationals with d(a, b) = |a - b| and ||a|| = |a|), so points of
/// both are carried as CReal.
enum class Sort { Nat, Real, X, M };

inline std::string to_string(Sort s) {
  switch (s) {
    case Sort::Nat: return "N";
    case Sort::Real: return "R";
    case Sort::X: return "X";
    case Sort::M: return "M";
  }
  return "?";
}

using Value = std::variant<std::uint64_t, CReal>;

/// The dense sequences x_n of X and y_m of M.
struct Structure {
  std::function<Rat(std::uint64_t)> x_dense = dyadic_at;
  BanachPresentation<Rat> m = dyadic_line();
};

class Program {
 public:
  enum class Op {
    Arg, NatConst, Succ, NatPrim, One, Add, Sub, Mul, Abs, XDense, XDist, MDense, MAdd, MScale,
    MNorm, Compose, PrimRec, Mu, Case, ML, Acc
  };
  using NatFn = std::function<std::uint64_t(const std::vector<std::uint64_t>&)>;

  Op op() const { return node_->op; }
  Sort sort() const { return node_->sort; }

  static Program arg(std::size_t i, Sort s) { return make(Op::Arg, s, {}, i); }
  static Program nat(std::uint64_t c) { return make(Op::NatConst, Sort::Nat, {}, c); }
  static Program succ(Program a) { return make(Op::Succ, Sort::Nat, {need(a, Sort::Nat)}); }
  /// A total computable function on N, standing for its primitive recursive definition.
  static Program nat_prim(std::string name, NatFn fn, std::vector<Program> args) {
    for (const auto& a : args) need(a, Sort::Nat);
    Program p = make(Op::NatPrim, Sort::Nat, std::move(args));
    p.mut().name = std::move(name);
    p.mut().prim = std::move(fn);
    return p;
  }
  static Program one() { return make(Op::One, Sort::Real, {}); }
  static Program add(Program a, Program b) { return make(Op::Add, Sort::Real, {need(a, Sort::Real), need(b, Sort::Real)}); }
  static Program sub(Program a, Program b) { return make(Op::Sub, Sort::Real, {need(a, Sort::Real), need(b, Sort::Real)}); }
  static Program mul(Program a, Program b) { return make(Op::Mul, Sort::Real, {need(a, Sort::Real), need(b, Sort::Real)}); }
  static Program abs(Program a) { return make(Op::Abs, Sort::Real, {need(a, Sort::Real)}); }
  static Program x_dense(Program n) { return make(Op::XDense, Sort::X, {need(n, Sort::Nat)}); }
  static Program x_dist(Program a, Program b) { return make(Op::XDist, Sort::Real, {need(a, Sort::X), need(b, Sort::X)}); }
  static Program m_dense(Program n) { return make(Op::MDense, Sort::M, {need(n, Sort::Nat)}); }
  static Program m_add(Program a, Program b) { return make(Op::MAdd, Sort::M, {need(a, Sort::M), need(b, Sort::M)}); }
  static Program m_scale(Program r, Program v) { return make(Op::MScale, Sort::M, {need(r, Sort::Real), need(v, Sort::M)}); }
  static Program m_norm(Program v) { return make(Op::MNorm, Sort::Real, {need(v, Sort::M)}); }

  /// f evaluated with the values of gs as its arguments.
  static Program compose(Program f, std::vector<Program> gs) {
    Sort s = f.sort();
    std::vector<Program> kids{std::move(f)};
    for (auto& g : gs) kids.push_back(std::move(g));
    return make(Op::Compose, s, std::move(kids));
  }
  /// r(0) = base, r(i+1) = step(env, i, r(i)); the value r(n).
  static Program prim_rec(Program n, Program base, Program step) {
    need(n, Sort::Nat);
    need(step, base.sort());
    Sort s = base.sort();
    return make(Op::PrimRec, s, {std::move(n), std::move(base), std::move(step)});
  }
  /// Least i with pred(env, i) = 0.
  static Program mu(Program pred) { return make(Op::Mu, Sort::Nat, {need(pred, Sort::Nat)}); }
  /// Case(f, g, y)(x) with f, g evaluated at (env, t).
  static Program case_of(Program f, Program g, Program y, Program x) {
    need(g, f.sort());
    if (f.sort() != Sort::Real && f.sort() != Sort::M) throw ContractViolation("Case branches must be real or in M");
    Sort s = f.sort();
    return make(Op::Case, s, {std::move(f), std::move(g), need(y, Sort::Real), need(x, Sort::Real)});
  }
  /// Modified limit of n |-> seq(env, n).
  static Program ml(Program seq) {
    if (seq.sort() != Sort::Real && seq.sort() != Sort::M) throw ContractViolation("ml needs a real or M sequence");
    Sort s = seq.sort();
    return make(Op::ML, s, {std::move(seq)});
  }
  /// Accumulation of the weights h(env, n) against g(env, n).
  static Program acc(Program h, Program g) {
    need(h, Sort::Real);
    if (g.sort() != Sort::Real && g.sort() != Sort::M) throw ContractViolation("acc needs real or M values");
    Sort s = g.sort();
    return make(Op::Acc, s, {std::move(h), std::move(g)});
  }

  /// Number of nodes.
  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& k : node_->kids) n += k.size();
    return n;
  }

  Value eval(const std::vector<Value>& env, const Structure& st, std::size_t& fuel) const;

 private:
  struct Node {
    Op op;
    Sort sort;
    std::vector<Program> kids;
    std::uint64_t index = 0;
    std::string name;
    NatFn prim;
  };

  static Program make(Op op, Sort s, std::vector<Program> kids, std::uint64_t index = 0) {
    Program p;
    p.node_ = std::make_shared<Node>(Node{op, s, std::move(kids), index, {}, {}});
    return p;
  }
  static Program need(Program p, Sort s) {
    if (p.sort() != s)
      throw ContractViolation("sort mismatch: expected " + to_string(s) + ", got " + to_string(p.sort()));
    return p;
  }
  Node& mut() { return const_cast<Node&>(*node_); }

  std::shared_ptr<const Node> node_;
};

namespace detail {

inline std::uint64_t as_nat(const Value& v) { return std::get<std::uint64_t>(v); }
inline const CReal& as_real(const Value& v) { return std::get<CReal>(v); }

inline void burn(std::size_t& fuel) {
  if (fuel == 0) throw BudgetExceeded("evaluation fuel exhausted");
  --fuel;
}

}  // namespace detail

inline Value Program::eval(const std::vector<Value>& env, const Structure& st, std::size_t& fuel) const {
  using detail::as_nat;
  using detail::as_real;
  const auto& k = node_->kids;
  auto sub_env = [&env](Value extra) {
    auto e = env;
    e.push_back(std::move(extra));
    return e;
  };
  switch (node_->op) {
    case Op::Arg: {
      if (node_->index >= env.size()) throw ContractViolation("argument index out of range");
      const Value& v = env[node_->index];
      if ((sort() == Sort::Nat) != std::holds_alternative<std::uint64_t>(v))
        throw ContractViolation("argument " + std::to_string(node_->index) + " has the wrong sort");
      return v;
    }
    case Op::NatConst: return node_->index;
    case Op::Succ: return as_nat(k[0].eval(env, st, fuel)) + 1;
    case Op::NatPrim: {
      std::vector<std::uint64_t> args;
      for (const auto& a : k) args.push_back(as_nat(a.eval(env, st, fuel)));
      return node_->prim(args);
    }
    case Op::One: return CReal(1);
    case Op::Add: case Op::MAdd: return as_real(k[0].eval(env, st, fuel)) + as_real(k[1].eval(env, st, fuel));
    case Op::Sub: return as_real(k[0].eval(env, st, fuel)) - as_real(k[1].eval(env, st, fuel));
    case Op::Mul: case Op::MScale: return as_real(k[0].eval(env, st, fuel)) * as_real(k[1].eval(env, st, fuel));
    case Op::Abs: case Op::MNorm: return banachkit::abs(as_real(k[0].eval(env, st, fuel)));
    case Op::XDense: return CReal(st.x_dense(as_nat(k[0].eval(env, st, fuel))));
    case Op::XDist: return banachkit::abs(as_real(k[0].eval(env, st, fuel)) - as_real(k[1].eval(env, st, fuel)));
    case Op::MDense: return CReal(st.m.metric_space.dense(as_nat(k[0].eval(env, st, fuel))));
    case Op::Compose: {
      std::vector<Value> args;
      for (std::size_t i = 1; i < k.size(); ++i) args.push_back(k[i].eval(env, st, fuel));
      return k[0].eval(args, st, fuel);
    }
    case Op::PrimRec: {
      std::uint64_t n = as_nat(k[0].eval(env, st, fuel));
      Value acc = k[1].eval(env, st, fuel);
      for (std::uint64_t i = 0; i < n; ++i) {
        auto e = env;
        e.push_back(i);
        e.push_back(acc);
        acc = k[2].eval(e, st, fuel);
      }
      return acc;
    }
    case Op::Mu: {
      for (std::uint64_t i = 0;; ++i) {
        detail::burn(fuel);
        if (as_nat(k[0].eval(sub_env(i), st, fuel)) == 0) return i;
      }
    }
    case Op::Case: {
      Program f = k[0], g = k[1];
      auto branch = [env, st, fuel](const Program& b) -> PartialFn {
        return [b, env, st, fuel](const CReal& t) {
          auto e = env;
          e.push_back(t);
          std::size_t local = fuel;
          return detail::as_real(b.eval(e, st, local));
        };
      };
      CReal y = as_real(k[2].eval(env, st, fuel));
      CReal x = as_real(k[3].eval(env, st, fuel));
      return case_op(branch(f), branch(g), y, std::max<std::size_t>(fuel, 1))(x);
    }
    case Op::ML: {
      // m_0 = w_0, m_{j+1} = m_j + clamp(w_{j+1} - m_j, -2^-j, 2^-j); the
      // value is read from m_{q+2} at precision q+2.
      struct Terms {
        std::vector<CReal> m;
        std::mutex mutex;
      };
      auto terms = std::make_shared<Terms>();
      Program seq = k[0];
      auto term = [terms, seq, env, st, fuel](std::size_t j) {
        std::lock_guard lock(terms->mutex);
        while (terms->m.size() <= j) {
          auto e = env;
          e.push_back(static_cast<std::uint64_t>(terms->m.size()));
          std::size_t local = fuel;
          CReal w = detail::as_real(seq.eval(e, st, local));
          if (terms->m.empty()) {
            terms->m.push_back(w);
            continue;
          }
          CReal step(pow2(-static_cast<long>(terms->m.size() - 1)));
          const CReal& prev = terms->m.back();
          terms->m.push_back(prev + banachkit::max(banachkit::min(w - prev, step), -step));
        }
        return terms->m[j];
      };
      CReal first = term(0);
      return CReal([term](long q) -> Rat { return term(static_cast<std::size_t>(std::max(q + 2, 0L))).approx(q + 2); },
                   first.bound() + 2);
    }
    case Op::Acc: {
      struct Cache {
        std::vector<CReal> h;
        std::vector<CReal> g;
        std::mutex mutex;
      };
      auto cache = std::make_shared<Cache>();
      Program hp = k[0], gp = k[1];
      auto fill = [cache, hp, gp, env, st, fuel](std::size_t n) {
        std::lock_guard lock(cache->mutex);
        while (cache->h.size() <= n) {
          auto e = env;
          e.push_back(static_cast<std::uint64_t>(cache->h.size()));
          std::size_t local = fuel;
          cache->h.push_back(detail::as_real(hp.eval(e, st, local)));
          cache->g.push_back(detail::as_real(gp.eval(e, st, local)));
        }
      };
      auto space = st.m;
      auto run = [fill, cache, space](long q) -> Rat {
        auto h = [fill, cache](std::uint64_t n) {
          fill(n);
          std::lock_guard lock(cache->mutex);
          return cache->h[n];
        };
        auto g = [fill, cache, space](std::uint64_t n) {
          fill(n);
          CReal v;
          {
            std::lock_guard lock(cache->mutex);
            v = cache->g[n];
          }
          if (v.is_exact()) return Point<Rat>::constant(space.metric_space, *v.exact());
          return Point<Rat>(space.metric_space, [v](std::uint64_t e) -> Rat { return v.approx(static_cast<long>(e) + 1); });
        };
        return acc_approx<Rat>(space, h, g, q, std::size_t{1} << 22).value;
      };
      Rat first = run(0);
      return CReal(run, abs_of(first) + 1);
    }
  }
  throw ContractViolation("unknown program node");
}

/// Evaluates prog on args with the given fuel for mu-recursion and Case.
inline Value evaluate(const Program& prog, const std::vector<Value>& args, const Structure& st = {},
                      std::size_t fuel = kDefaultBudget) {
  return prog.eval(args, st, fuel);
}

/// The internalizer as a program X -> M in the combinator language, sharing
/// the Delta enumerations of `in`: ml over k of acc over n of
/// (Phi_{sigma_n}(x), y_{last entry of F-hat(sigma_n)}) with sigma_n from Delta_{k+4}.
inline Program internalize_program(const Internalizer& in) {
  using P = Program;
  P x = P::arg(0, Sort::X), k = P::arg(1, Sort::Nat), n = P::arg(2, Sort::Nat);
  auto entry = P::nat_prim(
      "sigma_entry",
      [in](const std::vector<std::uint64_t>& a) {
        return in.sigma(static_cast<long>(a[0]) + 4, a[1]).sigma.at(a[2]);
      },
      {k, n, P::arg(3, Sort::Nat)});
  auto length = P::nat_prim(
      "sigma_length",
      [in](const std::vector<std::uint64_t>& a) {
        return static_cast<std::uint64_t>(in.sigma(static_cast<long>(a[0]) + 4, a[1]).sigma.size());
      },
      {k, n});
  auto last = P::nat_prim(
      "last_output",
      [in](const std::vector<std::uint64_t>& a) { return in.sigma(static_cast<long>(a[0]) + 4, a[1]).last_output; },
      {k, n});

  // 1/2 = d(x_a, x_b) for dense 1/2 and 0.
  P half = P::x_dist(P::x_dense(P::nat(dyadic_code(make_rat(1, 2)))), P::x_dense(P::nat(dyadic_code(Rat(0)))));
  auto pos = [&](P t) { return P::mul(P::add(t, P::abs(t)), half); };
  auto clamp01 = [&](P t) { return P::sub(P::one(), pos(P::sub(P::one(), pos(t)))); };
  P two = P::add(P::one(), P::one());

  // Inside the product step the environment is (x, k, n, i, prev); 2^(i+3) by
  // doubling with environment (x, k, n, i, prev, j, p).
  P i = P::arg(3, Sort::Nat), prev = P::arg(4, Sort::Real);
  P scale = P::prim_rec(P::succ(P::succ(P::succ(i))), P::one(), P::add(P::arg(6, Sort::Real), P::arg(6, Sort::Real)));
  P tent_i = clamp01(P::sub(two, P::mul(scale, P::x_dist(x, P::x_dense(entry)))));
  P phi = P::prim_rec(length, P::one(), P::mul(prev, tent_i));
  P g = P::m_dense(last);
  return P::ml(P::acc(phi, g));
}

}  // namespace banachkit
