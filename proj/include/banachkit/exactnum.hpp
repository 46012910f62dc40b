#pragma once

// Exact rationals and computable reals.
//
// A CReal is a memoizing approximant k -> Rat with |approx(k) - x| <= 2^-k,
// together with an a-priori rational bound on |x|.  Operations propagate
// precision through these magnitude bounds; nothing is re-evaluated on
// intervals.  Exact rationals take a fast path and stay exact.

#include <gmpxx.h>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace banachkit {

using Rat = mpq_class;
using Int = mpz_class;

/// A stated precondition or structural invariant does not hold.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The value is genuinely undefined (or not found within the step budget).
class Partiality : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BudgetExceeded : public Partiality {
 public:
  using Partiality::Partiality;
};

/// The accumulation operators are undefined when the total mass is <= 1.
class InsufficientMass : public Partiality {
 public:
  using Partiality::Partiality;
};

inline constexpr std::size_t kDefaultBudget = 4096;

// ---------------------------------------------------------------------------
// Rational helpers

inline Rat pow2(long e) {
  Rat r(1);
  if (e >= 0) {
    mpz_mul_2exp(r.get_num_mpz_t(), r.get_num_mpz_t(), static_cast<mp_bitcnt_t>(e));
  } else {
    mpz_mul_2exp(r.get_den_mpz_t(), r.get_den_mpz_t(), static_cast<mp_bitcnt_t>(-e));
  }
  return r;
}

inline Rat make_rat(long num, long den = 1) {
  Rat r(num, den);
  r.canonicalize();
  return r;
}

inline Int floor_of(const Rat& q) {
  Int r;
  mpz_fdiv_q(r.get_mpz_t(), q.get_num_mpz_t(), q.get_den_mpz_t());
  return r;
}

inline Int ceil_of(const Rat& q) {
  Int r;
  mpz_cdiv_q(r.get_mpz_t(), q.get_num_mpz_t(), q.get_den_mpz_t());
  return r;
}

inline Rat abs_of(const Rat& q) { return q < 0 ? Rat(-q) : q; }

inline const Rat& max_of(const Rat& a, const Rat& b) { return a < b ? b : a; }
inline const Rat& min_of(const Rat& a, const Rat& b) { return b < a ? b : a; }

/// Smallest e with 2^e >= x, for x > 0.
inline long ceil_log2(const Rat& x) {
  if (x <= 0) throw ContractViolation("ceil_log2 of a non-positive rational");
  long e = static_cast<long>(mpz_sizeinbase(x.get_num_mpz_t(), 2)) -
           static_cast<long>(mpz_sizeinbase(x.get_den_mpz_t(), 2));
  while (pow2(e) < x) ++e;
  while (pow2(e - 1) >= x) --e;
  return e;
}

/// Largest e with 2^e <= x, for x > 0.
inline long floor_log2(const Rat& x) {
  long e = ceil_log2(x);
  return pow2(e) == x ? e : e - 1;
}

/// Nearest multiple of 2^-p (ties round up).
inline Rat round_dyadic(const Rat& q, long p) {
  Rat scaled = q * pow2(p) + Rat(1, 2);
  return Rat(floor_of(scaled)) * pow2(-p);
}

/// Exponent e with 2^-e = q, if q is a power of two.
inline std::optional<long> exact_neg_log2(const Rat& q) {
  if (q <= 0) return std::nullopt;
  const auto is_pow2 = [](const Int& z) { return mpz_popcount(z.get_mpz_t()) == 1; };
  if (!is_pow2(q.get_num()) || !is_pow2(q.get_den())) return std::nullopt;
  long num_bits = static_cast<long>(mpz_sizeinbase(q.get_num_mpz_t(), 2)) - 1;
  long den_bits = static_cast<long>(mpz_sizeinbase(q.get_den_mpz_t(), 2)) - 1;
  return den_bits - num_bits;
}

/// "p/q" (or "p" for integers).  This is the wire format everywhere.
inline std::string to_string(const Rat& q) { return q.get_str(); }

/// Accepts "p", "p/q" and finite decimals such as "-0.25".
inline Rat parse_rat(std::string_view text) {
  std::string s(text);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t start = s.find_first_not_of(" \t");
  if (start == std::string::npos) throw std::invalid_argument("empty rational");
  s = s.substr(start);
  if (auto dot = s.find('.'); dot != std::string::npos) {
    std::string digits = s.substr(0, dot) + s.substr(dot + 1);
    long scale = static_cast<long>(s.size() - dot - 1);
    Rat r;
    if (r.set_str(digits, 10) != 0 || digits.empty() || digits == "-" || digits == "+")
      throw std::invalid_argument("malformed rational: " + std::string(text));
    Rat ten_pow(1);
    for (long i = 0; i < scale; ++i) ten_pow *= 10;
    r /= ten_pow;
    r.canonicalize();
    return r;
  }
  if (!s.empty() && s[0] == '+') s = s.substr(1);
  Rat r;
  if (s.empty() || r.set_str(s, 10) != 0)
    throw std::invalid_argument("malformed rational: " + std::string(text));
  if (r.get_den() == 0) throw std::invalid_argument("zero denominator: " + std::string(text));
  r.canonicalize();
  return r;
}

// ---------------------------------------------------------------------------
// Computable reals

class CReal {
 public:
  using Approximant = std::function<Rat(long)>;

  CReal() : CReal(Rat(0)) {}

  CReal(const Rat& value)  // NOLINT: exact rationals embed implicitly
      : impl_(std::make_shared<Impl>()) {
    impl_->bound = abs_of(value);
    impl_->exact = value;
  }

  CReal(long value) : CReal(Rat(value)) {}  // NOLINT

  /// `bound` must dominate |x|.
  CReal(Approximant fn, Rat bound) : impl_(std::make_shared<Impl>()) {
    impl_->fn = std::move(fn);
    impl_->bound = abs_of(bound);
  }

  /// Rational within 2^-k of the represented real.  Deterministic.
  Rat approx(long k) const {
    if (impl_->exact) return *impl_->exact;
    {
      std::lock_guard lock(impl_->mutex);
      if (auto it = impl_->memo.find(k); it != impl_->memo.end()) return it->second;
    }
    Rat value = impl_->fn(k);
    std::lock_guard lock(impl_->mutex);
    return impl_->memo.emplace(k, std::move(value)).first->second;
  }

  const Rat& bound() const { return impl_->bound; }
  const std::optional<Rat>& exact() const { return impl_->exact; }
  bool is_exact() const { return impl_->exact.has_value(); }

 private:
  struct Impl {
    Approximant fn;
    Rat bound;
    std::optional<Rat> exact;
    std::mutex mutex;
    std::map<long, Rat> memo;
  };
  std::shared_ptr<Impl> impl_;
};

inline Rat approx(const CReal& x, long k) { return x.approx(k); }

inline CReal operator-(const CReal& a) {
  if (a.is_exact()) return CReal(Rat(-*a.exact()));
  return CReal([a](long k) -> Rat { return Rat(-a.approx(k)); }, a.bound());
}

inline CReal operator+(const CReal& a, const CReal& b) {
  if (a.is_exact() && b.is_exact()) return CReal(Rat(*a.exact() + *b.exact()));
  if (b.is_exact() && *b.exact() == 0) return a;
  if (a.is_exact() && *a.exact() == 0) return b;
  return CReal(
      [a, b](long k) -> Rat { return round_dyadic(a.approx(k + 2) + b.approx(k + 2), k + 1); },
      a.bound() + b.bound());
}

inline CReal operator-(const CReal& a, const CReal& b) { return a + (-b); }

inline CReal operator*(const CReal& a, const CReal& b) {
  if (a.is_exact() && b.is_exact()) return CReal(Rat(*a.exact() * *b.exact()));
  // |ab - pq| <= |a||b - q| + |q||a - p|, |q| <= B + 1.
  long ea = ceil_log2(a.bound() + 1);
  long eb = ceil_log2(b.bound() + 1);
  return CReal(
      [a, b, ea, eb](long k) -> Rat {
        Rat q = b.approx(k + 2 + ea);
        Rat p = a.approx(k + 2 + eb);
        return round_dyadic(p * q, k + 1);
      },
      a.bound() * b.bound());
}

inline CReal abs(const CReal& a) {
  if (a.is_exact()) return CReal(abs_of(*a.exact()));
  return CReal([a](long k) -> Rat { return abs_of(a.approx(k)); }, a.bound());
}

inline CReal max(const CReal& a, const CReal& b) {
  if (a.is_exact() && b.is_exact()) return CReal(max_of(*a.exact(), *b.exact()));
  return CReal(
      [a, b](long k) -> Rat { return max_of(a.approx(k), b.approx(k)); },
      max_of(a.bound(), b.bound()));
}

inline CReal min(const CReal& a, const CReal& b) {
  if (a.is_exact() && b.is_exact()) return CReal(min_of(*a.exact(), *b.exact()));
  return CReal(
      [a, b](long k) -> Rat { return min_of(a.approx(k), b.approx(k)); },
      max_of(a.bound(), b.bound()));
}

/// x / y given a rational lower bound 0 < lower <= |y|.
inline CReal divide(const CReal& x, const CReal& y, const Rat& lower) {
  if (lower <= 0) throw ContractViolation("divide needs a positive lower bound on |y|");
  if (x.is_exact() && y.is_exact()) return CReal(Rat(*x.exact() / *y.exact()));
  long e = -floor_log2(lower);  // 2^-e <= lower
  long ex = ceil_log2(x.bound() + 1);
  return CReal(
      [x, y, e, ex](long k) -> Rat {
        Rat p = x.approx(k + 2 + e);
        Rat q = y.approx(k + 3 + 2 * e + ex);
        return round_dyadic(p / q, k + 1);
      },
      x.bound() / lower);
}

namespace detail {

inline Int isqrt(const Int& n) {
  Int r;
  mpz_sqrt(r.get_mpz_t(), n.get_mpz_t());
  return r;
}

inline std::optional<Rat> exact_sqrt(const Rat& q) {
  if (q < 0) return std::nullopt;
  if (mpz_perfect_square_p(q.get_num_mpz_t()) == 0 ||
      mpz_perfect_square_p(q.get_den_mpz_t()) == 0)
    return std::nullopt;
  Rat r(isqrt(q.get_num()), isqrt(q.get_den()));
  r.canonicalize();
  return r;
}

}  // namespace detail

/// Square root of a nonnegative real (negative approximants clamp to 0).
inline CReal sqrt(const CReal& x) {
  if (x.is_exact()) {
    if (auto r = detail::exact_sqrt(*x.exact())) return CReal(*r);
  }
  return CReal(
      [x](long k) -> Rat {
        // |sqrt a - sqrt b| <= sqrt|a - b|
        Rat q = x.approx(2 * k + 2);
        if (q <= 0) return Rat(0);
        Int scaled = floor_of(q * pow2(2 * (k + 1)));
        return Rat(detail::isqrt(scaled)) * pow2(-(k + 1));
      },
      (x.bound() + 1) / 2);
}

// ---------------------------------------------------------------------------
// Comparison

enum class Ordering { Less, Greater, Indistinguishable };

/// Never returns a wrong strict verdict; Indistinguishable implies
/// |x - y| <= 2^-k.
inline Ordering soft_compare(const CReal& x, const CReal& y, long k) {
  Rat d = x.approx(k + 2) - y.approx(k + 2);
  Rat tol = pow2(-(k + 1));
  if (d > tol) return Ordering::Greater;
  if (d < -tol) return Ordering::Less;
  return Ordering::Indistinguishable;
}

/// Repeatedly refines until x and y separate; throws BudgetExceeded if they
/// never do (x == y).
inline Ordering certify_order(const CReal& x, const CReal& y, long start,
                              std::size_t budget = kDefaultBudget) {
  for (std::size_t step = 0; step < budget; ++step) {
    Ordering o = soft_compare(x, y, start + static_cast<long>(step));
    if (o != Ordering::Indistinguishable) return o;
  }
  throw BudgetExceeded("comparison did not separate within the step budget");
}

// ---------------------------------------------------------------------------
// Monotone inverse

/// Preimage of y under f, strictly monotone and continuous on [lo, hi].
/// f is sampled only at rational points.  Requires y strictly between f(lo)
/// and f(hi); otherwise fails with BudgetExceeded.
inline CReal monotone_inverse(std::function<CReal(const Rat&)> f, const CReal& y, Rat lo,
                              Rat hi, bool increasing = true,
                              std::size_t budget = kDefaultBudget) {
  if (!(lo < hi)) throw ContractViolation("monotone_inverse needs lo < hi");
  auto fn = std::make_shared<std::function<CReal(const Rat&)>>(std::move(f));
  const Ordering below = increasing ? Ordering::Less : Ordering::Greater;
  const Ordering above = increasing ? Ordering::Greater : Ordering::Less;

  // Bracket check at construction: y must lie strictly inside the range.
  if (certify_order((*fn)(lo), y, 0, budget) != below ||
      certify_order((*fn)(hi), y, 0, budget) != above)
    throw BudgetExceeded("monotone_inverse: value outside the open range");

  Rat bound = max_of(abs_of(lo), abs_of(hi));
  return CReal(
      [fn, y, lo, hi, below, above, budget](long k) -> Rat {
        Rat a = lo, b = hi;
        Rat width = pow2(-k);
        long precision = 0;
        std::size_t steps = 0;
        while (b - a > width) {
          Rat m1 = a + (b - a) * Rat(3, 8);
          Rat m2 = a + (b - a) * Rat(5, 8);
          CReal f1 = (*fn)(m1), f2 = (*fn)(m2);
          for (;;) {
            if (++steps > budget)
              throw BudgetExceeded("monotone_inverse: step budget exhausted");
            Ordering c1 = soft_compare(f1, y, precision);
            Ordering c2 = soft_compare(f2, y, precision);
            if (c1 == above) { b = m1; break; }
            if (c2 == below) { a = m2; break; }
            if (c2 == above) { b = m2; break; }
            if (c1 == below) { a = m1; break; }
            ++precision;
          }
        }
        return (a + b) / 2;
      },
      bound);
}

// ---------------------------------------------------------------------------
// Powers of two

namespace detail {

/// 2^-q within 2^-precision, for rational q.  Integer part exact; the
/// fractional part is a product of the square-root staged constants
/// 2^(-2^-i), computed in fixed point with exact integer square roots.
inline Rat pow2_neg_rat(const Rat& q, long precision) {
  Int n = floor_of(q);
  if (q == Rat(n)) return pow2(-n.get_si());
  Rat t = q - Rat(n);  // in (0, 1)
  long shift = n.get_si();
  long frac_precision = std::max(1L, precision - shift);
  long bits = frac_precision + 2;
  Int t_bits = floor_of(t * pow2(bits));  // truncation error <= 2^-bits in t
  long guard = 8;
  while ((1L << (guard - 4)) < bits) ++guard;
  long width = frac_precision + guard;
  Int one = Int(1) << static_cast<mp_bitcnt_t>(width);
  Int acc = one;
  Int root = detail::isqrt(Int(1) << static_cast<mp_bitcnt_t>(2 * width - 1));  // 2^(-1/2)
  for (long i = 1; i <= bits; ++i) {
    if (i > 1) root = detail::isqrt(root * one);
    if (mpz_tstbit(t_bits.get_mpz_t(), static_cast<mp_bitcnt_t>(bits - i)) != 0) {
      acc = (acc * root) >> static_cast<mp_bitcnt_t>(width);
    }
  }
  return Rat(acc) * pow2(-width) * pow2(-shift);
}

}  // namespace detail

/// 2^-y.
inline CReal pow2_neg(const CReal& y) {
  if (y.is_exact() && y.exact()->get_den() == 1) return CReal(pow2(-y.exact()->get_num().get_si()));
  // 2^-y <= 2^top, and 2^top also bounds the slope.
  long top = std::max(ceil_of(1 - y.approx(0)).get_si(), 0L) + 1;
  return CReal(
      [y, top](long k) -> Rat {
        Rat q = y.approx(k + 3 + top);
        return round_dyadic(detail::pow2_neg_rat(q, k + 2), k + 2);
      },
      pow2(top));
}

/// -log2(d) for d > 0.  The bracketing search runs at construction and
/// fails with BudgetExceeded when d = 0.
inline CReal neg_log2(const CReal& d, std::size_t budget = kDefaultBudget) {
  if (d.is_exact()) {
    if (*d.exact() <= 0) throw BudgetExceeded("neg_log2 of a non-positive value");
    if (auto e = exact_neg_log2(*d.exact())) return CReal(Rat(*e));
  }
  for (std::size_t p = 0; p < budget; ++p) {
    Rat a = d.approx(static_cast<long>(p));
    Rat eps = pow2(-static_cast<long>(p));
    if (a > 2 * eps) {
      Rat lower = a - eps, upper = a + eps;
      long lo = -ceil_log2(upper) - 1;  // 2^-lo > d
      long hi = -floor_log2(lower) + 1;  // 2^-hi < d
      return monotone_inverse([](const Rat& y) { return pow2_neg(CReal(y)); }, d, Rat(lo),
                              Rat(hi), /*increasing=*/false, budget);
    }
    if (a < -2 * eps) throw BudgetExceeded("neg_log2 of a negative value");
  }
  throw BudgetExceeded("neg_log2: no positive lower bound found (value is 0?)");
}

}  // namespace banachkit
