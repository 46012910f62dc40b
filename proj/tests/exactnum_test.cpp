#include <banachkit/exactnum.hpp>

#include <gtest/gtest.h>

#include <random>

namespace bk = banachkit;
using bk::CReal;
using bk::Rat;

namespace {

// Bisection oracle for sqrt(c): returns lo with lo^2 <= c < (lo + 2^-k)^2.
Rat bisect_sqrt(const Rat& c, long k) {
  Rat lo(0), hi(c + 1);
  while (hi - lo > bk::pow2(-k)) {
    Rat mid = (lo + hi) / 2;
    if (mid * mid <= c) lo = mid; else hi = mid;
  }
  return lo;
}

// log2(3) oracle on dyadic grid 2^-m: 2^(a/2^m) >= 3 iff 2^a >= 3^(2^m).
Rat bisect_log2_3(long m) {
  bk::Int three_pow;
  mpz_ui_pow_ui(three_pow.get_mpz_t(), 3, 1UL << m);
  long lo = 0, hi = 2L << m;  // log2 3 in [0, 2)
  while (hi - lo > 1) {
    long mid = (lo + hi) / 2;
    bk::Int two_pow = bk::Int(1) << static_cast<mp_bitcnt_t>(mid);
    if (two_pow >= three_pow) hi = mid; else lo = mid;
  }
  return Rat(lo) * bk::pow2(-m);
}

void expect_within(const Rat& a, const Rat& b, long k) {
  EXPECT_LE(bk::abs_of(a - b), bk::pow2(-k)) << a << " vs " << b << " at 2^-" << k;
}

}  // namespace

TEST(Rational, CanonicalFormAndWireFormat) {
  Rat q = bk::parse_rat("6/-4");
  EXPECT_EQ(q, Rat(-3, 2));
  EXPECT_EQ(bk::to_string(q), "-3/2");
  EXPECT_EQ(bk::parse_rat("-0.25"), Rat(-1, 4));
  EXPECT_EQ(bk::parse_rat(" 7 "), Rat(7));
  EXPECT_THROW(bk::parse_rat("1/0"), std::invalid_argument);
  EXPECT_THROW(bk::parse_rat("abc"), std::invalid_argument);
  EXPECT_EQ(bk::to_string(Rat(4)), "4");
}

TEST(Rational, LogHelpers) {
  EXPECT_EQ(bk::ceil_log2(Rat(1)), 0);
  EXPECT_EQ(bk::ceil_log2(Rat(3)), 2);
  EXPECT_EQ(bk::ceil_log2(Rat(1, 3)), -1);
  EXPECT_EQ(bk::floor_log2(Rat(1, 3)), -2);
  EXPECT_EQ(bk::exact_neg_log2(Rat(1, 8)), 3);
  EXPECT_EQ(bk::exact_neg_log2(Rat(4)), -2);
  EXPECT_FALSE(bk::exact_neg_log2(Rat(1, 3)).has_value());
}

TEST(Approx, ExactRationalsEmbed) {
  CReal third(Rat(1, 3));
  EXPECT_EQ(third.approx(2), Rat(1, 3));
  for (long k = 0; k < 40; k += 7) EXPECT_EQ(CReal(Rat(0)).approx(k), 0);
}

TEST(Approx, SqrtTwoMatchesBisection) {
  CReal root2 = bk::sqrt(CReal(Rat(2)));
  Rat q = root2.approx(10);
  EXPECT_GE(q * q, 2 - bk::pow2(-8));
  EXPECT_LE(q * q, 2 + bk::pow2(-8));
  expect_within(q, bisect_sqrt(Rat(2), 20), 10);
  EXPECT_EQ(bk::sqrt(CReal(Rat(9, 4))).exact(), Rat(3, 2));
}

TEST(Approx, MemoizedAndDeterministic) {
  int calls = 0;
  CReal x([&calls](long k) { ++calls; return bk::pow2(-k); }, Rat(1));
  EXPECT_EQ(x.approx(5), x.approx(5));
  EXPECT_EQ(calls, 1);
}

TEST(RealArith, Examples) {
  EXPECT_EQ((CReal(Rat(1, 2)) + CReal(Rat(1, 2))).exact(), Rat(1));
  expect_within((CReal(3) * CReal(Rat(1, 3))).approx(20), Rat(1), 20);
  EXPECT_EQ(bk::abs(CReal(Rat(1, 4)) - CReal(Rat(3, 4))).exact(), Rat(1, 2));
}

TEST(RealArith, InexactOperandsKeepContract) {
  CReal r2 = bk::sqrt(CReal(2));
  CReal r3 = bk::sqrt(CReal(3));
  Rat s2 = bisect_sqrt(Rat(2), 60), s3 = bisect_sqrt(Rat(3), 60);
  for (long k = 0; k <= 30; k += 3) {
    expect_within((r2 + r3).approx(k), s2 + s3, k);
    expect_within((r2 - r3).approx(k), s2 - s3, k);
    expect_within((r2 * r3).approx(k), s2 * s3, k);
    expect_within(bk::abs(r2 - r3).approx(k), s3 - s2, k);
    expect_within(bk::divide(r2, r3, Rat(1)).approx(k), s2 / s3, k - 0);
    expect_within(bk::max(r2, r3).approx(k), s3, k);
  }
}

TEST(RealArith, RefinementStaysConsistent) {
  std::vector<CReal> values = {bk::sqrt(CReal(2)), bk::sqrt(CReal(2)) * bk::sqrt(CReal(5)),
                               bk::pow2_neg(bk::sqrt(CReal(7))),
                               bk::neg_log2(CReal(Rat(1, 3)))};
  for (const auto& x : values) {
    for (long k = 0; k <= 30; ++k) {
      EXPECT_LE(bk::abs_of(x.approx(k) - x.approx(k + 5)), bk::pow2(-k) + bk::pow2(-(k + 5)));
    }
  }
}

TEST(SoftCompare, Examples) {
  EXPECT_EQ(bk::soft_compare(CReal(0), CReal(1), 4), bk::Ordering::Less);
  CReal x = bk::sqrt(CReal(2));
  for (long k = 0; k < 30; k += 5)
    EXPECT_EQ(bk::soft_compare(x, x, k), bk::Ordering::Indistinguishable);
  EXPECT_EQ(bk::soft_compare(CReal(Rat(1, 2)), CReal(Rat(1, 2) + bk::pow2(-20)), 4),
            bk::Ordering::Indistinguishable);
}

TEST(SoftCompare, NeverContradictsExactOrder) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<long> num(-1000, 1000), den(1, 64);
  for (int trial = 0; trial < 500; ++trial) {
    Rat a(num(rng), den(rng)), b(num(rng), den(rng));
    a.canonicalize();
    b.canonicalize();
    long k = trial % 12;
    auto o = bk::soft_compare(CReal(a), CReal(b), k);
    if (o == bk::Ordering::Less) EXPECT_LT(a, b);
    if (o == bk::Ordering::Greater) EXPECT_GT(a, b);
    if (bk::abs_of(a - b) > bk::pow2(-k + 1)) EXPECT_NE(o, bk::Ordering::Indistinguishable);
  }
}

TEST(MonotoneInverse, Examples) {
  auto identity = [](const Rat& x) { return CReal(x); };
  auto square = [](const Rat& x) { return CReal(Rat(x * x)); };
  auto halving = [](const Rat& x) { return bk::pow2_neg(CReal(x)); };
  for (long k : {0L, 5L, 12L, 24L}) {
    expect_within(bk::monotone_inverse(identity, CReal(Rat(1, 3)), 0, 1).approx(k), Rat(1, 3), k);
    expect_within(bk::monotone_inverse(square, CReal(Rat(1, 4)), 0, 1).approx(k), Rat(1, 2), k);
    expect_within(
        bk::monotone_inverse(halving, CReal(Rat(1, 4)), 0, 4, /*increasing=*/false).approx(k),
        Rat(2), k);
  }
}

TEST(MonotoneInverse, SquareAgreesWithBisectionOracle) {
  auto square = [](const Rat& x) { return CReal(Rat(x * x)); };
  CReal root = bk::monotone_inverse(square, CReal(Rat(1, 2)), 0, 1);
  expect_within(root.approx(16), bisect_sqrt(Rat(1, 2), 30), 16);
}

TEST(MonotoneInverse, OutsideRangeExhaustsBudget) {
  auto identity = [](const Rat& x) { return CReal(x); };
  EXPECT_THROW(bk::monotone_inverse(identity, CReal(2), 0, 1), bk::BudgetExceeded);
  EXPECT_THROW(bk::monotone_inverse(identity, CReal(1), 0, 1, true, 64), bk::BudgetExceeded);
}

TEST(PowersOfTwo, Examples) {
  EXPECT_EQ(bk::pow2_neg(CReal(2)).exact(), Rat(1, 4));
  EXPECT_EQ(bk::neg_log2(CReal(Rat(1, 8))).exact(), Rat(3));
  CReal y = bk::neg_log2(CReal(Rat(1, 3)));
  // -log2(1/3) = log2 3
  expect_within(y.approx(12), bisect_log2_3(14), 12);
  expect_within(bk::pow2_neg(y).approx(20), Rat(1, 3), 20);
}

TEST(PowersOfTwo, FractionalExponentAgreesWithSquaring) {
  // 2^-(1/2) squared is 1/2; 2^-(5/4) to the fourth is 2^-5.
  Rat h = bk::pow2_neg(CReal(Rat(1, 2))).approx(40);
  EXPECT_LE(bk::abs_of(h * h - Rat(1, 2)), bk::pow2(-38));
  Rat q = bk::pow2_neg(CReal(Rat(5, 4))).approx(40);
  EXPECT_LE(bk::abs_of(q * q * q * q - bk::pow2(-5)), bk::pow2(-37));
  Rat big = bk::pow2_neg(CReal(Rat(-33, 4))).approx(10);  // 2^(33/4)
  EXPECT_LE(bk::abs_of(big * big * big * big - bk::pow2(33)), bk::pow2(27));
}

TEST(PowersOfTwo, NegLog2OfZeroExhaustsBudget) {
  EXPECT_THROW(bk::neg_log2(CReal(0)), bk::BudgetExceeded);
  CReal tiny_zero([](long) { return Rat(0); }, Rat(1));
  EXPECT_THROW(bk::neg_log2(tiny_zero, 64), bk::BudgetExceeded);
}

TEST(PowersOfTwo, RoundTripOnRandomRationals) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<long> exponent(-9, 9), mantissa(1024, 2047);
  for (int trial = 0; trial < 100; ++trial) {
    Rat d = Rat(mantissa(rng), 1024) * bk::pow2(exponent(rng));
    d.canonicalize();
    CReal back = bk::pow2_neg(bk::neg_log2(CReal(d)));
    expect_within(back.approx(16), d, 16);
  }
}
