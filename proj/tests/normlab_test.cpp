#include <banachkit/normlab.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace bk = banachkit;
using bk::Formula;
using bk::NormedPair;
using bk::QVec;
using bk::Rat;

namespace {

QVec vec(std::initializer_list<long> xs) {
  QVec v;
  std::uint64_t i = 0;
  for (long x : xs) v = v.with(i++, Rat(x));
  return v;
}

QVec random_qvec(std::mt19937_64& rng, std::uint64_t max_index) {
  std::uniform_int_distribution<std::uint64_t> idx(0, max_index);
  std::uniform_int_distribution<long> num(-9, 9), den(1, 6), len(0, 5);
  QVec v;
  for (long i = len(rng); i > 0; --i) {
    Rat q(num(rng), den(rng));
    q.canonicalize();
    v = v.with(idx(rng), q);
  }
  return v;
}

// Random vector inside the region explored by sup_unit_ball(f, J, m).
QVec random_in_region(std::mt19937_64& rng, const Formula& f, long J, long m) {
  std::uniform_int_distribution<long> num(-8, 8), den(1, 4), coin(0, 2);
  QVec v;
  if (f.kind == Formula::Kind::Top || f.kind == Formula::Kind::Bot) {
    for (long j = 0; j <= m; ++j) {
      if (coin(rng) == 0) continue;
      Rat q(num(rng), den(rng));
      q.canonicalize();
      v = v.with(static_cast<std::uint64_t>(j), q);
    }
    return v;
  }
  for (long n = 0; n <= J; ++n) {
    if (coin(rng) == 0) continue;
    auto un = static_cast<std::uint64_t>(n);
    v = v + bk::embed_component(un, random_in_region(rng, bk::padded_child(f, un), J, m));
  }
  return v;
}

std::vector<std::pair<std::string, NormedPair>> sample_pairs() {
  std::vector<std::pair<std::string, NormedPair>> pairs;
  pairs.emplace_back("top", bk::make_top());
  pairs.emplace_back("bot", bk::make_bot());
  auto alternating = [](std::uint64_t n) { return n % 2 == 0 ? bk::make_top() : bk::make_bot(); };
  pairs.emplace_back("exists", bk::combine_exists(alternating));
  pairs.emplace_back("forall", bk::combine_forall(alternating));
  for (const char* text : {"and(T,F)", "or(F,and(T,T))", "and(or(F,T),and(T,F),T)"})
    pairs.emplace_back(text, bk::compile_formula(bk::parse_formula(text)));
  return pairs;
}

// Sup of F/||v|| for compile(and(T,F)) restricted to component 0 coordinate 0
// and component 1 coordinates 0..2, evaluated directly from the defining sums
// on a grid of step 1/steps in [0,1]^4.
double grid_sup_and_top_bot(int steps) {
  double best = 0;
  for (int a = 0; a <= steps; ++a)
    for (int b0 = 0; b0 <= steps; ++b0)
      for (int b1 = 0; b1 <= steps; ++b1)
        for (int b2 = 0; b2 <= steps; ++b2) {
          double t0 = double(a) / steps;
          double x0 = double(b0) / steps, x1 = double(b1) / steps, x2 = double(b2) / steps;
          double n0 = t0, n1 = std::max({x0, x1, x2});
          double f0 = t0, f1 = x0 / 2 + x1 / 4 + x2 / 8;
          double norm = std::max(n0, n1) / 2 + n1 / 4;
          double value = (f0 + f1) / 4 + f1 / 8;
          if (norm > 0) best = std::max(best, value / norm);
        }
  return best;
}

}  // namespace

TEST(QVecAlgebra, CanonicalForm) {
  QVec v = vec({1, 0, 3});
  EXPECT_EQ(v.entries.size(), 2U);
  EXPECT_TRUE((v - v).is_zero());
  EXPECT_EQ(Rat(2) * v, v + v);
  EXPECT_EQ(bk::to_string(v), "{0:1,2:3}");
  EXPECT_TRUE(bk::qvec_at(0).is_zero());
}

TEST(QVecAlgebra, DenseEnumerationReachesSmallVectors) {
  std::set<std::string> seen;
  for (std::uint64_t n = 0; n < 20000; ++n) seen.insert(bk::to_string(bk::qvec_at(n)));
  for (const QVec& v : {vec({1}), vec({0, -1}), vec({1, 1}), vec({2, 0, 1})})
    EXPECT_TRUE(seen.contains(bk::to_string(v))) << bk::to_string(v);
}

TEST(BasePairs, TopExamples) {
  auto top = bk::make_top();
  EXPECT_EQ(top.norm(QVec{}), 0);
  EXPECT_EQ(top.functional(QVec{}), 0);
  EXPECT_EQ(top.norm(vec({1, -2, 3})), 6);
  EXPECT_EQ(top.functional(vec({1, -2, 3})), 2);
  EXPECT_EQ(top.norm(QVec::unit(0)), 1);
  EXPECT_EQ(top.functional(QVec::unit(0)), 1);
}

TEST(BasePairs, BotExamples) {
  auto bot = bk::make_bot();
  EXPECT_EQ(bot.norm(QVec{}), 0);
  EXPECT_EQ(bot.norm(vec({1, -2, 3})), 3);
  EXPECT_EQ(bot.functional(vec({1, -2, 3})), bk::make_rat(3, 8));
  EXPECT_EQ(bot.norm(vec({1, 1, 1})), 1);
  EXPECT_EQ(bot.functional(vec({1, 1, 1})), bk::make_rat(7, 8));
}

TEST(Quantifiers, ExistsSumsComponentNorms) {
  auto ex = bk::combine_exists(
      [](std::uint64_t n) { return n % 2 == 0 ? bk::make_top() : bk::make_bot(); });
  QVec v = bk::embed_component(0, vec({1, 1})) + bk::embed_component(1, vec({0, 3}));
  EXPECT_EQ(ex.norm(v), 5);
  EXPECT_EQ(ex.functional(v), 2 + bk::make_rat(3, 4));
  EXPECT_EQ(ex.norm(QVec{}), 0);
}

TEST(Quantifiers, ForallWeightsConsecutivePairs) {
  auto all = bk::combine_forall([](std::uint64_t) { return bk::make_top(); });
  QVec v = bk::embed_component(0, QVec::unit(0)) + bk::embed_component(1, QVec::unit(0));
  EXPECT_EQ(all.norm(v), bk::make_rat(3, 4));
  EXPECT_EQ(all.functional(v), bk::make_rat(5, 8));
  EXPECT_EQ(all.norm(QVec{}), 0);
  // Isolated component 3: terms 2 and 3 both see it.
  QVec w = bk::embed_component(3, QVec::unit(0));
  EXPECT_EQ(all.norm(w), bk::make_rat(1, 8) + Rat(1, 16));
  EXPECT_EQ(all.functional(w), Rat(1, 16) + Rat(1, 32));
}

TEST(Quantifiers, LocalityIgnoresUnqueriedChildren) {
  QVec v = bk::embed_component(0, vec({2, -1})) + bk::embed_component(2, vec({1, 0, 5}));
  auto honest = [](std::uint64_t n) { return n == 2 ? bk::make_bot() : bk::make_top(); };
  auto poisoned = [](std::uint64_t n) -> NormedPair {
    if (n == 0) return bk::make_top();
    if (n == 2) return bk::make_bot();
    throw std::runtime_error("child outside the support queried");
  };
  for (auto combine : {bk::combine_exists, bk::combine_forall}) {
    auto a = combine(honest), b = combine(poisoned);
    EXPECT_EQ(a.norm(v), b.norm(v));
    EXPECT_EQ(a.functional(v), b.functional(v));
    auto swapped = combine([](std::uint64_t n) { return n == 2 ? bk::make_bot() : bk::make_bot(); });
    EXPECT_NE(a.norm(v), swapped.norm(v));
  }
}

TEST(Properties, NormAxiomsAndFunctionalBound) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<long> num(-5, 5), den(1, 4);
  for (auto& [name, pair] : sample_pairs()) {
    for (int trial = 0; trial < 500; ++trial) {
      QVec u = random_qvec(rng, 30), v = random_qvec(rng, 30);
      Rat s(num(rng), den(rng));
      s.canonicalize();
      EXPECT_EQ(pair.norm(s * u), bk::abs_of(s) * pair.norm(u)) << name;
      EXPECT_LE(pair.norm(u + v), pair.norm(u) + pair.norm(v)) << name;
      EXPECT_EQ(pair.norm(u) == 0, u.is_zero()) << name;
      EXPECT_LE(bk::abs_of(pair.functional(u)), pair.norm(u)) << name;
      EXPECT_EQ(pair.functional(u + s * v), pair.functional(u) + s * pair.functional(v)) << name;
    }
  }
}

TEST(Formulas, ParserRoundTripAndErrors) {
  Formula f = bk::parse_formula(" and( T ,or(F, T) ) ");
  EXPECT_EQ(bk::to_string(f), "and(T,or(F,T))");
  EXPECT_TRUE(bk::truth(f));
  EXPECT_FALSE(bk::truth(bk::parse_formula("and(T,F)")));
  try {
    bk::parse_formula("or(T,,F)");
    FAIL();
  } catch (const bk::ParseError& e) {
    EXPECT_EQ(e.position(), 5U);
  }
  EXPECT_THROW(bk::parse_formula("and()"), bk::ParseError);
  EXPECT_THROW(bk::parse_formula("T T"), bk::ParseError);
  EXPECT_THROW(bk::parse_formula("x"), bk::ParseError);
}

TEST(Formulas, CompiledTopIsTop) {
  auto top = bk::make_top();
  auto compiled = bk::compile_formula(Formula::top());
  QVec v = vec({3, -1, 2});
  EXPECT_EQ(compiled.norm(v), top.norm(v));
  EXPECT_EQ(compiled.functional(v), top.functional(v));
}

TEST(Formulas, OrAttainsAtEmbeddedTopUnit) {
  auto pair = bk::compile_formula(bk::parse_formula("or(F,T)"));
  QVec e = bk::embed_component(1, QVec::unit(0));
  EXPECT_EQ(pair.norm(e), 1);
  EXPECT_EQ(pair.functional(e), 1);
}

TEST(Witness, Examples) {
  auto top = bk::synthesize_witness(Formula::top());
  ASSERT_TRUE(top.has_value());
  EXPECT_EQ(top->entry(0), QVec::unit(0));
  EXPECT_FALSE(bk::synthesize_witness(Formula::bot()).has_value());

  Formula tt = bk::parse_formula("and(T,T)");
  auto pair = bk::compile_formula(tt);
  EXPECT_TRUE(bk::witness_truncation(tt, 0).is_zero());
  for (long m = 1; m < 12; ++m) {
    QVec f = bk::witness_truncation(tt, m);
    EXPECT_EQ(pair.norm(f), 1 - bk::pow2(-m));
    EXPECT_EQ(pair.functional(f), 1 - Rat(3, 2) * bk::pow2(-m));
  }
}

TEST(Witness, PureOrWitnessIsExact) {
  Formula f = bk::parse_formula("or(F,or(F,T))");
  auto w = bk::synthesize_witness(f);
  ASSERT_TRUE(w.has_value());
  auto pair = bk::compile_formula(f);
  EXPECT_EQ(w->entry(0), w->entry(5));
  EXPECT_EQ(pair.norm(w->entry(0)), 1);
  EXPECT_EQ(pair.functional(w->entry(0)), 1);
}

TEST(Witness, TrueFormulasConvergeAtStatedRate) {
  for (const char* text : {"T", "and(T,T)", "or(F,and(T,T))", "and(or(F,T),and(T,T),T)",
                           "and(and(and(T,T),T),or(F,F,and(T,T)))"}) {
    Formula f = bk::parse_formula(text);
    auto pair = bk::compile_formula(f);
    auto w = bk::synthesize_witness(f);
    ASSERT_TRUE(w.has_value()) << text;
    for (std::uint64_t m = 0; m < 9; ++m) {  // entry reads also check the modulus
      QVec fm = w->entry(m);
      Rat gap = bk::pow2(-static_cast<long>(m) + 1);
      EXPECT_LE(bk::abs_of(1 - pair.norm(fm)), gap) << text << " m=" << m;
      EXPECT_LE(bk::abs_of(1 - pair.functional(fm)), gap) << text << " m=" << m;
    }
  }
}

TEST(SupUnitBall, Examples) {
  EXPECT_EQ(bk::sup_unit_ball(Formula::top(), 3, 3), 1);
  EXPECT_EQ(bk::sup_unit_ball(Formula::bot(), 0, 2), bk::make_rat(7, 8));
  EXPECT_EQ(bk::sup_unit_ball(bk::parse_formula("and(T,F)"), 1, 2), Rat(37, 48));
}

TEST(SupUnitBall, AndTopBotAgreesWithGridOracle) {
  double grid = grid_sup_and_top_bot(64);
  EXPECT_NEAR(grid, 37.0 / 48.0, 1e-12);

  // Exact check on the coarse grid through the compiled pair itself.
  auto pair = bk::compile_formula(bk::parse_formula("and(T,F)"));
  Rat best(0);
  for (int a = 0; a <= 4; ++a)
    for (int b0 = 0; b0 <= 4; ++b0)
      for (int b1 = 0; b1 <= 4; ++b1)
        for (int b2 = 0; b2 <= 4; ++b2) {
          QVec v = bk::embed_component(0, QVec{}.with(0, bk::make_rat(a, 4))) +
                   bk::embed_component(1, QVec{}.with(0, bk::make_rat(b0, 4)).with(1, bk::make_rat(b1, 4)).with(2, bk::make_rat(b2, 4)));
          if (v.is_zero()) continue;
          best = bk::max_of(best, Rat(pair.functional(v) / pair.norm(v)));
        }
  EXPECT_EQ(best, Rat(37, 48));
}

TEST(SupUnitBall, BoundsEveryVectorInTheRegion) {
  std::mt19937_64 rng(5);
  for (const char* text : {"and(T,F)", "or(F,F)", "and(F,T,T)", "or(F,and(T,F))",
                           "and(or(F,T),and(T,T))", "and(T,or(F,and(T,F)))"}) {
    Formula f = bk::parse_formula(text);
    auto pair = bk::compile_formula(f);
    for (long J = 0; J <= 3; ++J) {
      for (long m = 0; m <= 3; ++m) {
        Rat s = bk::sup_unit_ball(f, J, m);
        for (int trial = 0; trial < 60; ++trial) {
          QVec v = random_in_region(rng, f, J, m);
          EXPECT_LE(pair.functional(v), s * pair.norm(v)) << text << " J=" << J << " m=" << m;
        }
      }
    }
  }
}

TEST(SupUnitBall, FalseFormulasStayBelowOne) {
  for (const char* text : {"F", "and(T,F)", "or(F,F)", "and(F,T)", "or(F,and(T,F))",
                           "and(or(F,F),T)", "and(T,T,or(F,and(F,T)))"}) {
    Formula f = bk::parse_formula(text);
    ASSERT_FALSE(bk::truth(f));
    for (long J = 0; J <= 6; ++J)
      for (long m = 0; m <= 6; ++m) EXPECT_LT(bk::sup_unit_ball(f, J, m), 1) << text;
  }
}

TEST(ThreeBalls, Examples) {
  auto bp = bk::alfsen_effros(bk::make_top());
  bk::Triple p{Rat(1), Rat(1), QVec::unit(0)};
  for (const auto& c : bp.centers) EXPECT_EQ(bp.distance(p, c), 1);
  EXPECT_TRUE(bk::check_triple_membership(bp, p, 0));

  bk::Triple origin{Rat(0), Rat(0), {}};
  EXPECT_EQ(bp.distance(origin, bp.centers[2]), 4);
  EXPECT_FALSE(bk::check_triple_membership(bp, origin, 3));
}

TEST(ThreeBalls, ForallWitnessEntersTheIntersection) {
  Formula tt = bk::parse_formula("and(T,T)");
  auto bp = bk::alfsen_effros(bk::compile_formula(tt));
  for (long k = 0; k < 8; ++k) {
    QVec z = bk::witness_truncation(tt, k + 2);
    EXPECT_TRUE(bk::check_triple_membership(bp, bk::Triple{Rat(1), Rat(1), z}, k)) << k;
  }
  auto w = bk::synthesize_witness(tt);
  for (long k = 0; k < 8; ++k) EXPECT_TRUE(bk::check_triple_membership(bp, Rat(1), Rat(1), *w, k));
  // Too coarse a truncation misses at fine precision.
  EXPECT_FALSE(bk::check_triple_membership(bp, bk::Triple{Rat(1), Rat(1), bk::witness_truncation(tt, 1)}, 4));
}

TEST(ThreeBalls, ForwardDirectionOnSmallGrid) {
  // Base R (one top coordinate) and a non-attaining bot base on two coordinates.
  auto top = bk::alfsen_effros(bk::make_top());
  auto bot = bk::alfsen_effros(bk::make_bot());
  int top_hits = 0, bot_hits = 0;
  for (int x = -8; x <= 24; ++x)
    for (int y = -8; y <= 24; ++y)
      for (int c = -12; c <= 12; ++c) {
        bk::Triple t{bk::make_rat(x, 8), bk::make_rat(y, 8), QVec{}.with(0, bk::make_rat(c, 8))};
        if (bk::check_triple_membership(top, t, 1000000)) {
          ++top_hits;
          EXPECT_EQ(t.x, 1);
          EXPECT_EQ(t.y, 1);
          EXPECT_EQ(top.base.norm(t.z), 1);
          EXPECT_EQ(top.base.functional(t.z), 1);
        }
        for (int d = -8; d <= 8; d += 2) {
          bk::Triple u{bk::make_rat(x, 8), bk::make_rat(y, 8), QVec{}.with(0, bk::make_rat(c, 8)).with(1, bk::make_rat(d, 8))};
          bool exact = true;
          for (const auto& center : bot.centers) exact = exact && bot.distance(u, center) <= 1;
          if (exact) ++bot_hits;
        }
      }
  EXPECT_EQ(top_hits, 1);
  EXPECT_EQ(bot_hits, 0);
}

TEST(Product, NormIsEuclidean) {
  auto prod = bk::euclidean_product(
      [](std::uint64_t) { return bk::alfsen_effros(bk::make_top()); });
  bk::EuclideanProduct::Element e{{0, bk::Triple{Rat(3), Rat(0), {}}},
                                  {1, bk::Triple{Rat(0), Rat(4), {}}}};
  EXPECT_EQ(prod.norm(e).approx(20), 5);
  auto single = bk::alfsen_effros(bk::make_top());
  bk::Triple t{Rat(1, 2), Rat(3, 2), vec({1, -1})};
  bk::EuclideanProduct::Element one{{0, t}};
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_EQ(prod.distance(one, prod.center(0, i)).approx(30), single.distance(t, single.centers[i]));
}

TEST(Product, CoordinateWitnessPassesItsTriple) {
  std::vector<Formula> formulas = {bk::parse_formula("and(T,F)"), bk::parse_formula("or(F,T)"),
                                   bk::parse_formula("and(T,T)")};
  auto prod = bk::euclidean_product(
      [formulas](std::uint64_t n) { return bk::alfsen_effros(bk::compile_formula(formulas.at(n))); });
  for (std::uint64_t n : {1UL, 2UL}) {
    for (long k = 0; k < 6; ++k) {
      QVec z = bk::witness_truncation(formulas[n], k + 3);
      bk::EuclideanProduct::Element e{{n, bk::Triple{Rat(1), Rat(1), z}}};
      EXPECT_TRUE(prod.check_membership(n, e, k)) << n << " " << k;
    }
  }
  // The origin is far from every triple.
  EXPECT_FALSE(prod.check_membership(0, {}, 2));
}
