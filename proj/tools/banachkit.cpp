// banachkit: batch experiments over the library modules.  Reports are JSON
// (default) or CSV of the "rows" table; exit 0 ok, 2 contract violation,
// 3 budget exhausted or undefined.

#include <banachkit/exactnum.hpp>
#include <banachkit/internal.hpp>
#include <banachkit/normlab.hpp>
#include <banachkit/operators.hpp>
#include <banachkit/retraction.hpp>
#include <banachkit/spaces.hpp>
#include <banachkit/urysohn.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace banachkit;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct RunConfig {
  long k = 8;
  long J = 2;
  long m = 2;
  std::size_t samples = 10;
  std::uint64_t seed = 1;
  std::size_t budget = 0;  // 0: each module's default
  std::size_t budget_or(std::size_t fallback) const { return budget ? budget : fallback; }
  std::string out;
  std::string format = "json";
};

json config_json(const RunConfig& c) {
  return {{"k", c.k},       {"J", c.J},           {"m", c.m},           {"samples", c.samples},
          {"seed", c.seed}, {"budget", c.budget ? json(c.budget) : json("default")}, {"format", c.format}};
}

std::string q(const Rat& r) { return to_string(r); }

std::vector<Rat> parse_list(const std::string& text) {
  std::vector<Rat> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(parse_rat(item));
    } catch (const std::exception&) {
      throw ContractViolation("not a rational: '" + item + "'");
    }
  }
  if (out.empty()) throw ContractViolation("empty list");
  return out;
}

// Random rational p/q with |p/q| <= bound.
Rat random_rat(std::mt19937_64& rng, long bound, long den) {
  std::uniform_int_distribution<long> num(-bound * den, bound * den);
  return make_rat(num(rng), den);
}

std::string csv_cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void emit(const RunConfig& cfg, const json& report) {
  std::ostringstream os;
  if (cfg.format == "csv") {
    const json& rows = report.at("rows");
    if (!rows.empty()) {
      bool first = true;
      for (const auto& [key, _] : rows.front().items()) {
        os << (first ? "" : ",") << key;
        first = false;
      }
      os << '\n';
      for (const auto& row : rows) {
        first = true;
        for (const auto& [_, v] : row.items()) {
          os << (first ? "" : ",") << csv_cell(v);
          first = false;
        }
        os << '\n';
      }
    }
  } else {
    os << report.dump(2) << '\n';
  }
  if (cfg.out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(cfg.out);
    if (!f) throw ContractViolation("cannot write " + cfg.out);
    f << os.str();
  }
}

json header(const std::string& command, const RunConfig& cfg) {
  return {{"command", command},
          {"version", kVersion},
          {"modules",
           {{"exactnum", kVersion},
            {"spaces", kVersion},
            {"normlab", kVersion},
            {"operators", kVersion},
            {"retraction", kVersion},
            {"urysohn", kVersion},
            {"internal", kVersion}}},
          {"config", config_json(cfg)}};
}

// ---------------------------------------------------------------------------

json cmd_formula(const std::string& expr, const RunConfig& cfg) {
  Formula f = parse_formula(expr);
  json r = header("formula", cfg);
  bool t = truth(f);
  r["input"] = {{"formula", to_string(f)}};
  r["truth"] = t;
  NormedPair pair = compile_formula(f);
  auto witness = synthesize_witness(f);
  json trace = json::array();
  if (witness) {
    for (long m = 0; m <= cfg.m; ++m) {
      QVec z = witness_truncation(f, m);
      trace.push_back({{"m", m}, {"f_m", to_string(z)}, {"norm", q(pair.norm(z))}, {"F", q(pair.functional(z))}});
    }
    auto bp = alfsen_effros(pair);
    r["membership"] = {{"point", "(1, 1, witness)"},
                       {"k", cfg.k},
                       {"inside", check_triple_membership(bp, Rat(1), Rat(1), *witness, cfg.k)}};
  } else {
    r["membership"] = nullptr;
  }
  r["witness"] = trace;
  json rows = json::array();
  for (long J = 0; J <= cfg.J; ++J)
    for (long m = 0; m <= cfg.m; ++m) {
      Rat s = sup_unit_ball(f, J, m);
      rows.push_back({{"J", J}, {"m", m}, {"sup", q(s)}, {"below_one", s < 1}});
    }
  r["rows"] = rows;
  return r;
}

json cmd_ml(const std::string& seq, const RunConfig& cfg) {
  auto w = parse_list(seq);
  auto line = real_line();
  auto terms = modified_sequence<Rat>(line, [w](std::uint64_t n) { return w[std::min<std::size_t>(n, w.size() - 1)]; });
  json r = header("ml", cfg);
  r["input"] = {{"sequence", seq}, {"extension", "last term repeated"}};
  json rows = json::array();
  for (std::size_t n = 0; n < std::max<std::size_t>(w.size(), static_cast<std::size_t>(cfg.k) + 1); ++n)
    rows.push_back({{"n", n}, {"w", q(w[std::min(n, w.size() - 1)])}, {"w_m", q(terms(n))}});
  auto limit = ml<Rat>(line, [w](std::uint64_t n) { return w[std::min<std::size_t>(n, w.size() - 1)]; });
  r["limit"] = {{"value", q(limit.approx(cfg.k))}, {"error_bound", q(pow2(-cfg.k))}};
  r["rows"] = rows;
  return r;
}

json cmd_acc(const std::string& fs, const std::string& gs, const RunConfig& cfg) {
  auto f = parse_list(fs);
  auto g = parse_list(gs);
  auto line = real_line();
  auto exact = acc_exact<Rat>(line, f, g);
  auto approx = acc_approx<Rat>(
      line,
      [f](std::uint64_t n) { return CReal(n < f.size() ? f[n] : Rat(0)); },
      [line, g](std::uint64_t n) { return Point<Rat>::constant(line.metric_space, g[std::min<std::size_t>(n, g.size() - 1)]); },
      cfg.k, cfg.budget_or(kDefaultBudget));
  json r = header("acc", cfg);
  r["input"] = {{"f", fs}, {"g", gs}};
  r["value"] = q(exact.value);
  r["crossing"] = exact.crossing;
  r["approx"] = {{"value", q(approx.value)}, {"algorithm", approx.algorithm}, {"index", approx.index},
                 {"error_bound", q(pow2(-cfg.k))}};
  json rows = json::array();
  for (std::size_t i = 0; i < exact.coefficients.size(); ++i)
    rows.push_back({{"i", i}, {"coefficient", q(exact.coefficients[i])}, {"g", q(g[i])}});
  r["rows"] = rows;
  return r;
}

json cmd_accstar(const std::string& fs, const std::string& gs, const RunConfig& cfg) {
  auto f = parse_list(fs);
  auto gq = parse_list(gs);
  std::vector<std::uint64_t> g;
  for (const auto& v : gq) {
    if (v < 0 || v.get_den() != 1) throw ContractViolation("accstar targets must be naturals");
    g.push_back(v.get_num().get_ui());
  }
  auto mu = acc_star([f](std::uint64_t n) { return n < f.size() ? f[n] : Rat(0); },
                     [g](std::uint64_t n) { return g[std::min<std::size_t>(n, g.size() - 1)]; },
                     std::min(cfg.budget_or(kDefaultBudget), f.size()));
  json r = header("accstar", cfg);
  r["input"] = {{"f", fs}, {"g", gs}};
  r["mass"] = q(total_mass(mu));
  json rows = json::array();
  for (const auto& [i, w] : mu) rows.push_back({{"point", i}, {"weight", q(w)}});
  r["rows"] = rows;
  return r;
}

json cmd_retract(const RunConfig& cfg) {
  auto setup = plane_xaxis();
  std::mt19937_64 rng(cfg.seed);
  json r = header("retract", cfg);
  r["input"] = {{"fixture", "R^2 with M = x-axis, a_i = (rational_at(i), 0)"}};
  Rat tol = pow2(-cfg.k);
  json rows = json::array();
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    Vec2 x{random_rat(rng, 2, 8), s % 2 ? Rat(0) : random_rat(rng, 1, 8)};
    Vec2 gx = retract(setup, x, cfg.k);
    Rat to_m = abs_of(gx.y);
    Rat moved = setup.ambient.metric(gx, x).approx(cfg.k + 4);
    rows.push_back({{"x", q(x.x)},
                    {"y", q(x.y)},
                    {"gx", q(gx.x)},
                    {"gy", q(gx.y)},
                    {"d_g_M", q(to_m)},
                    {"d_g_M_ok", to_m <= tol},
                    {"on_M", x.y == 0},
                    {"fixed_ok", x.y != 0 || moved <= tol + pow2(-cfg.k - 4)}});
  }
  r["rows"] = rows;
  return r;
}

json cmd_embed(const std::string& points, const RunConfig& cfg) {
  auto pts = parse_list(points);
  UrysohnEmbedding e([pts](std::uint64_t i, std::uint64_t j) {
    return abs_of(pts[i % pts.size()] - pts[j % pts.size()]);
  });
  json r = header("embed", cfg);
  r["input"] = {{"points", points}, {"metric", "|a - b|"}};
  json images = json::array();
  for (std::size_t i = 0; i < pts.size(); ++i) images.push_back(e.image(i));
  r["images"] = images;
  bool isometric = true;
  json rows = json::array();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      Rat dx = abs_of(pts[i] - pts[j]), du = e.u_dist(e.image(i), e.image(j));
      isometric = isometric && dx == du;
      rows.push_back({{"i", i}, {"j", j}, {"d_X", q(dx)}, {"d_U", q(du)}, {"equal", dx == du}});
    }
  r["isometric"] = isometric;
  r["rows"] = rows;
  return r;
}

json cmd_u0(std::size_t size, const RunConfig& cfg) {
  if (size == 0) throw ContractViolation("u0 needs a positive size");
  auto u = u0_prefix(size);
  json r = header("u0", cfg);
  r["input"] = {{"size", size}};
  json matrix = json::array();
  json rows = json::array();
  for (std::size_t i = 0; i < size; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < size; ++j) {
      row.push_back(q(u.at(i, j)));
      if (i < j) rows.push_back({{"i", i}, {"j", j}, {"d", q(u.at(i, j))}});
    }
    matrix.push_back(row);
  }
  r["matrix"] = matrix;
  r["triangle_check"] = u.is_pseudometric();
  r["rows"] = rows;
  return r;
}

struct Transformer {
  FHat fhat;
  std::function<Rat(const Rat&)> oracle;
};

Transformer parse_transformer(const std::string& name) {
  if (name == "identity") return {identity_fhat(), [](const Rat& x) { return x; }};
  auto colon = name.find(':');
  std::string kind = name.substr(0, colon);
  std::string args = colon == std::string::npos ? "" : name.substr(colon + 1);
  if (kind == "constant") {
    Rat c = parse_list(args).at(0);
    return {constant_fhat(c), [c](const Rat&) { return c; }};
  }
  if (kind == "affine") {
    auto ab = parse_list(args);
    if (ab.size() != 2) throw ContractViolation("affine needs a,b");
    Rat a = ab[0], b = ab[1];
    return {affine_fhat(a, b), [a, b](const Rat& x) -> Rat { return a * x + b; }};
  }
  throw ContractViolation("unknown transformer '" + name + "'");
}

json cmd_internalize(const std::string& name, const RunConfig& cfg) {
  auto t = parse_transformer(name);
  Internalizer in(t.fhat, cfg.budget_or(std::size_t{1} << 22));
  std::mt19937_64 rng(cfg.seed);
  json r = header("internalize", cfg);
  r["input"] = {{"transformer", name}};
  json rows = json::array();
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    Rat x = random_rat(rng, 2, 48);
    Rat v = in(CReal(x)).approx(cfg.k);
    Rat expect = t.oracle(x);
    rows.push_back({{"x", q(x)},
                    {"value", q(v)},
                    {"oracle", q(expect)},
                    {"error", q(abs_of(v - expect))},
                    {"within", abs_of(v - expect) <= pow2(-cfg.k)}});
  }
  r["rows"] = rows;
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"banachkit experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  RunConfig cfg;
  app.add_option("--k", cfg.k, "precision exponent")->check(CLI::NonNegativeNumber);
  app.add_option("--J", cfg.J, "support bound")->check(CLI::NonNegativeNumber);
  app.add_option("--m", cfg.m, "support bound")->check(CLI::NonNegativeNumber);
  app.add_option("--samples", cfg.samples, "sample count")->check(CLI::PositiveNumber);
  app.add_option("--seed", cfg.seed, "random seed");
  app.add_option("--budget", cfg.budget, "step budget")->check(CLI::PositiveNumber);
  app.add_option("--out", cfg.out, "output file");
  app.add_option("--format", cfg.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));

  std::string expr, seq, fs, gs, points = "0,1/2,2,7/3", transformer = "identity";
  std::size_t size = 8;
  auto* formula = app.add_subcommand("formula", "truth, witness, membership and restricted suprema");
  formula->add_option("expr", expr, "formula over T, F, or(...), and(...)")->required();
  auto* mlc = app.add_subcommand("ml", "modified limit of a rational sequence");
  mlc->add_option("--seq", seq, "comma-separated rationals")->required();
  auto* acc = app.add_subcommand("acc", "accumulation in R");
  acc->add_option("--f", fs, "weights")->required();
  acc->add_option("--g", gs, "values")->required();
  auto* accstar = app.add_subcommand("accstar", "accumulated distribution on N");
  accstar->add_option("--f", fs, "weights")->required();
  accstar->add_option("--g", gs, "natural targets")->required();
  auto* retr = app.add_subcommand("retract", "retraction of the plane onto the x-axis");
  auto* embed = app.add_subcommand("embed", "Urysohn embedding of a finite rational subset of R");
  embed->add_option("--points", points, "comma-separated rationals");
  auto* u0 = app.add_subcommand("u0", "prefix of the rational Urysohn space");
  u0->add_option("--size", size, "number of points");
  auto* intern = app.add_subcommand("internalize", "internalized external transformer on R");
  intern->add_option("--transformer", transformer, "identity | constant:q | affine:a,b");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    json report;
    if (*formula) report = cmd_formula(expr, cfg);
    else if (*mlc) report = cmd_ml(seq, cfg);
    else if (*acc) report = cmd_acc(fs, gs, cfg);
    else if (*accstar) report = cmd_accstar(fs, gs, cfg);
    else if (*retr) report = cmd_retract(cfg);
    else if (*embed) report = cmd_embed(points, cfg);
    else if (*u0) report = cmd_u0(size, cfg);
    else report = cmd_internalize(transformer, cfg);
    emit(cfg, report);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << '\n';
    return 2;
  } catch (const Partiality& e) {
    std::cerr << "undefined: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
