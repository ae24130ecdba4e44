#pragma once

// Batch front end behind the `forge` executable. Every command is a pure
// function from parsed input to an Outcome, so tests can drive them without
// touching the filesystem; run() adds argument parsing and file I/O.

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "families.hpp"
#include "verify_numeric.hpp"
#include "verify_symbolic.hpp"

namespace isoforge::cli {

enum ExitCode : int { kPass = 0, kVerificationFailure = 1, kInputError = 2, kNumericFailure = 3 };

/// Unreadable files, malformed JSON, bad flags.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Manifest {
  std::string command;
  std::string spec_path;
  std::string output_path;
  IntegratorConfig integrator;
  std::uint64_t seed = 1;
  unsigned n_max = 19;
  std::vector<double> energies{1e-4, 1e-2, 1.0, 1e2};
  /// Largest accepted relative deviation of a measured period from 2 pi.
  double period_tolerance = 1e-7;
  std::string format;
  BuildOptions build;
};

/// `text` goes to the output file (or stdout), `diagnostic` to stderr.
struct Outcome {
  std::string text;
  int code = kPass;
  std::string diagnostic;
};

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline nlohmann::json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(origin + ": malformed JSON: " + e.what());
  }
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw InputError("cannot open spec file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_json_text(buf.str(), path);
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  if (!j.is_object())
    throw SpecError("<root>", "expected a JSON object");
  auto it = j.find(key);
  if (it == j.end())
    throw SpecError(key, "missing");
  return *it;
}

inline Poly poly_field(const nlohmann::json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string())
    throw SpecError(key, "expected a polynomial string such as \"x + y^2\"");
  try {
    return parse_poly(v.get<std::string>());
  } catch (const ParseError& e) {
    throw SpecError(key, e.what());
  }
}

inline HomogeneousPoly form_field(const nlohmann::json& j, const char* key) {
  Poly p = poly_field(j, key);
  try {
    return HomogeneousPoly::of(std::move(p));
  } catch (const std::invalid_argument& e) {
    throw SpecError(key, std::string("expected a nonzero homogeneous form: ") + e.what());
  }
}

inline nlohmann::json poly_json(const Poly& p) {
  return {{"canonical", to_canonical_string(p)}, {"pretty", to_pretty_string(p)}};
}

inline nlohmann::json map_json(const PolyMap& f) { return {{"f1", poly_json(f.f1)}, {"f2", poly_json(f.f2)}}; }

}  // namespace detail

// ---------------------------------------------------------------------------
// gen

inline nlohmann::json gen_report(const FamilySpec& spec, const BuildOptions& opt = {}) {
  const auto h = family_hamiltonian(spec, opt);
  nlohmann::json j;
  j["spec"] = to_json(spec);
  if (const auto* t = std::get_if<TriangularSpec>(&spec)) {
    j["branch"] = "triangular";
    j["k"] = t->k;
  } else {
    j["branch"] = "qshear";
    j["m"] = std::get<QShearSpec>(spec).m;
  }
  j["n"] = system_degree(h);
  j["deg_H"] = h.H.degree().value_or(0);
  j["f1"] = to_canonical_string(h.source->f1);
  j["f2"] = to_canonical_string(h.source->f2);
  j["H"] = to_canonical_string(h.H);
  j["pretty"] = {{"f1", to_pretty_string(h.source->f1)},
                 {"f2", to_pretty_string(h.source->f2)},
                 {"H", to_pretty_string(h.H)}};
  return j;
}

inline Outcome cmd_gen(const nlohmann::json& input, const BuildOptions& opt = {}) {
  return {dump(gen_report(family_spec_from_json(input, opt), opt)), kPass, {}};
}

// ---------------------------------------------------------------------------
// verify
//
// Input is a family spec, or a hand-written map {"map": {"f1": "...", "f2": "..."}}
// for which only the Jacobian check applies.

inline Outcome cmd_verify(const nlohmann::json& input, const BuildOptions& opt = {}) {
  PolyMap f;
  std::optional<FamilySpec> spec;
  if (input.is_object() && input.contains("map")) {
    if (input.size() != 1)
      throw SpecError("map", "a hand-supplied map must be the only key");
    const auto& m = input["map"];
    f = {detail::poly_field(m, "f1"), detail::poly_field(m, "f2")};
  } else {
    spec = family_spec_from_json(input, opt);
    f = build_family(*spec, opt);
  }

  nlohmann::json checks = nlohmann::json::array();
  std::string diag;
  bool all = true;
  auto record = [&](nlohmann::json check, bool pass, const std::string& failure) {
    check["pass"] = pass;
    checks.push_back(std::move(check));
    if (!pass)
      diag += "FAIL " + failure + "\n";
    all = all && pass;
  };

  const Poly det = jacobian_det(f);
  record({{"name", "unit_jacobian"}, {"det", detail::poly_json(det)}}, det == Poly(1),
         "unit_jacobian: det = " + to_pretty_string(det));

  if (spec) {
    try {
      PolyMap g = invert_map(f, *spec);
      record({{"name", "inverse_round_trip"}, {"inverse", detail::map_json(g)}}, true, {});
    } catch (const std::logic_error& e) {
      record({{"name", "inverse_round_trip"}, {"error", e.what()}}, false, std::string("inverse_round_trip: ") + e.what());
    }
    if (const auto* q = std::get_if<QShearSpec>(&*spec)) {
      auto t = qshear_cancellation_trace(*q);
      record({{"name", "cancellation_trace"}, {"trace", to_json(t)}}, t.consistent(),
             "cancellation_trace: total = " + to_pretty_string(t.total));
    }
  }

  nlohmann::json report{{"input", spec ? "family" : "map"},
                        {"map", detail::map_json(f)},
                        {"checks", checks},
                        {"result", all ? "PASS" : "FAIL"}};
  return {dump(report), all ? kPass : kVerificationFailure, diag};
}

// ---------------------------------------------------------------------------
// period

inline Outcome cmd_period(const nlohmann::json& input, const Manifest& mf) {
  const auto spec = family_spec_from_json(input, mf.build);
  mf.integrator.validate();
  const auto& es = mf.energies;
  if (es.empty())
    throw InputError("--energies: at least one energy is required");
  for (std::size_t i = 0; i < es.size(); ++i)
    if (!(es[i] > 0) || !std::isfinite(es[i]) || (i > 0 && !(es[i] > es[i - 1])))
      throw InputError("--energies: energies must be positive, finite and strictly ascending");
  if (!(mf.period_tolerance > 0))
    throw InputError("--period-tol: must be positive");

  const auto h = family_hamiltonian(spec, mf.build);
  const PolyMap inverse = invert_map(*h.source, spec);
  const double two_pi = 2 * std::numbers::pi;

  std::vector<PeriodReport> reports;
  std::vector<std::pair<double, std::string>> failures;
  double max_dev = 0.0;
  for (double e : es) {
    try {
      auto r = measure_period(h, start_for_energy(inverse, e), mf.integrator);
      max_dev = std::max(max_dev, std::abs(r.period - two_pi) / two_pi);
      reports.push_back(r);
    } catch (const NumericError& err) {
      failures.emplace_back(e, err.what());
    }
  }

  int code = !failures.empty() ? kNumericFailure : max_dev > mf.period_tolerance ? kVerificationFailure : kPass;
  std::string diag;
  for (const auto& [e, what] : failures)
    diag += "energy " + format_double(e) + ": " + what + "\n";
  if (code == kVerificationFailure)
    diag += "max relative deviation " + format_double(max_dev) + " exceeds " + format_double(mf.period_tolerance) + "\n";

  if (mf.format == "json") {
    nlohmann::json rs = nlohmann::json::array(), fs = nlohmann::json::array();
    for (const auto& r : reports)
      rs.push_back(to_json(r));
    for (const auto& [e, what] : failures)
      fs.push_back({{"energy", e}, {"error", what}});
    nlohmann::json j{{"spec", to_json(spec)},
                     {"reports", rs},
                     {"failures", fs},
                     {"max_relative_deviation", max_dev},
                     {"tolerance", mf.period_tolerance}};
    return {dump(j), code, diag};
  }
  std::string out = csv_header() + "\n";
  for (const auto& r : reports)
    out += to_csv_row(r) + "\n";
  for (const auto& [e, what] : failures)
    out += "# failed energy=" + format_double(e) + ": " + what + "\n";
  out += "# max_relative_deviation=" + format_double(max_dev) + " measured=" + std::to_string(reports.size()) +
         " failed=" + std::to_string(failures.size()) + "\n";
  return {out, code, diag};
}

// ---------------------------------------------------------------------------
// catalog

inline Outcome cmd_catalog(unsigned n_max, const std::string& format = "csv") {
  std::vector<BranchCatalogEntry> rows;
  try {
    rows = branch_catalog(n_max);
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("--n-max: ") + e.what());
  }
  if (format == "json") {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json q = nullptr;
      if (r.qshear_available)
        q = {{"m", *r.qshear_m}, {"parameters", *r.qshear_parameter_count()}};
      a.push_back({{"n", r.n},
                   {"triangular", {{"k", r.triangular_k}, {"parameters", r.triangular_parameter_count()}}},
                   {"qshear", q}});
    }
    return {dump(a), kPass, {}};
  }
  std::string out = "n,triangular,k,triangular_parameters,qshear,m,qshear_parameters\n";
  for (const auto& r : rows) {
    out += std::to_string(r.n) + ",yes," + std::to_string(r.triangular_k) + "," +
           std::to_string(r.triangular_parameter_count());
    if (r.qshear_available)
      out += ",yes," + std::to_string(*r.qshear_m) + "," + std::to_string(*r.qshear_parameter_count()) + "\n";
    else
      out += ",no,,\n";
  }
  return {out, kPass, {}};
}

// ---------------------------------------------------------------------------
// lemma
//
//   {"p": "...", "q": "..."}                   degeneracy witness
//   {"beta": "1/2", "h": "...", "degree": d}   transport problem; degree only needed for h = 0

inline Outcome cmd_lemma(const nlohmann::json& input) {
  if (!input.is_object())
    throw SpecError("<root>", "expected a JSON object");
  if (input.contains("p") || input.contains("q")) {
    isoforge::detail::reject_unknown_keys(input, {"p", "q"});
    const auto p = detail::form_field(input, "p"), q = detail::form_field(input, "q");
    nlohmann::json j{{"kind", "degeneracy"},
                     {"p", detail::poly_json(p.poly())},
                     {"q", detail::poly_json(q.poly())},
                     {"det", detail::poly_json(jacobian_det({p.poly(), q.poly()}))}};
    try {
      auto w = degeneracy_witness(p, q);
      if (w)
        j["witness"] = {{"r", detail::poly_json(w->r.poly())},
                        {"c_p", to_short_string(w->c_p)},
                        {"c_q", to_short_string(w->c_q)},
                        {"p_exponent", w->m_prime},
                        {"q_exponent", w->n_prime}};
      else
        j["witness"] = nullptr;
    } catch (const WitnessOutsideRationalField& e) {
      j["witness"] = nullptr;
      j["error"] = e.what();
      return {dump(j), kVerificationFailure, std::string(e.what()) + "\n"};
    }
    return {dump(j), kPass, {}};
  }

  isoforge::detail::reject_unknown_keys(input, {"beta", "h", "degree"});
  const Rational beta = isoforge::detail::rational_field(detail::field(input, "beta"), "beta");
  Poly hp = detail::poly_field(input, "h");
  HomogeneousPoly h;
  try {
    if (input.contains("degree")) {
      const auto& d = input["degree"];
      if (!d.is_number_integer() || d.get<long>() < 0)
        throw SpecError("degree", "expected a nonnegative integer");
      h = HomogeneousPoly(std::move(hp), static_cast<unsigned>(d.get<long>()));
    } else if (hp.is_zero()) {
      throw SpecError("degree", "required when h is zero");
    } else {
      h = HomogeneousPoly::of(std::move(hp));
    }
  } catch (const SpecError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw SpecError("h", std::string("expected a homogeneous form: ") + e.what());
  }
  const auto p = solve_transport({beta, h});
  const Poly residual = partial(p.poly(), Var::X) + partial(p.poly(), Var::Y) * beta - h.poly();
  nlohmann::json j{{"kind", "transport"},
                   {"beta", to_short_string(beta)},
                   {"h", detail::poly_json(h.poly())},
                   {"p", detail::poly_json(p.poly())},
                   {"degree", p.degree()},
                   {"residual", to_canonical_string(residual)}};
  bool ok = residual.is_zero() && is_zero(p.poly().coefficient(0, p.degree()));
  return {dump(j), ok ? kPass : kVerificationFailure, ok ? "" : "transport residual is nonzero\n"};
}

// ---------------------------------------------------------------------------
// equiv
//
//   {"a": <family spec>, "b": <family spec>, "sample_box": 1, "restarts": 20,
//    "unimodular": false, "samples_per_axis": 15}

inline Outcome cmd_equiv(const nlohmann::json& input, std::uint64_t seed) {
  if (!input.is_object())
    throw SpecError("<root>", "expected a JSON object");
  isoforge::detail::reject_unknown_keys(input, {"a", "b", "sample_box", "restarts", "unimodular", "samples_per_axis"});
  const auto a = family_spec_from_json(detail::field(input, "a"));
  const auto b = family_spec_from_json(detail::field(input, "b"));
  auto number = [&](const char* key, double fallback) {
    if (!input.contains(key))
      return fallback;
    if (!input[key].is_number())
      throw SpecError(key, "expected a number");
    return input[key].get<double>();
  };
  const double box = number("sample_box", 1.0);
  const double restarts = number("restarts", 20);
  const double per_axis = number("samples_per_axis", 15);
  if (!(box > 0))
    throw SpecError("sample_box", "must be positive");
  if (restarts < 1 || restarts != std::floor(restarts))
    throw SpecError("restarts", "must be a positive integer");
  if (per_axis < 2 || per_axis != std::floor(per_axis))
    throw SpecError("samples_per_axis", "must be an integer >= 2");
  EquivalenceSearchOptions opt;
  opt.seed = seed;
  opt.samples_per_axis = static_cast<int>(per_axis);
  if (input.contains("unimodular")) {
    if (!input["unimodular"].is_boolean())
      throw SpecError("unimodular", "expected true or false");
    opt.unimodular = input["unimodular"].get<bool>();
  }

  auto res = linear_equivalence_search(family_hamiltonian(a), family_hamiltonian(b), box,
                                       static_cast<int>(restarts), opt);
  nlohmann::json j{{"a", to_json(a)},
                   {"b", to_json(b)},
                   {"sample_box", box},
                   {"unimodular", opt.unimodular},
                   {"seed", seed},
                   {"search", to_json(res)}};
  return {dump(j), kPass, {}};
}

// ---------------------------------------------------------------------------
// Dispatch and argument parsing.

inline Outcome dispatch(const Manifest& mf) {
  if (mf.command == "catalog")
    return cmd_catalog(mf.n_max, mf.format.empty() ? "csv" : mf.format);
  const auto input = read_json_file(mf.spec_path);
  if (mf.command == "gen")
    return cmd_gen(input, mf.build);
  if (mf.command == "verify")
    return cmd_verify(input, mf.build);
  if (mf.command == "period")
    return cmd_period(input, mf);
  if (mf.command == "lemma")
    return cmd_lemma(input);
  if (mf.command == "equiv")
    return cmd_equiv(input, mf.seed);
  throw InputError("unknown command '" + mf.command + "'");
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"forge: build, verify and measure polynomial isochronous centers"};
  app.name("forge");
  app.require_subcommand(1);

  Manifest mf;
  auto add_spec = [&](CLI::App* sub) {
    sub->add_option("--spec", mf.spec_path, "input JSON file")->required()->check(CLI::ExistingFile);
  };
  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", mf.output_path, "output file (default stdout)"); };
  auto add_build = [&](CLI::App* sub) {
    sub->add_flag("--allow-degree-drop", mf.build.allow_degree_drop, "accept a vanishing leading coefficient");
  };

  auto* gen = app.add_subcommand("gen", "family map and Hamiltonian from a spec");
  auto* verify = app.add_subcommand("verify", "unit Jacobian, inverse round trip and cancellation trace");
  auto* period = app.add_subcommand("period", "measured periods over an energy grid (CSV)");
  auto* catalog = app.add_subcommand("catalog", "branch availability per odd system degree");
  auto* lemma = app.add_subcommand("lemma", "degeneracy witness or transport solution");
  auto* equiv = app.add_subcommand("equiv", "multi-start linear equivalence search");

  for (auto* sub : {gen, verify, period, lemma, equiv})
    add_spec(sub);
  for (auto* sub : {gen, verify, period, catalog, lemma, equiv})
    add_out(sub);
  for (auto* sub : {gen, verify, period})
    add_build(sub);

  period->add_option("--energies", mf.energies, "comma-separated ascending energies")->delimiter(',');
  period->add_option("--rel-tol", mf.integrator.rel_tol, "relative tolerance");
  period->add_option("--abs-tol", mf.integrator.abs_tol, "absolute tolerance");
  period->add_option("--section-tol", mf.integrator.section_refinement_tol, "section crossing tolerance");
  period->add_option("--max-step", mf.integrator.max_step, "largest step");
  period->add_option("--t-max", mf.integrator.t_max, "integration time limit per period");
  period->add_option("--period-tol", mf.period_tolerance, "accepted relative deviation from 2 pi");
  period->add_option("--format", mf.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  catalog->add_option("--n-max", mf.n_max, "largest odd system degree")->required();
  catalog->add_option("--format", mf.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  equiv->add_option("--seed", mf.seed, "seed for random restarts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kPass : kInputError;
  }
  mf.command = app.get_subcommands().front()->get_name();

  Outcome res;
  try {
    res = dispatch(mf);
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const SpecError& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::invalid_argument& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumericFailure;
  }

  if (mf.output_path.empty()) {
    out << res.text;
  } else {
    std::ofstream f(mf.output_path, std::ios::binary);
    if (!(f << res.text)) {
      err << "input error: cannot write '" << mf.output_path << "'\n";
      return kInputError;
    }
  }
  err << res.diagnostic;
  return res.code;
}

}  // namespace isoforge::cli
