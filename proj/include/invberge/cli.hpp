#pragma once

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "invberge/fixedpoint.hpp"
#include "invberge/io.hpp"

namespace invberge {

namespace detail {

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliOptions {
  std::string doc_path;
  std::string out;
  std::string csv;
  std::string bin;
  std::string bin_prefix;
  std::string in_path;
  std::string metric;
  double epsilon = -1.0;       // < 0 means: use the document value
  std::int64_t budget = -1;    // < 0 means: use the document value
  int threads = 0;             // 0 means: document, then INVBERGE_THREADS, then 1
  bool timing = false;
};

inline int resolve_threads(const CliOptions& o, const ProblemDocument& d) {
  if (o.threads > 0) return o.threads;
  if (d.threads > 0) return d.threads;
  if (const char* env = std::getenv("INVBERGE_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 1;
}

inline void apply_overrides(ProblemDocument& d, const CliOptions& o) {
  if (!o.metric.empty()) d.metric = metric_from_name(o.metric, "--metric");
  if (o.epsilon >= 0.0) d.epsilon = o.epsilon;
  if (o.budget > 0) d.budget = o.budget;
}

inline void emit_result(const CliOptions& o, const ResultDocument& r) {
  const std::string text = serialize_result(r);
  if (o.out.empty()) {
    std::cout << text;
    std::cout.flush();
  } else {
    atomic_write(o.out, text);
  }
}

inline json point_json(const ProductGrid& g, std::int64_t lin) {
  json arr = json::array();
  for (double c : g.point(lin)) arr.push_back(c);
  return arr;
}

inline json equilibria_json(const EquilibriumSet& eq, const ProductGrid& g) {
  json out = json::object();
  out["epsilon"] = eq.epsilon;
  out["count"] = eq.profiles.size();
  json rows = json::array();
  for (std::size_t i = 0; i < eq.profiles.size(); ++i) {
    json row = json::object();
    row["index"] = eq.profiles[i];
    row["point"] = point_json(g, eq.profiles[i]);
    row["residuals"] = eq.residuals[i];
    rows.push_back(std::move(row));
  }
  out["equilibria"] = rows;
  return out;
}

inline ScalarField run_synthesis_route(const ProblemDocument& d, const SynthesisInstance& inst,
                                       int threads) {
  if (d.route == "distance") return synth_distance_payoff(inst.M, d.metric, threads);
  if (d.route == "tau") {
    std::vector<double> levels = d.levels;
    if (levels.empty())
      throw std::invalid_argument("the tau route requires a non-empty 'levels' array");
    return synth_tau_payoff(expansion_family(inst.M, levels, d.metric, threads));
  }
  // urysohn: opens are distance expansions intersected with gra(K), largest first
  std::vector<double> radii = d.levels;
  if (radii.empty()) {
    const double diam = box_diameter(inst.M.graph.grid, d.metric);
    for (int n = 1; n <= d.terms; ++n) radii.push_back(diam / std::ldexp(1.0, n - 1));
  }
  std::sort(radii.begin(), radii.end(), std::greater<double>());
  const ScalarField dist = distance_transform(inst.M.graph, d.metric, threads);
  std::vector<CellMask> opens;
  for (double t : radii) {
    CellMask u = make_mask(inst.M.graph.grid);
    for (std::size_t i = 0; i < u.bits.size(); ++i)
      u.bits[i] = inst.K.graph.bits[i] && (inst.M.graph.bits[i] || dist.values[i] < t);
    opens.push_back(std::move(u));
  }
  return synth_urysohn_sum(inst.M, inst.K, opens, d.terms, d.metric, threads);
}

inline int cmd_synth(const CliOptions& o, ProblemDocument d) {
  if (d.kind != DocumentKind::synthesis)
    throw std::invalid_argument("synth expects a document of kind 'synthesis'");
  const int threads = resolve_threads(o, d);
  const SynthesisInstance inst = build_synthesis(d, threads);
  const ScalarField theta = run_synthesis_route(d, inst, threads);
  const InverseReport rep = verify_inverse(theta, inst.M, inst.K, d.argmax_tol, threads);

  const std::string csv_path = o.csv.empty() ? "theta.csv" : o.csv;
  const std::string bin_path = o.bin.empty() ? "theta.fld" : o.bin;
  write_field_csv(csv_path, theta);
  write_field_binary(bin_path, theta);

  ResultDocument r;
  r.operation = "synth";
  r.input_digest = problem_digest(d);
  r.seed = d.seed;
  double lo = theta.values.front(), hi = theta.values.front();
  std::int64_t ones = 0;
  for (double v : theta.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    ones += v == 1.0;
  }
  r.outputs["route"] = d.route;
  r.outputs["field"] = json{{"min", lo}, {"max", hi}, {"points_at_one", ones},
                            {"csv", csv_path}, {"bin", bin_path}};
  r.outputs["identity"] = json{{"equal", rep.equal},
                               {"only_in_argmax", rep.only_in_argmax_count},
                               {"only_in_target", rep.only_in_target_count}};
  emit_result(o, r);
  return rep.equal ? 0 : 1;
}

inline int cmd_solve(const CliOptions& o, ProblemDocument d) {
  const int threads = resolve_threads(o, d);
  SolveOptions opts;
  opts.budget = d.budget;
  opts.threads = threads;
  ResultDocument r;
  r.operation = "solve";
  r.input_digest = problem_digest(d);
  r.seed = d.seed;
  if (d.kind == DocumentKind::nep) {
    const EquilibriumSet eq = brute_force_nash(build_nep(d, threads), d.epsilon, opts);
    r.outputs = equilibria_json(eq, document_grid(d));
  } else if (d.kind == DocumentKind::gnep) {
    const EquilibriumSet eq = brute_force_gnash(build_gnep(d, threads), d.epsilon, opts);
    r.outputs = equilibria_json(eq, document_grid(d));
  } else {
    throw std::invalid_argument("solve expects a document of kind 'nep' or 'gnep'");
  }
  emit_result(o, r);
  return 0;
}

inline int cmd_reduce(const CliOptions& o, ProblemDocument d) {
  if (d.kind != DocumentKind::gnep)
    throw std::invalid_argument("reduce expects a document of kind 'gnep'");
  const int threads = resolve_threads(o, d);
  SolveOptions opts;
  opts.budget = d.budget;
  opts.threads = threads;
  const GnepProblem P = build_gnep(d, threads);
  const ReductionResult res = reduce_gnep_to_nep(P, d.metric, std::nullopt, opts);
  ResultDocument r;
  r.operation = "reduce";
  r.input_digest = problem_digest(d);
  r.seed = d.seed;
  r.outputs["match"] = res.certificate.match;
  r.outputs["gnep"] = equilibria_json(res.certificate.gnep, P.nep.full);
  r.outputs["nep"] = equilibria_json(res.certificate.nep, P.nep.full);
  if (!o.bin_prefix.empty()) {
    json files = json::array();
    for (std::size_t i = 0; i < res.reduced.payoffs.size(); ++i) {
      const std::string path = o.bin_prefix + "_" + std::to_string(i + 1) + ".fld";
      write_field_binary(path, res.reduced.payoffs[i].table);
      files.push_back(path);
    }
    r.outputs["payoff_files"] = files;
  }
  emit_result(o, r);
  return res.certificate.match ? 0 : 1;
}

inline int cmd_invert(const CliOptions& o, ProblemDocument d) {
  if (d.kind != DocumentKind::inverse_nash)
    throw std::invalid_argument("invert expects a document of kind 'inverse_nash'");
  const int threads = resolve_threads(o, d);
  SolveOptions opts;
  opts.budget = d.budget;
  opts.threads = threads;
  const ProductGrid full = document_grid(d);
  std::vector<CellMask> graphs;
  for (const MaskSpec& spec : d.constraints) graphs.push_back(materialize_mask(spec, full, threads));
  const CellMask target = materialize_mask(*d.target, full, threads);
  const InverseNashResult res =
      inverse_nash(player_boxes(d), graphs, target, d.metric, d.epsilon, opts);
  ResultDocument r;
  r.operation = "invert";
  r.input_digest = problem_digest(d);
  r.seed = d.seed;
  r.outputs["match"] = res.match;
  r.outputs["mismatch_count"] = res.mismatch_count;
  r.outputs["equilibrium_count"] = res.equilibria.profiles.size();
  r.outputs["target_count"] = target.count();
  if (!o.bin.empty()) {
    write_field_binary(o.bin, res.payoffs.front().table);
    r.outputs["payoff_file"] = o.bin;
  }
  emit_result(o, r);
  return res.match ? 0 : 1;
}

inline int cmd_fixpoint(const CliOptions& o, ProblemDocument d) {
  if (d.kind != DocumentKind::fixedpoint)
    throw std::invalid_argument("fixpoint expects a document of kind 'fixedpoint'");
  const int threads = resolve_threads(o, d);
  const ProductGrid C = document_grid(d);
  const ProductGrid CC = product(C, C);
  const ScalarField theta =
      tabulate_expression(*parse_expression(*d.theta, static_cast<int>(CC.dim())), CC, threads);
  double tol = d.epsilon;
  if (tol <= 0.0)
    for (const Axis& a : C.axes()) tol = std::max(tol, a.step());
  ResultDocument r;
  r.operation = "fixpoint";
  r.input_digest = problem_digest(d);
  r.seed = d.seed;
  bool ok = false;
  if (d.method == "minimax") {
    const FixedPointResult res = fixed_point_via_minimax(theta, tol, threads);
    r.outputs["method"] = "minimax";
    r.outputs["point"] = point_json(C, res.point);
    r.outputs["residual"] = res.residual;
    r.outputs["certified"] = res.certified;
    r.outputs["rows_quasiconcave"] = res.quasiconcave_rows;
    ok = res.certified;
  } else {
    SolveOptions opts;
    opts.budget = d.budget;
    opts.threads = threads;
    const KakutaniResult res = kakutani_via_nash(theta, d.metric, tol, opts);
    r.outputs["method"] = "nash";
    r.outputs["found"] = res.found;
    if (res.found) {
      r.outputs["point"] = point_json(C, res.x_hat);
      r.outputs["partner"] = point_json(C, res.y_hat);
      r.outputs["gap"] = res.gap;
      r.outputs["best_response_gap"] = res.best_response_gap;
    }
    r.outputs["certified"] = res.certified;
    r.outputs["rows_quasiconcave"] = res.quasiconcave_rows;
    ok = res.certified;
  }
  r.outputs["tolerance"] = tol;
  emit_result(o, r);
  return ok ? 0 : 1;
}

inline int cmd_minimax(const CliOptions& o, ProblemDocument d) {
  if (d.kind != DocumentKind::minimax)
    throw std::invalid_argument("minimax expects a document of kind 'minimax'");
  const int threads = resolve_threads(o, d);
  const ProductGrid C = document_grid(d);
  const ProductGrid CC = product(C, C);
  const ScalarField f =
      tabulate_expression(*parse_expression(*d.theta, static_cast<int>(CC.dim())), CC, threads);
  const MinimaxReport rep = kyfan_minimax_check(f, d.epsilon, threads);
  ResultDocument r;
  r.operation = "minimax";
  r.input_digest = problem_digest(d);
  r.seed = d.seed;
  r.outputs["lhs"] = rep.lhs;
  r.outputs["rhs"] = rep.rhs;
  r.outputs["holds"] = rep.holds;
  r.outputs["tolerance"] = rep.tol;
  r.outputs["argmin_witness"] = point_json(C, rep.argmin_witness);
  r.outputs["inner_argmax"] = point_json(C, rep.inner_argmax);
  r.outputs["rows_quasiconcave"] = rep.rows_quasiconcave;
  emit_result(o, r);
  return rep.holds ? 0 : 1;
}

inline int cmd_check(const CliOptions& o, ProblemDocument d) {
  const int threads = resolve_threads(o, d);
  SolveOptions opts;
  opts.budget = d.budget;
  opts.threads = threads;
  json checks = json::array();
  bool all = true;
  auto record = [&](const std::string& name, bool pass) {
    checks.push_back(json{{"name", name}, {"pass", pass}});
    all = all && pass;
  };

  const std::string canon = serialize_problem(d);
  record("round_trip", serialize_problem(parse_problem(canon)) == canon);
  record("digest_stable", problem_digest(parse_problem(canon)) == problem_digest(d));

  switch (d.kind) {
    case DocumentKind::synthesis: {
      const SynthesisInstance inst = build_synthesis(d, threads);
      const ScalarField theta = run_synthesis_route(d, inst, threads);
      bool identity = true;
      for (std::size_t i = 0; i < theta.values.size(); ++i)
        identity = identity && ((theta.values[i] == 1.0) == (inst.M.graph.bits[i] != 0));
      record("exact_one_identity", identity);
      record("argmax_matches_graph", verify_inverse(theta, inst.M, inst.K, d.argmax_tol, threads).equal);
      if (d.route == "distance") {
        bool lip = true;
        const ProductGrid& g = theta.grid;
        std::mt19937_64 rng(d.seed);
        std::uniform_int_distribution<std::int64_t> pick(0, g.size() - 1);
        for (int it = 0; it < 2000 && lip; ++it) {
          const std::int64_t p = pick(rng), q = pick(rng);
          lip = std::abs(theta.values[static_cast<std::size_t>(p)] -
                         theta.values[static_cast<std::size_t>(q)]) <=
                metric_distance(g, p, q, d.metric) + 1e-12;
        }
        record("lipschitz_sample", lip);
      }
      break;
    }
    case DocumentKind::nep: {
      const GnepProblem P = as_gnep(build_nep(d, threads));
      const EquilibriumSet eq = brute_force_gnash(P, 0.0, opts);
      const auto graphs = aligned_argmax_graphs(P, std::vector<double>(P.nep.payoffs.size(), 0.0), opts);
      record("gng_identity", mask_equal(eq.mask, graph_intersection(std::span<const CellMask>(graphs))));
      break;
    }
    case DocumentKind::gnep: {
      const GnepProblem P = build_gnep(d, threads);
      const EquilibriumSet eq = brute_force_gnash(P, 0.0, opts);
      const auto graphs = aligned_argmax_graphs(P, std::vector<double>(P.nep.payoffs.size(), 0.0), opts);
      record("gng_identity", mask_equal(eq.mask, graph_intersection(std::span<const CellMask>(graphs))));
      record("reduction_certificate", reduce_gnep_to_nep(P, d.metric, std::nullopt, opts).certificate.match);
      record("indicator_certificate", indicator_reformulation(P, d.epsilon, opts).match);
      break;
    }
    case DocumentKind::inverse_nash: {
      const ProductGrid full = document_grid(d);
      std::vector<CellMask> graphs;
      for (const MaskSpec& spec : d.constraints)
        graphs.push_back(materialize_mask(spec, full, threads));
      const CellMask target = materialize_mask(*d.target, full, threads);
      record("certificate",
             inverse_nash(player_boxes(d), graphs, target, d.metric, d.epsilon, opts).match);
      break;
    }
    case DocumentKind::fixedpoint: {
      const ProductGrid C = document_grid(d);
      const ProductGrid CC = product(C, C);
      const ScalarField theta =
          tabulate_expression(*parse_expression(*d.theta, static_cast<int>(CC.dim())), CC, threads);
      double tol = d.epsilon;
      if (tol <= 0.0)
        for (const Axis& a : C.axes()) tol = std::max(tol, a.step());
      const FixedPointResult a = fixed_point_via_minimax(theta, tol, threads);
      const KakutaniResult b = kakutani_via_nash(theta, d.metric, tol, opts);
      record("minimax_certified", a.certified);
      record("nash_certified", b.certified);
      record("methods_agree",
             a.certified && b.found && metric_distance(C, a.point, b.x_hat, d.metric) <= tol + 1e-12);
      break;
    }
    case DocumentKind::minimax: {
      const ProductGrid C = document_grid(d);
      const ProductGrid CC = product(C, C);
      const ScalarField f =
          tabulate_expression(*parse_expression(*d.theta, static_cast<int>(CC.dim())), CC, threads);
      const MinimaxReport rep = kyfan_minimax_check(f, d.epsilon, threads);
      record("verdict_holds", rep.holds);
      break;
    }
  }

  ResultDocument r;
  r.operation = "check";
  r.input_digest = problem_digest(d);
  r.seed = d.seed;
  r.outputs["checks"] = checks;
  r.outputs["all_pass"] = all;
  emit_result(o, r);
  return all ? 0 : 1;
}

inline int cmd_export(const CliOptions& o) {
  if (o.in_path.empty() || o.csv.empty())
    throw std::invalid_argument("export requires --in <field.fld> and --csv <out.csv>");
  write_field_csv(o.csv, read_field_binary(o.in_path));
  return 0;
}

}  // namespace detail

/// Entry point shared by the binary and in-process callers. args excludes the
/// program name. Exit codes: 0 success, 1 negative verdict, 2 usage or schema
/// errors. Diagnostics go to stderr, machine output to files or stdout.
inline int run_command(const std::vector<std::string>& args) {
  CLI::App app{"grid toolkit for inverse maximum theorems, generalized Nash games and fixed points"};
  app.require_subcommand(1);
  detail::CliOptions o;

  auto add_common = [&](CLI::App* c, bool needs_doc) {
    if (needs_doc)
      c->add_option("document", o.doc_path, "problem document (JSON)")
          ->required()
          ->check(CLI::ExistingFile);
    c->add_option("--metric", o.metric, "metric override: euclid, l1 or linf")
        ->check(CLI::IsMember({"euclid", "l1", "linf"}));
    c->add_option("--epsilon", o.epsilon, "equilibrium/certificate tolerance override");
    c->add_option("--budget", o.budget, "enumeration budget override");
    c->add_option("--threads", o.threads, "worker threads (also INVBERGE_THREADS)");
    c->add_option("--out", o.out, "result document path (default: stdout)");
    c->add_flag("--timing", o.timing, "record wall time in the result document");
  };

  CLI::App* synth = app.add_subcommand("synth", "synthesize a payoff field for a correspondence");
  add_common(synth, true);
  synth->add_option("--csv", o.csv, "field CSV path (default theta.csv)");
  synth->add_option("--bin", o.bin, "field binary path (default theta.fld)");

  CLI::App* solve = app.add_subcommand("solve", "enumerate equilibria of a game document");
  add_common(solve, true);

  CLI::App* reduce = app.add_subcommand("reduce", "reduce a generalized game to a classical one");
  add_common(reduce, true);
  reduce->add_option("--bin-prefix", o.bin_prefix, "write reduced payoffs to <prefix>_i.fld");

  CLI::App* invert = app.add_subcommand("invert", "synthesize payoffs for a prescribed equilibrium set");
  add_common(invert, true);
  invert->add_option("--bin", o.bin, "write the synthesized payoff field");

  CLI::App* fixpoint = app.add_subcommand("fixpoint", "compute a fixed point of an argmax correspondence");
  add_common(fixpoint, true);

  CLI::App* minimax = app.add_subcommand("minimax", "evaluate the minimax inequality report");
  add_common(minimax, true);

  CLI::App* check = app.add_subcommand("check", "run the property suite on a document");
  add_common(check, true);

  CLI::App* exp = app.add_subcommand("export", "convert a binary field file to CSV");
  exp->add_option("--in", o.in_path, "field binary input")->required()->check(CLI::ExistingFile);
  exp->add_option("--csv", o.csv, "CSV output path")->required();

  std::vector<const char*> argv;
  argv.push_back("invberge");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const auto started = std::chrono::steady_clock::now();
  try {
    int code = 0;
    if (exp->parsed()) {
      code = detail::cmd_export(o);
      return code;
    }
    ProblemDocument d = parse_problem(detail::read_text_file(o.doc_path));
    detail::apply_overrides(d, o);
    if (synth->parsed()) code = detail::cmd_synth(o, std::move(d));
    else if (solve->parsed()) code = detail::cmd_solve(o, std::move(d));
    else if (reduce->parsed()) code = detail::cmd_reduce(o, std::move(d));
    else if (invert->parsed()) code = detail::cmd_invert(o, std::move(d));
    else if (fixpoint->parsed()) code = detail::cmd_fixpoint(o, std::move(d));
    else if (minimax->parsed()) code = detail::cmd_minimax(o, std::move(d));
    else if (check->parsed()) code = detail::cmd_check(o, std::move(d));
    if (o.timing) {
      const auto elapsed = std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - started);
      std::cerr << "invberge: wall time " << elapsed.count() << " ms\n";
    }
    return code;
  } catch (const SchemaError& e) {
    std::cerr << "invberge: schema error: " << e.what() << "\n";
    return 2;
  } catch (const ExprError& e) {
    std::cerr << "invberge: expression error: " << e.what() << "\n";
    return 2;
  } catch (const ExprDomainError& e) {
    std::cerr << "invberge: expression domain error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invberge: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "invberge: error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace invberge
