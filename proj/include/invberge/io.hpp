#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "invberge/distance.hpp"
#include "invberge/expr.hpp"
#include "invberge/games.hpp"
#include "invberge/grid.hpp"
#include "invberge/synthesis.hpp"

namespace invberge {

using json = nlohmann::json;

/// Document violates the schema; `pointer` locates the offending field.
struct SchemaError : std::runtime_error {
  std::string pointer;
  SchemaError(const std::string& msg, std::string ptr)
      : std::runtime_error(msg + " (at " + (ptr.empty() ? "/" : ptr) + ")"),
        pointer(std::move(ptr)) {}
};

enum class DocumentKind { synthesis, nep, gnep, inverse_nash, fixedpoint, minimax };

inline std::string kind_name(DocumentKind k) {
  switch (k) {
    case DocumentKind::synthesis: return "synthesis";
    case DocumentKind::nep: return "nep";
    case DocumentKind::gnep: return "gnep";
    case DocumentKind::inverse_nash: return "inverse_nash";
    case DocumentKind::fixedpoint: return "fixedpoint";
    case DocumentKind::minimax: return "minimax";
  }
  return "?";
}

inline DocumentKind kind_from_name(const std::string& s, const std::string& ptr) {
  for (DocumentKind k : {DocumentKind::synthesis, DocumentKind::nep, DocumentKind::gnep,
                         DocumentKind::inverse_nash, DocumentKind::fixedpoint,
                         DocumentKind::minimax})
    if (kind_name(k) == s) return k;
  throw SchemaError("unknown kind '" + s + "'", ptr);
}

inline Metric metric_from_name(const std::string& s, const std::string& ptr = "/metric") {
  if (s == "euclid") return Metric::euclid;
  if (s == "l1") return Metric::l1;
  if (s == "linf") return Metric::linf;
  throw SchemaError("unknown metric '" + s + "'", ptr);
}

/// A set on the grid: either a predicate expression or explicit row-major bits.
struct MaskSpec {
  std::string predicate;
  std::string bits;
  bool is_predicate() const { return !predicate.empty(); }
  bool operator==(const MaskSpec&) const = default;
};

struct ProblemDocument {
  std::string schema_version = "1";
  DocumentKind kind = DocumentKind::nep;
  std::vector<Axis> axes;
  std::vector<int> players;            // axes per player (game kinds)
  std::vector<std::string> payoffs;    // nep / gnep
  std::vector<MaskSpec> constraints;   // gnep / inverse_nash
  std::optional<MaskSpec> target;      // inverse_nash
  std::optional<MaskSpec> graph;       // synthesis: gra(M)
  std::optional<MaskSpec> ambient;     // synthesis: gra(K), default everything
  int domain_axes = 1;                 // synthesis: leading axes forming the domain
  std::string route = "distance";      // synthesis: distance | tau | urysohn
  std::vector<double> levels;          // synthesis: tau levels / urysohn radii
  int terms = 16;                      // synthesis: urysohn truncation
  std::optional<std::string> theta;    // fixedpoint / minimax payoff over C x C
  std::string method = "minimax";      // fixedpoint: minimax | nash
  Metric metric = Metric::euclid;
  double epsilon = 0.0;
  double argmax_tol = 0.0;
  std::int64_t budget = 10'000'000;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = unset; resolved by the caller

  bool operator==(const ProblemDocument&) const = default;
};

namespace detail {

inline void require_keys(const json& o, const std::vector<std::string>& required,
                         const std::vector<std::string>& optional, const std::string& ptr) {
  for (const auto& k : required)
    if (!o.contains(k)) throw SchemaError("missing required field '" + k + "'", ptr);
  for (auto it = o.begin(); it != o.end(); ++it) {
    const std::string& key = it.key();
    bool known = false;
    for (const auto& k : required) known = known || k == key;
    for (const auto& k : optional) known = known || k == key;
    if (!known) throw SchemaError("unknown field '" + key + "'", ptr + "/" + key);
  }
}

inline double as_number(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw SchemaError("expected a number", ptr);
  return v.get<double>();
}

inline std::int64_t as_integer(const json& v, const std::string& ptr) {
  if (!v.is_number_integer()) throw SchemaError("expected an integer", ptr);
  return v.get<std::int64_t>();
}

inline std::string as_string(const json& v, const std::string& ptr) {
  if (!v.is_string()) throw SchemaError("expected a string", ptr);
  return v.get<std::string>();
}

inline MaskSpec as_mask_spec(const json& v, const std::string& ptr) {
  MaskSpec m;
  if (v.is_string()) {
    m.predicate = v.get<std::string>();
    if (m.predicate.empty()) throw SchemaError("empty predicate", ptr);
    return m;
  }
  if (v.is_object()) {
    require_keys(v, {"bits"}, {}, ptr);
    m.bits = as_string(v.at("bits"), ptr + "/bits");
    for (char c : m.bits)
      if (c != '0' && c != '1') throw SchemaError("bits must be a 0/1 string", ptr + "/bits");
    if (m.bits.empty()) throw SchemaError("empty bits", ptr + "/bits");
    return m;
  }
  throw SchemaError("expected a predicate string or {\"bits\": ...}", ptr);
}

inline json mask_spec_json(const MaskSpec& m) {
  if (m.is_predicate()) return json(m.predicate);
  return json{{"bits", m.bits}};
}

}  // namespace detail

inline ProblemDocument parse_problem(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("not valid JSON: ") + e.what(), "");
  }
  if (!j.is_object()) throw SchemaError("document must be a JSON object", "");

  static const std::vector<std::string> common_opt = {
      "metric", "epsilon", "argmax_tol", "budget", "seed", "threads"};

  ProblemDocument d;
  {
    std::vector<std::string> req = {"schema_version", "kind", "grid"};
    std::vector<std::string> opt = common_opt;
    const std::string kind_str =
        j.contains("kind") ? detail::as_string(j.at("kind"), "/kind") : "";
    if (kind_str.empty()) throw SchemaError("missing required field 'kind'", "");
    d.kind = kind_from_name(kind_str, "/kind");
    switch (d.kind) {
      case DocumentKind::synthesis:
        req.push_back("graph");
        req.push_back("domain_axes");
        opt.insert(opt.end(), {"ambient", "route", "levels", "terms"});
        break;
      case DocumentKind::nep:
        req.push_back("players");
        req.push_back("payoffs");
        break;
      case DocumentKind::gnep:
        req.push_back("players");
        req.push_back("payoffs");
        req.push_back("constraints");
        break;
      case DocumentKind::inverse_nash:
        req.push_back("players");
        req.push_back("constraints");
        req.push_back("target");
        break;
      case DocumentKind::fixedpoint:
        req.push_back("theta");
        opt.push_back("method");
        break;
      case DocumentKind::minimax:
        req.push_back("theta");
        break;
    }
    detail::require_keys(j, req, opt, "");
  }

  d.schema_version = detail::as_string(j.at("schema_version"), "/schema_version");
  if (d.schema_version != "1")
    throw SchemaError("unsupported schema_version '" + d.schema_version + "'", "/schema_version");

  {
    const json& g = j.at("grid");
    if (!g.is_object()) throw SchemaError("grid must be an object", "/grid");
    detail::require_keys(g, {"axes"}, {}, "/grid");
    const json& axes = g.at("axes");
    if (!axes.is_array() || axes.empty())
      throw SchemaError("grid.axes must be a non-empty array", "/grid/axes");
    for (std::size_t k = 0; k < axes.size(); ++k) {
      const std::string ptr = "/grid/axes/" + std::to_string(k);
      const json& a = axes[k];
      if (!a.is_array() || a.size() != 3)
        throw SchemaError("axis must be [lo, hi, n]", ptr);
      Axis ax;
      ax.lo = detail::as_number(a[0], ptr + "/0");
      ax.hi = detail::as_number(a[1], ptr + "/1");
      ax.n = detail::as_integer(a[2], ptr + "/2");
      try {
        validate_axis(ax, "axis");
      } catch (const std::invalid_argument& e) {
        throw SchemaError(e.what(), ptr);
      }
      d.axes.push_back(ax);
    }
  }
  const int dim = static_cast<int>(d.axes.size());

  if (j.contains("players")) {
    const json& p = j.at("players");
    if (!p.is_array() || p.empty())
      throw SchemaError("players must be a non-empty array of axis counts", "/players");
    int total = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const std::int64_t c = detail::as_integer(p[i], "/players/" + std::to_string(i));
      if (c < 1) throw SchemaError("each player needs at least one axis", "/players/" + std::to_string(i));
      d.players.push_back(static_cast<int>(c));
      total += static_cast<int>(c);
    }
    if (total != dim)
      throw SchemaError("player axis counts must sum to the grid dimension", "/players");
  }

  if (j.contains("payoffs")) {
    const json& p = j.at("payoffs");
    if (!p.is_array()) throw SchemaError("payoffs must be an array", "/payoffs");
    if (p.size() != d.players.size())
      throw SchemaError("one payoff per player required", "/payoffs");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const std::string ptr = "/payoffs/" + std::to_string(i);
      const std::string text = detail::as_string(p[i], ptr);
      try {
        parse_expression(text, dim);
      } catch (const ExprError& e) {
        throw SchemaError(std::string("payoff expression: ") + e.what(), ptr);
      }
      d.payoffs.push_back(text);
    }
  }

  auto parse_mask_at = [&](const char* key) -> std::optional<MaskSpec> {
    if (!j.contains(key)) return std::nullopt;
    MaskSpec m = detail::as_mask_spec(j.at(key), std::string("/") + key);
    if (m.is_predicate()) {
      try {
        parse_expression(m.predicate, dim);
      } catch (const ExprError& e) {
        throw SchemaError(std::string("predicate: ") + e.what(), std::string("/") + key);
      }
    }
    return m;
  };

  if (j.contains("constraints")) {
    const json& c = j.at("constraints");
    if (!c.is_array()) throw SchemaError("constraints must be an array", "/constraints");
    if (c.size() != d.players.size())
      throw SchemaError("one constraint per player required", "/constraints");
    for (std::size_t i = 0; i < c.size(); ++i) {
      const std::string ptr = "/constraints/" + std::to_string(i);
      MaskSpec m = detail::as_mask_spec(c[i], ptr);
      if (m.is_predicate()) {
        try {
          parse_expression(m.predicate, dim);
        } catch (const ExprError& e) {
          throw SchemaError(std::string("predicate: ") + e.what(), ptr);
        }
      }
      d.constraints.push_back(std::move(m));
    }
  }

  d.target = parse_mask_at("target");
  d.graph = parse_mask_at("graph");
  d.ambient = parse_mask_at("ambient");

  if (j.contains("domain_axes")) {
    d.domain_axes = static_cast<int>(detail::as_integer(j.at("domain_axes"), "/domain_axes"));
    if (d.domain_axes < 1 || d.domain_axes >= dim)
      throw SchemaError("domain_axes must split the grid into two blocks", "/domain_axes");
  }
  if (j.contains("route")) {
    d.route = detail::as_string(j.at("route"), "/route");
    if (d.route != "distance" && d.route != "tau" && d.route != "urysohn")
      throw SchemaError("route must be distance, tau or urysohn", "/route");
  }
  if (j.contains("levels")) {
    const json& l = j.at("levels");
    if (!l.is_array()) throw SchemaError("levels must be an array", "/levels");
    for (std::size_t i = 0; i < l.size(); ++i)
      d.levels.push_back(detail::as_number(l[i], "/levels/" + std::to_string(i)));
  }
  if (j.contains("terms")) {
    d.terms = static_cast<int>(detail::as_integer(j.at("terms"), "/terms"));
    if (d.terms < 1) throw SchemaError("terms must be >= 1", "/terms");
  }
  if (j.contains("theta")) {
    d.theta = detail::as_string(j.at("theta"), "/theta");
    try {
      parse_expression(*d.theta, 2 * dim);
    } catch (const ExprError& e) {
      throw SchemaError(std::string("theta expression: ") + e.what(), "/theta");
    }
  }
  if (j.contains("method")) {
    d.method = detail::as_string(j.at("method"), "/method");
    if (d.method != "minimax" && d.method != "nash")
      throw SchemaError("method must be minimax or nash", "/method");
  }
  if (j.contains("metric")) d.metric = metric_from_name(detail::as_string(j.at("metric"), "/metric"));
  if (j.contains("epsilon")) {
    d.epsilon = detail::as_number(j.at("epsilon"), "/epsilon");
    if (d.epsilon < 0) throw SchemaError("epsilon must be >= 0", "/epsilon");
  }
  if (j.contains("argmax_tol")) {
    d.argmax_tol = detail::as_number(j.at("argmax_tol"), "/argmax_tol");
    if (d.argmax_tol < 0) throw SchemaError("argmax_tol must be >= 0", "/argmax_tol");
  }
  if (j.contains("budget")) {
    d.budget = detail::as_integer(j.at("budget"), "/budget");
    if (d.budget < 1) throw SchemaError("budget must be positive", "/budget");
  }
  if (j.contains("seed")) d.seed = static_cast<std::uint64_t>(detail::as_integer(j.at("seed"), "/seed"));
  if (j.contains("threads")) {
    d.threads = static_cast<int>(detail::as_integer(j.at("threads"), "/threads"));
    if (d.threads < 0) throw SchemaError("threads must be >= 0", "/threads");
  }
  return d;
}

/// Canonical serialization: sorted keys, two-space indent, trailing newline.
inline std::string serialize_problem(const ProblemDocument& d) {
  json j;
  j["schema_version"] = d.schema_version;
  j["kind"] = kind_name(d.kind);
  json axes = json::array();
  for (const Axis& a : d.axes) axes.push_back(json::array({a.lo, a.hi, a.n}));
  j["grid"] = json{{"axes", axes}};
  if (!d.players.empty()) j["players"] = d.players;
  if (!d.payoffs.empty()) j["payoffs"] = d.payoffs;
  if (!d.constraints.empty()) {
    json c = json::array();
    for (const MaskSpec& m : d.constraints) c.push_back(detail::mask_spec_json(m));
    j["constraints"] = c;
  }
  if (d.target) j["target"] = detail::mask_spec_json(*d.target);
  if (d.graph) j["graph"] = detail::mask_spec_json(*d.graph);
  if (d.ambient) j["ambient"] = detail::mask_spec_json(*d.ambient);
  if (d.kind == DocumentKind::synthesis) {
    j["domain_axes"] = d.domain_axes;
    j["route"] = d.route;
    if (!d.levels.empty()) j["levels"] = d.levels;
    j["terms"] = d.terms;
  }
  if (d.theta) j["theta"] = *d.theta;
  if (d.kind == DocumentKind::fixedpoint) j["method"] = d.method;
  j["metric"] = metric_name(d.metric);
  j["epsilon"] = d.epsilon;
  j["argmax_tol"] = d.argmax_tol;
  j["budget"] = d.budget;
  j["seed"] = d.seed;
  j["threads"] = d.threads;
  return j.dump(2) + "\n";
}

inline std::string fnv1a64_digest(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + buf;
}

inline std::string problem_digest(const ProblemDocument& d) {
  return fnv1a64_digest(serialize_problem(d));
}

// ----- materialization -----

inline ProductGrid document_grid(const ProblemDocument& d) { return ProductGrid(d.axes); }

inline CellMask materialize_mask(const MaskSpec& spec, const ProductGrid& grid, int threads = 1) {
  if (spec.is_predicate())
    return mask_of_expression(*parse_expression(spec.predicate, static_cast<int>(grid.dim())),
                              grid, threads);
  if (spec.bits.size() != static_cast<std::size_t>(grid.size()))
    throw std::invalid_argument("mask bits length " + std::to_string(spec.bits.size()) +
                                " does not match the grid size " + std::to_string(grid.size()));
  CellMask m = make_mask(grid);
  for (std::size_t i = 0; i < spec.bits.size(); ++i) m.bits[i] = spec.bits[i] == '1';
  return m;
}

inline std::vector<ProductGrid> player_boxes(const ProblemDocument& d) {
  std::vector<ProductGrid> boxes;
  std::size_t at = 0;
  for (int c : d.players) {
    std::vector<Axis> axes(d.axes.begin() + static_cast<std::ptrdiff_t>(at),
                           d.axes.begin() + static_cast<std::ptrdiff_t>(at + static_cast<std::size_t>(c)));
    boxes.emplace_back(std::move(axes));
    at += static_cast<std::size_t>(c);
  }
  return boxes;
}

inline NepProblem build_nep(const ProblemDocument& d, int threads = 1) {
  std::vector<PayoffSpec> payoffs;
  for (const std::string& text : d.payoffs)
    payoffs.push_back(PayoffSpec::from_expression(text, static_cast<int>(d.axes.size())));
  NepProblem P = make_nep(player_boxes(d), std::move(payoffs));
  for (const PayoffSpec& p : P.payoffs) p.materialize(P.full, threads);  // div-guard surfaces now
  return P;
}

inline GnepProblem build_gnep(const ProblemDocument& d, int threads = 1) {
  NepProblem nep = build_nep(d, threads);
  std::vector<CellMask> graphs;
  for (const MaskSpec& spec : d.constraints)
    graphs.push_back(materialize_mask(spec, nep.full, threads));
  try {
    return make_gnep(std::move(nep), std::move(graphs));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(e.what()) +
                                " (mask predicate yields an empty required slice)");
  }
}

struct SynthesisInstance {
  Correspondence M;
  Correspondence K;
};

inline SynthesisInstance build_synthesis(const ProblemDocument& d, int threads = 1) {
  const ProductGrid full = document_grid(d);
  const ProductGrid dom = block_grid(full, 0, d.domain_axes);
  const ProductGrid cod = block_grid(full, d.domain_axes, full.dim() - d.domain_axes);
  SynthesisInstance inst;
  inst.M = make_correspondence(dom, cod, materialize_mask(*d.graph, full, threads));
  CellMask amb = d.ambient ? materialize_mask(*d.ambient, full, threads) : make_mask(full, true);
  inst.K = make_correspondence(dom, cod, std::move(amb));
  if (!mask_subset(inst.M.graph, inst.K.graph))
    throw std::invalid_argument("synthesis: gra(M) must lie inside gra(K)");
  return inst;
}

// ----- result documents -----

struct ResultDocument {
  std::string operation;
  std::string input_digest;
  std::uint64_t seed = 0;
  std::optional<double> runtime_ms;  // off by default; timing breaks byte determinism
  json outputs = json::object();
};

inline std::string serialize_result(const ResultDocument& r) {
  json j;
  j["schema_version"] = "1";
  j["operation"] = r.operation;
  j["input_digest"] = r.input_digest;
  j["seed"] = r.seed;
  j["runtime_ms"] = r.runtime_ms ? json(*r.runtime_ms) : json(nullptr);
  j["outputs"] = r.outputs;
  return j.dump(2) + "\n";
}

// ----- field persistence -----

static_assert(std::endian::native == std::endian::little,
              "field binary format is little-endian");

inline void atomic_write(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot rename '" + tmp + "' to '" + path + "'");
}

inline std::string field_to_binary(const ScalarField& f) {
  std::string out;
  const char magic[8] = {'I', 'B', 'F', 'I', 'E', 'L', 'D', '\n'};
  out.append(magic, 8);
  auto put_u32 = [&](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  auto put_u64 = [&](std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); };
  auto put_f64 = [&](double v) { out.append(reinterpret_cast<const char*>(&v), 8); };
  put_u32(1u);  // version
  put_u32(static_cast<std::uint32_t>(f.grid.dim()));
  for (const Axis& a : f.grid.axes()) {
    put_f64(a.lo);
    put_f64(a.hi);
    put_u64(static_cast<std::uint64_t>(a.n));
  }
  for (double v : f.values) put_f64(v);
  return out;
}

inline ScalarField field_from_binary(const std::string& bytes) {
  std::size_t at = 0;
  auto need = [&](std::size_t n) {
    if (at + n > bytes.size()) throw std::runtime_error("field file truncated");
  };
  need(8);
  if (bytes.compare(0, 7, "IBFIELD") != 0) throw std::runtime_error("bad field file magic");
  at = 8;
  auto get_u32 = [&]() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + at, 4);
    at += 4;
    return v;
  };
  auto get_u64 = [&]() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, bytes.data() + at, 8);
    at += 8;
    return v;
  };
  auto get_f64 = [&]() {
    need(8);
    double v;
    std::memcpy(&v, bytes.data() + at, 8);
    at += 8;
    return v;
  };
  const std::uint32_t version = get_u32();
  if (version != 1u) throw std::runtime_error("unsupported field file version");
  const std::uint32_t dim = get_u32();
  std::vector<Axis> axes;
  for (std::uint32_t k = 0; k < dim; ++k) {
    Axis a;
    a.lo = get_f64();
    a.hi = get_f64();
    a.n = static_cast<std::int64_t>(get_u64());
    axes.push_back(a);
  }
  ScalarField f = make_field(ProductGrid(std::move(axes)));
  for (double& v : f.values) v = get_f64();
  if (at != bytes.size()) throw std::runtime_error("trailing bytes in field file");
  return f;
}

inline void write_field_binary(const std::string& path, const ScalarField& f) {
  atomic_write(path, field_to_binary(f));
}

inline ScalarField read_field_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return field_from_binary(ss.str());
}

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Plot-ready CSV: header x1..xn,theta then one row per grid point.
inline std::string field_to_csv(const ScalarField& f) {
  std::string out;
  for (std::int64_t k = 0; k < f.grid.dim(); ++k)
    out += "x" + std::to_string(k + 1) + ",";
  out += "theta\n";
  std::vector<double> p(static_cast<std::size_t>(f.grid.dim()));
  for (std::int64_t i = 0; i < f.grid.size(); ++i) {
    f.grid.point(i, p);
    for (double c : p) {
      out += format_double(c);
      out += ',';
    }
    out += format_double(f.values[static_cast<std::size_t>(i)]);
    out += '\n';
  }
  return out;
}

inline void write_field_csv(const std::string& path, const ScalarField& f) {
  atomic_write(path, field_to_csv(f));
}

}  // namespace invberge
