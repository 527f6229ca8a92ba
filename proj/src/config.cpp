#include "dmech/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "dmech/errors.hpp"

namespace dmech {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
    return s.substr(1, s.size() - 2);
  return s;
}

double to_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(x))
      throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("invalid number '" + s + "' for key '" + key + "'");
  }
}

long long to_int(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("invalid integer '" + s + "' for key '" + key + "'");
  }
}

std::uint64_t to_u64(const std::string& s, const std::string& key) {
  try {
    if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("invalid unsigned integer '" + s + "' for key '" + key +
                      "'");
  }
}

/// Tokens of a value that may be a bracketed comma-separated list or a bare
/// scalar (one token). "[]" is the empty list.
std::vector<std::string> list_tokens(const std::string& value,
                                     const std::string& key) {
  std::string body = value;
  if (!body.empty() && body.front() == '[') {
    if (body.back() != ']')
      throw ConfigError("unterminated list for key '" + key + "'");
    body = body.substr(1, body.size() - 2);
  }
  std::vector<std::string> out;
  if (trim(body).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = body.find(',', start);
    const std::string tok =
        trim(body.substr(start, comma == std::string::npos
                                    ? std::string::npos
                                    : comma - start));
    if (tok.empty())
      throw ConfigError("empty entry in list for key '" + key + "'");
    out.push_back(tok);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

Vec to_vec(const std::string& value, const std::string& key) {
  const auto tokens = list_tokens(value, key);
  Vec out(static_cast<int>(tokens.size()));
  for (std::size_t i = 0; i < tokens.size(); ++i)
    out(static_cast<int>(i)) = to_double(tokens[i], key);
  return out;
}

void expect_choice(const std::string& value, const std::string& key,
                   std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string list;
  for (const char* a : allowed) {
    if (!list.empty()) list += " | ";
    list += a;
  }
  throw ConfigError("invalid value '" + value + "' for key '" + key +
                    "' (allowed: " + list + ")");
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  static const std::unordered_set<std::string> sections = {"system", "scheme",
                                                           "run", "output"};
  RunConfig cfg;
  std::unordered_set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) +
                          ": unterminated section header '" + line + "'");
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (!sections.count(name))
        throw ConfigError("line " + std::to_string(lineno) +
                          ": unknown section '" + name + "'");
      continue;  // sections are organizational only
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    if (key.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (value.empty())
      throw ConfigError("line " + std::to_string(lineno) +
                        ": empty value for key '" + key + "'");
    if (!seen.insert(key).second)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": duplicate key '" + key + "'");

    if (key == "system") {
      cfg.system = value;
    } else if (key == "params") {
      const Vec p = to_vec(value, key);
      cfg.params.assign(p.data(), p.data() + p.size());
    } else if (key == "q0") {
      cfg.q0 = to_vec(value, key);
    } else if (key == "v0") {
      cfg.v0 = to_vec(value, key);
    } else if (key == "gamma") {
      cfg.gamma = to_double(value, key);
      if (cfg.gamma < 0.0 || cfg.gamma > 1.0)
        throw ConfigError("gamma must lie in [0, 1], got " + value);
    } else if (key == "segment") {
      expect_choice(value, key, {"linear", "flow"});
      cfg.segment = value;
    } else if (key == "method") {
      expect_choice(value, key, {"rk4", "midpoint"});
      cfg.method = value;
    } else if (key == "substeps") {
      const long long s = to_int(value, key);
      if (s < 1) throw ConfigError("substeps must be >= 1, got " + value);
      cfg.substeps = static_cast<int>(s);
    } else if (key == "quadrature") {
      quadrature_rule(value);  // validates; throws ConfigError on unknown
      cfg.quadrature = value;
    } else if (key == "one_form") {
      expect_choice(value, key, {"exact", "pulled_back"});
      cfg.one_form = value;
    } else if (key == "constraint_anchor") {
      expect_choice(value, key, {"anchor", "average"});
      cfg.constraint_anchor = value;
    } else if (key == "h") {
      cfg.h = to_double(value, key);
      if (!(cfg.h > 0.0)) throw ConfigError("h must be > 0, got " + value);
    } else if (key == "steps") {
      const long long s = to_int(value, key);
      if (s < 0) throw ConfigError("steps must be >= 0, got " + value);
      cfg.steps = static_cast<int>(s);
    } else if (key == "newton_tol") {
      cfg.newton_tol = to_double(value, key);
      if (!(cfg.newton_tol > 0.0))
        throw ConfigError("newton_tol must be > 0, got " + value);
    } else if (key == "newton_max_iter") {
      const long long s = to_int(value, key);
      if (s < 1)
        throw ConfigError("newton_max_iter must be >= 1, got " + value);
      cfg.newton_max_iter = static_cast<int>(s);
    } else if (key == "fd_step_scale") {
      cfg.fd_step_scale = to_double(value, key);
      if (!(cfg.fd_step_scale > 0.0))
        throw ConfigError("fd_step_scale must be > 0, got " + value);
    } else if (key == "seed") {
      cfg.seed = to_u64(value, key);
    } else if (key == "out") {
      cfg.out = value;
    } else if (key == "monitor") {
      cfg.monitor.clear();
      for (const auto& tok : list_tokens(value, key)) {
        const long long i = to_int(tok, key);
        if (i < 0)
          throw ConfigError("monitor indices must be >= 0, got " + tok);
        cfg.monitor.push_back(static_cast<int>(i));
      }
    } else {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
    }
  }

  for (const char* required : {"system", "q0", "v0", "h", "steps"})
    if (!seen.count(required))
      throw ConfigError("missing required key '" + std::string(required) +
                        "'");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

DiscreteSystem make_discrete_system(const RunConfig& cfg) {
  DiscreteSystem d;
  d.system = builtin_system(cfg.system, cfg.params);
  const Bias bias{cfg.gamma};
  if (cfg.segment == "linear") {
    d.scheme = std::make_shared<LinearSegment>(bias, cfg.h);
  } else if (cfg.segment == "flow") {
    const ContinuousSystem sys = d.system;
    const FlowSegment::Method method = cfg.method == "midpoint"
                                           ? FlowSegment::Method::midpoint
                                           : FlowSegment::Method::rk4;
    d.scheme = std::make_shared<FlowSegment>(
        bias, cfg.h,
        [sys](const Vec& q, const Vec& v) {
          return el_acceleration(sys, q, v);
        },
        method, cfg.substeps);
  } else {
    throw ConfigError("unknown segment family '" + cfg.segment + "'");
  }
  d.quadrature = quadrature_rule(cfg.quadrature);
  d.one_form_mode = cfg.one_form == "pulled_back"
                        ? OneFormMode::pulled_back
                        : OneFormMode::exact_differential;
  d.constraint_anchor = cfg.constraint_anchor == "average"
                            ? ConstraintAnchor::quadrature_average
                            : ConstraintAnchor::anchor_point;
  return d;
}

State initial_state(const RunConfig& cfg, const DiscreteSystem& d) {
  if (cfg.q0.size() != d.dim())
    throw ConfigError("q0 has " + std::to_string(cfg.q0.size()) +
                      " entries, system '" + d.system.name +
                      "' has dimension " + std::to_string(d.dim()));
  if (cfg.v0.size() != d.dim())
    throw ConfigError("v0 has " + std::to_string(cfg.v0.size()) +
                      " entries, system '" + d.system.name +
                      "' has dimension " + std::to_string(d.dim()));
  const State s{cfg.q0, cfg.v0};
  if (!feasible(d, s)) {
    const double viol = discrete_constraint(d, s).cwiseAbs().maxCoeff();
    throw ConfigError(
        "initial state violates the discrete constraint (|g_d| = " +
        std::to_string(viol) + "); adjust v0 onto the constraint");
  }
  return s;
}

SolveOptions solve_options(const RunConfig& cfg) {
  SolveOptions opts;
  opts.tol = cfg.newton_tol;
  opts.max_iterations = cfg.newton_max_iter;
  opts.fd_step_scale = cfg.fd_step_scale;
  return opts;
}

}  // namespace dmech
