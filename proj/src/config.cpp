#include "elastodyn/config.hpp"

#include "elastodyn/errors.hpp"
#include "elastodyn/harness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace elastodyn {

namespace {

using std::numbers::pi;

const std::vector<double> kDefaultLadder = {0.1, 0.05, 0.025, 0.0125};

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"", {"command", "seed"}},
      {"spec", {"kind", "p", "dim", "matrix"}},
      {"space", {"kind", "resolution", "resolution_y"}},
      {"time", {"T", "N", "tau", "taus"}},
      {"case", {"name"}},
      {"initial", {"u0", "v0", "f"}},
      {"solver", {"newton_tol", "newton_max_iter", "perturbation", "r", "radius", "samples"}},
      {"output", {"dir"}},
  };
  return keys;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(trim(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

// Locale-independent, whole-token number parsing.
std::optional<double> to_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

template <class Int>
std::optional<Int> to_integer(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

struct Entry {
  std::string value;
  int line = 0;
};

class Reader {
 public:
  explicit Reader(std::string_view text) { lex(text); }

  std::vector<ConfigIssue> issues;

  bool has_section(const std::string& s) const { return section_lines_.count(s) > 0; }
  int section_line(const std::string& s) const {
    const auto it = section_lines_.find(s);
    return it == section_lines_.end() ? 0 : it->second;
  }
  const Entry* find(const std::string& sec, const std::string& key) const {
    const auto s = entries_.find(sec);
    if (s == entries_.end()) return nullptr;
    const auto e = s->second.find(key);
    return e == s->second.end() ? nullptr : &e->second;
  }
  int line(const std::string& sec, const std::string& key) const {
    const Entry* e = find(sec, key);
    return e ? e->line : 0;
  }

  void error(int line, std::string message) { issues.push_back({line, std::move(message)}); }

  std::optional<std::string> text(const std::string& sec, const std::string& key) const {
    const Entry* e = find(sec, key);
    if (!e) return std::nullopt;
    return e->value;
  }

  std::optional<double> number(const std::string& sec, const std::string& key) {
    const Entry* e = find(sec, key);
    if (!e) return std::nullopt;
    const auto v = to_double(e->value);
    if (!v) error(e->line, fmt::format("{}: expected a number, got '{}'", where(sec, key), e->value));
    return v;
  }

  template <class Int>
  std::optional<Int> integer(const std::string& sec, const std::string& key) {
    const Entry* e = find(sec, key);
    if (!e) return std::nullopt;
    const auto v = to_integer<Int>(e->value);
    if (!v) {
      error(e->line, fmt::format("{}: expected an integer, got '{}'", where(sec, key), e->value));
    }
    return v;
  }

  std::optional<std::vector<double>> numbers(const std::string& sec, const std::string& key) {
    const Entry* e = find(sec, key);
    if (!e) return std::nullopt;
    std::vector<double> out;
    for (auto item : split_list(e->value)) {
      const auto v = to_double(item);
      if (!v) {
        error(e->line, fmt::format("{}: expected a list of numbers, got '{}'", where(sec, key), e->value));
        return std::nullopt;
      }
      out.push_back(*v);
    }
    return out;
  }

  std::optional<std::vector<int>> integers(const std::string& sec, const std::string& key) {
    const Entry* e = find(sec, key);
    if (!e) return std::nullopt;
    std::vector<int> out;
    for (auto item : split_list(e->value)) {
      const auto v = to_integer<int>(item);
      if (!v) {
        error(e->line, fmt::format("{}: expected a list of integers, got '{}'", where(sec, key), e->value));
        return std::nullopt;
      }
      out.push_back(*v);
    }
    return out;
  }

  static std::string where(const std::string& sec, const std::string& key) {
    return sec.empty() ? key : fmt::format("[{}] {}", sec, key);
  }

 private:
  void lex(std::string_view text) {
    std::vector<std::string_view> lines;
    for (std::size_t pos = 0;;) {
      const auto nl = text.find('\n', pos);
      lines.push_back(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
      if (nl == std::string_view::npos) break;
      pos = nl + 1;
    }
    std::string section;
    bool section_known = true;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      lex_line(static_cast<int>(i + 1), lines[i], section, section_known);
    }
  }

  void lex_line(int line_no, std::string_view line, std::string& section, bool& section_known) {
    line = trim(line.substr(0, line.find_first_of("#;")));
    if (line.empty()) return;
    if (line.front() == '[') {
      if (line.back() != ']') {
        error(line_no, fmt::format("malformed section header '{}'", line));
        section_known = false;
        return;
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      section_known = !section.empty() && known_keys().count(section) > 0;
      if (!section_known) {
        error(line_no, fmt::format("unknown section [{}]", section));
      } else if (section_lines_.count(section)) {
        error(line_no, fmt::format("duplicate section [{}] (first at line {})", section,
                                   section_lines_[section]));
      } else {
        section_lines_[section] = line_no;
      }
      return;
    }
    const auto eq = line.find('=');
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(eq == std::string_view::npos ? "" : trim(line.substr(eq + 1)));
    if (eq == std::string_view::npos || key.empty() || value.empty()) {
      error(line_no, fmt::format("expected 'key = value', got '{}'", line));
      return;
    }
    if (!section_known) return;  // already reported
    if (!known_keys().at(section).count(key)) {
      error(line_no, section.empty() ? fmt::format("unknown top-level key '{}'", key)
                                     : fmt::format("unknown key '{}' in [{}]", key, section));
      return;
    }
    auto& sec = entries_[section];
    if (const auto it = sec.find(key); it != sec.end()) {
      error(line_no, fmt::format("duplicate key {} (first at line {})", where(section, key),
                                 it->second.line));
      return;
    }
    sec[key] = {value, line_no};
  }

  std::map<std::string, std::map<std::string, Entry>> entries_;
  std::map<std::string, int> section_lines_;
};

std::optional<SpaceKind> space_kind_from(std::string_view s) {
  if (s == "spectral1d") return SpaceKind::Spectral1D;
  if (s == "fem1d") return SpaceKind::FemP1_1D;
  if (s == "fem2d") return SpaceKind::FemP1_2D;
  return std::nullopt;
}

int space_dim(SpaceKind k) { return k == SpaceKind::FemP1_2D ? 2 : 1; }

bool divides(double total, double tau, int& steps) {
  const double n = total / tau;
  const long r = std::lround(n);
  steps = static_cast<int>(r);
  return std::abs(n - static_cast<double>(r)) <= 1e-9 * std::max(1.0, n);
}

void read_spec(Reader& rd, RunConfig& cfg, std::optional<int> default_dim) {
  if (!rd.has_section("spec")) return;
  const int sec_line = rd.section_line("spec");
  const auto kind = rd.text("spec", "kind");
  if (!kind) {
    rd.error(sec_line, "[spec] needs kind = power | exp | quadform");
    return;
  }
  const auto dim_key = rd.integer<int>("spec", "dim");
  if (dim_key && (*dim_key < 1 || *dim_key > kMaxDim)) {
    rd.error(rd.line("spec", "dim"), fmt::format("[spec] dim must be in 1..{}, got {}", kMaxDim, *dim_key));
    return;
  }
  const int dim = dim_key.value_or(default_dim.value_or(1));
  try {
    if (*kind == "power") {
      const auto p = rd.number("spec", "p");
      if (!p) {
        if (!rd.find("spec", "p")) rd.error(rd.line("spec", "kind"), "[spec] kind = power needs p");
        return;
      }
      if (!(*p > 1.0)) {
        rd.error(rd.line("spec", "p"), fmt::format("[spec] p must be > 1, got {}", *p));
        return;
      }
      cfg.spec = NFunctionSpec::power(*p, dim);
    } else if (*kind == "exp") {
      cfg.spec = NFunctionSpec::exponential(dim);
    } else if (*kind == "quadform") {
      const auto m = rd.numbers("spec", "matrix");
      if (!m) {
        if (!rd.find("spec", "matrix")) {
          rd.error(rd.line("spec", "kind"), "[spec] kind = quadform needs matrix (row-major)");
        }
        return;
      }
      const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m->size()))));
      const int line = rd.line("spec", "matrix");
      if (n * n != static_cast<int>(m->size()) || n < 1 || n > kMaxDim) {
        rd.error(line, fmt::format("[spec] matrix must hold d×d entries with d in 1..{}, got {}",
                                   kMaxDim, m->size()));
        return;
      }
      if (dim_key && *dim_key != n) {
        rd.error(line, fmt::format("[spec] matrix is {}×{} but dim = {} (line {})", n, n, *dim_key,
                                   rd.line("spec", "dim")));
        return;
      }
      SmallMatrix a(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) a(i, j) = (*m)[static_cast<std::size_t>(i * n + j)];
      }
      try {
        cfg.spec = NFunctionSpec::quadratic_form(a);
      } catch (const ContractError& e) {
        rd.error(line, fmt::format("[spec] matrix fails the SPD check: {}", e.what()));
      }
    } else {
      rd.error(rd.line("spec", "kind"),
               fmt::format("[spec] kind must be power, exp or quadform, got '{}'", *kind));
      return;
    }
  } catch (const ContractError& e) {
    rd.error(sec_line, fmt::format("[spec] {}", e.what()));
  }
  if (cfg.spec) {
    for (const char* k : {"p", "matrix"}) {
      const bool wanted = (*kind == "power" && std::string_view(k) == "p") ||
                          (*kind == "quadform" && std::string_view(k) == "matrix");
      if (rd.find("spec", k) && !wanted) {
        rd.error(rd.line("spec", k), fmt::format("[spec] {} does not apply to kind = {}", k, *kind));
      }
    }
  }
}

void read_space(Reader& rd, RunConfig& cfg) {
  if (!rd.has_section("space")) return;
  const auto kind = rd.text("space", "kind");
  if (!kind) {
    rd.error(rd.section_line("space"), "[space] needs kind = spectral1d | fem1d | fem2d");
  } else if (auto k = space_kind_from(*kind)) {
    cfg.space_kind = k;
  } else {
    rd.error(rd.line("space", "kind"),
             fmt::format("[space] kind must be spectral1d, fem1d or fem2d, got '{}'", *kind));
  }
  if (auto r = rd.integers("space", "resolution")) {
    for (int v : *r) {
      if (v < 1) {
        rd.error(rd.line("space", "resolution"), fmt::format("[space] resolution must be >= 1, got {}", v));
      }
    }
    cfg.resolutions = *r;
  } else if (!rd.find("space", "resolution")) {
    rd.error(rd.section_line("space"), "[space] needs resolution");
  }
  if (auto ry = rd.integer<int>("space", "resolution_y")) {
    if (*ry < 1) rd.error(rd.line("space", "resolution_y"), "[space] resolution_y must be >= 1");
    else if (cfg.space_kind && *cfg.space_kind != SpaceKind::FemP1_2D) {
      rd.error(rd.line("space", "resolution_y"), "[space] resolution_y applies to fem2d only");
    }
    cfg.resolution_y = *ry;
  }
}

void read_solver(Reader& rd, RunConfig& cfg) {
  if (auto v = rd.number("solver", "newton_tol")) {
    if (*v > 0.0) cfg.newton_tol = *v;
    else rd.error(rd.line("solver", "newton_tol"), "[solver] newton_tol must be > 0");
  }
  if (auto v = rd.integer<int>("solver", "newton_max_iter")) {
    if (*v >= 1) cfg.newton_max_iter = *v;
    else rd.error(rd.line("solver", "newton_max_iter"), "[solver] newton_max_iter must be >= 1");
  }
  if (auto v = rd.number("solver", "perturbation")) {
    if (*v >= 0.0) cfg.perturbation = *v;
    else rd.error(rd.line("solver", "perturbation"), "[solver] perturbation must be >= 0");
  }
  if (auto v = rd.integer<int>("solver", "r")) {
    if (*v >= 2) cfg.estimate_r = *v;
    else rd.error(rd.line("solver", "r"), "[solver] r must be >= 2");
  }
  if (auto v = rd.number("solver", "radius")) {
    if (*v > 0.0) cfg.sample_radius = *v;
    else rd.error(rd.line("solver", "radius"), "[solver] radius must be > 0");
  }
  if (auto v = rd.integer<int>("solver", "samples")) {
    if (*v >= 1) cfg.samples = *v;
    else rd.error(rd.line("solver", "samples"), "[solver] samples must be >= 1");
  }
}

void read_initial(Reader& rd, RunConfig& cfg) {
  for (const char* key : {"u0", "v0", "f"}) {
    const auto t = rd.text("initial", key);
    if (!t) continue;
    try {
      Expression e = parse_expression(*t);
      if (std::string_view(key) != "f" && e.name == "wave") {
        rd.error(rd.line("initial", key), fmt::format("[initial] {}: wave(...) is time-dependent; use sine or bump", key));
        continue;
      }
      (std::string_view(key) == "u0" ? cfg.u0 : std::string_view(key) == "v0" ? cfg.v0 : cfg.f) = e;
    } catch (const ContractError& e) {
      rd.error(rd.line("initial", key), fmt::format("[initial] {}: {}", key, e.what()));
    }
  }
}

// Resolves a single step from N and/or tau, naming the keys involved on failure.
void read_step(Reader& rd, RunConfig& cfg, bool require_positive) {
  const auto n = rd.integer<int>("time", "N");
  const auto tau = rd.number("time", "tau");
  const int t_line = rd.line("time", "T");
  const std::string t_where = t_line ? fmt::format("T = {} (line {})", cfg.final_time, t_line)
                                     : fmt::format("T = {} (default)", cfg.final_time);
  if (n && *n < 0) {
    rd.error(rd.line("time", "N"), "[time] N must be >= 0");
    return;
  }
  if (tau && !(*tau > 0.0)) {
    rd.error(rd.line("time", "tau"), "[time] tau must be > 0");
    return;
  }
  if (n && tau) {
    const double product = *tau * *n;
    if (std::abs(product - cfg.final_time) > 1e-12 * std::max(1.0, cfg.final_time)) {
      rd.error(rd.line("time", "tau"),
               fmt::format("[time] tau (line {}) times N (line {}) is {}, which differs from {}",
                           rd.line("time", "tau"), rd.line("time", "N"), product, t_where));
      return;
    }
    cfg.steps = *n;
    cfg.tau = cfg.final_time / *n;
  } else if (n) {
    if (*n == 0 && cfg.final_time != 0.0) {
      rd.error(rd.line("time", "N"), fmt::format("[time] N = 0 requires T = 0, got {}", t_where));
      return;
    }
    cfg.steps = *n;
    cfg.tau = *n > 0 ? cfg.final_time / *n : 0.0;
  } else if (tau) {
    int steps = 0;
    if (!divides(cfg.final_time, *tau, steps)) {
      rd.error(rd.line("time", "tau"),
               fmt::format("[time] {} is not a whole multiple of tau = {} (line {})", t_where,
                           *tau, rd.line("time", "tau")));
      return;
    }
    cfg.steps = steps;
    cfg.tau = steps > 0 ? cfg.final_time / steps : *tau;
  } else {
    rd.error(rd.section_line("time"), rd.has_section("time") ? "[time] needs N or tau"
                                                             : "missing [time] section (set N or tau)");
    return;
  }
  if (require_positive && cfg.steps < 1) {
    rd.error(rd.line("time", n ? "N" : "tau"), "[time] this command needs at least one step");
  }
}

void read_ladder(Reader& rd, RunConfig& cfg) {
  const auto taus = rd.numbers("time", "taus");
  const int line = rd.line("time", "taus");
  if (rd.find("time", "taus") && !taus) return;
  cfg.taus = taus.value_or(kDefaultLadder);
  if (cfg.taus.size() < 2) {
    rd.error(line, "[time] taus needs at least two entries");
    return;
  }
  for (std::size_t i = 0; i < cfg.taus.size(); ++i) {
    const double tau = cfg.taus[i];
    int steps = 0;
    if (!(tau > 0.0)) {
      rd.error(line, fmt::format("[time] taus entries must be > 0, got {}", tau));
    } else if (!divides(cfg.final_time, tau, steps) || steps < 1) {
      rd.error(line, fmt::format("[time] T = {} is not a whole multiple of tau = {}", cfg.final_time, tau));
    } else if (i > 0 && !(tau < cfg.taus[i - 1])) {
      rd.error(line, "[time] taus must be strictly decreasing");
    }
  }
}

void validate(Reader& rd, RunConfig& cfg, bool has_initial) {
  const Command c = cfg.command;
  const bool needs_case = c == Command::ConvergeTime || c == Command::ConvergeSpace ||
                          c == Command::ProbeUnique;
  const bool verify = c == Command::VerifyOrlicz || c == Command::VerifyNfun;
  const std::string cmd = to_string(c);

  if (verify && !cfg.spec) {
    if (!rd.has_section("spec")) rd.error(0, fmt::format("{} needs a [spec] section", cmd));
    return;
  }
  if (verify) return;

  if (needs_case && !cfg.case_name) {
    rd.error(rd.section_line("case"), fmt::format("{} needs [case] name", cmd));
  }
  if (c == Command::Solve && !cfg.case_name && !cfg.spec && !rd.has_section("spec")) {
    rd.error(0, "solve needs either [case] name or a [spec] section");
  }
  if (cfg.case_name && has_initial) {
    rd.error(rd.section_line("initial"),
             fmt::format("[initial] cannot be combined with [case] (line {})", rd.section_line("case")));
  }
  if (needs_case && has_initial) return;

  if (!rd.has_section("space")) {
    rd.error(0, fmt::format("{} needs a [space] section", cmd));
    return;
  }
  if (!cfg.space_kind || cfg.resolutions.empty()) return;
  const int sline = rd.line("space", "resolution");
  if (c == Command::ConvergeSpace) {
    if (*cfg.space_kind == SpaceKind::Spectral1D) {
      rd.error(rd.line("space", "kind"), "converge-space needs fem1d or fem2d");
    }
    if (cfg.resolutions.size() < 2) {
      rd.error(sline, "converge-space needs at least two resolutions");
    }
    for (std::size_t i = 1; i < cfg.resolutions.size(); ++i) {
      if (cfg.resolutions[i] <= cfg.resolutions[i - 1]) {
        rd.error(sline, "[space] resolutions must be strictly increasing");
        break;
      }
    }
  } else if (cfg.resolutions.size() != 1) {
    rd.error(sline, fmt::format("{} takes a single resolution", cmd));
  }

  const int sdim = space_dim(*cfg.space_kind);
  if (cfg.spec && cfg.spec->dim() != sdim) {
    const int line = rd.line("spec", "dim") ? rd.line("spec", "dim")
                     : rd.line("spec", "matrix") ? rd.line("spec", "matrix")
                                                 : rd.line("spec", "kind");
    rd.error(line, fmt::format("[spec] is {}-dimensional but [space] kind = {} (line {}) is {}D",
                               cfg.spec->dim(), to_string(*cfg.space_kind), rd.line("space", "kind"), sdim));
  }
  for (Expression* e : {&cfg.u0, &cfg.v0, &cfg.f}) e->dim = sdim;
}

}  // namespace

std::string to_string(Command command) {
  switch (command) {
    case Command::Solve: return "solve";
    case Command::ConvergeTime: return "converge-time";
    case Command::ConvergeSpace: return "converge-space";
    case Command::VerifyOrlicz: return "verify-orlicz";
    case Command::VerifyNfun: return "verify-nfun";
    case Command::ProbeUnique: return "probe-unique";
  }
  return "?";
}

std::optional<Command> parse_command(std::string_view name) {
  for (Command c : {Command::Solve, Command::ConvergeTime, Command::ConvergeSpace,
                    Command::VerifyOrlicz, Command::VerifyNfun, Command::ProbeUnique}) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

namespace {
std::string join_issues(const std::vector<ConfigIssue>& issues) {
  std::string out;
  for (const auto& i : issues) {
    if (!out.empty()) out += '\n';
    out += i.line > 0 ? fmt::format("line {}: {}", i.line, i.message) : i.message;
  }
  return out;
}
}  // namespace

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : std::runtime_error(join_issues(issues)), issues_(std::move(issues)) {}

double Expression::operator()(const Point& x, double t) const {
  const auto mode = [&](double k) {
    const double s = std::sin(k * pi * x.x);
    return dim == 2 ? s * std::sin(k * pi * x.y) : s;
  };
  if (name == "zero") return 0.0;
  if (name == "sine") return args[1] * mode(args[0]);
  if (name == "bump") {
    const double b = x.x * (1.0 - x.x);
    return args[0] * (dim == 2 ? b * x.y * (1.0 - x.y) : b);
  }
  if (name == "wave") return args[1] * mode(args[0]) * std::cos(args[2] * t);
  throw ContractError(fmt::format("unknown expression '{}'", name));
}

bool Expression::is_zero() const {
  if (name == "zero") return true;
  if (name == "sine" || name == "wave") return args[1] == 0.0;
  return args[0] == 0.0;
}

std::string Expression::describe() const {
  if (args.empty()) return name;
  std::string out = name + "(";
  for (std::size_t i = 0; i < args.size(); ++i) {
    out += fmt::format("{}{}", i ? ", " : "", args[i]);
  }
  return out + ")";
}

Expression parse_expression(std::string_view text) {
  text = trim(text);
  Expression e;
  const auto open = text.find('(');
  e.name = std::string(trim(text.substr(0, open)));
  if (open != std::string_view::npos) {
    if (text.back() != ')') throw ContractError(fmt::format("malformed expression '{}'", text));
    const auto inner = trim(text.substr(open + 1, text.size() - open - 2));
    if (!inner.empty()) {
      for (auto item : split_list(inner)) {
        const auto v = to_double(item);
        if (!v) throw ContractError(fmt::format("expression '{}': '{}' is not a number", text, item));
        e.args.push_back(*v);
      }
    }
  }
  const std::map<std::string, std::size_t> arity = {{"zero", 0}, {"sine", 2}, {"bump", 1}, {"wave", 3}};
  const auto it = arity.find(e.name);
  if (it == arity.end()) {
    throw ContractError(fmt::format("unknown expression '{}' (known: zero, sine(k, a), bump(a), wave(k, a, omega))",
                                    e.name));
  }
  if (e.args.size() != it->second) {
    throw ContractError(fmt::format("{} takes {} argument(s), got {}", e.name, it->second, e.args.size()));
  }
  return e;
}

SpaceHandle RunConfig::space(std::size_t index) const {
  if (!space_kind || index >= resolutions.size()) {
    throw ContractError("RunConfig::space: no such space in the configuration");
  }
  return build_space(*space_kind, resolutions[index], resolution_y);
}

SchemeConfig RunConfig::scheme() const {
  SchemeConfig s;
  s.final_time = final_time;
  s.steps = steps;
  s.tau = tau;
  s.newton_tol = newton_tol;
  s.newton_max_iter = newton_max_iter;
  s.validate();
  return s;
}

RunConfig parse_config(std::string_view text, std::optional<Command> command) {
  Reader rd(text);
  RunConfig cfg;

  if (const Entry* e = rd.find("", "command")) {
    const auto c = parse_command(e->value);
    if (!c) {
      rd.error(e->line, fmt::format("unknown command '{}'", e->value));
    } else if (command && *command != *c) {
      rd.error(e->line, fmt::format("command = {} conflicts with the command line ({})", e->value,
                                    to_string(*command)));
    }
    if (c && !command) command = c;
  }
  if (!command) {
    rd.error(0, "no command given");
    throw ConfigError(rd.issues);
  }
  cfg.command = *command;
  if (auto s = rd.integer<std::uint64_t>("", "seed")) cfg.seed = *s;

  read_space(rd, cfg);
  if (auto t = rd.number("time", "T")) {
    if (*t >= 0.0) cfg.final_time = *t;
    else rd.error(rd.line("time", "T"), "[time] T must be >= 0");
  }
  read_solver(rd, cfg);
  if (auto dir = rd.text("output", "dir")) cfg.output_dir = *dir;

  std::optional<int> default_dim;
  if (cfg.space_kind) default_dim = space_dim(*cfg.space_kind);
  read_spec(rd, cfg, default_dim);

  if (auto name = rd.text("case", "name")) {
    const auto names = builtin_case_names();
    if (std::find(names.begin(), names.end(), *name) == names.end()) {
      rd.error(rd.line("case", "name"),
               fmt::format("[case] unknown case '{}' (known: C1, C2, C3, nonmonotone)", *name));
    } else {
      cfg.case_name = *name;
      const auto c = builtin_case(*name);
      if (cfg.spec && cfg.spec->describe() != c.spec.describe()) {
        rd.error(rd.section_line("spec"), fmt::format("[spec] {} conflicts with case {} (line {}), which uses {}",
                                                     cfg.spec->describe(), *name,
                                                     rd.line("case", "name"), c.spec.describe()));
      }
      cfg.spec = c.spec;
    }
  }
  const bool has_initial = rd.has_section("initial");
  read_initial(rd, cfg);

  switch (cfg.command) {
    case Command::Solve:
    case Command::ProbeUnique:
    case Command::ConvergeSpace:
      read_step(rd, cfg, cfg.command != Command::Solve || cfg.case_name.has_value());
      break;
    case Command::ConvergeTime:
      if (!(cfg.final_time > 0.0)) rd.error(rd.line("time", "T"), "[time] converge-time needs T > 0");
      else read_ladder(rd, cfg);
      break;
    default:
      break;
  }
  validate(rd, cfg, has_initial);

  if (!rd.issues.empty()) {
    auto issues = rd.issues;
    std::stable_sort(issues.begin(), issues.end(),
                     [](const ConfigIssue& a, const ConfigIssue& b) { return a.line < b.line; });
    throw ConfigError(std::move(issues));
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, std::optional<Command> command) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({{0, fmt::format("cannot read config file '{}'", path.string())}});
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), command);
}

}  // namespace elastodyn
