#pragma once

#include "elastodyn/nfunction.hpp"
#include "elastodyn/space.hpp"
#include "elastodyn/stepper.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace elastodyn {

enum class Command { Solve, ConvergeTime, ConvergeSpace, VerifyOrlicz, VerifyNfun, ProbeUnique };

std::string to_string(Command command);
std::optional<Command> parse_command(std::string_view name);

/// One problem found in a configuration; line 0 refers to the file as a whole.
struct ConfigIssue {
  int line = 0;
  std::string message;
};

/// Every issue found while reading a configuration, formatted `line N: ...`.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

/// A member of the built-in expression set used for initial data and sources:
///   zero
///   sine(k, a)            a·sin(kπx)            (·sin(kπy) in 2D)
///   bump(a)               a·x(1−x)              (·y(1−y) in 2D)
///   wave(k, a, omega)     a·sin(kπx)cos(ωt)     (·sin(kπy) in 2D)
struct Expression {
  std::string name = "zero";
  std::vector<double> args;
  int dim = 1;  // set from the space during validation

  double operator()(const Point& x, double t) const;
  bool is_zero() const;
  std::string describe() const;
};

/// Throws ContractError for an unknown name or a wrong argument count.
Expression parse_expression(std::string_view text);

/// A validated run configuration.
///
///   command = solve              # optional; must match the command line
///   seed = 0
///   [spec]    kind = power | exp | quadform;  p = 4;  dim = 1;  matrix = 2, -1, -1, 2
///   [space]   kind = spectral1d | fem1d | fem2d;  resolution = 64 (or a list);  resolution_y = 8
///   [time]    T = 1;  N = 100;  tau = 0.01;  taus = 0.1, 0.05
///   [case]    name = C1 | C2 | C3 | nonmonotone
///   [initial] u0 = sine(1, 1);  v0 = zero;  f = zero
///   [solver]  newton_tol = 1e-11;  newton_max_iter = 50;  perturbation = 1;  r = 2;
///             radius = 10;  samples = 64
///   [output]  dir = out
struct RunConfig {
  Command command = Command::Solve;
  std::uint64_t seed = 0;

  std::optional<NFunctionSpec> spec;  // explicit [spec], or the case's spec
  std::optional<std::string> case_name;

  std::optional<SpaceKind> space_kind;
  std::vector<int> resolutions;
  int resolution_y = 0;

  double final_time = 1.0;
  int steps = 0;
  double tau = 0.0;
  std::vector<double> taus;

  Expression u0, v0, f;

  double newton_tol = 1e-11;
  int newton_max_iter = 50;
  double perturbation = 1.0;
  int estimate_r = 2;
  double sample_radius = 10.0;
  int samples = 64;

  std::string output_dir = "out";

  SpaceHandle space(std::size_t index = 0) const;
  SchemeConfig scheme() const;
};

/// Parses and validates; `command` (from the command line) takes effect when
/// given and must agree with a `command` key in the text. Throws ConfigError.
RunConfig parse_config(std::string_view text, std::optional<Command> command = std::nullopt);

/// Reads a file and parses it; an unreadable file is a ConfigError.
RunConfig load_config(const std::filesystem::path& path,
                      std::optional<Command> command = std::nullopt);

}  // namespace elastodyn
