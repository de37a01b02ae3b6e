#pragma once

#include "elastodyn/config.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace elastodyn {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int assertion_failure = 1;
inline constexpr int config_error = 2;
inline constexpr int solver_failure = 3;
}  // namespace exit_code

/// One line of a verdict summary: `lower ≤ value ≤ upper` with either bound
/// optional. A check without bounds is reported only.
struct Check {
  std::string name;
  double value = 0.0;
  std::optional<double> lower;
  std::optional<double> upper;
  bool asserted = true;
  std::string note;

  bool reported_only() const { return !lower && !upper; }
  bool holds() const;
  /// Distance to the nearest bound (negative when violated); NaN when reported only.
  double slack() const;
  /// PASS, FAIL or INFO, with " (not asserted)" for unasserted checks.
  std::string verdict() const;
};

struct CommandResult {
  std::vector<Check> checks;
  std::vector<std::string> artifacts;  // file names inside the output directory
  std::vector<std::string> warnings;

  bool passed() const;
  int failed_count() const;
};

/// Sampled N-function diagnostics: convexity, σ against differences of φ,
/// monotonicity, Young, Δ2 and the growth constant (with 2ᵖ / p−1 oracles
/// for PowerIso).
std::vector<Check> nfunction_suite(const NFunctionSpec& spec, double sample_radius, int samples,
                                   std::uint64_t seed);

/// Orlicz property suite on random cell fields: Young gap and equality,
/// Luxemburg unit level set, Hölder with factor 2, norm-modular relations at
/// ‖ξ‖ ∈ {0.5, 1, 2}.
std::vector<Check> orlicz_suite(const NFunctionSpec& spec, std::uint64_t seed);

/// Runs the configured command and writes its artifacts (always summary.txt
/// and checks.csv) into `out_dir`. Library errors propagate.
CommandResult execute(const RunConfig& config, const std::filesystem::path& out_dir);

/// Header `check,value,lower,upper,slack,verdict`.
void write_checks_csv(std::ostream& os, const std::vector<Check>& checks);
void write_summary(std::ostream& os, const RunConfig& config, const CommandResult& result);

/// The whole driver: load, execute, report. `out` and `seed` override the file.
/// Returns an exit code; diagnostics go to `err`, the summary to `log`.
int run_cli(Command command, const std::filesystem::path& config_path,
            const std::optional<std::filesystem::path>& out, std::optional<std::uint64_t> seed,
            std::ostream& log, std::ostream& err);

}  // namespace elastodyn
