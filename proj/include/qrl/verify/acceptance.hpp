#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace qrl::verify {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool pass = false;
  /// Measured values behind the verdict, one short line each.
  std::vector<std::string> details;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  /// Criteria to run (1..9); empty runs all of them.
  std::vector<int> only;
  std::uint64_t seed = 1;
  /// Training runs write their artifacts here.
  std::filesystem::path work_dir = std::filesystem::temp_directory_path() / "qrl_acceptance";
  /// Directory holding the unit-test executables run by criterion 9; skipped when empty.
  std::filesystem::path unit_test_dir;
  std::size_t threads = 1;
};

/// Runs the selected criteria, printing progress and one "PASS"/"FAIL" line per criterion to `out`.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out);

}  // namespace qrl::verify
