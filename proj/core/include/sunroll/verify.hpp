#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "sunroll/linalg.hpp"

namespace sunroll {

enum class VerifyCommand { lemma2, lemma3, lemma4, theorem1, jacobian, sure_unbiased };

std::string to_string(VerifyCommand command);
VerifyCommand parse_verify_command(const std::string& text);
const std::vector<VerifyCommand>& all_verify_commands();

// Knobs shared by the verification commands. Zero or empty fields take the
// per-command default from default_verify_params().
struct VerifyParams {
  Index trials = 0;
  std::uint64_t seed = 0;
  Index n = 0;
  Index width = 0;            // rows of W
  Index iterations = 0;       // T (upper end of the range for theorem1)
  Index max_subset = 0;       // lemma4: largest |I| checked
  Index samples = 0;          // inputs per trial (lemma4/theorem1), noise draws (sure-unbiased), N (lemma2)
  Index rank = 0;             // subspace rank for data-driven commands
  double sigma = 0.0;         // noise std (lemma2 uses sigma^2 as the threshold)
  double tolerance = 0.0;
  std::string family{};       // lemma3: generic|orthonormal; theorem1: orthonormal|trained

  bool operator==(const VerifyParams&) const = default;
};

VerifyParams default_verify_params(VerifyCommand command);
// Fills zero/empty fields of `params` from the command defaults.
VerifyParams resolve_verify_params(VerifyCommand command, VerifyParams params);

// max_violation is the largest amount by which any check exceeded its
// allowance (bound plus tolerance); pass means it is exactly zero.
struct VerifyReport {
  VerifyCommand command = VerifyCommand::jacobian;
  Index trials = 0;
  double max_violation = 0.0;
  double max_deviation = 0.0;  // largest raw deviation, before the allowance
  double tolerance = 0.0;
  bool pass = false;
  VerifyParams params;
  nlohmann::json details = nlohmann::json::object();
};

VerifyReport run_verify(VerifyCommand command, const VerifyParams& params = {});

VerifyReport verify_lemma2(const VerifyParams& params);
VerifyReport verify_lemma3(const VerifyParams& params);
VerifyReport verify_lemma4(const VerifyParams& params);
VerifyReport verify_theorem1(const VerifyParams& params);
VerifyReport verify_jacobian(const VerifyParams& params);
VerifyReport verify_sure_unbiased(const VerifyParams& params);

nlohmann::json to_json(const VerifyReport& report);

// Random W with Gaussian rows scaled to the given norm.
Matrix normalized_gaussian_rows(Index rows, Index cols, double row_norm, std::uint64_t seed);
// W with orthonormal rows (rows <= cols).
Matrix orthonormal_rows(Index rows, Index cols, std::uint64_t seed);

}  // namespace sunroll
