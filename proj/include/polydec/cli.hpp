#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "polydec/decouple.hpp"
#include "polydec/dense_tensor.hpp"
#include "polydec/polymap.hpp"

namespace polydec::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kParseError = 2,
  kDimensionError = 3,
  kResidualAboveTolerance = 4,
  kNotConverged = 5,
};

// Files use 1-based output indices; everything returned here is 0-based.
PolyMap polymap_from_json(const nlohmann::json& j);
nlohmann::json polymap_to_json(const PolyMap& f);

DecoupledModel model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const DecoupledModel& model, const nlohmann::json& metadata);

nlohmann::json tensor_to_json(const DenseTensor& t);
DenseTensor tensor_from_json(const nlohmann::json& j);

// Accepts {"points": [[...], ...]} or a bare array; each inner array is one
// point of length m. Returns the m x N matrix of points.
Eigen::MatrixXd points_from_json(const nlohmann::json& j, int m);

nlohmann::json report_to_json(const DecoupleReport& report);
nlohmann::json verification_to_json(const VerificationRecord& record);

// Exit code for a decomposition: residual first, then convergence.
int decouple_exit_code(const DecoupleReport& report, double accept_tol);

/// Runs the command line `args` (args[0] is the program name). "-" as an
/// input path reads `in`; results go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace polydec::cli
