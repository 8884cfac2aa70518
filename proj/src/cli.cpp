#include "polydec/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>

#include <CLI11.hpp>

#include "polydec/errors.hpp"
#include "polydec/tensorize.hpp"

namespace polydec::cli {

using nlohmann::json;

namespace {

int get_int(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw std::invalid_argument(std::string("field '") + key + "' must be an integer");
  return v.get<int>();
}

double get_real(const json& v, const char* what) {
  if (!v.is_number()) throw std::invalid_argument(std::string(what) + " must be a number");
  return v.get<double>();
}

Eigen::MatrixXd matrix_from_rows(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument(std::string(what) + " must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array() || j[0].empty()) throw std::invalid_argument(std::string(what) + " rows must be non-empty arrays");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw DimensionError(std::string(what) + ": rows have different lengths");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = get_real(row[static_cast<std::size_t>(c)], what);
  }
  return m;
}

json matrix_to_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(std::span<const double> v) { return json(std::vector<double>(v.begin(), v.end())); }

json read_json(const std::string& path, std::istream& in) {
  if (path == "-") return json::parse(in);
  std::ifstream file(path);
  if (!file) throw std::invalid_argument("cannot open '" + path + "'");
  return json::parse(file);
}

void write_json(const json& j, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << j.dump(2) << '\n';
    return;
  }
  std::ofstream file(path);
  if (!file) throw std::runtime_error("cannot write '" + path + "'");
  file << j.dump(2) << '\n';
}

std::uint64_t default_seed() {
  const char* env = std::getenv("POLYDEC_SEED");
  if (env == nullptr || *env == '\0') return 0;
  std::size_t used = 0;
  const std::string text(env);
  const unsigned long long value = std::stoull(text, &used);
  if (used != text.size()) throw std::invalid_argument("POLYDEC_SEED is not an unsigned integer");
  return value;
}

// Shared by the subcommands that need sampling points.
struct PlanFlags {
  std::string points_path;
  int sample = 0;
  std::uint64_t seed = 0;

  SamplePlan make(const PolyMap& f, int default_count, std::istream& in) const {
    const int m = f.num_inputs();
    const int d = f.degree();
    if (!points_path.empty()) return build_sample_plan(points_from_json(read_json(points_path, in), m), m, d);
    const int count = sample > 0 ? sample : default_count;
    return build_sample_plan(default_points(m, d, count, seed), m, d);
  }
};

json plan_to_json(const SamplePlan& plan) {
  return {{"points", matrix_to_rows(plan.points.transpose())},
          {"degree", plan.degree},
          {"A", tensor_to_json(DenseTensor::from_matrix(plan.A))}};
}

int cmd_tensorize(const std::string& input, const std::string& which, const PlanFlags& plan_flags,
                  const std::string& output, std::istream& in, std::ostream& out) {
  const PolyMap f = polymap_from_json(read_json(input, in));
  json result;
  if (which == "q") {
    result = tensor_to_json(build_q(f));
  } else if (which == "j") {
    const auto m_bound = static_cast<int>(rank_bound(f.num_inputs(), f.degree()));
    const SamplePlan plan = plan_flags.make(f, m_bound, in);
    result = tensor_to_json(build_j(f, plan));
    result["plan"] = plan_to_json(plan);
  } else {
    json tensors = json::array();
    for (int s = 1; s <= f.degree(); ++s) {
      json t = tensor_to_json(build_ts(f, s));
      t["degree"] = s;
      tensors.push_back(std::move(t));
    }
    result = {{"tensors", std::move(tensors)}};
  }
  write_json(result, output, out);
  return kOk;
}

struct DecoupleFlags {
  int rank = 0;
  std::string method = "coupled";
  int restarts = 10;
  int max_iters = 2000;
  int rank_sweep = 0;
  double accept_tol = 1e-6;
};

DecoupleReport run_method(const PolyMap& f, int r, const std::string& method, const DecoupleOptions& options,
                          const PlanFlags& plan_flags, std::istream& in) {
  if (method == "j") {
    const int count =
        static_cast<int>(std::max<std::int64_t>(rank_bound(f.num_inputs(), f.degree()), f.degree()));
    return decouple_via_j(f, plan_flags.make(f, count, in), r, options);
  }
  if (method == "q") return decouple_via_q(f, r, options);
  return coupled_psym_cpd(f, r, options);
}

int cmd_decouple(const std::string& input, const DecoupleFlags& flags, const PlanFlags& plan_flags,
                 const std::string& output, std::istream& in, std::ostream& out) {
  const PolyMap f = polymap_from_json(read_json(input, in));
  if (flags.rank < 1) throw std::invalid_argument("--rank must be at least 1");
  DecoupleOptions options;
  options.cpd.restarts = flags.restarts;
  options.cpd.max_iters = flags.max_iters;
  options.cpd.seed = plan_flags.seed;

  // The points file may only be consumed once when it is stdin.
  std::optional<SamplePlan> cached_plan;
  if (flags.method == "j" && plan_flags.points_path == "-") {
    cached_plan = plan_flags.make(f, 0, in);
  }
  auto decompose = [&](int r) {
    if (cached_plan) return decouple_via_j(f, *cached_plan, r, options);
    return run_method(f, r, flags.method, options, plan_flags, in);
  };

  const DecoupleReport report = decompose(flags.rank);
  json result = report_to_json(report);
  const int code = decouple_exit_code(report, flags.accept_tol);
  result["accept_tol"] = flags.accept_tol;
  result["exit_code"] = code;
  if (flags.rank_sweep > 0) {
    json sweep = json::array();
    for (int r = 1; r <= flags.rank_sweep; ++r) {
      const DecoupleReport rep = decompose(r);
      sweep.push_back({{"rank", r},
                       {"tensor_fit", rep.tensor_fit},
                       {"map_residual", rep.map_residual},
                       {"structure_residual", rep.structure_residual},
                       {"converged", rep.converged}});
    }
    result["sweep"] = std::move(sweep);
  }
  const json model = model_to_json(report.model, {{"method", to_string(report.method)},
                                                  {"residuals",
                                                   {{"tensor_fit", report.tensor_fit},
                                                    {"map_residual", report.map_residual},
                                                    {"structure_residual", report.structure_residual}}},
                                                  {"seed", report.seed}});
  if (output.empty()) {
    result["model"] = model;
  } else {
    write_json(model, output, out);
  }
  write_json(result, "", out);
  return code;
}

int cmd_verify(const std::string& input, const std::string& model_path, const PlanFlags& plan_flags,
               std::istream& in, std::ostream& out) {
  const PolyMap f = polymap_from_json(read_json(input, in));
  std::optional<DecoupledModel> model;
  if (!model_path.empty()) model = model_from_json(read_json(model_path, in));
  const auto m_bound = static_cast<int>(rank_bound(f.num_inputs(), f.degree()));
  const SamplePlan plan = plan_flags.make(f, m_bound, in);
  const VerificationRecord record = verify_relations(f, plan, model);
  json result = verification_to_json(record);
  const int code = record.all_within(1e-8) ? kOk : kResidualAboveTolerance;
  result["exit_code"] = code;
  write_json(result, "", out);
  return code;
}

int cmd_info(const std::string& input, int rank, std::istream& in, std::ostream& out) {
  const PolyMap f = polymap_from_json(read_json(input, in));
  const int m = f.num_inputs();
  const int n = f.num_outputs();
  const int d = f.degree();
  json parameters = {{"coupled", report_compression(m, n, d, 1).coupled}};
  if (rank > 0) parameters["decoupled"] = report_compression(m, n, d, rank).decoupled;
  json result = {{"m", m},
                 {"n", n},
                 {"d", d},
                 {"delta", tube_length(m, d)},
                 {"M", rank_bound(m, d)},
                 {"terms", f.term_count()},
                 {"parameters", std::move(parameters)}};
  if (rank > 0) result["rank"] = rank;
  write_json(result, "", out);
  return kOk;
}

}  // namespace

PolyMap polymap_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("polynomial map file must be a JSON object");
  const int m = get_int(j, "m");
  const int n = get_int(j, "n");
  const int d = get_int(j, "d");
  if (m < 1 || n < 1 || d < 1) throw DimensionError("m, n and d must be positive");
  const json& terms = j.at("terms");
  if (!terms.is_array()) throw std::invalid_argument("'terms' must be an array");
  std::vector<Term> parsed;
  parsed.reserve(terms.size());
  for (const json& t : terms) {
    const int i = get_int(t, "i");
    const json& alpha = t.at("alpha");
    if (!alpha.is_array()) throw std::invalid_argument("'alpha' must be an array of integers");
    Exponent exponent;
    for (const json& a : alpha) {
      if (!a.is_number_integer()) throw std::invalid_argument("'alpha' must be an array of integers");
      exponent.push_back(a.get<int>());
    }
    if (i < 1 || i > n) throw DimensionError("output index " + std::to_string(i) + " outside 1.." + std::to_string(n));
    parsed.push_back({i - 1, std::move(exponent), get_real(t.at("coeff"), "'coeff'")});
  }
  return PolyMap::from_terms(m, n, d, parsed);
}

json polymap_to_json(const PolyMap& f) {
  json terms = json::array();
  for (int i = 0; i < f.num_outputs(); ++i) {
    for (const auto& [alpha, c] : f.terms(i)) terms.push_back({{"i", i + 1}, {"alpha", alpha}, {"coeff", c}});
  }
  return {{"m", f.num_inputs()}, {"n", f.num_outputs()}, {"d", f.degree()}, {"terms", std::move(terms)}};
}

DecoupledModel model_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("model file must be a JSON object");
  DecoupledModel model{matrix_from_rows(j.at("W"), "W"), matrix_from_rows(j.at("V"), "V"),
                       matrix_from_rows(j.at("C"), "C")};
  model.validate();
  if (j.contains("metadata") && j["metadata"].contains("residuals")) {
    for (const auto& [key, value] : j["metadata"]["residuals"].items()) {
      if (!value.is_number() || !std::isfinite(value.get<double>())) {
        throw std::invalid_argument("residual '" + key + "' must be a finite number");
      }
    }
  }
  return model;
}

json model_to_json(const DecoupledModel& model, const json& metadata) {
  return {{"W", matrix_to_rows(model.W)},
          {"V", matrix_to_rows(model.V)},
          {"C", matrix_to_rows(model.C)},
          {"metadata", metadata}};
}

json tensor_to_json(const DenseTensor& t) {
  return {{"dims", t.dims()}, {"data", vector_to_json(t.data())}};
}

DenseTensor tensor_from_json(const json& j) {
  std::vector<std::size_t> dims;
  for (const json& d : j.at("dims")) {
    if (!d.is_number_unsigned()) throw std::invalid_argument("'dims' must hold non-negative integers");
    dims.push_back(d.get<std::size_t>());
  }
  std::vector<double> data;
  for (const json& x : j.at("data")) data.push_back(get_real(x, "tensor entry"));
  return DenseTensor(std::move(dims), std::move(data));
}

Eigen::MatrixXd points_from_json(const json& j, int m) {
  const json& list = j.is_object() ? j.at("points") : j;
  if (!list.is_array() || list.empty()) throw std::invalid_argument("points must be a non-empty array");
  Eigen::MatrixXd points(m, static_cast<Eigen::Index>(list.size()));
  for (std::size_t k = 0; k < list.size(); ++k) {
    const json& p = list[k];
    if (!p.is_array()) throw std::invalid_argument("each point must be an array");
    if (static_cast<int>(p.size()) != m) {
      throw DimensionError("point " + std::to_string(k + 1) + " has " + std::to_string(p.size()) +
                           " coordinates, expected " + std::to_string(m));
    }
    for (int i = 0; i < m; ++i) points(i, static_cast<Eigen::Index>(k)) = get_real(p[static_cast<std::size_t>(i)], "point coordinate");
  }
  return points;
}

json report_to_json(const DecoupleReport& report) {
  return {{"method", to_string(report.method)},
          {"rank", report.model.rank()},
          {"tensor_fit", report.tensor_fit},
          {"map_residual", report.map_residual},
          {"structure_residual", report.structure_residual},
          {"converged", report.converged},
          {"restarts", report.restarts},
          {"iterations", report.iterations},
          {"seed", report.seed},
          {"objective_history", report.objective_history}};
}

json verification_to_json(const VerificationRecord& record) {
  json j = {{"identity_residual", record.identity_residual},
            {"structure_violation", record.structure_violation},
            {"rank_A", record.rank_a},
            {"rank_bound", record.rank_bound}};
  if (record.h_residual) j["h_residual"] = *record.h_residual;
  if (record.coefficient_cpd_residual) j["coefficient_cpd_residual"] = *record.coefficient_cpd_residual;
  if (record.jacobian_cpd_residual) j["jacobian_cpd_residual"] = *record.jacobian_cpd_residual;
  return j;
}

int decouple_exit_code(const DecoupleReport& report, double accept_tol) {
  if (report.map_residual <= accept_tol) return kOk;
  return report.converged ? kResidualAboveTolerance : kNotConverged;
}

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Decoupling of multivariate polynomial maps via tensor decompositions", "polydec"};
  app.require_subcommand(1);

  std::string input;
  std::string output;
  std::string which = "q";
  std::string model_path;
  int info_rank = 0;
  PlanFlags plan;
  DecoupleFlags dflags;

  std::uint64_t seed_default = 0;
  try {
    seed_default = default_seed();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kParseError;
  }
  plan.seed = seed_default;

  auto add_plan_flags = [&](CLI::App* sub) {
    auto* pts = sub->add_option("--points", plan.points_path, "JSON file of sampling points");
    auto* smp = sub->add_option("--sample", plan.sample, "number of random sampling points")->check(CLI::PositiveNumber);
    pts->excludes(smp);
    sub->add_option("--seed", plan.seed, "random seed (default: $POLYDEC_SEED or 0)");
  };

  auto* tensorize = app.add_subcommand("tensorize", "build Q, J or the T^s tensors");
  tensorize->add_option("input", input, "polynomial map file ('-' for stdin)")->required();
  tensorize->add_option("--which", which, "q, j or ts")->check(CLI::IsMember({"q", "j", "ts"}));
  tensorize->add_option("-o,--output", output, "output file (default: stdout)");
  add_plan_flags(tensorize);

  auto* decouple = app.add_subcommand("decouple", "compute a decoupled representation");
  decouple->add_option("input", input, "polynomial map file ('-' for stdin)")->required();
  decouple->add_option("-r,--rank", dflags.rank, "number of branches")->required()->check(CLI::PositiveNumber);
  decouple->add_option("--method", dflags.method, "j, q or coupled")->check(CLI::IsMember({"j", "q", "coupled"}));
  decouple->add_option("--restarts", dflags.restarts, "random restarts")->check(CLI::NonNegativeNumber);
  decouple->add_option("--max-iters", dflags.max_iters, "ALS sweeps per restart")->check(CLI::PositiveNumber);
  decouple->add_option("--rank-sweep", dflags.rank_sweep, "also report fits for ranks 1..R")->check(CLI::PositiveNumber);
  decouple->add_option("--accept-tol", dflags.accept_tol, "map-residual acceptance threshold")
      ->check(CLI::NonNegativeNumber);
  decouple->add_option("-o,--output", output, "model file (default: embedded in the report)");
  add_plan_flags(decouple);

  auto* verify = app.add_subcommand("verify", "check the tensor identities for a map and optional model");
  verify->add_option("input", input, "polynomial map file ('-' for stdin)")->required();
  verify->add_option("--model", model_path, "model file");
  add_plan_flags(verify);

  auto* info = app.add_subcommand("info", "print dimensions and parameter counts");
  info->add_option("input", input, "polynomial map file ('-' for stdin)")->required();
  info->add_option("-r,--rank", info_rank, "number of branches for the decoupled count")->check(CLI::PositiveNumber);

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kParseError;
  }

  try {
    if (*tensorize) return cmd_tensorize(input, which, plan, output, in, out);
    if (*decouple) return cmd_decouple(input, dflags, plan, output, in, out);
    if (*verify) return cmd_verify(input, model_path, plan, in, out);
    return cmd_info(input, info_rank, in, out);
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << '\n';
    return kDimensionError;
  } catch (const SamplingError& e) {
    err << "sampling error: " << e.what() << '\n';
    return kDimensionError;
  } catch (const nlohmann::json::exception& e) {
    err << "parse error: " << e.what() << '\n';
    return kParseError;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return kParseError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace polydec::cli
