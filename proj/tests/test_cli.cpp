#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "polydec/cli.hpp"
#include "polydec/errors.hpp"

using namespace polydec;
using nlohmann::json;

namespace {

const std::string kData = POLYDEC_TEST_DATA;

struct Result {
  int code;
  std::string out;
  std::string err;
  json parsed() const { return json::parse(out); }
};

Result run_cli(std::vector<std::string> args, const std::string& stdin_text = "") {
  args.insert(args.begin(), "polydec");
  std::istringstream in(stdin_text);
  std::ostringstream out, err;
  const int code = cli::run(args, in, out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("polydec_test_" + name);
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string single_branch_file() {
  DecoupledModel model{Eigen::Vector2d(1, -1), Eigen::Vector2d(2, 1), Eigen::RowVector3d(-1, -2, 1)};
  return cli::polymap_to_json(expand_decoupled(model)).dump();
}

}  // namespace

TEST(CliIo, PolyMapFileRoundTrip) {
  const PolyMap f = fixtures::example_map();
  const json j = cli::polymap_to_json(f);
  EXPECT_EQ(j["terms"][0]["i"], 1);
  EXPECT_EQ(cli::polymap_from_json(j), f);
}

TEST(CliIo, ExampleFileParses) {
  std::ifstream file(kData + "/example1.json");
  EXPECT_EQ(cli::polymap_from_json(json::parse(file)), fixtures::example_map());
}

TEST(CliIo, ModelFileRoundTripIsBitExact) {
  std::mt19937_64 gen(1);
  const DecoupledModel model = fixtures::random_model(3, 2, 4, 3, gen);
  const json j = cli::model_to_json(model, {{"method", "test"}});
  const DecoupledModel back = cli::model_from_json(json::parse(j.dump()));
  EXPECT_EQ(back.W, model.W);
  EXPECT_EQ(back.V, model.V);
  EXPECT_EQ(back.C, model.C);
}

TEST(CliIo, TensorJsonRoundTrip) {
  const DenseTensor q = build_q(fixtures::example_map());
  EXPECT_EQ(cli::tensor_from_json(json::parse(cli::tensor_to_json(q).dump())), q);
}

TEST(CliIo, InvalidFilesRejected) {
  EXPECT_THROW(cli::polymap_from_json(json::parse(R"({"m":2,"n":1,"d":2,"terms":[{"i":1,"alpha":[0,0],"coeff":1}]})")),
               std::invalid_argument);
  EXPECT_THROW(cli::polymap_from_json(json::parse(R"({"m":2,"n":1,"d":2,"terms":[{"i":2,"alpha":[1,0],"coeff":1}]})")),
               DimensionError);
  EXPECT_THROW(cli::polymap_from_json(json::parse(R"({"m":2.5,"n":1,"d":2,"terms":[]})")), std::invalid_argument);
  EXPECT_THROW(cli::model_from_json(json::parse(R"({"W":[[1,2]],"V":[[1],[2]],"C":[[1,2]]})")), DimensionError);
}

TEST(CliTensorize, CoefficientTensorMatchesExample) {
  const Result r = run_cli({"tensorize", kData + "/example1.json", "--which", "q"});
  ASSERT_EQ(r.code, 0) << r.err;
  const DenseTensor q = cli::tensor_from_json(r.parsed());
  EXPECT_EQ(q, build_q(fixtures::example_map()));
  EXPECT_EQ(q(0, 1, 6), -15.0);
}

TEST(CliTensorize, JacobianTensorWithPointsFile) {
  const Result r =
      run_cli({"tensorize", kData + "/example1.json", "--which", "j", "--points", kData + "/example1_points.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = r.parsed();
  const DenseTensor jt = cli::tensor_from_json(j);
  const auto slices = fixtures::example_j_slices();
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t b = 0; b < 2; ++b) {
        EXPECT_EQ(jt(a, b, k), slices[k](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
      }
    }
  }
  const DenseTensor a = cli::tensor_from_json(j["plan"]["A"]);
  EXPECT_EQ(Eigen::MatrixXd(a.as_matrix().transpose()), fixtures::example_a_transposed());
}

TEST(CliTensorize, SampledOutputIsDeterministic) {
  const std::vector<std::string> args = {"tensorize", kData + "/example1.json", "--which", "j", "--sample", "6",
                                         "--seed", "7"};
  const Result a = run_cli(args);
  const Result b = run_cli(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out.back(), '\n');
}

TEST(CliTensorize, DegreeTensorsAndStdin) {
  std::ifstream file(kData + "/example1.json");
  const std::string text{std::istreambuf_iterator<char>(file), std::istreambuf_iterator<char>()};
  const Result r = run_cli({"tensorize", "-", "--which", "ts"}, text);
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = r.parsed();
  ASSERT_EQ(j["tensors"].size(), 3u);
  EXPECT_EQ(cli::tensor_from_json(j["tensors"][1]), build_ts(fixtures::example_map(), 2));
}

TEST(CliTensorize, ErrorCodes) {
  EXPECT_EQ(run_cli({"tensorize", "-"}, "{not json").code, 2);
  EXPECT_EQ(run_cli({"tensorize", "-"}, R"({"m":2,"n":1,"d":2,"terms":[{"i":3,"alpha":[1,0],"coeff":1}]})").code, 3);
  EXPECT_EQ(run_cli({"tensorize", "-", "--which", "x"}, "{}").code, 2);
  const auto pts = temp_file("bad_points.json");
  write_file(pts, R"({"points": [[1, 2, 3]]})");
  EXPECT_EQ(run_cli({"tensorize", kData + "/example1.json", "--which", "j", "--points", pts.string()}).code, 3);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
}

TEST(CliDecouple, CoupledMethodOnExample) {
  const auto model_path = temp_file("model.json");
  const Result r =
      run_cli({"decouple", kData + "/example1.json", "--rank", "3", "--method", "coupled", "-o", model_path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = r.parsed();
  EXPECT_EQ(rep["method"], "coupled-structured");
  EXPECT_FALSE(rep.contains("model"));
  const DecoupledModel model = cli::model_from_json(json::parse(read_file(model_path)));
  const DecoupledModel truth = fixtures::example_model();
  EXPECT_GE(match_factors({model.W, model.V}, {truth.W, truth.V}).congruence, 0.999);
  // Re-reading the file reproduces the reported residual.
  const double residual = coefficient_residual(expand_decoupled(model), fixtures::example_map());
  EXPECT_NEAR(residual, rep["map_residual"].get<double>(), 1e-12);
}

TEST(CliDecouple, JacobianMethodReportsStructureResidual) {
  const Result r = run_cli({"decouple", kData + "/example1.json", "--rank", "3", "--method", "j", "--sample", "10"});
  EXPECT_TRUE(r.code == 0 || r.code == 4 || r.code == 5) << r.err;
  const json rep = r.parsed();
  EXPECT_TRUE(rep.contains("structure_residual"));
  EXPECT_TRUE(rep.contains("model"));
  EXPECT_EQ(rep["exit_code"], r.code);
}

TEST(CliDecouple, RankOneFile) {
  const Result r = run_cli({"decouple", "-", "--rank", "1"}, single_branch_file());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LE(r.parsed()["map_residual"].get<double>(), 1e-8);
}

TEST(CliDecouple, ResidualAboveToleranceExitsFour) {
  // One branch cannot represent the three-branch example; the result is still written.
  const Result r = run_cli({"decouple", kData + "/example1.json", "--rank", "1", "--method", "q", "--restarts", "2"});
  EXPECT_EQ(r.code, 4);
  EXPECT_TRUE(r.parsed().contains("model"));
}

TEST(CliDecouple, BudgetExhaustionExitsFive) {
  const Result r = run_cli({"decouple", kData + "/example1.json", "--rank", "3", "--method", "q", "--restarts", "1",
                            "--max-iters", "1"});
  EXPECT_EQ(r.code, 5);
  EXPECT_FALSE(r.parsed()["converged"].get<bool>());
}

TEST(CliDecouple, RankSweepAndDeterminism) {
  const std::vector<std::string> args = {"decouple", kData + "/example1.json", "--rank", "2",   "--method",
                                         "j",        "--rank-sweep",           "3",      "--seed", "5"};
  const Result a = run_cli(args);
  const Result b = run_cli(args);
  EXPECT_EQ(a.out, b.out);
  const json rep = a.parsed();
  ASSERT_EQ(rep["sweep"].size(), 3u);
  EXPECT_EQ(rep["sweep"][2]["rank"], 3);
  EXPECT_LE(rep["sweep"][2]["tensor_fit"].get<double>(), 1e-6);
}

TEST(CliDecouple, SeedFromEnvironment) {
  const std::vector<std::string> args = {"decouple", kData + "/example1.json", "--rank", "2", "--method", "q"};
  setenv("POLYDEC_SEED", "17", 1);
  const Result env = run_cli(args);
  unsetenv("POLYDEC_SEED");
  std::vector<std::string> explicit_args = args;
  explicit_args.insert(explicit_args.end(), {"--seed", "17"});
  const Result flag = run_cli(explicit_args);
  EXPECT_EQ(env.out, flag.out);
  EXPECT_EQ(env.parsed()["seed"], 17);
  setenv("POLYDEC_SEED", "abc", 1);
  EXPECT_EQ(run_cli(args).code, 2);
  unsetenv("POLYDEC_SEED");
}

TEST(CliDecouple, InvalidRankRejected) {
  EXPECT_EQ(run_cli({"decouple", kData + "/example1.json", "--rank", "0"}).code, 2);
  EXPECT_EQ(run_cli({"decouple", kData + "/example1.json"}).code, 2);
}

TEST(CliVerify, ExampleModelAllGreen) {
  const Result r = run_cli({"verify", kData + "/example1.json", "--model", kData + "/example1_model.json", "--points",
                            kData + "/example1_points.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rec = r.parsed();
  EXPECT_EQ(rec["identity_residual"], 0.0);
  EXPECT_EQ(rec["h_residual"], 0.0);
  EXPECT_EQ(rec["rank_A"], 3);
}

TEST(CliVerify, PerturbedModelExitsFour) {
  std::ifstream file(kData + "/example1_model.json");
  json model = json::parse(file);
  model["W"][0][0] = 1.0;
  const auto path = temp_file("perturbed.json");
  write_file(path, model.dump());
  const Result r = run_cli({"verify", kData + "/example1.json", "--model", path.string(), "--points",
                            kData + "/example1_points.json"});
  EXPECT_EQ(r.code, 4);
  EXPECT_GT(r.parsed()["coefficient_cpd_residual"].get<double>(), 1e-3);
}

TEST(CliVerify, RandomMapSampledPlan) {
  std::mt19937_64 gen(3);
  const std::string text = cli::polymap_to_json(fixtures::random_map(2, 2, 3, gen)).dump();
  const Result r = run_cli({"verify", "-", "--sample", "6", "--seed", "2"}, text);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LE(r.parsed()["identity_residual"].get<double>(), 1e-9);
  EXPECT_EQ(r.parsed()["rank_A"], 6);
}

TEST(CliVerify, MismatchedModelExitsThree) {
  const auto path = temp_file("small_model.json");
  write_file(path, R"({"W":[[1]],"V":[[1]],"C":[[1]]})");
  EXPECT_EQ(run_cli({"verify", kData + "/example1.json", "--model", path.string()}).code, 3);
}

TEST(CliInfo, ExampleCounts) {
  const Result r = run_cli({"info", kData + "/example1.json", "--rank", "3"});
  ASSERT_EQ(r.code, 0);
  const json j = r.parsed();
  EXPECT_EQ(j["delta"], 7);
  EXPECT_EQ(j["M"], 6);
  EXPECT_EQ(j["parameters"]["coupled"], 18);
  EXPECT_EQ(j["parameters"]["decoupled"], 21);
}

TEST(CliInfo, ThreeVariableQuinticAndUnivariate) {
  const Result r = run_cli({"info", "-", "-r", "3"}, R"({"m":3,"n":3,"d":5,"terms":[]})");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.parsed()["parameters"]["coupled"], 165);
  EXPECT_EQ(r.parsed()["parameters"]["decoupled"], 33);
  const Result u = run_cli({"info", "-"}, R"({"m":1,"n":1,"d":4,"terms":[{"i":1,"alpha":[4],"coeff":1}]})");
  EXPECT_EQ(u.parsed()["delta"], 4);
  EXPECT_EQ(u.parsed()["M"], 4);
  EXPECT_FALSE(u.parsed()["parameters"].contains("decoupled"));
  EXPECT_EQ(run_cli({"info", "-"}, "[]").code, 2);
}
