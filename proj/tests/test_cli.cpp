#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "igbss_cli.hpp"

namespace fs = std::filesystem;
using igbss::cli::json;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "igbss");
  std::ostringstream out, err;
  Result r;
  r.code = igbss::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("igbss_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  // 3x30 time series mixed first-order with seed 1.
  std::string mixture() {
    EXPECT_EQ(run({"generate", "timeseries", "--samples", "30", "-o", path("z.csv")}).code, 0);
    EXPECT_EQ(run({"mix", "--sources", path("z.csv"), "--seed", "1", "-o", path("x.csv")}).code, 0);
    return path("x.csv");
  }

  fs::path dir;
};

const std::string kData = IGBSS_TEST_DATA_DIR;

}  // namespace

TEST_F(Cli, GenerateTimeseries) {
  auto r = run({"generate", "timeseries", "--samples", "500", "--seed", "1", "-o", path("z.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto Z = igbss::read_matrix_csv(path("z.csv"));
  EXPECT_EQ(Z.rows(), 3);
  EXPECT_EQ(Z.cols(), 500);
  EXPECT_EQ(Z, igbss::gen_timeseries(500));

  const json man = load(path("z.manifest.json"));
  EXPECT_EQ(man["command"], "generate");
  EXPECT_EQ(man["seeds"]["data"], 1);
  EXPECT_EQ(man["version"], igbss::kVersion);
  EXPECT_TRUE(man["timing"].contains("generate"));

  ASSERT_EQ(run({"generate", "timeseries", "--samples", "500", "--seed", "1", "-o", path("z2.csv")}).code, 0);
  EXPECT_EQ(slurp(path("z.csv")), slurp(path("z2.csv")));
}

TEST_F(Cli, GeneratePointcloud) {
  ASSERT_EQ(run({"generate", "pointcloud", "--count", "1000", "--seed", "2", "-o", path("p.csv")}).code, 0);
  const auto P = igbss::read_matrix_csv(path("p.csv"));
  EXPECT_EQ(P.rows(), 2);
  EXPECT_EQ(P.cols(), 1000);
  EXPECT_EQ(P, igbss::gen_pointcloud(1000, 2));
}

TEST_F(Cli, UnwritablePath) {
  std::ofstream(path("blocker")) << "x";
  const auto r = run({"generate", "timeseries", "-o", path("blocker/z.csv")});
  EXPECT_EQ(r.code, igbss::cli::kIoError);
  EXPECT_NE(r.err.find("blocker"), std::string::npos);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 64);
  EXPECT_EQ(run({"frobnicate"}).code, 64);
  EXPECT_EQ(run({"generate", "noise", "-o", path("z.csv")}).code, 64);
  EXPECT_EQ(run({"generate", "timeseries"}).code, 64);
  const auto x = mixture();
  EXPECT_EQ(run({"separate", "--input", x, "--sources", "3", "--optimizer", "adam", "-o", path("o")}).code, 64);
  EXPECT_EQ(run({"separate", "--input", x, "--sources", "2", "--order", "3", "-o", path("o")}).code, 64);
  EXPECT_EQ(run({"separate", "--input", x, "--sources", "0", "-o", path("o")}).code, 64);
  EXPECT_EQ(run({"separate", "--input", x, "--sources", "3", "--init", "random", "-o", path("o")}).code, 64);
  EXPECT_EQ(run({"mix", "--sources", path("z.csv"), "--order", "4", "-o", path("y.csv")}).code, 64);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, MixWithIdentitySpecCopiesSources) {
  ASSERT_EQ(run({"generate", "timeseries", "--samples", "40", "-o", path("z.csv")}).code, 0);
  igbss::cli::write_json(path("identity.json"), igbss::cli::mixing_spec_to_json(igbss::identity_mixing(3)));
  const auto r = run({"mix", "--sources", path("z.csv"), "--spec", path("identity.json"), "-o", path("x.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("x.csv")), slurp(path("z.csv")));
}

TEST_F(Cli, MixThirdOrderCoefficientGroups) {
  ASSERT_EQ(run({"generate", "timeseries", "--samples", "10", "-o", path("z.csv")}).code, 0);
  ASSERT_EQ(run({"mix", "--sources", path("z.csv"), "--order", "3", "-o", path("x.csv")}).code, 0);
  const json spec = load(path("x.spec.json"));
  std::vector<int> per_row(3, 0);
  for (const auto& t : spec["terms"]) ++per_row[t["row"].get<std::size_t>()];
  EXPECT_EQ(per_row, (std::vector<int>{7, 7, 7}));
}

TEST_F(Cli, MixMatchesGoldenFile) {
  ASSERT_EQ(run({"generate", "timeseries", "--samples", "12", "-o", path("z.csv")}).code, 0);
  ASSERT_EQ(run({"mix", "--sources", path("z.csv"), "--order", "2", "--lo", "0.5", "--hi", "2", "--seed", "1", "-o",
                 path("x.csv")})
                .code,
            0);
  EXPECT_EQ(slurp(path("x.csv")), slurp(kData + "/mix_order2_seed1.csv"));
  EXPECT_EQ(load(path("x.spec.json")), load(kData + "/mix_order2_seed1.spec.json"));
}

TEST_F(Cli, MalformedCsvReportsPosition) {
  std::ofstream(path("bad.csv")) << "2,3\n1,2,3\n4,five,6\n";
  const auto r = run({"separate", "--input", path("bad.csv"), "--sources", "2", "-o", path("o")});
  EXPECT_EQ(r.code, 65);
  EXPECT_NE(r.err.find("line 3, column 2"), std::string::npos) << r.err;
  EXPECT_EQ(run({"mix", "--sources", path("bad.csv"), "-o", path("y.csv")}).code, 65);
  EXPECT_EQ(run({"separate", "--input", path("missing.csv"), "--sources", "2", "-o", path("o")}).code, 74);
}

TEST_F(Cli, SeparateMatchesLibrary) {
  const auto x = mixture();
  const auto r = run({"separate", "--input", x, "--sources", "3", "-o", path("out")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lib = igbss::separate(igbss::SignalMatrix(igbss::read_matrix_csv(x), igbss::SignalRole::Received), 3, 1,
                                   igbss::NormScheme::MinMax, igbss::FitConfig{});
  std::ostringstream expected;
  igbss::write_matrix_csv(expected, lib.recovered.data);
  EXPECT_EQ(slurp(path("out/recovered.csv")), expected.str());

  const json report = load(path("out/report.json"));
  EXPECT_TRUE(report["converged"].get<bool>());
  EXPECT_EQ(report["iterations"], lib.report.iterations);
  EXPECT_EQ(report["normalization"]["scheme"], "minmax");
  const json theta = load(path("out/mixing_theta.json"));
  ASSERT_EQ(theta.size(), 9u);
  EXPECT_EQ(theta[0]["state"], "a(1;1)");
  const json man = load(path("out/manifest.json"));
  EXPECT_EQ(man["flags"]["optimizer"], "ng");
  EXPECT_EQ(man["flags"]["tol"], 1e-8);
  EXPECT_EQ(man["iterations"], lib.report.iterations);
  for (const char* phase : {"read", "fit", "evaluate", "fisher", "solve", "write"})
    EXPECT_TRUE(man["timing"].contains(phase)) << phase;
}

TEST_F(Cli, NaturalGradientNeedsFewerIterations) {
  const auto x = mixture();
  ASSERT_EQ(run({"separate", "--input", x, "--sources", "3", "-o", path("ng")}).code, 0);
  const auto gd = run({"separate", "--input", x, "--sources", "3", "--optimizer", "gd", "--max-iter", "3000", "-o",
                       path("gd")});
  EXPECT_EQ(gd.code, 2);
  EXPECT_TRUE(fs::exists(path("gd/recovered.csv")));
  const json a = load(path("ng/report.json")), b = load(path("gd/report.json"));
  EXPECT_FALSE(b["converged"].get<bool>());
  EXPECT_LT(a["iterations"].get<int>(), b["iterations"].get<int>());
}

TEST_F(Cli, ExpSchemeAcceptsNegativeData) {
  const auto x = mixture();
  std::ofstream(path("neg.csv")) << "2,4\n-1,2,-3,4\n0.5,-2,1,3\n";
  EXPECT_EQ(run({"separate", "--input", path("neg.csv"), "--sources", "2", "--norm", "exp", "-o", path("e")}).code, 0);
  const auto r = run({"separate", "--input", path("neg.csv"), "--sources", "2", "--norm", "sum", "-o", path("s")});
  EXPECT_EQ(r.code, 65);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(Cli, Evaluate) {
  ASSERT_EQ(run({"generate", "timeseries", "--samples", "50", "-o", path("z.csv")}).code, 0);
  auto r = run({"evaluate", "--recovered", path("z.csv"), "--truth", path("z.csv"), "-o", path("m.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  json m = load(path("m.json"));
  EXPECT_EQ(m["rmse"], 0.0);
  EXPECT_EQ(m["snr_db"], "inf");
  EXPECT_EQ(m["permutation"], json({0, 1, 2}));
  EXPECT_EQ(m["signs"], json({1, 1, 1}));
  EXPECT_EQ(m["per_signal"].size(), 3u);
  EXPECT_TRUE(fs::exists(path("m.manifest.json")));

  std::ofstream(path("swap_r.csv")) << "1,2\n0,1\n";
  std::ofstream(path("swap_t.csv")) << "1,2\n1,0\n";
  r = run({"evaluate", "--recovered", path("swap_r.csv"), "--truth", path("swap_t.csv")});
  ASSERT_EQ(r.code, 0);
  m = json::parse(r.out);
  EXPECT_DOUBLE_EQ(m["rmse"].get<double>(), 1.0);
  EXPECT_NEAR(m["snr_db"].get<double>(), -3.0103, 1e-4);

  std::ofstream(path("short.csv")) << "1,3\n0,1,2\n";
  EXPECT_EQ(run({"evaluate", "--recovered", path("short.csv"), "--truth", path("swap_t.csv")}).code, 65);
}

TEST_F(Cli, BenchmarkTimeseriesIsDeterministic) {
  const std::vector<std::string> args{"benchmark", "--preset", "timeseries", "--samples", "20", "--orders",
                                      "1,2",       "--seeds",  "1,2"};
  auto a = args, b = args;
  a.insert(a.end(), {"-o", path("a")});
  b.insert(b.end(), {"-o", path("b")});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  json ja = load(path("a/table.json")), jb = load(path("b/table.json"));
  ASSERT_EQ(ja["rows"].size(), 4u);
  EXPECT_EQ(ja["rows"][0]["order"], 1);
  EXPECT_EQ(ja["rows"][0]["norm"], "minmax");
  EXPECT_EQ(ja["rows"][1]["norm"], "exp");
  for (auto* j : {&ja, &jb}) {
    for (auto& row : (*j)["rows"]) row.erase("seconds_mean");
    for (auto& run : (*j)["runs"]) run.erase("seconds");
  }
  EXPECT_EQ(ja, jb);
  EXPECT_TRUE(fs::exists(path("a/table.csv")));
  EXPECT_EQ(load(path("a/manifest.json"))["command"], "benchmark");
}

TEST_F(Cli, BenchmarkScaling) {
  const auto r = run({"benchmark", "--preset", "scaling", "--sizes", "10,20", "--iterations", "3", "-o", path("s")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = load(path("s/table.json"));
  ASSERT_EQ(j["rows"].size(), 4u);
  EXPECT_EQ(j["rows"][0]["optimizer"], "gd");
  EXPECT_EQ(j["rows"][3]["samples"], 20);
  EXPECT_EQ(j["rows"][3]["iterations"], 3);
  EXPECT_TRUE(j["linear_fit"].contains("ng"));
}

TEST_F(Cli, BenchmarkThreadCap) {
  ::setenv("IGBSS_THREADS", "zero", 1);
  EXPECT_EQ(run({"benchmark", "--samples", "10", "--orders", "1", "-o", path("t")}).code, 64);
  ::setenv("IGBSS_THREADS", "2", 1);
  EXPECT_EQ(igbss::cli::benchmark_threads(), 2u);
  ASSERT_EQ(run({"benchmark", "--samples", "10", "--orders", "1", "-o", path("t")}).code, 0);
  EXPECT_EQ(load(path("t/manifest.json"))["timing"]["threads"], 2);
  ::unsetenv("IGBSS_THREADS");
}

TEST_F(Cli, ReplayReproducesOutputs) {
  const auto x = mixture();
  ASSERT_EQ(run({"separate", "--input", x, "--sources", "3", "--init", "random", "--seed", "4", "-o", path("r1")}).code,
            0);
  ASSERT_EQ(run({"replay", path("r1/manifest.json"), "-o", path("r2")}).code, 0);
  for (const char* f : {"recovered.csv", "source_probabilities.csv", "mixing_theta.json", "report.json"})
    EXPECT_EQ(slurp(path("r1/") + f), slurp(path("r2/") + f)) << f;
  json m1 = load(path("r1/manifest.json")), m2 = load(path("r2/manifest.json"));
  EXPECT_EQ(m1["flags"], m2["flags"]);
  EXPECT_EQ(m1["seeds"], m2["seeds"]);

  ASSERT_EQ(run({"replay", path("z.manifest.json"), "-o", path("z_again.csv")}).code, 0);
  EXPECT_EQ(slurp(path("z.csv")), slurp(path("z_again.csv")));

  std::ofstream(path("broken.json")) << "{\"argv\": 3}";
  EXPECT_EQ(run({"replay", path("broken.json")}).code, 65);
}
