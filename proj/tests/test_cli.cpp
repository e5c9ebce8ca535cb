#include "cli_app.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace manigap;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "manigap");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> data_rows(const std::string& csv) {
    std::vector<std::string> rows;
    std::istringstream in(csv);
    std::string line;
    int header = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header++ == 0) continue;
        rows.push_back(line);
    }
    return rows;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("manigap_cli_" + std::to_string(::getpid()) + "_" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string write(const std::string& name, const std::string& text) {
        const auto p = dir_ / name;
        std::ofstream(p) << text;
        return p.string();
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

const char* kNodeConfig = R"({
  "experiment": "node",
  "manifold": {"kind": "circle"},
  "signal": {"coefficients": {"2": 1.0, "4": 0.6}},
  "target": {"taps": [0.2, 1.0, -0.6]},
  "mismatch": {"kind": "deformation", "gamma": [0.1]},
  "graph": {"n": [60]},
  "model": {"depth": [1], "width": [2], "k": 3},
  "train": {"learning_rate": 0.01, "epochs": 3},
  "eval": {"n_eval": 500, "replicates": 8, "trials": 1, "seed": 3, "workers": 1}
})";

}  // namespace

TEST_F(CliTest, SingleCellWritesOneRowAndManifest) {
    const auto cfg = write("node.json", kNodeConfig);
    const auto r = run({"gap-node", "--config", cfg, "--out", path("run")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = slurp(path("run") + "/results.csv");
    EXPECT_EQ(csv.rfind("# manigap results schema v1\n", 0), 0u);
    EXPECT_NE(csv.find("config_fingerprint,n,gamma,c_l,depth,width,seed,empirical_risk,statistical_risk,stderr,gap\n"),
              std::string::npos);
    EXPECT_EQ(data_rows(csv).size(), 1u);

    // Exactly one manifest, and its checksum is recomputable from the stored config.
    int manifests = 0;
    for (const auto& e : fs::directory_iterator(path("run"))) manifests += e.path().filename() == "manifest.json";
    EXPECT_EQ(manifests, 1);
    const auto m = nlohmann::json::parse(slurp(path("run") + "/manifest.json"));
    const auto stored = config_from_json(m.at("config"));
    EXPECT_EQ(m.at("config_checksum").get<std::string>(), hex64(fnv1a(config_to_json(stored).dump())));
    EXPECT_EQ(m.at("master_seed").get<std::uint64_t>(), 3u);
    for (const auto& o : m.at("outputs")) EXPECT_TRUE(fs::exists(path("run") + "/" + o.get<std::string>())) << o;
    for (const auto& e : fs::directory_iterator(dir_)) EXPECT_EQ(e.path().string().find(".tmp-"), std::string::npos);
}

TEST_F(CliTest, RerunIsByteIdenticalAndNeedsOverwrite) {
    const auto cfg = write("node.json", kNodeConfig);
    ASSERT_EQ(run({"gap-node", "--config", cfg, "--out", path("a")}).code, 0);
    ASSERT_EQ(run({"gap-node", "--config", cfg, "--out", path("b")}).code, 0);
    EXPECT_EQ(slurp(path("a") + "/results.csv"), slurp(path("b") + "/results.csv"));
    EXPECT_EQ(slurp(path("a") + "/summary.csv"), slurp(path("b") + "/summary.csv"));

    const auto again = run({"gap-node", "--config", cfg, "--out", path("a")});
    EXPECT_EQ(again.code, 2);
    EXPECT_NE(again.err.find("--overwrite"), std::string::npos);
    std::ofstream(path("a") + "/stale.txt") << "x";
    ASSERT_EQ(run({"gap-node", "--config", cfg, "--out", path("a"), "--overwrite", "--seed", "9"}).code, 0);
    EXPECT_FALSE(fs::exists(path("a") + "/stale.txt"));
    EXPECT_NE(slurp(path("a") + "/results.csv"), slurp(path("b") + "/results.csv"));
}

TEST_F(CliTest, SweepRowCountFitAndSvg) {
    auto j = nlohmann::json::parse(kNodeConfig);
    j["graph"]["n"] = {20, 30, 40, 50};
    j["mismatch"]["gamma"] = {0.0, 0.05, 0.1};
    j["eval"]["trials"] = 5;
    j["train"]["epochs"] = 1;
    const auto cfg = write("sweep.json", j.dump());
    const auto r = run({"sweep", "--config", cfg, "--out", path("s"), "--svg"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(data_rows(slurp(path("s") + "/results.csv")).size(), 60u);
    EXPECT_EQ(data_rows(slurp(path("s") + "/summary.csv")).size(), 12u);
    EXPECT_NE(slurp(path("s") + "/bound_fit.txt").find("r2 = "), std::string::npos);
    EXPECT_EQ(slurp(path("s") + "/gap.svg").rfind("<svg", 0), 0u);

    j["graph"]["n"] = {20, 30};
    const auto small = write("small.json", j.dump());
    EXPECT_EQ(run({"sweep", "--config", small, "--out", path("t")}).code, 2);
}

TEST_F(CliTest, ConfigErrorsExitTwoWithDiagnostics) {
    const auto bad_key = write("bad_key.json", R"({"graph": {"n": [60], "nn": 3}})");
    auto r = run({"gap-node", "--config", bad_key, "--out", path("x")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("graph.nn"), std::string::npos) << r.err;

    const auto bad_json = write("bad_json.json", "{\n  \"graph\": {\n    \"n\": [60,\n}\n");
    r = run({"gap-node", "--config", bad_json, "--out", path("x")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("bad_json.json:4"), std::string::npos) << r.err;

    r = run({"gap-node", "--out", path("x")});
    EXPECT_EQ(r.code, 2);
    r = run({"bogus"});
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(fs::exists(path("x")));
}

TEST_F(CliTest, RuntimeFailureExitsOne) {
    auto j = nlohmann::json::parse(kNodeConfig);
    j["model"]["loss"] = {{"kind", "cross_entropy"}};  // real-valued targets fail inside training
    const auto cfg = write("ce.json", j.dump());
    const auto r = run({"gap-node", "--config", cfg, "--out", path("f")});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(data_rows(slurp(path("f") + "/failures.csv")).size(), 1u);
}

TEST_F(CliTest, GraphLevelRowsAndFileClasses) {
    nlohmann::json j = {
        {"experiment", "graph"},
        {"classes", {{{"name", "sphere"}, {"manifold", {{"kind", "sphere"}}}}, {{"name", "torus"}, {"manifold", {{"kind", "torus"}}}}}},
        {"graph", {{"n_per_graph", 20}}},
        {"train_graphs_per_class", 3},
        {"test_graphs_per_class", 2},
        {"mismatch", {{"kind", "jitter"}, {"gamma", {0.02}}}},
        {"model", {{"width", {3}}, {"loss", {{"kind", "cross_entropy"}}}}},
        {"train", {{"epochs", 5}}},
        {"eval", {{"workers", 1}}}};
    auto r = run({"gap-graph", "--config", write("g.json", j.dump()), "--out", path("g")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = data_rows(slurp(path("g") + "/graph_results.csv"));
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_NE(rows[0].find(",all,"), std::string::npos);
    EXPECT_NE(rows[1].find(",sphere,"), std::string::npos);
    EXPECT_NE(rows[2].find(",torus,"), std::string::npos);

    j["classes"] = {{{"name", "cube"}, {"file", MANIGAP_FIXTURES "/cube_cloud.off"}},
                    {{"name", "ball"}, {"file", MANIGAP_FIXTURES "/sphere_cloud.off"}}};
    r = run({"gap-graph", "--config", write("files.json", j.dump()), "--out", path("h")});
    EXPECT_EQ(r.code, 0) << r.err;

    // Relative class paths resolve against the config's directory.
    j["classes"][0]["file"] = "missing_cube.off";
    r = run({"gap-graph", "--config", write("missing.json", j.dump()), "--out", path("m")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("missing_cube.off"), std::string::npos) << r.err;
}

TEST_F(CliTest, CertifyCheckpoints) {
    GnnModel pass = init_model({1, 1}, 3, 1, Activation::Relu, Task::Node, 0);
    pass.layers[0].taps = {Matrix::Constant(1, 1, 1.0), Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
    save_checkpoint(path("pass.json"), pass);
    auto r = run({"certify", path("pass.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("max c_l 0\n"), std::string::npos) << r.out;

    GnnModel one = pass;
    one.layers[0].taps = {Matrix::Zero(1, 1), Matrix::Constant(1, 1, 1.0)};
    save_checkpoint(path("one.json"), one);
    r = run({"certify", path("one.json"), "--d", "1", "--lambda-min", "0.5", "--lambda-max", "10.5", "--steps", "1001", "--json"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NEAR(nlohmann::json::parse(r.out).at("max_c_l").get<double>(), 4.0 * std::exp(-2.0), 1e-12);

    EXPECT_EQ(run({"certify", path("one.json"), "--lambda-min", "0"}).code, 2);
    std::ofstream(path("corrupt.json")) << "{\"format\": \"manigap-checkpoint\", \"version\": 1, \"layers\": 3}";
    EXPECT_EQ(run({"certify", path("corrupt.json")}).code, 2);
    EXPECT_EQ(run({"certify", path("absent.json")}).code, 2);
}

TEST_F(CliTest, ConvergeCircle) {
    const auto r = run({"converge", "--manifold", "circle", "--n", "500,1000,2000", "--seeds", "5", "--weyl-lo", "2",
                        "--weyl-hi", "10"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    std::vector<double> errs;
    for (int i = 0; i < 3 && std::getline(in, line); ++i) errs.push_back(std::stod(line.substr(line.rfind(',') + 1)));
    ASSERT_EQ(errs.size(), 3u);
    EXPECT_GE(errs[0], errs[1]);
    EXPECT_GE(errs[1], errs[2]);
    EXPECT_LT(errs[2], 0.1);
    EXPECT_NE(r.out.find("weyl slope"), std::string::npos);
    EXPECT_EQ(run({"converge", "--manifold", "circle", "--n", ""}).code, 2);
    EXPECT_EQ(run({"converge", "--manifold", "klein", "--n", "100"}).code, 2);
}

TEST_F(CliTest, GradcheckDefaultModel) {
    const auto r = run({"gradcheck"});
    ASSERT_EQ(r.code, 0) << r.out << r.err;
    const auto pos = r.out.find("max relative error ");
    ASSERT_NE(pos, std::string::npos);
    EXPECT_LE(std::stod(r.out.substr(pos + 19)), 1e-5);
}

TEST_F(CliTest, IngestRoundTripAndLineNumberedErrors) {
    auto r = run({"ingest", MANIGAP_FIXTURES "/cube.off", "--out", path("cube.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("points 8\n"), std::string::npos) << r.out;
    EXPECT_EQ(load_point_cloud(path("cube.csv")), load_point_cloud(MANIGAP_FIXTURES "/cube.off"));
    r = run({"ingest", MANIGAP_FIXTURES "/bad_vertex.off"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("bad_vertex.off:"), std::string::npos) << r.err;
    r = run({"ingest", MANIGAP_FIXTURES "/sphere_cloud.off", "--subsample", "40"});
    EXPECT_NE(r.out.find("points 40\n"), std::string::npos);
}

TEST(CliBinary, ExitCodes) {
    auto code = [](const std::string& args) {
        const int status = std::system((std::string(MANIGAP_CLI) + " " + args + " > /dev/null 2>&1").c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };
    EXPECT_EQ(code("--help"), 0);
    EXPECT_EQ(code(""), 2);
    EXPECT_EQ(code("certify /nonexistent.json"), 2);
    EXPECT_EQ(code("ingest " MANIGAP_FIXTURES "/cube.csv"), 0);
}
