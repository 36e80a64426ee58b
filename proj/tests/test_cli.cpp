#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bulkvac/config.hpp"
#include "bulkvac/output.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = BULKVAC_SOURCE_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("bulkvac_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args) {
    const std::string cmd = std::string(BULKVAC_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace

TEST(Cli, GoldenTablesForToyModel) {
    const fs::path out = scratch("golden");
    ASSERT_EQ(run("solve --config " + (kSource / "configs/toy.json").string() + " --out " + out.string()), 0);
    const fs::path golden = kSource / "tests/golden/toy";
    for (const char* f : {"xi_plus.csv", "gamma_plus.csv", "queue_plus.csv", "dormant.csv", "xi.csv", "gamma.csv",
                          "queue.csv"}) {
        ASSERT_TRUE(fs::exists(out / f)) << f;
        EXPECT_EQ(slurp(out / f), slurp(golden / f)) << f;
    }
    const json got = json::parse(slurp(out / "summary.json"));
    const json want = json::parse(slurp(golden / "summary.json"));
    for (const auto& [key, value] : want["measures"].items())
        EXPECT_NEAR(got["measures"][key].get<double>(), value.get<double>(), 1e-9) << key;
    EXPECT_EQ(got["provenance"], want["provenance"]);
    for (const auto& [key, value] : want.items()) EXPECT_TRUE(got.contains(key)) << key;
    for (const auto& [key, value] : want["diagnostics"].items()) EXPECT_TRUE(got["diagnostics"].contains(key)) << key;
}

TEST(Cli, TableLayout) {
    const fs::path out = scratch("layout");
    ASSERT_EQ(run("solve --config " + (kSource / "configs/mv.json").string() + " --out " + out.string()), 0);
    EXPECT_FALSE(fs::exists(out / "dormant.csv"));
    std::istringstream in(slurp(out / "xi_plus.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "n,index,phase,value");
    std::getline(in, line);
    EXPECT_EQ(line.rfind("0,5,1,", 0), 0u) << line;
    std::string last;
    while (std::getline(in, line)) last = line;
    EXPECT_EQ(last.rfind("total,9,", 0), 0u) << last;
}

TEST(Cli, SimulationOutputIsDeterministic) {
    const fs::path a = scratch("sim_a"), b = scratch("sim_b");
    const std::string cfg = (kSource / "configs/toy.json").string();
    ASSERT_EQ(run("simulate --config " + cfg + " --events 50000 --seed 3 --out " + a.string()), 0);
    ASSERT_EQ(run("simulate --config " + cfg + " --events 50000 --seed 3 --out " + b.string()), 0);
    int files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
        ++files;
    }
    EXPECT_GE(files, 7);
    std::istringstream in(slurp(a / "xi_plus.csv"));
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "n,index,phase,value,stderr");
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("exit");
    const std::string sv = (kSource / "configs/sv.json").string();
    const std::string toy = (kSource / "configs/toy.json").string();

    EXPECT_EQ(run("solve --config " + sv + " --out " + (dir / "ok").string()), 0);
    EXPECT_EQ(run("solve --config " + (dir / "missing.json").string() + " --out " + dir.string()), 2);
    EXPECT_EQ(run("solve"), 2);
    EXPECT_EQ(run("frobnicate"), 2);

    json bad = json::parse(slurp(toy));
    bad["thresholds"]["h"] = 5;
    write_json(dir / "bad.json", bad);
    EXPECT_EQ(run("solve --config " + (dir / "bad.json").string() + " --out " + dir.string()), 2);

    json hot = json::parse(slurp(toy));
    for (auto* key : {"C", "D"})
        for (auto& row : hot["arrivals"][key])
            for (auto& v : row) v = v.get<double>() * 5.0;
    write_json(dir / "hot.json", hot);
    EXPECT_EQ(run("solve --config " + (dir / "hot.json").string() + " --out " + dir.string()), 3);

    EXPECT_EQ(run("compare --config " + toy + " --events 200000"), 0);
    EXPECT_EQ(run("compare --config " + sv + " --events 1000000 --trunc 10"), 5);
}

TEST(Cli, CompareWritesReport) {
    const fs::path dir = scratch("cmp");
    ASSERT_EQ(run("compare --config " + (kSource / "configs/toy.json").string() + " --events 200000 --out " +
                  dir.string()),
              0);
    const json rep = json::parse(slurp(dir / "compare.json"));
    EXPECT_LE(rep["max_abs_z"].get<double>(), 4.0);
    EXPECT_GT(rep["rows"].size(), 20u);
}

TEST(Cli, SweepMergesPoints) {
    const fs::path dir = scratch("sweep");
    json sw = json::parse(slurp(kSource / "configs/sweep.json"));
    sw["base"] = (kSource / "configs/sweep_base.json").string();
    sw["scales"] = {1.0, 2.0};
    write_json(dir / "sweep.json", sw);
    ASSERT_EQ(run("sweep --config " + (dir / "sweep.json").string() + " --jobs 2 --out " + (dir / "out").string()), 0);
    std::istringstream in(slurp(dir / "out/sweep.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "l,schedule,lambda,rho,L_q,L_s,W_q,status");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_NE(line.find(",ok"), std::string::npos) << line;
    }
    EXPECT_EQ(rows, 4);
}

TEST(Output, ContentHashIsStable) {
    EXPECT_EQ(bulkvac::content_hash(""), "cbf29ce484222325");
    EXPECT_EQ(bulkvac::content_hash("a"), "af63dc4c8601ec8c");
    EXPECT_NE(bulkvac::content_hash("ab"), bulkvac::content_hash("ba"));
}
