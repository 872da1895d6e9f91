#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("cmaf_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args) {
    std::string cmd = std::string(CMAF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) {
    std::ifstream is(p);
    return json::parse(is);
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path write_scenario(const fs::path& dir, const json& j) {
    auto p = dir / "scenario.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

json small_disc() {
    auto j = read_json(fs::path(CMAF_SCENARIO_DIR) / "disc_manufactured.json");
    j["grid"] = {{"h_x", 0.125}, {"K", 8}};
    return j;
}

} // namespace

TEST_CASE("cli solve on a manufactured disc exits 0 with artifacts") {
    auto dir = scratch("solve");
    auto sc = write_scenario(dir, small_disc());
    REQUIRE(run("solve " + sc.string() + " --out " + (dir / "a").string()) == 0);
    for (auto f : {"solution.csv", "solution.json", "ledger.json", "reports.json"}) CHECK(fs::exists(dir / "a" / f));
    auto rep = read_json(dir / "a" / "reports.json");
    CHECK(rep["error"].get<double>() <= 0.05);
    for (auto k : {"time_scale", "semiconcave_avg", "walsh", "mobius"}) CHECK(rep.contains(k));
    // Determinism: a second run writes a byte-identical CSV.
    REQUIRE(run("solve " + sc.string() + " --out " + (dir / "b").string()) == 0);
    CHECK(slurp(dir / "a" / "solution.csv") == slurp(dir / "b" / "solution.csv"));
    // verify re-runs the checks on the stored solution.
    CHECK(run("verify " + (dir / "a" / "solution.csv").string() + " " + sc.string() + " --out " +
              (dir / "v").string()) == 0);
    CHECK(read_json(dir / "v" / "reports.json")["all_pass"].get<bool>());
}

TEST_CASE("cli schema errors exit 2 with error.json") {
    auto dir = scratch("schema");
    auto j = small_disc();
    j.erase("horizon");
    auto sc = write_scenario(dir, j);
    CHECK(run("solve " + sc.string() + " --out " + (dir / "o").string()) == 2);
    auto err = read_json(dir / "o" / "error.json");
    CHECK(err["kind"] == "validation");
    CHECK_FALSE(fs::exists(dir / "o" / "reports.json"));
    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(run("solve " + (dir / "broken.json").string() + " --out " + (dir / "p").string()) == 2);
}

TEST_CASE("cli rejects an understated kappa_h with the violating sample") {
    auto dir = scratch("kappa");
    auto j = read_json(fs::path(CMAF_SCENARIO_DIR) / "disc_F_r.json");
    j["grid"] = {{"h_x", 0.125}, {"K", 8}};
    j["h"]["kappa_h"] = 0.1;
    auto sc = write_scenario(dir, j);
    CHECK(run("solve " + sc.string() + " --out " + (dir / "o").string()) == 2);
    auto err = read_json(dir / "o" / "error.json");
    REQUIRE(err["detail"].contains("t"));
    REQUIRE(err["detail"].contains("zeta"));
    // t |d_t h| = 0.5 t is largest at t = S.
    CHECK(err["detail"]["t"].get<double>() == Catch::Approx(0.75));
}

TEST_CASE("cli rejects negative g with exit 2") {
    auto dir = scratch("gneg");
    auto j = read_json(fs::path(CMAF_SCENARIO_DIR) / "disc_constant.json");
    j["grid"] = {{"h_x", 0.125}, {"K", 4}};
    j["g"] = {{"kind", "radial_poly"}, {"c0", 1.0}, {"c1", -2.0}};
    auto sc = write_scenario(dir, j);
    CHECK(run("solve " + sc.string() + " --out " + (dir / "o").string()) == 2);
    CHECK(read_json(dir / "o" / "error.json")["detail"].contains("node"));
}

TEST_CASE("cli verify on a corrupted solution exits 1 and still writes reports") {
    auto dir = scratch("fail");
    auto sc = write_scenario(dir, small_disc());
    REQUIRE(run("solve " + sc.string() + " --out " + (dir / "a").string()) == 0);
    // Lift one interior value at the last time node well above the sandwich bound.
    std::ifstream is(dir / "a" / "solution.csv");
    std::ofstream os(dir / "bad.csv");
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line)) lines.push_back(line);
    std::size_t target = lines.size() - 1;
    while (lines[target].find(",0,0,") == std::string::npos) --target; // centre node row of the last slice
    auto comma = lines[target].rfind(',');
    lines[target] = lines[target].substr(0, comma + 1) + "100";
    for (const auto& l : lines) os << l << '\n';
    os.close();
    CHECK(run("verify " + (dir / "bad.csv").string() + " " + sc.string() + " --checks sandwich,residual --out " +
              (dir / "o").string()) == 1);
    CHECK(fs::exists(dir / "o" / "reports.json"));
    auto err = read_json(dir / "o" / "error.json");
    CHECK(err["kind"] == "check_failed");
    CHECK(err["failed"].size() == 2);
}

TEST_CASE("cli study reports an order on the quartic disc") {
    auto dir = scratch("study");
    auto sc = fs::path(CMAF_SCENARIO_DIR) / "disc_quartic.json";
    REQUIRE(run("study " + sc.string() + " --ladder 1/8,1/16 --out " + (dir / "o").string()) == 0);
    auto st = read_json(dir / "o" / "study.json");
    REQUIRE(st["rows"].size() == 2);
    CHECK(st["rows"][1]["order"].get<double>() >= 0.8);
}
