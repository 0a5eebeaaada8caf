#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "kmsig/csv.hpp"

using nlohmann::json;

namespace {

namespace fs = std::filesystem;

std::string scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "kmsig_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

// Runs the built binary, captures combined stdout/stderr, returns the exit
// code (-1 when the process did not exit normally).
int run_cli(const std::string& args, std::string* output = nullptr) {
    static int counter = 0;
    const std::string log =
        (fs::temp_directory_path() / "kmsig_cli_tests" /
         ("log_" + std::to_string(counter++) + ".txt"))
            .string();
    fs::create_directories(fs::path(log).parent_path());
    const std::string command = std::string(KMSIG_CLI_PATH) + " " + args + " > " + log + " 2>&1";
    const int status = std::system(command.c_str());
    if (output) {
        std::ifstream in(log);
        std::ostringstream text;
        text << in.rdbuf();
        *output = text.str();
    }
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* scenario_text = R"({
  "network": {
    "n_gen": 2,
    "n_load": 1,
    "f0": 60.0,
    "lines": [
      {"from": 1, "to": 2, "b": 5.0},
      {"from": 1, "to": 3, "b": 8.0},
      {"from": 2, "to": 3, "b": 4.0}
    ],
    "generators": [
      {"inertia": 1.0, "damping": 0.5},
      {"inertia": 1.4, "damping": 0.6}
    ],
    "agc": {"gain": 50.0, "participation": "by_inertia"},
    "base_load": [0.3],
    "voltage_droop": 0.04
  },
  "events": [{"bus": "bus_3", "start_time": 0.5, "delta_load": 0.05}],
  "attack": {
    "type": "step",
    "targets": ["bus_3"],
    "channel": "voltage_angle",
    "t1": 2.0,
    "t2": 5.0,
    "c": 0.1
  },
  "window": {"learning_len": 60, "prediction_len": 20, "stride": 5},
  "duration": 6.0,
  "sample_period": 0.05,
  "channel": "voltage_angle",
  "noise_std": {"voltage_angle": 1e-4},
  "seed": 7
}
)";

std::string write_scenario(const std::string& dir) {
    const std::string path = (fs::path(dir) / "scenario.json").string();
    std::ofstream(path) << scenario_text;
    return path;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
    return kmsig::io::fnv1a64_file(a.string()) == kmsig::io::fnv1a64_file(b.string());
}

} // namespace

TEST_CASE("run writes the artifact set and names the outlier") {
    const std::string dir = scratch_dir("run");
    const std::string config = write_scenario(dir);
    std::string output;
    const int code =
        run_cli("run --config " + config + " --out " + dir + "/out", &output);
    INFO("output: " << output);
    REQUIRE(code == 0);
    CHECK(output.find("9 windows") != std::string::npos);
    CHECK(output.find("most frequent outlier: bus_3") != std::string::npos);
    for (const char* name :
         {"clean_voltage_angle.csv", "attacked_voltage_angle.csv", "ground_truth.json",
          "scores.csv", "summary.json", "manifest.json"})
        CHECK(fs::exists(fs::path(dir) / "out" / name));
}

TEST_CASE("repeating a run reproduces every artifact byte for byte") {
    const std::string dir = scratch_dir("repeat");
    const std::string config = write_scenario(dir);
    REQUIRE(run_cli("run --config " + config + " --out " + dir + "/a") == 0);
    REQUIRE(run_cli("run --config " + config + " --out " + dir + "/b") == 0);
    int compared = 0;
    for (const auto& entry : fs::directory_iterator(dir + "/a")) {
        CHECK(same_bytes(entry.path(), fs::path(dir) / "b" / entry.path().filename()));
        ++compared;
    }
    CHECK(compared == 9);
}

TEST_CASE("the staged pipeline reproduces the one-shot run") {
    const std::string dir = scratch_dir("staged");
    const std::string config = write_scenario(dir);
    REQUIRE(run_cli("run --config " + config + " --out " + dir + "/run") == 0);
    REQUIRE(run_cli("simulate --config " + config + " --out " + dir + "/sim") == 0);
    REQUIRE(run_cli("inject --config " + config + " --frame " + dir +
                    "/sim/clean_voltage_angle.csv --out " + dir + "/inj") == 0);
    REQUIRE(run_cli("detect --frame " + dir + "/inj/attacked_voltage_angle.csv"
                    " --learning-len 60 --prediction-len 20 --stride 5 --out " +
                    dir + "/det") == 0);
    CHECK(same_bytes(fs::path(dir) / "sim" / "clean_voltage_angle.csv",
                     fs::path(dir) / "run" / "clean_voltage_angle.csv"));
    CHECK(same_bytes(fs::path(dir) / "inj" / "attacked_voltage_angle.csv",
                     fs::path(dir) / "run" / "attacked_voltage_angle.csv"));
    CHECK(same_bytes(fs::path(dir) / "det" / "scores.csv",
                     fs::path(dir) / "run" / "scores.csv"));
}

TEST_CASE("window overrides change the analysis and are recorded") {
    const std::string dir = scratch_dir("override");
    const std::string config = write_scenario(dir);
    REQUIRE(run_cli("run --config " + config + " --out " + dir +
                    "/out --backend hankel --divergence js --stride 10") == 0);
    std::ifstream in(fs::path(dir) / "out" / "summary.json");
    const json summary = json::parse(in);
    CHECK(summary["backend"] == "hankel");
    CHECK(summary["divergence"] == "js");
    CHECK(summary["stride"] == 10);
    CHECK(summary["window_count"] == 5);
}

TEST_CASE("report summarizes a scores file") {
    const std::string dir = scratch_dir("report");
    const std::string config = write_scenario(dir);
    REQUIRE(run_cli("run --config " + config + " --out " + dir + "/out") == 0);
    std::string output;
    REQUIRE(run_cli("report --scores " + dir + "/out/scores.csv --json " + dir +
                    "/report.json", &output) == 0);
    CHECK(output.find("argmin") != std::string::npos);
    CHECK(output.find("bus_3") != std::string::npos);
    std::ifstream in(dir + "/report.json");
    const json report = json::parse(in);
    CHECK(report["window_count"] == 9);
    CHECK(report["argmin_counts"].contains("bus_3"));
    CHECK(report["windows"].size() == 9);
}

TEST_CASE("config problems exit with 2, runtime problems with 1") {
    const std::string dir = scratch_dir("errors");
    std::string output;

    SUBCASE("missing config file") {
        CHECK(run_cli("run --config " + dir + "/absent.json", &output) == 2);
        CHECK(output.find("config error:") != std::string::npos);
    }
    SUBCASE("config that is not JSON") {
        std::ofstream(dir + "/broken.json") << "not json";
        CHECK(run_cli("run --config " + dir + "/broken.json", &output) == 2);
        CHECK(output.find("config error:") != std::string::npos);
        CHECK(output.find("not valid JSON") != std::string::npos);
    }
    SUBCASE("window that cannot fit the run") {
        const std::string config = write_scenario(dir);
        CHECK(run_cli("run --config " + config + " --learning-len 500", &output) == 2);
        CHECK(output.find("exceed the available samples") != std::string::npos);
    }
    SUBCASE("detect on a malformed frame") {
        std::ofstream(dir + "/bad.csv") << "time,bus_1\n0,1\n0.05\n";
        CHECK(run_cli("detect --frame " + dir + "/bad.csv", &output) == 2);
        CHECK(output.find("row 3 has 1 cells, expected 2") != std::string::npos);
    }
    SUBCASE("a diverging simulation is a runtime failure") {
        json config = json::parse(scenario_text);
        config["network"]["freq_deviation_limit"] = 1e-9;
        std::ofstream(dir + "/diverge.json") << config.dump();
        CHECK(run_cli("run --config " + dir + "/diverge.json", &output) == 1);
        CHECK(output.find("error:") != std::string::npos);
        CHECK(output.find("diverged") != std::string::npos);
    }
    SUBCASE("unknown backend value") {
        const std::string config = write_scenario(dir);
        CHECK(run_cli("run --config " + config + " --backend oracle", &output) != 0);
    }
    SUBCASE("missing required flag") {
        CHECK(run_cli("run", &output) != 0);
        CHECK(output.find("--config is required") != std::string::npos);
    }
}

TEST_CASE("version flag prints the library version") {
    std::string output;
    REQUIRE(run_cli("--version", &output) == 0);
    CHECK(output.find("0.1.0") != std::string::npos);
}
