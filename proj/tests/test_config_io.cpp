#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gibbsforge/experiment.hpp"

using namespace gibbsforge;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("gibbsforge_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }

    fs::path write(const std::string& name, const std::string& text) const {
        const fs::path p = path / name;
        std::ofstream out(p);
        out << text;
        return p;
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config parser handles the TOML subset", "[config]") {
    const std::string text = R"(
# comment
mode = "sector-exact"

[lattice]
length = 8          # trailing comment
up_count = 2

[couplings]
j = 1.0
j_perp = 0.75

[subsets]
test = [6, 7]
noisy_sets = [[0, 1, 2],
              [3, 4, 5]]

[noise]
exclude_test = true
)";
    const ConfigValue tree = parse_config_text(text, ".", 0);
    CHECK(tree.find("mode")->as_string("mode") == "sector-exact");
    CHECK(tree.find("lattice")->find("length")->as_int("length") == 8);
    CHECK(tree.find("couplings")->find("j_perp")->as_double("j_perp") == 0.75);
    const auto& sets = tree.find("subsets")->find("noisy_sets")->as_array("noisy_sets");
    REQUIRE(sets.size() == 2);
    CHECK(sets[1].as_array("noisy_sets")[0].as_int("noisy_sets") == 3);
    CHECK(tree.find("noise")->find("exclude_test")->as_bool("exclude_test"));
}

TEST_CASE("config parse errors carry line numbers", "[config]") {
    CHECK_THROWS_WITH(parse_config_text("x = @bad\n", ".", 0),
                      Catch::Matchers::ContainsSubstring("line 1"));
    CHECK_THROWS_AS(parse_config_text("[table\nx = 1\n", ".", 0), ConfigError);
    CHECK_THROWS_AS(parse_config_text("just a line\n", ".", 0), ConfigError);
}

TEST_CASE("include merges shared blocks with local overrides", "[config]") {
    TempDir tmp;
    tmp.write("common.toml", R"(
[lattice]
length = 24
up_count = 3
[run]
seeds = 10
)");
    const fs::path main = tmp.write("main.toml", R"(
include = "common.toml"
[lattice]
up_count = 2
[subsets]
test = [22, 23]
)");
    const ConfigValue tree = parse_config_file(main);
    CHECK(tree.find("lattice")->find("length")->as_int("length") == 24);   // from include
    CHECK(tree.find("lattice")->find("up_count")->as_int("up_count") == 2);  // overridden
    CHECK(tree.find("run")->find("seeds")->as_int("seeds") == 10);
}

TEST_CASE("unknown keys are rejected by the schema", "[config]") {
    const ConfigValue tree = parse_config_text("[lattice]\nlenght = 8\n", ".", 0);
    CHECK_THROWS_WITH(ExperimentConfig::from_tree(tree),
                      Catch::Matchers::ContainsSubstring("lenght"));
}

TEST_CASE("invalid lattice configs are schema errors", "[config]") {
    const ConfigValue tree =
        parse_config_text("[lattice]\nlength = 4\nup_count = 9\n", ".", 0);
    CHECK_THROWS_AS(ExperimentConfig::from_tree(tree), std::invalid_argument);
}

TEST_CASE("cascade generator spreads shocks over the grid", "[config]") {
    ExperimentConfig cfg;
    cfg.n_steps = 50;
    cfg.shock.cascade_count = 4;
    cfg.shock.first_step = 2;
    const std::vector<int> steps = cfg.shock_steps();
    REQUIRE(steps.size() == 4);
    CHECK(steps[0] == 2);
    CHECK(steps[1] == 14);
    CHECK(steps[3] < 50);

    cfg.shock.steps = {2, 7};
    CHECK(cfg.shock_steps() == std::vector<int>{2, 7});
}

TEST_CASE("pauli channel specs load from config strings", "[config]") {
    const std::string text = R"(
[noise]
kind = "pauli"
strings = ["ZZ", "XX!", "II"]
support = [0, 1]
probs = [0.3, 0.2, 0.5]
)";
    const ExperimentConfig cfg = ExperimentConfig::from_tree(parse_config_text(text, ".", 0));
    REQUIRE(cfg.shock.pauli);
    REQUIRE(cfg.shock.pauli->terms.size() == 3);
    CHECK(cfg.shock.pauli->terms[1].letters == "XX");
    CHECK(cfg.shock.pauli->terms[1].zz_projector);
    CHECK(cfg.shock.pauli->terms[2].prob == 0.5);
    CHECK_NOTHROW(cfg.shock.pauli->build_kraus());
}

TEST_CASE("cmd_spectrum writes the promised outputs", "[config]") {
    TempDir tmp;
    ExperimentConfig cfg;
    cfg.length = 2;
    cfg.up_count = 1;
    cfg.initial_up_sites = {0};
    cfg.out_dir = (tmp.path / "out").string();
    cfg.source_text = "synthetic";
    REQUIRE(cmd_spectrum(cfg, {}) == 0);

    const std::string spectrum_csv = slurp(tmp.path / "out" / "spectrum.csv");
    // header plus exactly two eigenvalue lines for the two-dimensional sector
    CHECK(std::count(spectrum_csv.begin(), spectrum_csv.end(), '\n') == 3);
    CHECK(spectrum_csv.rfind("index,eigenvalue", 0) == 0);

    CHECK(fs::exists(tmp.path / "out" / "dos.csv"));
    CHECK(fs::exists(tmp.path / "out" / "beta_star.json"));
    CHECK(fs::exists(tmp.path / "out" / "spectrum.svg"));
    CHECK(fs::exists(tmp.path / "out" / "manifest.json"));
    CHECK(fs::exists(tmp.path / "out" / "resolved_config.txt"));
}

TEST_CASE("metrics CSV carries the documented schema", "[config]") {
    TempDir tmp;
    {
        MetricCsv csv(tmp.path / "m.csv");
        csv.row(0.5, "T[1 2]", "trace_dist", 0.25, "plain", 7);
    }
    const std::string text = slurp(tmp.path / "m.csv");
    CHECK(text.rfind("time,subset,metric,value,protocol,seed\n", 0) == 0);
    CHECK(text.find("0.5,T[1 2],trace_dist,0.25,plain,7") != std::string::npos);
}

TEST_CASE("thermalize runs are reproducible byte for byte", "[config]") {
    TempDir tmp;
    ExperimentConfig cfg;
    cfg.length = 6;
    cfg.up_count = 2;
    cfg.initial_up_sites = {0, 1};
    cfg.t_max = 4.0;
    cfg.n_steps = 12;
    cfg.shock.steps = {2};
    cfg.shock.n_sites = 2;
    cfg.test_sites = {4, 5};
    cfg.metrics = {"trace_dist", "one_minus_fidelity", "energy_ratio"};
    cfg.n_seeds = 2;
    cfg.master_seed = 4242;
    cfg.source_text = "synthetic";

    cfg.out_dir = (tmp.path / "a").string();
    REQUIRE(cmd_thermalize(cfg, {}) == 0);
    cfg.out_dir = (tmp.path / "b").string();
    REQUIRE(cmd_thermalize(cfg, {}) == 0);

    CHECK(slurp(tmp.path / "a" / "metrics.csv") == slurp(tmp.path / "b" / "metrics.csv"));
    CHECK(slurp(tmp.path / "a" / "fits.json") == slurp(tmp.path / "b" / "fits.json"));
    CHECK(fs::exists(tmp.path / "a" / "thermalize.svg"));
}

TEST_CASE("mi command emits per-set series and summaries", "[config]") {
    TempDir tmp;
    ExperimentConfig cfg;
    cfg.length = 8;
    cfg.up_count = 2;
    cfg.initial_up_sites = {0, 1};
    cfg.t_max = 4.0;
    cfg.n_steps = 10;
    cfg.shock.steps = {2};
    cfg.test_sites = {3, 4};
    cfg.noisy_sets = {{0, 1}, {6, 7}};
    cfg.metrics = {"mutual_info"};
    cfg.n_seeds = 2;
    cfg.out_dir = (tmp.path / "mi").string();
    cfg.source_text = "synthetic";
    REQUIRE(cmd_mi(cfg, {}) == 0);
    const std::string csv = slurp(tmp.path / "mi" / "mi.csv");
    CHECK(csv.find("N[0 1]") != std::string::npos);
    CHECK(csv.find("N[6 7]") != std::string::npos);
    CHECK(csv.find("plain") != std::string::npos);
    CHECK(fs::exists(tmp.path / "mi" / "mi_summary.json"));
}

TEST_CASE("circuit command produces metrics and the recurrence report", "[config]") {
    TempDir tmp;
    ExperimentConfig cfg;
    cfg.mode = RunMode::kCircuit;
    cfg.length = 4;
    cfg.up_count = 1;  // unused in circuit mode
    cfg.initial_up_sites = {0};
    cfg.t_max = 3.0;
    cfg.test_sites = {2, 3};
    cfg.circuit.n_traj = 16;
    cfg.circuit.noise_p = 0.02;
    cfg.circuit.n_steps = 12;
    cfg.out_dir = (tmp.path / "circ").string();
    cfg.source_text = "synthetic";
    REQUIRE(cmd_circuit(cfg, {}) == 0);
    CHECK(fs::exists(tmp.path / "circ" / "metrics.csv"));
    CHECK(fs::exists(tmp.path / "circ" / "recurrence.json"));
    CHECK(fs::exists(tmp.path / "circ" / "circuit.txt"));
}

TEST_CASE("sweep command emits the documented JSON shape", "[config]") {
    TempDir tmp;
    ExperimentConfig cfg;
    cfg.length = 6;
    cfg.up_count = 2;
    cfg.initial_up_sites = {0, 1};
    cfg.t_max = 4.0;
    cfg.n_steps = 12;
    cfg.shock.steps = {2};
    cfg.shock.n_sites = 2;
    cfg.test_sites = {4, 5};
    cfg.n_seeds = 2;
    cfg.sweep.axis = "n_noisy";
    cfg.sweep.grid = {2.0, 3.0};
    cfg.out_dir = (tmp.path / "sw").string();
    cfg.source_text = "synthetic";
    REQUIRE(cmd_sweep(cfg, {}) == 0);

    const json j = json::parse(slurp(tmp.path / "sw" / "sweep.json"));
    CHECK(j["axis"] == "n_noisy");
    REQUIRE(j["points"].size() == 2);
    for (const auto& p : j["points"]) {
        CHECK(p.contains("value"));
        CHECK(p.contains("ratio_median"));
        CHECK(p.contains("ratio_iqr"));
        CHECK(p.contains("n_seeds"));
        CHECK(p.contains("flags"));
    }
    CHECK(fs::exists(tmp.path / "sw" / "sweep.csv"));
}

TEST_CASE("cmd_plot re-renders from CSV", "[config]") {
    TempDir tmp;
    {
        MetricCsv csv(tmp.path / "m.csv");
        for (int k = 0; k <= 10; ++k) {
            csv.row(0.1 * k, "T[1]", "trace_dist", std::exp(-0.3 * k), "plain", 1);
            csv.row(0.1 * k, "T[1]", "trace_dist", std::exp(-0.6 * k), "noisy", 1);
        }
    }
    REQUIRE(cmd_plot(tmp.path / "m.csv", tmp.path / "m.svg", "trace_dist") == 0);
    const std::string svg = slurp(tmp.path / "m.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
}
