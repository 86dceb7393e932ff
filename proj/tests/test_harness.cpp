#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "icelab/harness.hpp"

using namespace icelab;
namespace fs = std::filesystem;

namespace {

const std::string kSmall = R"(
name = "small"
kind = "crushed-ice"
seed = 42

[model]
dim = 3
kappa = [20, 80]
radius = "capacity_balanced"
c = 2.0

[model.centers]
law = "uniform"
lower = [0.0, 0.0, 0.0]
upper = [1.0, 1.0, 1.0]

[diffusion]
scheme = "sphere"
dt = 1e-3
t_max = 2.0

[start]
law = "uniform"
lower = [0.0, 0.0, 0.0]
upper = [1.0, 1.0, 1.0]

[limit]
kind = "box"
c = 2.0
lower = [0.0, 0.0, 0.0]
upper = [1.0, 1.0, 1.0]

[sweep]
n_list = [1, 2]
env_reps = 2
paths_per_env = 800
write_times = true

[energy]
pairs = 5000
)";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string replace(std::string text, const std::string& from, const std::string& to) {
    const auto at = text.find(from);
    REQUIRE(at != std::string::npos);
    text.replace(at, from.size(), to);
    return text;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("icelab_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("shipped configs parse and validate") {
    for (const char* name : {"std3d", "gradient", "schrodinger", "dirichlet", "pointmass"}) {
        const ExperimentConfig c = load_config(std::string(ICELAB_SOURCE_DIR) + "/configs/" + name + ".toml");
        CHECK(c.name == name);
        CHECK_NOTHROW(c.validate());
        CHECK(c.seed == 20240611);
    }
    const ExperimentConfig std3d = load_config(std::string(ICELAB_SOURCE_DIR) + "/configs/std3d.toml");
    CHECK(std3d.n_list == std::vector<int>{1, 2, 3, 4});
    CHECK(std3d.model.kappa_at(4) == 8000);
    CHECK(std3d.paths_per_env == 100000);
    CHECK(std3d.env_reps == 3);
    CHECK(std3d.diffusion.t_max == 4.0);
    CHECK(std3d.limit.has_value());
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_config("kind = "), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(replace(kSmall, "crushed-ice", "melted-ice")), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(replace(kSmall, "n_list = [1, 2]", "n_list = [2, 1]")), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(replace(kSmall, "n_list = [1, 2]", "n_list = []")), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(replace(kSmall, "scheme = \"sphere\"", "scheme = \"leapfrog\"")), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(replace(kSmall, "kind = \"crushed-ice\"", "kind = \"dirichlet\"")), std::invalid_argument);
    CHECK_THROWS_AS(load_config("/nonexistent/config.toml"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(replace(kSmall, "t_max = 2.0", "tmax = 2.0")), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(replace(kSmall, "[limit]\nkind", "[limit]\nprofile_offset = 1.0\nkind")), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(replace(kSmall, "seed = 42", "seed = 42\nwokers = 2")), std::invalid_argument);
}

TEST_CASE("quick mode caps the work") {
    ExperimentConfig c = load_config(std::string(ICELAB_SOURCE_DIR) + "/configs/dirichlet.toml");
    apply_quick(c);
    CHECK(c.paths_per_env <= 2000);
    CHECK(c.env_reps <= 2);
    CHECK(c.energy_pairs <= 20000);
    CHECK(c.dirichlet->paths <= 1000);
    CHECK(c.dirichlet->fd_m == 17);
}

TEST_CASE("numbers round trip") {
    for (double v : {0.1, 1.0 / 3.0, 2.5e-17, 12345.678, -0.0}) {
        const std::string s = format_number(v);
        double back = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        CHECK(back == v);
    }
}

TEST_CASE("seeded runs write byte-identical files") {
    ExperimentConfig c = parse_config(kSmall);
    const fs::path a = scratch("det_a");
    const fs::path b = scratch("det_b");
    c.output_dir = a.string();
    const ExperimentResult ra = run_experiment(c);
    c.output_dir = b.string();
    c.workers = 3;
    run_experiment(c);
    for (const char* f : {"stats.csv", "times.csv", "summary.json"}) {
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(fs::exists(a / "timings.json"));
    REQUIRE(ra.find(2, -1, "ks") != nullptr);
    CHECK(ra.find(0, -1, "killed_fraction") != nullptr);
    CHECK(ra.series("ks").size() == 2);
    CHECK(ra.convergence_asserted);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("a seed change moves the results") {
    ExperimentConfig c = parse_config(kSmall);
    c.n_list = {1};
    c.env_reps = 1;
    c.evenness = false;
    const double ks1 = run_experiment(c).find(1, 0, "ks")->value;
    c.seed = 43;
    const double ks2 = run_experiment(c).find(1, 0, "ks")->value;
    CHECK(ks1 != ks2);
}

TEST_CASE("unbounded capacity scaling aborts") {
    std::string text = replace(kSmall, "radius = \"capacity_balanced\"\nc = 2.0", "radius = \"table\"\nradii = [0.02, 0.02]");
    text = replace(text, "kappa = [20, 80]", "kappa = [20, 2000]");
    CHECK_THROWS_AS(run_experiment(parse_config(text)), HypothesisViolation);
}

TEST_CASE("a mismatched limit is replaced by the model density") {
    ExperimentConfig c = parse_config(replace(kSmall, "kind = \"box\"\nc = 2.0", "kind = \"box\"\nc = 5.0"));
    c.n_list = {1};
    c.env_reps = 1;
    c.evenness = false;
    const ExperimentResult r = run_experiment(c);
    CHECK_FALSE(r.warnings.empty());
    // the limit uses c = 2: kill fraction well below the c = 5 value
    ExperimentConfig forced = c;
    forced.limit->override_model = true;
    const ExperimentResult rf = run_experiment(forced);
    CHECK(rf.find(0, -1, "killed_fraction")->value > r.find(0, -1, "killed_fraction")->value + 0.05);
}

TEST_CASE("small dirichlet run") {
    ExperimentConfig c = load_config(std::string(ICELAB_SOURCE_DIR) + "/configs/dirichlet.toml");
    apply_quick(c);
    c.n_list = {1, 2};
    c.env_reps = 1;
    c.dirichlet->points.resize(2);
    c.dirichlet->paths = 500;
    c.dirichlet->limit_paths = 1000;
    const fs::path out = scratch("dirichlet");
    c.output_dir = out.string();
    const ExperimentResult r = run_experiment(c);
    CHECK(r.solutions.size() == 4);
    CHECK(r.find(0, -1, "fd_agrees") != nullptr);
    CHECK(fs::exists(out / "solutions.csv"));
    for (const auto& s : r.solutions) {
        CHECK(s.u_n >= 0.0);
        CHECK(s.u_n <= 1.0);
    }
    fs::remove_all(out);
}

TEST_CASE("quick selftest passes") {
    const ExperimentResult r = run_selftest(true, 3, 1);
    CHECK(r.stats.size() >= 10);
    for (const auto& row : r.stats) CHECK_MESSAGE(row.value == 1.0, row.metric);
}

}
