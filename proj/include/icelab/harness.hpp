#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "icelab/geometry.hpp"
#include "icelab/model.hpp"
#include "icelab/paths.hpp"
#include "icelab/rates.hpp"

namespace icelab {

std::string git_hash();

/// Raised when the model leaves the capacity-balanced regime; the CLI maps it to exit code 2.
class HypothesisViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A rate density given in the config: c * (offset + slope . x) on a box, or c everywhere.
struct LimitSpec {
    enum class Kind { box, constant };
    Kind kind = Kind::box;
    double c = 0.0;
    Box box;
    double offset = 1.0;
    Point slope{0.0, 0.0, 0.0};
    /// Use this density even when the model provides one.
    bool override_model = false;

    RatePtr rate(std::string id = "limit") const;
};

struct SchrodingerSpec {
    double c_r2 = 100.0;             ///< c_n r_n^2, held along n_list
    double kappa_shrink = 0.9;       ///< radius factor of the outer comparator
    std::optional<double> negative_c_r2 = 0.1;
    std::vector<double> quantiles{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
};

struct DirichletSpec {
    Box domain;
    double alpha = 1.0;
    double f = 1.0;
    double phi = 0.0;
    std::vector<Point> points;
    int fd_m = 33;
    std::size_t paths = 10000;
    std::size_t limit_paths = 0;  ///< 0: same as paths
    double gap_tolerance = 0.02;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::string kind = "crushed-ice";  ///< crushed-ice, schrodinger or dirichlet
    RandomCenterModel model;
    DiffusionSpec diffusion;
    Domain domain = Domain::full_space(3);
    StartLaw start;
    std::optional<LimitSpec> limit;
    std::vector<int> n_list;
    int env_reps = 3;
    std::size_t paths_per_env = 100000;
    std::size_t limit_paths = 0;  ///< 0: max over the sweep of the path counts
    std::vector<double> lambdas{0.5, 1.0, 2.0};
    double t0 = 0.25;
    double alpha = 1.0;  ///< killing rate of the energy kernel
    std::size_t energy_pairs = 200000;
    bool evenness = true;
    bool write_times = true;
    SchrodingerSpec schrodinger;
    std::optional<DirichletSpec> dirichlet;
    std::string output_dir;
    std::uint64_t seed = 1;
    unsigned workers = 0;
    std::string source;  ///< the TOML text, echoed into summary.json

    void validate() const;
};

ExperimentConfig parse_config(const std::string& toml_text);
ExperimentConfig load_config(const std::string& path);
/// Path counts, pair counts and grids cut down for smoke runs.
void apply_quick(ExperimentConfig& config);

struct StatRow {
    int n = 0;    ///< 0 for rows about the limit
    int env = 0;  ///< -1 for rows aggregated over environments
    std::string metric;
    double value = 0.0;
    double stderr_ = 0.0;
};

struct SolutionRow {
    int n = 0;
    int env = 0;
    int point = 0;
    double u_n = 0.0;
    double stderr_n = 0.0;
    double u_limit = 0.0;
    double stderr_limit = 0.0;
    double u_fd = 0.0;
};

struct ExperimentResult {
    std::string kind;
    std::vector<StatRow> stats;
    std::vector<SolutionRow> solutions;
    std::vector<std::string> warnings;
    /// False for negative controls where the theory does not apply.
    bool convergence_asserted = true;
    bool evenness_violated = false;
    double seconds = 0.0;

    const StatRow* find(int n, int env, const std::string& metric) const;
    /// Rows of one metric in n order, for a fixed env.
    std::vector<StatRow> series(const std::string& metric, int env = -1) const;
};

/// tau_n ^ T_max ensembles per (n, environment) against the exponential-clock
/// ensemble of the limit rate: KS, rho, Laplace gaps, energy diagnostics.
ExperimentResult run_crushed_ice(const ExperimentConfig& config);
/// Soft obstacles of height c_n = c_r2 / r_n^2 against the hard obstacles,
/// the shrunk hard obstacles and the limit clock.
ExperimentResult run_schrodinger(const ExperimentConfig& config);
/// u_n per (n, environment), the relaxed solution by MC, and the FD reference.
ExperimentResult run_dirichlet(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config);

struct CapacityOptions {
    std::vector<double> radii{0.05, 0.1, 0.5};
    std::size_t paths = 100000;
    int hitting_configs = 20;
    std::size_t hitting_paths = 20000;
    std::size_t energy_pairs = 200000;
    long identity_kappa = 1000;
    std::uint64_t seed = 1;
    unsigned workers = 0;
    std::string output_dir;
};

/// Ball capacities by MC against 4 pi r, the Green kernel against a
/// quadrature of the heat kernel, the hitting bound on random ball
/// configurations and the iid energy identity.
ExperimentResult run_capacity(const CapacityOptions& options);

/// Fast checks with exact answers; a row per check with value 1 (pass) or 0.
ExperimentResult run_selftest(bool quick, std::uint64_t seed = 1, unsigned workers = 0);

/// int_0^inf e^{-alpha t} p_t(r) dt for the heat kernel of Delta, by
/// trapezoidal quadrature in log t.
double green_kernel_quadrature(int dim, double alpha, double r);

/// Writes stats.csv, summary.json and, where present, times.csv / solutions.csv.
void write_result(const ExperimentConfig& config, const ExperimentResult& result);

/// Shortest round-trip decimal form, used for every number the harness writes.
std::string format_number(double v);

}  // namespace icelab
