#include <CLI11.hpp>
#include <iostream>

#include "icelab/harness.hpp"

namespace {

using namespace icelab;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> paths;
    std::optional<unsigned> workers;
    bool quick = false;
};

void add_flags(CLI::App* cmd, Flags& f, bool needs_config) {
    auto* c = cmd->add_option("--config", f.config, "experiment config (TOML)");
    if (needs_config) c->required();
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--paths", f.paths, "paths per environment");
    cmd->add_option("--workers", f.workers, "worker threads, 0 = all cores");
    cmd->add_flag("--quick", f.quick, "reduced sizes");
}

ExperimentConfig configure(const Flags& f, const std::string& kind) {
    ExperimentConfig cfg = load_config(f.config);
    if (cfg.kind != kind) {
        std::cerr << "note: config kind '" << cfg.kind << "' run as " << kind << '\n';
        cfg.kind = kind;
    }
    if (f.seed) {
        cfg.seed = *f.seed;
        cfg.model.seed = *f.seed;
    }
    if (!f.out.empty()) cfg.output_dir = f.out;
    if (f.paths) {
        cfg.paths_per_env = *f.paths;
        if (cfg.dirichlet) cfg.dirichlet->paths = *f.paths;
    }
    if (f.workers) cfg.workers = *f.workers;
    if (f.quick) apply_quick(cfg);
    cfg.validate();
    return cfg;
}

void print(const ExperimentResult& r) {
    for (const auto& s : r.stats) {
        std::cout << s.metric << " n=" << s.n << " env=" << s.env << " value=" << format_number(s.value);
        if (s.stderr_ != 0.0) std::cout << " stderr=" << format_number(s.stderr_);
        std::cout << '\n';
    }
    if (!r.convergence_asserted) std::cout << "convergence not asserted for this configuration\n";
    std::cout << "elapsed " << r.seconds << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Crushed-ice experiments: obstacles, killed diffusions and their limits"};
    app.require_subcommand(1);
    Flags flags;
    const std::vector<std::pair<std::string, std::string>> experiments{
        {"crushed-ice", "hitting times of many small balls against the limit clock"},
        {"schrodinger", "soft obstacles against hard ones"},
        {"dirichlet", "Dirichlet solutions with obstacles against the relaxed problem"}};
    for (const auto& [name, help] : experiments) add_flags(app.add_subcommand(name, help), flags, true);
    auto* cap = app.add_subcommand("capacity", "ball capacities, Green kernel, hitting bound, energy identity");
    add_flags(cap, flags, false);
    auto* self = app.add_subcommand("selftest", "fast checks with exact answers");
    add_flags(self, flags, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (self->parsed()) {
            const ExperimentResult r = run_selftest(flags.quick, flags.seed.value_or(1), flags.workers.value_or(0));
            for (const auto& s : r.stats) {
                if (s.value != 1.0) return 1;
            }
            return 0;
        }
        if (cap->parsed()) {
            CapacityOptions o;
            if (flags.paths) o.paths = *flags.paths;
            if (flags.seed) o.seed = *flags.seed;
            if (flags.workers) o.workers = *flags.workers;
            o.output_dir = flags.out;
            if (flags.quick) {
                o.paths = std::min<std::size_t>(o.paths, 5000);
                o.hitting_configs = 5;
                o.hitting_paths = 2000;
                o.energy_pairs = 20000;
            }
            print(run_capacity(o));
            return 0;
        }
        for (const auto& [name, help] : experiments) {
            if (!app.get_subcommand(name)->parsed()) continue;
            print(run_experiment(configure(flags, name)));
            return 0;
        }
    } catch (const HypothesisViolation& e) {
        std::cerr << "hypothesis violated: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
