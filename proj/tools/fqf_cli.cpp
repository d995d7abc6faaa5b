#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fqf/error.hpp"
#include "fqf/harness/config.hpp"
#include "fqf/harness/csv.hpp"
#include "fqf/harness/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalidConfig = 1;
constexpr int kExitNumerical = 2;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config, "experiment config file (JSON)")->required();
    cmd->add_option("--seed", flags.seed, "run this single seed instead of the configured list");
    cmd->add_option("--out", flags.out, "output directory (overrides output_dir)");
    cmd->add_flag("--quiet", flags.quiet, "no progress output");
}

int run(fqf::harness::ExperimentKind expected, const CommonFlags& flags) {
    using namespace fqf::harness;
    auto cfg = load_config(flags.config);
    if (cfg.kind != expected)
        throw fqf::InvalidArgument("config " + flags.config + " is a '" + to_string(cfg.kind) + "' experiment, not '" +
                                   to_string(expected) + "'");
    if (flags.seed) cfg.seeds = {*flags.seed};
    if (flags.out) cfg.output_dir = *flags.out;
    const RunOptions opts{flags.quiet};

    if (cfg.kind == ExperimentKind::Sweep) {
        run_sweep(cfg, opts);
        if (!flags.quiet) std::cout << results_path(cfg) << '\n';
        return kExitOk;
    }
    CsvWriter out(results_path(cfg));
    int code = kExitOk;
    switch (cfg.kind) {
    case ExperimentKind::Approx: run_approx_benchmark(cfg, out, opts); break;
    case ExperimentKind::Optimize: run_optimize(cfg, out, opts); break;
    case ExperimentKind::Train: run_train(cfg, out, opts); break;
    case ExperimentKind::Gradcheck:
        if (!run_gradcheck(cfg, out, opts)) {
            std::cerr << "gradcheck: relative error at or above " << fqf::gradcheck::kTolerance << " (see "
                      << out.path() << ")\n";
            code = kExitNumerical;
        }
        break;
    case ExperimentKind::Sweep: break;
    }
    if (!flags.quiet) std::cout << out.path() << '\n';
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fraction and quantile approximation experiments"};
    app.require_subcommand(1);
    CommonFlags flags;
    const std::pair<const char*, fqf::harness::ExperimentKind> commands[] = {
        {"approx", fqf::harness::ExperimentKind::Approx},
        {"gradcheck", fqf::harness::ExperimentKind::Gradcheck},
        {"optimize", fqf::harness::ExperimentKind::Optimize},
        {"train", fqf::harness::ExperimentKind::Train},
        {"sweep", fqf::harness::ExperimentKind::Sweep},
    };
    const char* descriptions[] = {"W1 of optimized, equally spaced and random fractions",
                                  "finite-difference audits of the fraction and network gradients",
                                  "fraction optimization traces", "train an agent on a toy MDP",
                                  "run a train or approx grid on a worker pool"};
    for (std::size_t i = 0; i < std::size(commands); ++i) add_common(app.add_subcommand(commands[i].first, descriptions[i]), flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitInvalidConfig;
    }
    for (const auto& [name, kind] : commands) {
        if (!app.got_subcommand(name)) continue;
        try {
            return run(kind, flags);
        } catch (const fqf::InvalidArgument& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitInvalidConfig;
        } catch (const fqf::NumericalError& e) {
            std::cerr << "numerical failure: " << e.what() << '\n';
            return kExitNumerical;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitInvalidConfig;
        }
    }
    return kExitInvalidConfig;
}
