// sspod: command-line driver for the stochastic POD workflow.
//
//   sspod run     --config cfg.json [--seed S] [--out DIR] [--threads T] [--count N] [--verbose]
//   sspod train | sample | predict | report   (same flags; each stage reads the previous one's artifacts)
//
// Exit codes: 0 success, 2 config/usage error, 3 missing or stale artifact,
// 4 numerical failure, 1 anything else (I/O).

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "sspod/sspod.hpp"

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> count;
    unsigned threads = 0;
    bool verbose = false;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "Run configuration (JSON)")->required();
    cmd->add_option("--seed", f.seed, "Override the master seed");
    cmd->add_option("--out", f.out, "Output directory (overrides output.directory)");
    cmd->add_option("--threads", f.threads, "Worker threads (0: all cores); results do not depend on it");
    cmd->add_option("--count", f.count, "Override ensemble.count");
    cmd->add_flag("--verbose,-v", f.verbose, "Progress on stderr");
}

int fail(const sspod::StageContext* ctx, const std::string& stage, const std::string& what, int code) {
    std::cerr << "sspod " << stage << ": " << what << '\n';
    if (ctx != nullptr) {
        try {
            sspod::write_error_report(*ctx, stage, what, code);
        } catch (const std::exception& e) {
            std::cerr << "sspod: could not record the error report: " << e.what() << '\n';
        }
    }
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic POD: random reduced-order bases, trained concentration, SROM prediction intervals"};
    app.set_version_flag("--version", SSPOD_VERSION);
    app.require_subcommand(1);
    Flags flags;
    const char* names[] = {"run", "train", "sample", "predict", "report"};
    const char* help[] = {"All stages: snapshots, POD, training, sampling, prediction, report",
                          "Snapshots, POD, ROM and beta training", "Draw ensemble subspaces for the trained beta(s)",
                          "SROM realizations and prediction-interval summaries", "Coverage and sharpness report"};
    for (int i = 0; i < 5; ++i) add_common(app.add_subcommand(names[i], help[i]), flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    const std::string stage = app.get_subcommands().front()->get_name();
    if (flags.count && *flags.count < 2) {
        return fail(nullptr, stage, "--count must be >= 2 (an ensemble needs at least two realizations)", 2);
    }

    sspod::StageContext ctx;
    try {
        ctx.config = sspod::load_config(flags.config);
        if (flags.seed) ctx.config.seed = *flags.seed;
        if (flags.count) ctx.config.ensemble.count = *flags.count;
        if (flags.out) ctx.config.output_directory = *flags.out;
    } catch (const sspod::ConfigError& e) {
        return fail(nullptr, stage, std::string("config error: ") + e.what(), 2);
    }
    ctx.out = ctx.config.output_directory;
    ctx.threads = flags.threads != 0 ? flags.threads : std::max(1u, std::thread::hardware_concurrency());
    ctx.verbose = flags.verbose;

    try {
        if (stage == "run") {
            const auto rep = sspod::cmd_run(ctx);
            std::cout << "beta* = " << rep.at("beta_star") << ", coverage = " << rep.at("coverage")
                      << ", mean PI width = " << rep.at("mean_pi_width") << '\n';
        } else if (stage == "train") {
            sspod::stage_train(ctx);
        } else if (stage == "sample") {
            sspod::stage_sample(ctx);
        } else if (stage == "predict") {
            sspod::stage_predict(ctx);
        } else {
            const auto rep = sspod::stage_report(ctx);
            std::cout << "beta* = " << rep.at("beta_star") << ", coverage = " << rep.at("coverage")
                      << ", mean PI width = " << rep.at("mean_pi_width") << '\n';
        }
    } catch (const sspod::ConfigError& e) {
        return fail(&ctx, stage, std::string("config error: ") + e.what(), 2);
    } catch (const sspod::ArtifactError& e) {
        return fail(&ctx, stage, e.what(), 3);
    } catch (const sspod::Error& e) {
        return fail(&ctx, stage, std::string("numerical failure: ") + e.what(), 4);
    } catch (const std::exception& e) {
        return fail(&ctx, stage, e.what(), 1);
    }
    return 0;
}
