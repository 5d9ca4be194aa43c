#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lnared/cli.hpp"
#include "lnared/version.hpp"

namespace {

struct RawArgs {
    std::string preserve;
    std::string lump;
    std::string keep;
};

void add_common(CLI::App* sub, lnared::cli::RunConfig& cfg, RawArgs& raw) {
    sub->add_option("--model", cfg.model_path, "model JSON file")->required();
    sub->add_option("--preserve", raw.preserve,
                    "comma-separated preserved species (default: complement of --lump)");
    sub->add_option("--lump", raw.lump, "lumped groups, ';'-separated, e.g. \"a,b;c,d\"");
    sub->add_option("--keep", raw.keep, "kept states per group, e.g. \"1,2\"");
    sub->add_option("--method", cfg.method,
                    "structured-bt | structured-bsp | h2 | timescale");
    sub->add_option("--epsilon", cfg.epsilon, "time-scale separation parameter");
    sub->add_option("--horizon", cfg.horizon, "comparison horizon");
    sub->add_option("--seed", cfg.seed, "base RNG seed");
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--workers", cfg.workers, "worker threads for sample paths");
    sub->add_flag("--verbose", cfg.verbose, "log solver diagnostics to stderr");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("lnared ") + lnared::kVersion +
                 ": structured reduction of linear noise approximations"};
    app.require_subcommand(1);

    lnared::cli::RunConfig cfg;
    RawArgs raw;
    for (const char* name : {"analyze", "reduce", "validate", "sweep"}) {
        CLI::App* sub = app.add_subcommand(name);
        add_common(sub, cfg, raw);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "lnared: " << e.what() << "\n";
        return 1;
    }

    cfg.command = app.get_subcommands().front()->get_name();
    try {
        cfg.preserve = lnared::cli::split(raw.preserve, ',');
        cfg.lump = lnared::cli::parse_groups(raw.lump);
        cfg.keep = lnared::cli::parse_counts(raw.keep);
        lnared::cli::run(cfg);
        return 0;
    } catch (const lnared::ConfigError& e) {
        std::cerr << "lnared: config error: " << e.what() << "\n";
        return 1;
    } catch (const lnared::HankelTie& e) {
        std::cerr << "lnared: Hankel tie at the truncation boundary: " << e.what() << "\n";
        return 4;
    } catch (const lnared::Infeasible& e) {
        std::cerr << "lnared: infeasible: " << e.what() << "\n";
        return 3;
    } catch (const lnared::CertificateUnavailable& e) {
        std::cerr << "lnared: infeasible: " << e.what() << "\n";
        return 3;
    } catch (const lnared::Error& e) {
        std::cerr << "lnared: model error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "lnared: error: " << e.what() << "\n";
        return 2;
    }
}
