#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "lnared/balance.hpp"
#include "lnared/gramian.hpp"
#include "lnared/io.hpp"
#include "lnared/matclass.hpp"
#include "lnared/network.hpp"
#include "lnared/simulate.hpp"
#include "lnared/timescale.hpp"

namespace lnared::cli {

//==============================================================================
// Command layer: analyze / reduce / validate / sweep over a reaction-network
// model file. Identical config + seed gives byte-identical outputs; every
// file embeds the config hash and version.
//==============================================================================

struct RunConfig {
    std::string command; ///< analyze | reduce | validate | sweep
    std::string model_path;
    std::vector<std::string> preserve;          ///< preserved species (default: complement)
    std::vector<std::vector<std::string>> lump; ///< lumped groups
    std::vector<Eigen::Index> keep;             ///< kept states per group
    std::string method = "structured-bsp";
    double epsilon = 0.01;
    double horizon = 50.0;
    std::uint64_t seed = 42;
    std::string out_dir = ".";
    int workers = 1;
    bool verbose = false;
};

[[nodiscard]] inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : s) {
        if (c == sep) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

[[nodiscard]] inline std::vector<std::vector<std::string>> parse_groups(
    const std::string& s) {
    std::vector<std::vector<std::string>> out;
    for (const std::string& grp : split(s, ';')) {
        auto names = split(grp, ',');
        if (!names.empty()) out.push_back(std::move(names));
    }
    return out;
}

[[nodiscard]] inline std::vector<Eigen::Index> parse_counts(const std::string& s) {
    std::vector<Eigen::Index> out;
    for (const std::string& tok : split(s, ',')) {
        try {
            size_t used = 0;
            const long v = std::stol(tok, &used);
            if (used != tok.size() || v < 0)
                throw ConfigError("--keep: '" + tok + "' is not a nonnegative integer");
            out.push_back(static_cast<Eigen::Index>(v));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("--keep: '" + tok + "' is not a nonnegative integer");
        }
    }
    return out;
}

/// Canonical hash over the semantic configuration and the model file bytes.
/// Output location, worker count, and verbosity never change results, so they
/// stay out of the hash.
[[nodiscard]] inline std::string config_hash(const RunConfig& cfg,
                                             const std::string& model_text) {
    std::string canon = "command=" + cfg.command + ";model=" +
                        io::hex64(io::fnv1a(model_text)) + ";preserve=";
    for (const auto& s : cfg.preserve) canon += s + ",";
    canon += ";lump=";
    for (const auto& g : cfg.lump) {
        for (const auto& s : g) canon += s + ",";
        canon += "|";
    }
    canon += ";keep=";
    for (const Eigen::Index k : cfg.keep) canon += std::to_string(k) + ",";
    canon += ";method=" + cfg.method + ";epsilon=" + io::format_double(cfg.epsilon) +
             ";horizon=" + io::format_double(cfg.horizon) +
             ";seed=" + std::to_string(cfg.seed);
    return io::hex64(io::fnv1a(canon));
}

/// Index-level view of a preserved/lumped partition, with the permutation
/// that orders the state preserved-first and the matching Gramian pattern.
struct Partition {
    std::vector<Eigen::Index> preserved;
    std::vector<std::vector<Eigen::Index>> groups;
    std::vector<Eigen::Index> perm; ///< new position -> model index
    Mat perm_mat;                   ///< x_perm = perm_mat * x
    sdp::SparsityPattern pattern;   ///< diagonal preserved block + full group blocks
};

[[nodiscard]] inline Partition resolve_partition(const net::ReactionNetwork& net,
                                                 const RunConfig& cfg) {
    const Eigen::Index n = net.n_species();
    if (cfg.lump.empty()) throw ConfigError("--lump: at least one group is required");

    Partition part;
    std::vector<bool> lumped(static_cast<size_t>(n), false);
    for (const auto& grp : cfg.lump) {
        std::vector<Eigen::Index> idx;
        for (const std::string& name : grp) {
            Eigen::Index i = -1;
            try {
                i = net.species_index(name);
            } catch (const Error&) {
                throw ConfigError("--lump: unknown species '" + name + "'");
            }
            if (lumped[static_cast<size_t>(i)])
                throw ConfigError("--lump: species '" + name + "' listed twice");
            lumped[static_cast<size_t>(i)] = true;
            idx.push_back(i);
        }
        part.groups.push_back(std::move(idx));
    }

    if (cfg.preserve.empty()) {
        for (Eigen::Index i = 0; i < n; ++i)
            if (!lumped[static_cast<size_t>(i)]) part.preserved.push_back(i);
    } else {
        std::vector<bool> seen(static_cast<size_t>(n), false);
        for (const std::string& name : cfg.preserve) {
            Eigen::Index i = -1;
            try {
                i = net.species_index(name);
            } catch (const Error&) {
                throw ConfigError("--preserve: unknown species '" + name + "'");
            }
            if (lumped[static_cast<size_t>(i)] || seen[static_cast<size_t>(i)])
                throw ConfigError("--preserve: species '" + name +
                                  "' is lumped or listed twice");
            seen[static_cast<size_t>(i)] = true;
            part.preserved.push_back(i);
        }
        for (Eigen::Index i = 0; i < n; ++i)
            if (!lumped[static_cast<size_t>(i)] && !seen[static_cast<size_t>(i)])
                throw ConfigError("--preserve and --lump must partition the species; '" +
                                  net.species[static_cast<size_t>(i)] + "' is in neither");
    }

    part.perm = part.preserved;
    for (const auto& grp : part.groups) part.perm.insert(part.perm.end(), grp.begin(), grp.end());
    part.perm_mat = Mat::Zero(n, n);
    for (size_t i = 0; i < part.perm.size(); ++i)
        part.perm_mat(static_cast<Eigen::Index>(i), part.perm[i]) = 1.0;

    if (!part.preserved.empty())
        part.pattern.blocks.push_back(
            sdp::Block{static_cast<Eigen::Index>(part.preserved.size()),
                       sdp::BlockKind::diagonal});
    for (const auto& grp : part.groups)
        part.pattern.blocks.push_back(
            sdp::Block{static_cast<Eigen::Index>(grp.size()), sdp::BlockKind::full});
    return part;
}

namespace detail {

[[nodiscard]] inline Realization permute(const Realization& r, const Mat& pm) {
    Realization out;
    out.A = pm * r.A * pm.transpose();
    out.B = pm * r.B;
    out.C = r.C * pm.transpose();
    out.D = r.D;
    return out;
}

/// Rewrites the projections of a reduction computed in permuted coordinates
/// so they apply directly to model-ordered states.
inline void unpermute_projections(balance::ReductionResult& red, const Mat& pm) {
    red.projections.V = red.projections.V * pm;
    red.projections.W = pm.transpose() * red.projections.W;
    if (red.projections.V_r.size() > 0) {
        red.projections.V_r = red.projections.V_r * pm;
        red.projections.W_r = pm.transpose() * red.projections.W_r;
    }
}

[[nodiscard]] inline balance::Method method_enum(const std::string& m) {
    if (m == "structured-bt") return balance::Method::structured_bt;
    if (m == "structured-bsp") return balance::Method::structured_bsp;
    if (m == "h2") return balance::Method::h2_structured;
    throw ConfigError("--method: '" + m + "' is not a reduction method");
}

/// Structured Gramians with automatic solver-path selection: the plain
/// interior-point programme first, falling back to the certificate-seeded
/// programme when the plain solve reports trouble and a certificate exists.
[[nodiscard]] inline gramian::GramianPair auto_gramians(const Realization& r,
                                                        const sdp::SparsityPattern& pat,
                                                        bool c_only, bool verbose) {
    try {
        return gramian::structured_gramians(r, pat, c_only);
    } catch (const NoConvergence& e) {
        if (verbose) std::cerr << "[lnared] plain programme failed (" << e.what()
                               << "); trying the seeded programme\n";
    } catch (const Infeasible& e) {
        if (verbose) std::cerr << "[lnared] plain programme infeasible (" << e.what()
                               << "); trying the seeded programme\n";
    }
    try {
        return gramian::seeded_structured_gramians(r, pat, c_only);
    } catch (const CertificateUnavailable&) {
        throw CertificateUnavailable(
            "structured programme failed and the drift carries no H+ certificate");
    }
}

inline void log_gramians(const gramian::GramianPair& g, bool verbose) {
    if (!verbose) return;
    std::cerr << "[lnared] gramians: provenance=" << gramian::to_string(g.provenance)
              << " slack=" << g.slack << " outer=" << g.sdp_outer
              << " inner=" << g.sdp_inner << " kkt=" << g.sdp_kkt << "\n";
}

[[nodiscard]] inline nlohmann::json class_json(const matclass::MatrixClassReport& rep) {
    nlohmann::json j;
    j["is_metzler"] = rep.is_metzler;
    j["is_h"] = rep.is_h;
    j["is_h_plus"] = rep.is_h_plus;
    j["is_dd_row"] = rep.is_dd_row;
    j["is_scaled_dd"] = rep.is_scaled_dd;
    j["is_scaled_dd_col"] = rep.is_scaled_dd_col;
    nlohmann::json spec = nlohmann::json::array();
    for (Eigen::Index i = 0; i < rep.companion_spectrum.size(); ++i)
        spec.push_back({rep.companion_spectrum(i).real(), rep.companion_spectrum(i).imag()});
    j["companion_spectrum"] = spec;
    return j;
}

[[nodiscard]] inline std::string out_path(const RunConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.out_dir);
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

/// Shared preamble: model text, parsed network, steady state, linearization.
struct Loaded {
    std::string model_text;
    net::ReactionNetwork network;
    std::string hash;
    Vec x_ss;
    Realization lin;
};

[[nodiscard]] inline Loaded load(const RunConfig& cfg) {
    Loaded l;
    l.model_text = io::read_file(cfg.model_path);
    l.network = net::parse_network(l.model_text);
    l.hash = config_hash(cfg, l.model_text);
    l.x_ss = net::steady_state(l.network, l.network.initial_state);
    l.lin = net::linearize(l.network, l.x_ss);
    return l;
}

inline void write_analysis(const RunConfig& cfg, const Loaded& l) {
    nlohmann::json j;
    j["species"] = l.network.species;
    j["steady_state"] = io::to_json(l.x_ss);
    j["drift"] = io::to_json(l.lin.A);
    j["drift_class"] = class_json(matclass::classify(l.lin.A));
    j["minus_drift_class"] = class_json(matclass::classify(Mat(-l.lin.A)));
    try {
        const auto cert = matclass::diagonal_certificate(l.lin.A);
        j["certificate_available"] = true;
        j["certificate"] = io::to_json(cert.x);
    } catch (const Error&) {
        j["certificate_available"] = false;
        j["certificate"] = nullptr;
    }
    io::atomic_write(out_path(cfg, "analysis.json"), io::dump_stamped(j, l.hash));
}

/// Builds the configured reduction in model coordinates (projections included).
[[nodiscard]] inline balance::ReductionResult build_reduction(const RunConfig& cfg,
                                                              const Loaded& l,
                                                              const Partition& part) {
    const Realization rp = permute(l.lin, part.perm_mat);
    const Eigen::Index k = static_cast<Eigen::Index>(part.preserved.size());
    if (cfg.keep.size() != part.groups.size())
        throw ConfigError("--keep: need one count per lumped group");
    for (size_t i = 0; i < part.groups.size(); ++i)
        if (cfg.keep[i] > static_cast<Eigen::Index>(part.groups[i].size()))
            throw ConfigError("--keep: count exceeds group size");

    const balance::Method method = method_enum(cfg.method);
    const bool c_only = method == balance::Method::h2_structured;
    const auto g = auto_gramians(rp, part.pattern, c_only, cfg.verbose);
    log_gramians(g, cfg.verbose);
    auto red = balance::reduce_structured(rp, g, k, cfg.keep, method);
    unpermute_projections(red, part.perm_mat);
    return red;
}

/// Averaged model with the lumped species treated as the fast set.
[[nodiscard]] inline timescale::AveragedModel build_averaged(const RunConfig& cfg,
                                                             const Loaded& l,
                                                             const Partition& part) {
    std::vector<Eigen::Index> fast;
    for (const auto& grp : part.groups) fast.insert(fast.end(), grp.begin(), grp.end());
    const auto p = timescale::partition(net::lna_model(l.network), fast, cfg.epsilon);
    return timescale::average(p);
}

inline void run_reduce(const RunConfig& cfg, const Loaded& l, const Partition& part) {
    if (cfg.method == "timescale") {
        const auto avg = build_averaged(cfg, l, part);
        const Vec z_ss = timescale::detail::select(l.x_ss, avg.slow_indices());
        const auto ev = avg.eval(z_ss);
        nlohmann::json j;
        j["method"] = "timescale";
        j["gramian_provenance"] = "equation";
        j["A"] = io::to_json(ev.a_r);
        j["B"] = io::to_json(ev.b_r);
        j["C"] = io::to_json(Mat(l.lin.C * ev.phi));
        j["D"] = io::to_json(Mat(Mat::Zero(l.lin.C.rows(), ev.b_r.cols())));
        j["sigma"] = nlohmann::json::array();
        j["hankel_tail"] = nullptr;
        nlohmann::json kept = nlohmann::json::array();
        for (const Eigen::Index i : avg.slow_indices()) kept.push_back(i);
        j["kept"] = kept;
        io::atomic_write(out_path(cfg, "reduction_timescale.json"),
                         io::dump_stamped(j, l.hash));
        return;
    }
    const auto red = build_reduction(cfg, l, part);
    nlohmann::json j = io::reduction_json(red);
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& grp : cfg.lump) groups.push_back(grp);
    j["preserved_species"] = [&] {
        nlohmann::json names = nlohmann::json::array();
        for (const Eigen::Index i : part.preserved)
            names.push_back(l.network.species[static_cast<size_t>(i)]);
        return names;
    }();
    j["lumped_groups"] = groups;
    io::atomic_write(out_path(cfg, "reduction_" + cfg.method + ".json"),
                     io::dump_stamped(j, l.hash));
    io::atomic_write(out_path(cfg, "sigma.csv"), io::sigma_csv(red.sigma, l.hash));
}

inline void run_validate(const RunConfig& cfg, const Loaded& l, const Partition& part) {
    const auto full = net::lna_model(l.network);
    sim::ErrorReport rep;
    if (cfg.method == "timescale") {
        const auto avg = build_averaged(cfg, l, part);
        rep = sim::compare_models(full, avg, cfg.horizon);
    } else {
        const auto red = build_reduction(cfg, l, part);
        rep = sim::compare_models(full, red, cfg.horizon);
    }
    std::vector<io::ValidateRow> rows{{cfg.method, rep.l1, rep.l2, rep.linf}};
    io::atomic_write(out_path(cfg, "validate_table.csv"),
                     io::validate_table_csv(rows, l.hash));
    const Eigen::Index p = l.lin.C.rows();
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = i; j < p; ++j)
            io::atomic_write(out_path(cfg, "cov_error_" + std::to_string(i + 1) + "_" +
                                               std::to_string(j + 1) + ".csv"),
                             io::cov_error_csv(rep, i, j, l.hash));

    // Demonstration sample-path statistics of the fluctuation model at x_ss.
    const Mat a = l.lin.A;
    const Mat b = l.lin.B;
    const auto em = sim::euler_maruyama([a](double) { return a; }, [b](double) { return b; },
                                        full.x0 - l.x_ss, cfg.horizon / 2000.0, 2000, 20,
                                        256, cfg.seed, cfg.workers);
    io::atomic_write(out_path(cfg, "trajectory_em.csv"), io::trajectory_csv(em, l.hash));
}

inline void run_sweep(const RunConfig& cfg, const Loaded& l, const Partition& part) {
    std::vector<Eigen::Index> fast;
    for (const auto& grp : part.groups) fast.insert(fast.end(), grp.begin(), grp.end());
    const auto p = timescale::partition(net::lna_model(l.network), fast, cfg.epsilon);
    const std::vector<double> ladder{10.0, 3.0, 1.0, 0.3, 0.1};
    std::vector<double> eps_list;
    for (const double f : ladder) eps_list.push_back(cfg.epsilon * f);
    const auto sw = timescale::epsilon_sweep(p, eps_list, cfg.horizon);
    io::atomic_write(out_path(cfg, "sweep.csv"), io::sweep_csv(sw, l.hash));
    io::atomic_write(out_path(cfg, "sweep_slopes.json"),
                     io::dump_stamped(io::sweep_json(sw), l.hash));
}

} // namespace detail

/// Executes one command. Throws on every failure; the binary maps exception
/// types to exit codes (1 config, 2 model, 3 infeasible, 4 tie).
inline void run(const RunConfig& cfg) {
    if (!(cfg.epsilon > 0.0)) throw ConfigError("--epsilon must be positive");
    if (!(cfg.horizon > 0.0)) throw ConfigError("--horizon must be positive");
    if (cfg.workers < 1) throw ConfigError("--workers must be at least 1");
    const bool known = cfg.method == "structured-bt" || cfg.method == "structured-bsp" ||
                       cfg.method == "h2" || cfg.method == "timescale";
    if (!known) throw ConfigError("--method: unknown method '" + cfg.method + "'");

    const auto l = detail::load(cfg);
    detail::write_analysis(cfg, l);
    if (cfg.command == "analyze") return;

    const Partition part = resolve_partition(l.network, cfg);
    if (cfg.command == "reduce")
        detail::run_reduce(cfg, l, part);
    else if (cfg.command == "validate")
        detail::run_validate(cfg, l, part);
    else if (cfg.command == "sweep")
        detail::run_sweep(cfg, l, part);
    else
        throw ConfigError("unknown command '" + cfg.command + "'");
}

} // namespace lnared::cli
