#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lnared/balance.hpp"
#include "lnared/simulate.hpp"
#include "lnared/timescale.hpp"
#include "lnared/types.hpp"
#include "lnared/version.hpp"

namespace lnared::io {

//==============================================================================
// Deterministic serialization
//
// Every emitted file embeds the artifact version and the run's config hash:
// JSON as top-level fields, CSV as a leading comment line. Doubles print with
// %.17g (exact round trip), and files are written atomically (temp + rename)
// so partial outputs never appear under the final name.
//==============================================================================

/// Round-trip decimal form of a double.
[[nodiscard]] inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// FNV-1a 64-bit over the bytes of a string.
[[nodiscard]] inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

[[nodiscard]] inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Writes content under a temporary name in the target directory, then
/// renames over the final path.
inline void atomic_write(const std::string& path, const std::string& content) {
    const std::filesystem::path target(path);
    const std::filesystem::path tmp = target.parent_path().empty()
                                          ? std::filesystem::path(target.string() + ".tmp")
                                          : target.parent_path() /
                                                (target.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("io: cannot open '" + tmp.string() + "' for writing");
        out << content;
        if (!out) throw ConfigError("io: short write to '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, target);
}

[[nodiscard]] inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("io: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Leading comment line carried by every CSV output.
[[nodiscard]] inline std::string csv_stamp(const std::string& config_hash) {
    return std::string("# lnared ") + kVersion + " config " + config_hash + "\n";
}

[[nodiscard]] inline nlohmann::json to_json(const Vec& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

[[nodiscard]] inline nlohmann::json to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

/// Stamps version and config hash and dumps with a stable key order
/// (nlohmann::json keeps keys sorted) and trailing newline.
[[nodiscard]] inline std::string dump_stamped(nlohmann::json j,
                                              const std::string& config_hash) {
    j["version"] = kVersion;
    j["config_hash"] = config_hash;
    return j.dump(2) + "\n";
}

[[nodiscard]] inline nlohmann::json reduction_json(const balance::ReductionResult& red) {
    nlohmann::json j;
    j["method"] = balance::to_string(red.method);
    j["gramian_provenance"] = gramian::to_string(red.gramian_provenance);
    j["A"] = to_json(red.reduced.A);
    j["B"] = to_json(red.reduced.B);
    j["C"] = to_json(red.reduced.C);
    j["D"] = to_json(red.reduced.D);
    j["sigma"] = to_json(red.sigma);
    j["hankel_tail"] =
        red.has_bound() ? nlohmann::json(red.hankel_tail) : nlohmann::json(nullptr);
    nlohmann::json kept = nlohmann::json::array();
    for (const Eigen::Index i : red.kept) kept.push_back(i);
    j["kept"] = kept;
    return j;
}

[[nodiscard]] inline std::string sigma_csv(const Vec& sigma,
                                           const std::string& config_hash) {
    std::string out = csv_stamp(config_hash) + "index,sigma\n";
    for (Eigen::Index i = 0; i < sigma.size(); ++i)
        out += std::to_string(i) + "," + format_double(sigma(i)) + "\n";
    return out;
}

/// Trajectory rows `t,mean_1..mean_p,cov_11,cov_12,...` (upper triangle,
/// row-major).
[[nodiscard]] inline std::string trajectory_csv(const sim::TrajectoryBundle& b,
                                                const std::string& config_hash) {
    if (b.mean.empty()) throw DimensionMismatch("trajectory_csv: empty bundle");
    const Eigen::Index p = b.mean.front().size();
    std::string out = csv_stamp(config_hash) + "t";
    for (Eigen::Index i = 0; i < p; ++i) out += ",mean_" + std::to_string(i + 1);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = i; j < p; ++j)
            out += ",cov_" + std::to_string(i + 1) + std::to_string(j + 1);
    out += "\n";
    for (size_t s = 0; s < b.time_grid.size(); ++s) {
        out += format_double(b.time_grid[s]);
        for (Eigen::Index i = 0; i < p; ++i) out += "," + format_double(b.mean[s](i));
        for (Eigen::Index i = 0; i < p; ++i)
            for (Eigen::Index j = i; j < p; ++j)
                out += "," + format_double(b.covariance[s](i, j));
        out += "\n";
    }
    return out;
}

[[nodiscard]] inline std::string sweep_csv(const timescale::SweepResult& sw,
                                           const std::string& config_hash) {
    std::string out = csv_stamp(config_hash) + "epsilon,mean_err,ms_err\n";
    for (const auto& row : sw.rows)
        out += format_double(row.epsilon) + "," + format_double(row.mean_err) + "," +
               format_double(row.ms_err) + "\n";
    return out;
}

[[nodiscard]] inline nlohmann::json sweep_json(const timescale::SweepResult& sw) {
    nlohmann::json j;
    j["mean_slope"] = sw.mean_slope;
    j["ms_slope"] = sw.ms_slope;
    j["points"] = sw.rows.size();
    return j;
}

struct ValidateRow {
    std::string configuration;
    double l1 = 0.0;
    double l2 = 0.0;
    double linf = 0.0;
};

[[nodiscard]] inline std::string validate_table_csv(const std::vector<ValidateRow>& rows,
                                                    const std::string& config_hash) {
    std::string out = csv_stamp(config_hash) + "configuration,l1,l2,linf\n";
    for (const auto& r : rows)
        out += r.configuration + "," + format_double(r.l1) + "," + format_double(r.l2) +
               "," + format_double(r.linf) + "\n";
    return out;
}

/// Covariance-error series of one output pair: `t,full,reduced,abs_error`.
[[nodiscard]] inline std::string cov_error_csv(const sim::ErrorReport& rep,
                                               Eigen::Index i, Eigen::Index j,
                                               const std::string& config_hash) {
    std::string out = csv_stamp(config_hash) + "t,full,reduced,abs_error\n";
    for (size_t s = 0; s < rep.time_grid.size(); ++s) {
        const double f = rep.cov_full[s](i, j);
        const double r = rep.cov_reduced[s](i, j);
        out += format_double(rep.time_grid[s]) + "," + format_double(f) + "," +
               format_double(r) + "," + format_double(std::abs(f - r)) + "\n";
    }
    return out;
}

} // namespace lnared::io
