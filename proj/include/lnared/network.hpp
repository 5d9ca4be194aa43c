#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lnared/expression.hpp"
#include "lnared/newton.hpp"
#include "lnared/types.hpp"

namespace lnared::net {

//==============================================================================
// Reaction networks and their linear noise approximation
//
// A network is N species with R reactions, stoichiometry S (N x R) and
// macroscopic rates f(x) >= 0. The deterministic part follows dx = S f(x);
// fluctuations about x follow d(eta) = A(x) eta dt + B(x) dw with
//   A(x) = S df/dx          (drift Jacobian)
//   B(x) = S diag(sqrt(f(x))) / sqrt(volume)
// and outputs pick observed species: y = C (x + eta).
//==============================================================================

struct Reaction {
    Vec stoich;            ///< column of S, length N
    std::string rate_text; ///< original expression, kept for serialization
    expr::Expression rate;
};

struct ReactionNetwork {
    std::vector<std::string> species;
    std::map<std::string, double> parameters;
    double volume = 1.0;
    std::vector<Reaction> reactions;
    std::vector<Eigen::Index> outputs; ///< indices of observed species
    Vec initial_state;                 ///< default all ones

    [[nodiscard]] Eigen::Index n_species() const {
        return static_cast<Eigen::Index>(species.size());
    }
    [[nodiscard]] Eigen::Index n_reactions() const {
        return static_cast<Eigen::Index>(reactions.size());
    }

    [[nodiscard]] Eigen::Index species_index(const std::string& name) const {
        for (size_t i = 0; i < species.size(); ++i)
            if (species[i] == name) return static_cast<Eigen::Index>(i);
        throw ParseError("unknown species '" + name + "'");
    }

    /// Stoichiometry matrix S, one column per reaction.
    [[nodiscard]] Mat stoichiometry() const {
        Mat s(n_species(), n_reactions());
        for (Eigen::Index r = 0; r < n_reactions(); ++r)
            s.col(r) = reactions[static_cast<size_t>(r)].stoich;
        return s;
    }

    /// Reaction rate vector f(x); throws EvalError on domain violations.
    [[nodiscard]] Vec propensities(const Vec& x) const {
        Vec f(n_reactions());
        for (Eigen::Index r = 0; r < n_reactions(); ++r)
            f(r) = reactions[static_cast<size_t>(r)].rate.eval(x);
        return f;
    }

    /// Deterministic drift g(x) = S f(x).
    [[nodiscard]] Vec drift(const Vec& x) const {
        Vec g = Vec::Zero(n_species());
        for (Eigen::Index r = 0; r < n_reactions(); ++r)
            g += reactions[static_cast<size_t>(r)].stoich *
                 reactions[static_cast<size_t>(r)].rate.eval(x);
        return g;
    }

    /// Output selector C with one row per observed species.
    [[nodiscard]] Mat output_matrix() const {
        Mat c = Mat::Zero(static_cast<Eigen::Index>(outputs.size()), n_species());
        for (size_t i = 0; i < outputs.size(); ++i)
            c(static_cast<Eigen::Index>(i), outputs[i]) = 1.0;
        return c;
    }
};

/// Drift Jacobian A(x) = S df/dx via forward-mode differentiation of each rate.
[[nodiscard]] inline Mat jacobian(const ReactionNetwork& net, const Vec& x) {
    if (x.size() != net.n_species()) throw DimensionMismatch("jacobian: state length");
    Mat a = Mat::Zero(net.n_species(), net.n_species());
    for (const Reaction& r : net.reactions) {
        const expr::Dual d = r.rate.eval_dual(x);
        a += r.stoich * d.g.transpose();
    }
    return a;
}

/// Fluctuation input matrix B(x) = S diag(sqrt(f(x))) / sqrt(volume).
/// Rates are clamped at zero before the square root: propensities are
/// nonnegative by definition, and reduced-model reconstructions may probe
/// states slightly outside the positive orthant.
[[nodiscard]] inline Mat noise_matrix(const ReactionNetwork& net, const Vec& x) {
    Vec f = net.propensities(x);
    for (Eigen::Index r = 0; r < f.size(); ++r) f(r) = std::sqrt(std::max(f(r), 0.0));
    return net.stoichiometry() * f.asDiagonal() * (1.0 / std::sqrt(net.volume));
}

/// Damped-Newton steady state of the drift from a starting point.
///
/// Post: ||g(x_ss)|| <= 1e-12 * (1 + ||x_ss||). Throws SingularJacobian when
/// the Newton system degenerates, NoConvergence when the budget runs out.
[[nodiscard]] inline Vec steady_state(const ReactionNetwork& net, const Vec& x0) {
    if (x0.size() != net.n_species()) throw DimensionMismatch("steady_state: state length");
    const auto res = newton::damped_newton(
        [&](const Vec& x) { return net.drift(x); },
        [&](const Vec& x) { return jacobian(net, x); }, x0);
    if (res.singular_jacobian)
        throw SingularJacobian("steady_state: drift Jacobian is numerically singular");
    if (!res.converged)
        throw NoConvergence("steady_state: residual " + std::to_string(res.residual) +
                            " after " + std::to_string(res.iterations) + " iterations");
    return res.x;
}

/// Linearized fluctuation model at a state: (A(x), B(x), C, 0).
[[nodiscard]] inline Realization linearize(const ReactionNetwork& net, const Vec& x) {
    Realization r;
    r.A = jacobian(net, x);
    r.B = noise_matrix(net, x);
    r.C = net.output_matrix();
    r.D = Mat::Zero(r.C.rows(), r.B.cols());
    r.check("linearize");
    return r;
}

/// Callable LNA bundle: macroscopic field g, Jacobian map A(x), diffusion map
/// B(x), output selector C, and the nominal initial state. Self-contained:
/// network-backed models copy the network into the closures.
struct LnaModel {
    std::function<Vec(const Vec&)> g;
    std::function<Mat(const Vec&)> A;
    std::function<Mat(const Vec&)> B;
    Mat C;
    Vec x0;
    Eigen::Index n = 0; ///< state dimension
    Eigen::Index m = 0; ///< noise channels
};

[[nodiscard]] inline LnaModel lna_model(const ReactionNetwork& net) {
    LnaModel model;
    model.g = [net](const Vec& x) { return net.drift(x); };
    model.A = [net](const Vec& x) { return jacobian(net, x); };
    model.B = [net](const Vec& x) { return noise_matrix(net, x); };
    model.C = net.output_matrix();
    model.x0 = net.initial_state;
    model.n = net.n_species();
    model.m = net.n_reactions();
    return model;
}

/// Constant-coefficient model (linear drift g(x) = A x) for analytical tests.
[[nodiscard]] inline LnaModel linear_lna_model(const Mat& a, const Mat& b, const Mat& c,
                                               const Vec& x0) {
    require_square(a, "linear_lna_model");
    if (b.rows() != a.rows() || c.cols() != a.rows() || x0.size() != a.rows())
        throw DimensionMismatch("linear_lna_model: block sizes");
    LnaModel model;
    model.g = [a](const Vec& x) { return Vec(a * x); };
    model.A = [a](const Vec&) { return a; };
    model.B = [b](const Vec&) { return b; };
    model.C = c;
    model.x0 = x0;
    model.n = a.rows();
    model.m = b.cols();
    return model;
}

/// Similarity transform z = T x of an LNA model. The transformed model has
/// drift T g(T^{-1} z), Jacobian T A T^{-1}, diffusion T B, and output C T^{-1},
/// so its input-output behaviour matches the original exactly.
[[nodiscard]] inline LnaModel transform_model(const LnaModel& model, const Mat& t,
                                              const Mat& t_inv) {
    require_square(t, "transform_model");
    if (t.rows() != model.n || t_inv.rows() != model.n || t_inv.cols() != model.n)
        throw DimensionMismatch("transform_model: transformation size");
    LnaModel out;
    out.g = [model, t, t_inv](const Vec& z) { return Vec(t * model.g(t_inv * z)); };
    out.A = [model, t, t_inv](const Vec& z) { return Mat(t * model.A(t_inv * z) * t_inv); };
    out.B = [model, t, t_inv](const Vec& z) { return Mat(t * model.B(t_inv * z)); };
    out.C = model.C * t_inv;
    out.x0 = t * model.x0;
    out.n = model.n;
    out.m = model.m;
    return out;
}

namespace detail {

inline double require_number(const nlohmann::json& j, const std::string& who) {
    if (!j.is_number()) throw ParseError(who + ": expected a number");
    return j.get<double>();
}

} // namespace detail

/// Parses the JSON model format.
///
/// Required keys: "species" (unique names), "reactions" (each with "stoich"
/// of N integers and "rate" expression). Optional: "parameters" (name ->
/// value), "volume" (> 0, default 1), "output_species" (default: all),
/// "initial_state" (length N, default all ones).
[[nodiscard]] inline ReactionNetwork parse_network(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("model: top level must be an object");
    ReactionNetwork net;

    if (!j.contains("species") || !j["species"].is_array() || j["species"].empty())
        throw ParseError("model: 'species' must be a non-empty array");
    std::set<std::string> seen;
    for (const auto& s : j["species"]) {
        if (!s.is_string()) throw ParseError("model: species names must be strings");
        const std::string name = s.get<std::string>();
        if (!seen.insert(name).second)
            throw ParseError("model: duplicate species '" + name + "'");
        net.species.push_back(name);
    }
    const Eigen::Index n = net.n_species();

    if (j.contains("parameters")) {
        if (!j["parameters"].is_object()) throw ParseError("model: 'parameters' must map names to numbers");
        for (const auto& [key, val] : j["parameters"].items())
            net.parameters[key] = detail::require_number(val, "parameter '" + key + "'");
    }

    net.volume = 1.0;
    if (j.contains("volume")) {
        net.volume = detail::require_number(j["volume"], "volume");
        if (!(net.volume > 0.0)) throw ParseError("model: 'volume' must be positive");
    }

    if (!j.contains("reactions") || !j["reactions"].is_array() || j["reactions"].empty())
        throw ParseError("model: 'reactions' must be a non-empty array");
    for (const auto& rj : j["reactions"]) {
        if (!rj.is_object() || !rj.contains("stoich") || !rj.contains("rate"))
            throw ParseError("model: each reaction needs 'stoich' and 'rate'");
        const auto& st = rj["stoich"];
        if (!st.is_array() || static_cast<Eigen::Index>(st.size()) != n)
            throw BadStoichiometry("model: 'stoich' must list one integer per species");
        Reaction r;
        r.stoich.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& e = st[static_cast<size_t>(i)];
            if (!e.is_number())
                throw BadStoichiometry("model: stoichiometric coefficients must be numbers");
            const double v = e.get<double>();
            if (v != std::floor(v))
                throw BadStoichiometry("model: stoichiometric coefficients must be integers");
            r.stoich(i) = v;
        }
        if (!rj["rate"].is_string()) throw ParseError("model: 'rate' must be a string");
        r.rate_text = rj["rate"].get<std::string>();
        r.rate = expr::Expression::parse(r.rate_text, net.species, net.parameters);
        net.reactions.push_back(std::move(r));
    }

    if (j.contains("output_species")) {
        if (!j["output_species"].is_array())
            throw ParseError("model: 'output_species' must be an array of species names");
        for (const auto& s : j["output_species"]) {
            if (!s.is_string()) throw ParseError("model: output species must be names");
            net.outputs.push_back(net.species_index(s.get<std::string>()));
        }
    }
    if (net.outputs.empty())
        for (Eigen::Index i = 0; i < n; ++i) net.outputs.push_back(i);

    net.initial_state = Vec::Ones(n);
    if (j.contains("initial_state")) {
        const auto& x0 = j["initial_state"];
        if (!x0.is_array() || static_cast<Eigen::Index>(x0.size()) != n)
            throw ParseError("model: 'initial_state' must list one number per species");
        for (Eigen::Index i = 0; i < n; ++i)
            net.initial_state(i) =
                detail::require_number(x0[static_cast<size_t>(i)], "initial_state");
    }
    return net;
}

[[nodiscard]] inline ReactionNetwork parse_network(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("model: malformed JSON");
    return parse_network(j);
}

} // namespace lnared::net
