#pragma once

// Line-oriented `key = value` run configuration with full validation at parse
// time. Unknown keys are rejected; every violation names the constraint.

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "carnot/errors.hpp"
#include "carnot/forms.hpp"
#include "carnot/group.hpp"

namespace carnot {

enum class CheckKind { pohozaev, commutator, operators, embedding, positivity, negative_lambda };

inline const std::map<std::string, CheckKind>& check_names() {
    static const std::map<std::string, CheckKind> names = {
        {"pohozaev", CheckKind::pohozaev},       {"commutator", CheckKind::commutator},
        {"operators", CheckKind::operators},     {"embedding", CheckKind::embedding},
        {"positivity", CheckKind::positivity},   {"negative_lambda", CheckKind::negative_lambda},
    };
    return names;
}

inline std::string check_name(CheckKind k) {
    for (const auto& [name, kind] : check_names())
        if (kind == k) return name;
    return "?";
}

struct ExperimentConfig {
    std::string group = "heisenberg1";
    int n = 8;
    double s = 0.5;
    double q = 2.0;
    double theta_loc = 1.0;
    double theta_nonloc = 1.0;
    double tol = 1e-10;
    int max_iter = 500;
    std::uint64_t seed = 12345;
    std::set<CheckKind> checks;
    std::string output_dir = "out";
    double box_lo = -1.0;
    double box_hi = 1.0;

    GroupSpec spec() const {
        if (group == "heisenberg1") return GroupSpec::heisenberg(1);
        if (group == "heisenberg2") return GroupSpec::heisenberg(2);
        if (group == "abelian1") return GroupSpec::abelian(1);
        if (group == "abelian2") return GroupSpec::abelian(2);
        if (group == "abelian3") return GroupSpec::abelian(3);
        throw config_error("group must be one of heisenberg1, heisenberg2, abelian1, abelian2, "
                           "abelian3; got '" +
                           group + "'");
    }

    std::vector<std::pair<double, double>> bounds() const {
        return std::vector<std::pair<double, double>>(spec().topological_dim, {box_lo, box_hi});
    }

    /// Enforce every invariant; throws config_error naming the constraint.
    void validate() const {
        const GroupSpec g = spec(); // validates the group name
        if (n < 4) throw config_error("N must be >= 4 (got " + std::to_string(n) + ")");
        if (!(s > 0.0 && s < 1.0))
            throw config_error("s must lie in the open interval (0,1) (got " + std::to_string(s) +
                               ")");
        const double two_star = critical_exponent(g);
        if (!(q > 1.0) || !(q < two_star))
            throw config_error("q must lie in (1, 2*) with 2* = " + std::to_string(two_star) +
                               " for " + group + " (got " + std::to_string(q) + ")");
        if (theta_loc < 0.0 || theta_nonloc < 0.0)
            throw config_error("theta_loc and theta_nonloc must be nonnegative");
        if (!(tol > 0.0)) throw config_error("tol must be positive");
        if (max_iter < 1) throw config_error("max_iter must be >= 1");
        if (!(box_hi > box_lo)) throw config_error("box_hi must exceed box_lo");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline double parse_real(const std::string& value, const std::string& key, int line) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &pos);
    } catch (const std::exception&) {
        throw config_error("line " + std::to_string(line) + ": value of '" + key +
                           "' is not a number: '" + value + "'");
    }
    if (pos != value.size())
        throw config_error("line " + std::to_string(line) + ": trailing characters in value of '" +
                           key + "': '" + value + "'");
    return v;
}

inline long long parse_integer(const std::string& value, const std::string& key, int line) {
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &pos);
    } catch (const std::exception&) {
        throw config_error("line " + std::to_string(line) + ": value of '" + key +
                           "' is not an integer: '" + value + "'");
    }
    if (pos != value.size())
        throw config_error("line " + std::to_string(line) + ": trailing characters in value of '" +
                           key + "': '" + value + "'");
    return v;
}

} // namespace detail

/// Parse the `key = value` text into a fully validated configuration.
inline ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(line_no) +
                               ": expected 'key = value', got '" + stripped + "'");
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string value = detail::trim(stripped.substr(eq + 1));
        if (key.empty())
            throw config_error("line " + std::to_string(line_no) + ": empty key");

        if (key == "group") {
            cfg.group = value;
        } else if (key == "N") {
            cfg.n = static_cast<int>(detail::parse_integer(value, key, line_no));
        } else if (key == "s") {
            cfg.s = detail::parse_real(value, key, line_no);
        } else if (key == "q") {
            cfg.q = detail::parse_real(value, key, line_no);
        } else if (key == "theta_loc") {
            cfg.theta_loc = detail::parse_real(value, key, line_no);
        } else if (key == "theta_nonloc") {
            cfg.theta_nonloc = detail::parse_real(value, key, line_no);
        } else if (key == "tol") {
            cfg.tol = detail::parse_real(value, key, line_no);
        } else if (key == "max_iter") {
            cfg.max_iter = static_cast<int>(detail::parse_integer(value, key, line_no));
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(detail::parse_integer(value, key, line_no));
        } else if (key == "output_dir") {
            cfg.output_dir = value;
        } else if (key == "box_lo") {
            cfg.box_lo = detail::parse_real(value, key, line_no);
        } else if (key == "box_hi") {
            cfg.box_hi = detail::parse_real(value, key, line_no);
        } else if (key == "checks") {
            std::stringstream items(value);
            std::string item;
            while (std::getline(items, item, ',')) {
                const std::string name = detail::trim(item);
                if (name.empty()) continue;
                const auto it = check_names().find(name);
                if (it == check_names().end())
                    throw config_error("line " + std::to_string(line_no) + ": unknown check '" +
                                       name + "'");
                cfg.checks.insert(it->second);
            }
        } else {
            throw config_error("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

} // namespace carnot
