#pragma once

// JSON forms of the library's results, and the exact / iterated /
// empirical comparison used by the `compare` command.
//
// Doubles are written with nlohmann's shortest round-trip formatting
// (at most 17 significant digits), so reading a report back is exact.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifsm/chaos_game.hpp"
#include "ifsm/linalg.hpp"
#include "ifsm/model.hpp"
#include "ifsm/moments.hpp"

namespace ifsm {

inline nlohmann::json to_json(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

inline nlohmann::json to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::json to_json(const ValidationReport& r) {
    nlohmann::json maps = nlohmann::json::array();
    nlohmann::json norms = nlohmann::json::array();
    for (const auto& c : r.maps) {
        maps.push_back({{"index", c.index},
                        {"norm", c.norm},
                        {"contractive", c.contractive},
                        {"weight_nonnegative", c.weight_nonnegative}});
        norms.push_back(c.norm);
    }
    return {{"passed", r.passed},
            {"norm_kind", r.norm_kind},
            {"norms", std::move(norms)},
            {"maps", std::move(maps)},
            {"weight_sum", r.weight_sum},
            {"weight_sum_ok", r.weight_sum_ok},
            {"problems", r.problems}};
}

inline nlohmann::json to_json(const MomentReport& r) {
    return {{"path", to_string(r.path)},
            {"mean", to_json(r.mean)},
            {"second_moment", to_json(r.second_moment)},
            {"cov", to_json(r.cov)},
            {"residual", r.residual},
            {"iterations", r.iterations ? nlohmann::json(*r.iterations) : nlohmann::json(nullptr)}};
}

inline nlohmann::json to_json(const EmpiricalStats& s) {
    return {{"n", s.n},
            {"burn_in", s.burn_in},
            {"seed", s.seed},
            {"shards", s.shards},
            {"mean", to_json(s.mean)},
            {"cov", to_json(s.cov)},
            {"mean_stderr", to_json(s.mean_stderr)}};
}

namespace detail {

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ParseError(where + ": expected a non-empty array of rows");
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < j.size(); ++i) {
        rows.push_back(parse_real_array(j[i], j.size(), where + "[" + std::to_string(i) + "]"));
    }
    return Matrix::from_rows(rows);
}

}  // namespace detail

/// Reads the `moments` command's output back into a report.
inline MomentReport moment_report_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("moment report: expected a JSON object");
    for (const char* key : {"path", "mean", "second_moment", "cov"}) {
        if (!j.contains(key)) throw ParseError(std::string("moment report: missing field \"") + key + "\"");
    }
    MomentReport r;
    const std::string path = j["path"].is_string() ? j["path"].get<std::string>() : "";
    if (path == "EqualLinearFastPath") {
        r.path = MomentPath::EqualLinearFastPath;
    } else if (path == "GeneralKroneckerPath") {
        r.path = MomentPath::GeneralKroneckerPath;
    } else if (path == "FixedPointIteration") {
        r.path = MomentPath::FixedPointIteration;
    } else {
        throw ParseError("moment report: unknown path \"" + path + "\"");
    }
    r.second_moment = detail::matrix_from_json(j["second_moment"], "second_moment");
    const std::size_t d = r.second_moment.rows();
    r.mean = Vector(detail::parse_real_array(j["mean"], d, "mean"));
    r.cov = detail::matrix_from_json(j["cov"], "cov");
    if (r.cov.rows() != d) throw ParseError("cov: dimension differs from second_moment");
    if (j.contains("residual") && j["residual"].is_number()) r.residual = j["residual"].get<double>();
    if (j.contains("iterations") && j["iterations"].is_number_integer()) r.iterations = j["iterations"].get<long>();
    return r;
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

struct CompareOptions {
    double tol = 1e-8;
    double sigma = 5.0;
    std::size_t n = 1'000'000;
    std::size_t burn_in = kDefaultBurnIn;
    std::uint64_t seed = 42;
    std::size_t shards = 1;
    double iteration_tol = kIterationDefaultTol;
    long max_iter = kIterationDefaultMaxIter;
    bool empirical = true;
};

enum class Verdict { Agree, Disagree };

struct ComparisonReport {
    MomentReport exact;
    MomentReport iterated;
    std::optional<EmpiricalStats> empirical;
    double max_abs_diff_exact_vs_iterated = 0.0;
    std::optional<Vector> zscores_exact_vs_empirical;
    Verdict verdict = Verdict::Disagree;
    double tol = 0.0;
    double sigma = 0.0;
};

inline double max_abs_diff(const MomentReport& a, const MomentReport& b) {
    if (a.mean.size() != b.mean.size()) return std::numeric_limits<double>::infinity();
    return std::max({(a.mean - b.mean).norm_inf(), (a.second_moment - b.second_moment).max_abs(),
                     (a.cov - b.cov).max_abs()});
}

/// (empirical mean - exact mean) / stderr per coordinate. A zero stderr
/// (point mass) gives z = 0 on an exact match and infinity otherwise.
inline Vector mean_zscores(const EmpiricalStats& emp, const Vector& exact) {
    Vector z(exact.size());
    for (std::size_t i = 0; i < exact.size(); ++i) {
        const double diff = emp.mean[i] - exact[i];
        if (emp.mean_stderr[i] > 0.0) {
            z[i] = diff / emp.mean_stderr[i];
        } else {
            z[i] = std::abs(diff) <= 1e-12 * (1.0 + std::abs(exact[i])) ? 0.0 : std::numeric_limits<double>::infinity();
        }
    }
    return z;
}

/// Runs the iterated and (optionally) empirical routes and checks them
/// against the exact report. `cached_exact` replaces the exact solve, which
/// lets a stored report be regression-checked against the current model.
inline ComparisonReport compare(const IfsModel& m, const CompareOptions& opts,
                                const std::optional<MomentReport>& cached_exact = std::nullopt) {
    ComparisonReport r;
    r.tol = opts.tol;
    r.sigma = opts.sigma;
    r.exact = cached_exact ? *cached_exact : covariance(m);
    r.iterated = covariance_by_iteration(m, opts.iteration_tol, opts.max_iter);
    r.max_abs_diff_exact_vs_iterated = max_abs_diff(r.exact, r.iterated);
    bool agree = r.max_abs_diff_exact_vs_iterated <= opts.tol;
    if (opts.empirical) {
        r.empirical = sample_sharded(m, opts.n, opts.burn_in, opts.seed, opts.shards);
        if (r.empirical->mean.size() == r.exact.mean.size()) {
            r.zscores_exact_vs_empirical = mean_zscores(*r.empirical, r.exact.mean);
            for (double z : *r.zscores_exact_vs_empirical) agree = agree && std::abs(z) <= opts.sigma;
        } else {
            agree = false;
        }
    }
    r.verdict = agree ? Verdict::Agree : Verdict::Disagree;
    return r;
}

inline nlohmann::json to_json(const ComparisonReport& r) {
    nlohmann::json j = {{"exact", to_json(r.exact)},
                        {"iterated", to_json(r.iterated)},
                        {"empirical", r.empirical ? to_json(*r.empirical) : nlohmann::json(nullptr)},
                        {"max_abs_diff_exact_vs_iterated", r.max_abs_diff_exact_vs_iterated},
                        {"zscores_exact_vs_empirical", nullptr},
                        {"tol", r.tol},
                        {"sigma", r.sigma},
                        {"verdict", r.verdict == Verdict::Agree ? "Agree" : "Disagree"}};
    if (r.zscores_exact_vs_empirical) {
        // Infinite z-scores have no JSON number form; they are written as null.
        nlohmann::json z = nlohmann::json::array();
        for (double v : *r.zscores_exact_vs_empirical) z.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
        j["zscores_exact_vs_empirical"] = std::move(z);
    }
    return j;
}

}  // namespace ifsm
