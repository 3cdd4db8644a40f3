#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ifsm/errors.hpp"
#include "ifsm/linalg.hpp"

namespace ifsm {

/// One contraction S(x) = linear * x + offset.
class AffineMap {
public:
    AffineMap(Matrix linear, Vector offset) : linear_(std::move(linear)), offset_(std::move(offset)) {
        if (!linear_.is_square() || linear_.rows() != offset_.size() || offset_.empty()) {
            throw DimensionMismatch("AffineMap: linear part must be d x d with a length-d offset");
        }
    }

    const Matrix& linear() const noexcept { return linear_; }
    const Vector& offset() const noexcept { return offset_; }
    std::size_t dim() const noexcept { return offset_.size(); }

    Vector operator()(const Vector& x) const { return linear_ * x + offset_; }

private:
    Matrix linear_;
    Vector offset_;
};

/// Maps with probability weights. Construction checks shape only; the
/// numeric hypotheses (contraction, stochastic weights) are checked by
/// validate() so that failures can be reported rather than thrown.
class IfsModel {
public:
    IfsModel(std::size_t dim, std::vector<AffineMap> maps, std::vector<double> weights)
        : dim_(dim), maps_(std::move(maps)), weights_(std::move(weights)) {
        if (dim_ == 0) throw DimensionMismatch("IfsModel: dim must be positive");
        if (maps_.empty()) throw DimensionMismatch("IfsModel: at least one map is required");
        if (maps_.size() != weights_.size()) throw DimensionMismatch("IfsModel: one weight per map is required");
        for (std::size_t k = 0; k < maps_.size(); ++k) {
            if (maps_[k].dim() != dim_) {
                throw DimensionMismatch("IfsModel: map " + std::to_string(k) + " has dimension " +
                                        std::to_string(maps_[k].dim()) + ", expected " + std::to_string(dim_));
            }
        }
        detail::require_finite(weights_, "IfsModel weights");
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return maps_.size(); }
    const std::vector<AffineMap>& maps() const noexcept { return maps_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    const AffineMap& map(std::size_t k) const { return maps_.at(k); }
    double weight(std::size_t k) const { return weights_.at(k); }

private:
    std::size_t dim_;
    std::vector<AffineMap> maps_;
    std::vector<double> weights_;
};

inline constexpr double kWeightSumTolerance = 1e-12;
inline constexpr double kContractionMargin = 1e-12;
inline constexpr double kLinearPartTolerance = 1e-14;

struct MapCheck {
    std::size_t index = 0;
    double norm = 0.0;
    bool contractive = false;
    bool weight_nonnegative = false;
};

struct ValidationReport {
    /// The operator norm used for the contraction test.
    std::string norm_kind = "spectral (l2 operator norm)";
    std::vector<MapCheck> maps;
    double weight_sum = 0.0;
    bool weight_sum_ok = false;
    bool passed = false;
    std::vector<std::string> problems;
};

/// Compensated (Kahan) accumulator.
class KahanSum {
public:
    void add(double x) noexcept {
        const double y = x - carry_;
        const double t = sum_ + y;
        carry_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const noexcept { return sum_; }

private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

inline ValidationReport validate(const IfsModel& m) {
    ValidationReport report;
    KahanSum sum;
    bool all_ok = true;
    for (std::size_t k = 0; k < m.size(); ++k) {
        MapCheck check;
        check.index = k;
        check.norm = spectral_norm(m.map(k).linear());
        check.contractive = check.norm < 1.0 - kContractionMargin;
        check.weight_nonnegative = m.weight(k) >= 0.0;
        if (!check.contractive) {
            std::ostringstream os;
            os.precision(17);
            os << "map " << k << ": spectral norm " << check.norm << " is not < 1";
            report.problems.push_back(os.str());
        }
        if (!check.weight_nonnegative) {
            report.problems.push_back("map " + std::to_string(k) + ": negative weight");
        }
        all_ok = all_ok && check.contractive && check.weight_nonnegative;
        sum.add(m.weight(k));
        report.maps.push_back(check);
    }
    report.weight_sum = sum.value();
    report.weight_sum_ok = std::abs(report.weight_sum - 1.0) <= kWeightSumTolerance;
    if (!report.weight_sum_ok) {
        std::ostringstream os;
        os.precision(17);
        os << "weights sum to " << report.weight_sum << ", expected 1";
        report.problems.push_back(os.str());
    }
    report.passed = all_ok && report.weight_sum_ok;
    return report;
}

/// Throws InvalidModel unless validate(m) passes.
inline void require_valid(const IfsModel& m) {
    const ValidationReport report = validate(m);
    if (!report.passed) {
        std::string msg = "model failed validation";
        for (const auto& p : report.problems) msg += "; " + p;
        throw InvalidModel(msg);
    }
}

/// Statistics of the discrete variable taking offset b_k with probability p_k.
struct DiscreteStats {
    Vector mean;
    Matrix cov;
    Matrix second_moment;
};

inline DiscreteStats b_stats(const IfsModel& m) {
    const std::size_t d = m.dim();
    std::vector<KahanSum> mean_acc(d);
    std::vector<KahanSum> second_acc(d * d);
    for (std::size_t k = 0; k < m.size(); ++k) {
        const double p = m.weight(k);
        const Vector& b = m.map(k).offset();
        for (std::size_t i = 0; i < d; ++i) {
            mean_acc[i].add(p * b[i]);
            for (std::size_t j = i; j < d; ++j) second_acc[i * d + j].add(p * b[i] * b[j]);
        }
    }
    DiscreteStats s{Vector(d), Matrix(d, d), Matrix(d, d)};
    for (std::size_t i = 0; i < d; ++i) s.mean[i] = mean_acc[i].value();
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) s.second_moment(i, j) = s.second_moment(j, i) = second_acc[i * d + j].value();
    s.cov = s.second_moment - outer(s.mean, s.mean);
    return s;
}

/// The shared linear part when every map's linear part agrees with the
/// first entrywise within kLinearPartTolerance.
inline std::optional<Matrix> uniform_linear_part(const IfsModel& m) {
    const Matrix& first = m.map(0).linear();
    for (std::size_t k = 1; k < m.size(); ++k) {
        if ((m.map(k).linear() - first).max_abs() > kLinearPartTolerance) return std::nullopt;
    }
    return first;
}

// ---------------------------------------------------------------------------
// On-disk format
//
//   { "dim": 2,
//     "maps": [ { "A": [[0.5, 0.0], [0.0, 0.5]], "b": [0.0, 0.0], "p": 0.25 }, ... ] }
//
// "A" is row-major. Unknown keys are rejected.
// ---------------------------------------------------------------------------

namespace detail {

inline double parse_real(const nlohmann::json& j, const std::string& where) {
    if (!j.is_number()) throw ParseError(where + ": expected a number");
    return j.get<double>();
}

inline std::vector<double> parse_real_array(const nlohmann::json& j, std::size_t expected, const std::string& where) {
    if (!j.is_array()) throw ParseError(where + ": expected an array");
    if (j.size() != expected) {
        throw ParseError(where + ": expected " + std::to_string(expected) + " entries, found " +
                         std::to_string(j.size()));
    }
    std::vector<double> out;
    out.reserve(expected);
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_real(j[i], where + "[" + std::to_string(i) + "]"));
    return out;
}

inline void reject_unknown_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed) known = known || item.key() == key;
        if (!known) throw ParseError(where + ": unknown key \"" + item.key() + "\"");
    }
}

}  // namespace detail

inline IfsModel ifs_from_json(const nlohmann::json& doc) {
    using detail::parse_real_array;
    if (!doc.is_object()) throw ParseError("document: expected a JSON object");
    detail::reject_unknown_keys(doc, {"dim", "maps"}, "document");
    if (!doc.contains("dim")) throw ParseError("document: missing field \"dim\"");
    if (!doc.contains("maps")) throw ParseError("document: missing field \"maps\"");

    const auto& jdim = doc["dim"];
    if (!jdim.is_number_integer() || jdim.get<long long>() <= 0) {
        throw ParseError("dim: expected a positive integer");
    }
    const auto d = static_cast<std::size_t>(jdim.get<long long>());

    const auto& jmaps = doc["maps"];
    if (!jmaps.is_array() || jmaps.empty()) throw ParseError("maps: expected a non-empty array");

    std::vector<AffineMap> maps;
    std::vector<double> weights;
    for (std::size_t k = 0; k < jmaps.size(); ++k) {
        const std::string where = "maps[" + std::to_string(k) + "]";
        const auto& jm = jmaps[k];
        if (!jm.is_object()) throw ParseError(where + ": expected an object");
        detail::reject_unknown_keys(jm, {"A", "b", "p"}, where);
        for (const char* key : {"A", "b", "p"}) {
            if (!jm.contains(key)) throw ParseError(where + ": missing field \"" + key + "\"");
        }
        const auto& ja = jm["A"];
        if (!ja.is_array() || ja.size() != d) {
            throw ParseError(where + ".A: expected " + std::to_string(d) + " rows");
        }
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < d; ++i) {
            rows.push_back(parse_real_array(ja[i], d, where + ".A[" + std::to_string(i) + "]"));
        }
        std::vector<double> b = parse_real_array(jm["b"], d, where + ".b");
        weights.push_back(detail::parse_real(jm["p"], where + ".p"));
        maps.emplace_back(Matrix::from_rows(rows), Vector(std::move(b)));
    }
    return IfsModel(d, std::move(maps), std::move(weights));
}

/// Parses an IFS document. The result is not validated.
inline IfsModel parse_ifs(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what());
    }
    return ifs_from_json(doc);
}

inline nlohmann::json ifs_to_json(const IfsModel& m) {
    nlohmann::json jmaps = nlohmann::json::array();
    for (std::size_t k = 0; k < m.size(); ++k) {
        const AffineMap& s = m.map(k);
        nlohmann::json a = nlohmann::json::array();
        for (std::size_t i = 0; i < m.dim(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t j = 0; j < m.dim(); ++j) row.push_back(s.linear()(i, j));
            a.push_back(std::move(row));
        }
        jmaps.push_back({{"A", std::move(a)},
                         {"b", std::vector<double>(s.offset().begin(), s.offset().end())},
                         {"p", m.weight(k)}});
    }
    return {{"dim", m.dim()}, {"maps", std::move(jmaps)}};
}

}  // namespace ifsm
