#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "ifsm/model.hpp"
#include "support/random_models.hpp"

using namespace ifsm;
using namespace ifsm::testing;

namespace {

const double kSqrt3 = std::sqrt(3.0);

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string parse_error_message(const std::string& text) {
    try {
        (void)parse_ifs(text);
    } catch (const ParseError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(ParseIfs, SierpinskiDocument) {
    const IfsModel m = parse_ifs(slurp(IFSM_MODELS_DIR "/sierpinski.json"));
    EXPECT_EQ(m.dim(), 2u);
    EXPECT_EQ(m.size(), 3u);
    EXPECT_EQ(m.map(0).linear(), (Matrix{{0.5, 0.0}, {0.0, 0.5}}));
    EXPECT_EQ(m.map(1).offset(), (Vector{0.5, 0.0}));
    EXPECT_NEAR(m.map(2).offset()[1], kSqrt3 / 4.0, 1e-16);
    EXPECT_NEAR(m.weight(2), 1.0 / 3.0, 1e-16);
}

TEST(ParseIfs, BernoulliDocument) {
    const IfsModel m = parse_ifs(R"({"dim": 1, "maps": [
        {"A": [[0.5]], "b": [0.5], "p": 0.5},
        {"A": [[0.5]], "b": [-0.5], "p": 0.5}]})");
    EXPECT_EQ(m.dim(), 1u);
    EXPECT_EQ(m.size(), 2u);
    EXPECT_EQ(m.map(1).offset(), (Vector{-0.5}));
}

TEST(ParseIfs, SeparateWeightsArrayIsRejected) {
    const std::string msg = parse_error_message(slurp(IFSM_TEST_DATA_DIR "/weights-mismatch.json"));
    EXPECT_NE(msg.find("weights"), std::string::npos) << msg;
}

TEST(ParseIfs, MalformedJsonReportsLine) {
    const std::string msg = parse_error_message(slurp(IFSM_TEST_DATA_DIR "/malformed.json"));
    EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;
}

TEST(ParseIfs, StructuralErrorsCarryFieldContext) {
    EXPECT_NE(parse_error_message(R"({"dim": 2, "maps": [{"A": [[1, 0], [0]], "b": [0, 0], "p": 1}]})")
                  .find("maps[0].A[1]"),
              std::string::npos);
    EXPECT_NE(parse_error_message(R"({"dim": 2, "maps": [{"A": [[1, 0], [0, 1]], "b": [0], "p": 1}]})")
                  .find("maps[0].b"),
              std::string::npos);
    EXPECT_NE(parse_error_message(R"({"dim": 1, "maps": [{"A": [[0.5]], "b": [0]}]})").find("\"p\""),
              std::string::npos);
    EXPECT_NE(parse_error_message(R"({"dim": 1, "maps": [{"A": [[0.5]], "b": [0], "p": "x"}]})")
                  .find("maps[0].p"),
              std::string::npos);
    EXPECT_NE(parse_error_message(R"({"dim": 1, "maps": [{"A": [[0.5]], "b": [0], "p": 1, "q": 2}]})")
                  .find("unknown key \"q\""),
              std::string::npos);
    EXPECT_NE(parse_error_message(R"({"maps": []})").find("dim"), std::string::npos);
    EXPECT_NE(parse_error_message(R"({"dim": 0, "maps": []})").find("dim"), std::string::npos);
    EXPECT_NE(parse_error_message(R"({"dim": 1.5, "maps": []})").find("dim"), std::string::npos);
    EXPECT_NE(parse_error_message(R"({"dim": 1, "maps": []})").find("maps"), std::string::npos);
    EXPECT_NE(parse_error_message(R"([1, 2])").find("object"), std::string::npos);
}

TEST(ParseIfs, ParseDoesNotValidate) {
    const IfsModel m = parse_ifs(R"({"dim": 1, "maps": [{"A": [[3.0]], "b": [0], "p": 7}]})");
    EXPECT_FALSE(validate(m).passed);
}

TEST(ParseIfs, JsonRoundTrip) {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        const IfsModel m = random_model_any(rng, 4, 6);
        const IfsModel back = parse_ifs(ifs_to_json(m).dump());
        ASSERT_EQ(back.size(), m.size());
        for (std::size_t k = 0; k < m.size(); ++k) {
            EXPECT_EQ(back.map(k).linear(), m.map(k).linear());
            EXPECT_EQ(back.map(k).offset(), m.map(k).offset());
            EXPECT_EQ(back.weight(k), m.weight(k));
        }
    }
}

TEST(Validate, SierpinskiPassesWithHalfNorms) {
    const ValidationReport r = validate(sierpinski(1.0 / 3, 1.0 / 3, 1.0 / 3));
    EXPECT_TRUE(r.passed);
    EXPECT_TRUE(r.weight_sum_ok);
    ASSERT_EQ(r.maps.size(), 3u);
    for (const auto& c : r.maps) {
        EXPECT_DOUBLE_EQ(c.norm, 0.5);
        EXPECT_TRUE(c.contractive);
    }
    EXPECT_NE(r.norm_kind.find("spectral"), std::string::npos);
}

TEST(Validate, UnitNormFails) {
    const ValidationReport r = validate(point_mass(Matrix{{1.0}}, Vector{0.0}));
    EXPECT_FALSE(r.passed);
    EXPECT_DOUBLE_EQ(r.maps[0].norm, 1.0);
    EXPECT_FALSE(r.maps[0].contractive);
    EXPECT_EQ(r.problems.size(), 1u);
}

TEST(Validate, ContractionMarginIsStrict) {
    EXPECT_FALSE(validate(point_mass(Matrix{{1.0 - 1e-13}}, Vector{0.0})).passed);
    EXPECT_TRUE(validate(point_mass(Matrix{{1.0 - 1e-11}}, Vector{0.0})).passed);
}

TEST(Validate, WeightSumMustBeOne) {
    const IfsModel m(1, {AffineMap(Matrix{{0.5}}, Vector{0.0}), AffineMap(Matrix{{0.5}}, Vector{1.0})}, {0.6, 0.6});
    const ValidationReport r = validate(m);
    EXPECT_FALSE(r.passed);
    EXPECT_FALSE(r.weight_sum_ok);
    EXPECT_NEAR(r.weight_sum, 1.2, 1e-15);
    EXPECT_TRUE(r.maps[0].contractive);
}

TEST(Validate, NegativeWeightFails) {
    const IfsModel m(1, {AffineMap(Matrix{{0.5}}, Vector{0.0}), AffineMap(Matrix{{0.5}}, Vector{1.0})}, {1.5, -0.5});
    const ValidationReport r = validate(m);
    EXPECT_FALSE(r.passed);
    EXPECT_TRUE(r.weight_sum_ok);
    EXPECT_FALSE(r.maps[1].weight_nonnegative);
}

TEST(Validate, ZeroWeightMapIsRetained) {
    const IfsModel m(1, {AffineMap(Matrix{{0.5}}, Vector{0.0}), AffineMap(Matrix{{0.2}}, Vector{9.0})}, {1.0, 0.0});
    const ValidationReport r = validate(m);
    EXPECT_TRUE(r.passed);
    EXPECT_EQ(r.maps.size(), 2u);
    EXPECT_EQ(b_stats(m).mean, (Vector{0.0}));
}

TEST(Validate, RequireValidThrows) {
    EXPECT_NO_THROW(require_valid(sierpinski(0.2, 0.3, 0.5)));
    EXPECT_THROW(require_valid(point_mass(Matrix{{1.5}}, Vector{0.0})), InvalidModel);
}

TEST(ModelShape, ConstructionChecksDimensions) {
    EXPECT_THROW(AffineMap(Matrix(2, 2), Vector(3)), DimensionMismatch);
    EXPECT_THROW(AffineMap(Matrix(2, 3), Vector(2)), DimensionMismatch);
    EXPECT_THROW(IfsModel(2, {AffineMap(Matrix(1, 1), Vector(1))}, {1.0}), DimensionMismatch);
    EXPECT_THROW(IfsModel(1, {AffineMap(Matrix(1, 1), Vector(1))}, {0.5, 0.5}), DimensionMismatch);
    EXPECT_THROW(IfsModel(1, {}, {}), DimensionMismatch);
}

TEST(BStats, SierpinskiMean) {
    const double p1 = 0.2, p2 = 0.3, p3 = 0.5;
    const DiscreteStats s = b_stats(sierpinski(p1, p2, p3));
    EXPECT_NEAR(s.mean[0], p2 / 2 + p3 / 4, 1e-15);
    EXPECT_NEAR(s.mean[1], kSqrt3 * p3 / 4, 1e-15);
}

TEST(BStats, SierpinskiOffDiagonalCovariance) {
    for (auto [p1, p2, p3] : {std::tuple{1.0 / 3, 1.0 / 3, 1.0 / 3}, std::tuple{0.2, 0.3, 0.5},
                              std::tuple{0.5, 0.25, 0.25}, std::tuple{0.3, 0.3, 0.4}}) {
        const DiscreteStats s = b_stats(sierpinski(p1, p2, p3));
        EXPECT_NEAR(s.cov(0, 1), kSqrt3 / 16 * p3 * (p1 - p2), 1e-14);
        EXPECT_EQ(s.cov(0, 1), s.cov(1, 0));
    }
}

TEST(BStats, SingleMapHasZeroCovariance) {
    const DiscreteStats s = b_stats(point_mass(0.5 * Matrix::identity(2), Vector{1.0, -3.0}));
    EXPECT_EQ(s.cov, Matrix(2, 2));
    EXPECT_EQ(s.mean, (Vector{1.0, -3.0}));
}

TEST(BStats, CovarianceMatchesSecondMomentMinusOuterMean) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const DiscreteStats s = b_stats(random_model_any(rng, 4, 6));
        const Matrix expect = s.second_moment - outer(s.mean, s.mean);
        EXPECT_LE((s.cov - expect).max_abs(), 1e-14);
        EXPECT_LE((s.cov - s.cov.transpose()).max_abs(), 0.0);
        EXPECT_GE(min_eigenvalue(s.cov), -1e-10);
    }
}

TEST(BStats, PermutationInvariance) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const IfsModel m = random_model_any(rng, 4, 6);
        std::vector<std::size_t> order(m.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<AffineMap> maps;
        std::vector<double> weights;
        for (auto k : order) {
            maps.push_back(m.map(k));
            weights.push_back(m.weight(k));
        }
        const IfsModel shuffled(m.dim(), maps, weights);
        const DiscreteStats a = b_stats(m);
        const DiscreteStats b = b_stats(shuffled);
        EXPECT_LE((a.mean - b.mean).norm_inf(), 1e-15);
        EXPECT_LE((a.cov - b.cov).max_abs(), 1e-14);
    }
}

TEST(BStats, TranslationShiftsMeanOnly) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 30; ++trial) {
        const IfsModel m = random_model_any(rng, 4, 6);
        const Vector t = random_vector(rng, m.dim(), -3.0, 3.0);
        const IfsModel moved = with_offsets(m, [&](std::size_t, const Vector& b) { return b + t; });
        const DiscreteStats a = b_stats(m);
        const DiscreteStats b = b_stats(moved);
        EXPECT_LE((b.mean - (a.mean + t)).norm_inf(), 1e-12);
        EXPECT_LE((b.cov - a.cov).max_abs(), 1e-12);
    }
}

TEST(UniformLinearPart, Sierpinski) {
    const auto a = uniform_linear_part(sierpinski(0.2, 0.3, 0.5));
    ASSERT_TRUE(a.has_value());
    EXPECT_EQ(*a, 0.5 * Matrix::identity(2));
}

TEST(UniformLinearPart, DisagreementGivesEmpty) {
    const IfsModel m(2, {AffineMap(0.5 * Matrix::identity(2), Vector(2)), AffineMap(0.4 * Matrix::identity(2), Vector(2))},
                     {0.5, 0.5});
    EXPECT_FALSE(uniform_linear_part(m).has_value());
}

TEST(UniformLinearPart, SingleMapIsVacuouslyUniform) {
    const Matrix a{{0.1, 0.2}, {0.3, 0.4}};
    const auto got = uniform_linear_part(point_mass(a, Vector{1.0, 1.0}));
    ASSERT_TRUE(got.has_value());
    EXPECT_EQ(*got, a);
}

TEST(UniformLinearPart, ToleranceIsAbsolute1e14) {
    const Matrix a{{0.5}};
    const IfsModel close(1, {AffineMap(a, Vector{0.0}), AffineMap(Matrix{{0.5 + 5e-15}}, Vector{1.0})}, {0.5, 0.5});
    const IfsModel far(1, {AffineMap(a, Vector{0.0}), AffineMap(Matrix{{0.5 + 1e-13}}, Vector{1.0})}, {0.5, 0.5});
    EXPECT_TRUE(uniform_linear_part(close).has_value());
    EXPECT_FALSE(uniform_linear_part(far).has_value());
}

TEST(KahanSum, RecoversLowOrderBits) {
    KahanSum s;
    s.add(1.0);
    for (int i = 0; i < 10; ++i) s.add(1e-16);
    EXPECT_NEAR(s.value(), 1.0 + 1e-15, 1e-16);
}
