#pragma once

// Random-iteration sampling of the invariant measure ("chaos game").
//
// Starting from the unweighted mean of the offsets, each step draws k with
// probability p_k by inverse CDF over the ascending-k cumulative weights and
// applies S_k. Draws come from xoshiro256** seeded through splitmix64, so a
// given (model, n, burn_in, seed) reproduces bit-identical output.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ifsm/errors.hpp"
#include "ifsm/linalg.hpp"
#include "ifsm/model.hpp"
#include "ifsm/random.hpp"

namespace ifsm {

inline constexpr std::size_t kDefaultBurnIn = 100;

struct EmpiricalStats {
    std::size_t n = 0;
    Vector mean;
    /// Unbiased, divisor n - 1.
    Matrix cov;
    /// sqrt(cov_ii / n) per coordinate.
    Vector mean_stderr;
    std::uint64_t seed = 0;
    std::size_t burn_in = 0;
    std::size_t shards = 1;
};

/// Streaming mean and scatter matrix (Welford), mergeable with the exact
/// pooled formulas.
class MomentAccumulator {
public:
    explicit MomentAccumulator(std::size_t dim) : dim_(dim), mean_(dim, 0.0), scatter_(dim * dim, 0.0), delta_(dim) {}

    void add(std::span<const double> x) {
        ++count_;
        const double inv = 1.0 / static_cast<double>(count_);
        for (std::size_t i = 0; i < dim_; ++i) {
            delta_[i] = x[i] - mean_[i];
            mean_[i] += delta_[i] * inv;
        }
        // scatter += delta_old * (x - mean_new)^T
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t j = 0; j < dim_; ++j) scatter_[i * dim_ + j] += delta_[i] * (x[j] - mean_[j]);
    }

    void merge(const MomentAccumulator& o) {
        if (o.count_ == 0) return;
        if (count_ == 0) {
            *this = o;
            return;
        }
        const double na = static_cast<double>(count_);
        const double nb = static_cast<double>(o.count_);
        const double n = na + nb;
        for (std::size_t i = 0; i < dim_; ++i) delta_[i] = o.mean_[i] - mean_[i];
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t j = 0; j < dim_; ++j)
                scatter_[i * dim_ + j] += o.scatter_[i * dim_ + j] + delta_[i] * delta_[j] * na * nb / n;
        for (std::size_t i = 0; i < dim_; ++i) mean_[i] += delta_[i] * nb / n;
        count_ += o.count_;
    }

    std::size_t count() const noexcept { return count_; }

    Vector mean() const { return Vector(mean_); }

    Matrix covariance() const {
        Matrix c(dim_, dim_);
        const double denom = static_cast<double>(count_ - 1);
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t j = 0; j < dim_; ++j)
                c(i, j) = 0.5 * (scatter_[i * dim_ + j] + scatter_[j * dim_ + i]) / denom;
        return c;
    }

private:
    std::size_t dim_;
    std::size_t count_ = 0;
    std::vector<double> mean_;
    std::vector<double> scatter_;
    std::vector<double> delta_;
};

/// One chaos-game orbit.
class ChaosGame {
public:
    ChaosGame(const IfsModel& m, std::uint64_t seed) : dim_(m.dim()), rng_(seed), x_(m.dim(), 0.0), next_(m.dim()) {
        const std::size_t d = dim_;
        double acc = 0.0;
        for (std::size_t k = 0; k < m.size(); ++k) {
            const auto a = m.map(k).linear().values();
            linear_.insert(linear_.end(), a.begin(), a.end());
            const auto b = m.map(k).offset().values();
            offset_.insert(offset_.end(), b.begin(), b.end());
            acc += m.weight(k);
            cumulative_.push_back(acc);
            if (m.weight(k) > 0.0) last_positive_ = k;
            for (std::size_t i = 0; i < d; ++i) x_[i] += b[i] / static_cast<double>(m.size());
        }
    }

    /// Index k with u < cumulative_k, u uniform on [0, 1).
    std::size_t pick() noexcept {
        const double u = rng_.uniform();
        for (std::size_t k = 0; k < cumulative_.size(); ++k) {
            if (u < cumulative_[k]) return k;
        }
        return last_positive_;
    }

    std::span<const double> step() noexcept {
        const std::size_t k = pick();
        const std::size_t d = dim_;
        const double* a = linear_.data() + k * d * d;
        const double* b = offset_.data() + k * d;
        for (std::size_t i = 0; i < d; ++i) {
            double acc = b[i];
            for (std::size_t j = 0; j < d; ++j) acc += a[i * d + j] * x_[j];
            next_[i] = acc;
        }
        x_.swap(next_);
        return x_;
    }

    std::span<const double> position() const noexcept { return x_; }

private:
    std::size_t dim_;
    Xoshiro256StarStar rng_;
    std::vector<double> linear_;
    std::vector<double> offset_;
    std::vector<double> cumulative_;
    std::size_t last_positive_ = 0;
    std::vector<double> x_;
    std::vector<double> next_;
};

namespace detail {

inline MomentAccumulator run_stream(const IfsModel& m, std::size_t n, std::size_t burn_in, std::uint64_t seed) {
    ChaosGame game(m, seed);
    for (std::size_t i = 0; i < burn_in; ++i) game.step();
    MomentAccumulator acc(m.dim());
    for (std::size_t i = 0; i < n; ++i) acc.add(game.step());
    return acc;
}

inline EmpiricalStats finish(const MomentAccumulator& acc, std::size_t dim, std::uint64_t seed, std::size_t burn_in,
                             std::size_t shards) {
    EmpiricalStats s;
    s.n = acc.count();
    s.mean = acc.mean();
    s.cov = acc.covariance();
    s.mean_stderr = Vector(dim);
    for (std::size_t i = 0; i < dim; ++i) s.mean_stderr[i] = std::sqrt(std::max(s.cov(i, i), 0.0) / static_cast<double>(s.n));
    s.seed = seed;
    s.burn_in = burn_in;
    s.shards = shards;
    return s;
}

}  // namespace detail

/// Empirical mean and covariance of n chaos-game points after burn_in
/// discarded steps. Single stream; this is the reference result.
inline EmpiricalStats sample(const IfsModel& m, std::size_t n, std::size_t burn_in, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("sample: n must be at least 2");
    require_valid(m);
    return detail::finish(detail::run_stream(m, n, burn_in, seed), m.dim(), seed, burn_in, 1);
}

/// Splits n across `shards` independent streams (stream i seeded with
/// seed + i, the first n % shards streams taking one extra point), runs
/// them on separate threads and merges in stream order. shards == 1 is
/// identical to sample().
inline EmpiricalStats sample_sharded(const IfsModel& m, std::size_t n, std::size_t burn_in, std::uint64_t seed,
                                     std::size_t shards) {
    if (n < 2) throw std::invalid_argument("sample: n must be at least 2");
    if (shards < 1 || shards > n) throw std::invalid_argument("sample: shards must be in [1, n]");
    if (shards == 1) return sample(m, n, burn_in, seed);
    require_valid(m);

    std::vector<MomentAccumulator> parts(shards, MomentAccumulator(m.dim()));
    {
        std::vector<std::jthread> workers;
        workers.reserve(shards);
        for (std::size_t s = 0; s < shards; ++s) {
            const std::size_t count = n / shards + (s < n % shards ? 1 : 0);
            workers.emplace_back([&, s, count] { parts[s] = detail::run_stream(m, count, burn_in, seed + s); });
        }
    }
    MomentAccumulator total(m.dim());
    for (const auto& p : parts) total.merge(p);
    return detail::finish(total, m.dim(), seed, burn_in, shards);
}

// ---------------------------------------------------------------------------
// Rasterization (d = 2)
// ---------------------------------------------------------------------------

struct BoundingBox {
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 0.0;
    double max_y = 0.0;
};

struct RasterImage {
    std::size_t width = 0;
    std::size_t height = 0;
    BoundingBox bbox;
    /// Row-major, row 0 at the top (max_y) of the box.
    std::vector<std::uint64_t> counts;
    std::size_t dropped = 0;

    std::uint64_t at(std::size_t row, std::size_t col) const { return counts[row * width + col]; }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
};

/// Box spanned by the maps' fixed points, padded by 5% of its extent on
/// each side. A degenerate axis is padded by 5% of the larger extent (or
/// of 1 when every fixed point coincides).
inline BoundingBox default_bbox(const IfsModel& m) {
    if (m.dim() != 2) throw DimensionUnsupported("default_bbox: only d = 2 is supported");
    constexpr double inf = std::numeric_limits<double>::infinity();
    BoundingBox box{inf, inf, -inf, -inf};
    for (const auto& s : m.maps()) {
        const Vector fixed = solve(Matrix::identity(2) - s.linear(), s.offset());
        box.min_x = std::min(box.min_x, fixed[0]);
        box.max_x = std::max(box.max_x, fixed[0]);
        box.min_y = std::min(box.min_y, fixed[1]);
        box.max_y = std::max(box.max_y, fixed[1]);
    }
    const double span_x = box.max_x - box.min_x;
    const double span_y = box.max_y - box.min_y;
    double fallback = std::max(span_x, span_y);
    if (fallback == 0.0) fallback = 1.0;
    const double pad_x = 0.05 * (span_x > 0.0 ? span_x : fallback);
    const double pad_y = 0.05 * (span_y > 0.0 ? span_y : fallback);
    return {box.min_x - pad_x, box.min_y - pad_y, box.max_x + pad_x, box.max_y + pad_y};
}

/// Bins n chaos-game points (after burn_in) into a width x height grid.
/// Points outside the box are dropped and counted.
inline RasterImage raster(const IfsModel& m, std::size_t n, std::size_t burn_in, std::uint64_t seed, std::size_t width,
                          std::size_t height, std::optional<BoundingBox> bbox = std::nullopt) {
    if (m.dim() != 2) throw DimensionUnsupported("raster: only d = 2 is supported, got d = " + std::to_string(m.dim()));
    if (width < 1 || height < 1) throw std::invalid_argument("raster: width and height must be at least 1");
    require_valid(m);

    RasterImage img;
    img.width = width;
    img.height = height;
    img.bbox = bbox ? *bbox : default_bbox(m);
    img.counts.assign(width * height, 0);
    const BoundingBox& b = img.bbox;
    if (!(b.max_x > b.min_x) || !(b.max_y > b.min_y)) throw std::invalid_argument("raster: empty bounding box");

    const double sx = static_cast<double>(width) / (b.max_x - b.min_x);
    const double sy = static_cast<double>(height) / (b.max_y - b.min_y);
    ChaosGame game(m, seed);
    for (std::size_t i = 0; i < burn_in; ++i) game.step();
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = game.step();
        if (p[0] < b.min_x || p[0] > b.max_x || p[1] < b.min_y || p[1] > b.max_y) {
            ++img.dropped;
            continue;
        }
        const auto col = std::min(width - 1, static_cast<std::size_t>((p[0] - b.min_x) * sx));
        const auto row = std::min(height - 1, static_cast<std::size_t>((b.max_y - p[1]) * sy));
        ++img.counts[row * width + col];
    }
    return img;
}

/// Binary PGM (P5, maxval 255); counts map to round(255 log(1+c) / log(1+c_max)).
inline std::string to_pgm(const RasterImage& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::uint64_t c_max = 0;
    for (auto c : img.counts) c_max = std::max(c_max, c);
    const double denom = std::log1p(static_cast<double>(c_max));
    out.reserve(out.size() + img.counts.size());
    for (auto c : img.counts) {
        const double level = c_max == 0 ? 0.0 : std::round(255.0 * std::log1p(static_cast<double>(c)) / denom);
        out.push_back(static_cast<char>(static_cast<unsigned char>(level)));
    }
    return out;
}

inline void write_pgm(const RasterImage& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    const std::string bytes = to_pgm(img);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("failed writing " + path);
}

}  // namespace ifsm
