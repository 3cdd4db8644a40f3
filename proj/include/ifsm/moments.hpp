#pragma once

// Exact first and second moments of the invariant measure of an affine IFS.
//
// Pushing the coordinate functions and their products through the
// invariance identity  int f dmu = sum_k p_k int f(S_k x) dmu(x)  gives
//
//   [I - sum_k p_k A_k] EX = E[B]
//   [I (x) I - sum_k p_k A_k (x) A_k] vec(E[X X^T])
//       = vec(sum_k p_k [b_k (A_k EX)^T + (A_k EX) b_k^T + b_k b_k^T])
//
// and, when every A_k equals A, the covariance solves the discrete
// Lyapunov equation  C - A C A^T = Cov[B].
//
// covariance_by_iteration() reaches the same numbers by iterating the
// moment pushforward and shares no code with the direct solves.

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "ifsm/errors.hpp"
#include "ifsm/linalg.hpp"
#include "ifsm/model.hpp"

namespace ifsm {

enum class MomentPath { EqualLinearFastPath, GeneralKroneckerPath, FixedPointIteration };

enum class PathChoice { Auto, General, Fast };

inline const char* to_string(MomentPath p) noexcept {
    switch (p) {
        case MomentPath::EqualLinearFastPath: return "EqualLinearFastPath";
        case MomentPath::GeneralKroneckerPath: return "GeneralKroneckerPath";
        case MomentPath::FixedPointIteration: return "FixedPointIteration";
    }
    return "unknown";
}

struct MomentReport {
    Vector mean;
    /// Entry (i, j) is E[x_i x_j].
    Matrix second_moment;
    Matrix cov;
    MomentPath path = MomentPath::GeneralKroneckerPath;
    /// Infinity-norm residual of the underlying solves, or the last step
    /// size for the iteration.
    double residual = 0.0;
    std::optional<long> iterations;
};

class NoConvergence : public std::runtime_error {
public:
    NoConvergence(const std::string& what, MomentReport partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}

    const MomentReport& partial() const noexcept { return partial_; }

private:
    MomentReport partial_;
};

inline constexpr double kIterationDefaultTol = 1e-12;
inline constexpr long kIterationDefaultMaxIter = 100'000;

namespace detail {

struct Solved {
    Vector x;
    double residual;
};

inline Solved solve_with_residual(const Matrix& m, const Vector& rhs) {
    Vector x = solve(m, rhs);
    const double r = residual_inf(m, x, rhs);
    return {std::move(x), r};
}

inline Solved solve_mean(const IfsModel& m) {
    const std::size_t d = m.dim();
    Matrix sys = Matrix::identity(d);
    for (std::size_t k = 0; k < m.size(); ++k) sys -= m.weight(k) * m.map(k).linear();
    return solve_with_residual(sys, b_stats(m).mean);
}

struct SecondMoment {
    Matrix value;
    double residual;
};

inline SecondMoment solve_second_moment(const IfsModel& m, const Vector& ex) {
    const std::size_t d = m.dim();
    Matrix sys = Matrix::identity(d * d);
    Matrix rhs(d, d);
    for (std::size_t k = 0; k < m.size(); ++k) {
        const double p = m.weight(k);
        const Matrix& a = m.map(k).linear();
        const Vector& b = m.map(k).offset();
        sys -= p * kron(a, a);
        const Vector aex = a * ex;
        rhs += p * (outer(b, aex) + outer(aex, b) + outer(b, b));
    }
    const Solved s = solve_with_residual(sys, vec(rhs));
    return {unvec(s.x, d).symmetrized(), s.residual};
}

struct Lyapunov {
    Matrix value;
    double residual;
};

inline Lyapunov solve_lyapunov(const Matrix& a, const Matrix& c) {
    if (!a.is_square() || !c.is_square() || a.rows() != c.rows()) {
        throw DimensionMismatch("covariance_equal_linear: a and b_cov must be d x d");
    }
    const std::size_t d = a.rows();
    const Matrix sys = Matrix::identity(d * d) - kron(a, a);
    const Solved s = solve_with_residual(sys, vec(c));
    return {unvec(s.x, d).symmetrized(), s.residual};
}

}  // namespace detail

/// EX from the pivoted solve of [I - sum p_k A_k] EX = E[B].
inline Vector mean(const IfsModel& m) {
    require_valid(m);
    return detail::solve_mean(m).x;
}

/// E[X X^T] through the d^2 x d^2 Kronecker system, valid for distinct A_k.
inline Matrix second_moment(const IfsModel& m) {
    require_valid(m);
    return detail::solve_second_moment(m, detail::solve_mean(m).x).value;
}

/// Solution R of R - a R a^T = b_cov, i.e. [I (x) I - a (x) a]^{-1} vec(b_cov).
inline Matrix covariance_equal_linear(const Matrix& a, const Matrix& b_cov) {
    return detail::solve_lyapunov(a, b_cov).value;
}

/// Mean, second moment and covariance. Auto picks the equal-linear-part
/// path when uniform_linear_part() applies and the Kronecker path otherwise.
/// Forcing Fast on maps with distinct linear parts throws PreconditionFailed.
inline MomentReport covariance(const IfsModel& m, PathChoice choice = PathChoice::Auto) {
    require_valid(m);
    const std::optional<Matrix> shared = uniform_linear_part(m);
    if (choice == PathChoice::Fast && !shared) {
        throw PreconditionFailed("equal-linear-part path requested but the maps' linear parts differ");
    }
    const bool fast = choice == PathChoice::Fast || (choice == PathChoice::Auto && shared.has_value());

    const detail::Solved ex = detail::solve_mean(m);
    MomentReport report;
    report.mean = ex.x;
    if (fast) {
        const detail::Lyapunov c = detail::solve_lyapunov(*shared, b_stats(m).cov);
        report.cov = c.value;
        report.second_moment = (c.value + outer(ex.x, ex.x)).symmetrized();
        report.path = MomentPath::EqualLinearFastPath;
        report.residual = std::max(ex.residual, c.residual);
    } else {
        const detail::SecondMoment s = detail::solve_second_moment(m, ex.x);
        report.second_moment = s.value;
        report.cov = (s.value - outer(ex.x, ex.x)).symmetrized();
        report.path = MomentPath::GeneralKroneckerPath;
        report.residual = std::max(ex.residual, s.residual);
    }
    return report;
}

/// Iterates the moment pushforward from m_0 = 0, M_0 = 0:
///   m' = sum p_k (A_k m + b_k)
///   M' = sum p_k [A_k M A_k^T + (A_k m) b_k^T + b_k (A_k m)^T + b_k b_k^T]
/// until both steps are below tol in the infinity norm. Uses products only.
inline MomentReport covariance_by_iteration(const IfsModel& m, double tol = kIterationDefaultTol,
                                            long max_iter = kIterationDefaultMaxIter) {
    if (!(tol > 0.0)) throw std::invalid_argument("covariance_by_iteration: tol must be positive");
    if (max_iter < 1) throw std::invalid_argument("covariance_by_iteration: max_iter must be at least 1");
    require_valid(m);

    const std::size_t d = m.dim();
    Vector mu(d);
    Matrix second(d, d);
    double step = 0.0;
    long n = 0;
    bool converged = false;
    while (n < max_iter) {
        Vector mu_next(d);
        Matrix second_next(d, d);
        for (std::size_t k = 0; k < m.size(); ++k) {
            const double p = m.weight(k);
            const Matrix& a = m.map(k).linear();
            const Vector& b = m.map(k).offset();
            const Vector amu = a * mu;
            mu_next += p * (amu + b);
            second_next += p * (a * second * a.transpose() + outer(amu, b) + outer(b, amu) + outer(b, b));
        }
        second_next = second_next.symmetrized();
        step = std::max((mu_next - mu).norm_inf(), (second_next - second).max_abs());
        mu = std::move(mu_next);
        second = std::move(second_next);
        ++n;
        if (step < tol) {
            converged = true;
            break;
        }
    }

    MomentReport report;
    report.mean = mu;
    report.second_moment = second;
    report.cov = (second - outer(mu, mu)).symmetrized();
    report.path = MomentPath::FixedPointIteration;
    report.residual = step;
    report.iterations = n;
    if (!converged) {
        throw NoConvergence("moment iteration did not reach tol after " + std::to_string(n) + " iterations",
                            std::move(report));
    }
    return report;
}

struct UncorrelatedResult {
    double cov_x_ij = 0.0;
    double cov_b_ij = 0.0;
    bool x_uncorrelated = false;
    bool b_uncorrelated = false;
    /// True when the maps share a diagonal linear part, where the two
    /// flags must agree.
    bool corollary_applicable = false;
};

inline UncorrelatedResult uncorrelated_test(const IfsModel& m, std::size_t i, std::size_t j, double tol) {
    if (i >= m.dim() || j >= m.dim()) {
        throw std::out_of_range("uncorrelated_test: coordinate index out of range for dim " +
                                std::to_string(m.dim()));
    }
    const MomentReport x = covariance(m);
    const DiscreteStats b = b_stats(m);

    UncorrelatedResult r;
    r.cov_x_ij = x.cov(i, j);
    r.cov_b_ij = b.cov(i, j);
    r.x_uncorrelated = std::abs(r.cov_x_ij) < tol;
    r.b_uncorrelated = std::abs(r.cov_b_ij) < tol;
    if (const auto a = uniform_linear_part(m)) {
        bool diagonal = true;
        for (std::size_t r0 = 0; r0 < m.dim(); ++r0)
            for (std::size_t c0 = 0; c0 < m.dim(); ++c0)
                if (r0 != c0 && std::abs((*a)(r0, c0)) > kLinearPartTolerance) diagonal = false;
        r.corollary_applicable = diagonal;
    }
    return r;
}

}  // namespace ifsm
