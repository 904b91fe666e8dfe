#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "lipfield/errors.hpp"

namespace lipfield {

using DenseVector = std::vector<double>;

/// Row-major dense matrix of doubles. Row scaling is the hot path, hence the layout.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    DenseMatrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) throw DimensionError("ragged initializer for DenseMatrix");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& storage() const { return data_; }
    std::vector<double>& storage() { return data_; }

    bool operator==(const DenseMatrix&) const = default;

    DenseMatrix transposed() const {
        DenseMatrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

enum class NormKind { Inf, One, Spectral };

inline std::string to_string(NormKind k) {
    switch (k) {
        case NormKind::Inf: return "inf";
        case NormKind::One: return "one";
        case NormKind::Spectral: return "spectral";
    }
    return "?";
}

/// Deterministic 64-bit generator (splitmix64 state advance). Identical seed
/// gives an identical stream on every platform; distributions below avoid the
/// standard library's unspecified algorithms for the same reason.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; draws exactly two uniforms per call.
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Derive an independent stream, e.g. one per subsystem.
    Rng fork(std::uint64_t salt) { return Rng(next_u64() ^ (salt * 0x9e3779b97f4a7c15ull)); }

    std::uint64_t next_index(std::uint64_t n) { return n ? next_u64() % n : 0; }

private:
    std::uint64_t state_;
};

inline DenseVector matvec(const DenseMatrix& a, const DenseVector& v) {
    if (a.cols() != v.size())
        throw DimensionError("matvec: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                             " * vector of length " + std::to_string(v.size()));
    DenseVector out(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* row = a.row_ptr(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) acc += row[c] * v[c];
        out[r] = acc;
    }
    return out;
}

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                             std::to_string(b.rows()));
    DenseMatrix out(a.rows(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double s = a(r, k);
            const double* brow = b.row_ptr(k);
            double* orow = out.row_ptr(r);
            for (std::size_t c = 0; c < b.cols(); ++c) orow[c] += s * brow[c];
        }
    }
    return out;
}

namespace detail {

inline double row_abs_sum_max(const DenseMatrix& m) {
    double best = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = m.row_ptr(r);
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) s += std::abs(row[c]);
        if (s > best) best = s;
    }
    return best;
}

inline double col_abs_sum_max(const DenseMatrix& m) {
    std::vector<double> sums(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = m.row_ptr(r);
        for (std::size_t c = 0; c < m.cols(); ++c) sums[c] += std::abs(row[c]);
    }
    double best = 0.0;
    for (double s : sums)
        if (s > best) best = s;
    return best;
}

/// Largest singular value by power iteration on M^T M with a seeded random
/// start; also reports the right/left singular pair for gradient use.
struct SpectralResult {
    double sigma = 0.0;
    DenseVector u; // left singular vector, length rows
    DenseVector v; // right singular vector, length cols
};

inline SpectralResult spectral_power_iteration(const DenseMatrix& m, int iterations = 100,
                                               std::uint64_t seed = 0x5eed5eedull) {
    Rng rng(seed);
    const std::size_t n = m.cols();
    DenseVector v(n);
    for (auto& x : v) x = rng.normal();

    auto normalize = [](DenseVector& x) {
        double nrm = 0.0;
        for (double e : x) nrm += e * e;
        nrm = std::sqrt(nrm);
        if (nrm > 0.0)
            for (auto& e : x) e /= nrm;
        return nrm;
    };
    normalize(v);

    DenseVector mv(m.rows());
    for (int it = 0; it < iterations; ++it) {
        // v <- normalize(M^T (M v))
        mv = matvec(m, v);
        for (auto& x : v) x = 0.0;
        for (std::size_t r = 0; r < m.rows(); ++r) {
            const double* row = m.row_ptr(r);
            const double s = mv[r];
            for (std::size_t c = 0; c < n; ++c) v[c] += row[c] * s;
        }
        if (normalize(v) == 0.0) return {0.0, DenseVector(m.rows(), 0.0), DenseVector(n, 0.0)};
    }

    SpectralResult res;
    res.v = v;
    res.u = matvec(m, v);
    double sigma = 0.0;
    for (double e : res.u) sigma += e * e;
    res.sigma = std::sqrt(sigma);
    if (res.sigma > 0.0)
        for (auto& e : res.u) e /= res.sigma;
    return res;
}

} // namespace detail

/// inf: max absolute row sum. one: max absolute column sum.
/// spectral: largest singular value (power iteration, 100 iterations).
inline double matrix_norm(const DenseMatrix& m, NormKind kind) {
    if (m.empty()) throw DimensionError("matrix_norm: empty matrix");
    switch (kind) {
        case NormKind::Inf: return detail::row_abs_sum_max(m);
        case NormKind::One: return detail::col_abs_sum_max(m);
        case NormKind::Spectral: return detail::spectral_power_iteration(m).sigma;
    }
    throw DomainError("matrix_norm: unknown kind");
}

inline double dot(const DenseVector& a, const DenseVector& b) {
    if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm_inf(const DenseVector& v) {
    double best = 0.0;
    for (double e : v) best = std::max(best, std::abs(e));
    return best;
}

inline double norm2(const DenseVector& v) {
    double acc = 0.0;
    for (double e : v) acc += e * e;
    return std::sqrt(acc);
}

inline bool all_finite(const DenseVector& v) {
    for (double e : v)
        if (!std::isfinite(e)) return false;
    return true;
}

inline bool all_finite(const DenseMatrix& m) {
    for (double e : m.storage())
        if (!std::isfinite(e)) return false;
    return true;
}

/// softplus(x) = ln(1 + e^x), evaluated without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Inverse of softplus: ln(e^y - 1) for y > 0, evaluated without overflow.
inline double inv_softplus(double y) {
    if (y <= 0.0) throw DomainError("inv_softplus: argument must be positive");
    return y + std::log1p(-std::exp(-y));
}

/// d softplus / dx.
inline double logistic(double x) { return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

} // namespace lipfield
