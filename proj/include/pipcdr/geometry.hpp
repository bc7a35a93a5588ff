#pragma once

#include <algorithm>
#include <cmath>

#include "pipcdr/matrix.hpp"

namespace pipcdr {

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double row_norm(const double* a, std::size_t n) { return std::sqrt(dot(a, a, n)); }

// Rows scaled to unit euclidean norm. A row with norm <= 1e-12 has no
// direction to keep, so it is an error rather than a silent zero.
inline Matrix l2_normalize_rows(const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double n = row_norm(x.row(i), x.cols);
        if (n <= 1e-12) throw ZeroRow("row " + std::to_string(i) + " has norm <= 1e-12");
        for (std::size_t j = 0; j < x.cols; ++j) out.at(i, j) = x.at(i, j) / n;
    }
    return out;
}

// Pulls a gradient w.r.t. the unit rows back through l2_normalize_rows:
// with u = z/|z|,  dL/dz = (g - (g.u) u) / |z|.
inline Matrix l2_normalize_rows_backward(const Matrix& raw, const Matrix& grad_unit) {
    if (!raw.same_shape(grad_unit)) throw DimMismatch("normalize backward: shape mismatch");
    Matrix out(raw.rows, raw.cols);
    for (std::size_t i = 0; i < raw.rows; ++i) {
        const double n = row_norm(raw.row(i), raw.cols);
        if (n <= 1e-12) throw ZeroRow("row " + std::to_string(i) + " has norm <= 1e-12");
        double gu = 0.0;
        for (std::size_t j = 0; j < raw.cols; ++j) gu += grad_unit.at(i, j) * raw.at(i, j) / n;
        for (std::size_t j = 0; j < raw.cols; ++j) {
            const double u = raw.at(i, j) / n;
            out.at(i, j) = (grad_unit.at(i, j) - gu * u) / n;
        }
    }
    return out;
}

// Cosine similarity of two unit vectors, clamped into [-1, 1] so downstream
// acos/sqrt never sees 1 + 1e-16.
inline double cosine_sim(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) throw DimMismatch("cosine_sim: lengths differ");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return std::clamp(s, -1.0, 1.0);
}

inline double cosine_sim(const double* u, const double* v, std::size_t n) {
    return std::clamp(dot(u, v, n), -1.0, 1.0);
}

// N x N matrix of pairwise cosine similarities of unit rows. Upper triangle
// computed once and mirrored, so the result is exactly symmetric.
inline Matrix pairwise_cosine(const Matrix& z) {
    Matrix out(z.rows, z.rows);
    for (std::size_t i = 0; i < z.rows; ++i) {
        out.at(i, i) = std::clamp(dot(z.row(i), z.row(i), z.cols), -1.0, 1.0);
        for (std::size_t j = i + 1; j < z.rows; ++j) {
            const double s = cosine_sim(z.row(i), z.row(j), z.cols);
            out.at(i, j) = s;
            out.at(j, i) = s;
        }
    }
    return out;
}

} // namespace pipcdr
