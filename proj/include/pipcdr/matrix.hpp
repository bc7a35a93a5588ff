#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "pipcdr/errors.hpp"

namespace pipcdr {

// Dense row-major matrix of doubles. Everything in this library that carries
// batches, parameters, or embeddings is one of these.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows = init.size();
        cols = rows ? init.begin()->size() : 0;
        data.reserve(rows * cols);
        for (const auto& r : init) {
            if (r.size() != cols) throw RaggedRows("initializer rows differ in length");
            for (double v : r) data.push_back(v);
        }
    }

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline Matrix vconcat(const Matrix& a, const Matrix& b) {
    if (a.rows == 0) return b;
    if (b.rows == 0) return a;
    if (a.cols != b.cols) throw DimMismatch("vconcat: column counts differ");
    Matrix out(a.rows + b.rows, a.cols);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    return out;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Headerless CSV, '.' decimal separator, %.17g so values round-trip exactly.
inline void save_csv(const Matrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (j) out << ',';
            out << format_double(m.at(i, j));
        }
        out << '\n';
    }
}

inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    const char* s = cell.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    while (end && *end == ' ') ++end;
    if (end == s || (end && *end != '\0'))
        throw ParseError("non-numeric cell at row " + std::to_string(row + 1) + ", column " +
                         std::to_string(col + 1));
    return v;
}

inline void save_labels_csv(const std::vector<int>& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    for (int v : labels) out << v << '\n';
}

inline Matrix load_csv_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open: " + path);
    Matrix m;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            vals.push_back(parse_cell(cell, row, col));
            ++col;
        }
        if (line.size() && line.back() == ',') vals.push_back(parse_cell("", row, col));
        if (row == 0) {
            m.cols = vals.size();
        } else if (vals.size() != m.cols) {
            throw RaggedRows("row " + std::to_string(row + 1) + " has " + std::to_string(vals.size()) +
                             " cells, expected " + std::to_string(m.cols));
        }
        m.data.insert(m.data.end(), vals.begin(), vals.end());
        ++row;
    }
    m.rows = row;
    return m;
}

inline std::vector<int> load_labels_csv(const std::string& path) {
    const Matrix m = load_csv_matrix(path);
    if (m.rows > 0 && m.cols != 1)
        throw ParseError("label file must have one column, got " + std::to_string(m.cols));
    std::vector<int> out(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double v = m.at(i, 0);
        if (std::abs(v - std::round(v)) > 1e-9)
            throw ParseError("label at row " + std::to_string(i + 1) + " is not an integer");
        out[i] = static_cast<int>(std::llround(v));
    }
    return out;
}

} // namespace pipcdr
