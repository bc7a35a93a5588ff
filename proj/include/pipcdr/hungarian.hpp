#pragma once

#include <limits>
#include <vector>

#include "pipcdr/matrix.hpp"

namespace pipcdr {

// Minimum-cost perfect matching on a square cost matrix via the potentials
// form of the Kuhn-Munkres algorithm, O(n^3). Returns col index per row.
inline std::vector<std::size_t> hungarian_min_cost(const Matrix& cost) {
    if (cost.rows != cost.cols) throw DimMismatch("hungarian: matrix must be square");
    const int n = static_cast<int>(cost.rows);
    if (n == 0) return {};
    const double INF = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, INF);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = INF;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<std::size_t> row_to_col(n);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) row_to_col[p[j] - 1] = static_cast<std::size_t>(j - 1);
    return row_to_col;
}

} // namespace pipcdr
