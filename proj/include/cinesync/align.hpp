#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "cinesync/errors.hpp"
#include "cinesync/matrix.hpp"

namespace cinesync {

/// Monotone correspondence between two sequences: starts at (0,0), ends at
/// (N-1, M-1), each step advances i, j or both by exactly one.
struct AlignmentPath {
    std::vector<std::pair<int, int>> pairs;
    double total_cost = 0.0;
};

/// Dynamic time warping with Euclidean per-pair cost and step set
/// {(1,1),(1,0),(0,1)}. Backtracking ties resolve diagonal first, then i-step,
/// then j-step, so paths are platform-stable. `band` > 0 restricts the search
/// to |i - j| <= max(band, |N - M|) (Sakoe-Chiba); 0 means exact full search.
inline AlignmentPath dtw(const Matrix& p, const Matrix& q, int band = 0) {
    const int n = p.rows();
    const int m = q.rows();
    if (n < 1 || m < 1) throw std::invalid_argument("dtw: empty input sequence");
    if (p.cols() != q.cols()) throw ShapeError("dtw: embedding widths differ");

    const double inf = std::numeric_limits<double>::infinity();
    const int window = band > 0 ? std::max(band, std::abs(n - m)) : 0;
    auto in_band = [&](int i, int j) { return window == 0 || std::abs(i - j) <= window; };

    Matrix acc(n, m, inf);
    std::vector<uint8_t> move(static_cast<size_t>(n) * m, 0); // 1 diag, 2 i-step, 3 j-step
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            if (!in_band(i, j)) continue;
            const double cost = std::sqrt(squared_distance(p.row(i), q.row(j)));
            if (i == 0 && j == 0) {
                acc(0, 0) = cost;
                continue;
            }
            const double diag = (i > 0 && j > 0) ? acc(i - 1, j - 1) : inf;
            const double up = i > 0 ? acc(i - 1, j) : inf;
            const double left = j > 0 ? acc(i, j - 1) : inf;
            double best;
            uint8_t via;
            if (diag <= up && diag <= left) {
                best = diag;
                via = 1;
            } else if (up <= left) {
                best = up;
                via = 2;
            } else {
                best = left;
                via = 3;
            }
            acc(i, j) = cost + best;
            move[static_cast<size_t>(i) * m + j] = via;
        }
    }

    AlignmentPath path;
    path.total_cost = acc(n - 1, m - 1);
    int i = n - 1, j = m - 1;
    path.pairs.emplace_back(i, j);
    while (i != 0 || j != 0) {
        switch (move[static_cast<size_t>(i) * m + j]) {
        case 1: --i, --j; break;
        case 2: --i; break;
        case 3: --j; break;
        default: throw std::logic_error("dtw: broken backtrack");
        }
        path.pairs.emplace_back(i, j);
    }
    std::reverse(path.pairs.begin(), path.pairs.end());
    return path;
}

/// Collapses a path to a per-frame map i -> j using the smallest j paired
/// with each i; the result is total and non-decreasing.
inline std::vector<int> warp(const AlignmentPath& path, int n) {
    std::vector<int> mapping(n, -1);
    for (const auto& [i, j] : path.pairs) {
        if (i < 0 || i >= n) throw std::invalid_argument("warp: path index out of range");
        if (mapping[i] < 0) mapping[i] = j;
    }
    for (int i = 0; i < n; ++i)
        if (mapping[i] < 0) throw std::invalid_argument("warp: path does not cover every frame");
    return mapping;
}

/// Aligns each target to the shared reference independently; the returned
/// warps map reference frame indices onto each target.
inline std::vector<std::vector<int>> sync_group(const Matrix& reference,
                                                const std::vector<Matrix>& targets, int band = 0) {
    if (targets.empty()) throw std::invalid_argument("sync_group: no targets");
    std::vector<std::vector<int>> warps;
    warps.reserve(targets.size());
    for (const auto& target : targets)
        warps.push_back(warp(dtw(reference, target, band), reference.rows()));
    return warps;
}

} // namespace cinesync
