#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "clir/common.hpp"
#include "clir/encoder.hpp"

namespace clir {

/// K x dim centroid matrix, rows unit-normalized. Stored as float32 so the
/// in-memory values match the persisted little-endian representation exactly.
struct Centroids {
    int32_t k = 0;
    int32_t dim = 0;
    std::vector<float> data;

    const float* row(int32_t c) const { return data.data() + size_t(c) * size_t(dim); }
};

struct KmeansReport {
    /// Sum of squared distances to the assigned centroid, one entry per
    /// assignment pass (iters + 1 including the final pass).
    std::vector<double> objective;
};

namespace detail {

inline double sq_dist(const double* a, const double* b, int32_t dim) {
    double s = 0.0;
    for (int32_t i = 0; i < dim; ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Nearest centroid by squared distance, lowest index on ties.
inline std::pair<int32_t, double> nearest(const double* x, const std::vector<double>& cents,
                                          int32_t k, int32_t dim) {
    int32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int32_t c = 0; c < k; ++c) {
        double d = sq_dist(x, cents.data() + size_t(c) * size_t(dim), dim);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return {best, best_d};
}

}  // namespace detail

/// Lloyd iterations from seeded k-means++ initialization. Runs exactly `iters`
/// update steps; centroid rows are re-normalized to unit length after every
/// update. Empty clusters are re-seeded from the point farthest from its
/// assigned centroid. Deterministic given the seed.
inline Centroids train_centroids(const TokenMatrix& samples, int32_t k, int iters, uint64_t seed,
                                 KmeansReport* report = nullptr) {
    const int32_t n = samples.rows;
    const int32_t dim = samples.dim;
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (k > n)
        throw std::invalid_argument("k (" + std::to_string(k) + ") exceeds sample count (" +
                                    std::to_string(n) + ")");

    Rng rng(splitmix64(seed ^ 0x13198a2e03707344ull));
    std::vector<double> cents(size_t(k) * size_t(dim));
    std::vector<char> chosen(size_t(n), 0);

    // k-means++ seeding: D^2 sampling; when all remaining distances are zero
    // (duplicate points) fall back to the first unchosen sample.
    auto set_centroid = [&](int32_t c, int32_t sample) {
        std::copy(samples.row(sample), samples.row(sample) + dim,
                  cents.begin() + ptrdiff_t(size_t(c) * size_t(dim)));
        chosen[size_t(sample)] = 1;
    };
    set_centroid(0, int32_t(rng.next_index(size_t(n))));
    std::vector<double> d2(size_t(n), 0.0);
    for (int32_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (int32_t i = 0; i < n; ++i) {
            d2[size_t(i)] = detail::nearest(samples.row(i), cents, c, dim).second;
            if (chosen[size_t(i)]) d2[size_t(i)] = 0.0;
            total += d2[size_t(i)];
        }
        int32_t pick = -1;
        if (total > 0.0) {
            double u = rng.next_double() * total;
            double cum = 0.0;
            for (int32_t i = 0; i < n; ++i) {
                cum += d2[size_t(i)];
                if (u < cum) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0) pick = n - 1;
        } else {
            for (int32_t i = 0; i < n; ++i)
                if (!chosen[size_t(i)]) {
                    pick = i;
                    break;
                }
            if (pick < 0) pick = int32_t(rng.next_index(size_t(n)));
        }
        set_centroid(c, pick);
    }

    auto normalize_row = [&](double* r) {
        double s = 0.0;
        for (int32_t j = 0; j < dim; ++j) s += r[j] * r[j];
        if (s == 0.0) return false;
        double inv = 1.0 / std::sqrt(s);
        for (int32_t j = 0; j < dim; ++j) r[j] *= inv;
        return true;
    };
    for (int32_t c = 0; c < k; ++c) normalize_row(cents.data() + size_t(c) * size_t(dim));

    std::vector<int32_t> assign(size_t(n), 0);
    std::vector<double> dist(size_t(n), 0.0);
    auto assign_pass = [&]() {
        double obj = 0.0;
        for (int32_t i = 0; i < n; ++i) {
            auto [c, d] = detail::nearest(samples.row(i), cents, k, dim);
            assign[size_t(i)] = c;
            dist[size_t(i)] = d;
            obj += d;
        }
        if (report) report->objective.push_back(obj);
    };

    std::vector<double> sums(size_t(k) * size_t(dim));
    std::vector<int64_t> counts(size_t(k), 0);
    for (int iter = 0; iter < iters; ++iter) {
        assign_pass();
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (int32_t i = 0; i < n; ++i) {
            double* dst = sums.data() + size_t(assign[size_t(i)]) * size_t(dim);
            const double* src = samples.row(i);
            for (int32_t j = 0; j < dim; ++j) dst[j] += src[j];
            ++counts[size_t(assign[size_t(i)])];
        }
        std::vector<char> taken(size_t(n), 0);
        for (int32_t c = 0; c < k; ++c) {
            double* row = cents.data() + size_t(c) * size_t(dim);
            bool ok = counts[size_t(c)] > 0;
            if (ok) {
                const double* s = sums.data() + size_t(c) * size_t(dim);
                for (int32_t j = 0; j < dim; ++j) row[j] = s[j];
                ok = normalize_row(row);
            }
            if (!ok) {
                // re-seed from the farthest point not already used for repair
                int32_t far = -1;
                double far_d = -1.0;
                for (int32_t i = 0; i < n; ++i)
                    if (!taken[size_t(i)] && dist[size_t(i)] > far_d) {
                        far_d = dist[size_t(i)];
                        far = i;
                    }
                if (far < 0) far = 0;
                taken[size_t(far)] = 1;
                std::copy(samples.row(far), samples.row(far) + dim, row);
                normalize_row(row);
            }
        }
    }
    assign_pass();

    Centroids out;
    out.k = k;
    out.dim = dim;
    out.data.resize(size_t(k) * size_t(dim));
    for (size_t i = 0; i < cents.size(); ++i) out.data[i] = float(cents[i]);
    return out;
}

}  // namespace clir
