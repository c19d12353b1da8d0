#include "sgc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <vector>

#include "sgc/errors.hpp"

namespace sgc {

namespace {

// Relabel to 0..k-1 in order of first appearance of the sorted label values.
std::vector<int> compact(const std::vector<int>& labels, std::size_t& k) {
    std::map<int, int> remap;
    for (int l : labels) {
        if (l < 0) throw ValueError("metrics: labels must be nonnegative, got " + std::to_string(l));
        remap.emplace(l, 0);
    }
    int next = 0;
    for (auto& [label, idx] : remap) idx = next++;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = remap[labels[i]];
    k = remap.size();
    return out;
}

std::vector<std::vector<long long>> contingency(const std::vector<int>& truth, const std::vector<int>& pred,
                                                std::size_t& kt, std::size_t& kp) {
    if (truth.empty()) throw ValueError("metrics: empty label vectors");
    if (truth.size() != pred.size()) {
        throw ShapeError("metrics: " + std::to_string(truth.size()) + " truth labels vs " +
                         std::to_string(pred.size()) + " predictions");
    }
    const std::vector<int> t = compact(truth, kt);
    const std::vector<int> p = compact(pred, kp);
    std::vector<std::vector<long long>> table(kt, std::vector<long long>(kp, 0));
    for (std::size_t i = 0; i < t.size(); ++i) ++table[static_cast<std::size_t>(t[i])][static_cast<std::size_t>(p[i])];
    return table;
}

// Assignment maximizing the matched weight, via the shortest-augmenting-path
// method with row/column potentials on the square padded cost matrix.
long long max_assignment(const std::vector<std::vector<long long>>& weight) {
    const std::size_t rows = weight.size();
    const std::size_t cols = weight[0].size();
    const std::size_t n = std::max(rows, cols);
    constexpr long long kInf = std::numeric_limits<long long>::max() / 4;

    auto cost = [&](std::size_t i, std::size_t j) -> long long {
        return (i < rows && j < cols) ? -weight[i][j] : 0;
    };

    std::vector<long long> u(n + 1, 0), v(n + 1, 0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<long long> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = match[j0];
            long long delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const long long cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    long long total = 0;
    for (std::size_t j = 1; j <= n; ++j) {
        if (match[j] != 0) total += -cost(match[j] - 1, j - 1);
    }
    return total;
}

long long pairs2(long long n) { return n * (n - 1) / 2; }

}  // namespace

double accuracy_hungarian(const std::vector<int>& truth, const std::vector<int>& pred) {
    std::size_t kt = 0, kp = 0;
    const auto table = contingency(truth, pred, kt, kp);
    const long long matched = max_assignment(table);
    return static_cast<double>(matched) / static_cast<double>(truth.size());
}

double nmi(const std::vector<int>& truth, const std::vector<int>& pred) {
    std::size_t kt = 0, kp = 0;
    const auto table = contingency(truth, pred, kt, kp);
    const double n = static_cast<double>(truth.size());

    std::vector<long long> a(kt, 0), b(kp, 0);
    for (std::size_t i = 0; i < kt; ++i)
        for (std::size_t j = 0; j < kp; ++j) {
            a[i] += table[i][j];
            b[j] += table[i][j];
        }

    double ht = 0.0, hp = 0.0, mi = 0.0;
    for (std::size_t i = 0; i < kt; ++i) {
        if (a[i] > 0) {
            const double p = static_cast<double>(a[i]) / n;
            ht -= p * std::log(p);
        }
    }
    for (std::size_t j = 0; j < kp; ++j) {
        if (b[j] > 0) {
            const double p = static_cast<double>(b[j]) / n;
            hp -= p * std::log(p);
        }
    }
    for (std::size_t i = 0; i < kt; ++i) {
        for (std::size_t j = 0; j < kp; ++j) {
            if (table[i][j] > 0) {
                const double pij = static_cast<double>(table[i][j]) / n;
                mi += pij * std::log(pij * n * n / (static_cast<double>(a[i]) * static_cast<double>(b[j])));
            }
        }
    }

    const double denom = 0.5 * (ht + hp);
    if (denom <= 1e-15) return 1.0;  // both partitions single-cluster: identical
    return std::clamp(mi / denom, 0.0, 1.0);
}

double ari(const std::vector<int>& truth, const std::vector<int>& pred) {
    std::size_t kt = 0, kp = 0;
    const auto table = contingency(truth, pred, kt, kp);
    const long long n = static_cast<long long>(truth.size());

    long long sum_ij = 0, sum_a = 0, sum_b = 0;
    std::vector<long long> a(kt, 0), b(kp, 0);
    for (std::size_t i = 0; i < kt; ++i) {
        for (std::size_t j = 0; j < kp; ++j) {
            sum_ij += pairs2(table[i][j]);
            a[i] += table[i][j];
            b[j] += table[i][j];
        }
    }
    for (std::size_t i = 0; i < kt; ++i) sum_a += pairs2(a[i]);
    for (std::size_t j = 0; j < kp; ++j) sum_b += pairs2(b[j]);
    const long long total = pairs2(n);

    // One final division over integer-built terms keeps textbook rational
    // outputs (1, -1/2) exact in fp64.
    const __int128 num = 2 * (static_cast<__int128>(total) * sum_ij - static_cast<__int128>(sum_a) * sum_b);
    const __int128 den = static_cast<__int128>(total) * (sum_a + sum_b) - 2 * static_cast<__int128>(sum_a) * sum_b;
    if (den == 0) {
        // Both partitions trivial (all-singletons or single-cluster); they
        // agree exactly or not at all.
        return (sum_a == sum_b && sum_ij == sum_a) ? 1.0 : 0.0;
    }
    return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

MetricsReport evaluate(const std::vector<int>& truth, const std::vector<int>& pred) {
    std::size_t kt = 0, kp = 0;
    contingency(truth, pred, kt, kp);  // validates and counts clusters
    MetricsReport r;
    r.acc = accuracy_hungarian(truth, pred);
    r.nmi = nmi(truth, pred);
    r.ari = ari(truth, pred);
    r.n_cells = truth.size();
    r.n_clusters_true = kt;
    r.n_clusters_pred = kp;
    return r;
}

std::string to_json(const MetricsReport& report) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "{\n"
                  "  \"acc\": %.17g,\n"
                  "  \"nmi\": %.17g,\n"
                  "  \"ari\": %.17g,\n"
                  "  \"n_cells\": %zu,\n"
                  "  \"n_clusters_true\": %zu,\n"
                  "  \"n_clusters_pred\": %zu\n"
                  "}\n",
                  report.acc, report.nmi, report.ari, report.n_cells, report.n_clusters_true, report.n_clusters_pred);
    return buf;
}

}  // namespace sgc
