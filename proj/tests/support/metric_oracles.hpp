#pragma once

// Brute-force metric oracles: all-pairs comparisons, no sorting tricks.
// Deliberately independent of the sort-based implementations in
// mpfa/metrics.hpp; both routes compute the same midrank-tie definition.

#include <vector>

namespace mpfa_test {

inline double ap_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    const long n = static_cast<long>(s.size());
    double ap = 0.0;
    long npos = 0;
    for (long i = 0; i < n; ++i) {
        if (y[static_cast<std::size_t>(i)] != 1) continue;
        ++npos;
        double above_pos = 0, above_tot = 0, tied_pos = 0, tied_tot = 0;
        for (long j = 0; j < n; ++j) {
            if (s[static_cast<std::size_t>(j)] > s[static_cast<std::size_t>(i)]) {
                above_tot += 1;
                above_pos += y[static_cast<std::size_t>(j)];
            } else if (s[static_cast<std::size_t>(j)] == s[static_cast<std::size_t>(i)]) {
                tied_tot += 1;
                tied_pos += y[static_cast<std::size_t>(j)];
            }
        }
        ap += (above_pos + (tied_pos + 1.0) / 2.0) / (above_tot + (tied_tot + 1.0) / 2.0);
    }
    return ap / static_cast<double>(npos);
}

inline double auc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0;
    long npos = 0, nneg = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] == 1) {
            ++npos;
            for (std::size_t j = 0; j < s.size(); ++j) {
                if (y[j] == 1) continue;
                if (s[i] > s[j])
                    wins += 1.0;
                else if (s[i] == s[j])
                    wins += 0.5;
            }
        } else {
            ++nneg;
        }
    }
    return wins / (static_cast<double>(npos) * static_cast<double>(nneg));
}

}  // namespace mpfa_test
