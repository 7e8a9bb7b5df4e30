#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcrab {

struct NelderMeadOptions {
    double tolerance = 1e-10;        // stop when max J - min J over the simplex falls below
    std::size_t max_evaluations = 500;
    std::optional<double> stop_value;  // stop as soon as J >= stop_value
};

struct NelderMeadResult {
    std::vector<double> x;
    double value = -std::numeric_limits<double>::infinity();
    std::size_t evaluations = 0;
    bool converged = false;
    bool reached_stop_value = false;
    bool aborted = false;
    std::string abort_reason;
};

/// Maximizes `fom` with the standard simplex moves (reflection 1, expansion 2,
/// contraction 0.5, shrink 0.5). The initial simplex is x0 plus x0 + scale_i e_i.
/// A non-finite J is treated as -infinity. An exception thrown by `fom` stops
/// the search; the best point found so far is returned with `aborted` set.
inline NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)> &fom,
                                    const std::vector<double> &x0, std::span<const double> scales,
                                    const NelderMeadOptions &options) {
    const std::size_t n = x0.size();
    if (scales.size() != n) throw std::invalid_argument("nelder_mead: one scale per coordinate required");
    for (double v : x0) {
        if (!std::isfinite(v)) throw std::invalid_argument("nelder_mead: non-finite starting point");
    }

    constexpr double kInf = std::numeric_limits<double>::infinity();
    NelderMeadResult result;
    result.x = x0;

    // Internally minimizes cost = -J.
    struct Vertex {
        std::vector<double> x;
        double cost;
    };
    struct Abort {};
    struct Budget {};

    auto evaluate = [&](const std::vector<double> &x) -> double {
        if (result.evaluations >= options.max_evaluations) throw Budget{};
        double j;
        try {
            j = fom(x);
        } catch (const std::exception &e) {
            result.aborted = true;
            result.abort_reason = e.what();
            throw Abort{};
        }
        ++result.evaluations;
        if (!std::isfinite(j)) j = -kInf;
        if (j > result.value || result.evaluations == 1) {
            result.value = j;
            result.x = x;
        }
        if (options.stop_value && j >= *options.stop_value) {
            result.reached_stop_value = true;
            throw Budget{};
        }
        return -j;
    };

    std::vector<Vertex> simplex;
    simplex.reserve(n + 1);
    try {
        simplex.push_back({x0, evaluate(x0)});
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> x = x0;
            x[i] += scales[i];
            simplex.push_back({x, evaluate(x)});
        }

        std::vector<double> centroid(n), xr(n), xe(n), xc(n);
        while (true) {
            std::stable_sort(simplex.begin(), simplex.end(),
                             [](const Vertex &a, const Vertex &b) { return a.cost < b.cost; });
            const double spread = simplex.back().cost - simplex.front().cost;
            if (n == 0) {
                result.converged = true;
                break;
            }
            if (spread < options.tolerance) {
                // A flat spread can also mean the simplex straddles a peak
                // symmetrically; probe its centre before giving up.
                std::fill(centroid.begin(), centroid.end(), 0.0);
                for (const auto &v : simplex)
                    for (std::size_t i = 0; i < n; ++i) centroid[i] += v.x[i];
                for (double &c : centroid) c /= static_cast<double>(n + 1);
                const double fm = evaluate(centroid);
                if (!(fm < simplex.front().cost - options.tolerance)) {
                    result.converged = true;
                    break;
                }
                simplex[n] = {centroid, fm};
                continue;
            }

            std::fill(centroid.begin(), centroid.end(), 0.0);
            for (std::size_t v = 0; v < n; ++v)
                for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[v].x[i];
            for (double &c : centroid) c /= static_cast<double>(n);

            Vertex &worst = simplex[n];
            for (std::size_t i = 0; i < n; ++i) xr[i] = centroid[i] + (centroid[i] - worst.x[i]);
            const double fr = evaluate(xr);

            if (fr < simplex.front().cost) {
                for (std::size_t i = 0; i < n; ++i) xe[i] = centroid[i] + 2.0 * (xr[i] - centroid[i]);
                const double fe = evaluate(xe);
                worst = fe < fr ? Vertex{xe, fe} : Vertex{xr, fr};
                continue;
            }
            if (fr < simplex[n - 1].cost) {
                worst = {xr, fr};
                continue;
            }
            bool shrink = false;
            if (fr < worst.cost) {
                for (std::size_t i = 0; i < n; ++i) xc[i] = centroid[i] + 0.5 * (xr[i] - centroid[i]);
                const double fc = evaluate(xc);
                if (fc <= fr) {
                    worst = {xc, fc};
                } else {
                    shrink = true;
                }
            } else {
                for (std::size_t i = 0; i < n; ++i) xc[i] = centroid[i] + 0.5 * (worst.x[i] - centroid[i]);
                const double fc = evaluate(xc);
                if (fc < worst.cost) {
                    worst = {xc, fc};
                } else {
                    shrink = true;
                }
            }
            if (shrink) {
                const std::vector<double> best = simplex.front().x;
                for (std::size_t v = 1; v <= n; ++v) {
                    for (std::size_t i = 0; i < n; ++i) simplex[v].x[i] = best[i] + 0.5 * (simplex[v].x[i] - best[i]);
                    simplex[v].cost = evaluate(simplex[v].x);
                }
            }
        }
    } catch (const Budget &) {
    } catch (const Abort &) {
    }
    return result;
}

}  // namespace dcrab
