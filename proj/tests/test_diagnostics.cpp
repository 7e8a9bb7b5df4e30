#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "dcrab/diagnostics.hpp"

using namespace dcrab;
using std::numbers::pi;

TEST(QuantumSpeedLimit, Bhattacharyya) {
    CVector zero = basis_state(2, 0), one = basis_state(2, 1);
    EXPECT_NEAR(qsl_bhattacharyya(1.0, zero, one), pi / 2, 1e-15);
    EXPECT_EQ(qsl_bhattacharyya(1.0, zero, zero), 0.0);
    CVector plus = (zero + one) / std::sqrt(2.0);
    EXPECT_NEAR(qsl_bhattacharyya(2.0, zero, plus), pi / 8, 1e-12);
    EXPECT_THROW(qsl_bhattacharyya(0.0, zero, one), std::invalid_argument);
    EXPECT_THROW(qsl_bhattacharyya(1.0, 2.0 * zero, one), std::invalid_argument);
}

TEST(QuantumSpeedLimit, BhattacharyyaSymmetric) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 20; ++i) {
        CVector a = random_state(4, rng), b = random_state(4, rng);
        EXPECT_DOUBLE_EQ(qsl_bhattacharyya(0.7, a, b), qsl_bhattacharyya(0.7, b, a));
    }
}

TEST(QuantumSpeedLimit, Gap) {
    EXPECT_NEAR(qsl_gap(pi), 1.0, 1e-15);
    EXPECT_NEAR(qsl_gap(1.0), pi, 1e-15);
    EXPECT_NEAR(qsl_gap(2.6), 0.5 * qsl_gap(1.3), 1e-15);
    EXPECT_THROW(qsl_gap(0.0), std::invalid_argument);
    EXPECT_THROW(qsl_gap(-1.0), std::invalid_argument);
}

TEST(Capacity, Examples) {
    EXPECT_DOUBLE_EQ(capacity_hartley(1.0, 1.0), 1.0);
    EXPECT_EQ(capacity_gaussian(3.0, 0.0, 1.0), 0.0);
    EXPECT_EQ(capacity_gaussian(3.0, 0.0, 0.0), 0.0);
    EXPECT_THROW(capacity_gaussian(3.0, 1.0, 0.0), std::invalid_argument);
    EXPECT_THROW(capacity_hartley(0.0, 1.0), std::invalid_argument);
    EXPECT_THROW(capacity_gaussian(1.0, -1.0, 1.0), std::invalid_argument);
}

TEST(Capacity, ColoredFlatReducesToGaussian) {
    const double band = 7.5, r = 3.0;
    std::vector<double> w, s, n;
    for (int k = 0; k <= 150; ++k) {
        w.push_back(band * k / 150.0);
        s.push_back(2.0 * r);
        n.push_back(2.0);
    }
    EXPECT_NEAR(capacity_colored(w, s, n), capacity_gaussian(band, r, 1.0), 1e-9);
    EXPECT_NEAR(capacity_colored(w, s, n), band * std::log2(1 + r), 1e-9);
}

TEST(Capacity, ColoredErrors) {
    std::vector<double> w{0.0, 1.0, 2.0}, s{1.0, 1.0, 0.0}, n{1.0, 0.0, 0.0};
    EXPECT_THROW(capacity_colored(w, s, n), std::invalid_argument);  // n = 0 where s > 0
    std::vector<double> n_ok{1.0, 1.0, 0.0};
    EXPECT_GT(capacity_colored(w, s, n_ok), 0.0);  // n = 0 only where s = 0
    std::vector<double> short_w{0.0};
    EXPECT_THROW(capacity_colored(short_w, short_w, short_w), std::invalid_argument);
    std::vector<double> bad_w{0.0, 2.0, 1.0};
    EXPECT_THROW(capacity_colored(bad_w, s, n_ok), std::invalid_argument);
}

TEST(Capacity, Monotone) {
    double prev = 0.0;
    for (double band = 0.5; band < 10; band += 0.5) {
        double c = capacity_gaussian(band, 2.0, 1.0);
        EXPECT_GE(c, 0.0);
        EXPECT_GT(c, prev);
        prev = c;
    }
    prev = 0.0;
    for (double snr = 0.0; snr < 50; snr += 1.0) {
        double c = capacity_gaussian(2.0, snr, 1.0);
        EXPECT_GE(c, prev);
        prev = c;
        EXPECT_GE(capacity_hartley(2.0, snr), 0.0);
    }
}

TEST(Bounds, Examples) {
    EXPECT_DOUBLE_EQ(error_bound(10.0, 2.0), 0.03125);
    EXPECT_EQ(reachable_dimension_state_transfer(2), 2);
    EXPECT_EQ(reachable_dimension_state_transfer(4), 6);
    EXPECT_THROW(reachable_dimension_state_transfer(1), std::invalid_argument);
    // With T C = I_f the minimal error and the minimal time are inverses.
    const double capacity = 2.5, dr = 6.0, info = 17.0;
    const double eps = error_bound(info, dr);
    EXPECT_NEAR(time_bound(dr, capacity, eps) * capacity, info, 1e-12);
    EXPECT_THROW(error_bound(1.0, 0.5), std::invalid_argument);
    EXPECT_THROW(time_bound(2.0, 0.0, 0.1), std::invalid_argument);
    EXPECT_THROW(time_bound(2.0, 1.0, 0.0), std::invalid_argument);
}

TEST(Bounds, Monotone) {
    for (double dr = 1; dr < 10; dr += 1) {
        EXPECT_LT(error_bound(12.0, dr), error_bound(12.0, dr + 1));
        EXPECT_GT(error_bound(12.0, dr), error_bound(13.0, dr));
        EXPECT_LT(time_bound(dr, 2.0, 0.01), time_bound(dr + 1, 2.0, 0.01));
        EXPECT_GT(time_bound(dr, 2.0, 0.01), time_bound(dr, 3.0, 0.01));
    }
}

TEST(ErrorScaling, RecoversSyntheticParameters) {
    const double b1 = 0.5, b2 = 1e-3;
    std::vector<std::pair<double, double>> samples;
    for (double w = 1.0; w <= 16.0; w += 1.5) samples.emplace_back(w, std::exp(-b1 * w) + b2);
    auto fit = fit_error_scaling(samples);
    EXPECT_NEAR(fit.b1, b1, 0.05 * b1);
    EXPECT_NEAR(fit.b2, b2, 0.05 * b2);
    EXPECT_NEAR(fit.amplitude, 1.0, 0.05);
    EXPECT_LT(fit.residual, 1e-6);
    EXPECT_FALSE(fit.non_decaying);
}

TEST(ErrorScaling, SmallAmplitude) {
    // Errors far below 1 still decay exponentially; the prefactor absorbs the scale.
    const double a = 0.02, b1 = 0.3, b2 = 4e-3;
    std::vector<std::pair<double, double>> samples;
    for (double w : {1.0, 2.0, 4.0, 8.0, 16.0}) samples.emplace_back(w, a * std::exp(-b1 * w) + b2);
    auto fit = fit_error_scaling(samples);
    EXPECT_NEAR(fit.amplitude, a, 1e-3 * a);
    EXPECT_NEAR(fit.b1, b1, 1e-3 * b1);
    EXPECT_NEAR(fit.b2, b2, 1e-3 * b2);
}

TEST(ErrorScaling, RecoversUnderNoise) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.002);
    const double b1 = 0.8, b2 = 0.02;
    std::vector<std::pair<double, double>> samples;
    for (double w = 0.5; w <= 10.0; w += 0.5) samples.emplace_back(w, std::exp(-b1 * w) + b2 + noise(rng));
    auto fit = fit_error_scaling(samples);
    EXPECT_NEAR(fit.b1, b1, 0.05 * b1);
    EXPECT_LT(fit.residual, 0.004);
}

TEST(ErrorScaling, IncreasingDataFlagged) {
    std::vector<std::pair<double, double>> samples{{1.0, 0.01}, {2.0, 0.05}, {3.0, 0.2}, {4.0, 0.6}};
    auto fit = fit_error_scaling(samples);
    EXPECT_LE(fit.b1, 0.0);
    EXPECT_TRUE(fit.non_decaying);
}

TEST(ErrorScaling, Errors) {
    std::vector<std::pair<double, double>> two{{1.0, 0.1}, {1.0, 0.1}};
    EXPECT_THROW(fit_error_scaling(two), std::invalid_argument);
    std::vector<std::pair<double, double>> same{{1.0, 0.1}, {1.0, 0.2}, {1.0, 0.3}};
    EXPECT_THROW(fit_error_scaling(same), std::invalid_argument);
    std::vector<std::pair<double, double>> out_of_range{{1.0, 0.1}, {2.0, 0.0}, {3.0, 0.3}};
    EXPECT_THROW(fit_error_scaling(out_of_range), std::invalid_argument);
}

TEST(EnsembleStatistics, Summary) {
    std::vector<double> errors{1e-5, 1e-2, 1e-6, 5e-4};
    std::vector<std::size_t> evals{10, 20, 30, 40};
    auto s = ensemble_statistics(errors, 1e-3, evals);
    EXPECT_EQ(s.runs, 4u);
    EXPECT_EQ(s.successes, 3u);
    EXPECT_DOUBLE_EQ(s.success_probability, 0.75);
    EXPECT_DOUBLE_EQ(s.median_error, 0.5 * (1e-5 + 5e-4));
    EXPECT_EQ(s.max_error, 1e-2);
    EXPECT_EQ(s.mean_evaluations, 25.0);
    EXPECT_THROW(ensemble_statistics({}, 1e-3), std::invalid_argument);
}
