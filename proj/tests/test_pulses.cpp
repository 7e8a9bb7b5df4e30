#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "dcrab/pulses.hpp"

using namespace dcrab;
using std::numbers::pi;

namespace {

// Direct O(n^2) DFT used as an independent check of the FFT path.
std::vector<std::complex<double>> naive_dft(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> s = 0;
        for (std::size_t m = 0; m < n; ++m) s += x[m] * std::polar(1.0, -2 * pi * double(k) * double(m) / double(n));
        out[k] = s;
    }
    return out;
}

}  // namespace

TEST(TimeGrid, EndpointsAndSpacing) {
    TimeGrid g(2.0, 5);
    EXPECT_EQ(g.time(0), 0.0);
    EXPECT_EQ(g.time(4), 2.0);
    EXPECT_DOUBLE_EQ(g.dt(), 0.5);
    auto t = g.times();
    for (std::size_t k = 1; k < t.size(); ++k) EXPECT_GT(t[k], t[k - 1]);
}

TEST(TimeGrid, RejectsBadInput) {
    EXPECT_THROW(TimeGrid(0.0, 5), std::invalid_argument);
    EXPECT_THROW(TimeGrid(-1.0, 5), std::invalid_argument);
    EXPECT_THROW(TimeGrid(1.0, 1), std::invalid_argument);
    EXPECT_THROW(TimeGrid(INFINITY, 3), std::invalid_argument);
}

TEST(SampleBasis, FirstHarmonicPair) {
    TimeGrid g(1.0, 11);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        BasisSet b = sample_basis(2, g, 100.0, Envelope::sine, seed);
        ASSERT_EQ(b.size(), 2u);
        EXPECT_EQ(b.functions[0].kind, BasisKind::cosine);
        EXPECT_EQ(b.functions[1].kind, BasisKind::sine);
        for (const auto &f : b.functions) {
            EXPECT_GT(f.omega, pi);
            EXPECT_LT(f.omega, 3 * pi);
        }
    }
}

TEST(SampleBasis, HarmonicsFollowIndex) {
    TimeGrid g(2.0, 11);
    BasisSet b = sample_basis(8, g, 1e6, Envelope::flat, 3);
    for (std::size_t i = 0; i < 8; ++i) {
        double harmonic = double(i / 2 + 1);
        EXPECT_GT(b.functions[i].omega, 2 * pi * (harmonic - 0.5) / 2.0);
        EXPECT_LT(b.functions[i].omega, 2 * pi * (harmonic + 0.5) / 2.0);
    }
}

TEST(SampleBasis, Deterministic) {
    TimeGrid g(1.0, 11);
    EXPECT_EQ(sample_basis(6, g, 50.0, Envelope::sine, 42), sample_basis(6, g, 50.0, Envelope::sine, 42));
    EXPECT_NE(sample_basis(6, g, 50.0, Envelope::sine, 42), sample_basis(6, g, 50.0, Envelope::sine, 43));
}

TEST(SampleBasis, ClipsToOmegaMax) {
    TimeGrid g(1.0, 11);
    const double wmax = 10 * 2 * pi;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        BasisSet b = sample_basis(6, g, wmax, Envelope::sine, seed);
        for (const auto &f : b.functions) {
            EXPECT_GT(f.omega, 0.0);
            EXPECT_LE(f.omega, wmax);
        }
    }
    // Tight cap: higher harmonics sit exactly on the cap.
    BasisSet b = sample_basis(6, g, 2.6 * pi, Envelope::sine, 1);
    EXPECT_EQ(b.functions[5].omega, 2.6 * pi);
}

TEST(SampleBasis, RejectsDegenerate) {
    TimeGrid g(1.0, 11);
    EXPECT_THROW(sample_basis(0, g, 10.0, Envelope::sine, 0), std::invalid_argument);
    EXPECT_THROW(sample_basis(2, g, 0.0, Envelope::sine, 0), std::invalid_argument);
    EXPECT_THROW(sample_basis(4, g, pi, Envelope::sine, 0), std::invalid_argument);
}

TEST(AssemblePulse, ZeroCoefficientsReproduceGuess) {
    TimeGrid g(1.0, 51);
    Pulse guess = Pulse::from_function(g, [](double t) { return 0.3 + t * t; });
    BasisSet b = sample_basis(4, g, 40.0, Envelope::sine, 9);
    EXPECT_EQ(assemble_pulse(guess, b, {std::nullopt, {0, 0, 0, 0}}, AssemblyMode::multiplicative).values()[17], guess[17]);
    EXPECT_EQ(assemble_pulse(guess, b, {std::nullopt, {0, 0, 0, 0}}, AssemblyMode::multiplicative), guess);
    EXPECT_EQ(assemble_pulse(guess, b, {std::nullopt, {0, 0, 0, 0}}, AssemblyMode::additive), guess);
}

TEST(AssemblePulse, DressedIdentity) {
    TimeGrid g(1.0, 51);
    Pulse guess = Pulse::constant(g, 1.0);
    Pulse prev = Pulse::from_function(g, [](double t) { return std::sin(3 * t) - 0.2; });
    BasisSet b = sample_basis(3, g, 40.0, Envelope::blackman, 2);
    EXPECT_EQ(assemble_pulse(guess, b, {1.0, {0, 0, 0}}, AssemblyMode::dressed, &prev), prev);
}

TEST(AssemblePulse, MultiplicativeSingleCosineFlat) {
    TimeGrid g(1.0, 101);
    Pulse guess = Pulse::constant(g, 1.0);
    BasisSet b;
    b.functions = {{BasisKind::cosine, 7.5}};
    b.omega_max = 10.0;
    b.envelope = Envelope::flat;
    const double a = 0.37;
    Pulse f = assemble_pulse(guess, b, {std::nullopt, {a}}, AssemblyMode::multiplicative);
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(f[k], 1.0 + a * std::cos(7.5 * g.time(k)), 1e-15);
}

TEST(AssemblePulse, EndpointPinning) {
    TimeGrid g(3.0, 201);
    Pulse guess = Pulse::from_function(g, [](double t) { return 0.5 + 0.1 * t; });
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    for (Envelope env : {Envelope::sine, Envelope::blackman}) {
        BasisSet b = sample_basis(6, g, 30.0, env, 77);
        std::vector<double> c(6);
        for (double &x : c) x = n(rng);
        Pulse f = assemble_pulse(guess, b, {std::nullopt, c}, AssemblyMode::multiplicative);
        EXPECT_EQ(f[0], guess[0]);
        EXPECT_EQ(f[g.size() - 1], guess[g.size() - 1]);
    }
}

TEST(AssemblePulse, Errors) {
    TimeGrid g(1.0, 11), h(2.0, 11);
    Pulse guess = Pulse::constant(g, 1.0);
    Pulse other = Pulse::constant(h, 1.0);
    BasisSet b = sample_basis(2, g, 40.0, Envelope::sine, 0);
    EXPECT_THROW(assemble_pulse(guess, b, {std::nullopt, {1.0}}, AssemblyMode::additive), std::invalid_argument);
    EXPECT_THROW(assemble_pulse(guess, b, {std::nullopt, {1.0, 0.0}}, AssemblyMode::dressed, &guess), std::invalid_argument);
    EXPECT_THROW(assemble_pulse(guess, b, {1.0, {1.0, 0.0}}, AssemblyMode::dressed), std::invalid_argument);
    EXPECT_THROW(assemble_pulse(guess, b, {1.0, {1.0, 0.0}}, AssemblyMode::dressed, &other), std::invalid_argument);
    EXPECT_THROW(assemble_pulse(other, b, {std::nullopt, {1.0, 0.0}}, AssemblyMode::additive), std::invalid_argument);
}

TEST(HardWall, Definition) {
    TimeGrid g(1.0, 3);
    Pulse p(g, {0.5, -2.0, 1.0});
    Pulse c = clip_hard_wall(p, 1.0);
    EXPECT_EQ(c[0], 0.5);
    EXPECT_EQ(c[1], -1.0);
    EXPECT_EQ(c[2], 1.0);
    EXPECT_EQ(clip_hard_wall(Pulse::constant(g, 3.0), 1.0), Pulse::constant(g, 1.0));
    Pulse inside(g, {0.1, -0.2, 0.99});
    EXPECT_EQ(clip_hard_wall(inside, 1.0), inside);
    EXPECT_EQ(clip_hard_wall(c, 1.0), c);
    EXPECT_THROW(clip_hard_wall(p, 0.0), std::invalid_argument);
}

TEST(Rescale, Definition) {
    TimeGrid g(1.0, 4);
    Pulse p(g, {0.4, -2.0, 1.0, 0.0});
    Pulse r = rescale_to_bound(p, 1.0);
    EXPECT_EQ(r[0], 0.2);
    EXPECT_EQ(r[1], -1.0);
    EXPECT_EQ(r[2], 0.5);
    Pulse small(g, {0.1, -0.5, 0.2, 0.0});
    EXPECT_EQ(rescale_to_bound(small, 1.0), small);
    EXPECT_EQ(rescale_to_bound(r, 1.0), r);
}

TEST(Rescale, CommutesWithPositiveScaling) {
    TimeGrid g(1.0, 64);
    Pulse p = Pulse::from_function(g, [](double t) { return 3 * std::sin(9 * t) + t; });
    for (double s : {0.5, 2.0, 10.0}) {
        Pulse scaled = Pulse::from_function(g, [&](double t) { return s * (3 * std::sin(9 * t) + t); });
        Pulse a = rescale_to_bound(scaled, 1.0), b = rescale_to_bound(p, 1.0);
        for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-14);
    }
}

TEST(Rescale, SpectrumSupportPreserved) {
    TimeGrid g(1.0, 128);
    Pulse p = Pulse::from_function(g, [](double t) { return 4 * std::cos(2 * pi * 5 * t) + 2 * std::sin(2 * pi * 11 * t); });
    Pulse r = rescale_to_bound(p, 1.0);
    auto a = naive_dft(p.values()), b = naive_dft(r.values());
    double na = 0, nb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        na = std::max(na, std::abs(a[k]));
        nb = std::max(nb, std::abs(b[k]));
    }
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_NEAR(std::abs(a[k]) / na, std::abs(b[k]) / nb, 1e-12);
        EXPECT_EQ(std::abs(a[k]) / na > 1e-9, std::abs(b[k]) / nb > 1e-9);
    }
}

TEST(Power, Examples) {
    TimeGrid g(1.0, 1001);
    EXPECT_NEAR(pulse_power(Pulse::constant(g, 1.7)), 1.7 * 1.7, 1e-14);
    EXPECT_NEAR(pulse_power(Pulse::from_function(g, [](double t) { return std::sin(2 * pi * t); })), 0.5, 1e-6);
    EXPECT_EQ(pulse_power(Pulse::constant(g, 0.0)), 0.0);
    TimeGrid h(2.0, 101);
    EXPECT_NEAR(pulse_energy(Pulse::constant(h, 3.0)), 18.0, 1e-12);
}

TEST(Psd, MatchesNaiveDft) {
    TimeGrid g(2.0, 37);
    Pulse p = Pulse::from_function(g, [](double t) { return std::exp(-t) * std::cos(5 * t); });
    Spectrum s = pulse_psd(p);
    auto ref = naive_dft(p.values());
    ASSERT_EQ(s.value.size(), 37u / 2 + 1);
    for (std::size_t k = 0; k < s.value.size(); ++k) {
        EXPECT_NEAR(s.value[k], std::norm(ref[k] * g.dt()) / g.duration(), 1e-12);
        EXPECT_NEAR(s.omega[k], 2 * pi * double(k) / (37 * g.dt()), 1e-12);
    }
    Spectrum z = pulse_psd(Pulse::constant(g, 0.0));
    for (double v : z.value) EXPECT_EQ(v, 0.0);
}

TEST(Csv, RoundTripExact) {
    TimeGrid g(1.2345678901, 17);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    std::vector<double> a(17), b(17);
    for (auto &x : a) x = n(rng);
    for (auto &x : b) x = n(rng) * 1e-7;
    std::vector<Pulse> ps{Pulse(g, a), Pulse(g, b)};
    std::istringstream is(pulses_to_csv(ps));
    auto back = read_pulses_csv(is);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].grid(), g);
    for (std::size_t k = 0; k < 17; ++k) {
        EXPECT_EQ(back[0][k], a[k]);
        EXPECT_EQ(back[1][k], b[k]);
    }
    std::vector<Pulse> one{Pulse(g, a)};
    EXPECT_EQ(pulses_to_csv(one).substr(0, 11), "time,value\n");
}

TEST(Csv, RejectsMalformed) {
    std::istringstream a("t,value\n0,1\n1,2\n");
    EXPECT_THROW(read_pulses_csv(a), std::invalid_argument);
    std::istringstream b("time,value\n0,1\n1\n");
    EXPECT_THROW(read_pulses_csv(b), std::invalid_argument);
    std::istringstream c("time,value\n0,1\n1,x\n");
    EXPECT_THROW(read_pulses_csv(c), std::invalid_argument);
    std::istringstream d("time,value\n0,1\n0.3,1\n1,1\n");
    EXPECT_THROW(read_pulses_csv(d), std::invalid_argument);
}

TEST(Json, BasisAndCoefficientsRoundTrip) {
    TimeGrid g(1.0, 11);
    BasisSet b = sample_basis(5, g, 33.0, Envelope::blackman, 1234567890123ULL);
    nlohmann::json j = b;
    EXPECT_EQ(j.at("envelope"), "blackman");
    EXPECT_EQ(j.at("functions")[0].at("kind"), "cos");
    EXPECT_EQ(nlohmann::json::parse(j.dump()).get<BasisSet>(), b);
    CrabCoefficients c{0.9, {1e-3, -2.5}};
    EXPECT_EQ(nlohmann::json::parse(nlohmann::json(c).dump()).get<CrabCoefficients>(), c);
    CrabCoefficients d{std::nullopt, {4.0}};
    EXPECT_EQ(nlohmann::json::parse(nlohmann::json(d).dump()).get<CrabCoefficients>(), d);
}

TEST(Pulse, RejectsNonFinite) {
    TimeGrid g(1.0, 2);
    EXPECT_THROW(Pulse(g, {0.0, NAN}), std::invalid_argument);
    EXPECT_THROW(Pulse(g, {0.0}), std::invalid_argument);
}
