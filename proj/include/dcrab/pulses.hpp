#pragma once

// Time grids, randomized chopped bases, CRAB/dCRAB pulse assembly and
// amplitude constraints.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/FFT>

namespace dcrab {

/// Uniform grid t_k = k T / (n - 1), k = 0..n-1.
class TimeGrid {
   public:
    TimeGrid(double duration, std::size_t n_samples) : duration_(duration), n_(n_samples) {
        if (!(duration > 0.0) || !std::isfinite(duration)) {
            throw std::invalid_argument("TimeGrid: duration must be positive and finite");
        }
        if (n_samples < 2) {
            throw std::invalid_argument("TimeGrid: at least two samples required");
        }
    }

    double duration() const noexcept { return duration_; }
    std::size_t size() const noexcept { return n_; }
    std::size_t intervals() const noexcept { return n_ - 1; }
    double dt() const noexcept { return duration_ / static_cast<double>(n_ - 1); }

    double time(std::size_t k) const noexcept {
        return duration_ * static_cast<double>(k) / static_cast<double>(n_ - 1);
    }

    std::vector<double> times() const {
        std::vector<double> t(n_);
        for (std::size_t k = 0; k < n_; ++k) t[k] = time(k);
        return t;
    }

    bool operator==(const TimeGrid &) const = default;

   private:
    double duration_;
    std::size_t n_;
};

enum class BasisKind { cosine, sine };
enum class Envelope { flat, sine, blackman };
enum class AssemblyMode { additive, multiplicative, dressed };

inline std::string_view to_string(BasisKind k) { return k == BasisKind::cosine ? "cos" : "sin"; }

inline BasisKind parse_basis_kind(std::string_view s) {
    if (s == "cos" || s == "cosine") return BasisKind::cosine;
    if (s == "sin" || s == "sine") return BasisKind::sine;
    throw std::invalid_argument("unknown basis kind '" + std::string(s) + "'");
}

inline std::string_view to_string(Envelope e) {
    switch (e) {
        case Envelope::flat: return "flat";
        case Envelope::sine: return "sine";
        case Envelope::blackman: return "blackman";
    }
    return "?";
}

inline Envelope parse_envelope(std::string_view s) {
    if (s == "flat") return Envelope::flat;
    if (s == "sine") return Envelope::sine;
    if (s == "blackman") return Envelope::blackman;
    throw std::invalid_argument("unknown envelope '" + std::string(s) + "'");
}

inline std::string_view to_string(AssemblyMode m) {
    switch (m) {
        case AssemblyMode::additive: return "additive";
        case AssemblyMode::multiplicative: return "multiplicative";
        case AssemblyMode::dressed: return "dressed";
    }
    return "?";
}

inline AssemblyMode parse_assembly_mode(std::string_view s) {
    if (s == "additive") return AssemblyMode::additive;
    if (s == "multiplicative") return AssemblyMode::multiplicative;
    if (s == "dressed") return AssemblyMode::dressed;
    throw std::invalid_argument("unknown assembly mode '" + std::string(s) + "'");
}

/// Shape function applied to every basis function. Sine and Blackman vanish
/// at t = 0 and t = T.
inline double envelope_value(Envelope e, double t, double duration) {
    using std::numbers::pi;
    if (e != Envelope::flat && (t <= 0.0 || t >= duration)) return 0.0;
    switch (e) {
        case Envelope::flat: return 1.0;
        case Envelope::sine: return std::sin(pi * t / duration);
        case Envelope::blackman: {
            double x = t / duration;
            double w = 0.42 - 0.5 * std::cos(2 * pi * x) + 0.08 * std::cos(4 * pi * x);
            return std::max(w, 0.0);
        }
    }
    return 1.0;
}

struct BasisFunctionSpec {
    BasisKind kind;
    double omega;  // rad / time

    bool operator==(const BasisFunctionSpec &) const = default;
};

/// One super-iteration's worth of randomized basis functions.
struct BasisSet {
    std::vector<BasisFunctionSpec> functions;
    double omega_max = 0.0;
    Envelope envelope = Envelope::sine;
    std::uint64_t seed = 0;
    double duration = 0.0;  // T the frequencies were drawn for

    std::size_t size() const noexcept { return functions.size(); }
    bool operator==(const BasisSet &) const = default;
};

/// Draws `n_funcs` functions alternating cos/sin. The i-th (1-based) function
/// sits at 2 pi (ceil(i/2) + r) / T with r ~ U(-0.5, 0.5), clipped to omega_max.
inline BasisSet sample_basis(std::size_t n_funcs, const TimeGrid &grid, double omega_max, Envelope envelope,
                             std::uint64_t seed) {
    using std::numbers::pi;
    if (n_funcs < 1) throw std::invalid_argument("sample_basis: n_funcs must be >= 1");
    if (!(omega_max > 0.0)) throw std::invalid_argument("sample_basis: omega_max must be positive");
    const double T = grid.duration();
    // Every candidate is at least 2 pi * 0.5 / T; below that all of them clip
    // onto omega_max.
    if (omega_max <= pi / T) {
        throw std::invalid_argument("sample_basis: omega_max too small, all frequencies clip to the same value");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> offset(-0.5, 0.5);
    BasisSet set;
    set.omega_max = omega_max;
    set.envelope = envelope;
    set.seed = seed;
    set.duration = T;
    set.functions.reserve(n_funcs);
    for (std::size_t i = 1; i <= n_funcs; ++i) {
        double r = offset(rng);
        while (r <= -0.5) r = offset(rng);
        double harmonic = static_cast<double>((i + 1) / 2);
        double omega = std::min(2 * pi * (harmonic + r) / T, omega_max);
        set.functions.push_back({i % 2 == 1 ? BasisKind::cosine : BasisKind::sine, omega});
    }
    return set;
}

/// Samples of every basis function (including the envelope) on `grid`.
inline std::vector<std::vector<double>> sample_on_grid(const BasisSet &basis, const TimeGrid &grid) {
    std::vector<std::vector<double>> out;
    out.reserve(basis.size());
    for (const auto &f : basis.functions) {
        std::vector<double> v(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) {
            double t = grid.time(k);
            double trig = f.kind == BasisKind::cosine ? std::cos(f.omega * t) : std::sin(f.omega * t);
            v[k] = trig * envelope_value(basis.envelope, t, grid.duration());
        }
        out.push_back(std::move(v));
    }
    return out;
}

/// Real control waveform sampled on a uniform grid.
class Pulse {
   public:
    Pulse(TimeGrid grid, std::vector<double> values, std::string label = {})
        : grid_(grid), values_(std::move(values)), label_(std::move(label)) {
        if (values_.size() != grid_.size()) {
            throw std::invalid_argument("Pulse: value count does not match the grid");
        }
        for (double v : values_) {
            if (!std::isfinite(v)) throw std::invalid_argument("Pulse: non-finite sample");
        }
    }

    static Pulse constant(const TimeGrid &grid, double value, std::string label = {}) {
        return Pulse(grid, std::vector<double>(grid.size(), value), std::move(label));
    }

    template <class F>
    static Pulse from_function(const TimeGrid &grid, F &&f, std::string label = {}) {
        std::vector<double> v(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) v[k] = f(grid.time(k));
        return Pulse(grid, std::move(v), std::move(label));
    }

    const TimeGrid &grid() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t k) const { return values_[k]; }
    std::size_t size() const noexcept { return values_.size(); }
    const std::string &label() const noexcept { return label_; }
    void set_label(std::string label) { label_ = std::move(label); }

    double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    bool operator==(const Pulse &) const = default;

   private:
    TimeGrid grid_;
    std::vector<double> values_;
    std::string label_;
};

/// c_0 (dressed mode only) and c_1..c_Nc.
struct CrabCoefficients {
    std::optional<double> c0;
    std::vector<double> c;

    bool operator==(const CrabCoefficients &) const = default;
};

/// Assembly against pre-sampled basis functions; the optimizer uses this to
/// avoid re-evaluating trig functions on every figure-of-merit call.
inline Pulse assemble_pulse(const Pulse &guess, const std::vector<std::vector<double>> &sampled,
                            const CrabCoefficients &coeffs, AssemblyMode mode, const Pulse *previous = nullptr) {
    const TimeGrid &grid = guess.grid();
    if (coeffs.c.size() != sampled.size()) {
        throw std::invalid_argument("assemble_pulse: coefficient count does not match the basis");
    }
    for (const auto &f : sampled) {
        if (f.size() != grid.size()) throw std::invalid_argument("assemble_pulse: basis/grid mismatch");
    }
    if (mode == AssemblyMode::dressed) {
        if (previous == nullptr) throw std::invalid_argument("assemble_pulse: dressed mode needs the previous pulse");
        if (!coeffs.c0) throw std::invalid_argument("assemble_pulse: dressed mode needs c_0");
        if (!(previous->grid() == grid)) throw std::invalid_argument("assemble_pulse: previous/guess grid mismatch");
    } else if (coeffs.c0) {
        throw std::invalid_argument("assemble_pulse: c_0 is only meaningful in dressed mode");
    }

    std::vector<double> out(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < sampled.size(); ++i) s += coeffs.c[i] * sampled[i][k];
        switch (mode) {
            case AssemblyMode::multiplicative: out[k] = guess[k] * (1.0 + s); break;
            case AssemblyMode::additive: out[k] = guess[k] + s; break;
            case AssemblyMode::dressed: out[k] = *coeffs.c0 * (*previous)[k] + s; break;
        }
    }
    return Pulse(grid, std::move(out), guess.label());
}

inline Pulse assemble_pulse(const Pulse &guess, const BasisSet &basis, const CrabCoefficients &coeffs,
                            AssemblyMode mode, const Pulse *previous = nullptr) {
    if (basis.duration != 0.0 && std::abs(basis.duration - guess.grid().duration()) > 1e-12 * basis.duration) {
        throw std::invalid_argument("assemble_pulse: basis was drawn for a different duration");
    }
    return assemble_pulse(guess, sample_on_grid(basis, guess.grid()), coeffs, mode, previous);
}

/// Pointwise clip to [-f_max, f_max].
inline Pulse clip_hard_wall(const Pulse &pulse, double f_max) {
    if (!(f_max > 0.0)) throw std::invalid_argument("clip_hard_wall: f_max must be positive");
    std::vector<double> v(pulse.values().begin(), pulse.values().end());
    for (double &x : v) {
        if (!(std::abs(x) < f_max)) x = std::copysign(f_max, x);
    }
    return Pulse(pulse.grid(), std::move(v), pulse.label());
}

/// Uniform rescale so that max|f| <= f_max; shape is preserved.
inline Pulse rescale_to_bound(const Pulse &pulse, double f_max) {
    if (!(f_max > 0.0)) throw std::invalid_argument("rescale_to_bound: f_max must be positive");
    double peak = pulse.max_abs();
    if (peak < f_max) return pulse;
    double scale = f_max / peak;
    std::vector<double> v(pulse.values().begin(), pulse.values().end());
    for (double &x : v) x = std::clamp(x * scale, -f_max, f_max);
    return Pulse(pulse.grid(), std::move(v), pulse.label());
}

/// Trapezoid rule on the pulse grid.
inline double trapezoid(std::span<const double> y, double dx) {
    if (y.size() < 2) return 0.0;
    double s = 0.5 * (y.front() + y.back());
    for (std::size_t k = 1; k + 1 < y.size(); ++k) s += y[k];
    return s * dx;
}

/// Trapezoid on an arbitrary (sorted) abscissa.
inline double trapezoid(std::span<const double> y, std::span<const double> x) {
    if (y.size() != x.size()) throw std::invalid_argument("trapezoid: size mismatch");
    double s = 0.0;
    for (std::size_t k = 1; k < x.size(); ++k) s += 0.5 * (y[k] + y[k - 1]) * (x[k] - x[k - 1]);
    return s;
}

/// Mean power (1/T) int f^2 dt.
inline double pulse_power(const Pulse &pulse) {
    std::vector<double> sq(pulse.size());
    for (std::size_t k = 0; k < pulse.size(); ++k) sq[k] = pulse[k] * pulse[k];
    return trapezoid(sq, pulse.grid().dt()) / pulse.grid().duration();
}

/// Energy int f^2 dt (no 1/T).
inline double pulse_energy(const Pulse &pulse) { return pulse_power(pulse) * pulse.grid().duration(); }

struct Spectrum {
    std::vector<double> omega;  // rad / time
    std::vector<double> value;
};

/// One-sided power spectral density |dt * DFT_k|^2 / T at omega_k = 2 pi k / (n dt).
inline Spectrum pulse_psd(const Pulse &pulse) {
    using std::numbers::pi;
    const std::size_t n = pulse.size();
    const double dt = pulse.grid().dt();
    std::vector<double> in(pulse.values().begin(), pulse.values().end());
    std::vector<std::complex<double>> out;
    Eigen::FFT<double> fft;
    fft.fwd(out, in);
    Spectrum s;
    const std::size_t half = n / 2 + 1;
    s.omega.resize(half);
    s.value.resize(half);
    for (std::size_t k = 0; k < half; ++k) {
        s.omega[k] = 2 * pi * static_cast<double>(k) / (static_cast<double>(n) * dt);
        s.value[k] = std::norm(out[k] * dt) / pulse.grid().duration();
    }
    return s;
}

// ---------------------------------------------------------------------------
// File formats

/// Shortest decimal representation that round-trips.
inline std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

/// CSV with header "time,value" (one control) or "time,value_1,...,value_K".
inline void write_pulses_csv(std::ostream &os, std::span<const Pulse> pulses) {
    if (pulses.empty()) throw std::invalid_argument("write_pulses_csv: no pulses");
    const TimeGrid &grid = pulses.front().grid();
    for (const auto &p : pulses) {
        if (!(p.grid() == grid)) throw std::invalid_argument("write_pulses_csv: pulses on different grids");
    }
    os << "time";
    if (pulses.size() == 1) {
        os << ",value";
    } else {
        for (std::size_t j = 0; j < pulses.size(); ++j) os << ",value_" << (j + 1);
    }
    os << '\n';
    for (std::size_t k = 0; k < grid.size(); ++k) {
        os << format_double(grid.time(k));
        for (const auto &p : pulses) os << ',' << format_double(p[k]);
        os << '\n';
    }
}

inline std::string pulses_to_csv(std::span<const Pulse> pulses) {
    std::ostringstream os;
    write_pulses_csv(os, pulses);
    return os.str();
}

inline double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw std::invalid_argument("cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

/// Reads the CSV format written by write_pulses_csv. The grid must be uniform
/// and start at 0.
inline std::vector<Pulse> read_pulses_csv(std::istream &is) {
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("pulse csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 2 || header[0] != "time") {
        throw std::invalid_argument("pulse csv: header must start with 'time'");
    }
    const std::size_t n_ctrl = header.size() - 1;
    std::vector<double> times;
    std::vector<std::vector<double>> cols(n_ctrl);
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        std::vector<std::string_view> cells;
        std::string_view rest(line);
        while (true) {
            auto pos = rest.find(',');
            cells.push_back(rest.substr(0, pos));
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (cells.size() != header.size()) throw std::invalid_argument("pulse csv: ragged row");
        times.push_back(parse_double(cells[0]));
        for (std::size_t j = 0; j < n_ctrl; ++j) cols[j].push_back(parse_double(cells[j + 1]));
    }
    if (times.size() < 2) throw std::invalid_argument("pulse csv: need at least two rows");
    if (times.front() != 0.0) throw std::invalid_argument("pulse csv: first time must be 0");
    TimeGrid grid(times.back(), times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (std::abs(times[k] - grid.time(k)) > 1e-9 * grid.duration()) {
            throw std::invalid_argument("pulse csv: time axis is not uniform");
        }
    }
    std::vector<Pulse> out;
    for (std::size_t j = 0; j < n_ctrl; ++j) out.emplace_back(grid, std::move(cols[j]), header[j + 1]);
    return out;
}

inline void to_json(nlohmann::json &j, const BasisSet &b) {
    j = nlohmann::json{{"seed", b.seed},
                       {"omega_max", b.omega_max},
                       {"envelope", std::string(to_string(b.envelope))},
                       {"duration", b.duration},
                       {"functions", nlohmann::json::array()}};
    for (const auto &f : b.functions) {
        j["functions"].push_back({{"kind", std::string(to_string(f.kind))}, {"omega", f.omega}});
    }
}

inline void from_json(const nlohmann::json &j, BasisSet &b) {
    b.seed = j.at("seed").get<std::uint64_t>();
    b.omega_max = j.at("omega_max").get<double>();
    b.envelope = parse_envelope(j.at("envelope").get<std::string>());
    b.duration = j.value("duration", 0.0);
    b.functions.clear();
    for (const auto &f : j.at("functions")) {
        b.functions.push_back({parse_basis_kind(f.at("kind").get<std::string>()), f.at("omega").get<double>()});
    }
}

inline void to_json(nlohmann::json &j, const CrabCoefficients &c) {
    j = nlohmann::json{{"c", c.c}};
    j["c0"] = c.c0 ? nlohmann::json(*c.c0) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json &j, CrabCoefficients &c) {
    c.c = j.at("c").get<std::vector<double>>();
    if (j.contains("c0") && !j["c0"].is_null()) {
        c.c0 = j["c0"].get<double>();
    } else {
        c.c0.reset();
    }
}

}  // namespace dcrab
