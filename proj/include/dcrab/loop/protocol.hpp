#pragma once

// Line-delimited JSON messages of the closed-loop protocol.
//
//   {"type":"session_open","session":id,"config":{...}}
//   {"type":"pulse_request","session":id,"iter":n,"pulses":[{"times":[...],"values":[...]}]}
//   {"type":"fom_reply","session":id,"iter":n,"J":x,"err":e}      err optional
//   {"type":"session_close","session":id,"reason":"...","best_J":x}  best_J may be null
//   {"type":"error","session":id,"message":"..."}
//
// Unknown fields are ignored on decode.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcrab/error.hpp"
#include "dcrab/pulses.hpp"

namespace dcrab::loop {

enum class MessageType { session_open, pulse_request, fom_reply, session_close, error };

inline std::string_view to_string(MessageType t) {
    switch (t) {
        case MessageType::session_open: return "session_open";
        case MessageType::pulse_request: return "pulse_request";
        case MessageType::fom_reply: return "fom_reply";
        case MessageType::session_close: return "session_close";
        case MessageType::error: return "error";
    }
    return "?";
}

struct WirePulse {
    std::vector<double> times;
    std::vector<double> values;

    bool operator==(const WirePulse &) const = default;
};

struct LoopMessage {
    MessageType type = MessageType::error;
    std::string session;
    std::size_t iter = 0;            // pulse_request, fom_reply
    std::vector<WirePulse> pulses;   // pulse_request
    double J = 0.0;                  // fom_reply
    std::optional<double> err;       // fom_reply
    std::string text;                // session_close reason, error message
    std::optional<double> best_J;    // session_close
    nlohmann::json config;           // session_open

    bool operator==(const LoopMessage &) const = default;
};

inline WirePulse to_wire(const Pulse &p) {
    return {p.grid().times(), std::vector<double>(p.values().begin(), p.values().end())};
}

inline std::vector<WirePulse> to_wire(std::span<const Pulse> pulses) {
    std::vector<WirePulse> out;
    for (const auto &p : pulses) out.push_back(to_wire(p));
    return out;
}

/// Rebuilds a pulse on a uniform grid starting at 0.
inline Pulse from_wire(const WirePulse &w) {
    if (w.times.size() != w.values.size()) throw DecodeError("pulses", "times and values differ in length");
    if (w.times.size() < 2) throw DecodeError("pulses", "at least two samples required");
    if (w.times.front() != 0.0) throw DecodeError("pulses", "time grid must start at 0");
    try {
        TimeGrid grid(w.times.back(), w.times.size());
        for (std::size_t k = 0; k < w.times.size(); ++k) {
            if (std::abs(w.times[k] - grid.time(k)) > 1e-9 * grid.duration()) {
                throw DecodeError("pulses", "time grid is not uniform");
            }
        }
        return Pulse(grid, w.values);
    } catch (const std::invalid_argument &e) {
        throw DecodeError("pulses", e.what());
    }
}

inline std::vector<Pulse> from_wire(std::span<const WirePulse> pulses) {
    std::vector<Pulse> out;
    for (const auto &w : pulses) out.push_back(from_wire(w));
    return out;
}

inline nlohmann::json message_to_json(const LoopMessage &m) {
    nlohmann::json j{{"type", std::string(to_string(m.type))}, {"session", m.session}};
    switch (m.type) {
        case MessageType::session_open: j["config"] = m.config; break;
        case MessageType::pulse_request: {
            j["iter"] = m.iter;
            nlohmann::json arr = nlohmann::json::array();
            for (const auto &p : m.pulses) arr.push_back({{"times", p.times}, {"values", p.values}});
            j["pulses"] = std::move(arr);
            break;
        }
        case MessageType::fom_reply:
            j["iter"] = m.iter;
            j["J"] = m.J;
            if (m.err) j["err"] = *m.err;
            break;
        case MessageType::session_close:
            j["reason"] = m.text;
            j["best_J"] = m.best_J && std::isfinite(*m.best_J) ? nlohmann::json(*m.best_J) : nlohmann::json(nullptr);
            break;
        case MessageType::error: j["message"] = m.text; break;
    }
    return j;
}

/// One line, no trailing newline.
inline std::string encode(const LoopMessage &m) { return message_to_json(m).dump(); }

namespace detail {

inline const nlohmann::json &require(const nlohmann::json &j, const char *field) {
    auto it = j.find(field);
    if (it == j.end()) throw DecodeError(field, "missing required field");
    return *it;
}

inline std::string require_string(const nlohmann::json &j, const char *field) {
    const auto &v = require(j, field);
    if (!v.is_string()) throw DecodeError(field, "expected a string");
    return v.get<std::string>();
}

inline double require_finite(const nlohmann::json &v, const char *field) {
    if (!v.is_number()) throw DecodeError(field, "expected a number");
    double x = v.get<double>();
    if (!std::isfinite(x)) throw DecodeError(field, "non-finite value");
    return x;
}

inline std::size_t require_index(const nlohmann::json &j, const char *field) {
    const auto &v = require(j, field);
    if (!v.is_number_unsigned()) throw DecodeError(field, "expected a nonnegative integer");
    return v.get<std::size_t>();
}

inline std::vector<double> require_numbers(const nlohmann::json &v, const char *field) {
    if (!v.is_array()) throw DecodeError(field, "expected an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto &x : v) out.push_back(require_finite(x, field));
    return out;
}

}  // namespace detail

inline LoopMessage message_from_json(const nlohmann::json &j) {
    if (!j.is_object()) throw DecodeError("type", "message must be a JSON object");
    LoopMessage m;
    const std::string type = detail::require_string(j, "type");
    m.session = detail::require_string(j, "session");
    if (type == "session_open") {
        m.type = MessageType::session_open;
        m.config = j.value("config", nlohmann::json::object());
    } else if (type == "pulse_request") {
        m.type = MessageType::pulse_request;
        m.iter = detail::require_index(j, "iter");
        const auto &arr = detail::require(j, "pulses");
        if (!arr.is_array() || arr.empty()) throw DecodeError("pulses", "expected a non-empty array");
        for (const auto &p : arr) {
            if (!p.is_object()) throw DecodeError("pulses", "expected objects with times and values");
            m.pulses.push_back({detail::require_numbers(detail::require(p, "times"), "times"),
                                detail::require_numbers(detail::require(p, "values"), "values")});
        }
    } else if (type == "fom_reply") {
        m.type = MessageType::fom_reply;
        m.iter = detail::require_index(j, "iter");
        m.J = detail::require_finite(detail::require(j, "J"), "J");
        if (auto it = j.find("err"); it != j.end() && !it->is_null()) m.err = detail::require_finite(*it, "err");
    } else if (type == "session_close") {
        m.type = MessageType::session_close;
        m.text = detail::require_string(j, "reason");
        if (auto it = j.find("best_J"); it != j.end() && !it->is_null()) m.best_J = detail::require_finite(*it, "best_J");
    } else if (type == "error") {
        m.type = MessageType::error;
        m.text = detail::require_string(j, "message");
    } else {
        throw DecodeError("type", "unknown message type '" + type + "'");
    }
    return m;
}

inline LoopMessage decode(std::string_view line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line.begin(), line.end());
    } catch (const nlohmann::json::parse_error &e) {
        // A parse failure at or past the last byte means the line was cut short.
        if (e.byte >= line.size() ||
            std::string_view(e.what()).find("unexpected end of input") != std::string_view::npos) {
            throw DecodeError("unexpected end", "line ended before the message was complete");
        }
        throw DecodeError("json", e.what());
    }
    return message_from_json(j);
}

}  // namespace dcrab::loop
