#pragma once

// Client side of the closed loop: receives pulses, evaluates them with a
// caller-supplied figure of merit and replies. Used by the mock client tool
// and by the loopback tests.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcrab/control_problem.hpp"
#include "dcrab/error.hpp"
#include "dcrab/loop/protocol.hpp"
#include "dcrab/loop/transport.hpp"

namespace dcrab::loop {

struct ClientSummary {
    std::string session;
    std::size_t evaluations = 0;
    std::string close_reason;
    std::optional<double> best_J;
    std::string server_error;  // text of an error message from the server
};

inline LoopMessage make_reply(const LoopMessage &request, const FomReport &fom) {
    LoopMessage r;
    r.type = MessageType::fom_reply;
    r.session = request.session;
    r.iter = request.iter;
    r.J = fom.J;
    r.err = fom.std_error;
    return r;
}

/// Client callback for InProcessTransport.
inline InProcessTransport::Client make_inprocess_client(PulseEvaluator evaluator) {
    return [evaluator = std::move(evaluator)](const std::string &line) -> std::optional<std::string> {
        LoopMessage m = decode(line);
        if (m.type != MessageType::pulse_request) return std::nullopt;
        std::vector<Pulse> pulses = from_wire(m.pulses);
        return encode(make_reply(m, evaluator(pulses)));
    };
}

/// Serves pulse requests on a connected channel until session_close.
inline ClientSummary run_line_client(LineChannel &channel, const PulseEvaluator &evaluator,
                                     std::chrono::milliseconds idle_timeout) {
    ClientSummary s;
    while (true) {
        auto line = channel.read_line(idle_timeout);
        if (!line) throw TimeoutError("no message from the server");
        LoopMessage m = decode(*line);
        switch (m.type) {
            case MessageType::session_open: s.session = m.session; break;
            case MessageType::pulse_request: {
                std::vector<Pulse> pulses = from_wire(m.pulses);
                channel.send_line(encode(make_reply(m, evaluator(pulses))));
                ++s.evaluations;
                break;
            }
            case MessageType::error: s.server_error = m.text; break;
            case MessageType::session_close:
                s.close_reason = m.text;
                s.best_J = m.best_J;
                return s;
            case MessageType::fom_reply: throw ProtocolError("unexpected fom_reply from the server");
        }
    }
}

/// Pulses of evaluation `iter`, or nullopt while the ready marker is absent.
inline std::optional<std::vector<Pulse>> poll_exchange_pulse(const std::filesystem::path &dir, std::size_t iter) {
    if (!std::filesystem::exists(ready_path(dir, iter))) return std::nullopt;
    std::ifstream is(pulse_path(dir, iter));
    if (!is) throw ProtocolError("ready marker without pulse file for iteration " + std::to_string(iter));
    return read_pulses_csv(is);
}

inline void write_exchange_fom(const std::filesystem::path &dir, const std::string &session, std::size_t iter,
                               const FomReport &fom) {
    nlohmann::json j{{"session", session}, {"iter", iter}, {"J", fom.J}};
    if (fom.std_error) j["err"] = *fom.std_error;
    detail::write_new_file(fom_path(dir, iter), j.dump() + "\n");
}

/// Polls the exchange directory until the server writes close.json.
inline ClientSummary run_exchange_client(const std::filesystem::path &dir, const PulseEvaluator &evaluator,
                                         std::chrono::milliseconds idle_timeout,
                                         std::chrono::milliseconds poll = std::chrono::milliseconds(2)) {
    ClientSummary s;
    auto last_activity = Clock::now();
    std::size_t iter = 1;
    while (true) {
        if (s.session.empty() && std::filesystem::exists(dir / "session.json")) {
            s.session = nlohmann::json::parse(detail::read_file(dir / "session.json")).at("session").get<std::string>();
        }
        if (!s.session.empty()) {
            if (auto pulses = poll_exchange_pulse(dir, iter)) {
                write_exchange_fom(dir, s.session, iter, evaluator(*pulses));
                ++s.evaluations;
                ++iter;
                last_activity = Clock::now();
                continue;
            }
            if (std::filesystem::exists(dir / "close.json")) {
                LoopMessage m = decode(detail::read_file(dir / "close.json"));
                s.close_reason = m.text;
                s.best_J = m.best_J;
                if (std::filesystem::exists(dir / "error.json")) {
                    s.server_error = decode(detail::read_file(dir / "error.json")).text;
                }
                return s;
            }
        }
        if (Clock::now() - last_activity > idle_timeout) throw TimeoutError("exchange directory idle");
        std::this_thread::sleep_for(poll);
    }
}

}  // namespace dcrab::loop
