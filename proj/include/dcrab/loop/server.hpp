#pragma once

// Closed-loop optimization: dCRAB runs here, the figure of merit of each
// assembled pulse comes from a remote client.

#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcrab/error.hpp"
#include "dcrab/loop/protocol.hpp"
#include "dcrab/loop/transport.hpp"
#include "dcrab/optimizer.hpp"

namespace dcrab::loop {

struct SessionConfig {
    SearchConfig search;
    std::vector<Pulse> guess;
    ConstraintSpec constraint;
    double timeout_seconds = 30.0;  // per evaluation
    std::string session_id;         // generated when empty

    void validate() const {
        search.validate();
        if (!(timeout_seconds > 0.0)) throw std::invalid_argument("SessionConfig: timeout must be positive");
        if (guess.empty()) throw std::invalid_argument("SessionConfig: guess pulse required");
    }

    nlohmann::json echo() const {
        const TimeGrid &g = guess.front().grid();
        return {{"search", search},
                {"grid", {{"duration", g.duration()}, {"samples", g.size()}}},
                {"controls", guess.size()},
                {"constraint", {{"mode", std::string(to_string(constraint.mode))}, {"f_max", constraint.f_max}}},
                {"timeout", timeout_seconds}};
    }
};

inline std::string new_session_id() {
    std::random_device rd;
    std::ostringstream os;
    os << std::hex << rd() << rd();
    return os.str();
}

struct SessionOutcome {
    OptimizationRecord record;
    std::string session;
    std::string close_reason;  // termination reason, "timeout" or "protocol_error"
    std::string error;         // protocol or timeout detail, empty on success
};

/// Runs one session over `transport`. Protocol failures end the session with
/// a partial record; session_close is always attempted.
inline SessionOutcome serve(const SessionConfig &config, Transport &transport) {
    config.validate();
    SessionOutcome out;
    out.session = config.session_id.empty() ? new_session_id() : config.session_id;
    const auto timeout = std::chrono::milliseconds(static_cast<long long>(std::ceil(config.timeout_seconds * 1000.0)));

    auto notify_error = [&](const std::string &text) {
        try {
            LoopMessage e;
            e.type = MessageType::error;
            e.session = out.session;
            e.text = text;
            transport.send(e);
        } catch (const std::exception &) {
        }
    };

    std::size_t iter = 0;
    std::string failure;
    PulseEvaluator evaluator = [&](std::span<const Pulse> pulses) -> FomReport {
        LoopMessage req;
        req.type = MessageType::pulse_request;
        req.session = out.session;
        req.iter = ++iter;
        req.pulses = to_wire(pulses);
        std::optional<LoopMessage> reply;
        try {
            transport.send(req);
            // A timeout is retried once by waiting one more window; the
            // request is not resent (lock-step).
            reply = transport.receive(timeout);
            if (!reply) reply = transport.receive(timeout);
        } catch (const ProtocolError &e) {
            failure = "protocol_error";
            notify_error(e.what());
            throw;
        }
        if (!reply) {
            failure = "timeout";
            notify_error("no fom_reply for iteration " + std::to_string(req.iter));
            throw TimeoutError("no fom_reply for iteration " + std::to_string(req.iter) + " after retry");
        }
        std::string problem;
        if (reply->type != MessageType::fom_reply) {
            problem = "expected fom_reply, got " + std::string(to_string(reply->type));
        } else if (reply->session != out.session) {
            problem = "reply for session '" + reply->session + "'";
        } else if (reply->iter != req.iter) {
            problem = "reply for iteration " + std::to_string(reply->iter) + ", expected " + std::to_string(req.iter);
        } else if (!std::isfinite(reply->J)) {
            problem = "non-finite J";
        }
        if (!problem.empty()) {
            failure = "protocol_error";
            notify_error(problem);
            throw ProtocolError(problem);
        }
        return {reply->J, reply->err};
    };

    LoopMessage open;
    open.type = MessageType::session_open;
    open.session = out.session;
    open.config = config.echo();
    try {
        transport.send(open);
    } catch (const ProtocolError &e) {
        out.close_reason = "protocol_error";
        out.error = e.what();
        out.record.guess = config.guess;
        out.record.final_pulses = config.guess;
        out.record.termination = Termination::aborted;
        out.record.detail = e.what();
        return out;
    }

    SearchConfig search = config.search;
    search.algorithm = Algorithm::dcrab;
    out.record = optimize_pulses(config.guess, config.constraint, evaluator, search);
    out.close_reason = failure.empty() ? std::string(to_string(out.record.termination)) : failure;
    if (!failure.empty()) out.error = out.record.detail;

    LoopMessage close;
    close.type = MessageType::session_close;
    close.session = out.session;
    close.text = out.close_reason;
    close.best_J = out.record.final_J;
    try {
        transport.send(close);
    } catch (const std::exception &) {
    }
    return out;
}

/// Accepts `sessions` connections and serves each on its own thread with an
/// isolated copy of `config`. Returns outcomes in acceptance order.
inline std::vector<SessionOutcome> serve_tcp(const SessionConfig &config, TcpListener &listener, std::size_t sessions,
                                             std::chrono::milliseconds accept_timeout) {
    std::vector<SessionOutcome> outcomes(sessions);
    std::vector<std::thread> workers;
    std::size_t accepted = 0;
    for (; accepted < sessions; ++accepted) {
        auto socket = listener.accept(accept_timeout);
        if (!socket) break;
        SessionConfig own = config;
        if (!own.session_id.empty() && sessions > 1) own.session_id += "-" + std::to_string(accepted);
        auto sock = std::make_shared<Socket>(std::move(*socket));
        workers.emplace_back([own, sock, slot = &outcomes[accepted]]() {
            TcpTransport transport(std::move(*sock));
            *slot = serve(own, transport);
        });
    }
    for (auto &w : workers) w.join();
    outcomes.resize(accepted);
    return outcomes;
}

}  // namespace dcrab::loop
