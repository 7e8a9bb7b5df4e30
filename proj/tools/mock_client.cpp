// Stand-in for a remote experiment: answers pulse requests with the simulated
// figure of merit of a run configuration, over TCP or an exchange directory.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "dcrab/config.hpp"
#include "dcrab/loop/client.hpp"

int main(int argc, char **argv) {
    CLI::App app{"dcrab mock client"};
    std::string config;
    std::string host = "127.0.0.1";
    std::optional<int> port;
    std::optional<std::string> port_file;
    std::optional<std::string> directory;
    double timeout = 30.0;
    app.add_option("--config", config, "Run configuration defining the simulated problem")->required();
    app.add_option("--host", host, "Server host");
    app.add_option("--port", port, "Server port");
    app.add_option("--port-file", port_file, "Read the port from this file (waits for it)");
    app.add_option("--dir", directory, "Exchange directory instead of TCP");
    app.add_option("--timeout", timeout, "Idle timeout in seconds");
    CLI11_PARSE(app, argc, argv);

    try {
        dcrab::RunConfig cfg = dcrab::load_run_config(config);
        dcrab::PulseEvaluator evaluator = dcrab::make_simulated_evaluator(cfg.problem());
        const auto idle = std::chrono::milliseconds(static_cast<long long>(timeout * 1000.0));
        dcrab::loop::ClientSummary summary;
        if (directory) {
            summary = dcrab::loop::run_exchange_client(*directory, evaluator, idle);
        } else {
            if (!port && port_file) {
                const auto deadline = std::chrono::steady_clock::now() + idle;
                while (!port) {
                    std::ifstream is(*port_file);
                    int p = 0;
                    if (is >> p) {
                        port = p;
                    } else if (std::chrono::steady_clock::now() > deadline) {
                        throw dcrab::TimeoutError("no port file " + *port_file);
                    } else {
                        std::this_thread::sleep_for(std::chrono::milliseconds(10));
                    }
                }
            }
            if (!port) throw std::runtime_error("--port, --port-file or --dir required");
            dcrab::loop::LineChannel channel(dcrab::loop::connect_tcp(host, *port));
            summary = dcrab::loop::run_line_client(channel, evaluator, idle);
        }
        std::cout << "session " << summary.session << " closed (" << summary.close_reason << ") after "
                  << summary.evaluations << " evaluations";
        if (summary.best_J) std::cout << ", best J " << *summary.best_J;
        std::cout << '\n';
        if (!summary.server_error.empty()) {
            std::cerr << "server reported: " << summary.server_error << '\n';
            return 1;
        }
        return 0;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
