// SPDX-License-Identifier: Apache-2.0
//
// Reference denoiser server for the external protocol.
//
//   edminvert_serve --port 5555 --mode iso-gaussian --mu 0 --s 1 --sigma-data 0.5
//
// Prints "listening on <port>" once ready, then serves until killed.

#include <iostream>

#include <CLI11.hpp>

#include "edminvert/denoiser.hpp"
#include "edminvert/errors.hpp"
#include "edminvert/wire.hpp"

int main(int argc, char** argv) {
    using namespace edminvert;
    CLI::App app{"Reference raw-network server"};
    std::uint16_t port = 0;
    std::string host = "127.0.0.1";
    std::string mode = "iso-gaussian";
    std::string mu = "0";
    double s = 1.0;
    double sigma_data = 0.5;
    bool unconditioned = false;
    app.add_option("--port", port, "TCP port (0 picks a free one)");
    app.add_option("--host", host, "IPv4 address to bind");
    app.add_option("--mode", mode, "echo | zeros | iso-gaussian")->check(CLI::IsMember({"echo", "zeros", "iso-gaussian"}));
    app.add_option("--mu", mu, "Prior mean: real or per-channel list");
    app.add_option("--s", s, "Prior std");
    app.add_option("--sigma-data", sigma_data);
    app.add_flag("--unconditioned", unconditioned, "Ignore the conditioning frame");
    CLI11_PARSE(app, argc, argv);

    try {
        wire::DenoiserServer::Handler handler;
        if (mode == "echo") {
            handler = wire::echo_handler();
        } else if (mode == "zeros") {
            handler = wire::zero_handler();
        } else {
            handler = wire::iso_gaussian_handler(parse_channel_values(mu), s, sigma_data, !unconditioned);
        }
        wire::DenoiserServer server(handler, port, host);
        std::cout << "listening on " << server.port() << std::endl;
        server.serve_forever();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    }
    return 0;
}
