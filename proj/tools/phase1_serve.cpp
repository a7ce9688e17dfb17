// HTTP front end for TrialService.

#include <CLI11.hpp>
#include <httplib.h>

#include <iostream>

#include "phase1/service.hpp"

namespace {

using phase1::Json;

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <class Fn>
void guarded(httplib::Response& res, int ok_status, Fn&& fn) {
    try {
        send_json(res, ok_status, fn());
    } catch (const phase1::ServiceError& e) {
        send_json(res, e.status(), {{"error", e.what()}});
    } catch (const Json::exception& e) {
        send_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
    } catch (const phase1::Error& e) {
        send_json(res, 422, {{"error", e.what()}});
    } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}});
    }
}

Json body_json(const httplib::Request& req) { return Json::parse(req.body); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dose-finding trial service"};
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string data_dir = "trials";
    std::string origin = "*";
    app.add_option("--host", host, "Bind address");
    app.add_option("--port", port, "Port");
    app.add_option("--data-dir", data_dir, "Directory for session event logs (empty: memory only)");
    app.add_option("--cors-origin", origin, "Value of Access-Control-Allow-Origin");
    CLI11_PARSE(app, argc, argv);

    std::unique_ptr<phase1::TrialService> service;
    try {
        service = std::make_unique<phase1::TrialService>(data_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }

    httplib::Server server;
    server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Post("/trials", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, 201, [&] { return service->create_trial(body_json(req)); });
    });
    server.Get("/trials", [&](const httplib::Request&, httplib::Response& res) {
        guarded(res, 200, [&] { return Json{{"trials", service->ids()}}; });
    });
    server.Post(R"(/trials/([^/]+)/cohorts)", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, 200, [&] { return service->post_cohort(req.matches[1], body_json(req)); });
    });
    server.Post(R"(/trials/([^/]+)/whatif)", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, 200, [&] { return service->what_if(req.matches[1], body_json(req)); });
    });
    server.Get(R"(/trials/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, 200, [&] { return service->get_state(req.matches[1]); });
    });
    server.Get(R"(/trials/([^/]+)/recommendation)", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, 200, [&] { return service->recommendation(req.matches[1]); });
    });
    server.Get(R"(/trials/([^/]+)/posterior)", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, 200, [&] { return service->posterior(req.matches[1]); });
    });

    std::cerr << "listening on " << host << ':' << port << '\n';
    if (!server.listen(host, port)) {
        std::cerr << "error: cannot bind " << host << ':' << port << '\n';
        return 4;
    }
    return 0;
}
