#include "chatcbm/http_service.hpp"

#include <chrono>
#include <mutex>
#include <ostream>

#include <httplib.h>

namespace chatcbm {
namespace {

using nlohmann::json;

void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json error_body(const std::string& message) { return {{"error", message}}; }

// Runs a handler, translating library errors into HTTP status codes.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const SessionNotFound& e) {
        send(res, 404, error_body(e.what()));
    } catch (const UnknownExample& e) {
        send(res, 404, error_body(e.what()));
    } catch (const SessionBusy& e) {
        send(res, 409, error_body(e.what()));
    } catch (const FieldError& e) {
        auto body = error_body(e.what());
        body["field"] = e.field();
        send(res, 422, body);
    } catch (const BackendError& e) {
        auto body = error_body(e.what());
        body["attempts"] = e.attempts();
        body["http_status"] = e.http_status();
        send(res, 502, body);
    } catch (const json::exception& e) {
        send(res, 422, error_body(std::string("malformed JSON: ") + e.what()));
    } catch (const Error& e) {
        send(res, 422, error_body(e.what()));
    } catch (const std::exception& e) {
        send(res, 500, error_body(e.what()));
    }
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    return json::parse(req.body);
}

thread_local std::chrono::steady_clock::time_point request_start;

}  // namespace

void register_routes(httplib::Server& server, SessionService& service, const HttpOptions& options) {
    server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});

    server.set_pre_routing_handler([](const httplib::Request&, httplib::Response&) {
        request_start = std::chrono::steady_clock::now();
        return httplib::Server::HandlerResponse::Unhandled;
    });

    if (options.log) {
        auto log_mu = std::make_shared<std::mutex>();
        std::ostream* out = options.log;
        server.set_logger([out, log_mu](const httplib::Request& req, const httplib::Response& res) {
            const auto ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - request_start).count();
            const json line{{"method", req.method}, {"path", req.path}, {"status", res.status}, {"ms", ms}};
            std::lock_guard lock(*log_mu);
            *out << line.dump() << '\n';
            out->flush();
        });
    }

    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/healthz", [&service](const httplib::Request&, httplib::Response& res) {
        send(res, 200, {{"status", "ok"}, {"sessions", service.size()}, {"backend", service.backend_name()}});
    });

    server.Post("/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto state = service.create(parse_create_request(parse_body(req)));
            send(res, 200, session_json(state, service.pipeline().bank()));
        });
    });

    server.Get(R"(/sessions/([0-9a-zA-Z_-]+))", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send(res, 200, session_json(service.get(req.matches[1]), service.pipeline().bank())); });
    });

    server.Get(R"(/sessions/([0-9a-zA-Z_-]+)/history)",
               [&service](const httplib::Request& req, httplib::Response& res) {
                   guarded(res, [&] { send(res, 200, history_json(service.get(req.matches[1]))); });
               });

    server.Post(R"(/sessions/([0-9a-zA-Z_-]+)/predict)",
                [&service](const httplib::Request& req, httplib::Response& res) {
                    guarded(res, [&] {
                        const auto r = service.predict(req.matches[1]);
                        auto body = session_json(r.state, service.pipeline().bank());
                        body["prediction"] = prediction_json(r.classification);
                        send(res, 200, body);
                    });
                });

    server.Post(R"(/sessions/([0-9a-zA-Z_-]+)/intervene)",
                [&service](const httplib::Request& req, httplib::Response& res) {
                    guarded(res, [&] {
                        const auto request = parse_intervene_request(parse_body(req));
                        const auto r = service.intervene(req.matches[1], request);
                        auto body = session_json(r.state, service.pipeline().bank());
                        body["prediction"] = r.classification ? prediction_json(*r.classification) : json(nullptr);
                        body["warnings"] = r.warnings;
                        send(res, 200, body);
                    });
                });
}

}  // namespace chatcbm
