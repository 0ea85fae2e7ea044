#pragma once

#include <iosfwd>
#include <string>

#include "chatcbm/session_service.hpp"

namespace httplib {
class Server;
}

namespace chatcbm {

struct HttpOptions {
    std::string cors_origin = "*";
    // JSON Lines request log; null disables logging.
    std::ostream* log = nullptr;
};

// Routes:
//   POST /sessions                   {example_id} | {activations}
//   GET  /sessions/{id}
//   POST /sessions/{id}/predict
//   POST /sessions/{id}/intervene    {kind, text} | {kind: "set_score", concept_id, value} | {kind, edits: [...]}
//   GET  /sessions/{id}/history
//   GET  /healthz
// Errors are {"error": message} with 404 (unknown session or example), 409
// (session busy), 422 (invalid input, with "field" when known), 502 (backend
// failure, with "attempts" and "http_status").
void register_routes(httplib::Server& server, SessionService& service, const HttpOptions& options = {});

}  // namespace chatcbm
