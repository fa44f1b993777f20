/// @file annotation_server.hpp
/// @brief JSON-over-HTTP routes for rating campaigns.

#pragma once

#include <functional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "reld/annotation.hpp"

namespace reld {

inline int http_status(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::authorization: return 403;
        case ErrorKind::not_found: return 404;
        case ErrorKind::data: return 422;
        case ErrorKind::endpoint: return 502;
        default: return 400;
    }
}

inline void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", {{"code", code}, {"message", message}}}}.dump(), "application/json");
}

inline void respond(httplib::Response& res, const std::function<nlohmann::json()>& handler, int ok_status = 200) {
    try {
        res.status = ok_status;
        res.set_content(handler().dump(), "application/json");
    } catch (const Error& e) {
        send_error(res, http_status(e.kind()), error_code(e.kind()), e.what());
    } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, error_code(ErrorKind::validation), std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal_error", e.what());
    }
}

inline nlohmann::json parse_body(const httplib::Request& req) {
    if (req.body.empty()) fail(ErrorKind::validation, "request body is empty");
    return nlohmann::json::parse(req.body);
}

inline void mount_campaign_routes(httplib::Server& server, CampaignStore& store) {
    server.Post("/campaigns", [&store](const httplib::Request& req, httplib::Response& res) {
        respond(res, [&] { return store.create(parse_body(req)); }, 201);
    });
    server.Get(R"(/campaigns/([^/]+))", [&store](const httplib::Request& req, httplib::Response& res) {
        respond(res, [&] { return store.summary(req.matches[1]); });
    });
    server.Get(R"(/campaigns/([^/]+)/next)", [&store](const httplib::Request& req, httplib::Response& res) {
        respond(res, [&] {
            if (!req.has_param("rater")) fail(ErrorKind::validation, "missing ?rater= parameter");
            return store.next(req.matches[1], req.get_param_value("rater"));
        });
    });
    server.Post(R"(/campaigns/([^/]+)/ratings)", [&store](const httplib::Request& req, httplib::Response& res) {
        respond(res, [&] { return store.rate(req.matches[1], parse_body(req)); });
    });
    server.Get(R"(/campaigns/([^/]+)/agreement)", [&store](const httplib::Request& req, httplib::Response& res) {
        respond(res, [&] { return store.agreement(req.matches[1]); });
    });
    server.Post(R"(/campaigns/([^/]+)/gate)", [&store](const httplib::Request& req, httplib::Response& res) {
        respond(res, [&] { return store.gate(req.matches[1]); });
    });
    server.Get(R"(/campaigns/([^/]+)/export)", [&store](const httplib::Request& req, httplib::Response& res) {
        respond(res, [&] {
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& r : store.export_rows(req.matches[1])) rows.push_back(to_json(r));
            return nlohmann::json{{"campaign", std::string(req.matches[1])}, {"ratings", rows}};
        });
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) send_error(res, res.status, "http_" + std::to_string(res.status), "no such route");
    });
}

}  // namespace reld
