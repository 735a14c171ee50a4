#include "storyweaver/server.hpp"

#include <httplib.h>

#include "storyweaver/errors.hpp"
#include "storyweaver/log.hpp"

namespace storyweaver {
namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Maps library errors onto status codes with a JSON body.
template <typename Fn>
void guarded(httplib::Response& res, Fn fn) {
  try {
    fn();
  } catch (const NoPathError& e) {
    send_json(res, 422, {{"error", e.what()}, {"kind", "no_path"}, {"from", e.from()}, {"to", e.to()}});
  } catch (const NotFoundError& e) {
    send_json(res, 404, {{"error", e.what()}, {"kind", "not_found"}});
  } catch (const ParameterError& e) {
    send_json(res, 400, {{"error", e.what()}, {"kind", "parameter"}});
  } catch (const IngestionError& e) {
    send_json(res, 400, {{"error", e.what()}, {"kind", "ingestion"}});
  } catch (const BusyError& e) {
    send_json(res, 409, {{"error", e.what()}, {"kind", "busy"}});
  } catch (const IntegrityError& e) {
    send_json(res, 422, {{"error", e.what()}, {"kind", "integrity"}});
  } catch (const nlohmann::json::exception& e) {
    send_json(res, 400, {{"error", e.what()}, {"kind", "bad_json"}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}, {"kind", "internal"}});
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  return nlohmann::json::parse(req.body);
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& sessions) {
  server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const nlohmann::json body = parse_body(req);
      SessionConfig config = config_from_json(body.value("config", nlohmann::json::object()));
      apply_seed_override(config);
      const nlohmann::json source = body.value("source", nlohmann::json{{"kind", "toy"}});
      const std::string id = sessions.create(source, config);
      send_json(res, 201, sessions.get(id)->summary());
    });
  });
  server.Get(R"(/sessions/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions.get(req.matches[1])->summary()); });
  });
  server.Post(R"(/sessions/([^/]+)/story)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto session = sessions.get(req.matches[1]);
      const nlohmann::json body = parse_body(req);
      const Round r = session->request_story(body.at("start").get<std::string>(),
                                             body.at("end").get<std::string>());
      send_json(res, 200, session->round_json(r));
    });
  });
  server.Post(R"(/sessions/([^/]+)/feedback)",
              [&](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  auto session = sessions.get(req.matches[1]);
                  const nlohmann::json body = parse_body(req);
                  const Round r =
                      session->submit_feedback(body.at("sequence").get<std::vector<std::string>>());
                  send_json(res, 200, session->round_json(r));
                });
              });
  server.Get(R"(/sessions/([^/]+)/alternatives)",
             [&](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 auto session = sessions.get(req.matches[1]);
                 std::size_t k = 10;
                 if (req.has_param("k")) {
                   const std::string raw = req.get_param_value("k");
                   try {
                     k = std::stoul(raw);
                   } catch (const std::exception&) {
                     throw ParameterError("k must be a positive integer");
                   }
                 }
                 nlohmann::json stories = nlohmann::json::array();
                 std::size_t rank = 1;
                 for (const Story& s : session->list_alternatives(k)) {
                   nlohmann::json j = session->story_json(s);
                   j["rank"] = rank++;
                   stories.push_back(std::move(j));
                 }
                 send_json(res, 200, {{"k", k}, {"stories", stories}});
               });
             });
  server.Get(R"(/sessions/([^/]+)/layout)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions.get(req.matches[1])->layout()); });
  });
  server.Get(R"(/sessions/([^/]+)/heatmap)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions.get(req.matches[1])->heatmap()); });
  });
  server.Get(R"(/sessions/([^/]+)/progress)",
             [&](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 const Progress p = sessions.get(req.matches[1])->progress();
                 send_json(res, 200,
                           {{"status", to_string(p.status)}, {"sweep", p.sweep}, {"total", p.total}});
               });
             });
}

void serve(SessionManager& sessions, const std::string& host, int port) {
  httplib::Server server;
  register_routes(server, sessions);
  if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace storyweaver
