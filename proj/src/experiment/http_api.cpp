// Project headers (Eigen) must precede httplib: <resolv.h> defines `_res`.
#include "ideoscale/experiment.hpp"

#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace ideo {

using nlohmann::json;

struct ExperimentApi::Server {
  httplib::Server http;
};

namespace {

HttpReply json_reply(int status, const json& body) { return {status, "application/json", body.dump()}; }

HttpReply error_reply(int status, const Error& e) {
  return json_reply(status, {{"error", e.kind()}, {"message", e.what()}});
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string p; std::getline(ss, p, '/');)
    if (!p.empty()) parts.push_back(p);
  return parts;
}

json public_view(const Session& s, const ExperimentConfig& config) {
  json j = json::parse(session_to_json(s, false));
  for (auto& aj : j["assignments"]) {
    const auto& q = config.question(aj["question_id"].get<std::string>());
    aj["text"] = q.text;
    aj["options"] = q.options;
    if (aj["treated"].get<bool>() && !aj["first_display"].is_null())
      aj["vote_opens_at"] = aj["first_display"].get<double>() + config.min_chat_seconds;
  }
  return j;
}

std::string field(const json& body, const char* name) {
  if (!body.contains(name) || !body[name].is_string()) throw ParseError(std::string("missing string field '") + name + "'");
  return body[name].get<std::string>();
}

}  // namespace

ExperimentApi::ExperimentApi(ExperimentService& service, std::string export_token)
    : service_(service), export_token_(std::move(export_token)), server_(std::make_shared<Server>()) {}

HttpReply ExperimentApi::handle(const std::string& method, const std::string& path,
                                const std::map<std::string, std::string>& query, const std::string& body,
                                const std::string& authorization) const {
  const auto parts = split_path(path);
  try {
    json in = json::object();
    if (method == "POST" && !body.empty()) {
      try {
        in = json::parse(body);
      } catch (const json::exception&) {
        throw ParseError("request body is not valid JSON");
      }
    }

    if (parts.size() == 1 && parts[0] == "export" && method == "GET") {
      if (export_token_.empty() || authorization != "Bearer " + export_token_)
        return json_reply(401, {{"error", "Unauthorized"}, {"message", "export requires a valid bearer token"}});
      std::optional<std::string> wave;
      if (auto it = query.find("wave"); it != query.end() && !it->second.empty()) wave = it->second;
      return {200, "text/csv", trials_to_csv(service_.export_trials(wave))};
    }

    if (parts.empty() || parts[0] != "session") return json_reply(404, {{"error", "NotFound"}, {"message", path}});

    if (parts.size() == 1 && method == "POST") {
      const Session s = service_.create_session(field(in, "participant_id"));
      return json_reply(201, public_view(s, service_.config()));
    }
    if (parts.size() == 2 && method == "GET")
      return json_reply(200, public_view(service_.get_session(parts[1]), service_.config()));

    if (parts.size() == 3 && method == "POST") {
      const std::string& id = parts[1];
      const std::string& action = parts[2];
      if (action == "pretreatment") {
        std::map<std::string, std::string> answers;
        if (!in.contains("answers") || !in["answers"].is_object()) throw ParseError("missing object field 'answers'");
        for (const auto& [k, v] : in["answers"].items()) {
          if (!v.is_string()) throw ParseError("pretreatment answer '" + k + "' must be a string");
          answers[k] = v.get<std::string>();
        }
        return json_reply(200, public_view(service_.submit_pretreatment(id, answers), service_.config()));
      }
      if (action == "display")
        return json_reply(200, public_view(service_.display_question(id, field(in, "question_id")), service_.config()));
      if (action == "chat") {
        const std::string reply = service_.relay_chat(id, field(in, "question_id"), field(in, "message"));
        return json_reply(200, {{"reply", reply}});
      }
      if (action == "vote") {
        const TrialRecord r = service_.record_vote(id, field(in, "question_id"), field(in, "choice"));
        const Session s = service_.get_session(id);
        return json_reply(200, {{"recorded", true}, {"question_id", r.question_id}, {"completed", s.completed}});
      }
    }
    return json_reply(404, {{"error", "NotFound"}, {"message", method + " " + path}});
  } catch (const TimerNotElapsed& e) {
    return json_reply(409, {{"error", e.kind()}, {"message", e.what()}, {"remaining_seconds", e.remaining_seconds()}});
  } catch (const UnknownSession& e) {
    return error_reply(404, e);
  } catch (const UnknownQuestion& e) {
    return error_reply(404, e);
  } catch (const ParseError& e) {
    return error_reply(400, e);
  } catch (const InvalidChoice& e) {
    return error_reply(400, e);
  } catch (const EmptyMessage& e) {
    return error_reply(400, e);
  } catch (const ProviderUnavailable& e) {
    return error_reply(503, e);
  } catch (const Error& e) {
    // DuplicateParticipant, AlreadyVoted, UntreatedQuestion, SessionCompleted
    return error_reply(409, e);
  }
}

namespace {

void mount(httplib::Server& http, const ExperimentApi& api) {
  auto route = [&api](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    const HttpReply r = api.handle(req.method, req.path, query, req.body, req.get_header_value("Authorization"));
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  http.Get(".*", route);
  http.Post(".*", route);
}

}  // namespace

void ExperimentApi::serve(const std::string& host, int port) {
  mount(server_->http, *this);
  if (!server_->http.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

int ExperimentApi::bind_any_port(const std::string& host) {
  mount(server_->http, *this);
  const int port = server_->http.bind_to_any_port(host);
  if (port < 0) throw Error("cannot bind " + host);
  return port;
}

void ExperimentApi::listen_after_bind() { server_->http.listen_after_bind(); }

void ExperimentApi::stop() { server_->http.stop(); }

}  // namespace ideo
