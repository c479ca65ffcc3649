#include "nlual/service.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

#include "httplib.h"
#include "nlual/config.hpp"

namespace nlual {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::selecting: return "selecting";
    case SessionStatus::awaiting_annotation: return "awaiting_annotation";
    case SessionStatus::retraining: return "retraining";
    case SessionStatus::done: return "done";
  }
  return "?";
}

std::string to_string(AnnotationFlag f) {
  switch (f) {
    case AnnotationFlag::ok: return "ok";
    case AnnotationFlag::unactionable: return "unactionable";
    case AnnotationFlag::out_of_domain: return "out_of_domain";
  }
  return "?";
}

AnnotationFlag annotation_flag_from_string(std::string_view s) {
  if (s == "ok") return AnnotationFlag::ok;
  if (s == "unactionable") return AnnotationFlag::unactionable;
  if (s == "out_of_domain") return AnnotationFlag::out_of_domain;
  throw Error("unknown flag '" + std::string(s) + "'");
}

json to_json(const AnnotationRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["domain"] = r.domain;
  j["intent"] = r.intent;
  j["bio_tags"] = r.bio_tags;
  j["annotator"] = r.annotator;
  j["timestamp"] = r.timestamp;
  j["flag"] = to_string(r.flag);
  j["supersedes"] = r.supersedes;
  return j;
}

AnnotationRecord annotation_record_from_json(const json& j) {
  if (!j.is_object()) throw Error("annotation record must be an object");
  AnnotationRecord r;
  r.id = j.at("id").get<std::string>();
  r.domain = j.value("domain", "");
  r.intent = j.value("intent", "");
  r.bio_tags = j.value("bio_tags", std::vector<std::string>{});
  r.annotator = j.value("annotator", "");
  r.timestamp = j.value("timestamp", "");
  r.flag = annotation_flag_from_string(j.value("flag", "ok"));
  r.supersedes = j.value("supersedes", false);
  return r;
}

namespace {

ApiResponse error(int status, std::string code, std::string message, json details = json::array()) {
  return {status, {{"code", std::move(code)}, {"message", std::move(message)}, {"details", std::move(details)}}};
}

ApiResponse not_found(const std::string& id) {
  return error(404, "not_found", "unknown session " + id);
}

std::string utc_now() {
  using namespace std::chrono;
  const auto t = system_clock::now();
  const std::time_t secs = system_clock::to_time_t(t);
  const auto ms = duration_cast<milliseconds>(t.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

double seconds_between(const std::string& a, const std::string& b) {
  auto parse = [](const std::string& s) -> std::optional<double> {
    std::tm tm{};
    int ms = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d.%dZ", &tm.tm_year, &tm.tm_mon, &tm.tm_mday, &tm.tm_hour,
                    &tm.tm_min, &tm.tm_sec, &ms) < 6) {
      return std::nullopt;
    }
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    return static_cast<double>(timegm(&tm)) + ms / 1000.0;
  };
  auto x = parse(a), y = parse(b);
  return x && y ? *y - *x : 0.0;
}

// Checks a submitted record against the candidate it annotates. Returns
// error details, empty when valid.
json validate_record(const AnnotationRecord& r, const PoolCandidate& c) {
  json details = json::array();
  if (r.flag != AnnotationFlag::ok) return details;
  if (r.domain.empty()) details.push_back({{"id", r.id}, {"field", "domain"}, {"message", "domain required"}});
  if (r.intent.empty()) details.push_back({{"id", r.id}, {"field", "intent"}, {"message", "intent required"}});
  if (r.bio_tags.size() != c.tokens.size()) {
    details.push_back({{"id", r.id},
                       {"field", "bio_tags"},
                       {"message", "bio_tags length " + std::to_string(r.bio_tags.size()) + " != tokens length " +
                                       std::to_string(c.tokens.size())}});
  } else if (auto v = bio_violation(r.bio_tags)) {
    details.push_back({{"id", r.id}, {"field", "bio_tags"}, {"message", *v}});
  }
  return details;
}

Utterance to_utterance(const AnnotationRecord& r, const PoolCandidate& c) {
  Utterance u;
  u.id = c.id;
  u.text = c.text;
  u.tokens = c.tokens;
  if (r.flag == AnnotationFlag::ok) {
    u.domain = r.domain;
    u.intent = r.intent;
    u.bio_tags = r.bio_tags;
    u.source = Source::live;
  } else {
    // Unusable utterances become negatives for every target.
    u.domain = kOutOfDomain;
    u.intent = kOutOfDomain;
    u.bio_tags.assign(c.tokens.size(), "O");
    u.source = Source::noise;
  }
  return u;
}

}  // namespace

struct AnnotationService::Session {
  std::string id;
  std::vector<std::string> targets;
  AlConfig al;
  std::unique_ptr<SelectionState> state;
  SessionStatus status = SessionStatus::selecting;
  Batch batch;
  std::map<std::string, AnnotationRecord> annotations;  // effective records for the current batch
  std::vector<json> journal;
  std::filesystem::path journal_path;
  std::string created, updated;
  std::mutex mu;

  int iteration() const { return status == SessionStatus::done ? al.iterations : state->iteration() + 1; }

  std::vector<std::string> missing() const {
    std::vector<std::string> out;
    for (const auto& id : batch.ids) {
      if (!annotations.count(id)) out.push_back(id);
    }
    return out;
  }
};

AnnotationService::AnnotationService(Corpus seed, std::vector<PoolCandidate> pool, ServiceOptions options)
    : seed_(std::move(seed)), pool_(std::move(pool)), options_(std::move(options)) {
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    if (!pool_index_.emplace(pool_[i].id, i).second) throw Error("duplicate pool id " + pool_[i].id);
    if (seed_.contains(pool_[i].id)) throw Error("pool id also in seed data: " + pool_[i].id);
  }
  if (!options_.clock) options_.clock = utc_now;
  const auto dir = options_.data_dir / "sessions";
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> journals;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".jsonl") journals.push_back(e.path());
  }
  std::sort(journals.begin(), journals.end());
  for (const auto& j : journals) replay(j);
}

AnnotationService::~AnnotationService() = default;

std::string AnnotationService::now() const { return options_.clock(); }

std::shared_ptr<AnnotationService::Session> AnnotationService::find(const std::string& id) {
  std::shared_lock lock(sessions_mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::vector<std::string> AnnotationService::session_ids() {
  std::shared_lock lock(sessions_mu_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

void AnnotationService::append(Session& s, json record) {
  const std::string line = record.dump();
  std::ofstream out(s.journal_path, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot append to journal " + s.journal_path.string());
  out << line << '\n';
  out.flush();
  if (!out) throw Error("journal write failed for " + s.journal_path.string());
  apply(s, record);
}

void AnnotationService::apply(Session& s, const json& r) {
  const std::string type = r.at("type").get<std::string>();
  s.updated = r.value("time", s.updated);
  if (type == "create") {
    s.targets = r.at("targets").get<std::vector<std::string>>();
    s.al = al_config_from_json(r.at("al"));
    s.state = std::make_unique<SelectionState>(seed_, pool_, s.al);
    s.created = s.updated;
    s.status = SessionStatus::selecting;
  } else if (type == "batch") {
    s.batch = Batch{};
    for (const auto& rec : r.at("records")) {
      AuditRecord a = audit_record_from_json(rec.dump());
      s.batch.ids.push_back(a.id);
      s.batch.records.push_back(std::move(a));
    }
    s.batch.warnings = r.value("warnings", std::vector<std::string>{});
    s.annotations.clear();
    s.status = s.batch.ids.empty() ? SessionStatus::retraining : SessionStatus::awaiting_annotation;
  } else if (type == "annotation") {
    AnnotationRecord a = annotation_record_from_json(r.at("record"));
    s.annotations[a.id] = a;
    if (s.missing().empty()) s.status = SessionStatus::retraining;
  } else if (type == "advance") {
    std::unordered_map<std::string, Utterance> revealed;
    for (const auto& [id, a] : s.annotations) revealed.emplace(id, to_utterance(a, pool_[pool_index_.at(id)]));
    s.state->advance(s.batch, revealed);
    s.annotations.clear();
    s.batch = Batch{};
    s.status = s.state->iteration() >= s.al.iterations ? SessionStatus::done : SessionStatus::selecting;
  } else {
    throw Error("unknown journal record type " + type);
  }
  s.journal.push_back(r);
}

void AnnotationService::select_next(Session& s) {
  const int it = s.state->iteration() + 1;
  const std::uint64_t round_seed = derive_seed(s.al.seed, static_cast<std::uint64_t>(it));
  std::vector<Batch> per_target;
  for (const auto& t : s.targets) {
    Committee c = train_selection_models(*s.state, t, s.al, derive_seed(round_seed, t));
    per_target.push_back(select_batch(*s.state, c, s.al, t));
  }
  Batch b = dedupe_multi_target(per_target);
  json records = json::array();
  for (const auto& a : b.records) records.push_back(json::parse(audit_record_to_json(a)));
  append(s, {{"type", "batch"}, {"iteration", it}, {"records", records}, {"warnings", b.warnings}, {"time", now()}});
}

void AnnotationService::replay(const std::filesystem::path& path) {
  auto s = std::make_shared<Session>();
  s->id = path.stem().string();
  s->journal_path = path;
  std::ifstream in(path);
  std::string line;
  std::vector<json> records;
  bool torn = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records.push_back(json::parse(line));
    } catch (const json::exception&) {
      torn = true;
      break;
    }
  }
  in.close();
  if (torn) {
    // Drop a line torn by a crash mid-write so later appends stay readable.
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    for (const auto& r : records) out << r.dump() << '\n';
  }
  if (records.empty()) return;
  for (const auto& r : records) apply(*s, r);
  // An advance without its following batch: redo the selection.
  if (s->status == SessionStatus::selecting) select_next(*s);
  std::unique_lock lock(sessions_mu_);
  sessions_[s->id] = s;
  if (s->id.size() > 1 && s->id[0] == 's') {
    try {
      next_id_ = std::max(next_id_, static_cast<std::size_t>(std::stoull(s->id.substr(1))) + 1);
    } catch (const std::exception&) {
    }
  }
}

json AnnotationService::view(const Session& s) const {
  ordered_json j;
  j["id"] = s.id;
  j["status"] = to_string(s.status);
  j["iteration"] = s.iteration();
  j["iterations"] = s.al.iterations;
  j["targets"] = s.targets;
  j["algorithm"] = s.al.name;
  j["batch_size"] = s.al.batch_size;
  j["batch_items"] = s.batch.ids.size();
  j["annotated_in_batch"] = s.annotations.size();
  j["annotated_total"] = s.state->annotated().size();
  j["pool_remaining"] = s.state->pool().size();
  j["created"] = s.created;
  j["updated"] = s.updated;
  return j;
}

ApiResponse AnnotationService::create_session(const json& body) {
  if (!body.is_object()) return error(422, "invalid_config", "body must be a JSON object");
  json details = json::array();
  std::vector<std::string> targets;
  AlConfig al;
  try {
    targets = body.at("targets").get<std::vector<std::string>>();
  } catch (const json::exception&) {
    details.push_back({{"field", "targets"}, {"message", "targets must be a list of domain names"}});
  }
  try {
    al = al_config_from_json(body.value("al", json::object()));
    if (al.spec().random) details.push_back({{"field", "al.name"}, {"message", "random baselines are not interactive"}});
  } catch (const std::exception& e) {
    details.push_back({{"field", "al"}, {"message", e.what()}});
  }
  if (targets.empty() && details.empty()) {
    details.push_back({{"field", "targets"}, {"message", "at least one target domain required"}});
  }
  for (const auto& t : targets) {
    bool found = false;
    for (const auto& u : seed_) found = found || u.domain == t;
    if (!found) details.push_back({{"field", "targets"}, {"message", "no seed data for domain " + t}});
  }
  if (!details.empty()) return error(422, "invalid_config", "invalid session config", details);

  auto s = std::make_shared<Session>();
  std::lock_guard guard(s->mu);
  {
    std::unique_lock lock(sessions_mu_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06zu", next_id_++);
    s->id = buf;
    s->journal_path = options_.data_dir / "sessions" / (s->id + ".jsonl");
    sessions_[s->id] = s;
  }
  try {
    append(*s, {{"type", "create"}, {"targets", targets}, {"al", to_json(al)}, {"time", now()}});
    select_next(*s);
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
  return {201, view(*s)};
}

ApiResponse AnnotationService::get_session(const std::string& id) {
  auto s = find(id);
  if (!s) return not_found(id);
  std::lock_guard guard(s->mu);
  return {200, view(*s)};
}

ApiResponse AnnotationService::get_batch(const std::string& id) {
  auto s = find(id);
  if (!s) return not_found(id);
  std::lock_guard guard(s->mu);
  if (s->status != SessionStatus::awaiting_annotation) {
    return error(409, "conflict", "session is " + to_string(s->status) + ", not awaiting_annotation");
  }
  ordered_json items = ordered_json::array();
  for (const auto& rec : s->batch.records) {
    if (s->annotations.count(rec.id)) continue;
    const PoolCandidate& c = pool_[pool_index_.at(rec.id)];
    ordered_json item;
    item["id"] = c.id;
    item["text"] = c.text;
    item["tokens"] = c.tokens;
    item["target"] = rec.target;
    item["rank"] = rec.rank;
    item["scores"] = ordered_json::parse(audit_record_to_json(rec));
    items.push_back(std::move(item));
  }
  ordered_json j;
  j["session"] = s->id;
  j["iteration"] = s->iteration();
  j["total"] = s->batch.ids.size();
  j["annotated"] = s->annotations.size();
  j["completion"] = s->batch.ids.empty() ? 1.0
                                         : static_cast<double>(s->annotations.size()) /
                                               static_cast<double>(s->batch.ids.size());
  j["items"] = std::move(items);
  return {200, j};
}

ApiResponse AnnotationService::submit_annotations(const std::string& id, const json& body) {
  auto s = find(id);
  if (!s) return not_found(id);
  std::lock_guard guard(s->mu);
  if (s->status != SessionStatus::awaiting_annotation && s->status != SessionStatus::retraining) {
    return error(409, "conflict", "session is " + to_string(s->status));
  }
  const json& list = body.is_object() ? body.value("records", json()) : body;
  if (!list.is_array()) return error(422, "invalid_annotation", "expected a records array");

  std::vector<AnnotationRecord> records;
  json details = json::array();
  json duplicates = json::array();
  const std::set<std::string> in_batch(s->batch.ids.begin(), s->batch.ids.end());
  std::set<std::string> seen;
  for (const auto& rj : list) {
    AnnotationRecord r;
    try {
      r = annotation_record_from_json(rj);
    } catch (const std::exception& e) {
      details.push_back({{"message", e.what()}});
      continue;
    }
    if (!in_batch.count(r.id)) {
      details.push_back({{"id", r.id}, {"field", "id"}, {"message", "id not in the current batch"}});
      continue;
    }
    json v = validate_record(r, pool_[pool_index_.at(r.id)]);
    if (!v.empty()) {
      details.insert(details.end(), v.begin(), v.end());
      continue;
    }
    const bool exists = s->annotations.count(r.id) != 0;
    if (!seen.insert(r.id).second || (exists && !r.supersedes)) {
      duplicates.push_back(r.id);
    } else if (r.supersedes && !exists) {
      details.push_back({{"id", r.id}, {"field", "supersedes"}, {"message", "no earlier record to supersede"}});
    }
    records.push_back(std::move(r));
  }
  if (!details.empty()) return error(422, "invalid_annotation", "annotation rejected", details);
  if (!duplicates.empty()) {
    return error(409, "duplicate_annotation", "ids already annotated; first write wins", duplicates);
  }
  for (auto& r : records) {
    r.timestamp = now();
    append(*s, {{"type", "annotation"}, {"record", to_json(r)}, {"time", r.timestamp}});
  }
  ordered_json j;
  j["accepted"] = records.size();
  j["status"] = to_string(s->status);
  j["remaining"] = s->missing().size();
  return {200, j};
}

ApiResponse AnnotationService::advance_session(const std::string& id, const json& body) {
  auto s = find(id);
  if (!s) return not_found(id);
  std::lock_guard guard(s->mu);
  int token = s->iteration();
  if (body.is_object() && body.contains("iteration")) {
    if (!body["iteration"].is_number_integer()) return error(422, "invalid_request", "iteration must be an integer");
    token = body["iteration"].get<int>();
  }
  // Replays of an already applied advance are no-ops.
  if (s->status == SessionStatus::done || token < s->iteration()) return {200, view(*s)};
  if (token > s->iteration()) {
    return error(409, "conflict", "iteration token " + std::to_string(token) + " is ahead of the session");
  }
  if (s->status != SessionStatus::retraining) {
    return error(409, "batch_incomplete", "batch has unannotated utterances", s->missing());
  }
  try {
    append(*s, {{"type", "advance"}, {"iteration", token}, {"time", now()}});
    if (s->status == SessionStatus::selecting) select_next(*s);
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
  return {200, view(*s)};
}

json metrics_from_journal(const std::vector<json>& records) {
  std::vector<std::string> targets;
  std::map<int, std::vector<std::string>> batches;
  std::map<std::string, int> iteration_of;
  std::map<std::string, json> effective;
  std::vector<std::string> times;
  for (const auto& r : records) {
    const std::string type = r.value("type", "");
    if (type == "create") {
      targets = r.value("targets", std::vector<std::string>{});
    } else if (type == "batch") {
      const int it = r.value("iteration", 0);
      for (const auto& rec : r.at("records")) {
        const std::string id = rec.at("id").get<std::string>();
        batches[it].push_back(id);
        iteration_of[id] = it;
      }
    } else if (type == "annotation") {
      const json& a = r.at("record");
      const std::string id = a.at("id").get<std::string>();
      if (!effective.count(id) || a.value("supersedes", false)) effective[id] = a;
      times.push_back(r.value("time", ""));
    }
  }
  ordered_json out;
  out["empty"] = effective.empty();
  out["annotations"] = times.size();
  double span = times.size() > 1 ? seconds_between(times.front(), times.back()) : 0.0;
  out["throughput_per_minute"] = span > 0 ? 60.0 * static_cast<double>(times.size()) / span : 0.0;
  ordered_json its = ordered_json::array();
  std::size_t all = 0, all_target = 0, all_noise = 0;
  for (const auto& [it, ids] : batches) {
    std::size_t n = 0, target = 0, noise = 0;
    for (const auto& id : ids) {
      auto e = effective.find(id);
      if (e == effective.end()) continue;
      ++n;
      const std::string flag = e->second.value("flag", "ok");
      if (flag != "ok") ++noise;
      else if (std::find(targets.begin(), targets.end(), e->second.value("domain", "")) != targets.end()) ++target;
    }
    all += n;
    all_target += target;
    all_noise += noise;
    ordered_json row;
    row["iteration"] = it;
    row["batch_size"] = ids.size();
    row["annotated"] = n;
    row["in_target_fraction"] = n ? static_cast<double>(target) / static_cast<double>(n) : 0.0;
    row["noise_fraction"] = n ? static_cast<double>(noise) / static_cast<double>(n) : 0.0;
    its.push_back(std::move(row));
  }
  out["in_target_fraction"] = all ? static_cast<double>(all_target) / static_cast<double>(all) : 0.0;
  out["noise_fraction"] = all ? static_cast<double>(all_noise) / static_cast<double>(all) : 0.0;
  out["iterations"] = std::move(its);
  return out;
}

ApiResponse AnnotationService::session_metrics(const std::string& id) {
  auto s = find(id);
  if (!s) return not_found(id);
  std::lock_guard guard(s->mu);
  json m = metrics_from_journal(s->journal);
  m["session"] = s->id;
  return {200, m};
}

std::optional<std::string> AnnotationService::snapshot(const std::string& id) {
  auto s = find(id);
  if (!s) return std::nullopt;
  std::lock_guard guard(s->mu);
  json j = view(*s);
  j["annotated_ids"] = json::array();
  for (const auto& u : s->state->annotated()) j["annotated_ids"].push_back(u.id);
  j["pool_ids"] = json::array();
  for (const auto& e : s->state->pool()) j["pool_ids"].push_back(e.candidate.id);
  j["batch"] = json::array();
  for (const auto& r : s->batch.records) j["batch"].push_back(json::parse(audit_record_to_json(r)));
  j["annotations"] = json::array();
  for (const auto& [aid, a] : s->annotations) j["annotations"].push_back(to_json(a));
  j["audit"] = json::array();
  for (const auto& r : s->state->audit()) j["audit"].push_back(json::parse(audit_record_to_json(r)));
  return j.dump();
}

namespace {

void reply(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    reply(res, error(400, "bad_request", std::string("invalid JSON body: ") + e.what()));
    return std::nullopt;
  }
}

}  // namespace

void AnnotationService::bind(httplib::Server& server) {
  server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    if (auto body = parse_body(req, res)) reply(res, create_session(*body));
  });
  server.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    reply(res, get_session(req.matches[1]));
  });
  server.Get(R"(/sessions/([^/]+)/batch)", [this](const httplib::Request& req, httplib::Response& res) {
    reply(res, get_batch(req.matches[1]));
  });
  server.Post(R"(/sessions/([^/]+)/annotations)", [this](const httplib::Request& req, httplib::Response& res) {
    if (auto body = parse_body(req, res)) reply(res, submit_annotations(req.matches[1], *body));
  });
  server.Post(R"(/sessions/([^/]+)/advance)", [this](const httplib::Request& req, httplib::Response& res) {
    if (auto body = parse_body(req, res)) reply(res, advance_session(req.matches[1], *body));
  });
  server.Get(R"(/sessions/([^/]+)/metrics)", [this](const httplib::Request& req, httplib::Response& res) {
    reply(res, session_metrics(req.matches[1]));
  });
  if (options_.ui_dir && std::filesystem::is_directory(*options_.ui_dir)) {
    server.set_mount_point("/ui", options_.ui_dir->string());
  } else {
    server.Get("/ui(/.*)?", [](const httplib::Request&, httplib::Response& res) {
      reply(res, error(404, "not_found", "annotation UI bundle is not installed"));
    });
  }
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unknown error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    reply(res, error(500, "internal", what));
  });
}

void run_service(AnnotationService& service, const std::string& host, int port) {
  httplib::Server server;
  service.bind(server);
  if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace nlual
