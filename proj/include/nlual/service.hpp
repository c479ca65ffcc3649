#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlual/al.hpp"
#include "nlual/corpus.hpp"

namespace httplib {
class Server;
}

namespace nlual {

enum class SessionStatus { selecting, awaiting_annotation, retraining, done };
std::string to_string(SessionStatus s);

enum class AnnotationFlag { ok, unactionable, out_of_domain };
std::string to_string(AnnotationFlag f);
AnnotationFlag annotation_flag_from_string(std::string_view s);

struct AnnotationRecord {
  std::string id;
  std::string domain;
  std::string intent;
  std::vector<std::string> bio_tags;
  std::string annotator;
  std::string timestamp;
  AnnotationFlag flag = AnnotationFlag::ok;
  /// A correction of an earlier record for the same id.
  bool supersedes = false;
};

nlohmann::json to_json(const AnnotationRecord& r);
AnnotationRecord annotation_record_from_json(const nlohmann::json& j);

/// Status code plus a JSON body; errors carry {code, message, details[]}.
struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

struct ServiceOptions {
  std::filesystem::path data_dir;               // journals live in data_dir/sessions
  std::optional<std::filesystem::path> ui_dir;  // static annotation UI bundle
  /// Injectable clock for journal timestamps; defaults to UTC wall time.
  std::function<std::string()> clock;
};

/// Human-in-the-loop sessions over a registered seed corpus and candidate
/// pool. Every mutation is journaled before it is applied; constructing the
/// service replays existing journals.
class AnnotationService {
 public:
  AnnotationService(Corpus seed, std::vector<PoolCandidate> pool, ServiceOptions options);
  ~AnnotationService();

  ApiResponse create_session(const nlohmann::json& body);
  ApiResponse get_session(const std::string& id);
  ApiResponse get_batch(const std::string& id);
  ApiResponse submit_annotations(const std::string& id, const nlohmann::json& body);
  ApiResponse advance_session(const std::string& id, const nlohmann::json& body);
  ApiResponse session_metrics(const std::string& id);

  /// Serialized in-memory state of a session, for replay comparison.
  std::optional<std::string> snapshot(const std::string& id);
  std::vector<std::string> session_ids();

  void bind(httplib::Server& server);

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id);
  void replay(const std::filesystem::path& journal);
  void append(Session& s, nlohmann::json record);
  void apply(Session& s, const nlohmann::json& record);
  void select_next(Session& s);
  nlohmann::json view(const Session& s) const;
  std::string now() const;

  Corpus seed_;
  std::vector<PoolCandidate> pool_;
  std::unordered_map<std::string, std::size_t> pool_index_;
  ServiceOptions options_;
  std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t next_id_ = 1;
};

/// Metrics as a pure function of a session journal's records.
nlohmann::json metrics_from_journal(const std::vector<nlohmann::json>& records);

/// Blocking HTTP server; returns when the server stops.
void run_service(AnnotationService& service, const std::string& host, int port);

}  // namespace nlual
