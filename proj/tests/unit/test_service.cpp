#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "httplib.h"
#include "nlual/config.hpp"
#include "nlual/service.hpp"
#include "nlual/sim.hpp"

using namespace nlual;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const ExperimentData& data() {
  static const ExperimentData d =
      prepare_experiment(load_experiment_config(fs::path(NLUAL_SOURCE_DIR) / "tests/data/small_experiment.json"));
  return d;
}

// Deterministic clock: one second per call.
std::function<std::string()> ticking_clock() {
  auto n = std::make_shared<int>(0);
  return [n] {
    const int t = (*n)++;
    char buf[40];
    std::snprintf(buf, sizeof buf, "2024-01-01T%02d:%02d:%02d.000Z", t / 3600 % 24, t / 60 % 60, t % 60);
    return std::string(buf);
  };
}

struct Fixture {
  fs::path dir;
  std::unique_ptr<AnnotationService> svc;

  explicit Fixture(const std::string& name) : dir(fs::temp_directory_path() / name) {
    fs::remove_all(dir);
    reopen();
  }
  ~Fixture() { fs::remove_all(dir); }

  void reopen() {
    svc.reset();
    svc = std::make_unique<AnnotationService>(data().train, data().pool, ServiceOptions{dir, std::nullopt, ticking_clock()});
  }
};

json session_body(int iterations = 2, std::size_t batch = 10, std::uint64_t seed = 7) {
  return {{"targets", {"Books", "Cinema"}},
          {"al",
           {{"name", "Majority-CRF"},
            {"iterations", iterations},
            {"batch_size", batch},
            {"seed", seed},
            {"features", {{"ngram_orders", {1, 2}}, {"hash_bits", 14}}},
            {"crf_features", {{"ngram_orders", {1}}, {"hash_bits", 12}}}}}};
}

json truth(const std::string& id) {
  const Utterance& u = data().oracle.at(id);
  if (u.domain == kOutOfDomain) return {{"id", id}, {"flag", "out_of_domain"}, {"annotator", "t"}};
  return {{"id", id}, {"domain", u.domain}, {"intent", u.intent}, {"bio_tags", u.bio_tags}, {"annotator", "t"}};
}

std::vector<std::string> batch_ids(AnnotationService& s, const std::string& id) {
  std::vector<std::string> out;
  const json body = s.get_batch(id).body;
  for (const auto& item : body.at("items")) out.push_back(item.at("id"));
  return out;
}

void annotate_all(AnnotationService& s, const std::string& id) {
  json records = json::array();
  for (const auto& b : batch_ids(s, id)) records.push_back(truth(b));
  REQUIRE(s.submit_annotations(id, {{"records", records}}).status == 200);
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("session creation and config errors") {
    Fixture f("nlual_svc_create");
    auto r = f.svc->create_session(session_body());
    REQUIRE(r.status == 201);
    CHECK(r.body["status"] == "awaiting_annotation");
    CHECK(r.body["iteration"] == 1);
    CHECK(r.body["batch_items"].get<int>() > 0);
    CHECK(r.body["batch_items"].get<int>() <= 20);

    json bad = session_body(0);
    CHECK(f.svc->create_session(bad).status == 422);
    bad = session_body();
    bad["targets"] = {"Atlantis"};
    CHECK(f.svc->create_session(bad).status == 422);
    bad = session_body();
    bad["al"]["name"] = "Rand-Uniform";
    CHECK(f.svc->create_session(bad).status == 422);
    CHECK(f.svc->create_session(json::array()).status == 422);
    CHECK(f.svc->get_session("s999999").status == 404);

    // Same seed, same batch.
    auto r2 = f.svc->create_session(session_body());
    CHECK(batch_ids(*f.svc, r.body["id"]) == batch_ids(*f.svc, r2.body["id"]));
  }

  TEST_CASE("annotation validation, duplicates and flags") {
    Fixture f("nlual_svc_annot");
    const std::string sid = f.svc->create_session(session_body()).body["id"];
    auto ids = batch_ids(*f.svc, sid);
    REQUIRE(ids.size() >= 8);
    const std::size_t total = ids.size();

    json five = json::array();
    for (int i = 0; i < 5; ++i) five.push_back(truth(ids[i]));
    auto ok = f.svc->submit_annotations(sid, {{"records", five}});
    CHECK(ok.status == 200);
    CHECK(ok.body["remaining"] == total - 5);
    auto b = f.svc->get_batch(sid).body;
    CHECK(b["annotated"] == 5);
    CHECK(b["items"].size() == total - 5);

    auto dup = f.svc->submit_annotations(sid, json::array({truth(ids[0])}));
    CHECK(dup.status == 409);
    CHECK(dup.body["code"] == "duplicate_annotation");

    json fix = truth(ids[0]);
    fix["supersedes"] = true;
    CHECK(f.svc->submit_annotations(sid, json::array({fix})).status == 200);

    json unknown = truth(ids[5]);
    unknown["id"] = "nope";
    CHECK(f.svc->submit_annotations(sid, json::array({unknown})).status == 422);

    json bad_bio = truth(ids[5]);
    if (bad_bio.contains("bio_tags") && !bad_bio["bio_tags"].empty()) {
      bad_bio["bio_tags"][0] = "I-Title";
      auto r = f.svc->submit_annotations(sid, json::array({bad_bio}));
      CHECK(r.status == 422);
      CHECK(r.body["code"] == "invalid_annotation");
    }
    json short_bio = {{"id", ids[5]}, {"domain", "Books"}, {"intent", "ReadBook"}, {"bio_tags", json::array()}};
    CHECK(f.svc->submit_annotations(sid, json::array({short_bio})).status == 422);

    // Flagged records need no labels.
    CHECK(f.svc->submit_annotations(sid, json::array({{{"id", ids[5]}, {"flag", "unactionable"}}})).status == 200);
    CHECK(f.svc->submit_annotations(sid, json::array({{{"id", ids[6]}, {"flag", "bogus"}}})).status == 422);
  }

  TEST_CASE("advance lifecycle") {
    Fixture f("nlual_svc_adv");
    const std::string sid = f.svc->create_session(session_body(2)).body["id"];
    auto ids = batch_ids(*f.svc, sid);
    f.svc->submit_annotations(sid, json::array({truth(ids[0])}));

    auto early = f.svc->advance_session(sid, {{"iteration", 1}});
    CHECK(early.status == 409);
    CHECK(early.body["code"] == "batch_incomplete");
    CHECK(early.body["details"].size() == ids.size() - 1);

    json rest = json::array();
    for (std::size_t i = 1; i < ids.size(); ++i) rest.push_back(truth(ids[i]));
    CHECK(f.svc->submit_annotations(sid, rest).body["status"] == "retraining");
    CHECK(f.svc->advance_session(sid, {{"iteration", 5}}).status == 409);

    auto a1 = f.svc->advance_session(sid, {{"iteration", 1}});
    CHECK(a1.status == 200);
    CHECK(a1.body["iteration"] == 2);
    CHECK(a1.body["annotated_total"].get<std::size_t>() == data().train.size() + ids.size());
    // Replayed token is a no-op.
    auto again = f.svc->advance_session(sid, {{"iteration", 1}});
    CHECK(again.status == 200);
    CHECK(again.body["iteration"] == 2);

    std::set<std::string> first(ids.begin(), ids.end());
    for (const auto& id : batch_ids(*f.svc, sid)) CHECK_FALSE(first.count(id));

    annotate_all(*f.svc, sid);
    auto done = f.svc->advance_session(sid, {{"iteration", 2}});
    CHECK(done.body["status"] == "done");
    CHECK(f.svc->get_batch(sid).status == 409);
    CHECK(f.svc->advance_session(sid, json::object()).status == 200);
  }

  TEST_CASE("metrics") {
    Fixture f("nlual_svc_metrics");
    const std::string sid = f.svc->create_session(session_body()).body["id"];
    auto m0 = f.svc->session_metrics(sid).body;
    CHECK(m0["empty"] == true);
    CHECK(m0["annotations"] == 0);

    auto ids = batch_ids(*f.svc, sid);
    std::size_t target = 0, noise = 0;
    json recs = json::array();
    for (const auto& id : ids) {
      json r = truth(id);
      recs.push_back(r);
      if (r.contains("flag")) ++noise;
      else if (r["domain"] == "Books" || r["domain"] == "Cinema") ++target;
    }
    f.svc->submit_annotations(sid, recs);
    auto m = f.svc->session_metrics(sid).body;
    CHECK(m["empty"] == false);
    CHECK(m["in_target_fraction"].get<double>() == doctest::Approx(double(target) / ids.size()));
    CHECK(m["noise_fraction"].get<double>() == doctest::Approx(double(noise) / ids.size()));
    CHECK(m["throughput_per_minute"].get<double>() > 0);

    f.reopen();
    CHECK(f.svc->session_metrics(sid).body == m);
  }

  TEST_CASE("journal replay restores sessions exactly") {
    Fixture f("nlual_svc_replay");
    const std::string sid = f.svc->create_session(session_body(3)).body["id"];
    annotate_all(*f.svc, sid);
    f.svc->advance_session(sid, {{"iteration", 1}});
    auto ids = batch_ids(*f.svc, sid);
    f.svc->submit_annotations(sid, json::array({truth(ids[0]), truth(ids[1])}));
    const std::string before = *f.svc->snapshot(sid);

    f.reopen();
    REQUIRE(f.svc->snapshot(sid));
    CHECK(*f.svc->snapshot(sid) == before);

    // A torn trailing line is dropped and the session still loads.
    {
      std::ofstream out(f.dir / "sessions" / (sid + ".jsonl"), std::ios::app);
      out << "{\"type\": \"annot";
    }
    f.reopen();
    CHECK(*f.svc->snapshot(sid) == before);
    f.svc->submit_annotations(sid, json::array({truth(ids[2])}));
    f.reopen();
    CHECK(f.svc->get_session(sid).body["annotated_in_batch"] == 3);

    // New sessions do not reuse ids.
    CHECK(f.svc->create_session(session_body()).body["id"] != sid);
  }

  TEST_CASE("http routes") {
    Fixture f("nlual_svc_http");
    httplib::Server server;
    f.svc->bind(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client cli("127.0.0.1", port);

    auto ui = cli.Get("/ui/index.html");
    REQUIRE(ui);
    CHECK(ui->status == 404);
    CHECK(json::parse(ui->body)["code"] == "not_found");

    auto bad = cli.Post("/sessions", "{oops", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);

    auto created = cli.Post("/sessions", session_body(1).dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const std::string sid = json::parse(created->body)["id"];
    auto batch = cli.Get("/sessions/" + sid + "/batch");
    REQUIRE(batch);
    CHECK(batch->status == 200);
    CHECK(cli.Get("/sessions/" + sid + "/metrics")->status == 200);
    CHECK(cli.Get("/sessions/nope")->status == 404);
    server.stop();
    t.join();
  }
}
