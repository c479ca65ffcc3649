#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "nlual/config.hpp"
#include "nlual/sim.hpp"

using namespace nlual;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  return load_experiment_config(fs::path(NLUAL_SOURCE_DIR) / "tests/data/small_experiment.json");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

ExperimentReport sample_report() {
  ExperimentReport r;
  r.targets = {"Books", "Cinema"};
  r.base_ser = {{"Books", 0.123456789}, {"Cinema", 0.2}};
  r.base_overall_ser = 0.15;
  r.budget_per_target = 60;
  r.iterations = 3;
  r.repeats = 2;
  r.seed = 18446744073709551557ULL;
  r.pool_size = 100;
  r.pool_noise = 10;
  r.train_size = 50;
  r.test_size = 40;
  AlgorithmResult a;
  a.name = "Majority-CRF";
  a.targets = {{"Books", 0.123456789, 0.1, 18.99999, 40.5}, {"Cinema", 0.2, 0.15, 25.0, 33.0}};
  a.overall_selected = 118.5;
  a.non_target_selected = 45;
  a.noise_selected = 1.5;
  a.total_selected = 120;
  a.mean_target_delta_ser = 21.999995;
  a.overall_ser = 0.1 / 3;
  a.significance = {{"Rand-Uniform", 0.0123, 0.002, 7.5}};
  a.selected_per_repeat = {120, 120};
  r.algorithms.push_back(a);
  return r;
}

}  // namespace

TEST_SUITE("sim") {
  TEST_CASE("prepare_experiment") {
    ExperimentConfig c = small_config();
    ExperimentData d = prepare_experiment(c);
    for (const auto& u : d.test) CHECK(u.source != Source::noise);
    CHECK(d.pool.size() == d.pool_truth.size());
    CHECK(d.oracle.size() == d.pool.size());
    std::size_t grammar = 0;
    for (const auto& u : d.train) grammar += u.source == Source::grammar;
    CHECK(grammar == 90);
    for (const auto& p : d.pool) CHECK_FALSE(d.train.contains(p.id));
  }

  TEST_CASE("report JSON round-trip and rendering") {
    ExperimentReport r = sample_report();
    std::string text = report_to_json(r);
    ExperimentReport back = report_from_json(text);
    CHECK(report_to_json(back) == text);
    CHECK(back.algorithms[0].targets[0].delta_ser == r.algorithms[0].targets[0].delta_ser);
    CHECK(back.seed == r.seed);

    RenderedReport out = render_report(r);
    CHECK(out.json == text);
    std::istringstream csv(out.csv);
    std::string header, row;
    std::getline(csv, header);
    std::getline(csv, row);
    CHECK(header ==
          "Algorithm,Overall #Utt,Books #Utt,Books dSER%,Cinema #Utt,Cinema dSER%,Non-Target #Utt,Noise #Utt");
    CHECK(row == "Majority-CRF,118.5,40.5,19.00,33.0,25.00,45.0,1.5");
    CHECK(out.table.find("Noise #Utt") != std::string::npos);
    CHECK(out.table.find("Majority-CRF vs Rand-Uniform") != std::string::npos);

    CHECK_THROWS_AS(report_from_json("{}"), Error);
    CHECK_THROWS_AS(report_from_json("not json"), Error);
  }

  TEST_CASE("numbers survive JSON to 6 significant digits") {
    ExperimentReport r = sample_report();
    auto j = nlohmann::json::parse(render_report(r).json);
    double v = j["algorithms"][0]["targets"][0]["delta_ser"].get<double>();
    CHECK(std::abs(v - 18.99999) / 18.99999 < 1e-6);
  }

  TEST_CASE("empty algorithm list renders a header-only table") {
    ExperimentReport r = sample_report();
    r.algorithms.clear();
    RenderedReport out = render_report(r);
    std::istringstream table(out.table);
    std::string line;
    int lines = 0;
    while (std::getline(table, line)) ++lines;
    CHECK(lines == 2);  // header and rule
    CHECK(std::count(out.csv.begin(), out.csv.end(), '\n') == 1);
    CHECK(report_from_json(out.json).algorithms.empty());
  }

  TEST_CASE("checkpoint resume reproduces the uninterrupted job") {
    ExperimentConfig c = small_config();
    ExperimentData d = prepare_experiment(c);
    fs::path dir = fresh_dir("nlual_ckpt_test");
    JobOutcome straight = run_selection_job(c, d, {}, "Majority-CRF", 1);
    CHECK(straight.complete);

    JobControl ctl;
    ctl.checkpoint = dir / "job.json";
    ctl.stop_after_iteration = 2;
    CHECK_THROWS_AS(run_selection_job(c, d, {}, "Majority-CRF", 1, ctl), SimulationInterrupted);
    CHECK(fs::exists(*ctl.checkpoint));
    ctl.stop_after_iteration.reset();
    JobOutcome resumed = run_selection_job(c, d, {}, "Majority-CRF", 1, ctl);
    CHECK(resumed.audit == straight.audit);

    // A checkpoint of another job is refused.
    CHECK_THROWS_AS(run_selection_job(c, d, {}, "Majority-AS", 1, ctl), Error);
    fs::remove_all(dir);
  }

  TEST_CASE("selection budget, disjointness and the uniform baseline") {
    ExperimentConfig c = small_config();
    ExperimentData d = prepare_experiment(c);
    const std::size_t budget = c.budget_per_target * c.targets.size();

    std::set<std::string> target_set(c.targets.begin(), c.targets.end());
    double p = 0;
    for (const auto& u : d.pool_truth) p += target_set.count(u.domain);
    p /= static_cast<double>(d.pool_truth.size());

    for (int rep = 0; rep < 5; ++rep) {
      JobOutcome u = run_selection_job(c, d, {}, "Rand-Uniform", rep);
      CHECK(u.audit.size() == budget);
      std::size_t hits = 0;
      for (const auto& r : u.audit) hits += target_set.count(d.oracle.at(r.id).domain);
      // 99% two-sided normal interval around the binomial mean.
      const double mu = budget * p, sd = std::sqrt(budget * p * (1 - p));
      CHECK(std::abs(static_cast<double>(hits) - mu) <= 2.576 * sd + 0.5);
    }

    JobOutcome al = run_selection_job(c, d, {}, "Majority-AS", 0);
    std::set<std::string> ids;
    for (const auto& r : al.audit) CHECK(ids.insert(r.id).second);
    CHECK(al.audit.size() <= budget);
    for (const auto& r : al.audit) {
      CHECK(r.iteration >= 1);
      CHECK(r.iteration <= c.iterations);
    }
  }

  TEST_CASE("simulation output is byte-identical across runs") {
    ExperimentConfig c = small_config();
    c.algorithms = {"Rand-Uniform", "Rand-Domain", "Majority-CRF"};
    fs::path a = fresh_dir("nlual_sim_a"), b = fresh_dir("nlual_sim_b");
    c.output_dir = a;
    ExperimentReport ra = run_simulation(c);
    c.output_dir = b;
    ExperimentReport rb = run_simulation(c);
    CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
    CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
    for (const auto& e : fs::directory_iterator(a / "audit")) {
      CHECK(slurp(e.path()) == slurp(b / "audit" / e.path().filename()));
    }
    CHECK(fs::exists(a / "timing.json"));
    CHECK(report_to_json(ra) == slurp(a / "report.json"));

    const AlgorithmResult* crf = ra.find("Majority-CRF");
    REQUIRE(crf);
    CHECK(crf->significance.size() == 2);
    for (const auto& s : crf->significance) {
      CHECK(s.bootstrap_p >= 0.0);
      CHECK(s.bootstrap_p <= 1.0);
    }
    CHECK(ra.find("Rand-Uniform")->significance.size() == 1);
    fs::remove_all(a);
    fs::remove_all(b);
  }
}
