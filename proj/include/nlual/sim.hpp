#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nlual/al.hpp"
#include "nlual/corpus.hpp"
#include "nlual/nlu.hpp"
#include "nlual/stats.hpp"

namespace nlual {

struct ExperimentConfig {
  /// Exactly one corpus source: a JSONL file or a synthetic spec.
  std::optional<std::filesystem::path> corpus_path;
  std::optional<SynthSpec> synth;
  /// Optional grammar-generated seed data appended to the initial training set.
  std::optional<SynthSpec> seed_grammar;
  /// Fraction of each target domain's live training utterances kept (new
  /// domains start with little live data).
  double target_train_keep = 1.0;
  SplitSpec split;
  std::vector<std::string> targets;
  std::vector<std::string> algorithms;
  std::size_t budget_per_target = 600;
  int iterations = 6;
  int repeats = 5;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  std::size_t bootstrap_resamples = 1000;
  AlConfig al;  // name/iterations/batch_size/seed are overridden per job
  NluConfig nlu;

  void validate() const;
  std::size_t batch_size() const { return budget_per_target / static_cast<std::size_t>(iterations); }
};

struct TargetResult {
  std::string target;
  double base_ser = 0.0;
  double ser = 0.0;        // mean over repeats
  double delta_ser = 0.0;  // % relative reduction vs the initial system
  double selected = 0.0;   // mean #utt of this domain selected
};

struct Significance {
  std::string baseline;
  double wilcoxon_p = 1.0;
  double bootstrap_p = 1.0;
  double delta_ser_pct = 0.0;  // relative SER reduction vs the baseline, target test utterances
};

struct AlgorithmResult {
  std::string name;
  std::vector<TargetResult> targets;
  double overall_selected = 0.0;     // mean #utt selected, noise removed
  double non_target_selected = 0.0;  // mean #utt from non-target domains
  double noise_selected = 0.0;       // mean #utt of noise source
  double total_selected = 0.0;
  double mean_target_delta_ser = 0.0;
  double overall_ser = 0.0;
  std::vector<Significance> significance;
  std::vector<std::size_t> selected_per_repeat;

  double noise_fraction() const { return total_selected > 0 ? noise_selected / total_selected : 0.0; }
};

struct ExperimentReport {
  std::vector<std::string> targets;
  std::map<std::string, double> base_ser;  // per target, initial system
  double base_overall_ser = 0.0;
  std::size_t budget_per_target = 0;
  int iterations = 0;
  int repeats = 0;
  std::uint64_t seed = 0;
  std::size_t pool_size = 0;
  std::size_t pool_noise = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::vector<AlgorithmResult> algorithms;

  const AlgorithmResult* find(std::string_view name) const;
};

/// Everything shared by the jobs of one experiment: the split, the oracle,
/// the initial system and its baseline scores.
struct ExperimentData {
  Corpus train;  // initial training data (live + grammar + noise)
  Corpus pool_truth;
  Corpus test;   // noise removed
  std::vector<PoolCandidate> pool;
  std::unordered_map<std::string, Utterance> oracle;
};

ExperimentData prepare_experiment(const ExperimentConfig& config);

/// Controls for one selection job. stop_after_iteration simulates a crash
/// after the given iteration's checkpoint has been written.
struct JobControl {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<int> stop_after_iteration;
};

struct JobOutcome {
  std::vector<AuditRecord> audit;
  bool complete = false;
};

class SimulationInterrupted : public Error {
 public:
  using Error::Error;
};

/// Runs the select/reveal/advance loop of one algorithm and repeat, resuming
/// from the checkpoint file when it exists.
JobOutcome run_selection_job(const ExperimentConfig& config, const ExperimentData& data,
                             const std::unordered_map<std::string, std::string>& initial_top_domain,
                             const std::string& algorithm, int repeat, const JobControl& control = {});

ExperimentReport run_simulation(const ExperimentConfig& config);

std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(std::string_view text);

struct RenderedReport {
  std::string table;
  std::string json;
  std::string csv;
};

RenderedReport render_report(const ExperimentReport& report);

}  // namespace nlual
