#include "nlual/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "nlual/common.hpp"

namespace nlual {

using nlohmann::json;
using nlohmann::ordered_json;

void ExperimentConfig::validate() const {
  if (corpus_path.has_value() == synth.has_value()) {
    throw ConfigError("exactly one of corpus_path and synth must be given");
  }
  if (targets.empty()) throw ConfigError("targets must not be empty");
  std::set<std::string> seen;
  for (const auto& t : targets) {
    if (t.empty() || t == kOutOfDomain) throw ConfigError("invalid target domain '" + t + "'");
    if (!seen.insert(t).second) throw ConfigError("duplicate target " + t);
  }
  for (const auto& a : algorithms) algorithm_spec(a);
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (budget_per_target == 0) throw ConfigError("budget_per_target must be positive");
  if (budget_per_target % static_cast<std::size_t>(iterations) != 0) {
    throw ConfigError("budget_per_target must be divisible by iterations");
  }
  if (!(target_train_keep > 0.0 && target_train_keep <= 1.0)) {
    throw ConfigError("target_train_keep must be in (0, 1]");
  }
  if (bootstrap_resamples == 0) throw ConfigError("bootstrap_resamples must be positive");
  split.validate();
  if (synth) synth->validate();
  if (seed_grammar) seed_grammar->validate();
}

const AlgorithmResult* ExperimentReport::find(std::string_view name) const {
  for (const auto& a : algorithms) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

namespace {

bool is_target(const ExperimentConfig& c, const std::string& domain) {
  return std::find(c.targets.begin(), c.targets.end(), domain) != c.targets.end();
}

// Keeps round(keep * n) live training utterances of each target, chosen by a
// seeded hash order; everything else passes through in input order.
Corpus thin_targets(const Corpus& train, const ExperimentConfig& c) {
  if (c.target_train_keep >= 1.0) return train;
  const std::uint64_t salt = splitmix64(derive_seed(c.seed, "keep"));
  std::set<std::string> dropped;
  for (const auto& t : c.targets) {
    std::vector<std::pair<std::uint64_t, std::string>> keyed;
    for (const auto& u : train) {
      if (u.domain == t && u.source == Source::live) keyed.emplace_back(splitmix64(fnv1a64(u.id) ^ salt), u.id);
    }
    std::sort(keyed.begin(), keyed.end());
    const auto keep = static_cast<std::size_t>(std::llround(c.target_train_keep * static_cast<double>(keyed.size())));
    for (std::size_t i = keep; i < keyed.size(); ++i) dropped.insert(keyed[i].second);
  }
  Corpus out;
  for (const auto& u : train) {
    if (!dropped.count(u.id)) out.add(u);
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string checkpoint_json(const std::string& algorithm, int repeat, int iteration,
                            const std::vector<AuditRecord>& audit) {
  ordered_json j;
  j["algorithm"] = algorithm;
  j["repeat"] = repeat;
  j["iteration"] = iteration;
  j["audit"] = ordered_json::array();
  for (const auto& r : audit) j["audit"].push_back(ordered_json::parse(audit_record_to_json(r)));
  return j.dump();
}

AlConfig job_al_config(const ExperimentConfig& c, const std::string& algorithm, int repeat) {
  AlConfig al = c.al;
  al.name = algorithm;
  al.iterations = c.iterations;
  al.batch_size = c.batch_size();
  al.seed = derive_seed(c.seed, algorithm + "/r" + std::to_string(repeat));
  al.validate();
  return al;
}

std::unordered_map<std::string, Utterance> reveal(const ExperimentData& data, const Batch& b) {
  std::unordered_map<std::string, Utterance> out;
  for (const auto& id : b.ids) out.emplace(id, data.oracle.at(id));
  return out;
}

std::string audit_jsonl(const std::vector<AuditRecord>& audit) {
  std::string s;
  for (const auto& r : audit) s += audit_record_to_json(r) + "\n";
  return s;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double safe_reduction(double base, double now) { return base > 0.0 ? relative_reduction(base, now) : 0.0; }

}  // namespace

ExperimentData prepare_experiment(const ExperimentConfig& config) {
  config.validate();
  Corpus corpus = config.corpus_path ? load_corpus(*config.corpus_path) : synth_generate(*config.synth);
  for (const auto& t : config.targets) {
    bool found = false;
    for (const auto& u : corpus) found = found || u.domain == t;
    if (!found) throw ConfigError("target domain " + t + " has no utterances in the corpus");
  }
  CorpusSplit split = split_corpus(corpus, config.split);

  ExperimentData data;
  data.train = thin_targets(split.train, config);
  if (config.seed_grammar) {
    for (const auto& u : synth_generate(*config.seed_grammar)) {
      if (data.train.contains(u.id) || corpus.contains(u.id)) throw ConfigError("seed grammar id collides: " + u.id);
      data.train.add(u);
    }
  }
  for (const auto& u : split.test) {
    if (u.source != Source::noise) data.test.add(u);
  }
  data.pool_truth = split.pool;
  data.pool = hide_annotations(split.pool);
  for (const auto& u : split.pool) data.oracle.emplace(u.id, u);
  return data;
}

JobOutcome run_selection_job(const ExperimentConfig& config, const ExperimentData& data,
                             const std::unordered_map<std::string, std::string>& initial_top_domain,
                             const std::string& algorithm, int repeat, const JobControl& control) {
  const AlConfig al = job_al_config(config, algorithm, repeat);
  const AlgorithmSpec& spec = al.spec();
  SelectionState state(data.train, data.pool, al);

  // One-shot baselines draw the whole budget in a single round.
  const int rounds = spec.random ? 1 : al.iterations;

  if (control.checkpoint && std::filesystem::exists(*control.checkpoint)) {
    json cp;
    try {
      cp = json::parse(read_file(*control.checkpoint));
    } catch (const json::exception& e) {
      throw Error("corrupt checkpoint " + control.checkpoint->string() + ": " + e.what());
    }
    if (cp.at("algorithm").get<std::string>() != algorithm || cp.at("repeat").get<int>() != repeat) {
      throw Error("checkpoint " + control.checkpoint->string() + " belongs to another job");
    }
    const int done = cp.at("iteration").get<int>();
    std::vector<Batch> batches(static_cast<std::size_t>(done));
    for (const auto& rj : cp.at("audit")) {
      AuditRecord r = audit_record_from_json(rj.dump());
      if (r.iteration < 1 || r.iteration > done) throw Error("checkpoint audit record outside iteration range");
      auto& b = batches[static_cast<std::size_t>(r.iteration - 1)];
      b.ids.push_back(r.id);
      b.records.push_back(std::move(r));
    }
    for (const auto& b : batches) state.advance(b, reveal(data, b));
  }

  while (state.iteration() < rounds) {
    const int it = state.iteration() + 1;
    const std::uint64_t round_seed = derive_seed(al.seed, static_cast<std::uint64_t>(it));
    std::vector<Batch> per_target;
    if (spec.name == "Rand-Uniform") {
      const std::size_t n = std::min(config.budget_per_target * config.targets.size(), state.pool().size());
      per_target.push_back(random_uniform(state, n, round_seed));
    }
    for (const auto& target : config.targets) {
      if (spec.name == "Rand-Uniform") break;
      const std::uint64_t s = derive_seed(round_seed, target);
      if (spec.name == "Rand-Domain") {
        per_target.push_back(random_domain(state, target, config.budget_per_target, s, initial_top_domain));
      } else {
        Committee committee = train_selection_models(state, target, al, s);
        per_target.push_back(select_batch(state, committee, al, target));
      }
    }
    Batch batch = dedupe_multi_target(per_target);
    state.advance(batch, reveal(data, batch));
    if (control.checkpoint) {
      write_file(*control.checkpoint, checkpoint_json(algorithm, repeat, state.iteration(), state.audit()));
    }
    if (control.stop_after_iteration && *control.stop_after_iteration == state.iteration() &&
        state.iteration() < rounds) {
      throw SimulationInterrupted("interrupted after iteration " + std::to_string(state.iteration()));
    }
  }
  return {state.audit(), true};
}

ExperimentReport run_simulation(const ExperimentConfig& config) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  ExperimentData data = prepare_experiment(config);

  NluConfig nlu_cfg = config.nlu;
  nlu_cfg.seed = config.seed;
  const NluSystem initial = train_nlu(data.train, nlu_cfg);
  const SerReport base = evaluate_ser(initial, data.test);

  std::vector<std::string> top(data.pool.size());
  parallel_for(data.pool.size(), [&](std::size_t i) {
    auto hyps = interpret(initial, data.pool[i].tokens);
    if (!hyps.empty()) top[i] = hyps.front().domain;
  });
  std::unordered_map<std::string, std::string> top_domain;
  for (std::size_t i = 0; i < data.pool.size(); ++i) top_domain.emplace(data.pool[i].id, top[i]);

  ExperimentReport report;
  report.targets = config.targets;
  for (const auto& t : config.targets) {
    auto it = base.per_domain.find(t);
    report.base_ser[t] = it == base.per_domain.end() ? 0.0 : it->second.ser();
  }
  report.base_overall_ser = base.ser();
  report.budget_per_target = config.budget_per_target;
  report.iterations = config.iterations;
  report.repeats = config.repeats;
  report.seed = config.seed;
  report.pool_size = data.pool.size();
  for (const auto& u : data.pool_truth) report.pool_noise += u.source == Source::noise ? 1 : 0;
  report.train_size = data.train.size();
  report.test_size = data.test.size();

  const bool persist = !config.output_dir.empty();
  ordered_json timing;
  timing["jobs"] = ordered_json::object();

  // Target test utterances, in test order, for the paired tests.
  std::vector<std::size_t> target_rows;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    if (is_target(config, data.test[i].domain)) target_rows.push_back(i);
  }
  std::map<std::string, std::vector<double>> mean_errors;  // per algorithm, over target_rows
  std::vector<double> target_refs;
  for (auto i : target_rows) {
    target_refs.push_back(static_cast<double>(base.per_utterance[i].reference_slots));
  }

  for (const auto& algorithm : config.algorithms) {
    AlgorithmResult result;
    result.name = algorithm;
    std::map<std::string, std::vector<double>> ser_by_target, selected_by_target;
    std::vector<double> overall, non_target, noise, total, overall_ser;
    std::vector<double> err_sum(target_rows.size(), 0.0);

    for (int rep = 0; rep < config.repeats; ++rep) {
      const auto tj = clock::now();
      const std::string job = algorithm + "-r" + std::to_string(rep);
      JobControl control;
      if (persist) control.checkpoint = config.output_dir / "checkpoints" / (job + ".json");
      JobOutcome outcome = run_selection_job(config, data, top_domain, algorithm, rep, control);
      if (persist) write_file(config.output_dir / "audit" / (job + ".jsonl"), audit_jsonl(outcome.audit));

      Corpus train = data.train;
      std::size_t n_noise = 0, n_non_target = 0;
      std::map<std::string, std::size_t> n_target;
      for (const auto& r : outcome.audit) {
        const Utterance& u = data.oracle.at(r.id);
        train.add(u);
        if (u.source == Source::noise) ++n_noise;
        else if (is_target(config, u.domain)) ++n_target[u.domain];
        else ++n_non_target;
      }
      const NluSystem retrained = train_nlu(train, nlu_cfg);
      const SerReport ser = evaluate_ser(retrained, data.test);

      for (const auto& t : config.targets) {
        auto it = ser.per_domain.find(t);
        ser_by_target[t].push_back(it == ser.per_domain.end() ? 0.0 : it->second.ser());
        selected_by_target[t].push_back(static_cast<double>(n_target[t]));
      }
      const double n_total = static_cast<double>(outcome.audit.size());
      total.push_back(n_total);
      noise.push_back(static_cast<double>(n_noise));
      overall.push_back(n_total - static_cast<double>(n_noise));
      non_target.push_back(static_cast<double>(n_non_target));
      overall_ser.push_back(ser.ser());
      result.selected_per_repeat.push_back(outcome.audit.size());
      for (std::size_t k = 0; k < target_rows.size(); ++k) {
        err_sum[k] += static_cast<double>(ser.per_utterance[target_rows[k]].errors);
      }
      timing["jobs"][job] = std::chrono::duration<double>(clock::now() - tj).count();
    }

    double delta_sum = 0.0;
    for (const auto& t : config.targets) {
      TargetResult tr;
      tr.target = t;
      tr.base_ser = report.base_ser[t];
      tr.ser = mean(ser_by_target[t]);
      tr.delta_ser = safe_reduction(tr.base_ser, tr.ser);
      tr.selected = mean(selected_by_target[t]);
      delta_sum += tr.delta_ser;
      result.targets.push_back(tr);
    }
    result.mean_target_delta_ser = delta_sum / static_cast<double>(config.targets.size());
    result.overall_selected = mean(overall);
    result.non_target_selected = mean(non_target);
    result.noise_selected = mean(noise);
    result.total_selected = mean(total);
    result.overall_ser = mean(overall_ser);
    for (auto& e : err_sum) e /= static_cast<double>(config.repeats);
    mean_errors[algorithm] = std::move(err_sum);
    report.algorithms.push_back(std::move(result));
  }

  for (auto& result : report.algorithms) {
    for (const char* baseline : {"Rand-Uniform", "Rand-Domain"}) {
      if (result.name == baseline || !mean_errors.count(baseline)) continue;
      PairedErrors pairs;
      for (auto i : target_rows) pairs.ids.push_back(data.test[i].id);
      pairs.errors_a = mean_errors[baseline];
      pairs.errors_b = mean_errors[result.name];
      pairs.reference_slots = target_refs;
      Significance sig;
      sig.baseline = baseline;
      if (!pairs.ids.empty()) {
        std::vector<double> diffs(pairs.size());
        double sa = 0.0, sb = 0.0, refs = 0.0;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
          diffs[k] = pairs.errors_a[k] - pairs.errors_b[k];
          sa += pairs.errors_a[k];
          sb += pairs.errors_b[k];
          refs += pairs.reference_slots[k];
        }
        sig.wilcoxon_p = wilcoxon_signed_rank(diffs).p_value;
        sig.bootstrap_p = bootstrap_significance(pairs, config.bootstrap_resamples,
                                                 derive_seed(config.seed, "bootstrap:" + result.name + ":" + baseline))
                              .p_value;
        sig.delta_ser_pct = refs > 0 ? safe_reduction(sa / refs, sb / refs) : 0.0;
      }
      result.significance.push_back(sig);
    }
  }

  if (persist) {
    RenderedReport rendered = render_report(report);
    write_file(config.output_dir / "report.json", rendered.json);
    write_file(config.output_dir / "report.txt", rendered.table);
    write_file(config.output_dir / "report.csv", rendered.csv);
    timing["total_seconds"] = std::chrono::duration<double>(clock::now() - t0).count();
    write_file(config.output_dir / "timing.json", timing.dump(2) + "\n");
  }
  return report;
}

}  // namespace nlual
