// nlual: command-line front end for corpus tools, NLU training, selection,
// simulation and the annotation service.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nlual/al.hpp"
#include "nlual/config.hpp"
#include "nlual/corpus.hpp"
#include "nlual/model_io.hpp"
#include "nlual/nlu.hpp"
#include "nlual/service.hpp"
#include "nlual/sim.hpp"
#include "nlual/stats.hpp"

using namespace nlual;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error("cannot write " + out_path);
  out << text;
}

ordered_json ser_json(const SerReport& r) {
  ordered_json j;
  j["ser"] = r.ser();
  j["insertions"] = r.total.insertions;
  j["deletions"] = r.total.deletions;
  j["substitutions"] = r.total.substitutions;
  j["reference_slots"] = r.total.reference_slots;
  j["per_domain"] = ordered_json::object();
  for (const auto& [d, b] : r.per_domain) j["per_domain"][d] = b.ser();
  return j;
}

NluConfig nlu_config_at(const std::string& path) {
  return path.empty() ? NluConfig{} : nlu_config_from_json(read_json_file(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active-learning toolkit for multi-domain NLU"};
  app.require_subcommand(1);

  std::string config, out, corpus_path, model_path, text, pool_path, targets_csv, model_b, data_dir, ui_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::uint64_t> seed;
  std::size_t resamples = 1000;
  int top = 1;

  auto* synth = app.add_subcommand("synth", "Generate a corpus from a synthetic spec");
  synth->add_option("--config", config, "SynthSpec JSON")->required();
  synth->add_option("--seed", seed, "Override the spec seed");
  synth->add_option("--out", out, "Output JSONL (default stdout)");

  auto* split = app.add_subcommand("split", "Split a corpus into train/pool/test");
  split->add_option("--corpus", corpus_path, "Input JSONL")->required();
  split->add_option("--config", config, "SplitSpec JSON");
  split->add_option("--seed", seed, "Override the split seed");
  split->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train-nlu", "Train per-domain IC and NER models");
  train->add_option("--corpus", corpus_path, "Training JSONL")->required();
  train->add_option("--config", config, "NLU config JSON");
  train->add_option("--seed", seed, "Training seed");
  train->add_option("--out", out, "Model file")->required();

  auto* interp = app.add_subcommand("interpret", "Interpret one utterance");
  interp->add_option("--model", model_path, "Model file")->required();
  interp->add_option("--text", text, "Whitespace-tokenized utterance")->required();
  interp->add_option("--top", top, "Hypotheses to print");

  auto* eval = app.add_subcommand("eval-ser", "Slot error rate of a model on a corpus");
  eval->add_option("--model", model_path, "Model file")->required();
  eval->add_option("--corpus", corpus_path, "Test JSONL")->required();
  eval->add_option("--out", out, "Output JSON (default stdout)");

  auto* select = app.add_subcommand("select", "Run one selection iteration");
  select->add_option("--config", config, "AL config JSON");
  select->add_option("--corpus", corpus_path, "Annotated data JSONL")->required();
  select->add_option("--pool", pool_path, "Candidate pool JSONL (labels are ignored)")->required();
  select->add_option("--targets", targets_csv, "Comma-separated target domains")->required();
  select->add_option("--seed", seed, "Selection seed");
  select->add_option("--out", out, "Audit JSONL (default stdout)");

  auto* simulate = app.add_subcommand("simulate", "Run a simulated active-learning experiment");
  simulate->add_option("--config", config, "Experiment config JSON")->required();
  simulate->add_option("--seed", seed, "Override the experiment seed");
  simulate->add_option("--out", out, "Output directory");

  auto* signif = app.add_subcommand("significance", "Paired significance of two models on a test corpus");
  signif->add_option("--model", model_path, "Baseline model (A)")->required();
  signif->add_option("--model-b", model_b, "Candidate model (B)")->required();
  signif->add_option("--corpus", corpus_path, "Test JSONL")->required();
  signif->add_option("--resamples", resamples, "Bootstrap resamples");
  signif->add_option("--seed", seed, "Bootstrap seed");

  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  serve->add_option("--corpus", corpus_path, "Seed training JSONL")->required();
  serve->add_option("--pool", pool_path, "Candidate pool JSONL (labels are ignored)")->required();
  serve->add_option("--data-dir", data_dir, "Journal directory")->required();
  serve->add_option("--ui-dir", ui_dir, "Static UI bundle directory");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) {
      SynthSpec spec = synth_spec_from_json(read_json_file(config));
      if (seed) spec.seed = *seed;
      std::ostringstream os;
      write_corpus(os, synth_generate(spec));
      emit(out, os.str());
    } else if (*split) {
      SplitSpec spec = config.empty() ? SplitSpec{} : split_spec_from_json(read_json_file(config));
      if (seed) spec.seed = *seed;
      CorpusSplit parts = split_corpus(load_corpus(corpus_path), spec);
      std::filesystem::create_directories(out);
      save_corpus(std::filesystem::path(out) / "train.jsonl", parts.train);
      save_corpus(std::filesystem::path(out) / "pool.jsonl", parts.pool);
      save_corpus(std::filesystem::path(out) / "test.jsonl", parts.test);
      std::cout << "train " << parts.train.size() << " pool " << parts.pool.size() << " test " << parts.test.size()
                << "\n";
    } else if (*train) {
      NluConfig cfg = nlu_config_at(config);
      if (seed) cfg.seed = *seed;
      save_nlu(out, train_nlu(load_corpus(corpus_path), cfg));
    } else if (*interp) {
      NluSystem nlu = load_nlu(model_path);
      auto hyps = interpret(nlu, whitespace_tokens(text));
      ordered_json arr = ordered_json::array();
      for (std::size_t i = 0; i < hyps.size() && static_cast<int>(i) < top; ++i) {
        ordered_json slots = ordered_json::array();
        for (const auto& s : hyps[i].slots) slots.push_back({{"type", s.type}, {"value", s.value}});
        arr.push_back({{"domain", hyps[i].domain},
                       {"intent", hyps[i].intent},
                       {"slots", slots},
                       {"bio_tags", hyps[i].bio_tags},
                       {"confidence", hyps[i].confidence}});
      }
      std::cout << arr.dump(2) << "\n";
    } else if (*eval) {
      SerReport r = evaluate_ser(load_nlu(model_path), load_corpus(corpus_path));
      emit(out, ser_json(r).dump(2) + "\n");
    } else if (*select) {
      AlConfig al = config.empty() ? AlConfig{} : al_config_from_json(read_json_file(config));
      if (seed) al.seed = *seed;
      std::vector<std::string> targets;
      std::stringstream ss(targets_csv);
      for (std::string t; std::getline(ss, t, ',');) {
        if (!t.empty()) targets.push_back(t);
      }
      if (targets.empty()) throw ConfigError("--targets must name at least one domain");
      auto pool = hide_annotations(load_corpus(pool_path));
      SelectionState state(load_corpus(corpus_path), pool, al);
      std::vector<Batch> batches;
      for (const auto& t : targets) {
        if (al.spec().random) {
          batches.push_back(random_uniform(state, std::min(al.batch_size, state.pool().size()),
                                           derive_seed(al.seed, t), t));
        } else {
          Committee c = train_selection_models(state, t, al, derive_seed(derive_seed(al.seed, std::uint64_t{1}), t));
          batches.push_back(select_batch(state, c, al, t));
        }
      }
      Batch b = dedupe_multi_target(batches);
      for (const auto& w : b.warnings) std::cerr << "warning: " << w << "\n";
      std::string lines;
      for (const auto& r : b.records) lines += audit_record_to_json(r) + "\n";
      emit(out, lines);
    } else if (*simulate) {
      ExperimentConfig cfg = load_experiment_config(config);
      if (seed) cfg.seed = *seed;
      if (!out.empty()) cfg.output_dir = out;
      ExperimentReport report = run_simulation(cfg);
      std::cout << render_report(report).table;
    } else if (*signif) {
      Corpus test = load_corpus(corpus_path);
      SerReport a = evaluate_ser(load_nlu(model_path), test);
      SerReport b = evaluate_ser(load_nlu(model_b), test);
      PairedErrors pairs;
      std::vector<double> diffs;
      for (std::size_t i = 0; i < a.per_utterance.size(); ++i) {
        pairs.ids.push_back(a.per_utterance[i].id);
        pairs.errors_a.push_back(static_cast<double>(a.per_utterance[i].errors));
        pairs.errors_b.push_back(static_cast<double>(b.per_utterance[i].errors));
        pairs.reference_slots.push_back(static_cast<double>(a.per_utterance[i].reference_slots));
        diffs.push_back(pairs.errors_a.back() - pairs.errors_b.back());
      }
      auto w = wilcoxon_signed_rank(diffs);
      auto bs = bootstrap_significance(pairs, resamples, seed.value_or(0));
      ordered_json j;
      j["ser_a"] = a.ser();
      j["ser_b"] = b.ser();
      j["delta_ser_pct"] = a.ser() > 0 ? relative_reduction(a.ser(), b.ser()) : 0.0;
      j["wilcoxon_p"] = w.p_value;
      j["wilcoxon_statistic"] = w.statistic;
      j["bootstrap_p"] = bs.p_value;
      j["bootstrap_ci"] = {bs.ci_low, bs.ci_high};
      std::cout << j.dump(2) << "\n";
    } else if (*serve) {
      ServiceOptions opts;
      opts.data_dir = data_dir;
      if (!ui_dir.empty()) opts.ui_dir = ui_dir;
      AnnotationService service(load_corpus(corpus_path), hide_annotations(load_corpus(pool_path)), opts);
      std::cerr << "listening on " << host << ":" << port << "\n";
      run_service(service, host, port);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
