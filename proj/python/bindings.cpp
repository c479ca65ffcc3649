// Python extension: corpora and configs cross the boundary as JSON text.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "nlual/al.hpp"
#include "nlual/config.hpp"
#include "nlual/model_io.hpp"
#include "nlual/nlu.hpp"
#include "nlual/sim.hpp"
#include "nlual/stats.hpp"

namespace py = pybind11;
using namespace nlual;
using nlohmann::json;

namespace {

Corpus corpus_from_text(const std::string& jsonl) {
  std::istringstream in(jsonl);
  return parse_corpus(in);
}

std::string corpus_to_text(const Corpus& c) {
  std::ostringstream out;
  write_corpus(out, c);
  return out.str();
}

py::dict hypothesis_dict(const Hypothesis& h) {
  py::list slots;
  for (const auto& s : h.slots) slots.append(py::make_tuple(s.type, s.value));
  py::dict d;
  d["domain"] = h.domain;
  d["intent"] = h.intent;
  d["slots"] = slots;
  d["bio_tags"] = h.bio_tags;
  d["confidence"] = h.confidence;
  return d;
}

std::vector<Slot> to_slots(const std::vector<std::pair<std::string, std::string>>& v) {
  std::vector<Slot> out;
  for (const auto& [t, s] : v) out.push_back({t, s});
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Active learning for multi-domain NLU";
  static py::exception<Error> base_error(m, "Error", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const Error& e) {
      py::set_error(base_error, e.what());
    } catch (const json::exception& e) {
      py::set_error(config_error, e.what());
    }
  });

  m.def("synth", [](const std::string& spec_json) {
    return corpus_to_text(synth_generate(synth_spec_from_json(json::parse(spec_json))));
  }, py::arg("spec_json"), "Generate a synthetic corpus; returns JSONL.");

  m.def("split", [](const std::string& corpus, const std::string& spec_json) {
    CorpusSplit s = split_corpus(corpus_from_text(corpus), split_spec_from_json(json::parse(spec_json)));
    return py::make_tuple(corpus_to_text(s.train), corpus_to_text(s.pool), corpus_to_text(s.test));
  }, py::arg("corpus"), py::arg("spec_json"));

  m.def("validate_corpus", [](const std::string& corpus) { return corpus_from_text(corpus).size(); });

  py::class_<NluSystem>(m, "NluSystem")
      .def_static("train", [](const std::string& corpus, const std::string& config_json) {
        py::gil_scoped_release release;
        return train_nlu(corpus_from_text(corpus), nlu_config_from_json(json::parse(config_json)));
      }, py::arg("corpus"), py::arg("config_json") = "{}")
      .def_static("load", [](const std::string& path) { return load_nlu(path); })
      .def("save", [](const NluSystem& s, const std::string& path) { save_nlu(path, s); })
      .def_property_readonly("domains", &NluSystem::domain_names)
      .def("interpret", [](const NluSystem& s, const std::vector<std::string>& tokens) {
        py::list out;
        for (const auto& h : interpret(s, tokens)) out.append(hypothesis_dict(h));
        return out;
      })
      .def("evaluate", [](const NluSystem& s, const std::string& corpus) {
        SerReport r = evaluate_ser(s, corpus_from_text(corpus));
        py::dict per;
        for (const auto& [d, b] : r.per_domain) per[py::str(d)] = b.ser();
        py::dict d;
        d["ser"] = r.ser();
        d["per_domain"] = per;
        return d;
      });

  m.def("score_ser", [](const std::string& ref_intent, const std::vector<std::pair<std::string, std::string>>& ref,
                        const std::string& hyp_intent, const std::vector<std::pair<std::string, std::string>>& hyp) {
    SerBreakdown b = score_ser(ref_intent, to_slots(ref), hyp_intent, to_slots(hyp));
    py::dict d;
    d["insertions"] = b.insertions;
    d["deletions"] = b.deletions;
    d["substitutions"] = b.substitutions;
    d["reference_slots"] = b.reference_slots;
    d["ser"] = b.ser();
    return d;
  });

  m.def("algorithm_table", [] {
    py::list rows;
    for (const auto& s : algorithm_table()) {
      py::dict d;
      d["name"] = std::string(s.name);
      d["random"] = s.random;
      d["logistic"] = s.uses_logistic;
      d["squared_hinge"] = s.uses_squared_hinge;
      d["crf"] = s.uses_crf;
      d["filter"] = to_string(s.filter);
      d["scorer"] = to_string(s.scorer);
      rows.append(d);
    }
    return rows;
  });

  m.def("filter_passes", [](const std::string& algorithm, double lg, double sq, double hg) {
    return apply_filter(algorithm_spec(algorithm).filter, CommitteeScores::make(lg, sq, hg));
  });
  m.def("score", [](const std::string& algorithm, double lg, double sq, double hg, std::optional<double> p_crf) {
    return apply_scorer(algorithm_spec(algorithm).scorer, CommitteeScores::make(lg, sq, hg, p_crf));
  }, py::arg("algorithm"), py::arg("y_lg"), py::arg("y_sq"), py::arg("y_hg"), py::arg("p_crf") = py::none());

  m.def("wilcoxon", [](const std::vector<double>& diffs) {
    WilcoxonResult r = wilcoxon_signed_rank(diffs);
    return py::make_tuple(r.statistic, r.p_value);
  });
  m.def("bootstrap", [](const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& refs,
                        std::size_t resamples, std::uint64_t seed) {
    PairedErrors p;
    p.errors_a = a;
    p.errors_b = b;
    p.reference_slots = refs;
    BootstrapResult r = bootstrap_significance(p, resamples, seed);
    py::dict d;
    d["p_value"] = r.p_value;
    d["observed_delta"] = r.observed_delta;
    d["ci_low"] = r.ci_low;
    d["ci_high"] = r.ci_high;
    return d;
  }, py::arg("errors_a"), py::arg("errors_b"), py::arg("reference_slots"), py::arg("resamples") = 1000,
     py::arg("seed") = 0);
  m.def("relative_reduction", &relative_reduction);

  m.def("simulate", [](const std::string& config_json, const std::string& base_dir) {
    ExperimentConfig c = experiment_config_from_json(json::parse(config_json), base_dir);
    py::gil_scoped_release release;
    return report_to_json(run_simulation(c));
  }, py::arg("config_json"), py::arg("base_dir") = "", "Run a pool-based simulation; returns the report JSON.");
}
