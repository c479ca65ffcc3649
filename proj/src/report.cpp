#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "nlual/common.hpp"
#include "nlual/sim.hpp"

namespace nlual {

using nlohmann::json;
using nlohmann::ordered_json;

std::string report_to_json(const ExperimentReport& r) {
  ordered_json j;
  j["format"] = "nlual.report";
  j["version"] = 1;
  j["targets"] = r.targets;
  j["base_ser"] = ordered_json::object();
  for (const auto& t : r.targets) j["base_ser"][t] = r.base_ser.count(t) ? r.base_ser.at(t) : 0.0;
  j["base_overall_ser"] = r.base_overall_ser;
  j["budget_per_target"] = r.budget_per_target;
  j["iterations"] = r.iterations;
  j["repeats"] = r.repeats;
  j["seed"] = r.seed;
  j["pool_size"] = r.pool_size;
  j["pool_noise"] = r.pool_noise;
  j["train_size"] = r.train_size;
  j["test_size"] = r.test_size;
  j["algorithms"] = ordered_json::array();
  for (const auto& a : r.algorithms) {
    ordered_json aj;
    aj["name"] = a.name;
    aj["overall_selected"] = a.overall_selected;
    aj["non_target_selected"] = a.non_target_selected;
    aj["noise_selected"] = a.noise_selected;
    aj["total_selected"] = a.total_selected;
    aj["mean_target_delta_ser"] = a.mean_target_delta_ser;
    aj["overall_ser"] = a.overall_ser;
    aj["selected_per_repeat"] = a.selected_per_repeat;
    aj["targets"] = ordered_json::array();
    for (const auto& t : a.targets) {
      aj["targets"].push_back({{"target", t.target},
                               {"base_ser", t.base_ser},
                               {"ser", t.ser},
                               {"delta_ser", t.delta_ser},
                               {"selected", t.selected}});
    }
    aj["significance"] = ordered_json::array();
    for (const auto& s : a.significance) {
      aj["significance"].push_back({{"baseline", s.baseline},
                                    {"wilcoxon_p", s.wilcoxon_p},
                                    {"bootstrap_p", s.bootstrap_p},
                                    {"delta_ser_pct", s.delta_ser_pct}});
    }
    j["algorithms"].push_back(std::move(aj));
  }
  return j.dump(2) + "\n";
}

ExperimentReport report_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("invalid report JSON: ") + e.what());
  }
  if (j.value("format", "") != "nlual.report") throw Error("not a report document");
  ExperimentReport r;
  try {
    r.targets = j.at("targets").get<std::vector<std::string>>();
    for (const auto& [k, v] : j.at("base_ser").items()) r.base_ser[k] = v.get<double>();
    r.base_overall_ser = j.at("base_overall_ser").get<double>();
    r.budget_per_target = j.at("budget_per_target").get<std::size_t>();
    r.iterations = j.at("iterations").get<int>();
    r.repeats = j.at("repeats").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.pool_size = j.at("pool_size").get<std::size_t>();
    r.pool_noise = j.at("pool_noise").get<std::size_t>();
    r.train_size = j.at("train_size").get<std::size_t>();
    r.test_size = j.at("test_size").get<std::size_t>();
    for (const auto& aj : j.at("algorithms")) {
      AlgorithmResult a;
      a.name = aj.at("name").get<std::string>();
      a.overall_selected = aj.at("overall_selected").get<double>();
      a.non_target_selected = aj.at("non_target_selected").get<double>();
      a.noise_selected = aj.at("noise_selected").get<double>();
      a.total_selected = aj.at("total_selected").get<double>();
      a.mean_target_delta_ser = aj.at("mean_target_delta_ser").get<double>();
      a.overall_ser = aj.at("overall_ser").get<double>();
      a.selected_per_repeat = aj.at("selected_per_repeat").get<std::vector<std::size_t>>();
      for (const auto& tj : aj.at("targets")) {
        a.targets.push_back({tj.at("target").get<std::string>(), tj.at("base_ser").get<double>(),
                             tj.at("ser").get<double>(), tj.at("delta_ser").get<double>(),
                             tj.at("selected").get<double>()});
      }
      for (const auto& sj : aj.at("significance")) {
        a.significance.push_back({sj.at("baseline").get<std::string>(), sj.at("wilcoxon_p").get<double>(),
                                  sj.at("bootstrap_p").get<double>(), sj.at("delta_ser_pct").get<double>()});
      }
      r.algorithms.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed report: ") + e.what());
  }
  return r;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::string> header(const ExperimentReport& r) {
  std::vector<std::string> h{"Algorithm", "Overall #Utt"};
  for (const auto& t : r.targets) {
    h.push_back(t + " #Utt");
    h.push_back(t + " dSER%");
  }
  h.push_back("Non-Target #Utt");
  h.push_back("Noise #Utt");
  return h;
}

std::vector<std::string> row(const AlgorithmResult& a, const ExperimentReport& r) {
  std::vector<std::string> cells{a.name, fmt("%.1f", a.overall_selected)};
  for (const auto& t : r.targets) {
    const TargetResult* tr = nullptr;
    for (const auto& x : a.targets) {
      if (x.target == t) tr = &x;
    }
    cells.push_back(tr ? fmt("%.1f", tr->selected) : "-");
    cells.push_back(tr ? fmt("%.2f", tr->delta_ser) : "-");
  }
  cells.push_back(fmt("%.1f", a.non_target_selected));
  cells.push_back(fmt("%.1f", a.noise_selected));
  return cells;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

RenderedReport render_report(const ExperimentReport& r) {
  RenderedReport out;
  out.json = report_to_json(r);

  std::vector<std::vector<std::string>> rows{header(r)};
  for (const auto& a : r.algorithms) rows.push_back(row(a, r));

  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& cells : rows) {
    for (std::size_t c = 0; c < cells.size(); ++c) width[c] = std::max(width[c], cells[c].size());
  }
  std::ostringstream table, csv;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      const auto& cell = rows[i][c];
      if (c) table << "  ";
      if (c == 0) table << cell << std::string(width[c] - cell.size(), ' ');
      else table << std::string(width[c] - cell.size(), ' ') << cell;
      csv << (c ? "," : "") << csv_cell(cell);
    }
    table << "\n";
    csv << "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      table << std::string(total + 2 * (width.size() - 1), '-') << "\n";
    }
  }

  bool any_sig = false;
  for (const auto& a : r.algorithms) any_sig = any_sig || !a.significance.empty();
  if (any_sig) {
    table << "\nSignificance on target-domain test utterances\n";
    for (const auto& a : r.algorithms) {
      for (const auto& s : a.significance) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s vs %s: dSER%% %.2f  wilcoxon p %.4g  bootstrap p %.4g\n", a.name.c_str(),
                      s.baseline.c_str(), s.delta_ser_pct, s.wilcoxon_p, s.bootstrap_p);
        table << buf;
      }
    }
  }
  out.table = table.str();
  out.csv = csv.str();
  return out;
}

}  // namespace nlual
