#include "nlual/model_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "nlual/common.hpp"

namespace nlual {

using nlohmann::json;

namespace {

json sparse(const std::vector<double>& w) {
  json out = json::array();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] != 0.0) out.push_back({i, w[i]});
  }
  return out;
}

std::vector<double> dense(const json& j, std::size_t size) {
  std::vector<double> w(size, 0.0);
  for (const auto& e : j) {
    const auto i = e.at(0).get<std::size_t>();
    if (i >= size) throw Error("weight index out of range in model blob");
    w[i] = e.at(1).get<double>();
  }
  return w;
}

json header(const char* kind) { return {{"format", kind}, {"version", kModelFormatVersion}}; }

void check_header(const json& j, const char* kind) {
  if (j.value("format", "") != kind) throw Error(std::string("expected a ") + kind + " blob");
  if (j.value("version", 0) != kModelFormatVersion) throw Error("unsupported model version");
}

json features_json(const FeatureConfig& c) {
  return {{"ngram_orders", c.ngram_orders}, {"hash_bits", c.hash_bits}, {"lowercase", c.lowercase}};
}

FeatureConfig features_from(const json& j) {
  FeatureConfig c;
  c.ngram_orders = j.at("ngram_orders").get<std::vector<int>>();
  c.hash_bits = j.at("hash_bits").get<int>();
  c.lowercase = j.at("lowercase").get<bool>();
  c.validate();
  return c;
}

json linear_json(const LinearModel& m) {
  json j = header("nlual.linear");
  j["loss_kind"] = to_string(m.loss_kind);
  j["hash_bits"] = m.hash_bits;
  j["bias"] = m.bias;
  j["weights"] = sparse(m.weights);
  return j;
}

json maxent_json(const MaxEntModel& m) {
  json j = header("nlual.maxent");
  j["class_labels"] = m.class_labels;
  j["hash_bits"] = m.hash_bits;
  j["bias"] = m.bias;
  j["weights"] = sparse(m.weights);
  return j;
}

json crf_json(const CrfModel& m) {
  json j = header("nlual.crf");
  j["template_version"] = kCrfTemplateVersion;
  j["labels"] = m.labels;
  j["features"] = features_json(m.features);
  j["bio_constraints"] = m.bio_constraints;
  j["emission"] = sparse(m.emission);
  j["transition"] = m.transition;
  j["start"] = m.start;
  return j;
}

LinearModel linear_from(const json& j) {
  check_header(j, "nlual.linear");
  LinearModel m = LinearModel::zeros(loss_kind_from_string(j.at("loss_kind").get<std::string>()),
                                     j.at("hash_bits").get<int>());
  m.bias = j.at("bias").get<double>();
  m.weights = dense(j.at("weights"), m.weights.size());
  return m;
}

MaxEntModel maxent_from(const json& j) {
  check_header(j, "nlual.maxent");
  MaxEntModel m = MaxEntModel::zeros(j.at("class_labels").get<std::vector<std::string>>(),
                                     j.at("hash_bits").get<int>());
  m.bias = j.at("bias").get<std::vector<double>>();
  m.weights = dense(j.at("weights"), m.weights.size());
  return m;
}

CrfModel crf_from(const json& j) {
  check_header(j, "nlual.crf");
  if (j.value("template_version", 0) != kCrfTemplateVersion) throw Error("unsupported CRF feature template");
  CrfModel m = CrfModel::zeros(j.at("labels").get<std::vector<std::string>>(), features_from(j.at("features")),
                               j.at("bio_constraints").get<bool>());
  m.emission = dense(j.at("emission"), m.emission.size());
  m.transition = j.at("transition").get<std::vector<double>>();
  m.start = j.at("start").get<std::vector<double>>();
  if (m.transition.size() != m.labels.size() * m.labels.size() || m.start.size() != m.labels.size()) {
    throw Error("CRF blob has inconsistent transition sizes");
  }
  return m;
}

}  // namespace

std::string serialize(const LinearModel& m) { return linear_json(m).dump(); }
std::string serialize(const MaxEntModel& m) { return maxent_json(m).dump(); }
std::string serialize(const CrfModel& m) { return crf_json(m).dump(); }

std::string serialize(const NluSystem& s) {
  json j = header("nlual.nlu");
  j["ic_features"] = features_json(s.ic_features);
  j["domains"] = json::array();
  for (const auto& d : s.domains) {
    j["domains"].push_back({{"domain", d.domain}, {"ic", maxent_json(d.ic)}, {"ner", crf_json(d.ner)}});
  }
  return j.dump();
}

LinearModel deserialize_linear(std::string_view blob) { return linear_from(json::parse(blob)); }
MaxEntModel deserialize_maxent(std::string_view blob) { return maxent_from(json::parse(blob)); }
CrfModel deserialize_crf(std::string_view blob) { return crf_from(json::parse(blob)); }

NluSystem deserialize_nlu(std::string_view blob) {
  json j = json::parse(blob);
  check_header(j, "nlual.nlu");
  NluSystem s;
  s.ic_features = features_from(j.at("ic_features"));
  for (const auto& d : j.at("domains")) {
    s.domains.push_back({d.at("domain").get<std::string>(), maxent_from(d.at("ic")), crf_from(d.at("ner"))});
  }
  return s;
}

void save_nlu(const std::filesystem::path& path, const NluSystem& s) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize(s);
}

NluSystem load_nlu(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_nlu(ss.str());
}

}  // namespace nlual
