#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "nlual/crf.hpp"
#include "nlual/linear.hpp"
#include "nlual/nlu.hpp"

namespace nlual {

// Versioned JSON blobs. Weights are stored sparsely as [index, value] pairs;
// doubles are printed with round-trip precision, so scores survive a
// save/load cycle bit-exactly.

inline constexpr int kModelFormatVersion = 1;

std::string serialize(const LinearModel& m);
std::string serialize(const MaxEntModel& m);
std::string serialize(const CrfModel& m);
std::string serialize(const NluSystem& s);

LinearModel deserialize_linear(std::string_view blob);
MaxEntModel deserialize_maxent(std::string_view blob);
CrfModel deserialize_crf(std::string_view blob);
NluSystem deserialize_nlu(std::string_view blob);

void save_nlu(const std::filesystem::path& path, const NluSystem& s);
NluSystem load_nlu(const std::filesystem::path& path);

}  // namespace nlual
