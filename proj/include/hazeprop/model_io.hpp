#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hazeprop/gmm.hpp"
#include "hazeprop/network.hpp"
#include "hazeprop/training.hpp"

namespace hazeprop {

/// Versioned structured-text model file. Coefficients are written as decimal
/// text with 17 significant digits, so load(save(m)) round-trips bit-exactly.
void save_model(const NetworkParams& params, const std::string& path);
NetworkParams load_model(const std::string& path);

void save_gmm(const GMMModel& model, const std::string& path);
GMMModel load_gmm(const std::string& path);

/// Training manifest: one observation/target path pair per line, separated by
/// whitespace. Relative paths resolve against the manifest's directory.
void save_manifest(const std::vector<std::pair<std::string, std::string>>& entries,
                   const std::string& path);
std::vector<std::pair<std::string, std::string>> load_manifest(const std::string& path);

/// Load every pair listed in a manifest.
std::vector<TrainingPair> load_training_pairs(const std::string& manifest_path);

/// FitReport as structured text (one key per line, trajectory inline).
void save_fit_report(const FitReport& report, const std::string& path);

}  // namespace hazeprop
