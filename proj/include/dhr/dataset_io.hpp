#pragma once

// File formats: JSON-lines datasets, network checkpoints, fit records and
// key-value training configs.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "dhr/comparison_graph.hpp"
#include "dhr/trainer.hpp"

#include "json.hpp"

namespace dhr {

// Header line {"n":int,"d":int} followed by one record per edge:
// {"vertices":[...],"ranking":[...],"covariates":{"id":[...]},"timestamp":"..."}.
// Errors carry the 1-based line number.
ComparisonDataset read_dataset(std::istream& in);
ComparisonDataset load_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, const ComparisonDataset& dataset);
void save_dataset(const std::filesystem::path& path, const ComparisonDataset& dataset);

// Checkpoint of a fitted covariate effect:
// {"kind":"mlp"|"linear"|"zero","center":c, ...kind-specific fields}.
// The "mlp" kind adds {"arch":{"input_dim","hidden_widths"},"box_radius",
// "sup_bound","phi":[...]}; "linear" adds {"weights":[...]}.
nlohmann::json effect_to_json(const FitResult& fit);
void effect_from_json(const nlohmann::json& j, FitResult& fit);

nlohmann::json network_to_json(const NetworkParams& params);
NetworkParams network_from_json(const nlohmann::json& j);

// {"model","u_hat","checkpoint","train_curve","val_curve","existence_ok",
//  "warnings","epochs_run","best_epoch","metrics":{...}}.
nlohmann::json fit_to_json(const FitResult& fit, const std::string& checkpoint_path);

void save_fit(const std::filesystem::path& result_path,
              const std::filesystem::path& checkpoint_path, const FitResult& fit,
              const nlohmann::json& metrics = nlohmann::json::object());
// Reads a fit record and the checkpoint it references (resolved relative to
// the record's directory when not absolute).
FitResult load_fit(const std::filesystem::path& result_path);

// "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> parse_key_values(std::istream& in);
std::map<std::string, std::string> load_key_values(const std::filesystem::path& path);

// Applies recognised keys (eta_u, eta_phi, epochs, batch_size, optimizer,
// adam_beta1, adam_beta2, adam_epsilon, seed, grad_clip,
// validation_fraction, patience, existence_policy) to `config`.
// Unknown keys throw kInvalidArgument.
void apply_train_overrides(const std::map<std::string, std::string>& values,
                           TrainConfig& config);

// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& text);

}  // namespace dhr
