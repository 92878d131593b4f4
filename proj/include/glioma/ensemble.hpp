#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "glioma/labels.hpp"
#include "glioma/prediction.hpp"

namespace glioma {

// Slide/volume-level result plus how many units voted.
struct AggregateResult {
  Prediction prediction;  // 3-class, probs[N] == 0
  std::size_t units = 0;
  std::size_t dropped_n = 0;
  bool used_fallback = false;
};

/// Confidence-weighted majority vote over tiles. N-labeled tiles are dropped;
/// score(c) sums the confidence of tiles voting c. Ties go to the higher mean
/// probability of c over all tiles, then to class order A, O, G. When every
/// tile is N the mean A/O/G probabilities decide.
AggregateResult aggregate_tiles(const std::vector<Prediction>& tiles);

/// Confidence-weighted mean of the A/O/G probabilities of non-N slices,
/// renormalized over A/O/G. Same all-N fallback and tie order as tiles.
AggregateResult aggregate_slices(const std::vector<Prediction>& slices);

struct CaseDecision {
  std::string case_id;
  std::map<std::string, Prediction> per_modality;
  Prediction fused;
  std::vector<std::string> contributing_modalities;
};

struct FusionOptions {
  std::map<std::string, double> weights;  // missing modality → 1.0
  std::optional<std::vector<std::string>> subset;  // restrict contributing modalities
};

/// Each modality votes for its label with strength weight·confidence; the
/// patient label is the class with the largest summed strength. Fused probs
/// are the strength-weighted mean of the modality prob vectors.
CaseDecision fuse_modalities(const std::string& case_id,
                             const std::map<std::string, Prediction>& per_modality,
                             const FusionOptions& options = {});

// Slide- or volume-level result for one case and modality, as written by
// `predict` and read by `fuse`.
struct CasePrediction {
  std::string case_id;
  std::string modality;
  AggregateResult aggregate;
  std::vector<Prediction> units;
};

nlohmann::ordered_json prediction_to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);
nlohmann::ordered_json case_prediction_to_json(const CasePrediction& c);
CasePrediction case_prediction_from_json(const nlohmann::json& j);
nlohmann::ordered_json case_decision_to_json(const CaseDecision& d);

}  // namespace glioma
