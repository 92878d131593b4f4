#include "glioma/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "glioma/error.hpp"

namespace glioma {

Prediction Prediction::from_probs(const std::array<double, 4>& probs) {
  Prediction p;
  p.probs = probs;
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c)
    if (probs[c] > probs[best]) best = c;
  p.label = label_from_index(best);
  p.confidence = probs[best];
  return p;
}

namespace {

using Scores = std::array<double, 3>;

// Equal up to summation-order rounding.
bool same(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

// Largest score, ties by larger tie_break value, then by class order.
int pick(const Scores& score, const Scores& tie_break) {
  int best = 0;
  for (int c = 1; c < kNumSubtypes; ++c) {
    if (same(score[c], score[best])) {
      if (!same(tie_break[c], tie_break[best]) && tie_break[c] > tie_break[best]) best = c;
    } else if (score[c] > score[best]) {
      best = c;
    }
  }
  return best;
}

Scores mean_subtype_probs(const std::vector<Prediction>& units) {
  Scores mean{0, 0, 0};
  for (const auto& u : units)
    for (int c = 0; c < kNumSubtypes; ++c) mean[c] += u.probs[c];
  for (auto& m : mean) m /= static_cast<double>(units.size());
  return mean;
}

Prediction normalized(const Scores& mass, int label) {
  const double total = mass[0] + mass[1] + mass[2];
  Prediction p;
  p.probs = {0, 0, 0, 0};
  for (int c = 0; c < kNumSubtypes; ++c)
    p.probs[c] = total > 0.0 ? mass[c] / total : 1.0 / kNumSubtypes;
  p.label = label_from_index(label);
  p.confidence = p.probs[label];
  return p;
}

AggregateResult fallback(const std::vector<Prediction>& units) {
  const auto mean = mean_subtype_probs(units);
  AggregateResult r;
  r.prediction = normalized(mean, pick(mean, mean));
  r.units = 0;
  r.dropped_n = units.size();
  r.used_fallback = true;
  return r;
}

}  // namespace

AggregateResult aggregate_tiles(const std::vector<Prediction>& tiles) {
  require(!tiles.empty(), ErrorCode::EmptyInput, "aggregate_tiles: no tile predictions");
  Scores score{0, 0, 0};
  std::size_t voters = 0;
  for (const auto& t : tiles) {
    if (t.label == ClassLabel::N) continue;
    score[index_of(t.label)] += t.confidence;
    ++voters;
  }
  if (voters == 0) return fallback(tiles);
  AggregateResult r;
  r.prediction = normalized(score, pick(score, mean_subtype_probs(tiles)));
  r.units = voters;
  r.dropped_n = tiles.size() - voters;
  return r;
}

AggregateResult aggregate_slices(const std::vector<Prediction>& slices) {
  require(!slices.empty(), ErrorCode::EmptyInput, "aggregate_slices: no slice predictions");
  Scores mass{0, 0, 0};
  double weight = 0.0;
  std::size_t voters = 0;
  for (const auto& s : slices) {
    if (s.label == ClassLabel::N) continue;
    for (int c = 0; c < kNumSubtypes; ++c) mass[c] += s.confidence * s.probs[c];
    weight += s.confidence;
    ++voters;
  }
  if (voters == 0) return fallback(slices);
  for (auto& m : mass) m /= weight;
  AggregateResult r;
  r.prediction = normalized(mass, pick(mass, mean_subtype_probs(slices)));
  r.units = voters;
  r.dropped_n = slices.size() - voters;
  return r;
}

CaseDecision fuse_modalities(const std::string& case_id,
                             const std::map<std::string, Prediction>& per_modality,
                             const FusionOptions& options) {
  require(!per_modality.empty(), ErrorCode::EmptyInput,
          "fuse_modalities: case " + case_id + " has no modality predictions");
  CaseDecision d;
  d.case_id = case_id;
  for (const auto& [name, pred] : per_modality) {
    if (options.subset &&
        std::find(options.subset->begin(), options.subset->end(), name) == options.subset->end())
      continue;
    d.per_modality[name] = pred;
    d.contributing_modalities.push_back(name);
  }
  require(!d.contributing_modalities.empty(), ErrorCode::EmptyInput,
          "fuse_modalities: case " + case_id + " has none of the selected modalities");

  Scores votes{0, 0, 0}, mass{0, 0, 0};
  double total_weight = 0.0;
  for (const auto& [name, pred] : d.per_modality) {
    require(is_subtype(pred.label), ErrorCode::InvalidArgument,
            "fuse_modalities: modality " + name + " predicts N");
    auto it = options.weights.find(name);
    const double w = it == options.weights.end() ? 1.0 : it->second;
    require(w >= 0.0, ErrorCode::InvalidArgument, "fuse_modalities: negative weight for " + name);
    total_weight += w;
    const double strength = w * pred.confidence;
    votes[index_of(pred.label)] += strength;
    const double sub = pred.probs[0] + pred.probs[1] + pred.probs[2];
    for (int c = 0; c < kNumSubtypes; ++c)
      mass[c] += strength * (sub > 0.0 ? pred.probs[c] / sub : 0.0);
  }
  require(total_weight > 0.0, ErrorCode::InvalidArgument,
          "fuse_modalities: all modality weights are zero");
  d.fused = normalized(mass, pick(votes, mass));
  return d;
}

}  // namespace glioma

namespace glioma {

nlohmann::ordered_json prediction_to_json(const Prediction& p) {
  nlohmann::ordered_json j;
  j["label"] = label_name(p.label);
  j["confidence"] = p.confidence;
  nlohmann::ordered_json probs;
  for (auto l : kAllLabels) probs[label_name(l)] = p.probs[index_of(l)];
  j["probs"] = probs;
  return j;
}

Prediction prediction_from_json(const nlohmann::json& j) {
  try {
    std::array<double, 4> probs{};
    for (auto l : kAllLabels) probs[index_of(l)] = j.at("probs").at(label_name(l)).get<double>();
    Prediction p;
    p.probs = probs;
    p.label = parse_label(j.at("label").get<std::string>());
    p.confidence = j.at("confidence").get<double>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Decode, std::string("bad prediction record: ") + e.what());
  }
}

nlohmann::ordered_json case_prediction_to_json(const CasePrediction& c) {
  nlohmann::ordered_json j;
  j["case_id"] = c.case_id;
  j["modality"] = c.modality;
  j["level"] = c.modality == "hist" ? "slide" : "volume";
  j["prediction"] = prediction_to_json(c.aggregate.prediction);
  j["units_total"] = c.units.size();
  j["units_used"] = c.aggregate.units;
  j["dropped_n"] = c.aggregate.dropped_n;
  j["fallback"] = c.aggregate.used_fallback;
  auto& units = j["unit_predictions"] = nlohmann::ordered_json::array();
  for (const auto& u : c.units) units.push_back(prediction_to_json(u));
  return j;
}

CasePrediction case_prediction_from_json(const nlohmann::json& j) {
  try {
    CasePrediction c;
    c.case_id = j.at("case_id").get<std::string>();
    c.modality = j.at("modality").get<std::string>();
    c.aggregate.prediction = prediction_from_json(j.at("prediction"));
    c.aggregate.units = j.at("units_used").get<std::size_t>();
    c.aggregate.dropped_n = j.at("dropped_n").get<std::size_t>();
    c.aggregate.used_fallback = j.at("fallback").get<bool>();
    if (j.contains("unit_predictions"))
      for (const auto& u : j.at("unit_predictions")) c.units.push_back(prediction_from_json(u));
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Decode, std::string("bad case prediction file: ") + e.what());
  }
}

nlohmann::ordered_json case_decision_to_json(const CaseDecision& d) {
  nlohmann::ordered_json j;
  j["case_id"] = d.case_id;
  j["fused"] = prediction_to_json(d.fused);
  j["contributing_modalities"] = d.contributing_modalities;
  auto& per = j["per_modality"] = nlohmann::ordered_json::object();
  for (const auto& [name, p] : d.per_modality) per[name] = prediction_to_json(p);
  return j;
}

}  // namespace glioma
