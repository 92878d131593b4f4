#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "glioma/labels.hpp"

namespace glioma {

// rows = truth (A, O, G), cols = predicted
using Confusion = std::array<std::array<std::int64_t, 3>, 3>;

struct F1Scores {
  double micro = 0.0;
  double macro = 0.0;
};

struct EvalReport {
  Confusion confusion{};
  double f1_micro = 0.0;
  double f1_macro = 0.0;
  double kappa = 0.0;
  double balanced_accuracy = 0.0;
  std::int64_t n_cases = 0;
};

Confusion confusion_matrix(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred);

/// Per-class F1 = 2PR/(P+R), zero when P+R = 0. Macro averages the three
/// classes; micro is trace/n.
F1Scores f1_scores(const Confusion& confusion);

/// (p_o − p_e)/(1 − p_e); when p_e = 1 the result is 1 if p_o = 1, else 0.
double cohens_kappa(const Confusion& confusion);

/// Mean recall over the classes present in the truth.
double balanced_accuracy(const Confusion& confusion);

EvalReport evaluate(const Confusion& confusion);

}  // namespace glioma

namespace glioma {

struct CaseLabel {
  std::string case_id;
  ClassLabel label = ClassLabel::A;
};

// CSV "case_id,label".
std::vector<CaseLabel> read_case_labels(const std::filesystem::path& path);
void write_case_labels(const std::filesystem::path& path, const std::vector<CaseLabel>& rows);

// Truth/prediction pairs matched by case id; every predicted case needs a truth.
EvalReport evaluate_cases(const std::vector<CaseLabel>& truth, const std::vector<CaseLabel>& pred);

nlohmann::ordered_json report_to_json(const EvalReport& report);

}  // namespace glioma
