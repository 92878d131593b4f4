#pragma once

#include <array>

#include "glioma/labels.hpp"

namespace glioma {

// Probabilities over (A, O, G, N). Aggregated predictions carry zero N mass.
struct Prediction {
  std::array<double, 4> probs{0.25, 0.25, 0.25, 0.25};
  ClassLabel label = ClassLabel::A;
  double confidence = 0.25;

  /// label = first maximal entry in class order, confidence = its probability.
  static Prediction from_probs(const std::array<double, 4>& probs);
};

}  // namespace glioma
