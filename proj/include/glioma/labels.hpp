#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace glioma {

// Global class order used for every label↔index mapping.
enum class ClassLabel : int { A = 0, O = 1, G = 2, N = 3 };

inline constexpr int kNumClasses = 4;
inline constexpr int kNumSubtypes = 3;  // A, O, G
inline constexpr std::array<ClassLabel, 4> kAllLabels{ClassLabel::A, ClassLabel::O, ClassLabel::G,
                                                      ClassLabel::N};
inline constexpr std::array<ClassLabel, 3> kSubtypes{ClassLabel::A, ClassLabel::O, ClassLabel::G};

constexpr int index_of(ClassLabel label) { return static_cast<int>(label); }
ClassLabel label_from_index(int index);
char label_char(ClassLabel label);
std::string label_name(ClassLabel label);
ClassLabel parse_label(std::string_view text);
bool is_subtype(ClassLabel label);

enum class Modality { Histology, T1w, T2w, GdT1w, Flair };

std::string modality_name(Modality modality);
Modality parse_modality(std::string_view text);

}  // namespace glioma
