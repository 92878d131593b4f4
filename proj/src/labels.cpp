#include "glioma/labels.hpp"

#include "glioma/error.hpp"

namespace glioma {

ClassLabel label_from_index(int index) {
  require(index >= 0 && index < kNumClasses, ErrorCode::OutOfRange,
          "class index " + std::to_string(index) + " outside [0,4)");
  return static_cast<ClassLabel>(index);
}

char label_char(ClassLabel label) { return "AOGN"[index_of(label)]; }

std::string label_name(ClassLabel label) { return std::string(1, label_char(label)); }

ClassLabel parse_label(std::string_view text) {
  if (text.size() == 1) {
    switch (text[0]) {
      case 'A': return ClassLabel::A;
      case 'O': return ClassLabel::O;
      case 'G': return ClassLabel::G;
      case 'N': return ClassLabel::N;
      default: break;
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown class label '" + std::string(text) + "'");
}

bool is_subtype(ClassLabel label) { return label != ClassLabel::N; }

std::string modality_name(Modality modality) {
  switch (modality) {
    case Modality::Histology: return "hist";
    case Modality::T1w: return "T1w";
    case Modality::T2w: return "T2w";
    case Modality::GdT1w: return "GdT1w";
    case Modality::Flair: return "FLAIR";
  }
  return "unknown";
}

Modality parse_modality(std::string_view text) {
  if (text == "hist" || text == "histology" || text == "Histology") return Modality::Histology;
  if (text == "T1w" || text == "t1w" || text == "T1") return Modality::T1w;
  if (text == "T2w" || text == "t2w" || text == "T2") return Modality::T2w;
  if (text == "GdT1w" || text == "Gd-T1w" || text == "gdt1w" || text == "T1Gd") return Modality::GdT1w;
  if (text == "FLAIR" || text == "flair" || text == "Flair") return Modality::Flair;
  fail(ErrorCode::InvalidArgument, "unknown modality '" + std::string(text) + "'");
}

}  // namespace glioma
