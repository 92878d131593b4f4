#include "glioma/metrics.hpp"

#include <fstream>
#include <map>
#include <set>

#include "glioma/error.hpp"

namespace glioma {

namespace {

std::int64_t total(const Confusion& m) {
  std::int64_t n = 0;
  for (const auto& row : m)
    for (auto v : row) {
      require(v >= 0, ErrorCode::InvalidArgument, "confusion matrix has a negative entry");
      n += v;
    }
  require(n > 0, ErrorCode::EmptyInput, "confusion matrix is empty");
  return n;
}

}  // namespace

Confusion confusion_matrix(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred) {
  require(truth.size() == pred.size(), ErrorCode::ShapeMismatch,
          "confusion_matrix: " + std::to_string(truth.size()) + " truth labels vs " +
              std::to_string(pred.size()) + " predictions");
  require(!truth.empty(), ErrorCode::EmptyInput, "confusion_matrix: no cases");
  Confusion m{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(is_subtype(truth[i]) && is_subtype(pred[i]), ErrorCode::InvalidArgument,
            "confusion_matrix: labels must be A, O or G");
    ++m[index_of(truth[i])][index_of(pred[i])];
  }
  return m;
}

F1Scores f1_scores(const Confusion& m) {
  const auto n = total(m);
  F1Scores f;
  std::int64_t trace = 0;
  for (int c = 0; c < 3; ++c) {
    trace += m[c][c];
    std::int64_t row = 0, col = 0;
    for (int k = 0; k < 3; ++k) {
      row += m[c][k];
      col += m[k][c];
    }
    const double tp = static_cast<double>(m[c][c]);
    const double precision = col > 0 ? tp / static_cast<double>(col) : 0.0;
    const double recall = row > 0 ? tp / static_cast<double>(row) : 0.0;
    const double denom = precision + recall;
    f.macro += denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
  }
  f.macro /= 3.0;
  f.micro = static_cast<double>(trace) / static_cast<double>(n);
  return f;
}

double cohens_kappa(const Confusion& m) {
  const double n = static_cast<double>(total(m));
  double po = 0.0, pe = 0.0;
  for (int c = 0; c < 3; ++c) {
    po += static_cast<double>(m[c][c]);
    double row = 0.0, col = 0.0;
    for (int k = 0; k < 3; ++k) {
      row += static_cast<double>(m[c][k]);
      col += static_cast<double>(m[k][c]);
    }
    pe += row * col;
  }
  po /= n;
  pe /= n * n;
  if (pe == 1.0) return po == 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

double balanced_accuracy(const Confusion& m) {
  total(m);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < 3; ++c) {
    std::int64_t row = 0;
    for (int k = 0; k < 3; ++k) row += m[c][k];
    if (row == 0) continue;
    sum += static_cast<double>(m[c][c]) / static_cast<double>(row);
    ++present;
  }
  return sum / present;
}

EvalReport evaluate(const Confusion& m) {
  EvalReport r;
  r.confusion = m;
  r.n_cases = total(m);
  const auto f1 = f1_scores(m);
  r.f1_micro = f1.micro;
  r.f1_macro = f1.macro;
  r.kappa = cohens_kappa(m);
  r.balanced_accuracy = balanced_accuracy(m);
  return r;
}

}  // namespace glioma

namespace glioma {

std::vector<CaseLabel> read_case_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open " + path.string());
  std::vector<CaseLabel> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      require(line == "case_id,label", ErrorCode::Decode,
              path.string() + ": expected header 'case_id,label'");
      continue;
    }
    const auto comma = line.find(',');
    require(comma != std::string::npos && comma > 0, ErrorCode::Decode,
            path.string() + ": bad row '" + line + "'");
    rows.push_back({line.substr(0, comma), parse_label(line.substr(comma + 1))});
  }
  return rows;
}

void write_case_labels(const std::filesystem::path& path, const std::vector<CaseLabel>& rows) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out << "case_id,label\n";
  for (const auto& r : rows) out << r.case_id << ',' << label_char(r.label) << '\n';
}

EvalReport evaluate_cases(const std::vector<CaseLabel>& truth, const std::vector<CaseLabel>& pred) {
  std::map<std::string, ClassLabel> truth_by_case;
  for (const auto& t : truth) {
    const bool fresh = truth_by_case.emplace(t.case_id, t.label).second;
    require(fresh, ErrorCode::InvalidArgument, "duplicate truth row for case " + t.case_id);
  }
  std::vector<ClassLabel> t, p;
  std::set<std::string> seen;
  for (const auto& row : pred) {
    auto it = truth_by_case.find(row.case_id);
    require(it != truth_by_case.end(), ErrorCode::InvalidArgument,
            "no truth label for predicted case " + row.case_id);
    require(seen.insert(row.case_id).second, ErrorCode::InvalidArgument,
            "duplicate prediction for case " + row.case_id);
    t.push_back(it->second);
    p.push_back(row.label);
  }
  return evaluate(confusion_matrix(t, p));
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["confusion"] = r.confusion;
  j["f1_micro"] = r.f1_micro;
  j["f1_macro"] = r.f1_macro;
  j["kappa"] = r.kappa;
  j["balanced_accuracy"] = r.balanced_accuracy;
  j["n_cases"] = r.n_cases;
  return j;
}

}  // namespace glioma
