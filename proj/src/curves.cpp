#include "glioma/curves.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "glioma/error.hpp"

namespace glioma {

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

void write_curves_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curves) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& p : curves)
    out << p.epoch << ',' << fmt("%.9g", p.train_loss) << ',' << fmt("%.9g", p.train_acc) << ','
        << fmt("%.9g", p.val_loss) << ',' << fmt("%.9g", p.val_acc) << '\n';
}

std::vector<CurvePoint> read_curves_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  require(std::getline(in, line) && line.rfind("epoch,train_loss,train_acc,val_loss,val_acc", 0) == 0,
          ErrorCode::Decode, path.string() + ": missing curves header");
  std::vector<CurvePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    CurvePoint p;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf%c", &p.epoch, &p.train_loss, &p.train_acc,
                    &p.val_loss, &p.val_acc, &tail) != 5)
      fail(ErrorCode::Decode, path.string() + ": bad curves row '" + line + "'");
    out.push_back(p);
  }
  return out;
}

namespace {

struct Series {
  const char* name;
  const char* color;
  bool dashed;
  double CurvePoint::*field;
};

void panel(std::ostringstream& svg, const std::vector<CurvePoint>& curves, double x0,
           const char* title, const Series (&series)[2], bool unit_range) {
  constexpr double w = 360, h = 260, top = 40, left = 50;
  double lo = 0.0, hi = 1.0;
  if (!unit_range) {
    hi = 0.0;
    for (const auto& p : curves)
      for (const auto& s : series) hi = std::max(hi, p.*(s.field));
    if (hi <= 0.0) hi = 1.0;
  }
  const int first = curves.empty() ? 0 : curves.front().epoch;
  const int last = curves.empty() ? 1 : std::max(curves.back().epoch, first + 1);
  auto px = [&](double epoch) { return x0 + left + (epoch - first) / (last - first) * w; };
  auto py = [&](double v) { return top + h - (std::clamp(v, lo, hi) - lo) / (hi - lo) * h; };

  svg << "<g>\n<text x=\"" << fmt("%.1f", x0 + left + w / 2) << "\" y=\"24\" text-anchor=\"middle\">"
      << title << "</text>\n";
  svg << "<rect x=\"" << fmt("%.1f", x0 + left) << "\" y=\"" << fmt("%.1f", top) << "\" width=\""
      << fmt("%.1f", w) << "\" height=\"" << fmt("%.1f", h)
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    svg << "<text x=\"" << fmt("%.1f", x0 + left - 6) << "\" y=\"" << fmt("%.1f", py(v) + 4)
        << "\" text-anchor=\"end\" font-size=\"10\">" << fmt("%.3g", v) << "</text>\n";
  }
  svg << "<text x=\"" << fmt("%.1f", x0 + left) << "\" y=\"" << fmt("%.1f", top + h + 16)
      << "\" font-size=\"10\">" << first << "</text>\n";
  svg << "<text x=\"" << fmt("%.1f", x0 + left + w) << "\" y=\"" << fmt("%.1f", top + h + 16)
      << "\" text-anchor=\"end\" font-size=\"10\">" << last << "</text>\n";
  svg << "<text x=\"" << fmt("%.1f", x0 + left + w / 2) << "\" y=\"" << fmt("%.1f", top + h + 30)
      << "\" text-anchor=\"middle\" font-size=\"11\">epoch</text>\n";

  for (std::size_t k = 0; k < 2; ++k) {
    const auto& s = series[k];
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
        << (s.dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
    for (std::size_t i = 0; i < curves.size(); ++i)
      svg << (i ? " " : "") << fmt("%.2f", px(curves[i].epoch)) << ','
          << fmt("%.2f", py(curves[i].*(s.field)));
    svg << "\"/>\n";
    const double ly = top + 14 + 14.0 * static_cast<double>(k);
    svg << "<text x=\"" << fmt("%.1f", x0 + left + w - 8) << "\" y=\"" << fmt("%.1f", ly)
        << "\" text-anchor=\"end\" font-size=\"10\" fill=\"" << s.color << "\">" << s.name
        << "</text>\n";
  }
  svg << "</g>\n";
}

}  // namespace

std::string render_curves_svg(const std::vector<CurvePoint>& curves) {
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"860\" height=\"340\" "
         "font-family=\"sans-serif\">\n";
  svg << "<rect width=\"860\" height=\"340\" fill=\"white\"/>\n";
  const Series loss[2] = {{"train loss", "#1f77b4", false, &CurvePoint::train_loss},
                          {"val loss", "#d62728", true, &CurvePoint::val_loss}};
  const Series acc[2] = {{"train acc", "#1f77b4", false, &CurvePoint::train_acc},
                         {"val acc", "#d62728", true, &CurvePoint::val_acc}};
  panel(svg, curves, 0, "Loss", loss, false);
  panel(svg, curves, 430, "Accuracy", acc, true);
  svg << "</svg>\n";
  return svg.str();
}

void write_curves_svg(const std::filesystem::path& path, const std::vector<CurvePoint>& curves) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out << render_curves_svg(curves);
}

}  // namespace glioma
