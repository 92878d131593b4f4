// Writes a small synthetic cohort (slides, MRI volumes, labels, positivity).
#include <iostream>

#include <CLI11.hpp>

#include "glioma/error.hpp"
#include "glioma/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic glioma cohort", "glioma_synth"};
  std::string out;
  glioma::CohortOptions opts;
  std::string modality = "T2w";
  app.add_option("--out-dir", out, "Cohort directory")->required();
  app.add_option("--cases-per-class", opts.cases_per_class, "Cases per class");
  app.add_option("--tile-size", opts.tile_size, "Tile edge in pixels");
  app.add_option("--volume-size", opts.volume_size, "In-plane volume size");
  app.add_option("--modality", modality, "MRI modality name");
  app.add_option("--seed", opts.seed, "Random seed")->envname("GLIOMA_SEED");
  CLI11_PARSE(app, argc, argv);
  try {
    opts.modality = glioma::parse_modality(modality);
    const auto cases = glioma::write_synthetic_cohort(out, opts);
    std::cout << "wrote " << cases.size() << " cases to " << out << '\n';
  } catch (const glioma::Error& e) {
    std::cerr << "error: " << glioma::error_code_name(e.code()) << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
