#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "glioma/trainer.hpp"

namespace glioma {

// epoch,train_loss,train_acc,val_loss,val_acc
void write_curves_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curves);
std::vector<CurvePoint> read_curves_csv(const std::filesystem::path& path);

/// Two side-by-side panels: loss and accuracy against epoch, train and val.
std::string render_curves_svg(const std::vector<CurvePoint>& curves);
void write_curves_svg(const std::filesystem::path& path, const std::vector<CurvePoint>& curves);

}  // namespace glioma
