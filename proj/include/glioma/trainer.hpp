#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "glioma/adam.hpp"
#include "glioma/dcn.hpp"
#include "glioma/manifest.hpp"
#include "glioma/prediction.hpp"

namespace glioma {

struct AugmentFlags {
  bool flip = true;
  bool rotate = true;
  bool scale = true;
  bool crop = true;
  bool continuous_rotation = false;  // any angle instead of right angles

  static AugmentFlags none() { return {false, false, false, false, false}; }
};

struct CurvePoint {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

struct TrainConfig {
  std::string preset = "DCN1";
  int epochs = 300;
  int batch_size = 128;
  float lr = 0.001f;
  double val_fraction = 0.10;
  std::uint64_t seed = 0;
  AugmentFlags augment;
  int input_size = 0;  // 0 keeps the preset's input size
  int threads = 1;
  std::function<void(const CurvePoint&)> on_epoch;  // progress hook

  void validate() const;
};

struct Split {
  std::vector<std::size_t> train;  // indices into the record list
  std::vector<std::size_t> val;
  std::vector<std::string> train_cases;
  std::vector<std::string> val_cases;
};

/// Case-level stratified split. A case's class is the label of its non-N
/// units. Each class sends round(cases·fraction) cases to validation, at least
/// one and never all of them.
Split split_train_val(const std::vector<UnitRecord>& records, double val_fraction,
                      std::uint64_t seed);

// Channel-planar square image, C×S×S.
struct PlanarImage {
  int channels = 1;
  int size = 0;
  std::vector<float> data;
};

PlanarImage rotate90(const PlanarImage& image, int quarter_turns);

/// flip → rotate → scale → crop, each stage drawing from its own stream.
PlanarImage augment(const PlanarImage& image, std::uint64_t seed, const AugmentFlags& flags = {});

// Loads a tile (PNG/PPM) or slice (VOL1) at the requested size.
PlanarImage load_unit_image(const UnitRecord& record, int size, int channels);

struct TrainResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  std::vector<CurvePoint> curves;
  Split split;
  DcnModel model;  // final weights, eval mode
};

struct Dataset {
  std::vector<PlanarImage> images;
  std::vector<ClassLabel> labels;
};

/// Trains on the given split. Writes best.ckpt, final.ckpt, curves.csv,
/// curves.svg and split.json into out_dir.
TrainResult train_on(const TrainConfig& config, const Dataset& data, const Split& split,
                     const std::filesystem::path& out_dir);

TrainResult train(const TrainConfig& config, const std::vector<UnitRecord>& records,
                  const std::filesystem::path& out_dir);

/// Stacks images into an N×C×S×S tensor.
Tensor stack_images(const std::vector<PlanarImage>& images, std::span<const std::size_t> indices);

/// Eval-mode softmax predictions, one per row of `batch`.
std::vector<Prediction> predict_batch(const DcnModel& model, const Tensor& batch);

std::vector<Prediction> predict_images(const DcnModel& model,
                                       const std::vector<PlanarImage>& images,
                                       int batch_size = 64);

}  // namespace glioma
