#include "glioma/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include "glioma/checkpoint.hpp"
#include "glioma/curves.hpp"
#include "glioma/error.hpp"
#include "glioma/image.hpp"
#include "glioma/ops.hpp"
#include "glioma/parallel.hpp"
#include "glioma/seed.hpp"
#include "glioma/volume.hpp"

namespace glioma {

void TrainConfig::validate() const {
  require(epochs >= 1, ErrorCode::InvalidArgument, "epochs must be >= 1");
  require(batch_size >= 2, ErrorCode::InvalidArgument, "batch_size must be >= 2");
  require(val_fraction > 0.0 && val_fraction < 1.0, ErrorCode::InvalidArgument,
          "val_fraction must lie in (0, 1)");
  require(std::isfinite(lr) && lr >= 0.0f, ErrorCode::InvalidArgument,
          "learning rate must be finite and >= 0");
  require(input_size >= 0, ErrorCode::InvalidArgument, "input_size must be >= 0");
}

Split split_train_val(const std::vector<UnitRecord>& records, double val_fraction,
                      std::uint64_t seed) {
  require(!records.empty(), ErrorCode::EmptyInput, "split_train_val: no records");
  require(val_fraction > 0.0 && val_fraction < 1.0, ErrorCode::InvalidArgument,
          "val_fraction must lie in (0, 1)");

  std::map<std::string, ClassLabel> case_class;
  std::set<std::string> all_cases;
  for (const auto& r : records) {
    all_cases.insert(r.case_id);
    if (r.label == ClassLabel::N) continue;
    auto [it, inserted] = case_class.emplace(r.case_id, r.label);
    require(inserted || it->second == r.label, ErrorCode::InvalidArgument,
            "case " + r.case_id + " carries both " + label_name(it->second) + " and " +
                label_name(r.label) + " units");
  }

  std::map<ClassLabel, std::vector<std::string>> by_class;
  for (const auto& [id, label] : case_class) by_class[label].push_back(id);

  std::vector<std::string> lonely;
  for (const auto& [label, cases] : by_class)
    if (cases.size() < 2) lonely.push_back(label_name(label));
  if (!lonely.empty()) {
    std::string list;
    for (const auto& l : lonely) list += (list.empty() ? "" : ", ") + l;
    fail(ErrorCode::Stratification,
         "cannot stratify: class(es) " + list + " have a single case");
  }

  std::set<std::string> val_cases;
  for (auto& [label, cases] : by_class) {
    std::mt19937_64 rng(mix_seed(seed, {hash_string("split"), static_cast<std::uint64_t>(label)}));
    std::shuffle(cases.begin(), cases.end(), rng);
    const auto count = static_cast<long>(cases.size());
    const long n_val = std::clamp(std::lround(static_cast<double>(count) * val_fraction), 1L,
                                  count - 1);
    val_cases.insert(cases.begin(), cases.begin() + n_val);
  }

  Split split;
  for (std::size_t i = 0; i < records.size(); ++i)
    (val_cases.count(records[i].case_id) ? split.val : split.train).push_back(i);
  for (const auto& id : all_cases)
    (val_cases.count(id) ? split.val_cases : split.train_cases).push_back(id);
  return split;
}

namespace {

float sample_clamped(const float* plane, int size, double fx, double fy) {
  fx = std::clamp(fx, 0.0, static_cast<double>(size - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(size - 1));
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, size - 1), y1 = std::min(y0 + 1, size - 1);
  const double wx = fx - x0, wy = fy - y0;
  const double top = plane[y0 * size + x0] * (1 - wx) + plane[y0 * size + x1] * wx;
  const double bot = plane[y1 * size + x0] * (1 - wx) + plane[y1 * size + x1] * wx;
  return static_cast<float>(top * (1 - wy) + bot * wy);
}

// out(x, y) = in(map(x, y)) for every plane, sampling with edge clamping.
template <class Map>
PlanarImage remap(const PlanarImage& in, Map&& map) {
  PlanarImage out = in;
  const int s = in.size;
  const auto plane = static_cast<std::size_t>(s) * s;
  for (int c = 0; c < in.channels; ++c) {
    const float* src = in.data.data() + c * plane;
    float* dst = out.data.data() + c * plane;
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const auto [fx, fy] = map(x, y);
        dst[y * s + x] = sample_clamped(src, s, fx, fy);
      }
  }
  return out;
}

PlanarImage flip(const PlanarImage& in, bool horizontal, bool vertical) {
  PlanarImage out = in;
  const int s = in.size;
  const auto plane = static_cast<std::size_t>(s) * s;
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const int sx = horizontal ? s - 1 - x : x;
        const int sy = vertical ? s - 1 - y : y;
        out.data[c * plane + y * s + x] = in.data[c * plane + sy * s + sx];
      }
  return out;
}

}  // namespace

PlanarImage rotate90(const PlanarImage& in, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return in;
  PlanarImage out = in;
  const int s = in.size;
  const auto plane = static_cast<std::size_t>(s) * s;
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        int sx = x, sy = y;
        if (k == 1) {  // counter-clockwise
          sx = s - 1 - y;
          sy = x;
        } else if (k == 2) {
          sx = s - 1 - x;
          sy = s - 1 - y;
        } else {
          sx = y;
          sy = s - 1 - x;
        }
        out.data[c * plane + y * s + x] = in.data[c * plane + sy * s + sx];
      }
  return out;
}

PlanarImage augment(const PlanarImage& image, std::uint64_t seed, const AugmentFlags& flags) {
  require(image.size > 0 &&
              image.data.size() == static_cast<std::size_t>(image.channels) * image.size * image.size,
          ErrorCode::ShapeMismatch, "augment: image must be square C×S×S");
  PlanarImage out = image;
  const double center = (image.size - 1) / 2.0;

  if (flags.flip) {
    std::mt19937_64 rng(mix_seed(seed, {1}));
    std::bernoulli_distribution coin(0.5);
    const bool h = coin(rng);
    const bool v = coin(rng);
    out = flip(out, h, v);
  }
  if (flags.rotate) {
    std::mt19937_64 rng(mix_seed(seed, {2}));
    if (flags.continuous_rotation) {
      const double angle = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
      const double cs = std::cos(angle), sn = std::sin(angle);
      out = remap(out, [&](int x, int y) {
        const double dx = x - center, dy = y - center;
        return std::pair{center + cs * dx + sn * dy, center - sn * dx + cs * dy};
      });
    } else {
      out = rotate90(out, std::uniform_int_distribution<int>(0, 3)(rng));
    }
  }
  if (flags.scale) {
    std::mt19937_64 rng(mix_seed(seed, {3}));
    const double factor = std::uniform_real_distribution<double>(0.9, 1.1)(rng);
    out = remap(out, [&](int x, int y) {
      return std::pair{center + (x - center) / factor, center + (y - center) / factor};
    });
  }
  if (flags.crop) {
    std::mt19937_64 rng(mix_seed(seed, {4}));
    const int side = std::max(1, static_cast<int>(std::lround(image.size * std::sqrt(0.9))));
    const int x0 = std::uniform_int_distribution<int>(0, image.size - side)(rng);
    const int y0 = std::uniform_int_distribution<int>(0, image.size - side)(rng);
    const double step = static_cast<double>(side) / image.size;
    out = remap(out, [&](int x, int y) {
      return std::pair{x0 + (x + 0.5) * step - 0.5, y0 + (y + 0.5) * step - 0.5};
    });
  }
  return out;
}

PlanarImage load_unit_image(const UnitRecord& record, int size, int channels) {
  PlanarImage img;
  img.size = size;
  if (record.kind == ManifestKind::Tiles) {
    const auto raster = read_image(record.image_path);
    img.channels = raster.channels;
    img.data = to_planar(raster, size);
  } else {
    const auto vol = read_volume(record.image_path);
    require(vol.dims[2] == 1, ErrorCode::ShapeMismatch,
            record.image_path.string() + ": slice file must hold a single plane");
    img.channels = 1;
    img.data = resize_bilinear(vol.data, static_cast<int>(vol.dims[1]),
                               static_cast<int>(vol.dims[0]), size, size);
  }
  require(img.channels == channels, ErrorCode::ShapeMismatch,
          record.image_path.string() + ": expected " + std::to_string(channels) +
              " channel(s), got " + std::to_string(img.channels));
  return img;
}

Tensor stack_images(const std::vector<PlanarImage>& images, std::span<const std::size_t> indices) {
  require(!indices.empty(), ErrorCode::EmptyInput, "stack_images: no images");
  const auto& first = images.at(indices[0]);
  const auto per = first.data.size();
  std::vector<float> data;
  data.reserve(per * indices.size());
  for (auto i : indices) {
    const auto& img = images.at(i);
    require(img.channels == first.channels && img.size == first.size, ErrorCode::ShapeMismatch,
            "stack_images: images differ in shape");
    data.insert(data.end(), img.data.begin(), img.data.end());
  }
  return Tensor({static_cast<std::int64_t>(indices.size()), first.channels, first.size, first.size},
                std::move(data));
}

std::vector<Prediction> predict_batch(const DcnModel& model, const Tensor& batch) {
  require(model.mode() == Mode::Eval, ErrorCode::InvalidArgument,
          "predict_batch: model must be in eval mode");
  NoGradGuard guard;
  const auto probs = softmax(model.infer(batch));
  const auto k = probs.dim(1);
  require(k == kNumClasses, ErrorCode::ShapeMismatch, "predict_batch: model must have 4 outputs");
  std::vector<Prediction> out;
  out.reserve(static_cast<std::size_t>(probs.dim(0)));
  const auto p = probs.data();
  for (std::int64_t n = 0; n < probs.dim(0); ++n) {
    std::array<double, 4> row{};
    for (int c = 0; c < kNumClasses; ++c) row[c] = p[n * k + c];
    out.push_back(Prediction::from_probs(row));
  }
  return out;
}

std::vector<Prediction> predict_images(const DcnModel& model,
                                       const std::vector<PlanarImage>& images, int batch_size) {
  std::vector<Prediction> out;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(images.size(), start + batch_size); ++i)
      idx.push_back(i);
    auto preds = predict_batch(model, stack_images(images, idx));
    out.insert(out.end(), preds.begin(), preds.end());
  }
  return out;
}

namespace {

struct EvalStats {
  double loss = 0.0;
  double acc = 0.0;
};

EvalStats evaluate_split(const DcnModel& model, const Dataset& data,
                         const std::vector<std::size_t>& indices, int batch_size) {
  NoGradGuard guard;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto end = std::min(indices.size(), start + batch_size);
    std::span<const std::size_t> idx(indices.data() + start, end - start);
    const auto logits = model.infer(stack_images(data.images, idx));
    std::vector<int> labels;
    for (auto i : idx) labels.push_back(index_of(data.labels[i]));
    loss += cross_entropy_loss(logits, labels).item() * static_cast<double>(idx.size());
    const auto l = logits.data();
    const auto k = logits.dim(1);
    for (std::size_t n = 0; n < idx.size(); ++n) {
      const auto row = l.subspan(n * k, k);
      if (std::max_element(row.begin(), row.end()) - row.begin() == labels[n]) ++correct;
    }
  }
  const auto n = static_cast<double>(indices.size());
  return {loss / n, static_cast<double>(correct) / n};
}

void save_eval(DcnModel& model, const AdamState& adam, const std::filesystem::path& path) {
  const auto mode = model.mode();
  model.set_mode(Mode::Eval);
  save_checkpoint(model, adam, path);
  model.set_mode(mode);
}

void write_split_json(const std::filesystem::path& path, const Split& split, std::uint64_t seed,
                      double fraction) {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["val_fraction"] = fraction;
  j["train_cases"] = split.train_cases;
  j["val_cases"] = split.val_cases;
  j["train_units"] = split.train.size();
  j["val_units"] = split.val.size();
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

TrainResult train_on(const TrainConfig& config, const Dataset& data, const Split& split,
                     const std::filesystem::path& out_dir) {
  config.validate();
  auto dcn = DcnConfig::preset(config.preset);
  if (config.input_size > 0) dcn.input_size = config.input_size;
  dcn.validate();
  require(data.images.size() == data.labels.size(), ErrorCode::ShapeMismatch,
          "dataset images and labels differ in length");
  require(!split.train.empty() && !split.val.empty(), ErrorCode::EmptyInput,
          "training and validation sets must both be nonempty");

  std::set<ClassLabel> present, in_train;
  for (auto l : data.labels) present.insert(l);
  for (auto i : split.train) in_train.insert(data.labels.at(i));
  require(present.size() >= 2, ErrorCode::InsufficientSamples,
          "training needs at least two classes in the manifest");
  for (auto l : present)
    require(in_train.count(l), ErrorCode::InsufficientSamples,
            "class " + label_name(l) + " is empty in the training split");
  for (auto i : split.train) {
    const auto& img = data.images[i];
    require(img.channels == dcn.in_channels && img.size == dcn.input_size, ErrorCode::ShapeMismatch,
            "training image " + std::to_string(i) + " is " + std::to_string(img.channels) + "×" +
                std::to_string(img.size) + "², the model expects " +
                std::to_string(dcn.in_channels) + "×" + std::to_string(dcn.input_size) + "²");
  }

  std::filesystem::create_directories(out_dir);
  TrainResult result;
  result.split = split;
  result.best_checkpoint = out_dir / "best.ckpt";
  result.final_checkpoint = out_dir / "final.ckpt";

  auto model = DcnModel::build(dcn, mix_seed(config.seed, {hash_string("model")}));
  auto params = model.parameter_tensors();
  auto adam = AdamState::for_params(params, config.lr);
  double best_val = -1.0;

  std::vector<std::size_t> order = split.train;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    order = split.train;
    std::mt19937_64 rng(mix_seed(config.seed, {hash_string("epoch"), static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);

    model.set_mode(Mode::Train);
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      if (end - start < 2) continue;  // single-sample batch norm is undefined
      std::vector<PlanarImage> batch(end - start);
      std::vector<int> labels(end - start);
      parallel_for(batch.size(), config.threads, [&](std::size_t b) {
        const auto i = order[start + b];
        batch[b] = augment(data.images[i],
                           mix_seed(config.seed, {hash_string("augment"),
                                                  static_cast<std::uint64_t>(epoch), i}),
                           config.augment);
        labels[b] = index_of(data.labels[i]);
      });
      std::vector<std::size_t> all(batch.size());
      for (std::size_t b = 0; b < all.size(); ++b) all[b] = b;

      auto diverged = [&](const std::string& detail) {
        fail(ErrorCode::Training, "non-finite loss at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(batch_index) + ", lr " +
                                      std::to_string(config.lr) + detail);
      };
      model.zero_grad();
      Tensor logits, loss;
      try {
        logits = model.forward(stack_images(batch, all));
        loss = cross_entropy_loss(logits, labels);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFinite) throw;
        diverged(std::string(" (") + e.what() + ")");
      }
      const double value = loss.item();
      if (!std::isfinite(value)) diverged("");
      loss.backward();
      adam_step(params, adam);

      loss_sum += value * static_cast<double>(batch.size());
      seen += batch.size();
      const auto l = logits.data();
      const auto k = logits.dim(1);
      for (std::size_t n = 0; n < batch.size(); ++n) {
        const auto row = l.subspan(n * k, k);
        if (std::max_element(row.begin(), row.end()) - row.begin() == labels[n]) ++correct;
      }
    }
    require(seen > 0, ErrorCode::InsufficientSamples, "no usable training batch");

    model.set_mode(Mode::Eval);
    const auto val = evaluate_split(model, data, split.val, config.batch_size);
    result.curves.push_back({epoch, loss_sum / static_cast<double>(seen),
                             static_cast<double>(correct) / static_cast<double>(seen), val.loss,
                             val.acc});
    if (config.on_epoch) config.on_epoch(result.curves.back());
    if (val.acc > best_val) {
      best_val = val.acc;
      save_eval(model, adam, result.best_checkpoint);
    }
  }

  model.set_mode(Mode::Eval);
  save_checkpoint(model, adam, result.final_checkpoint);
  write_curves_csv(out_dir / "curves.csv", result.curves);
  write_curves_svg(out_dir / "curves.svg", result.curves);
  write_split_json(out_dir / "split.json", split, config.seed, config.val_fraction);
  result.model = std::move(model);
  return result;
}

TrainResult train(const TrainConfig& config, const std::vector<UnitRecord>& records,
                  const std::filesystem::path& out_dir) {
  config.validate();
  auto dcn = DcnConfig::preset(config.preset);
  if (config.input_size > 0) dcn.input_size = config.input_size;
  const auto split = split_train_val(records, config.val_fraction, config.seed);

  Dataset data;
  data.images.resize(records.size());
  data.labels.resize(records.size());
  parallel_for(records.size(), config.threads, [&](std::size_t i) {
    data.images[i] = load_unit_image(records[i], dcn.input_size, dcn.in_channels);
    data.labels[i] = records[i].label;
  });
  return train_on(config, data, split, out_dir);
}

}  // namespace glioma
