#include <cmath>
#include <set>

#include "glioma/checkpoint.hpp"
#include "glioma/curves.hpp"
#include "glioma/seed.hpp"
#include "glioma/synthetic.hpp"
#include "glioma/trainer.hpp"
#include "helpers.hpp"

using namespace glioma;

namespace {

std::vector<UnitRecord> units(int cases_per_class, int units_per_case) {
  std::vector<UnitRecord> out;
  int n = 0;
  for (auto label : kSubtypes)
    for (int c = 0; c < cases_per_class; ++c) {
      const auto id = "K" + std::to_string(n++);
      for (int u = 0; u < units_per_case; ++u)
        out.push_back({id, u == 0 ? ClassLabel::N : label, "x.png", ManifestKind::Tiles,
                       Modality::Histology});
    }
  return out;
}

PlanarImage pattern(int channels, int size) {
  PlanarImage img{channels, size, std::vector<float>(static_cast<std::size_t>(channels) * size * size)};
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<float>((i * 37) % 101) / 100.0f;
  return img;
}

TrainConfig tiny_config(int epochs) {
  TrainConfig cfg;
  cfg.preset = "DCN1";
  cfg.input_size = 32;
  cfg.epochs = epochs;
  cfg.batch_size = 8;
  cfg.val_fraction = 0.25;
  cfg.seed = 5;
  cfg.augment = AugmentFlags::none();
  return cfg;
}

// 16 single-image cases (4 per class) of the separable set at 32 px.
std::pair<Dataset, Split> tiny_data() {
  auto data = make_overfit_dataset(16, 32, 1);
  Split split;
  for (std::size_t i = 0; i < 16; ++i) (i < 12 ? split.train : split.val).push_back(i);
  return {data, split};
}

}  // namespace

TEST_CASE("stratified split sends one case per class to validation at 10%") {
  const auto recs = units(10, 3);
  const auto split = split_train_val(recs, 0.1, 3);
  CHECK(split.val_cases.size() == 3);
  CHECK(split.train_cases.size() == 27);
  std::set<ClassLabel> val_classes;
  for (auto i : split.val)
    if (recs[i].label != ClassLabel::N) val_classes.insert(recs[i].label);
  CHECK(val_classes.size() == 3);
  CHECK(split.train.size() + split.val.size() == recs.size());
}

TEST_CASE("split is reproducible and never shares a case") {
  const auto recs = units(5, 4);
  CHECK(split_train_val(recs, 0.2, 9).val == split_train_val(recs, 0.2, 9).val);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = split_train_val(recs, 0.3, seed);
    std::set<std::string> train, val;
    for (auto i : s.train) train.insert(recs[i].case_id);
    for (auto i : s.val) val.insert(recs[i].case_id);
    for (const auto& id : val) CHECK_FALSE(train.count(id));
    CHECK(!val.empty());
  }
}

TEST_CASE("split errors") {
  auto recs = units(3, 1);
  CHECK_ERROR_CODE(split_train_val({}, 0.1, 0), ErrorCode::EmptyInput);
  CHECK_ERROR_CODE(split_train_val(recs, 0.0, 0), ErrorCode::InvalidArgument);
  recs = units(3, 2);
  recs.push_back({"lonely", ClassLabel::G, "x", ManifestKind::Tiles, Modality::Histology});
  for (auto& r : recs)
    if (r.label == ClassLabel::G && r.case_id != "lonely") r.label = ClassLabel::A;
  try {
    split_train_val(recs, 0.1, 0);
    FAIL("expected a stratification error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Stratification);
    CHECK(std::string(e.what()).find("G") != std::string::npos);
  }
}

TEST_CASE("augmentation with every stage off is the identity") {
  const auto img = pattern(3, 16);
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    CHECK(augment(img, seed, AugmentFlags::none()).data == img.data);
}

TEST_CASE("augmentation keeps constant images constant and shapes fixed") {
  PlanarImage flat{3, 20, std::vector<float>(1200, 0.375f)};
  AugmentFlags all;
  all.continuous_rotation = true;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    for (const auto& flags : {AugmentFlags{}, all}) {
      const auto out = augment(flat, seed, flags);
      CHECK(out.channels == 3);
      CHECK(out.size == 20);
      CHECK(out.data == flat.data);
    }
  }
  const auto img = pattern(1, 9);
  const auto out = augment(img, 4);
  CHECK(out.data.size() == img.data.size());
}

TEST_CASE("right-angle rotations form a group") {
  const auto img = pattern(2, 7);
  CHECK(rotate90(rotate90(img, 2), 2).data == img.data);
  CHECK(rotate90(rotate90(rotate90(rotate90(img, 1), 1), 1), 1).data == img.data);
  CHECK(rotate90(img, 3).data == rotate90(img, -1).data);
  CHECK(rotate90(img, 1).data != img.data);
  // quarter turn counter-clockwise moves the top-right corner to the top-left
  CHECK(rotate90(img, 1).data[0] == img.data[6]);
}

TEST_CASE("augmentation is seed-deterministic") {
  const auto img = pattern(3, 16);
  CHECK(augment(img, 12).data == augment(img, 12).data);
  bool any_diff = false;
  for (std::uint64_t s = 0; s < 10 && !any_diff; ++s) any_diff = augment(img, s).data != img.data;
  CHECK(any_diff);
}

TEST_CASE("predictions are distributions and duplicate rows agree") {
  auto cfg = DcnConfig::dcn1();
  cfg.input_size = 32;
  auto model = DcnModel::build(cfg, 1);
  model.set_mode(Mode::Eval);
  const auto img = pattern(3, 32);
  const std::vector<PlanarImage> imgs{img, img, pattern(3, 32)};
  const std::size_t idx[] = {0, 1, 2};
  const auto preds = predict_batch(model, stack_images(imgs, idx));
  REQUIRE(preds.size() == 3);
  for (const auto& p : preds) {
    double s = 0;
    for (double v : p.probs) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-6);
    CHECK(p.confidence == p.probs[index_of(p.label)]);
  }
  CHECK(preds[0].probs == preds[1].probs);
  model.set_mode(Mode::Train);
  CHECK_ERROR_CODE(predict_batch(model, stack_images(imgs, idx)), ErrorCode::InvalidArgument);
  model.set_mode(Mode::Eval);
  CHECK_ERROR_CODE(predict_batch(model, Tensor::zeros({1, 3, 16, 16})), ErrorCode::ShapeMismatch);
}

TEST_CASE("zero learning rate leaves every parameter unchanged") {
  const auto [data, split] = tiny_data();
  auto cfg = tiny_config(2);
  cfg.lr = 0.0f;
  const auto result = train_on(cfg, data, split, scratch_dir("train_lr0"));
  auto dcn = DcnConfig::dcn1();
  dcn.input_size = 32;
  const auto initial = DcnModel::build(dcn, mix_seed(cfg.seed, {hash_string("model")})).parameters();
  const auto trained = result.model.parameters();
  REQUIRE(initial.size() == trained.size());
  for (std::size_t i = 0; i < initial.size(); ++i)
    CHECK(std::equal(initial[i].tensor.data().begin(), initial[i].tensor.data().end(),
                     trained[i].tensor.data().begin()));
}

TEST_CASE("training writes curves, checkpoints and split; reruns are identical") {
  const auto [data, split] = tiny_data();
  auto cfg = tiny_config(3);
  cfg.augment = AugmentFlags{};
  const auto a_dir = scratch_dir("train_a"), b_dir = scratch_dir("train_b");
  const auto a = train_on(cfg, data, split, a_dir);
  cfg.threads = 3;  // worker count must not change anything
  const auto b = train_on(cfg, data, split, b_dir);
  CHECK(a.curves.size() == 3);
  for (const auto& p : a.curves) {
    CHECK(p.train_acc >= 0.0);
    CHECK(p.train_acc <= 1.0);
    CHECK(p.val_acc >= 0.0);
    CHECK(p.val_acc <= 1.0);
  }
  CHECK(read_curves_csv(a_dir / "curves.csv") .size() == 3);
  CHECK(file_bytes(a_dir / "curves.csv") == file_bytes(b_dir / "curves.csv"));
  CHECK(file_bytes(a_dir / "final.ckpt") == file_bytes(b_dir / "final.ckpt"));
  CHECK(file_bytes(a_dir / "best.ckpt") == file_bytes(b_dir / "best.ckpt"));
  CHECK(std::filesystem::exists(a_dir / "split.json"));
  const auto svg = file_bytes(a_dir / "curves.svg");
  CHECK(std::string(svg.begin(), svg.end()).find("Accuracy") != std::string::npos);
  CHECK(load_checkpoint(a_dir / "best.ckpt").model.mode() == Mode::Eval);
}

TEST_CASE("loss on the separable set falls window by window") {
  auto data = make_overfit_dataset(64, 32, 2);
  Split split;
  for (std::size_t i = 0; i < 64; ++i) split.train.push_back(i);
  const auto val = make_overfit_dataset(4, 32, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    data.images.push_back(val.images[i]);
    data.labels.push_back(val.labels[i]);
    split.val.push_back(64 + i);
  }
  auto cfg = tiny_config(20);
  cfg.batch_size = 16;
  const auto r = train_on(cfg, data, split, scratch_dir("train_windows"));
  std::vector<double> window_means;
  for (std::size_t w = 0; w + 5 <= r.curves.size(); w += 5) {
    double m = 0;
    for (std::size_t e = w; e < w + 5; ++e) m += r.curves[e].train_loss;
    window_means.push_back(m / 5);
  }
  for (std::size_t w = 1; w < window_means.size(); ++w)
    CHECK(window_means[w] <= window_means[w - 1]);
  CHECK(r.curves.back().train_loss < 0.1);
}

TEST_CASE("training errors") {
  auto [data, split] = tiny_data();
  auto cfg = tiny_config(1);
  cfg.epochs = 0;
  CHECK_ERROR_CODE(train_on(cfg, data, split, scratch_dir("train_err")), ErrorCode::InvalidArgument);

  cfg = tiny_config(1);
  Dataset one_class = data;
  for (auto& l : one_class.labels) l = ClassLabel::A;
  CHECK_ERROR_CODE(train_on(cfg, one_class, split, scratch_dir("train_err")),
                   ErrorCode::InsufficientSamples);

  Dataset poisoned = data;
  for (auto& v : poisoned.images[0].data) v = NAN;
  try {
    train_on(cfg, poisoned, split, scratch_dir("train_err"));
    FAIL("expected a training error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Training);
    const std::string msg = e.what();
    CHECK(msg.find("epoch 1") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
    CHECK(msg.find("lr") != std::string::npos);
  }
}

TEST_CASE("curves CSV round trip and SVG panels") {
  const auto dir = scratch_dir("curves");
  const std::vector<CurvePoint> pts{{1, 1.25, 0.5, 1.5, 0.25}, {2, 0.75, 0.875, 1.0, 0.5}};
  write_curves_csv(dir / "c.csv", pts);
  CHECK(read_curves_csv(dir / "c.csv") == pts);
  const auto svg = render_curves_svg(pts);
  CHECK(svg.find("Loss") != std::string::npos);
  CHECK(svg.find("Accuracy") != std::string::npos);
  std::size_t polylines = 0;
  for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1))
    ++polylines;
  CHECK(polylines == 4);
  CHECK(render_curves_svg(pts) == svg);
}
