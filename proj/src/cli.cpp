#include "glioma/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "glioma/checkpoint.hpp"
#include "glioma/curves.hpp"
#include "glioma/dcn.hpp"
#include "glioma/ensemble.hpp"
#include "glioma/error.hpp"
#include "glioma/gradcheck.hpp"
#include "glioma/histo.hpp"
#include "glioma/metrics.hpp"
#include "glioma/ops.hpp"
#include "glioma/parallel.hpp"
#include "glioma/radio.hpp"
#include "glioma/seed.hpp"
#include "glioma/trainer.hpp"

namespace glioma {

namespace fs = std::filesystem;

namespace {

constexpr const char* kSubcommands[] = {"extract-tiles", "extract-slices", "train",
                                        "predict",       "fuse",           "evaluate",
                                        "plot-curves",   "gradcheck",      "selftest"};

std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

void require_exists(const fs::path& path, const std::string& what) {
  require(fs::exists(path), ErrorCode::Io, what + " not found: " + path.string());
}

fs::path find_input(const fs::path& dir, const std::string& stem,
                    std::initializer_list<const char*> extensions) {
  for (const char* ext : extensions) {
    auto p = dir / (stem + ext);
    if (fs::exists(p)) return p;
  }
  fail(ErrorCode::Io, "no input file for " + stem + " in " + dir.string());
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path manifest_dir(const fs::path& manifest) {
  auto dir = manifest.parent_path();
  return dir.empty() ? fs::path(".") : dir;
}

// ---- extract-tiles ---------------------------------------------------------

struct ExtractTilesArgs {
  std::string slide_dir, labels_csv, out_manifest, quota_table;
  double resolution = 0.25;
  int tile_size = kDefaultTileSize;
  int balance = 0;
};

void run_extract_tiles(const ExtractTilesArgs& a, std::uint64_t seed, int threads) {
  require_exists(a.slide_dir, "slide directory");
  require_exists(a.labels_csv, "labels CSV");
  const auto quotas =
      a.quota_table.empty() ? QuotaTable::defaults() : QuotaTable::read_csv(a.quota_table);
  const auto out_dir = manifest_dir(a.out_manifest);
  ExtractOptions opts;
  opts.tile_size = a.tile_size;
  opts.seed = seed;
  opts.threads = threads;

  std::vector<TileRecord> records;
  for (const auto& row : read_case_labels(a.labels_csv)) {
    const auto path = find_input(a.slide_dir, row.case_id, {".png", ".ppm"});
    Slide slide{row.case_id, path.string(), read_image(path), a.resolution};
    auto tiles = extract_tiles(slide, row.label, quotas.quota(a.resolution, row.label), opts);
    std::size_t n_tiles = 0;
    for (auto& t : tiles) {
      t.record.tile_path = "tiles/" + t.record.tile_path;
      const auto dest = out_dir / t.record.tile_path;
      fs::create_directories(dest.parent_path());
      write_png(t.pixels, dest);
      records.push_back(t.record);
      n_tiles += t.record.label == ClassLabel::N ? 0 : 1;
    }
    spdlog::info("{}: {} tiles ({} positive)", row.case_id, tiles.size(), n_tiles);
  }
  if (a.balance > 0) {
    ClassTargets targets;
    for (auto l : kAllLabels) targets[l] = a.balance;
    records = balance_manifest(records, targets, seed, BalanceMode::DownsampleLargest);
  }
  write_tile_manifest(a.out_manifest, records);
  spdlog::info("wrote {} tile records to {}", records.size(), a.out_manifest);
}

// ---- extract-slices --------------------------------------------------------

struct ExtractSlicesArgs {
  std::string volume_dir, labels_csv, positivity_csv, modality = "T2w", out_manifest;
  int input_size = 224;
  int balance = 0;
};

void run_extract_slices(const ExtractSlicesArgs& a, std::uint64_t seed) {
  require_exists(a.volume_dir, "volume directory");
  require_exists(a.labels_csv, "labels CSV");
  require_exists(a.positivity_csv, "positivity CSV");
  const auto modality = parse_modality(a.modality);
  require(modality != Modality::Histology, ErrorCode::InvalidArgument,
          "extract-slices needs an MRI modality");
  const auto positivity = read_positivity_csv(a.positivity_csv);
  const auto out_dir = manifest_dir(a.out_manifest);
  SliceOptions opts;
  opts.input_size = a.input_size;

  std::vector<SliceRecord> records;
  for (const auto& row : read_case_labels(a.labels_csv)) {
    const auto path = find_input(a.volume_dir, row.case_id + "_" + modality_name(modality),
                                 {".nii", ".vol"});
    auto volume = read_volume(path);
    volume.case_id = row.case_id;
    volume.modality = modality;
    auto slices = extract_slices(volume, ranges_for(positivity, row.case_id, modality), row.label,
                                 opts);
    for (auto& s : slices) {
      s.record.slice_path = "slices/" + s.record.slice_path;
      const auto dest = out_dir / s.record.slice_path;
      fs::create_directories(dest.parent_path());
      write_slice_image(s.pixels, opts.input_size, dest);
      records.push_back(s.record);
    }
    spdlog::info("{}: {} slices", row.case_id, slices.size());
  }
  if (a.balance > 0)
    records = balance_slices(records, a.balance, seed, BalanceMode::DownsampleLargest);
  write_slice_manifest(a.out_manifest, records);
  spdlog::info("wrote {} slice records to {}", records.size(), a.out_manifest);
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string manifest, out_dir, augment = "flip,rotate,scale,crop";
  TrainConfig config;
};

AugmentFlags parse_augment(const std::string& text) {
  auto flags = AugmentFlags::none();
  if (text == "none") return flags;
  for (const auto& item : split_list(text)) {
    if (item == "flip") flags.flip = true;
    else if (item == "rotate") flags.rotate = true;
    else if (item == "scale") flags.scale = true;
    else if (item == "crop") flags.crop = true;
    else if (item == "continuous-rotation") flags.rotate = flags.continuous_rotation = true;
    else fail(ErrorCode::InvalidArgument, "unknown augmentation '" + item + "'");
  }
  return flags;
}

void run_train(TrainArgs a, std::uint64_t seed, int threads) {
  require_exists(a.manifest, "manifest");
  a.config.seed = seed;
  a.config.threads = threads;
  a.config.augment = parse_augment(a.augment);
  a.config.on_epoch = [epochs = a.config.epochs](const CurvePoint& p) {
    spdlog::info("epoch {}/{}  train loss {:.4f} acc {:.3f}  val loss {:.4f} acc {:.3f}", p.epoch,
                 epochs, p.train_loss, p.train_acc, p.val_loss, p.val_acc);
  };
  const auto records = read_unit_manifest(a.manifest);
  const auto result = train(a.config, records, a.out_dir);
  spdlog::info("checkpoints: {}, {}", result.best_checkpoint.string(),
               result.final_checkpoint.string());
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint, manifest, out_dir, split_json, side = "all", cases;
  int batch_size = 64;
};

void run_predict(const PredictArgs& a, int threads) {
  require_exists(a.checkpoint, "checkpoint");
  require_exists(a.manifest, "manifest");
  auto ckpt = load_checkpoint(a.checkpoint);
  ckpt.model.set_mode(Mode::Eval);
  const auto& cfg = ckpt.model.config();

  std::optional<std::set<std::string>> keep;
  if (!a.cases.empty()) {
    const auto list = split_list(a.cases);
    keep.emplace(list.begin(), list.end());
  }
  if (!a.split_json.empty() && a.side != "all") {
    require(a.side == "train" || a.side == "val", ErrorCode::InvalidArgument,
            "--side must be train, val or all");
    std::ifstream in(a.split_json);
    require(in.good(), ErrorCode::Io, "cannot open " + a.split_json);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    require(!j.is_discarded(), ErrorCode::Decode, a.split_json + ": invalid JSON");
    const auto list = j.at(a.side == "val" ? "val_cases" : "train_cases").get<std::vector<std::string>>();
    std::set<std::string> side(list.begin(), list.end());
    if (keep) {
      std::set<std::string> both;
      std::set_intersection(keep->begin(), keep->end(), side.begin(), side.end(),
                            std::inserter(both, both.begin()));
      side = std::move(both);
    }
    keep = std::move(side);
  }

  std::map<std::string, std::vector<UnitRecord>> by_case;
  for (auto& r : read_unit_manifest(a.manifest))
    if (!keep || keep->count(r.case_id)) by_case[r.case_id].push_back(std::move(r));
  require(!by_case.empty(), ErrorCode::EmptyInput, "no manifest units match the case selection");

  std::vector<std::string> ids;
  for (const auto& [id, units] : by_case) ids.push_back(id);
  std::vector<CasePrediction> results(ids.size());
  parallel_for(ids.size(), threads, [&](std::size_t i) {
    const auto& units = by_case.at(ids[i]);
    std::vector<PlanarImage> images;
    for (const auto& u : units) images.push_back(load_unit_image(u, cfg.input_size, cfg.in_channels));
    auto& out = results[i];
    out.case_id = ids[i];
    out.modality = modality_name(units.front().modality);
    out.units = predict_images(ckpt.model, images, a.batch_size);
    out.aggregate = units.front().kind == ManifestKind::Tiles ? aggregate_tiles(out.units)
                                                              : aggregate_slices(out.units);
  });

  fs::create_directories(a.out_dir);
  std::vector<CaseLabel> labels;
  for (const auto& r : results) {
    write_json(fs::path(a.out_dir) / (r.case_id + "_" + r.modality + ".json"),
               case_prediction_to_json(r));
    labels.push_back({r.case_id, r.aggregate.prediction.label});
  }
  write_case_labels(fs::path(a.out_dir) / ("predictions_" + results.front().modality + ".csv"),
                    labels);
  spdlog::info("predicted {} case(s) into {}", results.size(), a.out_dir);
}

// ---- fuse ------------------------------------------------------------------

struct FuseArgs {
  std::vector<std::string> case_preds;
  std::string modalities, weights, out_dir;
};

std::string canonical_modality(const std::string& name) {
  return modality_name(parse_modality(name));
}

void run_fuse(const FuseArgs& a) {
  std::vector<fs::path> files;
  for (const auto& p : a.case_preds) {
    require_exists(p, "case prediction path");
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p))
        if (e.path().extension() == ".json") files.push_back(e.path());
    } else {
      files.push_back(p);
    }
  }
  std::sort(files.begin(), files.end());

  FusionOptions options;
  if (!a.modalities.empty()) {
    std::vector<std::string> subset;
    for (const auto& m : split_list(a.modalities)) subset.push_back(canonical_modality(m));
    options.subset = subset;
  }
  for (const auto& item : split_list(a.weights)) {
    const auto eq = item.find('=');
    require(eq != std::string::npos, ErrorCode::InvalidArgument,
            "weights must look like name=value, got '" + item + "'");
    try {
      options.weights[canonical_modality(item.substr(0, eq))] = std::stod(item.substr(eq + 1));
    } catch (const std::logic_error&) {
      fail(ErrorCode::InvalidArgument, "bad weight '" + item + "'");
    }
  }

  std::map<std::string, std::map<std::string, Prediction>> by_case;
  for (const auto& f : files) {
    std::ifstream in(f);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("level")) continue;
    const auto c = case_prediction_from_json(j);
    const bool fresh = by_case[c.case_id].emplace(c.modality, c.aggregate.prediction).second;
    require(fresh, ErrorCode::InvalidArgument,
            "case " + c.case_id + " has two " + c.modality + " predictions");
  }
  require(!by_case.empty(), ErrorCode::EmptyInput, "no case prediction files found");

  fs::create_directories(a.out_dir);
  std::vector<CaseLabel> labels;
  for (const auto& [id, per] : by_case) {
    const auto d = fuse_modalities(id, per, options);
    write_json(fs::path(a.out_dir) / (id + "_fused.json"), case_decision_to_json(d));
    labels.push_back({id, d.fused.label});
  }
  write_case_labels(fs::path(a.out_dir) / "predictions.csv", labels);
  spdlog::info("fused {} case(s) into {}", labels.size(), a.out_dir);
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::vector<std::string> pred_csv;
  std::string truth_csv, out;
};

void run_evaluate(const EvaluateArgs& a) {
  require_exists(a.truth_csv, "truth CSV");
  const auto truth = read_case_labels(a.truth_csv);
  auto rows = nlohmann::ordered_json::array();
  EvalReport last;
  std::printf("%-10s %8s %8s %8s %8s %6s\n", "model", "F1", "F1-mac", "Kappa", "BA", "n");
  for (const auto& spec : a.pred_csv) {
    const auto eq = spec.find('=');
    const std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    require_exists(path, "prediction CSV");
    last = evaluate_cases(truth, read_case_labels(path));
    auto row = report_to_json(last);
    row["name"] = name;
    rows.push_back(row);
    std::printf("%-10s %8.3f %8.3f %8.3f %8.3f %6lld\n", name.c_str(), last.f1_micro,
                last.f1_macro, last.kappa, last.balanced_accuracy,
                static_cast<long long>(last.n_cases));
  }
  auto report = report_to_json(last);
  report["rows"] = rows;
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_json(out, report);
}

// ---- gradcheck / selftest --------------------------------------------------

Tensor random_weights(const Shape& shape, std::mt19937_64& rng) {
  return Tensor::uniform(shape, rng, -1.0f, 1.0f);
}

}  // namespace

int run_gradcheck_suite(int cases, std::uint64_t seed, std::ostream& log) {
  constexpr double kTolerance = 1e-2;
  int failures = 0;
  for (int c = 0; c < cases; ++c) {
    std::mt19937_64 rng(mix_seed(seed, {hash_string("gradcheck"), static_cast<std::uint64_t>(c)}));
    const int kind = c % 4;
    const std::int64_t n = 2, ch = 2 + static_cast<std::int64_t>(rng() % 2), hw = 4 + static_cast<std::int64_t>(rng() % 3);
    auto x = Tensor::uniform({n, ch, hw, hw}, rng, -1.0f, 1.0f);
    const auto w = random_weights({3, ch, 3, 3}, rng);
    const auto probe = random_weights({n, 3, hw, hw}, rng);
    const auto gamma = Tensor::uniform({3}, rng, 0.5f, 1.5f);
    const auto beta = random_weights({3}, rng);
    const auto fc = random_weights({3, 4}, rng);
    const auto bias = random_weights({4}, rng);
    std::vector<int> labels{static_cast<int>(rng() % 4), static_cast<int>(rng() % 4)};
    auto stats = RunningStats::fresh(3);
    const char* name = "";
    std::function<Tensor(const Tensor&)> f;
    switch (kind) {
      case 0:
        name = "conv2d";
        f = [&](const Tensor& in) { return sum(mul(conv2d(in, w, 1, 1), probe)); };
        break;
      case 1:
        name = "conv2d+batchnorm";
        f = [&](const Tensor& in) {
          return sum(mul(batch_norm2d(conv2d(in, w, 1, 1), gamma, beta, stats, true), probe));
        };
        break;
      case 2:
        name = "conv2d+gap+linear+cross_entropy";
        f = [&](const Tensor& in) {
          return cross_entropy_loss(linear(global_avg_pool2d(conv2d(in, w, 1, 1)), fc, bias), labels);
        };
        break;
      default:
        name = "gap+linear+softmax";
        f = [&](const Tensor& in) {
          const auto p = softmax(linear(global_avg_pool2d(conv2d(in, w, 1, 1)), fc, bias));
          return sum(mul(p, Tensor({n, 4}, {0.3f, -0.7f, 1.1f, 0.2f, -0.4f, 0.9f, 0.5f, -1.2f})));
        };
        break;
    }
    const auto r = grad_check(f, x, 1e-2f, 0, seed + static_cast<std::uint64_t>(c));
    const bool ok = r.max_rel_error < kTolerance;
    failures += ok ? 0 : 1;
    log << (ok ? "ok   " : "FAIL ") << name << " case " << c << " max_rel_error " << r.max_rel_error
        << '\n';
  }
  return failures;
}

int run_selftest(std::ostream& log) {
  int failures = 0;
  auto check = [&](bool ok, const char* what) {
    log << (ok ? "ok   " : "FAIL ") << what << '\n';
    failures += ok ? 0 : 1;
  };

  check(run_gradcheck_suite(8, 7, log) == 0, "finite-difference gradients");

  check(DcnModel::build(DcnConfig::dcn1(), 1).classifier_width() == 128, "DCN1 classifier width");

  auto tile = [](ClassLabel l, double conf) {
    Prediction p;
    p.label = l;
    p.confidence = conf;
    p.probs = {0, 0, 0, 0};
    p.probs[index_of(l)] = conf;
    for (int c = 0; c < kNumClasses; ++c)
      if (c != index_of(l)) p.probs[c] = (1.0 - conf) / 3.0;
    return p;
  };
  const auto slide = aggregate_tiles({tile(ClassLabel::G, .9), tile(ClassLabel::G, .8),
                                      tile(ClassLabel::O, .95), tile(ClassLabel::N, .99)});
  check(slide.prediction.label == ClassLabel::G, "tile vote");
  const auto fused = fuse_modalities("c", {{"hist", tile(ClassLabel::G, .9)},
                                           {"T2w", tile(ClassLabel::G, .7)},
                                           {"GdT1w", tile(ClassLabel::O, .95)}});
  check(fused.fused.label == ClassLabel::G, "modality fusion");

  Confusion perfect{{{3, 0, 0}, {0, 3, 0}, {0, 0, 3}}};
  const auto rep = evaluate(perfect);
  check(rep.f1_micro == 1.0 && rep.f1_macro == 1.0 && rep.kappa == 1.0 &&
            rep.balanced_accuracy == 1.0,
        "metrics on perfect predictions");
  Confusion one_class{{{0, 0, 3}, {0, 0, 3}, {0, 0, 3}}};
  check(cohens_kappa(one_class) == 0.0, "kappa of single-class predictions");

  DcnConfig small = DcnConfig::dcn1();
  small.input_size = 32;
  auto model = DcnModel::build(small, 3);
  auto params = model.parameter_tensors();
  const auto adam = AdamState::for_params(params);
  model.set_mode(Mode::Eval);
  const auto bytes = serialize_checkpoint(model, adam);
  check(serialize_checkpoint(deserialize_checkpoint(bytes).model, adam) == bytes,
        "checkpoint round trip");
  auto corrupt = bytes;
  corrupt[corrupt.size() / 2] ^= 0x01;
  bool rejected = false;
  try {
    deserialize_checkpoint(corrupt);
  } catch (const Error& e) {
    rejected = e.code() == ErrorCode::ChecksumMismatch;
  }
  check(rejected, "corrupted checkpoint rejected");

  PlanarImage img{3, 8, std::vector<float>(192)};
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i % 17) / 17.0f;
  check(augment(img, 5, AugmentFlags::none()).data == img.data, "augmentation off is identity");
  check(rotate90(rotate90(img, 2), 2).data == img.data, "half turn twice is identity");

  auto white = RasterImage::filled(20, 20, 255, 255, 255);
  check(qc_tile(white).verdict == QcOutcome::NegativeN, "blank tile flagged N");
  return failures;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Multimodal glioma sub-typing pipeline", "glioma"};
  app.set_config("--config", "", "TOML file with option values (flags take precedence)");
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  int threads = 1;
  app.add_option("--seed", seed, "Random seed for every stage")->envname("GLIOMA_SEED");
  app.add_option("--threads", threads, "Worker thread cap")
      ->envname("GLIOMA_THREADS")
      ->check(CLI::PositiveNumber);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Only log warnings and errors")->envname("GLIOMA_QUIET");

  ExtractTilesArgs et;
  auto* cmd_et = app.add_subcommand("extract-tiles", "Tile slides and write a tile manifest");
  cmd_et->add_option("--slide-dir", et.slide_dir, "Directory of <case>.png slides")->required();
  cmd_et->add_option("--labels-csv", et.labels_csv, "case_id,label CSV")->required();
  cmd_et->add_option("--resolution", et.resolution, "Microns per pixel")
      ->envname("GLIOMA_RESOLUTION");
  cmd_et->add_option("--out-manifest", et.out_manifest, "Output JSONL manifest")->required();
  cmd_et->add_option("--quota-table", et.quota_table, "resolution,label,quota CSV");
  cmd_et->add_option("--tile-size", et.tile_size, "Tile edge in pixels")
      ->envname("GLIOMA_TILE_SIZE")
      ->check(CLI::PositiveNumber);
  cmd_et->add_option("--balance", et.balance, "Per-class target after extraction (0 = off)");

  ExtractSlicesArgs es;
  auto* cmd_es = app.add_subcommand("extract-slices", "Slice volumes and write a slice manifest");
  cmd_es->add_option("--volume-dir", es.volume_dir, "Directory of <case>_<modality>.nii volumes")
      ->required();
  cmd_es->add_option("--labels-csv", es.labels_csv, "case_id,label CSV")->required();
  cmd_es->add_option("--positivity-csv", es.positivity_csv, "case_id,modality,z_start,z_end CSV")
      ->required();
  cmd_es->add_option("--modality", es.modality, "T1w, T2w, GdT1w or FLAIR");
  cmd_es->add_option("--out-manifest", es.out_manifest, "Output JSONL manifest")->required();
  cmd_es->add_option("--input-size", es.input_size, "Slice edge after resizing")
      ->envname("GLIOMA_INPUT_SIZE")
      ->check(CLI::PositiveNumber);
  cmd_es->add_option("--balance", es.balance, "Per-class target per modality (0 = off)");

  TrainArgs tr;
  auto* cmd_tr = app.add_subcommand("train", "Train a DCN on a manifest");
  cmd_tr->add_option("--manifest", tr.manifest, "Tile or slice manifest")->required();
  cmd_tr->add_option("--preset", tr.config.preset, "DCN1 or DCN2");
  cmd_tr->add_option("--epochs", tr.config.epochs, "Training epochs")->envname("GLIOMA_EPOCHS");
  cmd_tr->add_option("--batch-size", tr.config.batch_size, "Mini-batch size")
      ->envname("GLIOMA_BATCH_SIZE");
  cmd_tr->add_option("--lr", tr.config.lr, "Adam learning rate")->envname("GLIOMA_LR");
  cmd_tr->add_option("--val-fraction", tr.config.val_fraction, "Validation share of cases");
  cmd_tr->add_option("--input-size", tr.config.input_size, "Override the preset input size")
      ->envname("GLIOMA_INPUT_SIZE");
  cmd_tr->add_option("--augment", tr.augment,
                     "Comma list of flip,rotate,scale,crop,continuous-rotation or 'none'");
  cmd_tr->add_option("--out-dir", tr.out_dir, "Checkpoint and curve directory")->required();

  PredictArgs pr;
  auto* cmd_pr = app.add_subcommand("predict", "Predict units and aggregate them per case");
  cmd_pr->add_option("--checkpoint", pr.checkpoint, "Model checkpoint")->required();
  cmd_pr->add_option("--manifest", pr.manifest, "Tile or slice manifest")->required();
  cmd_pr->add_option("--split", pr.split_json, "split.json written by train");
  cmd_pr->add_option("--side", pr.side, "train, val or all (with --split)");
  cmd_pr->add_option("--cases", pr.cases, "Comma list of case ids");
  cmd_pr->add_option("--batch-size", pr.batch_size, "Inference batch size")
      ->check(CLI::PositiveNumber);
  cmd_pr->add_option("--out-dir", pr.out_dir, "Directory for per-case JSON")->required();

  FuseArgs fu;
  auto* cmd_fu = app.add_subcommand("fuse", "Fuse per-modality case predictions");
  cmd_fu->add_option("--case-preds", fu.case_preds, "Case prediction files or directories")
      ->required();
  cmd_fu->add_option("--modalities", fu.modalities, "Comma list restricting the modalities");
  cmd_fu->add_option("--weights", fu.weights, "Comma list of modality=weight");
  cmd_fu->add_option("--out-dir", fu.out_dir, "Directory for fused decisions")->required();

  EvaluateArgs ev;
  auto* cmd_ev = app.add_subcommand("evaluate", "Score case predictions against truth");
  cmd_ev->add_option("--pred-csv", ev.pred_csv, "case_id,label CSV, optionally name=path")
      ->required();
  cmd_ev->add_option("--truth-csv", ev.truth_csv, "case_id,label CSV")->required();
  cmd_ev->add_option("--out", ev.out, "report.json path")->required();

  std::string curves_csv, curves_svg;
  auto* cmd_pc = app.add_subcommand("plot-curves", "Render curves.csv as a two-panel SVG");
  cmd_pc->add_option("curves", curves_csv, "curves.csv")->required();
  cmd_pc->add_option("--out", curves_svg, "SVG path (default: next to the CSV)");

  int gc_cases = 100;
  auto* cmd_gc = app.add_subcommand("gradcheck", "Randomized finite-difference gradient checks");
  cmd_gc->add_option("--cases", gc_cases, "Number of random cases")->check(CLI::PositiveNumber);

  auto* cmd_st = app.add_subcommand("selftest", "Run the built-in invariant checks");

  if (argc >= 2 && argv[1][0] != '-' &&
      std::find_if(std::begin(kSubcommands), std::end(kSubcommands), [&](const char* s) {
        return std::string_view(argv[1]) == s;
      }) == std::end(kSubcommands)) {
    std::cerr << "unknown subcommand '" << argv[1] << "'\n\n" << app.help();
    return 2;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  spdlog::set_pattern("%^%l%$ %v");
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*cmd_et) run_extract_tiles(et, seed, threads);
    else if (*cmd_es) run_extract_slices(es, seed);
    else if (*cmd_tr) run_train(tr, seed, threads);
    else if (*cmd_pr) run_predict(pr, threads);
    else if (*cmd_fu) run_fuse(fu);
    else if (*cmd_ev) run_evaluate(ev);
    else if (*cmd_pc) {
      const fs::path out = curves_svg.empty() ? fs::path(curves_csv).replace_extension(".svg")
                                              : fs::path(curves_svg);
      write_curves_svg(out, read_curves_csv(curves_csv));
    } else if (*cmd_gc) {
      const int failed = run_gradcheck_suite(gc_cases, seed, std::cout);
      std::cout << failed << " of " << gc_cases << " case(s) failed\n";
      return failed == 0 ? 0 : 1;
    } else if (*cmd_st) {
      const int failed = run_selftest(std::cout);
      std::cout << (failed == 0 ? "selftest passed\n" : "selftest FAILED\n");
      return failed == 0 ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: DecodeError: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace glioma
