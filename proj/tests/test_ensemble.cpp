#include <algorithm>
#include <numeric>
#include <random>

#include "glioma/ensemble.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace glioma;

namespace {

// Label gets `conf`, the rest is split evenly.
Prediction pred(ClassLabel label, double conf) {
  std::array<double, 4> p;
  p.fill((1.0 - conf) / 3.0);
  p[index_of(label)] = conf;
  return {p, label, conf};
}

Prediction random_pred(std::mt19937_64& rng, bool allow_n = true) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::array<double, 4> p;
  double s = 0;
  for (auto& v : p) s += v = g(rng) + 1e-9;
  for (auto& v : p) v /= s;
  if (!allow_n && p[3] >= std::max({p[0], p[1], p[2]})) std::swap(p[3], p[rng() % 3]);
  return Prediction::from_probs(p);
}

double prob_sum(const Prediction& p) { return p.probs[0] + p.probs[1] + p.probs[2] + p.probs[3]; }

}  // namespace

TEST_CASE("tile vote example") {
  const auto r = aggregate_tiles({pred(ClassLabel::G, .9), pred(ClassLabel::G, .8),
                                  pred(ClassLabel::O, .95), pred(ClassLabel::N, .99)});
  CHECK(r.prediction.label == ClassLabel::G);
  CHECK(r.prediction.probs[2] == doctest::Approx(1.7 / 2.65).epsilon(1e-12));
  CHECK(r.prediction.probs[1] == doctest::Approx(0.95 / 2.65).epsilon(1e-12));
  CHECK(r.prediction.probs[3] == 0.0);
  CHECK(r.units == 3);
  CHECK(r.dropped_n == 1);
  CHECK_FALSE(r.used_fallback);

  CHECK(aggregate_tiles({pred(ClassLabel::A, .6)}).prediction.label == ClassLabel::A);
}

TEST_CASE("all-N tiles fall back to mean probabilities") {
  const Prediction n1{{0.1, 0.3, 0.05, 0.55}, ClassLabel::N, 0.55};
  const Prediction n2{{0.05, 0.2, 0.15, 0.6}, ClassLabel::N, 0.6};
  const auto r = aggregate_tiles({n1, n2});
  CHECK(r.prediction.label == ClassLabel::O);
  CHECK(r.used_fallback);
  CHECK(r.units == 0);
  CHECK(r.dropped_n == 2);
  CHECK(aggregate_slices({n1, n2}).prediction.label == ClassLabel::O);
}

TEST_CASE("tile ties go to mean probability, then class order") {
  // A and G both score 0.7; G has more mean mass
  const Prediction a{{0.7, 0.0, 0.3, 0.0}, ClassLabel::A, 0.7};
  const Prediction g{{0.0, 0.3, 0.7, 0.0}, ClassLabel::G, 0.7};
  CHECK(aggregate_tiles({a, g}).prediction.label == ClassLabel::G);
  const Prediction a2{{0.7, 0.0, 0.0, 0.3}, ClassLabel::A, 0.7};
  const Prediction o2{{0.0, 0.7, 0.0, 0.3}, ClassLabel::O, 0.7};
  CHECK(aggregate_tiles({o2, a2}).prediction.label == ClassLabel::A);
}

TEST_CASE("slice weighted mean example") {
  const Prediction s{{.05, .05, .8, .1}, ClassLabel::G, .8};
  const auto r = aggregate_slices({s, s, s});
  CHECK(r.prediction.label == ClassLabel::G);
  CHECK(r.prediction.probs[0] == doctest::Approx(.05 / .9).epsilon(1e-12));
  CHECK(r.prediction.probs[1] == doctest::Approx(.05 / .9).epsilon(1e-12));
  CHECK(r.prediction.probs[2] == doctest::Approx(.8 / .9).epsilon(1e-12));
  CHECK(std::round(r.prediction.probs[0] * 1000) == 56);
  CHECK(std::round(r.prediction.probs[2] * 1000) == 889);

  const auto one = aggregate_slices({s}).prediction;
  CHECK(one.probs[2] == doctest::Approx(.8 / .9).epsilon(1e-12));
}

TEST_CASE("fusion example") {
  const auto d = fuse_modalities("C1", {{"hist", pred(ClassLabel::G, .9)},
                                        {"T2w", pred(ClassLabel::G, .7)},
                                        {"GdT1w", pred(ClassLabel::O, .95)}});
  CHECK(d.fused.label == ClassLabel::G);
  CHECK(d.contributing_modalities.size() == 3);
  CHECK(std::abs(prob_sum(d.fused) - 1.0) <= 1e-12);

  const auto single = fuse_modalities("C2", {{"hist", pred(ClassLabel::O, .5)}});
  CHECK(single.fused.label == ClassLabel::O);

  FusionOptions opt;
  opt.subset = std::vector<std::string>{"GdT1w"};
  const auto sub = fuse_modalities("C1", {{"hist", pred(ClassLabel::G, .9)},
                                          {"GdT1w", pred(ClassLabel::O, .95)}}, opt);
  CHECK(sub.fused.label == ClassLabel::O);
  CHECK(sub.contributing_modalities == std::vector<std::string>{"GdT1w"});
}

TEST_CASE("fusion weights can overturn a vote") {
  FusionOptions opt;
  opt.weights = {{"hist", 0.5}, {"T2w", 0.5}, {"GdT1w", 2.0}};
  const auto d = fuse_modalities("C1", {{"hist", pred(ClassLabel::G, .9)},
                                        {"T2w", pred(ClassLabel::G, .7)},
                                        {"GdT1w", pred(ClassLabel::O, .95)}}, opt);
  CHECK(d.fused.label == ClassLabel::O);
}

TEST_CASE("aggregation errors") {
  CHECK_ERROR_CODE(aggregate_tiles({}), ErrorCode::EmptyInput);
  CHECK_ERROR_CODE(aggregate_slices({}), ErrorCode::EmptyInput);
  CHECK_ERROR_CODE(fuse_modalities("c", {}), ErrorCode::EmptyInput);
  FusionOptions zero;
  zero.weights = {{"hist", 0.0}};
  CHECK_ERROR_CODE(fuse_modalities("c", {{"hist", pred(ClassLabel::A, .9)}}, zero),
                   ErrorCode::InvalidArgument);
  FusionOptions neg;
  neg.weights = {{"hist", -1.0}};
  CHECK_ERROR_CODE(fuse_modalities("c", {{"hist", pred(ClassLabel::A, .9)}}, neg),
                   ErrorCode::InvalidArgument);
  CHECK_ERROR_CODE(fuse_modalities("c", {{"hist", pred(ClassLabel::N, .9)}}),
                   ErrorCode::InvalidArgument);
  FusionOptions missing;
  missing.subset = std::vector<std::string>{"FLAIR"};
  CHECK_ERROR_CODE(fuse_modalities("c", {{"hist", pred(ClassLabel::A, .9)}}, missing),
                   ErrorCode::EmptyInput);
}

TEST_CASE("aggregators match the exhaustive grid oracle") {
  const auto t = oracle::exhaustive_tiles(4, false);
  CHECK(t.checked == 12 + 144 + 1728 + 20736);
  CHECK(t.mismatched == 0);
  CHECK(oracle::exhaustive_tiles(4, true).mismatched == 0);
  CHECK(oracle::exhaustive_fusion(3, {0, 1, 2, 4}).mismatched == 0);
}

TEST_CASE("aggregators are permutation invariant") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<Prediction> units(1 + rng() % 8);
    for (auto& u : units) u = random_pred(rng);
    auto shuffled = units;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (bool slices : {false, true}) {
      const auto a = (slices ? aggregate_slices(units) : aggregate_tiles(units)).prediction;
      const auto b = (slices ? aggregate_slices(shuffled) : aggregate_tiles(shuffled)).prediction;
      CHECK(a.label == b.label);
      for (int c = 0; c < 4; ++c) CHECK(std::abs(a.probs[c] - b.probs[c]) <= 1e-12);
      CHECK(std::abs(prob_sum(a) - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("a new vote for a class never lowers its share") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<Prediction> units(1 + rng() % 6);
    for (auto& u : units) u = random_pred(rng, false);
    const auto before = aggregate_tiles(units).prediction;
    const auto extra = random_pred(rng, false);
    units.push_back(extra);
    const auto after = aggregate_tiles(units).prediction;
    const int c = index_of(extra.label);
    CHECK(after.probs[c] >= before.probs[c] - 1e-12);
    if (before.label == extra.label) CHECK(after.label == extra.label);
  }
}

TEST_CASE("scaling every fusion weight keeps the label") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> w(0.0, 3.0), lam(0.01, 100.0);
  const std::vector<std::string> names{"hist", "T1w", "T2w", "GdT1w", "FLAIR"};
  for (int trial = 0; trial < 2000; ++trial) {
    std::map<std::string, Prediction> per;
    FusionOptions a, b;
    const double l = lam(rng);
    for (std::size_t i = 0; i < 1 + rng() % 5; ++i) {
      per[names[i]] = random_pred(rng, false);
      a.weights[names[i]] = w(rng) + 0.01;
      b.weights[names[i]] = a.weights[names[i]] * l;
    }
    const auto x = fuse_modalities("c", per, a), y = fuse_modalities("c", per, b);
    CHECK(x.fused.label == y.fused.label);
    CHECK(std::abs(prob_sum(x.fused) - 1.0) <= 1e-6);
  }
}

TEST_CASE("prediction JSON round trip") {
  CasePrediction c;
  c.case_id = "C7";
  c.modality = "hist";
  c.units = {pred(ClassLabel::A, .5), pred(ClassLabel::N, .7)};
  c.aggregate = aggregate_tiles(c.units);
  const auto j = case_prediction_to_json(c);
  CHECK(j["level"] == "slide");
  const auto back = case_prediction_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.case_id == "C7");
  CHECK(back.aggregate.prediction.label == ClassLabel::A);
  CHECK(back.aggregate.dropped_n == 1);
  CHECK(back.units.size() == 2);
  CHECK(back.units[1].probs == c.units[1].probs);
  CHECK_ERROR_CODE(case_prediction_from_json(nlohmann::json::parse("{\"case_id\":1}")),
                   ErrorCode::Decode);
}
