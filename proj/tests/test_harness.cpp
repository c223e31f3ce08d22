#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mcb/error.hpp"
#include "mcb/harness.hpp"
#include "mcb/sketch.hpp"

using namespace mcb;
using doctest::Approx;

namespace {

harness::ModelSpec mcb_spec(std::size_t d, std::size_t n, std::size_t classes, bool normalize, std::uint64_t seed) {
  harness::ModelSpec spec;
  spec.pooling = nn::PoolingMethod::parse("mcb");
  spec.pooling.d = d;
  spec.normalization = normalize;
  spec.n1 = n;
  spec.n2 = n;
  spec.classes = classes;
  spec.seed = seed;
  return spec;
}

// Scores every class with the planted forms; the best possible classifier.
struct PlantedScorer {
  const tasks::PlantedClassifier& planted;
  RealVec logits(const tasks::Sample& s) const { return planted.logits(s); }
};

struct ConstantScorer {
  std::size_t classes;
  RealVec logits(const tasks::Sample&) const { return RealVec(classes, 0.0); }
};

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("zero epochs returns the initial model") {
    const tasks::BilinearClassificationTask task{6, 6, 3, 0.02, 5};
    const auto train_set = tasks::gen_classification(task, 64);
    const auto val_set = tasks::gen_classification(task, 32, 64);
    const auto spec = mcb_spec(32, 6, 3, true, 9);
    harness::TrainConfig cfg;
    cfg.epochs = 0;
    const auto result = harness::train(spec, train_set, val_set, cfg);
    CHECK(result.model.same_weights(harness::Model(spec)));
    CHECK(result.best_epoch == 0);
    REQUIRE(result.history.size() == 1);
    CHECK(result.history[0].val_accuracy == harness::evaluate(harness::Model(spec), val_set));
  }

  TEST_CASE("training is bitwise reproducible") {
    const tasks::BilinearClassificationTask task{6, 6, 3, 0.02, 5};
    const auto train_set = tasks::gen_classification(task, 200);
    const auto val_set = tasks::gen_classification(task, 50, 200);
    harness::TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch = 16;
    for (const char* name : {"mcb", "concat", "eltwise-product"}) {
      CAPTURE(name);
      auto spec = mcb_spec(32, 6, 3, true, 2);
      spec.pooling = nn::PoolingMethod::parse(name);
      if (spec.pooling.kind == nn::PoolingKind::mcb) spec.pooling.d = 32;
      const auto a = harness::train(spec, train_set, val_set, cfg);
      const auto b = harness::train(spec, train_set, val_set, cfg);
      CHECK(a.model.same_weights(b.model));
      REQUIRE(a.history.size() == b.history.size());
      for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].loss == b.history[i].loss);
        CHECK(a.history[i].val_accuracy == b.history[i].val_accuracy);
      }
    }
  }

  TEST_CASE("evaluate") {
    const tasks::BilinearClassificationTask task{6, 6, 4, 0.0, 3};
    const tasks::PlantedClassifier planted(task);
    const auto data = tasks::gen_classification(planted, 1000);
    CHECK(harness::evaluate(PlantedScorer{planted}, data) == 1.0);
    // Ties resolve to class 0, so a constant scorer hits that class's frequency.
    std::size_t zeros = 0;
    for (const auto& s : data) zeros += s.label == 0;
    CHECK(harness::evaluate(ConstantScorer{4}, data) == static_cast<double>(zeros) / 1000.0);
    CHECK(harness::evaluate(ConstantScorer{4}, data) == Approx(0.25).epsilon(0.6));
    CHECK_THROWS_AS(harness::evaluate(PlantedScorer{planted}, tasks::Dataset{}), std::invalid_argument);
  }

  TEST_CASE("model dimension mismatch throws") {
    const harness::Model model(mcb_spec(16, 4, 3, true, 1));
    tasks::Sample bad{RealVec(5, 0.1), RealVec(4, 0.1), 0};
    CHECK_THROWS_AS(model.forward(bad), std::invalid_argument);
    const tasks::Dataset wrong = tasks::gen_classification(tasks::BilinearClassificationTask{5, 4, 3}, 10);
    CHECK_THROWS_AS(harness::train(mcb_spec(16, 4, 3, true, 1), wrong, wrong, {}), std::invalid_argument);
  }

  TEST_CASE("gradient checks for every pooling method") {
    const tasks::BilinearClassificationTask task{5, 5, 3, 0.02, 4};
    const auto sample = tasks::gen_classification(task, 1)[0];
    for (const char* name : {"eltwise-sum", "eltwise-product", "concat", "concat-fc", "full-bilinear", "mcb"}) {
      CAPTURE(name);
      auto spec = mcb_spec(24, 5, 3, true, 8);
      spec.pooling = nn::PoolingMethod::parse(name);
      if (spec.pooling.kind == nn::PoolingKind::mcb) spec.pooling.d = 24;
      if (spec.pooling.kind == nn::PoolingKind::concat_fc) spec.pooling.hidden = {6};
      const auto report = harness::grad_check(spec, sample);
      CAPTURE(report.worst_entry);
      CHECK(report.entries_checked > 0);
      CHECK(report.max_relative_error < 1e-5);
    }
  }

  TEST_CASE("attention pipeline gradient check") {
    const tasks::BilinearClassificationTask task{4, 4, 3, 0.02, 4, 4};
    const auto sample = tasks::gen_classification(task, 1)[0];
    for (std::size_t glimpses : {1u, 2u}) {
      auto spec = mcb_spec(16, 4, 3, true, 8);
      spec.use_attention = true;
      spec.glimpses = glimpses;
      spec.attention_d = 16;
      spec.attention_hidden = 6;
      spec.grid_locations = 4;
      spec.pooling.d = 16;
      const auto report = harness::grad_check(spec, sample);
      CAPTURE(report.worst_entry);
      CHECK(report.max_relative_error < 1e-5);
    }
  }

  TEST_CASE("grounding gradient check") {
    const tasks::GroundingRankingTask task{5, 4, 3, 0.05, 2};
    const auto item = tasks::gen_grounding(task, 1)[0];
    for (const char* name : {"mcb", "concat"}) {
      harness::GroundingSpec spec{nn::PoolingMethod::parse(name), true, 5, 4, 3};
      if (spec.pooling.kind == nn::PoolingKind::mcb) spec.pooling.d = 16;
      CHECK(harness::grad_check(spec, item).max_relative_error < 1e-5);
    }
  }

  TEST_CASE("parameter counts follow the layer shapes") {
    // MCB: bias-free classifier only.
    CHECK(harness::Model(mcb_spec(64, 8, 5, true, 1)).param_count() == 64 * 5);
    auto spec = mcb_spec(64, 8, 5, true, 1);
    spec.pooling = nn::PoolingMethod::parse("concat-fc");
    spec.pooling.hidden = {10, 7};
    CHECK(harness::Model(spec).param_count() == (16 * 10 + 10) + (10 * 7 + 7) + 7 * 5);
    spec.pooling = nn::PoolingMethod::parse("full-bilinear");
    CHECK(harness::Model(spec).param_count() == 64 * 5);
    spec.pooling = nn::PoolingMethod::parse("mcb");
    spec.pooling.d = 32;
    spec.use_attention = true;
    spec.glimpses = 2;
    spec.attention_d = 20;
    spec.attention_hidden = 6;
    spec.grid_locations = 4;
    // attention (20*6+6 + 6*2+2), then MCB of the 2*8 attended vector with q.
    CHECK(harness::Model(spec).param_count() == (20 * 6 + 6) + (6 * 2 + 2) + 32 * 5);
  }

  TEST_CASE("budget matching") {
    const auto base = mcb_spec(256, 16, 8, true, 1);
    const std::uint64_t target = harness::Model(base).param_count();
    for (const char* name : {"eltwise-sum", "eltwise-product", "concat", "concat-fc"}) {
      const auto matched = harness::budget_matched(nn::PoolingMethod::parse(name), base, target);
      REQUIRE(matched.hidden.size() == 1);
      auto spec = base;
      spec.pooling = matched;
      const double count = static_cast<double>(harness::Model(spec).param_count());
      CHECK(std::abs(count - static_cast<double>(target)) <= 0.10 * static_cast<double>(target));
    }
    CHECK(harness::budget_matched(base.pooling, base, 5) == base.pooling);
    try {
      harness::budget_matched(nn::PoolingMethod::parse("concat"), base, 10);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("concat") != std::string::npos);
    }
  }

  TEST_CASE("single-method ablation has one summary row") {
    harness::AblationConfig cfg;
    cfg.task = {6, 6, 3, 0.02, 1};
    cfg.methods = {nn::PoolingMethod::parse("mcb")};
    cfg.methods[0].d = 32;
    cfg.seeds = {1, 2};
    cfg.train_count = 100;
    cfg.test_count = 50;
    cfg.val_count = 50;
    cfg.train.epochs = 2;
    const auto report = harness::ablate(cfg);
    CHECK(report.rows.size() == 2);
    REQUIRE(report.summary.size() == 1);
    CHECK(report.summary[0].method == "mcb");
    CHECK(report.summary[0].runs == 2);
    CHECK_THROWS_AS(report.find("concat"), std::out_of_range);
  }

  TEST_CASE("sample standard deviation") {
    CHECK(harness::sample_std(std::vector<double>{}) == 0.0);
    CHECK(harness::sample_std(std::vector<double>{3.0}) == 0.0);
    CHECK(harness::sample_std(std::vector<double>{1, 2, 3, 4}) == Approx(std::sqrt(5.0 / 3.0)));
  }
}

TEST_SUITE("training") {
  TEST_CASE("noise-free two-class toy is fit") {
    // Injective sketch: every (i, j) outer bucket is distinct, so the model is
    // exactly a linear function of x q^T.
    const tasks::BilinearClassificationTask task{4, 4, 2, 0.0, 1};
    auto spec = mcb_spec(1024, 4, 2, false, 1);
    const harness::Model probe(spec);
    const auto sk = probe.pooling().bilinear_op()->sketches();
    const auto outer = sketch::outer_product_params(sk[0], sk[1]);
    std::vector<bool> used(1024, false);
    for (std::uint32_t bucket : outer.buckets()) {
      REQUIRE_FALSE(used[bucket]);
      used[bucket] = true;
    }
    const tasks::PlantedClassifier planted(task);
    const auto train_set = tasks::gen_classification(planted, 2000);
    harness::TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch = 1;
    cfg.patience = 50;
    const auto result = harness::train(spec, train_set, {}, cfg);
    CHECK(harness::evaluate(result.model, train_set) >= 0.99);
  }

  TEST_CASE("noise-free two-proposal grounding toy is fit") {
    const tasks::GroundingRankingTask task{8, 8, 2, 0.0, 1};
    harness::GroundingSpec spec{nn::PoolingMethod::parse("mcb"), false, 8, 8, 1};
    spec.pooling.d = 1024;
    const auto train_set = tasks::gen_grounding(task, 2000);
    const auto test_set = tasks::gen_grounding(task, 300, 2000);
    const auto untrained = harness::evaluate(harness::GroundingModel(spec), test_set);
    CHECK(untrained > 0.5 - 4 * std::sqrt(0.25 / 300));
    CHECK(untrained < 0.5 + 4 * std::sqrt(0.25 / 300));
    harness::TrainConfig cfg;
    cfg.epochs = 100;
    cfg.batch = 1;
    cfg.patience = 100;
    const auto result = harness::train_grounding(spec, train_set, {}, cfg);
    CHECK(harness::evaluate(result.model, test_set) >= 0.95);
  }

  TEST_CASE("trained MCB sits between chance and the planted ceiling") {
    const tasks::BilinearClassificationTask task{16, 16, 8, 0.02, 1};
    const tasks::PlantedClassifier planted(task);
    const auto train_set = tasks::gen_classification(planted, 4000);
    const auto test_set = tasks::gen_classification(planted, 1000, 4000);
    const auto val_set = tasks::gen_classification(planted, 500, 5000);
    harness::TrainConfig cfg;
    cfg.epochs = 30;
    const auto result = harness::train(mcb_spec(256, 16, 8, true, 1), train_set, val_set, cfg);
    const double acc = harness::evaluate(result.model, test_set);
    const double ceiling = harness::evaluate(PlantedScorer{planted}, test_set);
    CHECK(acc > harness::evaluate(ConstantScorer{8}, test_set));
    CHECK(acc > 1.0 / 8.0 + 4 * std::sqrt((1.0 / 8.0) * (7.0 / 8.0) / 1000));
    CHECK(acc <= ceiling);
  }
}
