#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mcb/error.hpp"
#include "mcb/nn.hpp"
#include "mcb/tasks.hpp"

using namespace mcb;

TEST_SUITE("tasks") {
  TEST_CASE("generation is a pure function of task and index") {
    const tasks::BilinearClassificationTask task{8, 6, 4, 0.1, 42};
    const auto a = tasks::gen_classification(task, 300);
    const auto b = tasks::gen_classification(task, 300);
    CHECK(a == b);
    CHECK(tasks::content_hash(a) == tasks::content_hash(b));
    const auto tail = tasks::gen_classification(task, 100, 200);
    CHECK(std::equal(tail.begin(), tail.end(), a.begin() + 200));
    auto other = task;
    other.seed = 43;
    CHECK(tasks::content_hash(tasks::gen_classification(other, 300)) != tasks::content_hash(a));
    CHECK(tasks::content_hash(tasks::gen_classification(task, 300, 300)) != tasks::content_hash(a));
  }

  TEST_CASE("noise-free labels are the planted argmax") {
    const tasks::BilinearClassificationTask task{8, 8, 5, 0.0, 3};
    const tasks::PlantedClassifier planted(task);
    const auto data = tasks::gen_classification(planted, 2000);
    std::size_t hits = 0;
    for (const auto& s : data) hits += nn::argmax(planted.logits(s)) == s.label;
    CHECK(hits == data.size());
  }

  TEST_CASE("noisy labels leave a gap below perfect") {
    const tasks::BilinearClassificationTask task{8, 8, 4, 0.1, 9};
    const tasks::PlantedClassifier planted(task);
    const auto data = tasks::gen_classification(planted, 5000);
    std::size_t hits = 0;
    for (const auto& s : data) hits += nn::argmax(planted.logits(s)) == s.label;
    const double acc = static_cast<double>(hits) / data.size();
    CHECK(acc > 0.25);
    CHECK(acc < 1.0);
  }

  TEST_CASE("labels are not degenerate") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const tasks::BilinearClassificationTask task{6, 6, 3, 0.02, seed};
      CHECK(tasks::max_label_frequency(tasks::gen_classification(task, 1000), 3) <= 0.9);
    }
  }

  TEST_CASE("grid samples carry one vector per location") {
    const tasks::BilinearClassificationTask task{5, 4, 3, 0.0, 2, 9};
    const tasks::PlantedClassifier planted(task);
    const auto data = tasks::gen_classification(planted, 50);
    for (const auto& s : data) {
      CHECK(s.x.size() == 45);
      CHECK(s.q.size() == 4);
      CHECK(planted.salient_location(s) < 9);
    }
  }

  TEST_CASE("invalid classification tasks") {
    CHECK_THROWS_AS(tasks::gen_classification(tasks::BilinearClassificationTask{0, 4, 3}, 10), std::invalid_argument);
    CHECK_THROWS_AS(tasks::gen_classification(tasks::BilinearClassificationTask{4, 4, 1}, 10), std::invalid_argument);
    CHECK_THROWS_AS(tasks::gen_classification(tasks::BilinearClassificationTask{4, 4, 3, -1.0}, 10),
                    std::invalid_argument);
    CHECK_THROWS_AS(tasks::gen_classification(tasks::BilinearClassificationTask{4, 4, 3}, 0), std::invalid_argument);
  }

  TEST_CASE("noise-free grounding ranks the planted best first") {
    const tasks::GroundingRankingTask task{6, 5, 2, 0.0, 4};
    const tasks::PlantedRanker planted(task);
    const auto data = tasks::gen_grounding(planted, 1000);
    for (const auto& item : data) {
      CHECK(item.proposals.size() == 2);
      CHECK(nn::argmax(planted.scores(item)) == item.correct);
    }
  }

  TEST_CASE("noisy grounding has a ceiling below one") {
    const tasks::GroundingRankingTask task{8, 8, 8, 0.05, 1};
    const tasks::PlantedRanker planted(task);
    const auto data = tasks::gen_grounding(planted, 3000);
    std::size_t hits = 0;
    for (const auto& item : data) hits += nn::argmax(planted.scores(item)) == item.correct;
    const double ceiling = static_cast<double>(hits) / data.size();
    CHECK(ceiling > 0.125);
    CHECK(ceiling < 1.0);
  }

  TEST_CASE("grounding determinism and errors") {
    const tasks::GroundingRankingTask task{4, 4, 3, 0.05, 8};
    CHECK(tasks::content_hash(tasks::gen_grounding(task, 100)) == tasks::content_hash(tasks::gen_grounding(task, 100)));
    CHECK_THROWS_AS(tasks::gen_grounding(tasks::GroundingRankingTask{4, 4, 1}, 10), std::invalid_argument);
    CHECK_THROWS_AS(tasks::gen_grounding(task, 0), std::invalid_argument);
  }
}
