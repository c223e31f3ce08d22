#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli.hpp"
#include "mcb/io.hpp"

using namespace mcb;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mcb_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t count_lines_with(const std::string& text, const std::string& needle) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) n += line.find(needle) != std::string::npos;
  return n;
}

const std::vector<std::string> kSmallTrain{"--n1", "6", "--n2", "6", "--classes", "3", "--train-count", "120",
                                           "--test-count", "60", "--val-count", "40", "--epochs", "3"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("seed lists") {
    CHECK(cli::parse_seeds("1..5") == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
    CHECK(cli::parse_seeds("1,3,7") == std::vector<std::uint64_t>{1, 3, 7});
    CHECK(cli::parse_seeds("4") == std::vector<std::uint64_t>{4});
    CHECK_THROWS_AS(cli::parse_seeds("5..1"), CLI::ValidationError);
    CHECK_THROWS_AS(cli::parse_seeds("a,b"), CLI::ValidationError);
  }

  TEST_CASE("verify passes and a zero tolerance names the failing suites") {
    const auto ok = run({"verify"});
    CHECK(ok.code == 0);
    CHECK(ok.out.find("suites passed") != std::string::npos);
    CHECK(count_lines_with(ok.out, "FAIL") == 0);

    const auto strict = run({"verify", "--tolerance", "0"});
    CHECK(strict.code == 1);
    CHECK(strict.out.find("failed:") != std::string::npos);
    CHECK(strict.out.find("kernel") != std::string::npos);
  }

  TEST_CASE("bench on the smallest problem") {
    const auto r = run({"bench", "--n1", "1", "--n2", "1", "--d", "1", "--classes", "2", "--batch", "1",
                        "--repetitions", "1"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("version,leg,n1,n2,d,classes,batch,repetitions,status,median_ms,p95_ms,param_count") == 0);
    CHECK(count_lines_with(r.out, ",ok,") == 2);
  }

  TEST_CASE("bench refuses the explicit leg at full scale") {
    const auto r = run({"bench", "--repetitions", "1", "--batch", "1"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("1,mcb,2048,2048,16000,3000,1,1,ok,") != std::string::npos);
    CHECK(r.out.find(",48000000\n") != std::string::npos);
    CHECK(r.out.find("refused,,,12582912000\n") != std::string::npos);
    CHECK(run({"bench", "--d", "0"}).code == 3);
  }

  TEST_CASE("ablation report shape") {
    const auto dir = fresh_dir("ablate");
    const auto r = run(with({"ablate", "--methods", "mcb,concat,sum", "--seeds", "1..5", "--d", "32", "--out",
                             dir.string()},
                            kSmallTrain));
    REQUIRE(r.code == 0);
    const auto csv = io::read_text(dir / "ablation.csv");
    CHECK(count_lines_with(csv, ",run,") == 15);
    CHECK(count_lines_with(csv, ",mean,") == 3);
    CHECK(count_lines_with(csv, ",std,") == 3);
    CHECK(fs::exists(dir / "ablation.json"));
    CHECK(fs::exists(dir / "timing.json"));
  }

  TEST_CASE("train output is byte-identical across runs") {
    const auto a = fresh_dir("train_a");
    const auto b = fresh_dir("train_b");
    const auto args = with({"train", "--pooling", "mcb", "--d", "32", "--seed", "3"}, kSmallTrain);
    REQUIRE(run(with(args, {"--out", a.string()})).code == 0);
    REQUIRE(run(with(args, {"--out", b.string()})).code == 0);
    CHECK(io::read_text(a / "train.json") == io::read_text(b / "train.json"));
    CHECK(io::read_text(a / "train.csv") == io::read_text(b / "train.csv"));
  }

  TEST_CASE("invalid flag combinations name the flag") {
    const auto dir = fresh_dir("invalid");
    const auto glimpses = run({"train", "--glimpses", "2", "--out", dir.string()});
    CHECK(glimpses.code != 0);
    CHECK((glimpses.out + glimpses.err).find("--glimpses") != std::string::npos);

    const auto d_concat = run({"train", "--pooling", "concat", "--d", "64", "--out", dir.string()});
    CHECK(d_concat.code == 2);
    CHECK(d_concat.err.find("--d") != std::string::npos);

    const auto fc = run({"train", "--pooling", "concat-fc", "--out", dir.string()});
    CHECK(fc.code == 2);
    CHECK(fc.err.find("--hidden") != std::string::npos);

    const auto seeds = run({"ablate", "--seeds", "x", "--out", dir.string()});
    CHECK(seeds.code == 2);
    CHECK(seeds.err.find("--seeds") != std::string::npos);

    CHECK(run({"train", "--pooling", "max", "--out", dir.string()}).code == 2);
    CHECK(run({"train"}).code != 0);
  }

  TEST_CASE("sketch save and load") {
    const auto dir = fresh_dir("sketch");
    const auto file = (dir / "s.json").string();
    REQUIRE(run({"sketch", "save", "--n", "32", "--d", "20", "--seed", "7", file}).code == 0);
    CHECK(io::read_text(file) == io::read_text(std::string(MCB_TEST_DATA_DIR) + "/golden_sketch.json"));
    const auto loaded = run({"sketch", "load", file});
    CHECK(loaded.code == 0);
    CHECK(loaded.out.find("n=32 d=20 seed=7") == 0);
    io::write_text(file, "{}");
    CHECK(run({"sketch", "load", file}).code == 4);
  }

  TEST_CASE("gen writes a readable dataset") {
    const auto dir = fresh_dir("gen");
    const auto file = dir / "d.jsonl";
    REQUIRE(run({"gen", "--kind", "classification", "--count", "25", "--n1", "4", "--n2", "3", "--classes", "3",
                 file.string()})
                .code == 0);
    CHECK(io::read_classification_dataset(file).size() == 25);
  }
}
