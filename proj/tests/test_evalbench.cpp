#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "support.hpp"
#include "wsib/error.hpp"
#include "wsib/evalbench.hpp"
#include "wsib/png_io.hpp"

using namespace wsib;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kColumns{"patch", "superpixel", "semantic", "prompt"};

Confusion brute_force(const Mask& p, const Mask& g) {
  Confusion c;
  for (int y = 0; y < p.height(); ++y)
    for (int x = 0; x < p.width(); ++x) {
      const bool a = p.at(x, y), b = g.at(x, y);
      if (a && b) ++c.tp;
      else if (a) ++c.fp;
      else if (b) ++c.fn;
      else ++c.tn;
    }
  return c;
}

double set_dice(const Mask& p, const Mask& g) {
  std::size_t inter = 0, np = 0, ng = 0;
  for (int y = 0; y < p.height(); ++y)
    for (int x = 0; x < p.width(); ++x) {
      inter += p.at(x, y) && g.at(x, y);
      np += p.at(x, y);
      ng += g.at(x, y);
    }
  return np + ng == 0 ? 1.0 : 2.0 * double(inter) / double(np + ng);
}

// Marks of one markdown table row: 'B' bold, 'U' underlined, '-' plain.
std::string row_marks(const std::string& markdown, const std::string& section, const std::string& label) {
  const auto start = markdown.find("## " + section);
  REQUIRE(start != std::string::npos);
  std::istringstream in(markdown.substr(start));
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("| " + label + " |", 0) != 0) continue;
    std::string marks;
    std::istringstream cells(line.substr(label.size() + 4));
    std::string cell;
    while (std::getline(cells, cell, '|')) {
      if (cell.find_first_not_of(' ') == std::string::npos) continue;
      marks += cell.find("**") != std::string::npos ? 'B' : cell.find("<u>") != std::string::npos ? 'U' : '-';
    }
    return marks;
  }
  FAIL("row not found: " << label);
  return {};
}

std::string marks_string(const std::vector<Mark>& marks) {
  std::string s;
  for (Mark m : marks) s += m == Mark::best ? 'B' : m == Mark::second ? 'U' : '-';
  return s;
}

class Failing final : public Backend {
 public:
  Failing() {
    d_.kind = BackendKind::external;
    d_.input_kind = InputKind::image_patch;
    d_.dense = true;
  }
  const BackendDescriptor& descriptor() const override { return d_; }
  ProbabilityMap predict_dense(const Image&, const ItemRef&) const override { throw_backend("unreachable"); }

 private:
  BackendDescriptor d_;
};

BenchmarkCase square_case(const std::string& name, int offset) {
  BenchmarkCase c{name, test::random_image(96, 80, offset), Mask(96, 80)};
  for (int y = 10 + offset; y < 50 + offset; ++y)
    for (int x = 20; x < 70; ++x) c.ground_truth.set(x, y, 1);
  return c;
}

StrategySetup dense_oracle_setup(const std::vector<BenchmarkCase>& data) {
  StrategySetup s;
  s.name = "semantic";
  s.config = PipelineConfig::defaults(Strategy::semantic);
  s.config.resolution_factor = 1;
  s.config.patch_size = 32;
  s.config.stride = 28;
  std::vector<std::shared_ptr<const Backend>> per_image;
  for (const auto& c : data) per_image.push_back(std::make_shared<test::DenseOracle>(downsample_fraction(c.ground_truth, 1)));
  s.backend_for = [per_image](std::size_t i) { return per_image.at(i); };
  return s;
}

}  // namespace

TEST_SUITE("evalbench") {
  TEST_CASE("dice examples") {
    Mask p(4, 4), g(4, 4);
    for (int x = 0; x < 4; ++x) p.set(x, 0, 1);
    for (int x = 0; x < 3; ++x) g.set(x, 0, 1);
    for (int x = 0; x < 3; ++x) g.set(x, 1, 1);
    CHECK(dice(p, g) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(dice(g, g) == 1.0);
    Mask d(4, 4);
    d.set(3, 3, 1);
    CHECK(dice(g, d) == 0.0);
    CHECK(dice(Mask(4, 4), Mask(4, 4)) == 1.0);
    CHECK(dice(Mask(4, 4), Mask(4, 4), 0.0) == 0.0);
    CHECK_THROWS_AS(dice(Mask(4, 4), Mask(4, 5)), Error);
  }

  TEST_CASE("confusion examples") {
    const Mask g = test::random_mask(33, 21, 1);
    const Confusion same = confusion(g, g);
    CHECK(same.fp == 0);
    CHECK(same.fn == 0);
    Mask inv(33, 21);
    for (std::size_t i = 0; i < g.pixel_count(); ++i) inv.data()[i] = 1 - g.data()[i];
    const Confusion opposite = confusion(inv, g);
    CHECK(opposite.tp == 0);
    CHECK(opposite.tn == 0);
    CHECK_THROWS_AS(confusion(Mask(2, 2), Mask(3, 2)), Error);
  }

  TEST_CASE("dice and confusion agree with brute-force counting on 1000 random pairs") {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 1000; ++i) {
      const int w = 1 + static_cast<int>(rng() % 64), h = 1 + static_cast<int>(rng() % 64);
      const double pa = (rng() % 100) / 100.0, pb = (rng() % 100) / 100.0;
      const Mask a = test::random_mask(w, h, rng(), pa), b = test::random_mask(w, h, rng(), pb);
      const Confusion c = confusion(a, b);
      REQUIRE(c == brute_force(a, b));
      REQUIRE(c.tp + c.fp + c.fn + c.tn == a.pixel_count());
      const double d = dice(a, b);
      REQUIRE(d == set_dice(a, b));
      REQUIRE(d == dice(b, a));
      REQUIRE(d == dice(c));
      REQUIRE((d >= 0.0 && d <= 1.0));
      REQUIRE(dice(a, a) == 1.0);
    }
  }

  TEST_CASE("published Dice table reproduces its bold and underline pattern") {
    const auto r = EvalReport::from_values({"lung", "breast", "kidney"}, kColumns,
                                           {{0.585, 0.773, 0.821, 0.920},
                                            {0.329, 0.821, 0.795, 0.715},
                                            {0.912, 0.940, 0.825, 0.933}});
    const auto md = format_report(r, ReportStyle::markdown);
    CHECK(row_marks(md, "Dice", "lung") == "--UB");
    CHECK(row_marks(md, "Dice", "breast") == "-BU-");
    CHECK(row_marks(md, "Dice", "kidney") == "-B-U");
    CHECK(row_marks(md, "Dice", "Mean") == "-U-B");
    CHECK(md.find("| Mean | 0.609 | <u>0.845</u> | 0.814 | **0.856** |") != std::string::npos);
    CHECK(md.find("## Time") == std::string::npos);
  }

  TEST_CASE("published timing row marks the fastest methods") {
    CHECK(marks_string(rank_marks({1153.0, 166.0, 1.0, 4.0}, false)) == "--BU");
    const auto r = EvalReport::from_values({"wsi"}, kColumns, {{0.6, 0.8, 0.8, 0.9}}, {{1153.0, 166.0, 1.0, 4.0}});
    CHECK(row_marks(format_report(r, ReportStyle::markdown), "Time (s)", "wsi") == "--BU");
  }

  TEST_CASE("ties go to the earlier column") {
    CHECK(marks_string(rank_marks({0.5, 0.5, 0.5, 0.5}, true)) == "BU--");
    CHECK(marks_string(rank_marks({0.7, 0.9, 0.9, 0.1}, true)) == "-BU-");
    CHECK(marks_string(rank_marks({0.9001, 0.9004, 0.2, 0.1}, true)) == "BU--");
    CHECK(marks_string(rank_marks({std::nullopt, 0.3, std::nullopt, 0.2}, true)) == "-B-U");
    CHECK(marks_string(rank_marks({std::nullopt, 0.3}, true)) == "-B");
  }

  TEST_CASE("csv round trip") {
    auto r = EvalReport::from_values({"a,1", "b"}, kColumns, {{0.1234, 0.5, std::nullopt, 1.0}, {0.0, 0.25, 0.75, 0.999}},
                                     {{1.5, 2.25, 0.0, 3.0}, {0.001, 0.002, 0.003, 0.004}});
    r.cells[0][2].error = "tile 3: \"quoted\" failure";
    r.cells[1][1].counts = {10, 20, 30, 40};
    const auto csv = format_report(r, ReportStyle::csv);
    const auto back = parse_report_csv(csv);
    CHECK(format_report(back, ReportStyle::csv) == csv);
    CHECK(back.images == r.images);
    CHECK(back.strategies == r.strategies);
    CHECK(back.cells[1][1].counts == Confusion{10, 20, 30, 40});
    CHECK(back.cells[0][2].error == r.cells[0][2].error);
    CHECK(*back.cells[0][0].dice == doctest::Approx(0.123));
    CHECK_THROWS_AS(parse_report_csv("bogus\n"), Error);
  }

  TEST_CASE("benchmark of one exact oracle scores 1.0") {
    const std::vector<BenchmarkCase> data{square_case("one", 0)};
    std::vector<Mask> preds;
    const auto r = run_benchmark(data, {dense_oracle_setup(data)}, &preds);
    REQUIRE(r.total_cells() == 1);
    REQUIRE(r.cells[0][0].ok());
    CHECK(*r.cells[0][0].dice == 1.0);
    CHECK(r.cells[0][0].counts.tp == data[0].ground_truth.count());
    REQUIRE(preds.size() == 1);
    CHECK(preds[0] == data[0].ground_truth);
  }

  TEST_CASE("a failing strategy does not abort the others") {
    const std::vector<BenchmarkCase> data{square_case("one", 0), square_case("two", 5)};
    StrategySetup broken = dense_oracle_setup(data);
    broken.name = "broken";
    broken.backend_for = nullptr;
    broken.backend = std::make_shared<Failing>();
    StrategySetup missing;
    missing.name = "missing";
    missing.setup_error = "model file not found";
    const auto r = run_benchmark(data, {dense_oracle_setup(data), broken, missing});
    CHECK(r.total_cells() == 6);
    CHECK(r.failed_cells() == 4);
    CHECK(r.cells[1][0].ok());
    CHECK(r.cells[0][1].error.find("unreachable") != std::string::npos);
    CHECK(r.cells[1][2].error.find("model file not found") != std::string::npos);
    const auto md = format_report(r, ReportStyle::markdown);
    CHECK(md.find("## Errors") != std::string::npos);
    CHECK(row_marks(md, "Dice", "one") == "B--");
  }

  TEST_CASE("report files and timings json") {
    test::TempDir dir;
    const auto r = EvalReport::from_values({"x"}, {"patch", "prompt"}, {{0.5, std::nullopt}}, {{2.0, std::nullopt}});
    write_report_files(r, dir.path());
    for (const char* f : {"report.md", "report.csv", "timings.json"}) CHECK(fs::exists(dir / f));
    std::ifstream in(dir / "timings.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j["mean_total"]["patch"] == 2.0);
    CHECK(j["mean_total"]["prompt"].is_null());
    CHECK(j["cells"].size() == 2);
  }

  TEST_CASE("dataset loading") {
    test::TempDir dir;
    CHECK_THROWS_AS(load_dataset(dir.path()), Error);
    for (const char* name : {"b", "a"}) {
      fs::create_directories(dir / name);
      save_image(test::random_image(8, 8, 1), dir / name / "slide.png");
      save_mask(test::random_mask(8, 8, 2), dir / name / "mask.png");
    }
    const auto data = load_dataset(dir.path());
    REQUIRE(data.size() == 2);
    CHECK(data[0].name == "a");
    CHECK(data[1].ground_truth == test::random_mask(8, 8, 2));
    fs::create_directories(dir / "c");
    save_image(test::random_image(8, 8, 1), dir / "c" / "slide.png");
    try {
      load_dataset(dir.path());
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("mask.png") != std::string::npos);
    }
  }
}
