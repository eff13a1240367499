#include "wsib/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "wsib/error.hpp"
#include "wsib/png_io.hpp"

namespace fs = std::filesystem;

namespace wsib {

Confusion confusion(const Mask& pred, const Mask& gt) {
  require_same_dims(pred, gt, "prediction vs ground truth");
  const auto p = pred.data();
  const auto g = gt.data();
  const auto n = static_cast<std::ptrdiff_t>(p.size());
  std::uint64_t tp = 0, fp = 0, fn = 0;
#pragma omp parallel for reduction(+ : tp, fp, fn) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    tp += p[i] & g[i];
    fp += p[i] & (g[i] ^ 1);
    fn += (p[i] ^ 1) & g[i];
  }
  return {tp, fp, fn, static_cast<std::uint64_t>(n) - tp - fp - fn};
}

double dice(const Confusion& c, double empty_score) {
  const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return empty_score;
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

double dice(const Mask& pred, const Mask& gt, double empty_score) { return dice(confusion(pred, gt), empty_score); }

std::vector<Mark> rank_marks(const std::vector<std::optional<double>>& row, bool higher_is_better) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < row.size(); ++i)
    if (row[i]) order.push_back(i);
  const auto key = [&](std::size_t i) {
    const auto k = std::llround(*row[i] * 1000.0);
    return higher_is_better ? -k : k;
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  std::vector<Mark> marks(row.size(), Mark::none);
  if (!order.empty()) marks[order[0]] = Mark::best;
  if (order.size() > 1) marks[order[1]] = Mark::second;
  return marks;
}

namespace {

bool report_has_timing(const EvalReport& r) {
  for (const auto& row : r.cells)
    for (const auto& c : row)
      if (c.ok() && c.timing.total > 0.0) return true;
  return false;
}

std::vector<std::optional<double>> column_means(const EvalReport& r,
                                                std::vector<std::optional<double>> (EvalReport::*row_fn)(std::size_t)
                                                    const) {
  std::vector<std::optional<double>> means(r.strategies.size());
  for (std::size_t s = 0; s < r.strategies.size(); ++s) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < r.images.size(); ++i)
      if (const auto v = (r.*row_fn)(i)[s]) {
        sum += *v;
        ++n;
      }
    if (n) means[s] = sum / static_cast<double>(n);
  }
  return means;
}

std::string cell_text(const std::optional<double>& v, Mark mark) {
  if (!v) return "error";
  const auto text = fmt::format("{:.3f}", *v);
  switch (mark) {
    case Mark::best: return "**" + text + "**";
    case Mark::second: return "<u>" + text + "</u>";
    case Mark::none: break;
  }
  return text;
}

void markdown_table(std::ostringstream& out, const EvalReport& r, const std::string& title,
                    std::vector<std::optional<double>> (EvalReport::*row_fn)(std::size_t) const,
                    const std::vector<std::optional<double>>& means, bool higher_is_better) {
  out << "## " << title << "\n\n| Image |";
  for (const auto& s : r.strategies) out << ' ' << s << " |";
  out << "\n| --- |";
  for (std::size_t s = 0; s < r.strategies.size(); ++s) out << " ---: |";
  out << '\n';
  const auto emit = [&](const std::string& name, const std::vector<std::optional<double>>& row) {
    const auto marks = rank_marks(row, higher_is_better);
    out << "| " << name << " |";
    for (std::size_t s = 0; s < row.size(); ++s) out << ' ' << cell_text(row[s], marks[s]) << " |";
    out << '\n';
  };
  for (std::size_t i = 0; i < r.images.size(); ++i) emit(r.images[i], (r.*row_fn)(i));
  emit("Mean", means);
  out << '\n';
}

std::string csv_quote(const std::string& s) {
  std::string flat = s;
  std::replace(flat.begin(), flat.end(), '\n', ' ');
  if (flat.find_first_of(",\"") == std::string::npos) return flat;
  std::string q = "\"";
  for (char c : flat) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

std::vector<std::string> csv_fields(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw_data(fmt::format("report csv line {}: unterminated quote", line_no));
  return fields;
}

constexpr const char* kCsvHeader =
    "image,strategy,dice,tp,fp,fn,tn,tiling_s,features_s,inference_s,reconstruction_s,total_s,error";

double parse_real(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw_data(fmt::format("report csv line {}: '{}' is not a number", line_no, s));
  }
}

}  // namespace

EvalReport EvalReport::from_values(std::vector<std::string> images, std::vector<std::string> strategies,
                                   const std::vector<std::vector<std::optional<double>>>& dice,
                                   const std::vector<std::vector<std::optional<double>>>& times) {
  EvalReport r{std::move(images), std::move(strategies), {}};
  if (dice.size() != r.images.size()) throw_data("from_values: dice rows do not match image count");
  if (!times.empty() && times.size() != r.images.size()) throw_data("from_values: time rows do not match image count");
  r.cells.assign(r.images.size(), std::vector<EvalCell>(r.strategies.size()));
  for (std::size_t i = 0; i < r.images.size(); ++i) {
    if (dice[i].size() != r.strategies.size()) throw_data("from_values: dice row width does not match strategies");
    for (std::size_t s = 0; s < r.strategies.size(); ++s) {
      auto& cell = r.cells[i][s];
      cell.dice = dice[i][s];
      if (!cell.dice) cell.error = "missing";
      if (!times.empty() && times[i].at(s)) cell.timing.total = *times[i][s];
    }
  }
  return r;
}

std::vector<std::optional<double>> EvalReport::dice_row(std::size_t image) const {
  std::vector<std::optional<double>> row;
  for (const auto& c : cells.at(image)) row.push_back(c.dice);
  return row;
}

std::vector<std::optional<double>> EvalReport::time_row(std::size_t image) const {
  std::vector<std::optional<double>> row;
  for (const auto& c : cells.at(image)) row.push_back(c.ok() ? std::optional<double>(c.timing.total) : std::nullopt);
  return row;
}

std::vector<std::optional<double>> EvalReport::mean_dice() const { return column_means(*this, &EvalReport::dice_row); }
std::vector<std::optional<double>> EvalReport::mean_time() const { return column_means(*this, &EvalReport::time_row); }

std::size_t EvalReport::failed_cells() const {
  std::size_t n = 0;
  for (const auto& row : cells) n += static_cast<std::size_t>(std::count_if(row.begin(), row.end(), [](const auto& c) { return !c.ok(); }));
  return n;
}

std::string format_report(const EvalReport& r, ReportStyle style) {
  std::ostringstream out;
  if (style == ReportStyle::markdown) {
    markdown_table(out, r, "Dice", &EvalReport::dice_row, r.mean_dice(), true);
    if (report_has_timing(r)) markdown_table(out, r, "Time (s)", &EvalReport::time_row, r.mean_time(), false);
    if (r.failed_cells()) {
      out << "## Errors\n\n";
      for (std::size_t i = 0; i < r.images.size(); ++i)
        for (std::size_t s = 0; s < r.strategies.size(); ++s)
          if (!r.cells[i][s].ok()) out << "- " << r.images[i] << " / " << r.strategies[s] << ": " << r.cells[i][s].error << '\n';
      out << '\n';
    }
    return out.str();
  }
  out << kCsvHeader << '\n';
  for (std::size_t i = 0; i < r.images.size(); ++i)
    for (std::size_t s = 0; s < r.strategies.size(); ++s) {
      const auto& c = r.cells[i][s];
      out << csv_quote(r.images[i]) << ',' << csv_quote(r.strategies[s]) << ',';
      if (c.ok()) {
        const auto& t = c.timing;
        out << fmt::format("{:.3f},{},{},{},{},{:.3f},{:.3f},{:.3f},{:.3f},{:.3f},", *c.dice, c.counts.tp, c.counts.fp,
                           c.counts.fn, c.counts.tn, t.tiling, t.features, t.inference, t.reconstruction, t.total);
      } else {
        out << ",,,,,,,,,," << csv_quote(c.error);
      }
      out << '\n';
    }
  return out.str();
}

EvalReport parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kCsvHeader) throw_data("report csv: missing or unexpected header");
  struct Entry {
    std::string image, strategy;
    EvalCell cell;
  };
  std::vector<Entry> entries;
  EvalReport r;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv_fields(line, line_no);
    if (f.size() != 13) throw_data(fmt::format("report csv line {}: expected 13 fields, got {}", line_no, f.size()));
    Entry e{f[0], f[1], {}};
    if (f[2].empty()) {
      e.cell.error = f[12];
    } else {
      e.cell.dice = parse_real(f[2], line_no);
      e.cell.counts = {std::stoull(f[3]), std::stoull(f[4]), std::stoull(f[5]), std::stoull(f[6])};
      e.cell.timing = {parse_real(f[7], line_no), parse_real(f[8], line_no), parse_real(f[9], line_no),
                       parse_real(f[10], line_no), parse_real(f[11], line_no)};
    }
    if (std::find(r.images.begin(), r.images.end(), e.image) == r.images.end()) r.images.push_back(e.image);
    if (std::find(r.strategies.begin(), r.strategies.end(), e.strategy) == r.strategies.end())
      r.strategies.push_back(e.strategy);
    entries.push_back(std::move(e));
  }
  r.cells.assign(r.images.size(), std::vector<EvalCell>(r.strategies.size()));
  std::vector<std::vector<bool>> seen(r.images.size(), std::vector<bool>(r.strategies.size()));
  for (auto& e : entries) {
    const auto i = static_cast<std::size_t>(std::find(r.images.begin(), r.images.end(), e.image) - r.images.begin());
    const auto s =
        static_cast<std::size_t>(std::find(r.strategies.begin(), r.strategies.end(), e.strategy) - r.strategies.begin());
    if (seen[i][s]) throw_data(fmt::format("report csv: duplicate cell {} / {}", e.image, e.strategy));
    seen[i][s] = true;
    r.cells[i][s] = std::move(e.cell);
  }
  for (std::size_t i = 0; i < r.images.size(); ++i)
    for (std::size_t s = 0; s < r.strategies.size(); ++s)
      if (!seen[i][s]) throw_data(fmt::format("report csv: missing cell {} / {}", r.images[i], r.strategies[s]));
  return r;
}

std::string format_timings_json(const EvalReport& r) {
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.images.size(); ++i)
    for (std::size_t s = 0; s < r.strategies.size(); ++s) {
      const auto& c = r.cells[i][s];
      nlohmann::ordered_json j = {{"image", r.images[i]}, {"strategy", r.strategies[s]}};
      if (c.ok()) {
        j["tiling"] = c.timing.tiling;
        j["features"] = c.timing.features;
        j["inference"] = c.timing.inference;
        j["reconstruction"] = c.timing.reconstruction;
        j["total"] = c.timing.total;
      } else {
        j["error"] = c.error;
      }
      cells.push_back(std::move(j));
    }
  nlohmann::ordered_json means = nlohmann::ordered_json::object();
  const auto mt = r.mean_time();
  for (std::size_t s = 0; s < r.strategies.size(); ++s) means[r.strategies[s]] = mt[s] ? nlohmann::ordered_json(*mt[s]) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json root = {{"cells", cells}, {"mean_total", means}};
  return root.dump(2) + "\n";
}

EvalReport run_benchmark(const std::vector<BenchmarkCase>& dataset, const std::vector<StrategySetup>& strategies,
                         std::vector<Mask>* predictions) {
  if (dataset.empty()) throw_data("benchmark dataset is empty");
  if (strategies.empty()) throw_usage("benchmark needs at least one strategy");
  EvalReport r;
  for (const auto& c : dataset) r.images.push_back(c.name);
  for (const auto& s : strategies) r.strategies.push_back(s.name);
  r.cells.assign(dataset.size(), std::vector<EvalCell>(strategies.size()));
  if (predictions) predictions->assign(dataset.size() * strategies.size(), Mask{});

  for (std::size_t i = 0; i < dataset.size(); ++i)
    for (std::size_t s = 0; s < strategies.size(); ++s) {
      const auto& setup = strategies[s];
      auto& cell = r.cells[i][s];
      if (!setup.setup_error.empty()) {
        cell.error = setup.setup_error;
        continue;
      }
      try {
        const auto backend = setup.backend_for ? setup.backend_for(i) : setup.backend;
        if (!backend) throw_usage(fmt::format("strategy {} has no backend", setup.name));
        auto result = run_pipeline(dataset[i].image, *backend, setup.config, setup.prompt ? &*setup.prompt : nullptr);
        cell.counts = confusion(result.mask, dataset[i].ground_truth);
        cell.dice = dice(cell.counts);
        cell.timing = result.timing;
        if (predictions) (*predictions)[i * strategies.size() + s] = std::move(result.mask);
      } catch (const std::exception& e) {
        cell.dice.reset();
        cell.error = e.what();
      }
    }
  return r;
}

std::vector<BenchmarkCase> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw_data(fmt::format("{}: dataset directory does not exist", dir.string()));
  std::vector<fs::path> roots;
  if (fs::exists(dir / "slide.png")) roots.push_back(dir);
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && fs::exists(entry.path() / "slide.png")) roots.push_back(entry.path());
  std::sort(roots.begin(), roots.end());
  if (roots.empty()) throw_data(fmt::format("{}: no slide.png/mask.png pairs found", dir.string()));
  std::vector<BenchmarkCase> cases;
  for (const auto& root : roots) {
    const auto mask_path = root / "mask.png";
    if (!fs::exists(mask_path)) throw_data(fmt::format("{}: missing mask file", mask_path.string()));
    BenchmarkCase c{root == dir ? dir.filename().string() : root.filename().string(), load_image(root / "slide.png"),
                    load_mask(mask_path)};
    require_same_dims(c.image, c.ground_truth, root.string().c_str());
    cases.push_back(std::move(c));
  }
  return cases;
}

void write_report_files(const EvalReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(out_dir / name);
    out << text;
    if (!out) throw_data(fmt::format("{}: write failed", (out_dir / name).string()));
  };
  write("report.md", format_report(report, ReportStyle::markdown));
  write("report.csv", format_report(report, ReportStyle::csv));
  write("timings.json", format_timings_json(report));
}

}  // namespace wsib
