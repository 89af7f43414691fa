#pragma once

// Result emission: CSV tables, SVG charts, run metadata and the output manifest.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "synlab/harness.hpp"

namespace synlab {

inline constexpr std::string_view kReportCsvHeader = "train_set,test_set,fold,threshold,accuracy,seed,stddev,status";
inline constexpr std::string_view kFoldsCsvHeader = "train_set,test_set,seed,fold,threshold,accuracy";

namespace detail {

inline std::string num(double v) { return format_double(v); }

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline std::string rgb_hex(int r, int g, int b) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

/// Mean fold threshold of a verification run.
inline double mean_threshold(const VerificationReport& v) {
  double s = 0.0;
  for (const auto& f : v.folds) s += f.threshold;
  return v.folds.empty() ? 0.0 : s / static_cast<double>(v.folds.size());
}

}  // namespace detail

/// `n` distinct colours. Hues are evenly spaced while that keeps them apart;
/// past 256 classes an odd multiplier walks the 24-bit cube instead, which
/// stays injective.
inline std::vector<std::string> class_palette(std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  if (n <= 256) {
    for (std::size_t i = 0; i < n; ++i) {
      const double h = 360.0 * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(n, 1));
      const double c = 0.75, x = c * (1.0 - std::fabs(std::fmod(h / 60.0, 2.0) - 1.0)), m = 0.15;
      double r = 0, g = 0, b = 0;
      switch (static_cast<int>(h / 60.0)) {
        case 0: r = c, g = x; break;
        case 1: r = x, g = c; break;
        case 2: g = c, b = x; break;
        case 3: g = x, b = c; break;
        case 4: r = x, b = c; break;
        default: r = c, b = x; break;
      }
      // 0.75 * 255 / 256 ~ 0.75 degree of hue per step, so rounding cannot collide
      out.push_back(detail::rgb_hex(static_cast<int>(std::lround((r + m) * 255)),
                                    static_cast<int>(std::lround((g + m) * 255)),
                                    static_cast<int>(std::lround((b + m) * 255))));
    }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t v = static_cast<std::uint32_t>(i * 0x9E3779B1ULL) & 0xFFFFFFu;
    out.push_back(detail::rgb_hex(static_cast<int>(v >> 16), static_cast<int>((v >> 8) & 0xFF),
                                  static_cast<int>(v & 0xFF)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

/// One row per cell (fold = all, threshold = mean of the fold thresholds),
/// then one aggregate row per (train_set, test_set) with seed = mean.
inline void write_report_csv(const ExperimentReport& rep, std::ostream& out) {
  using detail::csv_field;
  using detail::num;
  out << kReportCsvHeader << "\n";
  for (const auto& c : rep.cells) {
    out << csv_field(c.train_set) << "," << csv_field(c.test_set) << ",all,";
    if (c.failed())
      out << ",," << c.seed << ",,failed\n";
    else
      out << num(detail::mean_threshold(*c.verification)) << "," << num(c.accuracy()) << "," << c.seed << ",,ok\n";
  }
  for (const auto& a : rep.aggregates())
    out << csv_field(a.train_set) << "," << csv_field(a.test_set) << ",all,," << num(a.mean) << ",mean,"
        << num(a.stddev) << ",aggregate\n";
}

inline void write_folds_csv(const ExperimentReport& rep, std::ostream& out) {
  out << kFoldsCsvHeader << "\n";
  for (const auto& c : rep.cells) {
    if (c.failed()) continue;
    for (std::size_t f = 0; f < c.verification->folds.size(); ++f) {
      const FoldResult& fr = c.verification->folds[f];
      out << detail::csv_field(c.train_set) << "," << detail::csv_field(c.test_set) << "," << c.seed << "," << f
          << "," << detail::num(fr.threshold) << "," << detail::num(fr.accuracy) << "\n";
    }
  }
}

inline void write_mds_csv(const Embedding2D& e, std::ostream& out) {
  out << "class,x,y\n";
  for (Eigen::Index i = 0; i < e.coordinates.rows(); ++i) {
    const double y = e.coordinates.cols() > 1 ? e.coordinates(i, 1) : 0.0;
    out << (e.classes.empty() ? 0u : e.classes[static_cast<std::size_t>(i)]) << "," << detail::num(e.coordinates(i, 0))
        << "," << detail::num(y) << "\n";
  }
}

// ---------------------------------------------------------------------------
// SVG

/// Grouped bar chart of mean accuracy with +-1 stddev whiskers: one group per
/// training configuration, one bar per test set.
inline void write_bar_chart_svg(const ExperimentReport& rep, std::ostream& out, std::string_view title = {}) {
  const auto rows = rep.aggregates();
  std::vector<std::string> trains, tests;
  for (const auto& a : rows) {
    if (std::find(trains.begin(), trains.end(), a.train_set) == trains.end()) trains.push_back(a.train_set);
    if (std::find(tests.begin(), tests.end(), a.test_set) == tests.end()) tests.push_back(a.test_set);
  }
  const double bar_w = 28.0, gap = 24.0, left = 60.0, top = 40.0, plot_h = 240.0;
  const double group_w = bar_w * static_cast<double>(std::max<std::size_t>(tests.size(), 1)) + gap;
  const double width = left + group_w * static_cast<double>(std::max<std::size_t>(trains.size(), 1)) + 140.0;
  const double height = top + plot_h + 70.0;
  // Axis from the lowest whisker rounded down to 0.05, so differences of a
  // point or two stay visible.
  double lo = 1.0;
  for (const auto& a : rows) lo = std::min(lo, a.mean - a.stddev);
  lo = std::clamp(std::floor(lo * 20.0) / 20.0, 0.0, 0.95);
  auto y_of = [&](double acc) { return top + plot_h * (1.0 - (std::clamp(acc, lo, 1.0) - lo) / (1.0 - lo)); };
  const auto colors = class_palette(tests.size());

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  if (!title.empty())
    out << "<text x=\"" << left << "\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\">"
        << detail::xml_escape(title) << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"#000\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double acc = lo + (1.0 - lo) * k / 4.0;
    out << "<text x=\"" << left - 6 << "\" y=\"" << y_of(acc) + 4
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" << detail::num(std::round(acc * 1000) / 1000)
        << "</text>\n";
  }
  for (std::size_t g = 0; g < trains.size(); ++g) {
    const double gx = left + gap / 2 + group_w * static_cast<double>(g);
    for (std::size_t t = 0; t < tests.size(); ++t) {
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow& a) {
        return a.train_set == trains[g] && a.test_set == tests[t];
      });
      if (it == rows.end()) continue;
      const double x = gx + bar_w * static_cast<double>(t);
      const double y = y_of(it->mean);
      out << "<rect class=\"bar\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w - 4 << "\" height=\""
          << top + plot_h - y << "\" fill=\"" << colors[t] << "\"><title>" << detail::xml_escape(trains[g]) << " / "
          << detail::xml_escape(tests[t]) << ": " << detail::num(it->mean) << "</title></rect>\n";
      const double cx = x + (bar_w - 4) / 2;
      out << "<line class=\"errorbar\" x1=\"" << cx << "\" y1=\"" << y_of(it->mean + it->stddev) << "\" x2=\"" << cx
          << "\" y2=\"" << y_of(it->mean - it->stddev) << "\" stroke=\"#000\"/>\n";
    }
    out << "<text x=\"" << gx + (group_w - gap) / 2 << "\" y=\"" << top + plot_h + 16
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << detail::xml_escape(trains[g])
        << "</text>\n";
  }
  const double lx = left + group_w * static_cast<double>(trains.size()) + 10;
  for (std::size_t t = 0; t < tests.size(); ++t) {
    const double ly = top + 16.0 * static_cast<double>(t);
    out << "<rect x=\"" << lx << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\"" << colors[t] << "\"/>\n";
    out << "<text x=\"" << lx + 14 << "\" y=\"" << ly + 9 << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << detail::xml_escape(tests[t]) << "</text>\n";
  }
  out << "</svg>\n";
}

/// Scatter plot with one circle per sample, coloured by class.
inline void write_mds_svg(const Embedding2D& e, std::ostream& out, std::string_view title = {}) {
  const double size = 480.0, pad = 20.0;
  const Eigen::Index n = e.coordinates.rows();
  double extent = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, e.coordinates.cols()); ++k)
      extent = std::max(extent, std::fabs(e.coordinates(i, k)));
  if (extent == 0.0) extent = 1.0;
  std::vector<std::uint32_t> distinct(e.classes.begin(), e.classes.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.empty()) distinct.push_back(0);
  const auto colors = class_palette(distinct.size());
  auto color_of = [&](std::uint32_t c) {
    return colors[static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), c) - distinct.begin())];
  };
  const double half = size / 2 - pad;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
      << size << " " << size << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  if (!title.empty())
    out << "<text x=\"" << pad << "\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\">" << detail::xml_escape(title)
        << "</text>\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::uint32_t cls = e.classes.empty() ? 0u : e.classes[static_cast<std::size_t>(i)];
    const double x = size / 2 + half * e.coordinates(i, 0) / extent;
    const double y = size / 2 - half * (e.coordinates.cols() > 1 ? e.coordinates(i, 1) : 0.0) / extent;
    out << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"3\" fill=\"" << color_of(cls) << "\" data-class=\"" << cls
        << "\"/>\n";
  }
  out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Files

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot write " + path.string());
  f << text;
  if (!f) throw FormatError(FormatError::Kind::io, "write failed for " + path.string());
}

template <class Fn>
void write_with(const std::filesystem::path& path, Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  write_text_file(path, ss.str());
}

inline nlohmann::json report_metadata(const ExperimentReport& rep) {
  nlohmann::json j;
  j["kind"] = rep.kind;
  j["run_id"] = rep.run_id;
  j["config_hash"] = hex64(rep.config_hash);
  j["wall_seconds"] = rep.wall_seconds;
  j["partial"] = rep.partial;
  if (rep.partial) j["failure"] = rep.failure;
  j["cells"] = rep.cells.size();
  auto& agg = j["aggregates"] = nlohmann::json::array();
  for (const auto& a : rep.aggregates())
    agg.push_back({{"train_set", a.train_set}, {"test_set", a.test_set}, {"mean", a.mean}, {"stddev", a.stddev},
                   {"seeds", a.count}});
  return j;
}

inline const std::set<std::string, std::less<>>& known_report_formats() {
  static const std::set<std::string, std::less<>> f{"csv", "svg", "json"};
  return f;
}

/// Writes the requested formats into `dir` and returns the files written.
/// csv: report.csv and folds.csv; svg: report.svg; json: run.json.
inline std::vector<std::filesystem::path> emit_report(const ExperimentReport& rep, const std::filesystem::path& dir,
                                                      const std::vector<std::string>& formats = {"csv"}) {
  for (const auto& f : formats)
    if (known_report_formats().count(f) == 0) throw InvalidArgument("unknown report format '" + f + "'");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto has = [&](std::string_view f) { return std::find(formats.begin(), formats.end(), f) != formats.end(); };
  if (has("csv")) {
    write_with(dir / "report.csv", [&](std::ostream& o) { write_report_csv(rep, o); });
    write_with(dir / "folds.csv", [&](std::ostream& o) { write_folds_csv(rep, o); });
    written.insert(written.end(), {dir / "report.csv", dir / "folds.csv"});
  }
  if (has("svg")) {
    write_with(dir / "report.svg", [&](std::ostream& o) { write_bar_chart_svg(rep, o, rep.kind); });
    written.push_back(dir / "report.svg");
  }
  if (has("json")) {
    write_text_file(dir / "run.json", report_metadata(rep).dump(2) + "\n");
    written.push_back(dir / "run.json");
  }
  return written;
}

/// manifest.txt: one "<fnv1a64>  <bytes>  <relative path>" line per regular
/// file under `dir`, sorted by path. The manifest itself is not listed.
inline std::filesystem::path write_manifest(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.txt") files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  std::ostringstream out;
  for (const auto& rel : files) {
    const std::vector<char> bytes = io::read_file(dir / rel);
    out << hex64(fnv1a64(std::string_view(bytes.data(), bytes.size()))) << "  " << bytes.size() << "  "
        << rel.generic_string() << "\n";
  }
  write_text_file(dir / "manifest.txt", out.str());
  return dir / "manifest.txt";
}

}  // namespace synlab
