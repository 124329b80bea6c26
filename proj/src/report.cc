#include "pedal/report.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pedal/error.h"
#include "pedal/text.h"

namespace pedal {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using text::fixed;

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string optional_cell(const std::optional<double>& v) { return v ? fixed(*v) : "NA"; }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& body) {
  auto out = open_out(path);
  out << body;
  if (!out.flush()) throw Error("write failed: " + path.string());
}

std::string prequential_row(const EvalStats& s) {
  return std::to_string(s.n) + "," + fixed(s.mae) + "," + fixed(s.mse) + "," + optional_cell(s.spearman_rho) + "," +
         optional_cell(s.pearson_r) + "," + optional_cell(s.kendall_tau);
}

std::string join_header(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  return out;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "event_seq,pct_post_edited,mean_quality\n";
  for (const auto& p : curve)
    out += std::to_string(p.events) + "," + fixed(p.pct_post_edited) + "," + fixed(p.quality) + "\n";
  return out;
}

std::string pct_label(double pct) {
  std::ostringstream s;
  s << pct << '%';
  return s.str();
}

std::string signed_pct(double v) { return (v >= 0 ? "+" : "") + fixed(v, 2) + "%"; }

std::string file_label(const std::string& label) {
  std::string out;
  for (char c : label) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_');
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

ordered_json to_json(const EvalStats& s) {
  return {{"samples", s.n},
          {"mae", s.mae},
          {"mse", s.mse},
          {"spearman_rho", optional_json(s.spearman_rho)},
          {"pearson_r", optional_json(s.pearson_r)},
          {"kendall_tau", optional_json(s.kendall_tau)}};
}

EvalStats eval_stats_from_json(const json& j) {
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  EvalStats s;
  s.n = j.at("samples").get<std::size_t>();
  s.mae = j.at("mae").get<double>();
  s.mse = j.at("mse").get<double>();
  s.spearman_rho = opt("spearman_rho");
  s.pearson_r = opt("pearson_r");
  s.kendall_tau = opt("kendall_tau");
  return s;
}

void write_run_outputs(const RunReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "curve.csv", curve_csv(report.curve));

  std::string cps = "checkpoint_pct,events,mean_quality\n";
  for (const auto& c : report.checkpoints)
    cps += fixed(c.pct, 2) + "," + std::to_string(c.events) + "," + fixed(c.quality) + "\n";
  write_text(dir / "checkpoints.csv", cps);

  write_text(dir / "prequential.csv", join_header(kPrequentialHeader) + "\n" + prequential_row(report.prequential) + "\n");
  write_text(dir / "report.json", report.to_json().dump(2) + "\n");
  write_text(dir / "snapshot.json", report.snapshot + "\n");
}

void write_comparison_outputs(const ComparisonReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  std::vector<std::string> header{"Policy"};
  for (double pct : report.checkpoints) {
    header.push_back(pct_label(pct));
    header.push_back("Δ" + pct_label(pct));
  }
  std::string table = join_header(header) + "\n";
  for (std::size_t i = 0; i < report.policies.size(); ++i) {
    const auto& p = report.policies[i];
    table += p.label;
    for (std::size_t c = 0; c < report.checkpoints.size(); ++c)
      table += "," + fixed(p.checkpoint_quality[c], 4) + "," + signed_pct(report.delta_pct[i][c]);
    table += "\n";
  }
  write_text(dir / "comparison.csv", table);

  std::vector<std::string> pre{"Policy"};
  pre.insert(pre.end(), kPrequentialHeader.begin(), kPrequentialHeader.end());
  std::string prequential = join_header(pre) + "\n";
  for (const auto& p : report.policies) prequential += p.label + "," + prequential_row(p.prequential) + "\n";
  write_text(dir / "prequential.csv", prequential);

  std::vector<std::string> seed_header{"Policy", "Seed"};
  for (double pct : report.checkpoints) seed_header.push_back(pct_label(pct));
  std::string seeds = join_header(seed_header) + "\n";
  for (const auto& p : report.policies) {
    for (const auto& r : p.runs) {
      seeds += p.label + "," + std::to_string(r.seed);
      for (const auto& c : r.checkpoints) seeds += "," + fixed(c.quality, 4);
      seeds += "\n";
    }
    write_text(dir / ("curve_" + file_label(p.label) + ".csv"), curve_csv(p.mean_curve));
  }
  write_text(dir / "seeds.csv", seeds);
  write_text(dir / "report.json", report.to_json().dump(2) + "\n");
}

std::vector<CurvePoint> read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<CurvePoint> out;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = text::chomp(line);
    if (line_no == 1) {
      if (row != "event_seq,pct_post_edited,mean_quality") throw ParseError("not a curve file", line_no);
      continue;
    }
    if (row.empty()) continue;
    const auto cols = text::split(row, ',');
    if (cols.size() != 3) throw ParseError("expected 3 columns", line_no);
    try {
      out.push_back({std::stoul(std::string(cols[0])), std::stod(std::string(cols[1])),
                     std::stod(std::string(cols[2]))});
    } catch (const std::exception&) {
      throw ParseError("bad number", line_no);
    }
  }
  if (out.empty()) throw ParseError("curve file has no rows", line_no);
  return out;
}

std::string policy_color(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Estimator: return "#e6b800";
    case PolicyKind::Random: return "#2e9e44";
    case PolicyKind::Oracle: return "#d62728";
  }
  return "#444444";
}

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title) {
  constexpr double width = 760, height = 480, left = 70, right = 170, top = 40, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;

  double lo = 100.0, hi = 0.0;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      lo = std::min(lo, p.quality);
      hi = std::max(hi, p.quality);
    }
  if (lo > hi) lo = 0, hi = 100;
  lo = std::max(0.0, std::floor(lo / 5.0) * 5.0);
  hi = std::min(100.0, std::ceil(hi / 5.0) * 5.0);
  if (hi <= lo) hi = lo + 5.0;

  auto x_of = [&](double pct) { return left + pct / 100.0 * plot_w; };
  auto y_of = [&](double q) { return top + (hi - q) / (hi - lo) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(title) << "</text>\n";

  for (int t = 0; t <= 10; ++t) {
    const double x = x_of(t * 10.0);
    svg << "<line x1=\"" << x << "\" y1=\"" << top << "\" x2=\"" << x << "\" y2=\"" << top + plot_h
        << "\" stroke=\"#e5e5e5\"/>\n";
    svg << "<text x=\"" << x << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"middle\">" << t * 10 << "</text>\n";
  }
  const int y_steps = static_cast<int>(std::lround((hi - lo) / 5.0));
  for (int t = 0; t <= y_steps; ++t) {
    const double q = lo + t * (hi - lo) / y_steps;
    const double y = y_of(q);
    svg << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + plot_w << "\" y2=\"" << y
        << "\" stroke=\"#e5e5e5\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fixed(q, 0) << "</text>\n";
  }
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 18
      << "\" text-anchor=\"middle\">% of segments post-edited</text>\n";
  svg << "<text transform=\"translate(20 " << top + plot_h / 2
      << ") rotate(-90)\" text-anchor=\"middle\">mean quality (100 - TER)</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const std::size_t stride = std::max<std::size_t>(1, s.points.size() / 500);
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < s.points.size(); k += stride)
      svg << fixed(x_of(s.points[k].pct_post_edited), 2) << ',' << fixed(y_of(s.points[k].quality), 2) << ' ';
    if (!s.points.empty())
      svg << fixed(x_of(s.points.back().pct_post_edited), 2) << ',' << fixed(y_of(s.points.back().quality), 2);
    svg << "\"/>\n";
    const double ly = top + 16 + static_cast<double>(i) * 20;
    svg << "<line x1=\"" << left + plot_w + 14 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 38 << "\" y2=\""
        << ly << "\" stroke=\"" << s.color << "\" stroke-width=\"3\"/>\n";
    svg << "<text x=\"" << left + plot_w + 44 << "\" y=\"" << ly + 4 << "\">" << xml_escape(s.label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::filesystem::path plot_run_directory(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir) {
  const auto report_path = run_dir / "report.json";
  std::ifstream in(report_path);
  if (!in) throw Error("no report.json in " + run_dir.string());
  json report;
  try {
    report = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(report_path.string() + ": " + e.what());
  }

  std::vector<PlotSeries> series;
  std::string title = "Quality vs. post-editing effort";
  if (report.contains("policies")) {
    for (const auto& p : report.at("policies")) {
      const auto label = p.at("label").get<std::string>();
      const auto kind = Policy::parse_kind(p.at("policy").get<std::string>());
      series.push_back({label, policy_color(kind), read_curve_csv(run_dir / ("curve_" + file_label(label) + ".csv"))});
    }
  } else {
    const auto kind = Policy::parse_kind(report.at("policy").get<std::string>());
    series.push_back({report.value("label", std::string(to_string(kind))), policy_color(kind),
                      read_curve_csv(run_dir / "curve.csv")});
  }
  std::filesystem::create_directories(out_dir);
  const auto path = out_dir / "quality_vs_effort.svg";
  write_text(path, render_svg(series, title));
  return path;
}

}  // namespace pedal
