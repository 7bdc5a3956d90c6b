#include "adlab/cli/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "adlab/eval.hpp"

namespace adlab::cli {

namespace {

constexpr double kWidth = 720, kHeight = 360, kMargin = 48;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
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

bool has_rewards(const RunCurve& r) {
  return std::any_of(r.stats.begin(), r.stats.end(), [](const StepStats& s) { return s.mean_total_reward.has_value(); });
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

std::string report_summary_json(const std::vector<RunCurve>& runs, std::size_t window) {
  nlohmann::ordered_json out = {{"window", window}, {"runs", nlohmann::json::array()}};
  for (const auto& run : runs) {
    const CurveSummary s = summarize_curve(run.stats, window);
    nlohmann::json clip = nlohmann::json::array();
    for (std::size_t begin = 0; begin < run.stats.size(); begin += window) {
      const std::size_t end = std::min(run.stats.size(), begin + window);
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t i = begin; i < end; ++i) {
        if (const auto& c = run.stats[i].clip_fraction) {
          sum += *c;
          ++n;
        }
      }
      if (n) clip.push_back(sum / static_cast<double>(n));
    }
    out["runs"].push_back(nlohmann::ordered_json{{"name", run.name},
                                                 {"steps", s.steps},
                                                 {"first_total", opt(s.first_total)},
                                                 {"last_total", opt(s.last_total)},
                                                 {"total_rising", s.total_rising},
                                                 {"first_format", opt(s.first_format)},
                                                 {"last_format", opt(s.last_format)},
                                                 {"format_rising", s.format_rising},
                                                 {"clip_fraction", clip}});
  }
  return out.dump(2);
}

std::string render_reward_svg(const std::vector<RunCurve>& runs) {
  std::size_t max_steps = 1;
  double lo = 0.0, hi = 1.0;
  for (const auto& r : runs) {
    if (!has_rewards(r)) continue;
    max_steps = std::max(max_steps, r.stats.size());
    for (const auto& s : r.stats) {
      for (const auto& v : {s.mean_total_reward, s.mean_format_reward}) {
        if (v && std::isfinite(*v)) {
          lo = std::min(lo, *v);
          hi = std::max(hi, *v);
        }
      }
    }
  }
  const double plot_w = kWidth - 2 * kMargin, plot_h = kHeight - 2 * kMargin;
  auto x_of = [&](std::size_t i) { return kMargin + plot_w * static_cast<double>(i) / static_cast<double>(max_steps); };
  auto y_of = [&](double v) { return kHeight - kMargin - plot_h * (v - lo) / (hi - lo); };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" +
                    fmt(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<line x1=\"" + fmt(kMargin) + "\" y1=\"" + fmt(kHeight - kMargin) + "\" x2=\"" + fmt(kWidth - kMargin) +
         "\" y2=\"" + fmt(kHeight - kMargin) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt(kMargin) + "\" y1=\"" + fmt(kMargin) + "\" x2=\"" + fmt(kMargin) + "\" y2=\"" +
         fmt(kHeight - kMargin) + "\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + fmt(kMargin - 6) + "\" y=\"" + fmt(y_of(hi) + 4) + "\" text-anchor=\"end\">" + fmt(hi) +
         "</text>\n";
  svg += "<text x=\"" + fmt(kMargin - 6) + "\" y=\"" + fmt(y_of(lo) + 4) + "\" text-anchor=\"end\">" + fmt(lo) +
         "</text>\n";
  svg += "<text x=\"" + fmt(kWidth - kMargin) + "\" y=\"" + fmt(kHeight - kMargin + 16) +
         "\" text-anchor=\"end\">step " + std::to_string(max_steps) + "</text>\n";

  std::size_t color = 0;
  double legend_y = kMargin / 2;
  for (const auto& r : runs) {
    if (!has_rewards(r)) continue;
    const char* c = kPalette[color++ % std::size(kPalette)];
    for (int series = 0; series < 2; ++series) {
      std::string points;
      for (std::size_t i = 0; i < r.stats.size(); ++i) {
        const auto& v = series == 0 ? r.stats[i].mean_total_reward : r.stats[i].mean_format_reward;
        if (!v || !std::isfinite(*v)) continue;
        points += fmt(x_of(i)) + "," + fmt(y_of(*v)) + " ";
      }
      if (!points.empty()) points.pop_back();
      svg += std::string("<polyline fill=\"none\" stroke=\"") + c + "\" stroke-width=\"1.2\"" +
             (series == 1 ? " stroke-dasharray=\"4 3\"" : "") + " points=\"" + points + "\"/>\n";
    }
    svg += std::string("<text x=\"") + fmt(kMargin + 4) + "\" y=\"" + fmt(legend_y) + "\" fill=\"" + c + "\">" +
           escape_xml(r.name) + " (solid: overall, dashed: format)</text>\n";
    legend_y += 13;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace adlab::cli
