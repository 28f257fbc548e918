#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fligan/experiment.hpp"

namespace fligan {

namespace report_detail {

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> p{"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                                          "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};
  return p;
}

inline std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

inline std::string esc(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Series {
  std::string name;
  std::vector<double> values;  // one per category; NaN leaves a gap
};

/// Grouped vertical bars, y axis from 0 to the max value rounded up.
inline std::string bar_chart(const std::string& title, const std::string& y_label,
                             const std::vector<std::string>& categories, const std::vector<Series>& series) {
  const double W = 720, H = 420, left = 70, right = 150, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  double ymax = 0.0;
  for (const auto& s : series)
    for (double v : s.values)
      if (std::isfinite(v)) ymax = std::max(ymax, v);
  ymax = ymax <= 0.0 ? 1.0 : ymax * 1.1;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = ymax * t / 5.0;
    const double y = top + ph - ph * t / 5.0;
    svg << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << y << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
        << fmt(v, 2) << "</text>\n";
  }
  svg << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << esc(y_label) << "</text>\n";
  const double group_w = categories.empty() ? pw : pw / static_cast<double>(categories.size());
  const double bar_w = group_w * 0.8 / std::max<std::size_t>(1, series.size());
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = left + group_w * static_cast<double>(c) + group_w * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = c < series[s].values.size() ? series[s].values[c] : NAN;
      if (!std::isfinite(v)) continue;
      const double h = ph * v / ymax;
      svg << "<rect x=\"" << gx + bar_w * static_cast<double>(s) << "\" y=\"" << top + ph - h << "\" width=\""
          << bar_w * 0.95 << "\" height=\"" << h << "\" fill=\"" << palette()[s % palette().size()]
          << "\"><title>" << esc(series[s].name) << ": " << fmt(v) << "</title></rect>\n";
    }
    svg << "<text x=\"" << gx + group_w * 0.4 << "\" y=\"" << top + ph + 20 << "\" text-anchor=\"middle\">"
        << esc(categories[c]) << "</text>\n";
  }
  svg << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << top + ph << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double y = top + 10 + 20 * static_cast<double>(s);
    svg << "<rect x=\"" << left + pw + 15 << "\" y=\"" << y - 10 << "\" width=\"12\" height=\"12\" fill=\""
        << palette()[s % palette().size()] << "\"/>\n<text x=\"" << left + pw + 32 << "\" y=\"" << y
        << "\">" << esc(series[s].name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

struct Curve {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

inline std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<Curve>& curves) {
  const double W = 720, H = 420, left = 70, right = 190, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  double xmax = 1.0, ymin = 1e300, ymax = -1e300;
  for (const auto& c : curves)
    for (auto [x, y] : c.points) {
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (ymin > ymax) ymin = 0.0, ymax = 1.0;
  if (ymax - ymin < 1e-6) ymin -= 0.01, ymax += 0.01;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return left + pw * x / xmax; };
  auto py = [&](double y) { return top + ph - ph * (y - ymin) / (ymax - ymin); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = ymin + (ymax - ymin) * t / 5.0;
    svg << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << py(v) << "\" y2=\"" << py(v)
        << "\" stroke=\"#ddd\"/>\n<text x=\"" << left - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">"
        << fmt(v, 3) << "</text>\n";
  }
  const int xt = static_cast<int>(std::min(10.0, xmax));
  for (int t = 0; t <= xt; ++t) {
    const double v = xmax * t / xt;
    svg << "<text x=\"" << px(v) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << fmt(v, 0)
        << "</text>\n";
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << esc(x_label)
      << "</text>\n<text transform=\"translate(18," << top + ph / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << esc(y_label) << "</text>\n"
      << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << top + ph << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const auto& colour = palette()[c % palette().size()];
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : curves[c].points) svg << px(x) << ',' << py(y) << ' ';
    svg << "\"/>\n";
    for (auto [x, y] : curves[c].points)
      svg << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
    const double y = top + 10 + 20 * static_cast<double>(c);
    svg << "<rect x=\"" << left + pw + 15 << "\" y=\"" << y - 10 << "\" width=\"12\" height=\"12\" fill=\""
        << colour << "\"/>\n<text x=\"" << left + pw + 32 << "\" y=\"" << y << "\">" << esc(curves[c].name)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

inline std::string alpha_name(double alpha) {
  std::ostringstream s;
  s << alpha;
  return s.str();
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return NAN;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline std::string text_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) w[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < w.size(); ++c) w[c] = std::max(w[c], r[c].size());
  std::ostringstream s;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < w.size(); ++c)
      s << (c ? "  " : "") << std::left << std::setw(static_cast<int>(w[c])) << (c < r.size() ? r[c] : "");
    s << '\n';
  };
  line(header);
  std::vector<std::string> rule;
  for (auto x : w) rule.emplace_back(x, '-');
  line(rule);
  for (const auto& r : rows) line(r);
  return s.str();
}

inline std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream s;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) s << (c ? "," : "") << r[c];
    s << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return s.str();
}

}  // namespace report_detail

struct ReportFiles {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> notices;
};

/// Writes the accuracy, step-curve and efficacy charts plus the timing and
/// synthetic-row tables into `out_dir`. Charts with no data are skipped and
/// reported in `notices`.
inline ReportFiles emit_reports(const std::vector<CellResult>& cells, const std::filesystem::path& out_dir) {
  namespace rd = report_detail;
  std::filesystem::create_directories(out_dir);
  ReportFiles files;
  auto put = [&](const std::string& name, const std::string& body) {
    const auto path = out_dir / name;
    std::ofstream(path) << body;
    files.written.push_back(path);
  };

  std::vector<std::string> strategies;
  std::vector<double> alphas;
  for (const auto& c : cells) {
    if (std::find(strategies.begin(), strategies.end(), c.record.strategy) == strategies.end())
      strategies.push_back(c.record.strategy);
    if (std::find(alphas.begin(), alphas.end(), c.record.alpha) == alphas.end()) alphas.push_back(c.record.alpha);
  }
  std::sort(alphas.begin(), alphas.end());
  auto collect = [&](const std::string& strategy, double alpha, auto field) {
    std::vector<double> v;
    for (const auto& c : cells)
      if (c.record.strategy == strategy && c.record.alpha == alpha) v.push_back(field(c));
    return v;
  };

  if (cells.empty()) {
    files.notices.push_back("no completed cells; nothing to report");
    return files;
  }

  {
    std::vector<rd::Series> series;
    for (double a : alphas) {
      rd::Series s{"alpha = " + rd::alpha_name(a), {}};
      for (const auto& st : strategies)
        s.values.push_back(rd::mean(collect(st, a, [](const CellResult& c) { return c.record.accuracy; })));
      series.push_back(std::move(s));
    }
    put("accuracy.svg", rd::bar_chart("Test accuracy by strategy", "mean accuracy", strategies, series));
  }

  {
    std::vector<rd::Curve> curves;
    for (const auto& c : cells) {
      if (!c.history || c.history->steps.empty()) continue;
      rd::Curve curve{cell_tag(c.record.strategy, c.record.alpha, c.record.seed), {}};
      for (const auto& s : c.history->steps)
        curve.points.emplace_back(static_cast<double>(s.step), s.accuracy);
      curves.push_back(std::move(curve));
    }
    if (curves.empty())
      files.notices.push_back("no augmentation history in this run; step curve skipped");
    else
      put("augmentation_steps.svg",
          rd::line_chart("Accuracy per augmentation step", "augmentation step", "accuracy", curves));
  }

  {
    std::vector<std::string> cats;
    rd::Series real{"real data", {}}, fl{"FLIGAN synthetic", {}}, fg{"FedGAN synthetic", {}};
    for (double a : alphas) {
      std::vector<double> r, f, g;
      for (const auto& c : cells) {
        if (c.record.alpha != a || !c.efficacy) continue;
        r.push_back(c.efficacy->real_data_accuracy);
        if (c.record.strategy == "fligan") f.push_back(c.efficacy->synthetic_data_accuracy);
        if (c.record.strategy == "fedgan") g.push_back(c.efficacy->synthetic_data_accuracy);
      }
      if (r.empty()) continue;
      cats.push_back("alpha = " + rd::alpha_name(a));
      real.values.push_back(rd::mean(r));
      fl.values.push_back(rd::mean(f));
      fg.values.push_back(rd::mean(g));
    }
    if (cats.empty())
      files.notices.push_back("no efficacy results in this run; efficacy chart skipped");
    else
      put("efficacy.svg", rd::bar_chart("ML efficacy (decision forest)", "test accuracy", cats, {real, fl, fg}));
  }

  {
    const std::vector<std::string> header{"strategy", "alpha", "seeds", "mean_seconds", "min_seconds", "max_seconds"};
    std::vector<std::vector<std::string>> rows;
    for (const auto& st : strategies)
      for (double a : alphas) {
        auto t = collect(st, a, [](const CellResult& c) { return c.record.wall_clock_seconds; });
        if (t.empty()) continue;
        rows.push_back({st, rd::alpha_name(a), std::to_string(t.size()), rd::fmt(rd::mean(t), 2),
                        rd::fmt(*std::min_element(t.begin(), t.end()), 2),
                        rd::fmt(*std::max_element(t.begin(), t.end()), 2)});
      }
    put("timing.csv", rd::csv_table(header, rows));
    put("timing.txt", rd::text_table(header, rows));
  }

  {
    const std::vector<std::string> header{"dataset", "strategy", "alpha", "real_rows", "synthetic_rows",
                                          "percent_new", "steps"};
    std::vector<std::vector<std::string>> rows;
    for (const auto& st : strategies) {
      if (st == "fedavg") continue;
      for (double a : alphas) {
        std::vector<double> real, syn, steps;
        std::string dataset;
        for (const auto& c : cells)
          if (c.record.strategy == st && c.record.alpha == a) {
            real.push_back(static_cast<double>(c.real_rows));
            syn.push_back(static_cast<double>(c.record.synthetic_rows_added));
            steps.push_back(c.record.steps_taken);
            dataset = c.dataset;
          }
        if (real.empty()) continue;
        const double r = rd::mean(real), s = rd::mean(syn);
        rows.push_back({dataset, st, rd::alpha_name(a), rd::fmt(r, 0), rd::fmt(s, 1),
                        rd::fmt(r > 0 ? 100.0 * s / r : 0.0, 2), rd::fmt(rd::mean(steps), 2)});
      }
    }
    put("synthetic_rows.csv", rd::csv_table(header, rows));
    put("synthetic_rows.txt", rd::text_table(header, rows));
  }
  return files;
}

}  // namespace fligan
