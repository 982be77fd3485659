#include "erpgan/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "erpgan/error.hpp"
#include "erpgan/fileutil.hpp"
#include "erpgan/io.hpp"

namespace erpgan::report {

namespace fs = std::filesystem;
using metrics::EvalCondition;

namespace {

std::string num(double v) { return io::format_number(v); }

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string escape(const std::string& s) {
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

const train::FoldResult& fold_for(const std::vector<train::FoldResult>& folds, const std::string& id) {
  for (const auto& f : folds)
    if (f.test_subject == id) return f;
  throw DataError("missing fold for subject " + id);
}

std::vector<double> channel_of(const std::vector<double>& avg, const signal::EpochSet& e, const std::string& channel) {
  auto it = std::find(e.channel_names.begin(), e.channel_names.end(), channel);
  if (it == e.channel_names.end()) throw DataError("channel '" + channel + "' not in epoch set");
  const std::size_t c = static_cast<std::size_t>(it - e.channel_names.begin());
  return {avg.begin() + static_cast<std::ptrdiff_t>(c * e.time_samples),
          avg.begin() + static_cast<std::ptrdiff_t>((c + 1) * e.time_samples)};
}

std::vector<double> time_axis(const signal::EpochSet& e) {
  const double onset = static_cast<double>(signal::pre_samples(e.pre_ms, e.sampling_rate));
  std::vector<double> t(e.time_samples);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 1000.0 * (static_cast<double>(i) - onset) / e.sampling_rate;
  return t;
}

// Minimal CSV reader for the bundle's own numeric tables.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError(FormatError::Kind::parse, "CSV has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
  std::vector<double> numbers(std::size_t col) const {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(std::stod(r.at(col)));
    return v;
  }
};

Table read_table(const fs::path& path) {
  std::istringstream in(read_file(path));
  Table t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) throw FormatError(FormatError::Kind::parse, path.string() + ": empty CSV");
  t.header = split(line);
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split(line));
  return t;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string metrics_csv(const metrics::MetricsReport& report) {
  std::string out = "subject,condition,auc,snr\n";
  for (const auto& r : report.rows)
    out += r.subject + "," + std::string(metrics::eval_condition_name(r.condition)) + "," + num(r.auc) + "," + num(r.snr) + "\n";
  return out;
}

std::string stats_csv(const metrics::MetricsReport& report) {
  std::string out = "pair,t,df,p,stars\n";
  for (const auto& t : report.tests)
    out += t.name() + "," + num(t.test.t) + "," + num(t.test.df) + "," + num(t.test.p) + "," +
           std::string(metrics::significance_stars(t.test.p)) + "\n";
  return out;
}

std::string grand_average_csv(const std::vector<train::SubjectEpochs>& data, const std::vector<train::FoldResult>& folds,
                              const std::string& channel) {
  if (data.empty()) throw DataError("grand average needs at least one subject");
  const std::size_t T = data.front().standing.time_samples;
  std::vector<double> sums[3];
  for (auto& s : sums) s.assign(T, 0.0);
  for (const auto& s : data) {
    const signal::EpochSet* sets[3] = {&s.standing, &s.walking, &fold_for(folds, s.id).reconstructed};
    for (int k = 0; k < 3; ++k) {
      const auto avg = channel_of(metrics::grand_average(*sets[k], signal::Label::target), *sets[k], channel);
      for (std::size_t i = 0; i < T; ++i) sums[k][i] += avg[i];
    }
  }
  const auto t = time_axis(data.front().standing);
  const double n = static_cast<double>(data.size());
  std::string out = "time_ms,standing,walking,reconstructed\n";
  for (std::size_t i = 0; i < T; ++i)
    out += num(t[i]) + "," + num(sums[0][i] / n) + "," + num(sums[1][i] / n) + "," + num(sums[2][i] / n) + "\n";
  return out;
}

std::string gallery_csv(const std::vector<train::SubjectEpochs>& data, const std::vector<train::FoldResult>& folds,
                        std::size_t count, const std::string& channel) {
  if (data.empty()) throw DataError("gallery needs at least one subject");
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  // Round-robin over subjects so the gallery shows several folds.
  for (std::size_t trial = 0; names.size() < 2 * count; ++trial) {
    bool any = false;
    for (const auto& s : data) {
      const auto& rec = fold_for(folds, s.id).reconstructed;
      if (trial >= rec.trials() || names.size() >= 2 * count) continue;
      any = true;
      const auto c = static_cast<std::size_t>(
          std::find(rec.channel_names.begin(), rec.channel_names.end(), channel) - rec.channel_names.begin());
      if (c >= rec.channels()) throw DataError("channel '" + channel + "' not in epoch set");
      const std::string tag = s.id + "_" + std::to_string(trial + 1);
      for (const signal::EpochSet* e : {&s.walking, &rec}) {
        auto w = e->trial(trial).subspan(c * e->time_samples, e->time_samples);
        columns.emplace_back(w.begin(), w.end());
      }
      names.push_back(tag + "_walking");
      names.push_back(tag + "_reconstructed");
    }
    if (!any) break;
  }
  const auto t = time_axis(data.front().walking);
  std::string out = "time_ms";
  for (const auto& n : names) out += "," + n;
  out += "\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    out += num(t[i]);
    for (const auto& col : columns) out += "," + num(col[i]);
    out += "\n";
  }
  return out;
}

void emit_report(const metrics::MetricsReport& report, const std::vector<train::SubjectEpochs>& data,
                 const std::vector<train::FoldResult>& folds, const fs::path& dir) {
  fs::create_directories(dir);
  write_file_atomic(dir / "metrics.csv", metrics_csv(report));
  write_file_atomic(dir / "stats.csv", stats_csv(report));
  write_file_atomic(dir / "grand_average.csv", grand_average_csv(data, folds));
  write_file_atomic(dir / "gallery.csv", gallery_csv(data, folds));
  for (const auto& f : folds) write_file_atomic(dir / ("loss_curves_" + f.test_subject + ".csv"), io::format_loss_csv(f.losses));
}

std::string line_plot_svg(const std::string& title, const std::vector<double>& x, const std::vector<Series>& series,
                          double marker, const std::string& x_label, const std::string& y_label) {
  const double W = 640, H = 360, left = 60, right = 130, top = 36, bottom = 44;
  double x0 = x.empty() ? 0 : x.front(), x1 = x.empty() ? 1 : x.back();
  double y0 = 0, y1 = 0;
  for (const auto& s : series)
    for (double v : s.y)
      if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad, y1 += pad;
  auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double v) { return H - bottom - (v - y0) / (y1 - y0) * (H - top - bottom); };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n"
    << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << W - right << "\" y2=\"" << py(0)
    << "\" stroke=\"#bbb\"/>\n"
    << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << W - left - right << "\" height=\"" << H - top - bottom
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  if (std::isfinite(marker) && marker >= x0 && marker <= x1)
    o << "<line x1=\"" << px(marker) << "\" y1=\"" << top << "\" x2=\"" << px(marker) << "\" y2=\"" << H - bottom
      << "\" stroke=\"black\" stroke-dasharray=\"4 3\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + k * (x1 - x0) / 4, yv = y0 + k * (y1 - y0) / 4;
    o << "<text x=\"" << px(xv) << "\" y=\"" << H - bottom + 14 << "\" text-anchor=\"middle\">" << fixed(xv, 0) << "</text>\n"
      << "<text x=\"" << left - 4 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << fixed(yv, 1) << "</text>\n";
  }
  o << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">" << escape(x_label)
    << "</text>\n"
    << "<text x=\"14\" y=\"" << (top + H - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << (top + H - bottom) / 2 << ")\">" << escape(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(x.size(), series[k].y.size()); ++i)
      if (std::isfinite(series[k].y[i])) o << fixed(px(x[i]), 2) << ',' << fixed(py(series[k].y[i]), 2) << ' ';
    o << "\"/>\n"
      << "<text x=\"" << W - right + 10 << "\" y=\"" << top + 14 + 16 * k << "\" fill=\"" << color << "\">"
      << escape(series[k].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& groups,
                          const std::vector<Series>& series, const std::vector<double>& errors) {
  const double W = 520, H = 320, left = 50, right = 130, top = 36, bottom = 40;
  double y1 = 0;
  std::size_t e = 0;
  for (const auto& s : series)
    for (double v : s.y) y1 = std::max(y1, v + (e < errors.size() ? errors[e++] : 0.0));
  if (y1 <= 0) y1 = 1;
  y1 *= 1.1;
  auto py = [&](double v) { return H - bottom - v / y1 * (H - top - bottom); };
  const double group_w = (W - left - right) / static_cast<double>(std::max<std::size_t>(1, groups.size()));
  const double bar_w = 0.8 * group_w / static_cast<double>(std::max<std::size_t>(1, series.size()));

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n"
    << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << W - right << "\" y2=\"" << py(0) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k)
    o << "<text x=\"" << left - 4 << "\" y=\"" << py(k * y1 / 4) + 4 << "\" text-anchor=\"end\">" << fixed(k * y1 / 4, 2)
      << "</text>\n";
  e = 0;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    for (std::size_t g = 0; g < groups.size() && g < series[s].y.size(); ++g, ++e) {
      const double v = series[s].y[g];
      const double x = left + g * group_w + 0.1 * group_w + s * bar_w;
      o << "<rect x=\"" << fixed(x, 2) << "\" y=\"" << fixed(py(std::max(0.0, v)), 2) << "\" width=\"" << fixed(bar_w, 2)
        << "\" height=\"" << fixed(std::abs(py(0) - py(v)), 2) << "\" fill=\"" << color << "\"/>\n";
      if (e < errors.size())
        o << "<line x1=\"" << fixed(x + bar_w / 2, 2) << "\" y1=\"" << fixed(py(v - errors[e]), 2) << "\" x2=\""
          << fixed(x + bar_w / 2, 2) << "\" y2=\"" << fixed(py(v + errors[e]), 2) << "\" stroke=\"black\"/>\n";
    }
    o << "<text x=\"" << W - right + 10 << "\" y=\"" << top + 14 + 16 * s << "\" fill=\"" << color << "\">"
      << escape(series[s].name) << "</text>\n";
  }
  for (std::size_t g = 0; g < groups.size(); ++g)
    o << "<text x=\"" << left + (g + 0.5) * group_w << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"middle\">"
      << escape(groups[g]) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

void render_plots(const fs::path& dir) {
  {
    const Table ga = read_table(dir / "grand_average.csv");
    const auto t = ga.numbers(ga.column("time_ms"));
    std::vector<Series> s;
    for (const char* name : {"standing", "walking", "reconstructed"}) s.push_back({name, ga.numbers(ga.column(name))});
    write_file_atomic(dir / "grand_average.svg",
                      line_plot_svg("Target grand average at Pz", t, s, 0.0, "time (ms)", "amplitude"));
  }
  {
    const Table g = read_table(dir / "gallery.csv");
    const auto t = g.numbers(0);
    // One small panel per reconstructed epoch, stacked into a grid.
    std::vector<std::string> panels;
    for (std::size_t c = 1; c + 1 < g.header.size(); c += 2) {
      std::string label = g.header[c].substr(0, g.header[c].rfind('_'));
      panels.push_back(line_plot_svg(label, t, {{"walking", g.numbers(c)}, {"reconstructed", g.numbers(c + 1)}}, 0.0,
                                     "time (ms)", "amplitude"));
    }
    const std::size_t cols = 2, rows = (panels.size() + cols - 1) / cols;
    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 640 * cols << "\" height=\"" << 360 * std::max<std::size_t>(1, rows)
      << "\">\n";
    for (std::size_t i = 0; i < panels.size(); ++i) {
      std::string body = panels[i].substr(panels[i].find("<svg"));
      body.insert(4, " x=\"" + std::to_string(640 * (i % cols)) + "\" y=\"" + std::to_string(360 * (i / cols)) + "\"");
      o << body;
    }
    o << "</svg>\n";
    write_file_atomic(dir / "gallery.svg", o.str());
  }
  {
    const Table m = read_table(dir / "metrics.csv");
    const std::size_t cond = m.column("condition"), auc = m.column("auc"), snr = m.column("snr");
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by;
    std::vector<std::string> order;
    for (const auto& r : m.rows) {
      if (!by.count(r[cond])) order.push_back(r[cond]);
      by[r[cond]].first.push_back(std::stod(r[auc]));
      by[r[cond]].second.push_back(std::stod(r[snr]));
    }
    auto mean_sd = [](const std::vector<double>& v) {
      double m = 0, s = 0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      for (double x : v) s += (x - m) * (x - m);
      return std::pair{m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
    };
    std::string svg;
    for (int which = 0; which < 2; ++which) {
      Series s{which == 0 ? "AUC" : "SNR", {}};
      std::vector<double> err;
      for (const auto& c : order) {
        auto [mu, sd] = mean_sd(which == 0 ? by[c].first : by[c].second);
        s.y.push_back(mu);
        err.push_back(sd);
      }
      std::string chart = bar_chart_svg(which == 0 ? "AUC by condition" : "SNR by condition", order, {s}, err);
      chart = chart.substr(chart.find("<svg"));
      chart.insert(4, " x=\"" + std::to_string(520 * which) + "\" y=\"0\"");
      svg += chart;
    }
    write_file_atomic(dir / "metrics.svg", "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                                           "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1040\" height=\"320\">\n" +
                                               svg + "</svg>\n");
  }
}

}  // namespace erpgan::report
