#include <sstream>

#include <nlohmann/json.hpp>

#include "crerank/evalkit.hpp"
#include "crerank/serial.hpp"

namespace crerank {

namespace {

// Shortest round-trip representation, matching the JSON output.
std::string fmt_double(double v) { return nlohmann::json(v).dump(); }

}  // namespace

std::string eval_report_json(const EvalReport& report) {
  nlohmann::json j;
  j["model"] = report.model_id;
  j["dataset"] = report.dataset_id;
  j["n"] = report.n;
  j["examples"] = report.examples;
  j["hits"] = report.hits;
  j["misses"] = report.misses;
  j["recall"] = report.recall;
  j["mrr"] = report.mrr;
  j["rank_histogram"] = report.rank_histogram;
  j["wall_clock_seconds"] = report.wall_clock_seconds;
  return j.dump(2) + "\n";
}

void write_eval_report_json(const EvalReport& report, const std::string& path) {
  write_text_file(path, eval_report_json(report));
}

void write_eval_report_csv(const EvalReport& report, const std::string& path) {
  std::ostringstream ss;
  ss << "model,dataset,N,recall,mrr,examples\n";
  ss << report.model_id << ',' << report.dataset_id << ',' << report.n << ','
     << fmt_double(report.recall) << ',' << fmt_double(report.mrr) << ',' << report.examples
     << '\n';
  write_text_file(path, ss.str());
}

void write_curve_csv(const std::string& path, const std::string& x_name,
                     const std::vector<double>& xs, const std::vector<CurveSeries>& series) {
  std::ostringstream ss;
  ss << x_name;
  for (const auto& s : series) ss << ',' << s.name;
  ss << '\n';
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ss << fmt_double(xs[i]);
    for (const auto& s : series) ss << ',' << fmt_double(s.values.at(i));
    ss << '\n';
  }
  write_text_file(path, ss.str());
}

void write_curve_svg(const std::string& path, const std::string& x_name,
                     const std::vector<double>& xs, const std::vector<CurveSeries>& series) {
  const double width = 640, height = 400, margin = 50;
  double xmin = xs.empty() ? 0 : xs.front(), xmax = xs.empty() ? 1 : xs.front();
  double ymin = 0, ymax = 1e-12;
  for (double x : xs) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
  }
  for (const auto& s : series)
    for (double v : s.values) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin); };
  auto py = [&](double y) {
    return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin);
  };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream ss;
  ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\">\n";
  ss << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  ss << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
     << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  ss << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
     << height - margin << "\" stroke=\"black\"/>\n";
  ss << "<text x=\"" << width / 2 << "\" y=\"" << height - 10
     << "\" text-anchor=\"middle\" font-size=\"12\">" << x_name << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    ss << "<polyline fill=\"none\" stroke=\"" << colors[si % 5] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < xs.size() && i < s.values.size(); ++i)
      ss << px(xs[i]) << ',' << py(s.values[i]) << ' ';
    ss << "\"/>\n";
    ss << "<text x=\"" << width - margin + 4 << "\" y=\"" << margin + 16 * static_cast<double>(si)
       << "\" font-size=\"11\" fill=\"" << colors[si % 5] << "\">" << s.name << "</text>\n";
  }
  ss << "</svg>\n";
  write_text_file(path, ss.str());
}

}  // namespace crerank
