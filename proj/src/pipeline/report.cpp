#include <fstream>
#include <iomanip>
#include <sstream>

#include "ediv/pipeline.hpp"

namespace ediv::pipeline {
namespace {

using J = nlohmann::ordered_json;

std::string number(const std::optional<double>& v) { return v ? J(*v).dump() : std::string{}; }

}  // namespace

std::vector<Metric> metrics_from_json(const nlohmann::ordered_json& report) {
  static const std::pair<const char*, const char*> groups[] = {
      {"visualization", "viz"}, {"outputs", "output"}, {"saliency", "saliency"}};
  std::vector<Metric> rows;
  for (const auto& m : report.at("methods")) {
    const std::string method = m.at("method");
    for (const auto& [group, prefix] : groups) {
      if (!m.contains(group)) continue;
      for (const auto& [key, v] : m.at(group).items()) {
        Metric row{method, std::string(prefix) + "_" + key, v.at("mean").get<double>(), std::nullopt,
                   v.at("n").get<std::size_t>()};
        if (!v.at("stderr").is_null()) row.stderr_ = v.at("stderr").get<double>();
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::string render_csv(const std::vector<Metric>& metrics) {
  std::string out = "method,metric,mean,stderr,n\n";
  for (const auto& m : metrics)
    out += m.method + "," + m.metric + "," + number(m.mean) + "," + number(m.stderr_) + "," + std::to_string(m.n) + "\n";
  return out;
}

std::string render_table(const std::vector<Metric>& metrics) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "method" << std::setw(26) << "metric" << std::right << std::setw(12) << "mean"
      << std::setw(12) << "stderr" << std::setw(7) << "n" << '\n';
  out << std::fixed;
  for (const auto& m : metrics) {
    out << std::left << std::setw(12) << m.method << std::setw(26) << m.metric << std::right << std::setprecision(4)
        << std::setw(12) << m.mean;
    if (m.stderr_) out << std::setw(12) << *m.stderr_;
    else out << std::setw(12) << "-";
    out << std::setw(7) << m.n << '\n';
  }
  return out.str();
}

void write_report(const DiversityReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream json(dir / "report.json", std::ios::binary);
  json << report.json.dump(2) << '\n';
  std::ofstream csv(dir / "report.csv", std::ios::binary);
  csv << render_csv(report.metrics);
  if (!json || !csv) throw std::runtime_error("cannot write report files in " + dir.string());
}

}  // namespace ediv::pipeline
