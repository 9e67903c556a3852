#include "htgrpo/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace htgrpo {

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << kMetricsCsvHeader << "\n";
  char buf[512];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.cycle, r.stage.c_str(), r.k_s, r.gamma, r.mean_reward,
                  r.std_reward, r.loss, r.kl, r.clip_fraction, r.mean_ratio,
                  r.mean_entropy_structure, r.mean_entropy_refinement);
    os << buf;
  }
  return os.str();
}

std::vector<MetricsRow> metrics_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kMetricsCsvHeader)
    throw std::runtime_error("metrics CSV header mismatch");
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    MetricsRow r;
    char stage[64] = {0};
    int got = std::sscanf(
        line.c_str(),
        "%d,%63[^,],%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &r.cycle, stage,
        &r.k_s, &r.gamma, &r.mean_reward, &r.std_reward, &r.loss, &r.kl,
        &r.clip_fraction, &r.mean_ratio, &r.mean_entropy_structure,
        &r.mean_entropy_refinement);
    if (got != 12) throw std::runtime_error("bad metrics CSV row: " + line);
    r.stage = stage;
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open metrics file: " + path);
  out << metrics_to_csv(rows);
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return metrics_from_csv(ss.str());
}

}  // namespace htgrpo
