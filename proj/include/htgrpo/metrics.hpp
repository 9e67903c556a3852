#pragma once

#include <string>
#include <vector>

namespace htgrpo {

struct MetricsRow {
  int cycle = 0;
  std::string stage;  // "global" | "structure" | "refinement"
  int k_s = 0;
  double gamma = 1.0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double loss = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
  double mean_entropy_structure = 0.0;
  double mean_entropy_refinement = 0.0;
};

inline const char* kMetricsCsvHeader =
    "cycle,stage,k_s,gamma,mean_reward,std_reward,loss,kl,clip_fraction,"
    "mean_ratio,mean_entropy_structure,mean_entropy_refinement";

std::string metrics_to_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> metrics_from_csv(const std::string& text);
void write_metrics_csv(const std::vector<MetricsRow>& rows,
                       const std::string& path);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

}  // namespace htgrpo
