#pragma once

#include <cstdint>
#include <vector>

#include "htgrpo/policy.hpp"

namespace htgrpo {

struct TaskSpec {
  enum class Kind { kCount, kPattern };
  Kind kind = Kind::kPattern;
  std::uint64_t seed = 1;

  // count task
  int target_token = 0;
  std::vector<int> target_counts;  // per prompt

  // pattern task
  std::vector<std::vector<int>> templates;  // per prompt, length N
};

double reward(const std::vector<int>& seq, int prompt, const TaskSpec& task);

TaskSpec make_task(TaskSpec::Kind kind, const PolicyConfig& cfg,
                   std::uint64_t seed);

}  // namespace htgrpo
