#include "htgrpo/env.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "htgrpo/rng.hpp"

namespace htgrpo {

double reward(const std::vector<int>& seq, int prompt, const TaskSpec& task) {
  const int n = static_cast<int>(seq.size());
  if (task.kind == TaskSpec::Kind::kCount) {
    if (prompt < 0 || prompt >= static_cast<int>(task.target_counts.size()))
      throw std::runtime_error("count task has no parameters for this prompt");
    int count = 0;
    for (int v : seq) count += (v == task.target_token);
    return 1.0 - std::abs(count - task.target_counts[prompt]) /
                     static_cast<double>(n);
  }
  if (prompt < 0 || prompt >= static_cast<int>(task.templates.size()))
    throw std::runtime_error("pattern task has no template for this prompt");
  const std::vector<int>& tmpl = task.templates[prompt];
  if (tmpl.size() != seq.size())
    throw std::runtime_error("sequence length does not match template");
  int match = 0;
  for (int i = 0; i < n; ++i) match += (seq[i] == tmpl[i]);
  return static_cast<double>(match) / static_cast<double>(n);
}

namespace {

int hamming(const std::vector<int>& a, const std::vector<int>& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] != b[i]);
  return d;
}

}  // namespace

TaskSpec make_task(TaskSpec::Kind kind, const PolicyConfig& cfg,
                   std::uint64_t seed) {
  cfg.validate();
  TaskSpec task;
  task.kind = kind;
  task.seed = seed;
  Rng rng(derive_seed(seed, 0x7a5c'0001ULL));
  const int N = cfg.seq_len, V = cfg.vocab_size, P = cfg.num_prompts;
  if (kind == TaskSpec::Kind::kCount) {
    task.target_token = rng.uniform_int(V);
    task.target_counts.resize(P);
    for (int p = 0; p < P; ++p) task.target_counts[p] = 1 + rng.uniform_int(N - 1);
    return task;
  }
  // Pattern templates: rejection-sample until pairwise Hamming distance >= N/4.
  const int min_dist = (N + 3) / 4;
  while (static_cast<int>(task.templates.size()) < P) {
    std::vector<int> t(N);
    for (int i = 0; i < N; ++i) t[i] = rng.uniform_int(V);
    bool ok = true;
    for (const auto& other : task.templates)
      ok = ok && hamming(t, other) >= min_dist;
    if (ok) task.templates.push_back(std::move(t));
  }
  return task;
}

}  // namespace htgrpo
