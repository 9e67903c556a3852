#include "htgrpo/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace htgrpo {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes little-endian doubles");

void PolicyConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
  if (seq_len < 2) throw std::invalid_argument("seq_len must be >= 2");
  if (num_prompts < 1) throw std::invalid_argument("num_prompts must be >= 1");
  if (embed_dim < 1) throw std::invalid_argument("embed_dim must be >= 1");
  if (hidden_dim < 1) throw std::invalid_argument("hidden_dim must be >= 1");
  if (init_scale < 0.0) throw std::invalid_argument("init_scale must be >= 0");
}

ParamLayout::ParamLayout(const PolicyConfig& cfg) {
  const std::size_t V = cfg.vocab_size, N = cfg.seq_len, P = cfg.num_prompts;
  const std::size_t D = cfg.embed_dim, H = cfg.hidden_dim;
  tok = 0;
  mask = tok + V * D;
  pos = mask + D;
  prompt = pos + N * D;
  w1 = prompt + P * D;
  b1 = w1 + H * 4 * D;
  w2 = b1 + H;
  b2 = w2 + V * H;
  total = b2 + V;
}

std::size_t param_count(const PolicyConfig& cfg) {
  return ParamLayout(cfg).total;
}

PolicyParams init_policy(const PolicyConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PolicyParams p;
  p.config = cfg;
  p.version = 0;
  p.params.resize(param_count(cfg));
  Rng rng(derive_seed(seed, 0x1717'0001ULL));
  for (double& w : p.params) {
    w = cfg.init_scale * (2.0 * rng.uniform() - 1.0);
  }
  return p;
}

namespace {

void check_context(const PolicyConfig& cfg, const MaskState& ctx, int prompt) {
  if (prompt < 0 || prompt >= cfg.num_prompts)
    throw std::domain_error("prompt id out of range");
  if (static_cast<int>(ctx.visible.size()) != cfg.seq_len)
    throw std::domain_error("context length does not match seq_len");
  for (const auto& v : ctx.visible) {
    if (v && (*v < 0 || *v >= cfg.vocab_size))
      throw std::domain_error("visible token value out of range");
  }
}

void run_forward(const PolicyParams& params, const MaskState& ctx, int prompt,
                 ForwardCache* cache, DistributionGrid& grid) {
  const PolicyConfig& cfg = params.config;
  check_context(cfg, ctx, prompt);
  const ParamLayout L(cfg);
  const int N = cfg.seq_len, V = cfg.vocab_size, D = cfg.embed_dim,
            H = cfg.hidden_dim;
  const int F = 4 * D;
  const double* w = params.params.data();

  std::vector<int> visible;
  std::vector<double> pooled(D, 0.0);
  for (int j = 0; j < N; ++j) {
    if (ctx.visible[j]) {
      visible.push_back(j);
      const double* e = w + L.tok + static_cast<std::size_t>(*ctx.visible[j]) * D;
      for (int d = 0; d < D; ++d) pooled[d] += e[d];
    }
  }
  if (!visible.empty()) {
    for (int d = 0; d < D; ++d) pooled[d] /= static_cast<double>(visible.size());
  }

  grid.n = N;
  grid.v = V;
  grid.probs.assign(static_cast<std::size_t>(N) * V, 0.0);
  if (cache) {
    cache->features.assign(static_cast<std::size_t>(N) * F, 0.0);
    cache->hidden.assign(static_cast<std::size_t>(N) * H, 0.0);
    cache->visible_positions = visible;
    cache->context = ctx;
    cache->prompt = prompt;
  }

  std::vector<double> x(F), h(H), logits(V);
  for (int i = 0; i < N; ++i) {
    const double* self = ctx.visible[i]
                             ? w + L.tok + static_cast<std::size_t>(*ctx.visible[i]) * D
                             : w + L.mask;
    const double* pe = w + L.pos + static_cast<std::size_t>(i) * D;
    const double* ce = w + L.prompt + static_cast<std::size_t>(prompt) * D;
    for (int d = 0; d < D; ++d) {
      x[d] = self[d];
      x[D + d] = pe[d];
      x[2 * D + d] = ce[d];
      x[3 * D + d] = pooled[d];
    }
    for (int k = 0; k < H; ++k) {
      double acc = w[L.b1 + k];
      const double* row = w + L.w1 + static_cast<std::size_t>(k) * F;
      for (int f = 0; f < F; ++f) acc += row[f] * x[f];
      h[k] = std::tanh(acc);
    }
    for (int v = 0; v < V; ++v) {
      double acc = w[L.b2 + v];
      const double* row = w + L.w2 + static_cast<std::size_t>(v) * H;
      for (int k = 0; k < H; ++k) acc += row[k] * h[k];
      logits[v] = acc;
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    double* out = grid.probs.data() + static_cast<std::size_t>(i) * V;
    for (int v = 0; v < V; ++v) {
      out[v] = std::exp(logits[v] - mx);
      z += out[v];
    }
    for (int v = 0; v < V; ++v) out[v] /= z;
    if (cache) {
      std::copy(x.begin(), x.end(),
                cache->features.begin() + static_cast<std::size_t>(i) * F);
      std::copy(h.begin(), h.end(),
                cache->hidden.begin() + static_cast<std::size_t>(i) * H);
    }
  }
}

}  // namespace

DistributionGrid forward(const PolicyParams& params, const MaskState& context,
                         int prompt) {
  DistributionGrid grid;
  run_forward(params, context, prompt, nullptr, grid);
  return grid;
}

ForwardCache forward_cached(const PolicyParams& params, const MaskState& context,
                            int prompt) {
  ForwardCache cache;
  run_forward(params, context, prompt, &cache, cache.grid);
  return cache;
}

double log_prob(const PolicyParams& params, const MaskState& context, int prompt,
                int position, int value) {
  const PolicyConfig& cfg = params.config;
  if (position < 0 || position >= cfg.seq_len)
    throw std::domain_error("position out of range");
  if (value < 0 || value >= cfg.vocab_size)
    throw std::domain_error("token value out of range");
  DistributionGrid grid = forward(params, context, prompt);
  return std::log(std::max(grid.at(position, value), kProbFloor));
}

double entropy(const double* row, int v) {
  double h = 0.0;
  for (int i = 0; i < v; ++i) {
    if (row[i] > 0.0) h -= row[i] * std::log(row[i]);
  }
  return std::max(h, 0.0);
}

double entropy(const std::vector<double>& row) {
  return entropy(row.data(), static_cast<int>(row.size()));
}

double kl_rows(const DistributionGrid& p, const DistributionGrid& q,
               const std::vector<int>& positions) {
  if (p.n != q.n || p.v != q.v)
    throw std::domain_error("kl_rows: grid shapes differ");
  if (positions.empty()) throw std::domain_error("kl_rows: empty position set");
  double total = 0.0;
  for (int i : positions) {
    if (i < 0 || i >= p.n) throw std::domain_error("kl_rows: position out of range");
    double kl = 0.0;
    for (int v = 0; v < p.v; ++v) {
      double pv = std::max(p.at(i, v), kProbFloor);
      double qv = std::max(q.at(i, v), kProbFloor);
      kl += pv * std::log(pv / qv);
    }
    total += std::max(kl, 0.0);
  }
  return total / static_cast<double>(positions.size());
}

void backward(const PolicyParams& params, const ForwardCache& cache,
              const std::vector<double>& prob_cotangents,
              std::vector<double>& grad) {
  const PolicyConfig& cfg = params.config;
  const ParamLayout L(cfg);
  const int N = cfg.seq_len, V = cfg.vocab_size, D = cfg.embed_dim,
            H = cfg.hidden_dim;
  const int F = 4 * D;
  if (prob_cotangents.size() != static_cast<std::size_t>(N) * V)
    throw std::invalid_argument("backward: cotangent shape mismatch");
  for (double c : prob_cotangents) {
    if (!std::isfinite(c)) throw std::runtime_error("backward: non-finite cotangent");
  }
  if (grad.size() != params.params.size())
    grad.assign(params.params.size(), 0.0);

  const double* w = params.params.data();
  std::vector<double> dlogits(V), dh(H), dpre(H), dx(F);
  std::vector<double> dpooled(D, 0.0);

  for (int i = 0; i < N; ++i) {
    const double* g = prob_cotangents.data() + static_cast<std::size_t>(i) * V;
    bool any = false;
    for (int v = 0; v < V; ++v) any = any || g[v] != 0.0;
    if (!any) continue;

    const double* p = cache.grid.row(i);
    double dot = 0.0;
    for (int v = 0; v < V; ++v) dot += p[v] * g[v];
    for (int v = 0; v < V; ++v) dlogits[v] = p[v] * (g[v] - dot);

    const double* h = cache.hidden.data() + static_cast<std::size_t>(i) * H;
    const double* x = cache.features.data() + static_cast<std::size_t>(i) * F;

    std::fill(dh.begin(), dh.end(), 0.0);
    for (int v = 0; v < V; ++v) {
      const double* row = w + L.w2 + static_cast<std::size_t>(v) * H;
      double* grow = grad.data() + L.w2 + static_cast<std::size_t>(v) * H;
      for (int k = 0; k < H; ++k) {
        grow[k] += dlogits[v] * h[k];
        dh[k] += row[k] * dlogits[v];
      }
      grad[L.b2 + v] += dlogits[v];
    }
    for (int k = 0; k < H; ++k) dpre[k] = dh[k] * (1.0 - h[k] * h[k]);

    std::fill(dx.begin(), dx.end(), 0.0);
    for (int k = 0; k < H; ++k) {
      const double* row = w + L.w1 + static_cast<std::size_t>(k) * F;
      double* grow = grad.data() + L.w1 + static_cast<std::size_t>(k) * F;
      for (int f = 0; f < F; ++f) {
        grow[f] += dpre[k] * x[f];
        dx[f] += row[f] * dpre[k];
      }
      grad[L.b1 + k] += dpre[k];
    }

    // Feature blocks: self embedding, position, prompt, pooled.
    if (cache.context.visible[i]) {
      double* ge = grad.data() + L.tok +
                   static_cast<std::size_t>(*cache.context.visible[i]) * D;
      for (int d = 0; d < D; ++d) ge[d] += dx[d];
    } else {
      for (int d = 0; d < D; ++d) grad[L.mask + d] += dx[d];
    }
    {
      double* ge = grad.data() + L.pos + static_cast<std::size_t>(i) * D;
      for (int d = 0; d < D; ++d) ge[d] += dx[D + d];
    }
    {
      double* ge = grad.data() + L.prompt +
                   static_cast<std::size_t>(cache.prompt) * D;
      for (int d = 0; d < D; ++d) ge[d] += dx[2 * D + d];
    }
    for (int d = 0; d < D; ++d) dpooled[d] += dx[3 * D + d];
  }

  if (!cache.visible_positions.empty()) {
    const double inv = 1.0 / static_cast<double>(cache.visible_positions.size());
    for (int j : cache.visible_positions) {
      double* ge = grad.data() + L.tok +
                   static_cast<std::size_t>(*cache.context.visible[j]) * D;
      for (int d = 0; d < D; ++d) ge[d] += dpooled[d] * inv;
    }
  }
}

void save_checkpoint(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  const PolicyConfig& c = params.config;
  out << "htgrpo-ckpt v1\n";
  out << "V=" << c.vocab_size << " N=" << c.seq_len << " P=" << c.num_prompts
      << " D=" << c.embed_dim << " H=" << c.hidden_dim << "\n";
  out << "count=" << params.params.size() << "\n";
  out << "version=" << params.version << "\n";
  out.write(reinterpret_cast<const char*>(params.params.data()),
            static_cast<std::streamsize>(params.params.size() * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "htgrpo-ckpt v1")
    throw std::runtime_error("bad checkpoint magic in " + path);
  PolicyParams p;
  PolicyConfig& c = p.config;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "V=%d N=%d P=%d D=%d H=%d", &c.vocab_size,
                  &c.seq_len, &c.num_prompts, &c.embed_dim, &c.hidden_dim) != 5)
    throw std::runtime_error("bad checkpoint header in " + path);
  std::size_t count = 0;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "count=%zu", &count) != 1)
    throw std::runtime_error("bad checkpoint count in " + path);
  unsigned long long version = 0;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "version=%llu", &version) != 1)
    throw std::runtime_error("bad checkpoint version in " + path);
  c.validate();
  if (count != param_count(c))
    throw std::runtime_error("checkpoint count does not match config in " + path);
  p.version = version;
  p.params.resize(count);
  in.read(reinterpret_cast<char*>(p.params.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
    throw std::runtime_error("truncated checkpoint: " + path);
  return p;
}

}  // namespace htgrpo
