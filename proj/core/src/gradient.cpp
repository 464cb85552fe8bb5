#include "jsb/gradient.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jsb/errors.hpp"
#include "jsb/parallel.hpp"

namespace jsb {

std::string_view to_string(VarianceKind k) noexcept {
  return k == VarianceKind::mc_population ? "mc_population" : "microbatch_unbiased";
}

Vector policy_gradient_from_advantages(const TabularPolicy& policy, const RewardBatch& batch, const Matrix& advantages) {
  if (!batch.response_ids) throw ShapeError("policy gradient needs response ids");
  if (advantages.rows() != batch.n() || advantages.cols() != batch.m() || batch.response_ids->rows() != batch.n() ||
      batch.response_ids->cols() != batch.m() || batch.prompt_ids.size() != batch.n()) {
    throw ShapeError("advantage, reward and response tables disagree in shape");
  }
  Vector g(policy.num_params(), 0.0);
  const double scale = 1.0 / (static_cast<double>(batch.n()) * static_cast<double>(batch.m()));
  for (std::size_t i = 0; i < batch.n(); ++i) {
    const std::size_t x = batch.prompt_ids[i];
    const Vector probs = policy.probabilities(x);
    for (std::size_t j = 0; j < batch.m(); ++j) {
      const std::size_t y = (*batch.response_ids)(i, j);
      if (y >= probs.size()) throw IndexError("response index out of range");
      const double a = advantages(i, j);
      if (a != 0.0) add_scaled_score(policy, x, y, probs, a * scale, g);
    }
  }
  return g;
}

Vector policy_gradient(const TabularPolicy& policy, const RewardBatch& batch, const BaselineMatrix& baseline) {
  if (baseline.values.rows() != batch.n() || baseline.values.cols() != batch.m()) {
    throw ShapeError("baseline and reward tables disagree in shape");
  }
  Matrix adv(batch.n(), batch.m());
  for (std::size_t i = 0; i < batch.n(); ++i) {
    for (std::size_t j = 0; j < batch.m(); ++j) adv(i, j) = batch.rewards(i, j) - baseline(i, j);
  }
  return policy_gradient_from_advantages(policy, batch, adv);
}

Vector estimator_gradient(const TabularPolicy& policy, const RewardBatch& batch, Estimator estimator,
                          const EstimatorParams& params) {
  EstimatorParams p = params;
  if (p.policy == nullptr) p.policy = &policy;
  return policy_gradient_from_advantages(policy, batch, compute_advantages(estimator, batch, p).values);
}

RewardBatch draw_policy_batch(const TabularPolicy& policy, const PromptDistribution& dist, std::size_t n,
                              std::size_t m, std::uint64_t seed, std::uint32_t replication) {
  RngStream prompt_stream(seed, Purpose::prompts, replication);
  const auto idx = sample_prompt_indices(dist, n, prompt_stream);
  std::vector<PromptModel> models;
  models.reserve(n);
  for (std::size_t k : idx) models.push_back(policy.prompt_model(k));
  return sample_rewards(models, m, RngStream(seed, Purpose::rollouts, replication));
}

namespace {

struct BlockPartials {
  std::vector<Vector> sums;  // per estimator
};

Vector add_vectors(const Vector& a, const Vector& b) {
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

}  // namespace

std::vector<GradientMoments> mc_gradient_moments(const TabularPolicy& policy, const PromptDistribution& dist,
                                                 std::span<const Estimator> estimators, const MomentsRequest& req) {
  if (req.replications < 2) throw ShapeError("Monte Carlo moments need at least two replications");
  if (estimators.empty()) throw ConfigError("no estimators requested");
  if (dist.size() != policy.num_prompts()) throw ShapeError("distribution and policy disagree in prompt count");
  const std::size_t R = req.replications;
  const std::size_t E = estimators.size();
  const std::size_t P = policy.num_params();
  const std::size_t block = std::max<std::size_t>(1, req.microbatch_size);
  const std::size_t blocks = (R + block - 1) / block;

  EstimatorParams params = req.params;
  params.policy = &policy;

  auto gradients_of = [&](std::size_t r) {
    const RewardBatch batch = draw_policy_batch(policy, dist, req.n, req.m, req.seed, static_cast<std::uint32_t>(r));
    std::vector<Vector> out;
    out.reserve(E);
    for (Estimator e : estimators) out.push_back(estimator_gradient(policy, batch, e, params));
    return out;
  };

  // Pass 1: block sums in replication order, then a pairwise tree over blocks.
  std::vector<std::vector<Vector>> block_sums(blocks);
  parallel_for(blocks, req.threads, [&](std::size_t b) {
    std::vector<Vector> acc(E, Vector(P, 0.0));
    for (std::size_t r = b * block; r < std::min(R, (b + 1) * block); ++r) {
      auto g = gradients_of(r);
      for (std::size_t e = 0; e < E; ++e) {
        for (std::size_t k = 0; k < P; ++k) acc[e][k] += g[e][k];
      }
    }
    block_sums[b] = std::move(acc);
  });

  std::vector<GradientMoments> out(E);
  for (std::size_t e = 0; e < E; ++e) {
    std::vector<Vector> parts(blocks);
    for (std::size_t b = 0; b < blocks; ++b) parts[b] = block_sums[b][e];
    Vector total = pairwise_reduce<Vector>(parts, add_vectors);
    for (double& x : total) x /= static_cast<double>(R);
    out[e].estimator = estimators[e];
    out[e].mean = std::move(total);
    out[e].squared_deviation.assign(R, 0.0);
  }

  // Pass 2: regenerate the same batches, measure deviations from the mean.
  std::vector<std::vector<Vector>> block_sq(blocks);
  std::vector<Vector> block_micro(blocks, Vector(E, 0.0));
  parallel_for(blocks, req.threads, [&](std::size_t b) {
    std::vector<Vector> acc(E, Vector(P, 0.0));
    std::vector<std::vector<GradientSample>> group(E);
    for (std::size_t r = b * block; r < std::min(R, (b + 1) * block); ++r) {
      auto g = gradients_of(r);
      for (std::size_t e = 0; e < E; ++e) {
        Vector dev(P);
        for (std::size_t k = 0; k < P; ++k) {
          dev[k] = g[e][k] - out[e].mean[k];
          acc[e][k] += dev[k] * dev[k];
        }
        out[e].squared_deviation[r] = squared_norm(dev);
        group[e].push_back({std::move(g[e]), req.seed, r});
      }
    }
    if (group.front().size() == block && block >= 2) {
      for (std::size_t e = 0; e < E; ++e) block_micro[b][e] = microbatch_trace_variance(group[e]).trace_var;
    }
    block_sq[b] = std::move(acc);
  });

  const std::size_t full_blocks = (block >= 2) ? R / block : 0;
  const double inv = 1.0 / static_cast<double>(R - 1);
  for (std::size_t e = 0; e < E; ++e) {
    std::vector<Vector> parts(blocks);
    for (std::size_t b = 0; b < blocks; ++b) parts[b] = block_sq[b][e];
    Vector coord = pairwise_reduce<Vector>(parts, add_vectors);
    for (double& x : coord) x *= inv;
    out[e].coordinate_variance = std::move(coord);

    const auto& d = out[e].squared_deviation;
    const double trace = pairwise_sum(d) * inv;
    out[e].variance = {trace, R, VarianceKind::mc_population,
                       std::sqrt(sample_variance(d) / static_cast<double>(R))};

    if (full_blocks > 0) {
      Vector micro(full_blocks);
      for (std::size_t b = 0; b < full_blocks; ++b) micro[b] = block_micro[b][e];
      out[e].microbatch = {mean(micro), full_blocks * block, VarianceKind::microbatch_unbiased,
                           full_blocks > 1 ? std::sqrt(sample_variance(micro) / static_cast<double>(full_blocks)) : 0.0};
    } else {
      out[e].microbatch = {0.0, 0, VarianceKind::microbatch_unbiased, 0.0};
    }
  }
  return out;
}

GradientMoments mc_gradient_moments(const TabularPolicy& policy, const PromptDistribution& dist, std::size_t n,
                                    std::size_t m, Estimator estimator, std::size_t replications, std::uint64_t seed,
                                    unsigned threads) {
  MomentsRequest req;
  req.n = n;
  req.m = m;
  req.replications = replications;
  req.seed = seed;
  req.threads = threads;
  const Estimator one[] = {estimator};
  return std::move(mc_gradient_moments(policy, dist, one, req).front());
}

VarianceReading microbatch_trace_variance(std::span<const GradientSample> samples) {
  const std::size_t M = samples.size();
  if (M < 2) throw ShapeError("micro-batch variance needs at least two gradient samples");
  const std::size_t P = samples.front().vector.size();
  for (const auto& s : samples) {
    if (s.vector.size() != P) throw ShapeError("gradient samples differ in dimension");
  }
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(samples[a].vector.begin(), samples[a].vector.end(),
                                        samples[b].vector.begin(), samples[b].vector.end());
  });

  Vector g_bar(P);
  Vector column(M);
  for (std::size_t k = 0; k < P; ++k) {
    for (std::size_t i = 0; i < M; ++i) column[i] = samples[order[i]].vector[k];
    g_bar[k] = pairwise_sum(column) / static_cast<double>(M);
  }
  Vector spread(M);
  Vector dev(P);
  for (std::size_t i = 0; i < M; ++i) {
    const auto& g = samples[order[i]].vector;
    for (std::size_t k = 0; k < P; ++k) dev[k] = g[k] - g_bar[k];
    spread[i] = squared_norm(dev);
  }
  const double m = static_cast<double>(M);
  return {pairwise_sum(spread) / (m - 1.0) / m, M, VarianceKind::microbatch_unbiased, 0.0};
}

}  // namespace jsb
