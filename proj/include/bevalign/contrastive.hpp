#pragma once

// Similarity measures, the InfoNCE alignment loss with closed-form
// gradients, and a full-batch gradient-descent trainer for the per-modality
// linear projection heads.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "bevalign/error.hpp"
#include "bevalign/util.hpp"

namespace bevalign {

inline constexpr double kMinNorm = 1e-12;

inline double dot(std::span<const double> a, std::span<const double> b) {
  BEVALIGN_REQUIRE(a.size() == b.size(), ErrorCode::LengthMismatch, "contrastive",
                   "vector lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double cosine_sim(std::span<const double> a, std::span<const double> b) {
  BEVALIGN_REQUIRE(a.size() == b.size(), ErrorCode::LengthMismatch, "contrastive",
                   "vector lengths differ");
  const double na = norm(a);
  const double nb = norm(b);
  BEVALIGN_REQUIRE(na >= kMinNorm && nb >= kMinNorm, ErrorCode::ZeroVector, "contrastive",
                   "cosine similarity of a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline double sq_distance(std::span<const double> a, std::span<const double> b) {
  BEVALIGN_REQUIRE(a.size() == b.size(), ErrorCode::LengthMismatch, "contrastive",
                   "vector lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Max-shifted log-sum-exp.
inline double log_sum_exp(std::span<const double> logits) {
  if (logits.empty()) return -INFINITY;
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return m + std::log(s);
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

enum class SimilarityMode { dot, cosine };

struct LossConfig {
  SimilarityMode mode = SimilarityMode::dot;
  double temperature = 0.07;  // cosine mode only
  bool include_positive_in_denominator = false;

  void validate() const {
    BEVALIGN_REQUIRE(temperature > 0.0 && std::isfinite(temperature), ErrorCode::InvalidConfig,
                     "contrastive", "temperature must be positive");
  }
};

struct LossReport {
  double value = 0.0;
  double pos_logit = 0.0;
  std::vector<double> neg_logits;
  std::vector<double> weights;  // softmax over the denominator terms
  std::vector<double> grad_lidar;
  std::vector<double> grad_camera;
  std::vector<std::vector<double>> grad_negs;
};

namespace detail {

struct Similarity {
  double value;
  // d value / d a and d value / d b
  std::vector<double> da;
  std::vector<double> db;
};

inline Similarity similarity(std::span<const double> a, std::span<const double> b, const LossConfig& cfg) {
  BEVALIGN_REQUIRE(a.size() == b.size(), ErrorCode::LengthMismatch, "contrastive",
                   "vector lengths differ");
  Similarity s;
  if (cfg.mode == SimilarityMode::dot) {
    s.value = dot(a, b);
    s.da.assign(b.begin(), b.end());
    s.db.assign(a.begin(), a.end());
    return s;
  }
  const double na = norm(a);
  const double nb = norm(b);
  BEVALIGN_REQUIRE(na >= kMinNorm && nb >= kMinNorm, ErrorCode::ZeroVector, "contrastive",
                   "cosine similarity of a zero vector");
  const double cos = dot(a, b) / (na * nb);
  const double inv_t = 1.0 / cfg.temperature;
  s.value = cos * inv_t;
  s.da.resize(a.size());
  s.db.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    s.da[i] = inv_t * (b[i] / (na * nb) - cos * a[i] / (na * na));
    s.db[i] = inv_t * (a[i] / (na * nb) - cos * b[i] / (nb * nb));
  }
  return s;
}

}  // namespace detail

// L = -s(L, C+) + log sum_i exp(s(L, N_i)), with s = dot or cos / tau.
// The canonical variant also puts the positive term in the denominator.
inline LossReport info_nce(std::span<const double> pos_lidar, std::span<const double> pos_camera,
                           const std::vector<std::vector<double>>& negs, const LossConfig& cfg) {
  cfg.validate();
  BEVALIGN_REQUIRE(!negs.empty(), ErrorCode::EmptyInput, "contrastive",
                   "InfoNCE needs at least one negative");
  LossReport rep;
  const auto pos = detail::similarity(pos_lidar, pos_camera, cfg);
  std::vector<detail::Similarity> neg;
  neg.reserve(negs.size());
  for (const auto& n : negs) neg.push_back(detail::similarity(pos_lidar, n, cfg));

  rep.pos_logit = pos.value;
  std::vector<double> denom;
  if (cfg.include_positive_in_denominator) denom.push_back(pos.value);
  for (const auto& n : neg) {
    rep.neg_logits.push_back(n.value);
    denom.push_back(n.value);
  }
  rep.value = -pos.value + log_sum_exp(denom);
  rep.weights = softmax(denom);

  const std::size_t offset = cfg.include_positive_in_denominator ? 1 : 0;
  const double dpos = cfg.include_positive_in_denominator ? rep.weights[0] - 1.0 : -1.0;
  const std::size_t dim = pos_lidar.size();

  rep.grad_camera.resize(dim);
  rep.grad_lidar.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    rep.grad_camera[d] = dpos * pos.db[d];
    rep.grad_lidar[d] = dpos * pos.da[d];
  }
  rep.grad_negs.resize(neg.size());
  for (std::size_t i = 0; i < neg.size(); ++i) {
    const double w = rep.weights[i + offset];
    rep.grad_negs[i].resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      rep.grad_negs[i][d] = w * neg[i].db[d];
      rep.grad_lidar[d] += w * neg[i].da[d];
    }
  }
  return rep;
}

// Linear map R^{d_in} -> R^{d_e}, weights stored row-major d_in x d_e.
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(std::size_t d_in, std::size_t d_e, std::vector<double> weights)
      : d_in_(d_in), d_e_(d_e), weights_(std::move(weights)) {
    BEVALIGN_REQUIRE(d_in >= 1 && d_e >= 1, ErrorCode::InvalidConfig, "contrastive",
                     "projection dims must be >= 1");
    BEVALIGN_REQUIRE(weights_.size() == d_in * d_e, ErrorCode::LengthMismatch, "contrastive",
                     "weight count must equal d_in * d_e");
    for (double w : weights_) {
      BEVALIGN_REQUIRE(std::isfinite(w), ErrorCode::InvalidConfig, "contrastive",
                       "projection weights must be finite");
    }
  }

  // Seeded uniform(-1, 1) / sqrt(d_in) initialization.
  static ProjectionHead init(std::size_t d_in, std::size_t d_e, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
    std::vector<double> w(d_in * d_e);
    for (double& v : w) v = u(rng) * scale;
    return ProjectionHead(d_in, d_e, std::move(w));
  }

  // Square identity (d_in == d_e).
  static ProjectionHead identity(std::size_t d) {
    std::vector<double> w(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 1.0;
    return ProjectionHead(d, d, std::move(w));
  }

  std::size_t d_in() const { return d_in_; }
  std::size_t d_e() const { return d_e_; }
  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& weights() { return weights_; }

  std::vector<double> project(std::span<const double> x) const {
    BEVALIGN_REQUIRE(x.size() == d_in_, ErrorCode::LengthMismatch, "contrastive",
                     "input length " + std::to_string(x.size()) + " != head input dim " +
                         std::to_string(d_in_));
    std::vector<double> e(d_e_, 0.0);
    for (std::size_t i = 0; i < d_in_; ++i) {
      const double xi = x[i];
      const double* row = weights_.data() + i * d_e_;
      for (std::size_t j = 0; j < d_e_; ++j) e[j] += xi * row[j];
    }
    return e;
  }

  friend bool operator==(const ProjectionHead&, const ProjectionHead&) = default;

 private:
  std::size_t d_in_ = 0;
  std::size_t d_e_ = 0;
  std::vector<double> weights_;
};

// Unit-length copy of an RoI vector; zero vectors pass through unchanged.
inline std::vector<double> l2_normalized(std::span<const double> x) {
  const double n = std::sqrt(dot(x, x));
  std::vector<double> out(x.begin(), x.end());
  if (n >= kMinNorm) {
    for (double& v : out) v /= n;
  }
  return out;
}

// One positive pair with its camera negatives, as raw RoI vectors.
struct TrainingSample {
  std::vector<double> lidar;
  std::vector<double> camera;
  std::vector<std::vector<double>> negatives;
};

struct TrainingConfig {
  std::size_t steps = 500;
  double step_size = 0.05;
  std::size_t embed_dim = 16;
  std::uint64_t seed = 7;
  // RoI vectors are scaled to unit length before projection, in training and
  // at inference alike.
  bool normalize_inputs = true;
  LossConfig loss;

  void validate() const {
    BEVALIGN_REQUIRE(step_size > 0.0 && std::isfinite(step_size), ErrorCode::InvalidConfig,
                     "contrastive", "step_size must be positive");
    BEVALIGN_REQUIRE(embed_dim >= 1, ErrorCode::InvalidConfig, "contrastive", "embed_dim must be >= 1");
    loss.validate();
  }
};

struct TraceRow {
  std::size_t step = 0;
  double mean_loss = 0.0;
  double mean_pos_sim = 0.0;
  double mean_neg_sim = 0.0;
};

struct HeadPair {
  ProjectionHead lidar;
  ProjectionHead camera;
};

struct TrainResult {
  HeadPair heads;
  std::vector<TraceRow> trace;  // steps + 1 rows, row 0 = initial loss
};

inline HeadPair init_heads(std::size_t d_in, const TrainingConfig& cfg) {
  return {ProjectionHead::init(d_in, cfg.embed_dim, mix64(cfg.seed)),
          ProjectionHead::init(d_in, cfg.embed_dim, mix64(cfg.seed + 1))};
}

namespace detail {

inline constexpr std::size_t kChunk = 32;

struct BatchEval {
  double loss = 0.0;
  double pos_sim = 0.0;
  double neg_sim = 0.0;
  std::vector<double> grad_lidar;   // d_in x d_e
  std::vector<double> grad_camera;  // d_in x d_e
};

inline void accumulate_outer(std::vector<double>& g, std::span<const double> x, std::span<const double> e,
                             std::size_t d_e) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    double* row = g.data() + i * d_e;
    for (std::size_t j = 0; j < d_e; ++j) row[j] += xi * e[j];
  }
}

// Mean loss and weight gradients over all samples. Samples are reduced in
// fixed-size chunks whose partial sums are then added in chunk order, so the
// result is bit-identical for any worker count.
inline BatchEval evaluate_batch(std::span<const TrainingSample> samples, const HeadPair& heads,
                                const LossConfig& loss_cfg, bool with_grad) {
  const std::size_t d_in = heads.lidar.d_in();
  const std::size_t d_e = heads.lidar.d_e();
  const std::size_t n_chunks = (samples.size() + kChunk - 1) / kChunk;
  std::vector<BatchEval> partial(n_chunks);

  parallel_for(n_chunks, [&](std::size_t c) {
    BatchEval& acc = partial[c];
    if (with_grad) {
      acc.grad_lidar.assign(d_in * d_e, 0.0);
      acc.grad_camera.assign(d_in * d_e, 0.0);
    }
    const std::size_t end = std::min(samples.size(), (c + 1) * kChunk);
    for (std::size_t s = c * kChunk; s < end; ++s) {
      const TrainingSample& smp = samples[s];
      const auto e_l = heads.lidar.project(smp.lidar);
      const auto e_c = heads.camera.project(smp.camera);
      std::vector<std::vector<double>> e_n;
      e_n.reserve(smp.negatives.size());
      for (const auto& n : smp.negatives) e_n.push_back(heads.camera.project(n));
      const LossReport rep = info_nce(e_l, e_c, e_n, loss_cfg);
      acc.loss += rep.value;
      acc.pos_sim += rep.pos_logit;
      double neg_mean = 0.0;
      for (double v : rep.neg_logits) neg_mean += v;
      acc.neg_sim += neg_mean / static_cast<double>(rep.neg_logits.size());
      if (with_grad) {
        accumulate_outer(acc.grad_lidar, smp.lidar, rep.grad_lidar, d_e);
        accumulate_outer(acc.grad_camera, smp.camera, rep.grad_camera, d_e);
        for (std::size_t k = 0; k < smp.negatives.size(); ++k) {
          accumulate_outer(acc.grad_camera, smp.negatives[k], rep.grad_negs[k], d_e);
        }
      }
    }
  });

  BatchEval total;
  if (with_grad) {
    total.grad_lidar.assign(d_in * d_e, 0.0);
    total.grad_camera.assign(d_in * d_e, 0.0);
  }
  for (const BatchEval& p : partial) {
    total.loss += p.loss;
    total.pos_sim += p.pos_sim;
    total.neg_sim += p.neg_sim;
    if (with_grad) {
      for (std::size_t i = 0; i < total.grad_lidar.size(); ++i) {
        total.grad_lidar[i] += p.grad_lidar[i];
        total.grad_camera[i] += p.grad_camera[i];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  total.loss *= inv;
  total.pos_sim *= inv;
  total.neg_sim *= inv;
  for (double& g : total.grad_lidar) g *= inv;
  for (double& g : total.grad_camera) g *= inv;
  return total;
}

inline std::vector<TrainingSample> prepared(std::span<const TrainingSample> samples, bool normalize) {
  std::vector<TrainingSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.negatives.empty()) continue;
    if (!normalize) {
      out.push_back(s);
      continue;
    }
    TrainingSample t;
    t.lidar = l2_normalized(s.lidar);
    t.camera = l2_normalized(s.camera);
    for (const auto& n : s.negatives) t.negatives.push_back(l2_normalized(n));
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace detail

// Mean alignment loss of `heads` over the samples (samples without negatives
// are skipped). Returns NaN when nothing is scorable.
inline TraceRow mean_alignment_loss(std::span<const TrainingSample> samples, const HeadPair& heads,
                                    const TrainingConfig& cfg) {
  const auto data = detail::prepared(samples, cfg.normalize_inputs);
  if (data.empty()) return {0, NAN, NAN, NAN};
  const auto ev = detail::evaluate_batch(data, heads, cfg.loss, false);
  return {0, ev.loss, ev.pos_sim, ev.neg_sim};
}

inline TrainResult train_heads(std::span<const TrainingSample> samples, const TrainingConfig& cfg) {
  cfg.validate();
  const auto data = detail::prepared(samples, cfg.normalize_inputs);
  BEVALIGN_REQUIRE(!data.empty(), ErrorCode::NoPairs, "contrastive",
                   "no positive pair with at least one negative to train on");
  const std::size_t d_in = data.front().lidar.size();
  for (const auto& s : data) {
    BEVALIGN_REQUIRE(s.lidar.size() == d_in && s.camera.size() == d_in, ErrorCode::LengthMismatch,
                     "contrastive", "training vectors differ in length");
    for (const auto& n : s.negatives) {
      BEVALIGN_REQUIRE(n.size() == d_in, ErrorCode::LengthMismatch, "contrastive",
                       "negative vector differs in length");
    }
  }

  TrainResult result;
  result.heads = init_heads(d_in, cfg);
  result.trace.reserve(cfg.steps + 1);
  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    const bool update = step < cfg.steps;
    const auto ev = detail::evaluate_batch(data, result.heads, cfg.loss, update);
    result.trace.push_back({step, ev.loss, ev.pos_sim, ev.neg_sim});
    BEVALIGN_REQUIRE(std::isfinite(ev.loss), ErrorCode::InvalidConfig, "contrastive",
                     "training diverged at step " + std::to_string(step));
    if (!update) break;
    auto& wl = result.heads.lidar.weights();
    auto& wc = result.heads.camera.weights();
    for (std::size_t i = 0; i < wl.size(); ++i) {
      wl[i] -= cfg.step_size * ev.grad_lidar[i];
      wc[i] -= cfg.step_size * ev.grad_camera[i];
    }
  }
  return result;
}

}  // namespace bevalign
