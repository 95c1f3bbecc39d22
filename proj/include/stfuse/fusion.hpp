#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "stfuse/geometry.hpp"

namespace stfuse {

struct WeightEntry {
  double reliability_c{1};
  double aoi_tilde{0};  // s
};

struct RoiWeightResult {
  std::vector<double> alpha;
  bool degenerate{false};  // every numerator vanished; uniform fallback used
};

/// Per-RoI fusion weights: neighbor indices into the neighbor grid list and
/// their normalized weights.
struct RoiFusionWeights {
  std::vector<std::size_t> neighbors;
  std::vector<double> alpha;
};

struct FusionWeights {
  std::vector<RoiFusionWeights> per_roi;
  double decay_lambda{1.0};
};

struct FusionConfig {
  Eigen::MatrixXd channel_projection_W;  // C x C; empty means identity
  double decay_lambda{1.0};
};

inline void validate(const FusionConfig& cfg, int channels) {
  if (!(cfg.decay_lambda > 0)) throw std::invalid_argument("FusionConfig: decay_lambda must be > 0");
  if (cfg.channel_projection_W.size() == 0) return;
  if (cfg.channel_projection_W.rows() != channels || cfg.channel_projection_W.cols() != channels)
    throw std::invalid_argument("FusionConfig: projection must be C x C");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cfg.channel_projection_W);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (!(smin > 0) || s(0) / smin >= 1e6)
    throw std::invalid_argument("FusionConfig: projection is ill-conditioned");
}

/// alpha_i = c_i exp(-a_i / lambda) / sum_j c_j exp(-a_j / lambda), evaluated
/// in the log domain.
inline RoiWeightResult roi_weights(std::span<const WeightEntry> entries, double lambda) {
  if (entries.empty()) throw std::invalid_argument("roi_weights: no entries");
  if (!(lambda > 0)) throw std::invalid_argument("roi_weights: lambda must be > 0");
  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> logits(entries.size(), ninf);
  double top = ninf;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.reliability_c < 0 || !std::isfinite(e.aoi_tilde))
      throw std::invalid_argument("roi_weights: reliabilities must be >= 0, ages finite");
    if (e.reliability_c > 0) logits[i] = std::log(e.reliability_c) - e.aoi_tilde / lambda;
    top = std::max(top, logits[i]);
  }
  RoiWeightResult out;
  out.alpha.assign(entries.size(), 0.0);
  if (top == ninf) {
    out.degenerate = true;
    std::fill(out.alpha.begin(), out.alpha.end(), 1.0 / static_cast<double>(entries.size()));
    return out;
  }
  double z = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out.alpha[i] = std::exp(logits[i] - top);
    z += out.alpha[i];
  }
  for (double& a : out.alpha) a /= z;
  return out;
}

/// F_out = F_ego + sum over RoIs and their neighbors of alpha * mask (W F_l).
/// Masks are H x W cell weights (typically 0/1); overlapping RoIs add.
inline FeatureGrid fuse(const FeatureGrid& ego_grid, std::span<const FeatureGrid> neighbor_grids,
                        std::span<const Eigen::MatrixXd> roi_masks, const FusionWeights& weights,
                        const FusionConfig& cfg = {}) {
  for (const auto& g : neighbor_grids)
    if (!g.same_shape(ego_grid)) throw std::invalid_argument("fuse: neighbor grid shape mismatch");
  if (roi_masks.size() != weights.per_roi.size())
    throw std::invalid_argument("fuse: one weight set per RoI mask is required");
  validate(cfg, ego_grid.channels());
  const int C = ego_grid.channels();
  const bool project = cfg.channel_projection_W.size() != 0;

  std::vector<FeatureGrid> projected;
  std::span<const FeatureGrid> sources = neighbor_grids;
  if (project) {
    projected.reserve(neighbor_grids.size());
    for (const auto& g : neighbor_grids) {
      FeatureGrid p = g.zeros_like();
      for (int co = 0; co < C; ++co)
        for (int ci = 0; ci < C; ++ci)
          if (cfg.channel_projection_W(co, ci) != 0.0)
            p.channel(co) += cfg.channel_projection_W(co, ci) * g.channel(ci);
      projected.push_back(std::move(p));
    }
    sources = projected;
  }

  FeatureGrid out = ego_grid;
  for (std::size_t r = 0; r < roi_masks.size(); ++r) {
    const auto& mask = roi_masks[r];
    const auto& rw = weights.per_roi[r];
    if (mask.rows() != ego_grid.rows() || mask.cols() != ego_grid.cols())
      throw std::invalid_argument("fuse: RoI mask shape mismatch");
    if (rw.neighbors.size() != rw.alpha.size())
      throw std::invalid_argument("fuse: neighbors/alpha size mismatch");
    for (std::size_t j = 0; j < rw.neighbors.size(); ++j) {
      const std::size_t l = rw.neighbors[j];
      if (l >= sources.size()) throw std::out_of_range("fuse: neighbor index out of range");
      for (int ch = 0; ch < C; ++ch)
        out.channel(ch).array() += rw.alpha[j] * mask.array() * sources[l].channel(ch).array();
    }
  }
  return out;
}

}  // namespace stfuse
