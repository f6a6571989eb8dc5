#include "scuf/adapter.hpp"

#include "scuf/errors.hpp"

#include <cmath>

namespace scuf {

AdapterMode parse_adapter_mode(std::string_view name) {
  if (name == "text_only") return AdapterMode::text_only;
  if (name == "original") return AdapterMode::original;
  if (name == "ip_adapter") return AdapterMode::ip_adapter;
  if (name == "cycle_attention") return AdapterMode::cycle_attention;
  throw ConfigError("unknown adapter mode '" + std::string(name) +
                    "' (expected text_only | original | ip_adapter | cycle_attention)");
}

std::string to_string(AdapterMode mode) {
  switch (mode) {
    case AdapterMode::text_only: return "text_only";
    case AdapterMode::original: return "original";
    case AdapterMode::ip_adapter: return "ip_adapter";
    case AdapterMode::cycle_attention: return "cycle_attention";
  }
  return "unknown";
}

AttentionOutput attention(const Var& q, const Var& k, const Var& v) {
  if (q.cols() != k.cols()) throw ShapeError("attention: query/key width mismatch");
  if (k.rows() != v.rows()) throw ShapeError("attention: key/value row mismatch");
  const Real inv_sqrt_d = 1.0 / std::sqrt(static_cast<Real>(k.cols()));
  Var weights = ops::softmax_rows(ops::scale(ops::matmul_nt(q, k), inv_sqrt_d));
  return {ops::matmul(weights, v), weights};
}

AttentionOutput text_cross_attention(const Var& z_u, const Var& c_t, const Var& w_q, const Var& w_k, const Var& w_v) {
  return attention(ops::matmul(z_u, w_q), ops::matmul(c_t, w_k), ops::matmul(c_t, w_v));
}

CycleAttentionOutput cycle_attention(const Var& z_u, const Var& c_i, const Var& w_q, const Var& w_k, const Var& w_v) {
  if (c_i.rows() != z_u.rows()) {
    throw ShapeError("cycle_attention: prompt has " + std::to_string(c_i.rows()) + " tokens but latent has " +
                     std::to_string(z_u.rows()) + "; downsample the prompt to the latent scale");
  }
  AttentionOutput first = attention(ops::matmul(c_i, w_q), z_u, z_u);
  AttentionOutput second = attention(first.output, ops::matmul(c_i, w_k), ops::matmul(c_i, w_v));
  return {first.output, second.output, first.weights, second.weights};
}

AttentionOutput ip_adapter_attention(const Var& z_u, const Var& c_i, const Var& w_q, const Var& w_k, const Var& w_v) {
  return attention(ops::matmul(z_u, w_q), ops::matmul(c_i, w_k), ops::matmul(c_i, w_v));
}

Var decoupled_combine(const Var& z_t, const Var& z_branch) {
  if (z_t.rows() != z_branch.rows() || z_t.cols() != z_branch.cols()) {
    throw ShapeError("decoupled_combine: branch shape differs from text branch");
  }
  return ops::add(z_t, z_branch);
}

Var condition_site(const Var& z_u, const Var& c_t, const std::optional<Var>& c_i, AdapterMode mode,
                   const SiteWeights& w) {
  const Var z_t = text_cross_attention(z_u, c_t, w.text_q, w.text_k, w.text_v).output;
  if (!c_i || mode == AdapterMode::text_only) return ops::add(z_u, z_t);
  switch (mode) {
    case AdapterMode::cycle_attention: {
      const Var z_n = cycle_attention(z_u, *c_i, w.prompt_q, w.prompt_k, w.prompt_v).z_n;
      return ops::add(z_u, decoupled_combine(z_t, z_n));
    }
    case AdapterMode::ip_adapter: {
      const Var z_ip = ip_adapter_attention(z_u, *c_i, w.text_q, w.prompt_k, w.prompt_v).output;
      return ops::add(z_u, decoupled_combine(z_t, z_ip));
    }
    case AdapterMode::original: {
      // Text layer first, then an image layer querying the text layer's output.
      const Var h = ops::add(z_u, z_t);
      const Var z_img = ip_adapter_attention(h, *c_i, w.text_q, w.prompt_k, w.prompt_v).output;
      return ops::add(h, z_img);
    }
    case AdapterMode::text_only: break;
  }
  return ops::add(z_u, z_t);
}

std::vector<Matrix> extract_image_prompt_features(const Matrix& map, const std::vector<ScaleShape>& scales,
                                                  const std::vector<RowVector>& lifts) {
  if (lifts.size() != scales.size()) throw ShapeError("extract_image_prompt_features: one lift per scale required");
  const int h = static_cast<int>(map.rows()), w = static_cast<int>(map.cols());
  std::vector<Matrix> out;
  out.reserve(scales.size());
  for (std::size_t s = 0; s < scales.size(); ++s) {
    const ScaleShape sh = scales[s];
    if (sh.height <= 0 || sh.width <= 0 || h % sh.height != 0 || w % sh.width != 0) {
      throw ShapeError("extract_image_prompt_features: " + std::to_string(h) + "x" + std::to_string(w) +
                       " map cannot be pooled evenly to " + std::to_string(sh.height) + "x" + std::to_string(sh.width));
    }
    const int fy = h / sh.height, fx = w / sh.width;
    Matrix tokens(sh.tokens(), lifts[s].cols());
    for (int y = 0; y < sh.height; ++y) {
      for (int x = 0; x < sh.width; ++x) {
        const Real pooled = map.block(y * fy, x * fx, fy, fx).mean();
        tokens.row(y * sh.width + x) = pooled * lifts[s];
      }
    }
    out.push_back(std::move(tokens));
  }
  return out;
}

}  // namespace scuf
