#pragma once

#include "scuf/ops.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scuf {

// How image-prompt tokens enter each UNet cross-attention site.
enum class AdapterMode { text_only, original, ip_adapter, cycle_attention };

AdapterMode parse_adapter_mode(std::string_view name);
std::string to_string(AdapterMode mode);

struct AttentionOutput {
  Var output;
  Var weights;  // row-stochastic attention matrix
};

// softmax(q k^T / sqrt(k.cols())) v
AttentionOutput attention(const Var& q, const Var& k, const Var& v);

// Query from latent tokens, key/value from text tokens.
AttentionOutput text_cross_attention(const Var& z_u, const Var& c_t, const Var& w_q, const Var& w_k, const Var& w_v);

struct CycleAttentionOutput {
  Var z_f;  // prompt tokens after querying the latent
  Var z_n;  // first-stage response re-attended over the prompt
  Var stage1_weights;
  Var stage2_weights;
};

// Prompt-queries-latent, then response-queries-prompt. Requires c_i and z_u to have equal row counts.
// The latent serves as key and value of the first stage without projection.
CycleAttentionOutput cycle_attention(const Var& z_u, const Var& c_i, const Var& w_q, const Var& w_k, const Var& w_v);

// Decoupled IP-Adapter branch: latent queries (through the text-branch query projection) over projected prompt tokens.
AttentionOutput ip_adapter_attention(const Var& z_u, const Var& c_i, const Var& w_q, const Var& w_k, const Var& w_v);

Var decoupled_combine(const Var& z_t, const Var& z_branch);

// Weights bound on a tape for one cross-attention site.
struct SiteWeights {
  Var text_q, text_k, text_v;        // frozen text branch
  Var prompt_q, prompt_k, prompt_v;  // learnable adapter projections
};

// Residual conditioning at one site: z_u plus the mode's attention features.
// Without image-prompt tokens every mode reduces to text-only conditioning.
Var condition_site(const Var& z_u, const Var& c_t, const std::optional<Var>& c_i, AdapterMode mode,
                   const SiteWeights& w);

struct ScaleShape {
  int height;
  int width;
  int tokens() const { return height * width; }
};

// Average-pools an H x W map onto each scale grid and lifts every pooled value v to v * lift[i].
std::vector<Matrix> extract_image_prompt_features(const Matrix& map, const std::vector<ScaleShape>& scales,
                                                  const std::vector<RowVector>& lifts);

}  // namespace scuf
