#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace ctxscale {

/// Coefficients of the context-aware scaling law
///
///   P(C, n_pmt, n_ctx) = [1 - exp(-A (C / C_c)^alpha)]
///                      * [1 - exp(-B (n_pmt / n_pmt_c)^beta)]
///                      * sigmoid(sharpness * (n_ctx - n_pmt))
///
/// C_c is in FLOPs and n_pmt_c in tokens; everything else is dimensionless.
struct ScalingParams {
  double A = 1.0;
  double C_c = 1.0;
  double alpha = 1.0;
  double B = 1.0;
  double n_pmt_c = 1.0;
  double beta = 1.0;

  static constexpr std::size_t kCount = 6;
  static constexpr std::array<std::string_view, kCount> kNames = {"A", "C_c", "alpha",
                                                                 "B", "n_pmt_c", "beta"};

  std::array<double, kCount> to_array() const { return {A, C_c, alpha, B, n_pmt_c, beta}; }
  static ScalingParams from_array(const std::array<double, kCount>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
  }

  bool operator==(const ScalingParams&) const = default;
};

// Throws DomainError unless every coefficient is finite and strictly positive.
void validate(const ScalingParams& params);

struct PenaltyConfig {
  bool enabled = true;
  double sharpness = 1.0;  // per token

  bool operator==(const PenaltyConfig&) const = default;
};

void validate(const PenaltyConfig& cfg);

struct ComputeSpec {
  double n_params = 0;  // non-embedding parameters
  double d_tokens = 0;  // training tokens
};

/// 1 - exp(-coef * (x / scale)^exponent). Zero at x = 0, strictly increasing,
/// bounded above by 1.
double saturating_term(double coef, double scale, double exponent, double x);

/// Logistic factor that collapses predictions once the prompt overruns the
/// context window: 0.5 exactly at n_pmt == n_ctx, ~1 below it, ~0 above it.
/// Identically 1 when the penalty is disabled.
double penalty_factor(double n_pmt, double n_ctx, const PenaltyConfig& cfg);

double eval_scaling_law(const ScalingParams& params, const PenaltyConfig& cfg, double C,
                        double n_pmt, double n_ctx);

/// 6 * N * D.
double training_compute(const ComputeSpec& spec);

/// Extra tokens consumed by a context-extension fine-tune.
std::uint64_t extension_tokens(std::uint64_t steps, std::uint64_t batch, std::uint64_t seq_len);

}  // namespace ctxscale
