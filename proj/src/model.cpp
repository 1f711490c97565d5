#include "ctxscale/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "ctxscale/errors.hpp"

namespace ctxscale {
namespace {

void require(bool ok, std::string_view fn, std::string_view arg, double value) {
  if (!ok) {
    throw DomainError(std::string(fn) + ": invalid " + std::string(arg) + " = " +
                      std::to_string(value));
  }
}

void require_positive(std::string_view fn, std::string_view arg, double value) {
  require(std::isfinite(value) && value > 0.0, fn, arg, value);
}

void require_nonnegative(std::string_view fn, std::string_view arg, double value) {
  require(std::isfinite(value) && value >= 0.0, fn, arg, value);
}

double logistic(double z) {
  // Branches keep exp() from overflowing for large |z|.
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

void validate(const ScalingParams& params) {
  const auto values = params.to_array();
  for (std::size_t i = 0; i < ScalingParams::kCount; ++i) {
    require_positive("ScalingParams", ScalingParams::kNames[i], values[i]);
  }
}

void validate(const PenaltyConfig& cfg) {
  require_positive("PenaltyConfig", "sharpness", cfg.sharpness);
}

double saturating_term(double coef, double scale, double exponent, double x) {
  require_positive("saturating_term", "coef", coef);
  require_positive("saturating_term", "scale", scale);
  require_positive("saturating_term", "exponent", exponent);
  require_nonnegative("saturating_term", "x", x);
  if (x == 0.0) {
    return 0.0;
  }
  // Ratio first: C ~ 1e23 and C_c ~ 1e30 must not be raised separately.
  const double ratio = x / scale;
  return -std::expm1(-coef * std::pow(ratio, exponent));
}

double penalty_factor(double n_pmt, double n_ctx, const PenaltyConfig& cfg) {
  require_nonnegative("penalty_factor", "n_pmt", n_pmt);
  require_positive("penalty_factor", "n_ctx", n_ctx);
  if (!cfg.enabled) {
    return 1.0;
  }
  require_positive("penalty_factor", "sharpness", cfg.sharpness);
  return logistic(cfg.sharpness * (n_ctx - n_pmt));
}

double eval_scaling_law(const ScalingParams& params, const PenaltyConfig& cfg, double C,
                        double n_pmt, double n_ctx) {
  require_positive("eval_scaling_law", "C", C);
  const double compute = saturating_term(params.A, params.C_c, params.alpha, C);
  const double context = saturating_term(params.B, params.n_pmt_c, params.beta, n_pmt);
  return compute * context * penalty_factor(n_pmt, n_ctx, cfg);
}

double training_compute(const ComputeSpec& spec) {
  require_positive("training_compute", "n_params", spec.n_params);
  require_positive("training_compute", "d_tokens", spec.d_tokens);
  const double flops = 6.0 * spec.n_params * spec.d_tokens;
  require(std::isfinite(flops), "training_compute", "6*N*D", flops);
  return flops;
}

std::uint64_t extension_tokens(std::uint64_t steps, std::uint64_t batch, std::uint64_t seq_len) {
  if (steps == 0 || batch == 0 || seq_len == 0) {
    throw DomainError("extension_tokens: steps, batch and seq_len must be positive");
  }
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  if (batch > kMax / steps || seq_len > kMax / (steps * batch)) {
    throw DomainError("extension_tokens: token count overflows 64 bits");
  }
  return steps * batch * seq_len;
}

}  // namespace ctxscale
