#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxscale/analysis.hpp"
#include "ctxscale/data.hpp"
#include "ctxscale/optimize.hpp"

namespace ctxscale {

using Json = nlohmann::ordered_json;

// FitConfig <-> TOML. Sections: [bounds] (one [lower, upper] array per
// coefficient), [de], [local], [penalty]; `seed` and `log_space_scales` are
// top-level keys. Keys absent from the document keep their value in `base`.
// Unknown keys are rejected with ValidationError.
FitConfig fit_config_from_toml(std::string_view text, const FitConfig& base = {});
std::string to_toml(const FitConfig& config);

Json to_json(const ScalingParams& params);
Json to_json(const PenaltyConfig& penalty);
Json to_json(const FitConfig& config);
Json to_json(const FitResult& result);
Json to_json(const AblationReport& report);
Json to_json(const ContextGeneralization& study);
Json to_json(const ContourGrid& grid);
Json to_json(const std::vector<GeneralizationRow>& rows);

ScalingParams params_from_json(const Json& doc);
FitConfig fit_config_from_json(const Json& doc);
// Accepts a full FitResult document or a bare parameter object. The config
// falls back to defaults when the document carries none.
FitResult fit_result_from_json(const Json& doc);

// Long format: C,n_ctx,n_pmt,value
void write_contour_csv(std::ostream& out, const ContourGrid& grid);
// model_id,C,n_ctx,task,residual
void write_generalization_csv(std::ostream& out, const std::vector<GeneralizationRow>& rows);

}  // namespace ctxscale
