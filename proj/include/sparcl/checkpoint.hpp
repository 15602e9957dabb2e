#pragma once

#include <string>

#include "json.hpp"
#include "sparcl/mask.hpp"
#include "sparcl/model.hpp"

namespace sparcl {

/// Self-describing JSON container: layer kinds, shapes, flat weight arrays,
/// precision tag. Float values survive the round trip exactly.
nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

/// One JSON object per maskable layer:
/// {layer_name, layer_index, n_rows, n_cols, row_ptr, col_idx, values}.
nlohmann::json csr_export_to_json(const Model& model, const WeightMask& mask);

struct CsrImportLayer {
    std::string layer_name;
    std::size_t layer_index = 0;
    CsrMatrix csr;
};

std::vector<CsrImportLayer> csr_export_from_json(const nlohmann::json& j);

}  // namespace sparcl
