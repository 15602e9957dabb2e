#include "sparcl/checkpoint.hpp"

#include <fstream>

namespace sparcl {

using nlohmann::json;

json model_to_json(const Model& model) {
    json j;
    j["format"] = "sparcl-checkpoint/1";
    j["precision"] = "f32";
    j["class_count"] = model.class_count;
    json ranges = json::array();
    for (const ClassRange& r : model.task_class_ranges) ranges.push_back({r.begin, r.end});
    j["task_class_ranges"] = ranges;
    json layers = json::array();
    for (const Layer& l : model.layers) {
        json lj;
        lj["kind"] = layer_kind_name(l.kind);
        if (l.has_weights()) {
            lj["weight_shape"] = l.weights.shape();
            lj["weights"] = l.weights.data();
            lj["bias"] = l.bias.data();
            if (l.kind == LayerKind::conv2d) {
                lj["stride"] = l.stride;
                lj["padding"] = l.padding;
            }
        }
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    return j;
}

Model model_from_json(const json& j) {
    if (!j.contains("format") || j["format"] != "sparcl-checkpoint/1") {
        throw FormatError("not a sparcl checkpoint (missing or unknown format tag)");
    }
    if (j.at("precision") != "f32") {
        throw FormatError("unsupported checkpoint precision " +
                          j.at("precision").get<std::string>());
    }
    Model model;
    model.class_count = j.at("class_count").get<int>();
    for (const auto& r : j.at("task_class_ranges")) {
        model.task_class_ranges.push_back({r.at(0).get<int>(), r.at(1).get<int>()});
    }
    for (const auto& lj : j.at("layers")) {
        std::string kind = lj.at("kind").get<std::string>();
        Layer l;
        if (kind == "linear" || kind == "conv2d") {
            auto shape = lj.at("weight_shape").get<std::vector<std::size_t>>();
            auto weights = lj.at("weights").get<std::vector<float>>();
            auto bias = lj.at("bias").get<std::vector<float>>();
            l.kind = kind == "linear" ? LayerKind::linear : LayerKind::conv2d;
            l.weights = Tensor(shape, std::move(weights));
            l.bias = Tensor({bias.size()}, std::move(bias));
            if (l.kind == LayerKind::conv2d) {
                l.stride = lj.at("stride").get<int>();
                l.padding = lj.at("padding").get<int>();
            }
        } else if (kind == "relu") {
            l.kind = LayerKind::relu;
        } else if (kind == "flatten") {
            l.kind = LayerKind::flatten;
        } else {
            throw FormatError("unknown layer kind '" + kind + "' in checkpoint");
        }
        model.layers.push_back(std::move(l));
    }
    return model;
}

void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint to " + path);
    out << model_to_json(model).dump(2) << "\n";
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint from " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
    return model_from_json(j);
}

json csr_export_to_json(const Model& model, const WeightMask& mask) {
    json out = json::array();
    for (const MaskLayer& ml : mask.layers) {
        const Layer& layer = model.layers.at(ml.layer_index);
        CsrMatrix csr = layer_to_csr(layer, ml);
        json lj;
        lj["layer_name"] = std::string(layer_kind_name(layer.kind)) + std::to_string(ml.layer_index);
        lj["layer_index"] = ml.layer_index;
        lj["n_rows"] = csr.n_rows;
        lj["n_cols"] = csr.n_cols;
        lj["row_ptr"] = csr.row_ptr;
        lj["col_idx"] = csr.col_idx;
        lj["values"] = csr.values;
        out.push_back(std::move(lj));
    }
    return out;
}

std::vector<CsrImportLayer> csr_export_from_json(const json& j) {
    std::vector<CsrImportLayer> out;
    for (const auto& lj : j) {
        CsrImportLayer layer;
        layer.layer_name = lj.at("layer_name").get<std::string>();
        layer.layer_index = lj.at("layer_index").get<std::size_t>();
        layer.csr.n_rows = lj.at("n_rows").get<std::size_t>();
        layer.csr.n_cols = lj.at("n_cols").get<std::size_t>();
        layer.csr.row_ptr = lj.at("row_ptr").get<std::vector<std::size_t>>();
        layer.csr.col_idx = lj.at("col_idx").get<std::vector<std::size_t>>();
        layer.csr.values = lj.at("values").get<std::vector<float>>();
        out.push_back(std::move(layer));
    }
    return out;
}

}  // namespace sparcl
