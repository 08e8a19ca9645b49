#include "mytm/config.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace mytm {

using nlohmann::json;

namespace {

void merge_into(RunConfig& c, const json& j, const std::string& where) {
    if (!j.is_object()) {
        throw ValidationError(where + ": config must be a flat JSON object");
    }
    for (const auto& [key, val] : j.items()) {
        try {
            if (key == "backend") c.backend = val.get<std::string>();
            else if (key == "backend_seed") c.backend_seed = val.get<std::uint64_t>();
            else if (key == "real_backend_dir") c.real_backend_dir = val.get<std::string>();
            else if (key == "seed") c.seed = val.get<std::uint64_t>();
            else if (key == "iterations") c.iterations = val.get<int>();
            else if (key == "optimizer") c.optimizer = val.get<std::string>();
            else if (key == "learning_rate") c.learning_rate = val.get<double>();
            else if (key == "adam_beta1") c.adam_beta1 = val.get<double>();
            else if (key == "adam_beta2") c.adam_beta2 = val.get<double>();
            else if (key == "adam_eps") c.adam_eps = val.get<double>();
            else if (key == "checkpoint_every") c.checkpoint_every = val.get<int>();
            else if (key == "p_extrapolate") c.p_extrapolate = val.get<double>();
            else if (key == "reference_window_years") c.reference_window_years = val.get<int>();
            else if (key == "lambda_l2") c.weights.lambda_l2 = val.get<double>();
            else if (key == "lambda_lpips") c.weights.lambda_lpips = val.get<double>();
            else if (key == "lambda_id") c.weights.lambda_id = val.get<double>();
            else if (key == "lambda_age") c.weights.lambda_age = val.get<double>();
            else if (key == "lambda_pers_age") c.weights.lambda_pers_age = val.get<double>();
            else if (key == "lambda_reg_extra") c.weights.lambda_reg_extra = val.get<double>();
            else if (key == "lambda_reg") c.weights.lambda_reg = val.get<double>();
            else if (key == "use_adapter") c.flags.use_adapter = val.get<bool>();
            else if (key == "use_extrapolation_reg") c.flags.use_extrapolation_reg = val.get<bool>();
            else if (key == "use_personalized_aging_loss")
                c.flags.use_personalized_aging_loss = val.get<bool>();
            else if (key == "use_adaptive_wnorm") c.flags.use_adaptive_wnorm = val.get<bool>();
            else if (key == "adapter_global_hidden") c.adapter_dims.global_hidden = val.get<int>();
            else if (key == "adapter_aging_hidden") c.adapter_dims.aging_hidden = val.get<int>();
            else if (key == "adapter_style_hidden") c.adapter_dims.style_hidden = val.get<int>();
            else throw ValidationError(where + ": unknown config key '" + key + "'");
        } catch (const json::exception&) {
            throw ValidationError(where + ": bad value type for key '" + key + "'");
        }
    }
}

} // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("config file not found: " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ValidationError("config parse error in " + path.string() + ": " + e.what());
    }
    RunConfig c;
    merge_into(c, j, path.string());
    return c;
}

void RunConfig::apply_json_text(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config override parse error: ") + e.what());
    }
    merge_into(*this, j, "override");
}

std::string RunConfig::canonical_json() const {
    json j;
    j["backend"] = backend;
    j["backend_seed"] = backend_seed;
    j["real_backend_dir"] = real_backend_dir;
    j["seed"] = seed;
    j["iterations"] = iterations;
    j["optimizer"] = optimizer;
    j["learning_rate"] = learning_rate;
    j["adam_beta1"] = adam_beta1;
    j["adam_beta2"] = adam_beta2;
    j["adam_eps"] = adam_eps;
    j["checkpoint_every"] = checkpoint_every;
    j["p_extrapolate"] = p_extrapolate;
    j["reference_window_years"] = reference_window_years;
    j["lambda_l2"] = weights.lambda_l2;
    j["lambda_lpips"] = weights.lambda_lpips;
    j["lambda_id"] = weights.lambda_id;
    j["lambda_age"] = weights.lambda_age;
    j["lambda_pers_age"] = weights.lambda_pers_age;
    j["lambda_reg_extra"] = weights.lambda_reg_extra;
    j["lambda_reg"] = weights.lambda_reg;
    j["use_adapter"] = flags.use_adapter;
    j["use_extrapolation_reg"] = flags.use_extrapolation_reg;
    j["use_personalized_aging_loss"] = flags.use_personalized_aging_loss;
    j["use_adaptive_wnorm"] = flags.use_adaptive_wnorm;
    j["adapter_global_hidden"] = adapter_dims.global_hidden;
    j["adapter_aging_hidden"] = adapter_dims.aging_hidden;
    j["adapter_style_hidden"] = adapter_dims.style_hidden;
    return j.dump(); // nlohmann objects are key-sorted: canonical
}

std::string RunConfig::hash() const {
    const std::string s = canonical_json();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

TrainingConfig RunConfig::training_config() const {
    TrainingConfig t;
    t.iterations = iterations;
    t.optimizer = optimizer;
    t.learning_rate = learning_rate;
    t.adam_beta1 = adam_beta1;
    t.adam_beta2 = adam_beta2;
    t.adam_eps = adam_eps;
    t.weights = weights;
    t.p_extrapolate = p_extrapolate;
    t.seed = seed;
    t.checkpoint_every = checkpoint_every;
    t.reference_window_years = reference_window_years;
    t.flags = flags;
    t.adapter_dims = adapter_dims;
    t.backend_name = backend;
    t.config_hash = hash();
    return t;
}

BackendBundle RunConfig::make_bundle() const {
    return make_backend(backend, backend_seed, real_backend_dir);
}

} // namespace mytm
