#include "tscam/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "tscam/errors.hpp"

namespace tscam {

namespace {

enum class FieldType { Int, Real, Bool, Str, U64 };

struct Binding {
    const char* key;
    FieldType type;
    void* ptr;
};

std::vector<Binding> bindings(RunConfig& c) {
    return {
        {"image_size", FieldType::Int, &c.image_size},
        {"patch_size", FieldType::Int, &c.patch_size},
        {"depth", FieldType::Int, &c.depth},
        {"heads", FieldType::Int, &c.heads},
        {"embed_dim", FieldType::Int, &c.embed_dim},
        {"mlp_ratio", FieldType::Real, &c.mlp_ratio},
        {"num_classes", FieldType::Int, &c.num_classes},
        {"head_variant", FieldType::Str, &c.head_variant},
        {"train_images", FieldType::Int, &c.train_images},
        {"val_images", FieldType::Int, &c.val_images},
        {"test_images", FieldType::Int, &c.test_images},
        {"max_distractors", FieldType::Int, &c.max_distractors},
        {"min_scale", FieldType::Real, &c.min_scale},
        {"max_scale", FieldType::Real, &c.max_scale},
        {"shape_alpha_lo", FieldType::Real, &c.shape_alpha_lo},
        {"shape_alpha_hi", FieldType::Real, &c.shape_alpha_hi},
        {"multi_instance", FieldType::Bool, &c.multi_instance},
        {"epochs", FieldType::Int, &c.epochs},
        {"batch_size", FieldType::Int, &c.batch_size},
        {"lr", FieldType::Real, &c.lr},
        {"beta1", FieldType::Real, &c.beta1},
        {"beta2", FieldType::Real, &c.beta2},
        {"eps", FieldType::Real, &c.eps},
        {"weight_decay", FieldType::Real, &c.weight_decay},
        {"clip_norm", FieldType::Real, &c.clip_norm},
        {"aux_cls_weight", FieldType::Real, &c.aux_cls_weight},
        {"resize_to", FieldType::Int, &c.resize_to},
        {"crop_to", FieldType::Int, &c.crop_to},
        {"tau", FieldType::Real, &c.tau},
        {"layer_lo", FieldType::Int, &c.layer_lo},
        {"layer_hi", FieldType::Int, &c.layer_hi},
        {"mode", FieldType::Str, &c.mode},
        {"class_selector", FieldType::Str, &c.class_selector},
        {"target", FieldType::Str, &c.target},
        {"label", FieldType::Int, &c.label},
        {"thresholds", FieldType::Str, &c.thresholds},
        {"seed", FieldType::U64, &c.seed},
        {"threads", FieldType::Int, &c.threads},
        {"out", FieldType::Str, &c.out},
        {"data_dir", FieldType::Str, &c.data_dir},
        {"checkpoint", FieldType::Str, &c.checkpoint},
        {"image", FieldType::Str, &c.image},
        {"manifest", FieldType::Str, &c.manifest},
        {"pred", FieldType::Str, &c.pred},
        {"gt", FieldType::Str, &c.gt},
    };
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
        return "";
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

// Parses a value into its bound field; throws ValueError on a bad literal.
void assign(const Binding& b, const std::string& value) {
    try {
        std::size_t used = 0;
        switch (b.type) {
            case FieldType::Int: {
                const long long v = std::stoll(value, &used);
                if (used != value.size()) {
                    throw ValueError("");
                }
                *static_cast<index_t*>(b.ptr) = static_cast<index_t>(v);
                return;
            }
            case FieldType::Real: {
                const double v = std::stod(value, &used);
                if (used != value.size()) {
                    throw ValueError("");
                }
                *static_cast<double*>(b.ptr) = v;
                return;
            }
            case FieldType::Bool: {
                if (value == "true" || value == "1") {
                    *static_cast<bool*>(b.ptr) = true;
                } else if (value == "false" || value == "0") {
                    *static_cast<bool*>(b.ptr) = false;
                } else {
                    throw ValueError("");
                }
                return;
            }
            case FieldType::U64: {
                const unsigned long long v = std::stoull(value, &used);
                if (used != value.size()) {
                    throw ValueError("");
                }
                *static_cast<std::uint64_t*>(b.ptr) = v;
                return;
            }
            case FieldType::Str:
                *static_cast<std::string*>(b.ptr) = value;
                return;
        }
    } catch (const std::logic_error&) {
        // fall through to the common message
    } catch (const ValueError&) {
    }
    throw ValueError("key '" + std::string(b.key) + "' rejects value '" + value + "'");
}

std::string format_value(const Binding& b) {
    std::ostringstream os;
    switch (b.type) {
        case FieldType::Int:
            os << *static_cast<const index_t*>(b.ptr);
            break;
        case FieldType::Real:
            os << *static_cast<const double*>(b.ptr);
            break;
        case FieldType::Bool:
            os << (*static_cast<const bool*>(b.ptr) ? "true" : "false");
            break;
        case FieldType::U64:
            os << *static_cast<const std::uint64_t*>(b.ptr);
            break;
        case FieldType::Str:
            os << *static_cast<const std::string*>(b.ptr);
            break;
    }
    return os.str();
}

}  // namespace

VitConfig RunConfig::vit() const {
    VitConfig v;
    v.image_size = crop_to;  // the model consumes augmented crops
    v.patch_size = patch_size;
    v.depth = depth;
    v.heads = heads;
    v.embed_dim = embed_dim;
    v.mlp_ratio = mlp_ratio;
    v.num_classes = num_classes;
    v.validate();
    return v;
}

SynthConfig RunConfig::synth() const {
    SynthConfig s;
    s.num_classes = num_classes;
    s.image_size = image_size;
    s.train_images = train_images;
    s.val_images = val_images;
    s.test_images = test_images;
    s.min_scale = min_scale;
    s.max_scale = max_scale;
    s.max_distractors = max_distractors;
    s.shape_alpha_lo = shape_alpha_lo;
    s.shape_alpha_hi = shape_alpha_hi;
    s.multi_instance = multi_instance;
    s.seed = seed;
    s.validate();
    return s;
}

TrainConfig RunConfig::trainer() const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.adamw = AdamWConfig{lr, beta1, beta2, eps, weight_decay};
    t.clip_norm = clip_norm;
    t.aux_cls_weight = aux_cls_weight;
    t.threads = threads;
    t.seed = seed;
    t.augment.resize_to = resize_to;
    t.augment.crop_to = crop_to;
    return t;
}

void parse_config_file(const std::filesystem::path& path, RunConfig* config) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config '" + path.string() + "'");
    }
    auto binds = bindings(*config);
    std::string line;
    index_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        const std::string stripped = trim(line);
        if (stripped.empty()) {
            continue;
        }
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config '" + path.string() + "' line " + std::to_string(line_no) +
                             ": expected 'key = value'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        auto it = std::find_if(binds.begin(), binds.end(),
                               [&](const Binding& b) { return key == b.key; });
        if (it == binds.end()) {
            throw ParseError("config '" + path.string() + "' line " + std::to_string(line_no) +
                             ": unknown key '" + key + "'");
        }
        try {
            assign(*it, value);
        } catch (const ValueError& e) {
            throw ParseError("config '" + path.string() + "' line " + std::to_string(line_no) +
                             ": " + e.what());
        }
    }
}

void apply_flags(const std::vector<std::string>& args, RunConfig* config) {
    auto binds = bindings(*config);
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& arg = args[i];
        if (arg.rfind("--", 0) != 0) {
            throw UsageError("unexpected argument '" + arg + "'");
        }
        std::string key;
        std::string value;
        const auto eq = arg.find('=');
        if (eq != std::string::npos) {
            key = arg.substr(2, eq - 2);
            value = arg.substr(eq + 1);
        } else {
            key = arg.substr(2);
            if (i + 1 >= args.size()) {
                throw UsageError("flag '" + arg + "' needs a value");
            }
            value = args[++i];
        }
        std::replace(key.begin(), key.end(), '-', '_');
        auto it = std::find_if(binds.begin(), binds.end(),
                               [&](const Binding& b) { return key == b.key; });
        if (it == binds.end()) {
            throw UsageError("unknown flag '" + arg + "'");
        }
        try {
            assign(*it, value);
        } catch (const ValueError& e) {
            throw UsageError(e.what());
        }
    }
}

std::string render_config(const RunConfig& config) {
    auto binds = bindings(const_cast<RunConfig&>(config));
    std::string out;
    for (const Binding& b : binds) {
        out += b.key;
        out += " = ";
        out += format_value(b);
        out += "\n";
    }
    return out;
}

std::vector<std::string> config_keys() {
    RunConfig tmp;
    std::vector<std::string> keys;
    for (const Binding& b : bindings(tmp)) {
        keys.emplace_back(b.key);
    }
    return keys;
}

}  // namespace tscam
