#include "travl/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "travl/errors.hpp"

namespace travl {

void validate_chunk_window(std::size_t window) {
    if (window < kMinChunkWindow || window > kMaxChunkWindow) {
        throw InvalidInput("chunk window " + std::to_string(window) + " outside [" + std::to_string(kMinChunkWindow) +
                           ", " + std::to_string(kMaxChunkWindow) + "] frames");
    }
}

std::size_t IntegrationLayout::output_tokens() const {
    if (layout == Layout::videochatgpt) {
        return patches() + frames;
    }
    const std::size_t per_side = (grid_side + pool_factor - 1) / pool_factor;
    return frames * per_side * per_side;
}

IntegrationLayout IntegrationLayout::video_chatgpt() {
    return IntegrationLayout{"video-chatgpt", Layout::videochatgpt, 100, 16, 0, 0, 1};
}

IntegrationLayout IntegrationLayout::llava_next(std::size_t window, std::size_t stride, std::size_t pool_factor) {
    validate_chunk_window(window);
    if (stride == 0 || stride > window) {
        throw InvalidInput("chunk stride must lie in [1, window]");
    }
    if (pool_factor == 0) {
        throw InvalidInput("pool_factor must be >= 1");
    }
    return IntegrationLayout{"llava-next", Layout::llavanext, 64, 27, window, stride, pool_factor};
}

// ---------------------------------------------------------------------------

Model Model::init(const ModelConfig& config) {
    if (config.chunk_window != 0 && (config.chunk_stride == 0 || config.chunk_stride > config.chunk_window)) {
        throw InvalidInput("chunk stride must lie in [1, window]");
    }
    // Distinct streams per parameter set.
    Model m{config,
            AttentionParams::random(config.dim, config.heads, AttentionRole::spatial, config.seed * 3 + 1,
                                    config.init_scale),
            AttentionParams::random(config.dim, config.heads, AttentionRole::temporal, config.seed * 3 + 2,
                                    config.init_scale),
            AdapterParams::random(config.dim, config.dim, config.seed * 3 + 3)};
    m.spatial.residual = config.residual;
    m.temporal.residual = config.residual;
    for (auto& w : m.adapter.wc) {
        w *= config.head_init_scale;
    }
    m.adapter.layout = config.layout;
    m.adapter.pool_factor = config.pool_factor;
    m.adapter.validate();
    return m;
}

Model Model::zeros_like() const {
    Model z = *this;
    z.for_each_array([](const std::string&, ParamGroup, std::vector<double>& a) { std::fill(a.begin(), a.end(), 0.0); });
    return z;
}

bool Model::operator==(const Model& other) const {
    std::vector<const std::vector<double>*> mine;
    std::vector<const std::vector<double>*> theirs;
    for_each_array([&](const std::string&, ParamGroup, const std::vector<double>& a) { mine.push_back(&a); });
    other.for_each_array([&](const std::string&, ParamGroup, const std::vector<double>& a) { theirs.push_back(&a); });
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (*mine[i] != *theirs[i]) {
            return false;
        }
    }
    return true;
}

ForwardPass forward(const Model& model, const TokenTensor& features, const TrajectoryMask& mask, const PatchGrid& grid) {
    const ModelConfig& cfg = model.config;
    features.check_grid(grid);
    if (features.dim() != cfg.dim) {
        throw ValidationError("features have dim " + std::to_string(features.dim()) + ", model expects " +
                              std::to_string(cfg.dim));
    }
    ForwardPass pass;
    pass.frames = features.frames();
    pass.patches = features.patches();
    pass.encoded = cfg.encodings ? apply_encodings(features, spatial_encoding_2d(grid, cfg.dim),
                                                   temporal_encoding_1d(features.frames(), cfg.dim))
                                 : features;
    const TokenTensor* x = &pass.encoded;
    if (cfg.spatial) {
        pass.spatial = spatial_attention(*x, model.spatial);
        x = &pass.spatial->output();
    }
    if (cfg.temporal) {
        if (cfg.chunk_window != 0) {
            pass.chunked = chunked_temporal_attention_tape(*x, mask, model.temporal, cfg.chunk_window, cfg.chunk_stride);
            x = &pass.chunked->output();
        } else {
            pass.temporal = masked_temporal_attention(*x, mask, model.temporal);
            x = &pass.temporal->output();
        }
    }
    pass.attended = *x;
    pass.aggregated = cfg.layout == Layout::videochatgpt ? aggregate_videochatgpt(pass.attended)
                                                         : aggregate_llavanext(pass.attended, cfg.pool_factor);
    pass.projection = project(pass.aggregated, model.adapter);
    pass.logits = classify_plausibility(pass.projection.output, model.adapter);
    return pass;
}

ModelGradients backward(const Model& model, const ForwardPass& pass, const std::array<double, 2>& grad_logits) {
    const ModelConfig& cfg = model.config;
    ModelGradients g{model.zeros_like(), TokenTensor()};
    const TokenTensor d_proj = classify_backward(pass.projection.output, model.adapter, grad_logits, g.params.adapter);
    const TokenTensor d_agg = project_backward(pass.projection, model.adapter, d_proj, g.params.adapter);
    TokenTensor dx = cfg.layout == Layout::videochatgpt
                         ? aggregate_videochatgpt_backward(d_agg, pass.frames, pass.patches)
                         : aggregate_llavanext_backward(d_agg, pass.patches, cfg.pool_factor);
    if (pass.chunked) {
        AttentionGradients ag = chunked_backward(*pass.chunked, dx);
        g.params.temporal = std::move(ag.params);
        dx = std::move(ag.input);
    } else if (pass.temporal) {
        AttentionGradients ag = attention_backward(*pass.temporal, dx);
        g.params.temporal = std::move(ag.params);
        dx = std::move(ag.input);
    }
    if (pass.spatial) {
        AttentionGradients ag = attention_backward(*pass.spatial, dx);
        g.params.spatial = std::move(ag.params);
        dx = std::move(ag.input);
    }
    // Encodings are additive, so the feature gradient equals the encoded-token gradient.
    g.input = std::move(dx);
    return g;
}

double cross_entropy(const std::array<double, 2>& logits, int label, std::array<double, 2>* grad) {
    if (label != 0 && label != 1) {
        throw InvalidInput("label must be 0 or 1");
    }
    const double top = std::max(logits[0], logits[1]);
    const double lse = top + std::log(std::exp(logits[0] - top) + std::exp(logits[1] - top));
    if (grad) {
        const auto p = softmax2(logits);
        (*grad)[0] = p[0] - (label == 0 ? 1.0 : 0.0);
        (*grad)[1] = p[1] - (label == 1 ? 1.0 : 0.0);
    }
    return lse - logits[static_cast<std::size_t>(label)];
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointMagic = "travl-checkpoint";
constexpr int kCheckpointVersion = 1;

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void save_checkpoint(const Model& model, std::ostream& out) {
    const ModelConfig& c = model.config;
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << "config dim " << c.dim << '\n'
        << "config heads " << c.heads << '\n'
        << "config layout " << to_string(c.layout) << '\n'
        << "config pool_factor " << c.pool_factor << '\n'
        << "config spatial " << c.spatial << '\n'
        << "config temporal " << c.temporal << '\n'
        << "config residual " << c.residual << '\n'
        << "config encodings " << c.encodings << '\n'
        << "config chunk_window " << c.chunk_window << '\n'
        << "config chunk_stride " << c.chunk_stride << '\n'
        << "config seed " << c.seed << '\n'
        << "config init_scale " << format_double(c.init_scale) << '\n'
        << "config head_init_scale " << format_double(c.head_init_scale) << '\n';
    model.for_each_array([&](const std::string& name, ParamGroup, const std::vector<double>& a) {
        out << name << ' ' << a.size() << '\n';
        for (std::size_t i = 0; i < a.size(); ++i) {
            out << (i ? " " : "") << format_double(a[i]);
        }
        out << '\n';
    });
    if (!out) {
        throw IoError("failed writing checkpoint");
    }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    save_checkpoint(model, out);
}

Model load_checkpoint(std::istream& in) {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) {
        throw ParseError(1, "empty checkpoint");
    }
    {
        std::istringstream head(line);
        std::string magic;
        int version = 0;
        head >> magic >> version;
        if (magic != kCheckpointMagic) {
            throw ParseError(1, "not a travl checkpoint");
        }
        if (version != kCheckpointVersion) {
            throw ParseError(1, "unsupported checkpoint version " + std::to_string(version));
        }
    }
    ModelConfig c;
    std::map<std::string, std::vector<double>> arrays;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        std::string name;
        ls >> name;
        if (name == "config") {
            std::string key;
            std::string value;
            ls >> key >> value;
            try {
                if (key == "dim") c.dim = std::stoul(value);
                else if (key == "heads") c.heads = std::stoul(value);
                else if (key == "layout") c.layout = parse_layout(value);
                else if (key == "pool_factor") c.pool_factor = std::stoul(value);
                else if (key == "spatial") c.spatial = value == "1";
                else if (key == "temporal") c.temporal = value == "1";
                else if (key == "residual") c.residual = value == "1";
                else if (key == "encodings") c.encodings = value == "1";
                else if (key == "chunk_window") c.chunk_window = std::stoul(value);
                else if (key == "chunk_stride") c.chunk_stride = std::stoul(value);
                else if (key == "seed") c.seed = std::stoull(value);
                else if (key == "init_scale") c.init_scale = std::stod(value);
                else if (key == "head_init_scale") c.head_init_scale = std::stod(value);
                else throw ParseError(lineno, "unknown config key '" + key + "'");
            } catch (const std::logic_error&) {
                throw ParseError(lineno, "bad value for config " + key);
            }
            continue;
        }
        std::size_t count = 0;
        if (!(ls >> count)) {
            throw ParseError(lineno, "expected '<name> <count>'");
        }
        if (!std::getline(in, line)) {
            throw ParseError(lineno + 1, "missing values for " + name);
        }
        ++lineno;
        std::istringstream vs(line);
        std::vector<double> values;
        values.reserve(count);
        std::string tok;
        while (vs >> tok) {
            try {
                values.push_back(std::stod(tok));
            } catch (const std::logic_error&) {
                throw ParseError(lineno, "bad number '" + tok + "'");
            }
        }
        if (values.size() != count) {
            throw ParseError(lineno, name + " has " + std::to_string(values.size()) + " values, expected " +
                                         std::to_string(count));
        }
        arrays[name] = std::move(values);
    }
    Model m = Model::init(c);
    m.for_each_array([&](const std::string& name, ParamGroup, std::vector<double>& a) {
        const auto it = arrays.find(name);
        if (it == arrays.end()) {
            throw ValidationError("checkpoint lacks array " + name);
        }
        if (it->second.size() != a.size()) {
            throw ValidationError("checkpoint array " + name + " has " + std::to_string(it->second.size()) +
                                  " values, model expects " + std::to_string(a.size()));
        }
        a = it->second;
    });
    m.spatial.validate();
    m.temporal.validate();
    m.adapter.validate();
    return m;
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return load_checkpoint(in);
}

}  // namespace travl
