#include "travl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "travl/errors.hpp"

namespace travl {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

nlohmann::json GradCheckReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& a : arrays)
        rows.push_back({{"name", a.name},
                        {"size", a.size},
                        {"max_relative_error", a.max_relative_error},
                        {"max_abs_gradient", a.max_abs_gradient},
                        {"structural_zero", a.structural_zero}});
    return {{"arrays", rows}, {"max_relative_error", max_relative_error}, {"tolerance", tolerance},
            {"passed", passed()}};
}

namespace {

TrajectoryMask random_mask(std::size_t frames, std::size_t patches, std::mt19937_64& rng) {
    std::vector<TrajectoryMask::Row> rows(frames * patches);
    std::uniform_int_distribution<std::size_t> patch(0, patches - 1);
    std::bernoulli_distribution anchor(0.4), visible(0.7);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!anchor(rng)) continue;
        for (std::size_t t = 0; t < frames; ++t)
            if (visible(rng)) rows[i].push_back(static_cast<std::uint32_t>(t * patches + patch(rng)));
    }
    return TrajectoryMask::from_rows(frames, patches, std::move(rows));
}

}  // namespace

GradCheckReport check_pipeline_gradients(const GradCheckInstance& inst) {
    if (inst.frames == 0 || inst.grid_side == 0 || inst.dim == 0) throw InvalidInput("empty gradcheck instance");
    if (!(inst.epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
    std::mt19937_64 rng(inst.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    const int side = static_cast<int>(inst.grid_side);
    const PatchGrid grid(16 * side, 16 * side, side);
    const std::size_t patches = grid.patch_count();

    ModelConfig mc;
    mc.dim = inst.dim;
    mc.heads = inst.heads;
    mc.layout = inst.layout;
    mc.pool_factor = inst.pool_factor;
    mc.residual = inst.residual;
    mc.seed = inst.seed;
    Model model = Model::init(mc);
    model.for_each_array([&](const std::string&, ParamGroup, std::vector<double>& a) {
        for (auto& v : a) v = 0.5 * normal(rng);
    });

    std::vector<double> data(inst.frames * patches * inst.dim);
    for (auto& v : data) v = normal(rng);
    TokenTensor features(inst.frames, patches, inst.dim, std::move(data));
    const TrajectoryMask mask = random_mask(inst.frames, patches, rng);
    const int label = static_cast<int>(rng() & 1U);

    auto loss = [&](const Model& m, const TokenTensor& x) {
        return cross_entropy(forward(m, x, mask, grid).logits, label);
    };
    const ForwardPass pass = forward(model, features, mask, grid);
    std::array<double, 2> dlogits{};
    cross_entropy(pass.logits, label, &dlogits);
    const ModelGradients grads = backward(model, pass, dlogits);

    GradCheckReport report;
    const double tolerance_scale = report.tolerance;
    const double h = inst.epsilon;
    auto check = [&](GradCheckEntry& e, double& slot, double analytic, auto eval) {
        const double original = slot;
        slot = original + h;
        const double up = eval();
        slot = original - h;
        const double down = eval();
        slot = original;
        const double numeric = (up - down) / (2.0 * h);
        if (e.structural_zero)
            e.max_relative_error = std::max(e.max_relative_error, std::max(std::fabs(analytic), std::fabs(numeric)) /
                                                                      kStructuralZeroBound * tolerance_scale);
        else
            e.max_relative_error = std::max(e.max_relative_error, relative_error(analytic, numeric));
        e.max_abs_gradient = std::max(e.max_abs_gradient, std::fabs(analytic));
    };

    std::vector<const std::vector<double>*> analytic;
    grads.params.for_each_array(
        [&](const std::string&, ParamGroup, const std::vector<double>& a) { analytic.push_back(&a); });
    std::size_t index = 0;
    model.for_each_array([&](const std::string& name, ParamGroup, std::vector<double>& a) {
        GradCheckEntry e{name, a.size(), 0.0, 0.0, name.ends_with(".bk")};
        const auto& g = *analytic[index++];
        for (std::size_t i = 0; i < a.size(); ++i) check(e, a[i], g[i], [&] { return loss(model, features); });
        report.arrays.push_back(e);
    });
    GradCheckEntry input{"input", features.values().size(), 0.0, 0.0, false};
    for (std::size_t i = 0; i < features.values().size(); ++i)
        check(input, features.values()[i], grads.input.values()[i], [&] { return loss(model, features); });
    report.arrays.push_back(input);

    for (const auto& e : report.arrays) report.max_relative_error = std::max(report.max_relative_error, e.max_relative_error);
    return report;
}

}  // namespace travl
