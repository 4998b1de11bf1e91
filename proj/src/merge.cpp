#include "mslide/merge.hpp"

#include "mslide/error.hpp"
#include "mslide/svd.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace mslide {

MergeState MergeState::init(Checkpoint base, LambdaScope scope) {
    MergeState s;
    for (const auto& [name, m] : base.entries()) {
        s.acc_delta.add(name, Matrix(m.rows(), m.cols()));
    }
    s.base  = std::move(base);
    s.scope = scope;
    if (scope == LambdaScope::PerParameter) {
        s.per_param.assign(s.base.size(), ParamSchedule{});
    }
    return s;
}

Matrix project_orthogonal(const Matrix& delta_t, const Matrix& acc_delta) {
    if (!delta_t.same_shape(acc_delta)) {
        throw Error(ErrorCode::Shape, fmt::format("project_orthogonal: {} vs {}", delta_t.shape_string(), acc_delta.shape_string()));
    }
    const SvdResult svd  = svd_full(acc_delta);
    Matrix          core = matmul(matmul(svd.u.transpose(), delta_t), svd.v);
    const std::size_t k  = std::min(core.rows(), core.cols());
    for (std::size_t i = 0; i < k; ++i) {
        core(i, i) = 0.0;
    }
    return matmul(matmul(svd.u, core), svd.v.transpose());
}

LambdaUpdate lambda_schedule(std::size_t t, double numerator_norm, double norm_sum_total) {
    if (t <= 1) {
        return {1.0, false};
    }
    if (numerator_norm == 0.0) {
        if (norm_sum_total == 0.0) {
            throw Error(ErrorCode::DegenerateMerge, fmt::format("degenerate merge at task {}: every task vector is zero", t));
        }
        return {kLambdaFloor, true};
    }
    const double lambda = static_cast<double>(t) * numerator_norm / norm_sum_total;
    if (!std::isfinite(lambda)) {
        throw Error(ErrorCode::NonFinite, fmt::format("lambda_{} is not finite", t));
    }
    return {std::max(lambda, kLambdaFloor), lambda < kLambdaFloor};
}

LambdaUpdate update_lambda(const MergeState& state, const TaskVector& projected_sum, double delta_norm) {
    return lambda_schedule(state.t + 1, global_norm(projected_sum), state.norm_sum + delta_norm);
}

namespace {

struct ParamStep {
    Matrix numerator;
    double g_norm         = 0.0;
    double delta_norm     = 0.0;
    double acc_norm       = 0.0;
    double residual_inner = 0.0;
};

ParamStep step_param(const Matrix& delta, const Matrix& acc) {
    ParamStep out;
    const Matrix g     = project_orthogonal(delta, acc);
    out.g_norm         = frobenius_norm(g);
    out.delta_norm     = frobenius_norm(delta);
    out.acc_norm       = frobenius_norm(acc);
    out.residual_inner = frobenius_inner(g, acc);
    // acc is lambda_{t-1} times the merged delta, so this is lambda_{t-1} dtheta~ + G
    out.numerator      = add(acc, g);
    return out;
}

} // namespace

MergeState merge_step(const MergeState& state, const Checkpoint& theta_t, kernels::Exec exec, ProjectionReport* report) {
    const TaskVector delta = task_vector(theta_t, state.base);
    MergeState       next  = state;
    const std::size_t n    = delta.size();

    if (state.t == 0) {
        next.acc_delta      = delta;
        next.lambda         = 1.0;
        next.t              = 1;
        next.norm_sum       = global_norm(delta);
        next.lambda_floored = false;
        if (state.scope == LambdaScope::PerParameter) {
            for (std::size_t i = 0; i < n; ++i) {
                next.per_param[i] = {1.0, frobenius_norm(delta.entries()[i].second)};
            }
        }
        if (report) {
            report->t              = 1;
            report->lambda         = 1.0;
            report->lambda_floored = false;
            report->params.clear();
            for (const auto& [name, d] : delta.entries()) {
                const double dn = frobenius_norm(d);
                report->params.push_back({name, dn, dn, 0.0, 0.0});
            }
        }
        return next;
    }

    std::vector<ParamStep> steps(n);
    const bool per_param = state.scope == LambdaScope::PerParameter;
    const auto count     = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic) if (exec == kernels::Exec::Parallel)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        const auto   idx  = static_cast<std::size_t>(i);
        steps[idx]        = step_param(delta.entries()[idx].second, state.acc_delta.entries()[idx].second);
    }

    const std::size_t t_new = state.t + 1;
    next.t                  = t_new;
    next.lambda_floored     = false;
    if (per_param) {
        for (std::size_t i = 0; i < n; ++i) {
            const double  sum = state.per_param[i].norm_sum + steps[i].delta_norm;
            LambdaUpdate  up  = lambda_schedule(t_new, frobenius_norm(steps[i].numerator), sum);
            next.per_param[i] = {up.lambda, sum};
            next.lambda_floored = next.lambda_floored || up.floored;
        }
        double delta_sq = 0.0;
        for (const auto& s : steps) {
            delta_sq += s.delta_norm * s.delta_norm;
        }
        next.lambda   = 1.0;
        next.norm_sum = state.norm_sum + std::sqrt(delta_sq);
    } else {
        double num_sq   = 0.0;
        double delta_sq = 0.0;
        for (const auto& s : steps) {
            num_sq += frobenius_inner(s.numerator, s.numerator);
            delta_sq += s.delta_norm * s.delta_norm;
        }
        const double delta_norm = std::sqrt(delta_sq);
        LambdaUpdate up         = lambda_schedule(t_new, std::sqrt(num_sq), state.norm_sum + delta_norm);
        next.lambda             = up.lambda;
        next.lambda_floored     = up.floored;
        next.norm_sum           = state.norm_sum + delta_norm;
    }
    for (std::size_t i = 0; i < n; ++i) {
        next.acc_delta.entries()[i].second = std::move(steps[i].numerator);
    }

    if (report) {
        report->t              = t_new;
        report->lambda         = next.lambda;
        report->lambda_floored = next.lambda_floored;
        report->params.clear();
        for (std::size_t i = 0; i < n; ++i) {
            report->params.push_back({delta.entries()[i].first, steps[i].g_norm, steps[i].delta_norm, steps[i].acc_norm,
                                      steps[i].residual_inner});
        }
    }
    return next;
}

Checkpoint finalize(const MergeState& state) {
    if (state.t == 0) {
        throw Error(ErrorCode::EmptyMerge, "finalize: no task has been merged");
    }
    Checkpoint out;
    if (state.scope == LambdaScope::PerParameter) {
        for (std::size_t i = 0; i < state.base.size(); ++i) {
            const auto& [name, b] = state.base.entries()[i];
            out.add(name, axpy(b, 1.0 / state.per_param[i].lambda, state.acc_delta.entries()[i].second));
        }
        for (const auto& [k, v] : state.base.meta_entries()) {
            out.set_meta(k, v);
        }
    } else {
        out = apply_delta(state.base, state.acc_delta, 1.0 / state.lambda);
    }
    out.set_meta("merge.t", std::to_string(state.t));
    out.set_meta("merge.lambda", format_exact(state.lambda));
    out.set_meta("merge.scope", state.scope == LambdaScope::Global ? "global" : "per_param");
    return out;
}

Checkpoint average_merge(const Checkpoint& base, std::span<const Checkpoint> thetas) {
    if (thetas.empty()) {
        throw Error(ErrorCode::InvalidArgument, "average_merge: empty checkpoint list");
    }
    TaskVector sum = task_vector(thetas.front(), base);
    for (std::size_t k = 1; k < thetas.size(); ++k) {
        const TaskVector d = task_vector(thetas[k], base);
        for (std::size_t i = 0; i < sum.size(); ++i) {
            sum.entries()[i].second = add(sum.entries()[i].second, d.entries()[i].second);
        }
    }
    return apply_delta(base, sum, 1.0 / static_cast<double>(thetas.size()));
}

void save_state(const MergeState& state, const std::filesystem::path& path) {
    Checkpoint c;
    c.set_meta("kind", "merge_state");
    c.set_meta("t", std::to_string(state.t));
    c.set_meta("lambda", format_exact(state.lambda));
    c.set_meta("norm_sum", format_exact(state.norm_sum));
    c.set_meta("scope", state.scope == LambdaScope::Global ? "global" : "per_param");
    c.set_meta("lambda_floored", state.lambda_floored ? "1" : "0");
    for (std::size_t i = 0; i < state.per_param.size(); ++i) {
        const std::string& name = state.base.entries()[i].first;
        c.set_meta("lambda/" + name, format_exact(state.per_param[i].lambda));
        c.set_meta("norm_sum/" + name, format_exact(state.per_param[i].norm_sum));
    }
    for (const auto& [k, v] : state.base.meta_entries()) {
        c.set_meta("base_meta/" + k, v);
    }
    for (const auto& [name, m] : state.base.entries()) {
        c.add("base/" + name, m);
    }
    for (const auto& [name, m] : state.acc_delta.entries()) {
        c.add("acc/" + name, m);
    }
    save(c, path);
}

MergeState load_state(const std::filesystem::path& path) {
    const Checkpoint c = load(path);
    if (c.meta("kind") != "merge_state") {
        throw Error(ErrorCode::InvalidArgument, fmt::format("'{}' is not a merge state file", path.string()));
    }
    auto need = [&](const std::string& key) {
        auto v = c.meta(key);
        if (!v) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("merge state missing meta '{}'", key));
        }
        return *v;
    };
    MergeState s;
    s.t              = static_cast<std::size_t>(std::stoull(need("t")));
    s.lambda         = parse_exact(need("lambda"));
    s.norm_sum       = parse_exact(need("norm_sum"));
    s.scope          = need("scope") == "per_param" ? LambdaScope::PerParameter : LambdaScope::Global;
    s.lambda_floored = need("lambda_floored") == "1";
    for (const auto& [k, v] : c.meta_entries()) {
        if (k.starts_with("base_meta/")) {
            s.base.set_meta(k.substr(10), v);
        }
    }
    for (const auto& [name, m] : c.entries()) {
        if (name.starts_with("base/")) {
            s.base.add(name.substr(5), m);
        } else if (name.starts_with("acc/")) {
            s.acc_delta.add(name.substr(4), m);
        }
    }
    require_compatible(s.base, s.acc_delta, "load_state");
    if (s.scope == LambdaScope::PerParameter) {
        for (const auto& [name, m] : s.base.entries()) {
            s.per_param.push_back({parse_exact(need("lambda/" + name)), parse_exact(need("norm_sum/" + name))});
        }
    }
    return s;
}

} // namespace mslide
