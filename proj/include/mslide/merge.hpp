#pragma once

#include "mslide/checkpoint.hpp"
#include "mslide/kernels.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mslide {

/// Whether one lambda is shared by every parameter matrix (norms taken over
/// the concatenated model) or each matrix runs its own schedule.
enum class LambdaScope { Global, PerParameter };

struct ParamSchedule {
    double lambda   = 1.0;
    double norm_sum = 0.0;
};

struct MergeState {
    Checkpoint  base;
    TaskVector  acc_delta; ///< lambda_t-scaled accumulator; finalize divides it back out
    double      lambda   = 1.0;
    std::size_t t        = 0;
    double      norm_sum = 0.0; ///< sum over merged tasks of ||delta_i||_F
    LambdaScope scope    = LambdaScope::Global;
    std::vector<ParamSchedule> per_param; ///< filled only in PerParameter scope
    bool        lambda_floored = false;   ///< last update hit the 1e-12 floor

    static MergeState init(Checkpoint base, LambdaScope scope = LambdaScope::Global);
};

struct ParamProjection {
    std::string name;
    double      g_norm         = 0.0;
    double      delta_norm     = 0.0;
    double      acc_norm       = 0.0;
    double      residual_inner = 0.0; ///< <G, acc_delta>_F, should vanish
};

struct ProjectionReport {
    std::size_t                  t      = 0; ///< task index after the step (1-based)
    double                       lambda = 1.0;
    bool                         lambda_floored = false;
    std::vector<ParamProjection> params;
};

/// Removes from delta_t the components that sit on the diagonal of
/// acc_delta's singular basis: G = U ((U^T delta_t V) .* M) V^T with M zero on
/// positions (i,i), i < min(m,n). The result is Frobenius-orthogonal to acc_delta.
Matrix project_orthogonal(const Matrix& delta_t, const Matrix& acc_delta);

inline constexpr double kLambdaFloor = 1e-12;

struct LambdaUpdate {
    double lambda  = 1.0;
    bool   floored = false;
};

/// lambda_t = t * numerator_norm / norm_sum_total, with lambda_1 = 1.
/// numerator_norm = ||lambda_{t-1} dtheta~_{t-1} + G||_F (= ||acc + G||_F), norm_sum_total includes task t.
LambdaUpdate lambda_schedule(std::size_t t, double numerator_norm, double norm_sum_total);

/// Global-scope form: state holds tasks 1..t-1, projected_sum is the new
/// numerator acc + G, delta_norm is ||delta_t||_F.
LambdaUpdate update_lambda(const MergeState& state, const TaskVector& projected_sum, double delta_norm);

/// Folds theta_t into the merge. First task: acc = delta_1, lambda = 1.
MergeState merge_step(const MergeState& state, const Checkpoint& theta_t,
                      kernels::Exec exec = kernels::Exec::Parallel, ProjectionReport* report = nullptr);

/// base + acc_delta / lambda (per matrix in PerParameter scope).
Checkpoint finalize(const MergeState& state);

/// Task-arithmetic baseline: base + mean of task vectors.
Checkpoint average_merge(const Checkpoint& base, std::span<const Checkpoint> thetas);

void       save_state(const MergeState& state, const std::filesystem::path& path);
MergeState load_state(const std::filesystem::path& path);

} // namespace mslide
