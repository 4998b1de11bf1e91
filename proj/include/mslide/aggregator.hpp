#pragma once

// Gated-attention pooling slide aggregator:
//   h_j = tanh(v_j W_in + b_in^T)
//   a   = softmax_j(h_j . w_a)
//   Z   = (sum_j a_j h_j) W_out + b_out^T
// trained with cross-entropy over frozen prompt logits.

#include "mslide/checkpoint.hpp"
#include "mslide/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace mslide {

struct Bag {
    Matrix      patches; ///< n_patches x d
    std::size_t label   = 0;
    std::size_t task_id = 0;
    int         site_id = -1; ///< -1 when no site is assigned

    friend bool operator==(const Bag&, const Bag&) = default;
};

namespace param {
inline constexpr const char* kWIn  = "w_in";
inline constexpr const char* kBIn  = "b_in";
inline constexpr const char* kWA   = "w_a";
inline constexpr const char* kWOut = "w_out";
inline constexpr const char* kBOut = "b_out";
} // namespace param

/// All-zero parameters of the right shapes, in canonical order.
Checkpoint zero_params(std::size_t dim);

/// Seeded stand-in for pretrained foundation weights: both projections are
/// identity plus N(0, perturbation^2 / d) noise, w_a ~ N(0, 1/d), biases zero.
Checkpoint make_base_params(std::size_t dim, double perturbation, std::uint64_t seed);

/// Throws Shape unless params carry the five expected matrices for `dim`.
void check_params(const Checkpoint& params, std::size_t dim);

/// Slide-level embedding Z (1 x d).
Matrix forward(const Matrix& patches, const Checkpoint& params);

struct LossAndGrads {
    double     loss = 0.0;
    Checkpoint grads; ///< same names and shapes as params
};

/// Cross-entropy of softmax(class logits of Z) at bag.label. Prompt
/// embeddings are treated as constants.
LossAndGrads loss_and_grads(const Bag& bag, const Checkpoint& params, const Matrix& class_embeddings,
                            bool normalize = false);

/// Loss only (used by finite-difference checks).
double bag_loss(const Bag& bag, const Checkpoint& params, const Matrix& class_embeddings, bool normalize = false);

/// k rows drawn without replacement, original order kept; identity when n <= k.
Bag subsample(const Bag& bag, std::size_t k, std::mt19937_64& rng);

struct TrainHyper {
    std::size_t epochs       = 10;
    double      lr           = 1e-3;
    double      beta1        = 0.9;
    double      beta2        = 0.999;
    double      eps          = 1e-8;
    double      weight_decay = 1e-4;
    std::size_t k            = 64; ///< patches kept per bag
    bool        normalize    = false;
};

struct TrainResult {
    Checkpoint          params;
    std::vector<double> history; ///< epoch-mean loss
    double              seconds = 0.0;
};

/// Called with the index (into the training span) of every bag the trainer reads.
using BagReadHook = std::function<void(std::size_t)>;

/// Per-bag AdamW (decoupled weight decay) over shuffled epochs.
TrainResult train_task(std::span<const Bag> train_bags, const Checkpoint& init, const Matrix& class_embeddings,
                       const TrainHyper& hyper, std::mt19937_64& rng, const BagReadHook& on_read = {});

} // namespace mslide
