#pragma once

#include "mslide/checkpoint.hpp"
#include "mslide/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mslide {

struct TaskPrompts {
    std::string              name;
    std::vector<std::string> class_names;
    Matrix                   class_embeddings; ///< c_t x d
    Matrix                   task_embedding;   ///< 1 x d, row mean of class_embeddings

    friend bool operator==(const TaskPrompts&, const TaskPrompts&) = default;
};

/// Frozen class-aware prompt embeddings, grouped by task.
class PromptBank {
public:
    explicit PromptBank(std::size_t dim, bool normalize = false) : dim_(dim), normalize_(normalize) {}

    /// Requires >= 2 classes and width dim(); derives the task embedding.
    void add_task(std::string name, std::vector<std::string> class_names, Matrix class_embeddings);

    [[nodiscard]] std::size_t        task_count() const noexcept { return tasks_.size(); }
    [[nodiscard]] std::size_t        dim() const noexcept { return dim_; }
    [[nodiscard]] const TaskPrompts& task(std::size_t t) const;
    [[nodiscard]] const std::vector<TaskPrompts>& tasks() const noexcept { return tasks_; }

    /// Cosine similarity instead of raw dot products when on.
    [[nodiscard]] bool normalize() const noexcept { return normalize_; }
    void               set_normalize(bool on) noexcept { normalize_ = on; }

    [[nodiscard]] std::size_t total_classes() const noexcept;
    /// Index of (t, 0) in the concatenation of all tasks' classes.
    [[nodiscard]] std::size_t class_offset(std::size_t t) const;

    /// Keeps tasks in the given order; `order[i]` is the old index of new task i.
    [[nodiscard]] PromptBank reordered(const std::vector<std::size_t>& order) const;

    friend bool operator==(const PromptBank&, const PromptBank&) = default;

private:
    std::size_t              dim_;
    bool                     normalize_;
    std::vector<TaskPrompts> tasks_;
};

struct Prediction {
    std::size_t         task_id  = 0;
    std::size_t         class_id = 0; ///< within task_id
    std::vector<double> task_scores;
    std::vector<double> class_scores;
};

/// z . e_j for each class of task t (cosine if the bank normalizes).
std::vector<double> class_logits(const Matrix& z, const PromptBank& bank, std::size_t t);

Matrix task_embedding(const PromptBank& bank, std::size_t t);

/// Two stage: pick the task whose mean prompt is most similar, then the class.
Prediction tcp_infer(const Matrix& z, const PromptBank& bank);
/// Global argmax over every task's classes.
Prediction naive_infer(const Matrix& z, const PromptBank& bank);
/// Argmax restricted to the given task; task_scores is the one-hot task indicator.
Prediction masked_infer(const Matrix& z, const PromptBank& bank, std::size_t true_task);

/// First index of the maximum.
std::size_t argmax(const std::vector<double>& xs);

struct PromptGeometry {
    std::vector<std::size_t> classes_per_task;
    std::vector<std::string> task_names;                ///< optional; defaults to task<i>
    std::vector<std::vector<std::string>> class_names;  ///< optional; defaults to c<j>
    std::size_t dim    = 32;
    double      rho_in = 0.3; ///< cosine between classes of the same task
    double      rho_out = 0.0; ///< cosine between classes of different tasks
};

/// Unit-norm class embeddings whose Gram matrix is exactly the requested
/// block structure, realised as L * Q with L the Cholesky factor and Q random
/// orthonormal rows. Throws Infeasible when the Gram matrix is not PSD or its
/// rank exceeds dim.
PromptBank synth_prompt_bank(const PromptGeometry& geometry, std::uint64_t seed);

Checkpoint prompt_bank_to_checkpoint(const PromptBank& bank);
PromptBank prompt_bank_from_checkpoint(const Checkpoint& c);

} // namespace mslide
