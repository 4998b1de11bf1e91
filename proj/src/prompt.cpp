#include "mslide/prompt.hpp"

#include "mslide/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>
#include <sstream>

namespace mslide {

void PromptBank::add_task(std::string name, std::vector<std::string> class_names, Matrix class_embeddings) {
    if (class_embeddings.rows() < 2) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("task '{}' needs at least 2 classes", name));
    }
    if (class_embeddings.cols() != dim_) {
        throw Error(ErrorCode::Shape, fmt::format("task '{}' embeddings are {} wide, bank dimension is {}", name, class_embeddings.cols(), dim_));
    }
    if (class_names.size() != class_embeddings.rows()) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("task '{}': {} class names for {} embeddings", name, class_names.size(), class_embeddings.rows()));
    }
    Matrix mean(1, dim_);
    for (std::size_t j = 0; j < dim_; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < class_embeddings.rows(); ++i) {
            acc += class_embeddings(i, j);
        }
        mean(0, j) = acc / static_cast<double>(class_embeddings.rows());
    }
    tasks_.push_back({std::move(name), std::move(class_names), std::move(class_embeddings), std::move(mean)});
}

const TaskPrompts& PromptBank::task(std::size_t t) const {
    if (t >= tasks_.size()) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("unknown task id {} (bank has {})", t, tasks_.size()));
    }
    return tasks_[t];
}

std::size_t PromptBank::total_classes() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tasks_) {
        n += t.class_embeddings.rows();
    }
    return n;
}

std::size_t PromptBank::class_offset(std::size_t t) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < t; ++i) {
        off += task(i).class_embeddings.rows();
    }
    return off;
}

PromptBank PromptBank::reordered(const std::vector<std::size_t>& order) const {
    PromptBank out(dim_, normalize_);
    for (std::size_t idx : order) {
        out.tasks_.push_back(task(idx));
    }
    return out;
}

namespace {

double row_dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

double row_norm(std::span<const double> a) { return std::sqrt(row_dot(a, a)); }

void check_query(const Matrix& z, const PromptBank& bank) {
    if (z.rows() != 1 || z.cols() != bank.dim()) {
        throw Error(ErrorCode::Shape, fmt::format("query must be 1x{}, got {}", bank.dim(), z.shape_string()));
    }
}

double similarity(std::span<const double> z, double z_norm, std::span<const double> e, bool normalize) {
    double s = row_dot(z, e);
    if (normalize) {
        const double en = row_norm(e);
        s               = (z_norm > 0.0 && en > 0.0) ? s / (z_norm * en) : 0.0;
    }
    return s;
}

} // namespace

std::size_t argmax(const std::vector<double>& xs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] > xs[best]) {
            best = i;
        }
    }
    return best;
}

std::vector<double> class_logits(const Matrix& z, const PromptBank& bank, std::size_t t) {
    check_query(z, bank);
    const Matrix& e      = bank.task(t).class_embeddings;
    const auto    zr     = z.row(0);
    const double  z_norm = row_norm(zr);
    std::vector<double> out(e.rows());
    for (std::size_t j = 0; j < e.rows(); ++j) {
        out[j] = similarity(zr, z_norm, e.row(j), bank.normalize());
    }
    return out;
}

Matrix task_embedding(const PromptBank& bank, std::size_t t) { return bank.task(t).task_embedding; }

Prediction tcp_infer(const Matrix& z, const PromptBank& bank) {
    if (bank.task_count() == 0) {
        throw Error(ErrorCode::InvalidArgument, "tcp_infer: empty prompt bank");
    }
    check_query(z, bank);
    const auto   zr     = z.row(0);
    const double z_norm = row_norm(zr);
    Prediction   p;
    p.task_scores.reserve(bank.task_count());
    for (const auto& task : bank.tasks()) {
        p.task_scores.push_back(similarity(zr, z_norm, task.task_embedding.row(0), bank.normalize()));
    }
    p.task_id      = argmax(p.task_scores);
    p.class_scores = class_logits(z, bank, p.task_id);
    p.class_id     = argmax(p.class_scores);
    return p;
}

Prediction naive_infer(const Matrix& z, const PromptBank& bank) {
    if (bank.task_count() == 0) {
        throw Error(ErrorCode::InvalidArgument, "naive_infer: empty prompt bank");
    }
    std::vector<std::vector<double>> logits;
    logits.reserve(bank.task_count());
    std::size_t best_t = 0;
    std::size_t best_j = 0;
    Prediction  p;
    for (std::size_t t = 0; t < bank.task_count(); ++t) {
        logits.push_back(class_logits(z, bank, t));
        const std::size_t j = argmax(logits.back());
        p.task_scores.push_back(logits.back()[j]);
        // strict comparison keeps the lowest (task, class) on ties
        if (t == 0 || logits.back()[j] > logits[best_t][best_j]) {
            best_t = t;
            best_j = j;
        }
    }
    p.task_id      = best_t;
    p.class_id     = best_j;
    p.class_scores = std::move(logits[best_t]);
    return p;
}

Prediction masked_infer(const Matrix& z, const PromptBank& bank, std::size_t true_task) {
    Prediction p;
    p.class_scores = class_logits(z, bank, true_task);
    p.class_id     = argmax(p.class_scores);
    p.task_id      = true_task;
    p.task_scores.assign(bank.task_count(), 0.0);
    p.task_scores[true_task] = 1.0;
    return p;
}

PromptBank synth_prompt_bank(const PromptGeometry& g, std::uint64_t seed) {
    if (g.classes_per_task.empty()) {
        throw Error(ErrorCode::InvalidArgument, "synth_prompt_bank: no tasks");
    }
    if (g.dim == 0) {
        throw Error(ErrorCode::InvalidArgument, "synth_prompt_bank: zero dimension");
    }
    if (std::abs(g.rho_in) > 1.0 || std::abs(g.rho_out) > 1.0) {
        throw Error(ErrorCode::Infeasible, "synth_prompt_bank: similarities must lie in [-1, 1]");
    }
    std::vector<std::size_t> owner;
    for (std::size_t t = 0; t < g.classes_per_task.size(); ++t) {
        if (g.classes_per_task[t] < 2) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("synth_prompt_bank: task {} has fewer than 2 classes", t));
        }
        owner.insert(owner.end(), g.classes_per_task[t], t);
    }
    const std::size_t c = owner.size();

    // Cholesky of the target Gram matrix, tolerating rank deficiency.
    constexpr double    kTol = 1e-10;
    std::vector<double> L(c * c, 0.0);
    std::vector<bool>   live(c, false);
    for (std::size_t j = 0; j < c; ++j) {
        double pivot = 1.0;
        for (std::size_t k = 0; k < j; ++k) {
            pivot -= L[j * c + k] * L[j * c + k];
        }
        if (pivot < -kTol) {
            throw Error(ErrorCode::Infeasible, fmt::format("prompt Gram matrix is not positive semidefinite (rho_in={}, rho_out={})", g.rho_in, g.rho_out));
        }
        live[j]               = pivot > kTol;
        const double diag     = live[j] ? std::sqrt(pivot) : 0.0;
        L[j * c + j]          = diag;
        for (std::size_t i = j + 1; i < c; ++i) {
            double v = owner[i] == owner[j] ? g.rho_in : g.rho_out;
            for (std::size_t k = 0; k < j; ++k) {
                v -= L[i * c + k] * L[j * c + k];
            }
            if (live[j]) {
                L[i * c + j] = v / diag;
            } else if (std::abs(v) > 1e-8) {
                throw Error(ErrorCode::Infeasible, "prompt Gram matrix is not positive semidefinite");
            }
        }
    }
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < c; ++j) {
        if (live[j]) {
            cols.push_back(j);
        }
    }
    const std::size_t rank = cols.size();
    if (rank > g.dim) {
        throw Error(ErrorCode::Infeasible, fmt::format("prompt geometry needs rank {} but embedding dimension is {}", rank, g.dim));
    }

    // Random orthonormal rows Q (rank x dim) by twice-applied Gram-Schmidt.
    std::mt19937_64                  rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> q;
    while (q.size() < rank) {
        std::vector<double> r(g.dim);
        for (double& x : r) {
            x = normal(rng);
        }
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& prev : q) {
                const double proj = row_dot(prev, r);
                for (std::size_t i = 0; i < g.dim; ++i) {
                    r[i] -= proj * prev[i];
                }
            }
        }
        const double n = row_norm(r);
        if (n < 1e-6) {
            continue;
        }
        for (double& x : r) {
            x /= n;
        }
        q.push_back(std::move(r));
    }

    PromptBank  bank(g.dim);
    std::size_t row = 0;
    for (std::size_t t = 0; t < g.classes_per_task.size(); ++t) {
        const std::size_t        ct = g.classes_per_task[t];
        Matrix                   e(ct, g.dim);
        std::vector<std::string> names;
        for (std::size_t j = 0; j < ct; ++j, ++row) {
            for (std::size_t k = 0; k < rank; ++k) {
                const double l = L[row * c + cols[k]];
                for (std::size_t x = 0; x < g.dim; ++x) {
                    e(j, x) += l * q[k][x];
                }
            }
            if (t < g.class_names.size() && j < g.class_names[t].size()) {
                names.push_back(g.class_names[t][j]);
            } else {
                names.push_back(fmt::format("c{}", j));
            }
        }
        std::string name = t < g.task_names.size() ? g.task_names[t] : fmt::format("task{}", t);
        bank.add_task(std::move(name), std::move(names), std::move(e));
    }
    return bank;
}

Checkpoint prompt_bank_to_checkpoint(const PromptBank& bank) {
    Checkpoint c;
    c.set_meta("kind", "prompt_bank");
    c.set_meta("dim", std::to_string(bank.dim()));
    c.set_meta("normalize", bank.normalize() ? "1" : "0");
    for (std::size_t t = 0; t < bank.task_count(); ++t) {
        const auto& task = bank.task(t);
        std::string joined;
        for (std::size_t j = 0; j < task.class_names.size(); ++j) {
            joined += (j ? "\n" : "") + task.class_names[j];
        }
        c.set_meta(fmt::format("task/{}/name", t), task.name);
        c.set_meta(fmt::format("task/{}/classes", t), joined);
        c.add(fmt::format("task/{}", t), task.class_embeddings);
    }
    return c;
}

PromptBank prompt_bank_from_checkpoint(const Checkpoint& c) {
    if (c.meta("kind") != "prompt_bank") {
        throw Error(ErrorCode::InvalidArgument, "checkpoint is not a prompt bank");
    }
    const auto dim = c.meta("dim");
    if (!dim) {
        throw Error(ErrorCode::InvalidArgument, "prompt bank missing 'dim'");
    }
    PromptBank bank(std::stoull(*dim), c.meta("normalize") == "1");
    for (std::size_t t = 0; t < c.size(); ++t) {
        const auto& [name, m] = c.entries()[t];
        if (name != fmt::format("task/{}", t)) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("unexpected prompt bank entry '{}'", name));
        }
        std::vector<std::string> classes;
        std::istringstream       in(c.meta(fmt::format("task/{}/classes", t)).value_or(""));
        for (std::string line; std::getline(in, line);) {
            classes.push_back(line);
        }
        bank.add_task(c.meta(fmt::format("task/{}/name", t)).value_or(fmt::format("task{}", t)), std::move(classes), m);
    }
    return bank;
}

} // namespace mslide
