#include "mslide/metrics.hpp"

#include "mslide/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace mslide {

AccuracyMatrix::AccuracyMatrix(std::size_t tasks, AccuracyKind kind, Setting setting)
    : n_(tasks), kind_(kind), setting_(setting), values_(tasks * tasks, 0.0), defined_(tasks * tasks, 0) {
    if (tasks == 0) {
        throw Error(ErrorCode::InvalidArgument, "accuracy matrix needs at least one task");
    }
}

std::string AccuracyMatrix::mode_name() const {
    return fmt::format("{}_{}", setting_ == Setting::ClassIL ? "class_il" : "task_il", kind_ == AccuracyKind::Overall ? "overall" : "balanced");
}

void AccuracyMatrix::set(std::size_t k, std::size_t t, double value) {
    if (k >= n_ || t > k) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("accuracy entry ({}, {}) outside the lower triangle of {}x{}", k, t, n_, n_));
    }
    if (!std::isfinite(value) || value < 0.0 || value > 1.0) {
        throw Error(ErrorCode::NonFinite, fmt::format("accuracy entry ({}, {}) = {} is not in [0, 1]", k, t, value));
    }
    values_[k * n_ + t]  = value;
    defined_[k * n_ + t] = 1;
}

bool AccuracyMatrix::defined(std::size_t k, std::size_t t) const { return k < n_ && t < n_ && defined_[k * n_ + t] != 0; }

double AccuracyMatrix::at(std::size_t k, std::size_t t) const {
    if (!defined(k, t)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("accuracy entry ({}, {}) is undefined", k, t));
    }
    return values_[k * n_ + t];
}

std::string AccuracyMatrix::to_csv() const {
    std::string out = "after_task";
    for (std::size_t t = 0; t < n_; ++t) {
        out += fmt::format(",task_{}", t);
    }
    out += '\n';
    for (std::size_t k = 0; k < n_; ++k) {
        out += std::to_string(k);
        for (std::size_t t = 0; t < n_; ++t) {
            out += ',';
            if (defined(k, t)) {
                out += fmt::format("{:.6f}", at(k, t));
            }
        }
        out += '\n';
    }
    return out;
}

double balanced_accuracy(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred, std::size_t n_classes) {
    if (y_true.empty() || y_true.size() != y_pred.size()) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("balanced_accuracy: need equal non-empty inputs, got {} and {}", y_true.size(), y_pred.size()));
    }
    std::vector<std::size_t> support(n_classes, 0);
    std::vector<std::size_t> hits(n_classes, 0);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] >= n_classes || y_pred[i] >= n_classes) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("balanced_accuracy: label out of range for {} classes", n_classes));
        }
        ++support[y_true[i]];
        hits[y_true[i]] += y_true[i] == y_pred[i] ? 1 : 0;
    }
    double      sum     = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (support[c] > 0) {
            sum += static_cast<double>(hits[c]) / static_cast<double>(support[c]);
            ++present;
        }
    }
    if (present == 0) {
        throw Error(ErrorCode::InvalidArgument, "balanced_accuracy: no class present");
    }
    return sum / static_cast<double>(present);
}

double overall_accuracy(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred) {
    if (y_true.empty() || y_true.size() != y_pred.size()) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("overall_accuracy: need equal non-empty inputs, got {} and {}", y_true.size(), y_pred.size()));
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        hits += y_true[i] == y_pred[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

double forgetting(const AccuracyMatrix& r) {
    const std::size_t n = r.tasks();
    if (n < 2) {
        throw Error(ErrorCode::InvalidArgument, "forgetting needs at least two tasks");
    }
    if (r.setting() != Setting::ClassIL || r.kind() != AccuracyKind::Overall) {
        throw Error(ErrorCode::InvalidArgument, "forgetting is defined on the CLASS-IL overall matrix");
    }
    double sum = 0.0;
    for (std::size_t t = 0; t + 1 < n; ++t) {
        double peak = r.at(t, t);
        for (std::size_t k = t + 1; k < n; ++k) {
            peak = std::max(peak, r.at(k, t));
        }
        sum += peak - r.at(n - 1, t);
    }
    return sum / static_cast<double>(n - 1);
}

double backward_transfer(const AccuracyMatrix& r) {
    const std::size_t n = r.tasks();
    if (n < 2) {
        throw Error(ErrorCode::InvalidArgument, "backward_transfer needs at least two tasks");
    }
    double sum = 0.0;
    for (std::size_t t = 0; t + 1 < n; ++t) {
        sum += r.at(n - 1, t) - r.at(t, t);
    }
    return sum / static_cast<double>(n - 1);
}

double mean_acc(const AccuracyMatrix& r, MeanAccMode mode, std::span<const std::size_t> test_sizes) {
    const std::size_t n = r.tasks();
    if (mode == MeanAccMode::FinalRow) {
        double sum = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            sum += r.at(n - 1, t);
        }
        return sum / static_cast<double>(n);
    }
    if (test_sizes.size() != n) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("mean_acc: {} test sizes for {} tasks", test_sizes.size(), n));
    }
    double outer = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double      correct = 0.0;
        std::size_t total   = 0;
        for (std::size_t t = 0; t <= k; ++t) {
            correct += r.at(k, t) * static_cast<double>(test_sizes[t]);
            total += test_sizes[t];
        }
        if (total == 0) {
            throw Error(ErrorCode::InvalidArgument, "mean_acc: empty union of test sets");
        }
        outer += correct / static_cast<double>(total);
    }
    return outer / static_cast<double>(n);
}

std::string MetricReport::to_json() const {
    nlohmann::ordered_json j;
    j["bacc"]        = bacc;
    j["masked_bacc"] = masked_bacc;
    j["mean_acc"]    = mean_acc;
    j["fgt"]         = fgt;
    j["bwt"]         = bwt;
    return j.dump(2);
}

bool MetricReport::all_finite() const {
    return std::isfinite(bacc) && std::isfinite(masked_bacc) && std::isfinite(mean_acc) && std::isfinite(fgt) && std::isfinite(bwt);
}

} // namespace mslide
