#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mslide {

enum class AccuracyKind { Overall, Balanced };
enum class Setting { ClassIL, TaskIL };

/// Lower-triangular T x T table: entry (k, t), t <= k, is accuracy on task t's
/// test set after learning task k. Entries start undefined and stay flagged.
class AccuracyMatrix {
public:
    AccuracyMatrix(std::size_t tasks, AccuracyKind kind, Setting setting);

    [[nodiscard]] std::size_t  tasks() const noexcept { return n_; }
    [[nodiscard]] AccuracyKind kind() const noexcept { return kind_; }
    [[nodiscard]] Setting      setting() const noexcept { return setting_; }
    /// e.g. "class_il_overall"
    [[nodiscard]] std::string mode_name() const;

    void                 set(std::size_t k, std::size_t t, double value);
    [[nodiscard]] bool   defined(std::size_t k, std::size_t t) const;
    [[nodiscard]] double at(std::size_t k, std::size_t t) const;

    /// Row per k, empty cell where undefined.
    [[nodiscard]] std::string to_csv() const;

    friend bool operator==(const AccuracyMatrix&, const AccuracyMatrix&) = default;

private:
    std::size_t         n_;
    AccuracyKind        kind_;
    Setting             setting_;
    std::vector<double> values_;
    std::vector<char>   defined_;
};

/// Mean per-class recall over classes that occur in y_true.
double balanced_accuracy(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred, std::size_t n_classes);
double overall_accuracy(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred);

/// Mean over t < T of (column peak - final value). Requires a CLASS-IL overall matrix.
double forgetting(const AccuracyMatrix& r);
/// Mean over t < T of (R[T][t] - R[t][t]).
double backward_transfer(const AccuracyMatrix& r);

enum class MeanAccMode {
    FinalRow,   ///< mean of the final model's per-task accuracies
    RunningUnion ///< mean over k of accuracy on the union of tasks 0..k (size-weighted)
};

/// test_sizes is only read in RunningUnion mode.
double mean_acc(const AccuracyMatrix& r, MeanAccMode mode = MeanAccMode::FinalRow,
                std::span<const std::size_t> test_sizes = {});

struct MetricReport {
    double bacc        = 0.0;
    double masked_bacc = 0.0;
    double mean_acc    = 0.0;
    double fgt         = 0.0;
    double bwt         = 0.0;

    /// {"bacc":..,"masked_bacc":..,"mean_acc":..,"fgt":..,"bwt":..}
    [[nodiscard]] std::string to_json() const;
    [[nodiscard]] bool        all_finite() const;
};

} // namespace mslide
