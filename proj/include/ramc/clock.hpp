#pragma once

#include <chrono>
#include <optional>
#include <string_view>

namespace ramc {

/// Unit operations whose cost enters simulation time (tau) or training time.
enum class CostKind {
    SampleYear,     ///< drawing one 8760-hour margin scenario
    SampleDay,      ///< drawing one 24-hour margin trace
    ExactYear,      ///< exact dispatch over one year
    LabelDay,       ///< exact dispatch over one day
    SurrogateYear,  ///< both forests aggregated over 365 days
    FitTreeRow,     ///< growing one tree, per training row
    ScoreTreeDay,   ///< one tree prediction on one pool day
};

std::string_view to_string(CostKind kind) noexcept;

/// Synthetic seconds charged per unit of each operation. The defaults are
/// rounded single-core timings of this implementation on the reference system.
struct CostModel {
    double sample_year = 2.5e-4;
    double sample_day = 2.5e-6;
    double exact_year = 5.0e-4;
    double label_day = 2.0e-6;
    double surrogate_year = 2.0e-3;
    double fit_tree_row = 6.0e-6;
    double score_tree_day = 4.0e-8;

    double unit_cost(CostKind kind) const noexcept;
};

/// Measures the cost of work either with a steady wall clock or with a fixed
/// synthetic cost model. Synthetic mode makes every reported time, and
/// everything allocated from it, reproducible.
class Clock {
public:
    static Clock wall() { return Clock{}; }
    static Clock synthetic(CostModel model) { return Clock{model}; }

    bool is_synthetic() const noexcept { return model_.has_value(); }
    const std::optional<CostModel>& model() const noexcept { return model_; }

    /// Runs fn and returns the seconds charged for `units` operations of `kind`.
    template <class Fn>
    double time(CostKind kind, double units, Fn&& fn) const
    {
        if (model_) {
            fn();
            return model_->unit_cost(kind) * units;
        }
        const auto start = std::chrono::steady_clock::now();
        fn();
        const auto stop = std::chrono::steady_clock::now();
        return std::chrono::duration<double>(stop - start).count();
    }

private:
    Clock() = default;
    explicit Clock(CostModel model) : model_(model) {}

    std::optional<CostModel> model_;
};

} // namespace ramc
