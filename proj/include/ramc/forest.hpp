#pragma once

#include "ramc/adequacy.hpp"
#include "ramc/parallel.hpp"
#include "ramc/scenario.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace ramc {

/// Daily margin traces with their exact labels.
struct LabeledSet {
    std::vector<DailyTrace> features;
    std::vector<double> lol; ///< h/day
    std::vector<double> ens; ///< MWh/day

    std::size_t size() const noexcept { return features.size(); }
    bool empty() const noexcept { return features.empty(); }
    void add(const DailyTrace& day, const AdequacyOutcome& label);
    void append(const LabeledSet& other);
};

enum class Target { Lol, Ens };

struct ForestParams {
    std::size_t n_trees = 100;
    std::size_t max_depth = 0; ///< 0 means unbounded
    std::size_t min_samples_leaf = 1;
    std::size_t features_per_split = 8;
    bool bootstrap = true;

    void validate() const;
};

/// Flattened CART regression tree. Rows with x[feature] < threshold go left.
class RegressionTree {
public:
    struct Node {
        std::int32_t feature = -1; ///< -1 marks a leaf
        double threshold = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        double value = 0.0; ///< mean training label (leaves)

        friend bool operator==(const Node&, const Node&) = default;
    };

    RegressionTree() = default;
    explicit RegressionTree(std::vector<Node> nodes);

    double predict(const DailyTrace& x) const noexcept
    {
        std::int32_t i = 0;
        while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
            const Node& node = nodes_[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(node.feature)] < node.threshold ? node.left : node.right;
        }
        return nodes_[static_cast<std::size_t>(i)].value;
    }

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    std::size_t depth() const;

    /// Smallest candidate level T such that every row with all features >= T
    /// lands in leaves sharing a single value.
    double saturation_level() const;

    friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

private:
    std::vector<Node> nodes_;
};

/// Bagged ensemble of regression trees. Immutable once fitted.
class Forest {
public:
    Forest() = default;
    Forest(std::vector<RegressionTree> trees, ForestParams params);

    /// Mean of the per-tree predictions, summed in tree order.
    double predict(const DailyTrace& day) const noexcept;

    /// One prediction per tree, in tree order.
    std::vector<double> committee_predictions(const DailyTrace& day) const;

    /// Population standard deviation of committee_predictions.
    double committee_std(const DailyTrace& day) const;

    std::size_t size() const noexcept { return trees_.size(); }
    const std::vector<RegressionTree>& trees() const noexcept { return trees_; }
    const ForestParams& params() const noexcept { return params_; }

    friend bool operator==(const Forest& a, const Forest& b)
    {
        return a.trees_ == b.trees_;
    }

    /// True when every hour of the day is at or above the level beyond which
    /// all trees return one fixed value.
    bool is_saturated(const DailyTrace& day) const noexcept
    {
        return *std::min_element(day.begin(), day.end()) >= saturation_;
    }
    double saturated_value() const noexcept { return saturated_value_; }

    /// Adds each tree's prediction for days[d] to sums[d], trees in order.
    void accumulate(std::span<const DailyTrace> days, std::span<double> sums) const;

private:
    // Breadth-first copy of every tree with siblings adjacent: a split stores
    // its feature and threshold, a leaf stores feature -1 and its value.
    struct Packed {
        double number;
        std::int32_t feature;
        std::int32_t left;
    };

    double predict_tree(std::size_t k, const DailyTrace& x, double x_min) const noexcept
    {
        if (x_min >= tree_saturation_[k].level) {
            return tree_saturation_[k].value;
        }
        const Packed* node = packed_.data() + roots_[k];
        const Packed* base = node;
        while (node->feature >= 0) {
            const bool right = x[static_cast<std::size_t>(node->feature)] >= node->number;
            node = base + node->left + static_cast<std::int32_t>(right);
        }
        return node->number;
    }

    std::vector<RegressionTree> trees_;
    ForestParams params_;
    std::vector<Packed> packed_;
    std::vector<std::size_t> roots_;
    struct Saturation {
        double level;
        double value;
    };
    std::vector<Saturation> tree_saturation_;
    // Days whose every hour is at or above saturation_ all predict saturated_value_.
    double saturation_ = 0.0;
    double saturated_value_ = 0.0;
};

/// Grows params.n_trees trees; tree k draws from stream (seed, TreeFit, k), so
/// the result does not depend on the executor's thread count. Throws
/// std::invalid_argument on an empty dataset.
Forest fit(const LabeledSet& data, Target target, const ForestParams& params,
           std::uint64_t seed, const Executor& executor = Executor{});

/// Sum of daily predictions over the 365 days of the year.
AdequacyOutcome predict_year(const Forest& lol, const Forest& ens, const HourlyTrace& margin);

struct YearlyTestSet {
    std::vector<HourlyTrace> margins;
    std::vector<AdequacyOutcome> exact;
};

struct SurrogateMetrics {
    double rmse_lol = 0.0;
    double rmse_ens = 0.0;
    std::optional<double> corr_lol; ///< empty when either side has zero variance
    std::optional<double> corr_ens;
};

/// Pearson correlation; empty when either input has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

SurrogateMetrics surrogate_metrics(const Forest& lol, const Forest& ens,
                                   const LabeledSet& daily_test, const YearlyTestSet& yearly_test,
                                   const Executor& executor = Executor{});

/// Portable binary format: magic "RAMCFRST", u32 version, parameters, then
/// per tree its node records. All integers and IEEE-754 doubles little-endian.
void write_forest(std::ostream& out, const Forest& forest);
Forest read_forest(std::istream& in);
void save_forest(const std::filesystem::path& file, const Forest& forest);
Forest load_forest(const std::filesystem::path& file);

} // namespace ramc
