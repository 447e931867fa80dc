#include "ramc/forest.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace ramc {

void LabeledSet::add(const DailyTrace& day, const AdequacyOutcome& label)
{
    features.push_back(day);
    lol.push_back(label.lol);
    ens.push_back(label.ens);
}

void LabeledSet::append(const LabeledSet& other)
{
    features.insert(features.end(), other.features.begin(), other.features.end());
    lol.insert(lol.end(), other.lol.begin(), other.lol.end());
    ens.insert(ens.end(), other.ens.begin(), other.ens.end());
}

void ForestParams::validate() const
{
    if (n_trees < 1) {
        throw std::invalid_argument("forest needs at least one tree");
    }
    if (min_samples_leaf < 1) {
        throw std::invalid_argument("min_samples_leaf must be at least 1");
    }
    if (features_per_split < 1 || features_per_split > kHoursPerDay) {
        throw std::invalid_argument(
            fmt::format("features_per_split must lie in [1, {}]", kHoursPerDay));
    }
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const LabeledSet& data, std::span<const double> labels,
                const ForestParams& params, Stream& stream)
        : data_(data), labels_(labels), params_(params), stream_(stream)
    {
    }

    RegressionTree build()
    {
        const std::size_t n = data_.size();
        rows_.resize(n);
        if (params_.bootstrap) {
            for (auto& r : rows_) {
                r = static_cast<std::uint32_t>(stream_.below(n));
            }
        } else {
            std::iota(rows_.begin(), rows_.end(), 0u);
        }

        struct Pending {
            std::size_t node, begin, end, depth;
        };
        nodes_.clear();
        nodes_.emplace_back();
        std::vector<Pending> stack{{0, 0, n, 0}};
        while (!stack.empty()) {
            const Pending p = stack.back();
            stack.pop_back();

            double sum = 0.0;
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (std::size_t k = p.begin; k < p.end; ++k) {
                const double y = labels_[rows_[k]];
                sum += y;
                lo = std::min(lo, y);
                hi = std::max(hi, y);
            }
            const std::size_t count = p.end - p.begin;
            nodes_[p.node].value = sum / static_cast<double>(count);

            const bool depth_limited = params_.max_depth > 0 && p.depth >= params_.max_depth;
            if (lo == hi || count < 2 * params_.min_samples_leaf || depth_limited) {
                continue;
            }

            const auto split = best_split(p.begin, p.end);
            if (!split) {
                continue;
            }

            const auto middle = std::partition(
                rows_.begin() + static_cast<std::ptrdiff_t>(p.begin),
                rows_.begin() + static_cast<std::ptrdiff_t>(p.end), [&](std::uint32_t r) {
                    return data_.features[r][split->feature] < split->threshold;
                });
            const auto mid = static_cast<std::size_t>(middle - rows_.begin());

            const auto left = static_cast<std::int32_t>(nodes_.size());
            nodes_.emplace_back();
            const auto right = static_cast<std::int32_t>(nodes_.size());
            nodes_.emplace_back();
            auto& node = nodes_[p.node];
            node.feature = static_cast<std::int32_t>(split->feature);
            node.threshold = split->threshold;
            node.left = left;
            node.right = right;

            stack.push_back({static_cast<std::size_t>(right), mid, p.end, p.depth + 1});
            stack.push_back({static_cast<std::size_t>(left), p.begin, mid, p.depth + 1});
        }
        return RegressionTree(std::move(nodes_));
    }

private:
    struct Split {
        std::size_t feature;
        double threshold;
        double impurity;
    };

    std::optional<Split> best_split(std::size_t begin, std::size_t end)
    {
        std::array<std::size_t, kHoursPerDay> order{};
        std::iota(order.begin(), order.end(), std::size_t{0});
        const std::size_t k = params_.features_per_split;
        for (std::size_t i = 0; i < k; ++i) {
            const auto j = i + static_cast<std::size_t>(stream_.below(kHoursPerDay - i));
            std::swap(order[i], order[j]);
        }
        std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));

        std::optional<Split> best;
        for (std::size_t i = 0; i < k; ++i) {
            consider(order[i], begin, end, best);
        }
        // Keep drawing features until some split is valid.
        for (std::size_t i = k; i < kHoursPerDay && !best; ++i) {
            consider(order[i], begin, end, best);
        }
        return best;
    }

    void consider(std::size_t feature, std::size_t begin, std::size_t end,
                  std::optional<Split>& best)
    {
        const std::size_t n = end - begin;
        scratch_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const auto r = rows_[begin + k];
            scratch_[k] = {data_.features[r][feature], labels_[r]};
        }
        std::sort(scratch_.begin(), scratch_.end());

        double total = 0.0;
        double total_sq = 0.0;
        for (const auto& [x, y] : scratch_) {
            total += y;
            total_sq += y * y;
        }

        const std::size_t min_leaf = params_.min_samples_leaf;
        double left = 0.0;
        double left_sq = 0.0;
        for (std::size_t i = 1; i < n; ++i) {
            const double y = scratch_[i - 1].second;
            left += y;
            left_sq += y * y;
            if (i < min_leaf || n - i < min_leaf) {
                continue;
            }
            const double x_lo = scratch_[i - 1].first;
            const double x_hi = scratch_[i].first;
            if (!(x_lo < x_hi)) {
                continue;
            }
            const auto n_left = static_cast<double>(i);
            const auto n_right = static_cast<double>(n - i);
            const double right = total - left;
            const double right_sq = total_sq - left_sq;
            const double impurity = std::max(0.0, left_sq - left * left / n_left)
                + std::max(0.0, right_sq - right * right / n_right);
            // Ties keep the earlier (lower feature, lower threshold) candidate.
            if (best && !(impurity < best->impurity - 1e-12 * std::max(1.0, best->impurity))) {
                continue;
            }
            double threshold = 0.5 * (x_lo + x_hi);
            if (!(threshold > x_lo)) {
                threshold = x_hi;
            }
            best = Split{feature, threshold, impurity};
        }
    }

    const LabeledSet& data_;
    std::span<const double> labels_;
    const ForestParams& params_;
    Stream& stream_;
    std::vector<std::uint32_t> rows_;
    std::vector<RegressionTree::Node> nodes_;
    std::vector<std::pair<double, double>> scratch_;
};

} // namespace

RegressionTree::RegressionTree(std::vector<Node> nodes) : nodes_(std::move(nodes))
{
    if (nodes_.empty()) {
        throw std::invalid_argument("regression tree needs at least one node");
    }
}

std::size_t RegressionTree::depth() const
{
    std::size_t deepest = 0;
    std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        const auto [i, d] = stack.back();
        stack.pop_back();
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        deepest = std::max(deepest, d);
        if (node.feature >= 0) {
            stack.emplace_back(node.left, d + 1);
            stack.emplace_back(node.right, d + 1);
        }
    }
    return deepest;
}

double RegressionTree::saturation_level() const
{
    std::vector<double> candidates;
    for (const auto& node : nodes_) {
        if (node.feature >= 0) {
            candidates.push_back(node.threshold);
        }
    }
    if (candidates.empty()) {
        return -std::numeric_limits<double>::infinity();
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    // A row with every feature >= level can only turn left where level < threshold.
    auto single_valued = [&](double level) {
        std::optional<double> seen;
        std::vector<std::int32_t> stack{0};
        while (!stack.empty()) {
            const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
            stack.pop_back();
            if (node.feature < 0) {
                if (seen && *seen != node.value) {
                    return false;
                }
                seen = node.value;
                continue;
            }
            stack.push_back(node.right);
            if (level < node.threshold) {
                stack.push_back(node.left);
            }
        }
        return true;
    };

    if (single_valued(-std::numeric_limits<double>::infinity())) {
        return -std::numeric_limits<double>::infinity();
    }
    std::size_t lo = 0;
    std::size_t hi = candidates.size() - 1; // the largest threshold always qualifies
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (single_valued(candidates[mid])) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return candidates[lo];
}

Forest::Forest(std::vector<RegressionTree> trees, ForestParams params)
    : trees_(std::move(trees)), params_(params)
{
    if (trees_.empty()) {
        throw std::invalid_argument("forest needs at least one tree");
    }
    for (const auto& tree : trees_) {
        const auto& nodes = tree.nodes();
        roots_.push_back(packed_.size());
        // order[j] is the source node placed at offset j of this tree.
        std::vector<std::int32_t> order{0};
        for (std::size_t j = 0; j < order.size(); ++j) {
            const auto& node = nodes[static_cast<std::size_t>(order[j])];
            if (node.feature < 0) {
                packed_.push_back({node.value, -1, -1});
                continue;
            }
            packed_.push_back({node.threshold, node.feature, static_cast<std::int32_t>(order.size())});
            order.push_back(node.left);
            order.push_back(node.right);
        }
    }

    saturation_ = -std::numeric_limits<double>::infinity();
    for (const auto& tree : trees_) {
        const double level = tree.saturation_level();
        DailyTrace probe{};
        probe.fill(std::isfinite(level) ? level : 0.0);
        tree_saturation_.push_back({level, tree.predict(probe)});
        saturation_ = std::max(saturation_, level);
    }
    double sum = 0.0;
    for (const auto& s : tree_saturation_) {
        sum += s.value;
    }
    saturated_value_ = sum / static_cast<double>(trees_.size());
}

double Forest::predict(const DailyTrace& day) const noexcept
{
    const double low = *std::min_element(day.begin(), day.end());
    if (low >= saturation_) {
        return saturated_value_;
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < trees_.size(); ++k) {
        sum += predict_tree(k, day, low);
    }
    return sum / static_cast<double>(trees_.size());
}

void Forest::accumulate(std::span<const DailyTrace> days, std::span<double> sums) const
{
    std::vector<double> low(days.size());
    for (std::size_t d = 0; d < days.size(); ++d) {
        low[d] = *std::min_element(days[d].begin(), days[d].end());
    }
    for (std::size_t k = 0; k < trees_.size(); ++k) {
        for (std::size_t d = 0; d < days.size(); ++d) {
            sums[d] += predict_tree(k, days[d], low[d]);
        }
    }
}

std::vector<double> Forest::committee_predictions(const DailyTrace& day) const
{
    std::vector<double> out;
    out.reserve(trees_.size());
    const double low = *std::min_element(day.begin(), day.end());
    for (std::size_t k = 0; k < trees_.size(); ++k) {
        out.push_back(predict_tree(k, day, low));
    }
    return out;
}

double Forest::committee_std(const DailyTrace& day) const
{
    const auto votes = committee_predictions(day);
    double mean = 0.0;
    for (double v : votes) {
        mean += v;
    }
    mean /= static_cast<double>(votes.size());
    double ss = 0.0;
    for (double v : votes) {
        ss += (v - mean) * (v - mean);
    }
    return std::sqrt(ss / static_cast<double>(votes.size()));
}

Forest fit(const LabeledSet& data, Target target, const ForestParams& params, std::uint64_t seed,
           const Executor& executor)
{
    params.validate();
    if (data.empty()) {
        throw std::invalid_argument("cannot fit a forest on an empty dataset");
    }
    const std::span<const double> labels = target == Target::Lol ? data.lol : data.ens;

    std::vector<RegressionTree> trees(params.n_trees);
    executor.for_each_index(params.n_trees, [&](std::size_t k) {
        Stream stream(seed, Purpose::TreeFit, k);
        TreeBuilder builder(data, labels, params, stream);
        trees[k] = builder.build();
    });
    return Forest(std::move(trees), params);
}

namespace {

/// Forest mean over the days that are not saturated, others get the saturated value.
double year_total(const Forest& forest, std::span<const DailyTrace> days,
                  std::vector<DailyTrace>& active, std::vector<double>& sums)
{
    active.clear();
    std::vector<bool> saturated(days.size());
    for (std::size_t d = 0; d < days.size(); ++d) {
        saturated[d] = forest.is_saturated(days[d]);
        if (!saturated[d]) {
            active.push_back(days[d]);
        }
    }
    sums.assign(active.size(), 0.0);
    forest.accumulate(active, sums);
    const double n = static_cast<double>(forest.size());
    double total = 0.0;
    std::size_t j = 0;
    for (std::size_t d = 0; d < days.size(); ++d) {
        total += saturated[d] ? forest.saturated_value() : sums[j++] / n;
    }
    return total;
}

} // namespace

AdequacyOutcome predict_year(const Forest& lol, const Forest& ens, const HourlyTrace& margin)
{
    if (margin.size() != kHoursPerYear) {
        throw std::invalid_argument("predict_year expects an 8760-hour trace");
    }
    std::vector<DailyTrace> days(kDaysPerYear);
    std::memcpy(days.data(), margin.values().data(), kHoursPerYear * sizeof(double));
    std::vector<DailyTrace> active;
    std::vector<double> sums;
    AdequacyOutcome out;
    out.lol = year_total(lol, days, active, sums);
    out.ens = year_total(ens, days, active, sums);
    return out;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) {
        return std::nullopt;
    }
    const auto n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        return std::nullopt;
    }
    return sxy / std::sqrt(sxx * syy);
}

SurrogateMetrics surrogate_metrics(const Forest& lol, const Forest& ens,
                                   const LabeledSet& daily_test, const YearlyTestSet& yearly_test,
                                   const Executor& executor)
{
    if (daily_test.empty() || yearly_test.margins.empty()
        || yearly_test.margins.size() != yearly_test.exact.size()) {
        throw std::invalid_argument("surrogate_metrics needs non-empty, consistent test sets");
    }

    const std::size_t n_days = daily_test.size();
    std::vector<double> day_lol(n_days), day_ens(n_days);
    executor.for_each_index(n_days, [&](std::size_t i) {
        day_lol[i] = lol.predict(daily_test.features[i]);
        day_ens[i] = ens.predict(daily_test.features[i]);
    });
    double se_lol = 0.0;
    double se_ens = 0.0;
    for (std::size_t i = 0; i < n_days; ++i) {
        se_lol += (day_lol[i] - daily_test.lol[i]) * (day_lol[i] - daily_test.lol[i]);
        se_ens += (day_ens[i] - daily_test.ens[i]) * (day_ens[i] - daily_test.ens[i]);
    }

    const std::size_t n_years = yearly_test.margins.size();
    std::vector<double> sur_lol(n_years), sur_ens(n_years), ex_lol(n_years), ex_ens(n_years);
    executor.for_each_index(n_years, [&](std::size_t i) {
        const auto predicted = predict_year(lol, ens, yearly_test.margins[i]);
        sur_lol[i] = predicted.lol;
        sur_ens[i] = predicted.ens;
        ex_lol[i] = yearly_test.exact[i].lol;
        ex_ens[i] = yearly_test.exact[i].ens;
    });

    SurrogateMetrics m;
    m.rmse_lol = std::sqrt(se_lol / static_cast<double>(n_days));
    m.rmse_ens = std::sqrt(se_ens / static_cast<double>(n_days));
    m.corr_lol = pearson(sur_lol, ex_lol);
    m.corr_ens = pearson(sur_ens, ex_ens);
    return m;
}

namespace {

constexpr char kMagic[8] = {'R', 'A', 'M', 'C', 'F', 'R', 'S', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

template <class T>
void put(std::ostream& out, T value)
{
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    const U bits = std::bit_cast<U>(value);
    char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    }
    out.write(bytes, sizeof(U));
}

template <class T>
T get(std::istream& in)
{
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    unsigned char bytes[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
        throw std::runtime_error("truncated forest file");
    }
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bits |= static_cast<U>(bytes[i]) << (8 * i);
    }
    return std::bit_cast<T>(bits);
}

} // namespace

void write_forest(std::ostream& out, const Forest& forest)
{
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kFormatVersion);
    const auto& p = forest.params();
    put<std::uint64_t>(out, p.n_trees);
    put<std::uint64_t>(out, p.max_depth);
    put<std::uint64_t>(out, p.min_samples_leaf);
    put<std::uint64_t>(out, p.features_per_split);
    put<std::uint8_t>(out, p.bootstrap ? 1 : 0);
    put<std::uint64_t>(out, forest.trees().size());
    for (const auto& tree : forest.trees()) {
        put<std::uint64_t>(out, tree.nodes().size());
        for (const auto& node : tree.nodes()) {
            put<std::int32_t>(out, node.feature);
            put<double>(out, node.threshold);
            put<std::int32_t>(out, node.left);
            put<std::int32_t>(out, node.right);
            put<double>(out, node.value);
        }
    }
    if (!out) {
        throw std::runtime_error("failed to write forest");
    }
}

Forest read_forest(std::istream& in)
{
    char magic[sizeof(kMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("not a forest file (bad magic)");
    }
    const auto version = get<std::uint32_t>(in);
    if (version != kFormatVersion) {
        throw std::runtime_error(fmt::format("unsupported forest format version {}", version));
    }
    ForestParams params;
    params.n_trees = get<std::uint64_t>(in);
    params.max_depth = get<std::uint64_t>(in);
    params.min_samples_leaf = get<std::uint64_t>(in);
    params.features_per_split = get<std::uint64_t>(in);
    params.bootstrap = get<std::uint8_t>(in) != 0;

    const auto n_trees = get<std::uint64_t>(in);
    if (n_trees == 0 || n_trees > (1u << 20)) {
        throw std::runtime_error("corrupt forest file (tree count)");
    }
    std::vector<RegressionTree> trees;
    trees.reserve(n_trees);
    for (std::uint64_t t = 0; t < n_trees; ++t) {
        const auto n_nodes = get<std::uint64_t>(in);
        if (n_nodes == 0 || n_nodes > (1u << 26)) {
            throw std::runtime_error("corrupt forest file (node count)");
        }
        std::vector<RegressionTree::Node> nodes(n_nodes);
        for (std::uint64_t i = 0; i < n_nodes; ++i) {
            auto& node = nodes[i];
            node.feature = get<std::int32_t>(in);
            node.threshold = get<double>(in);
            node.left = get<std::int32_t>(in);
            node.right = get<std::int32_t>(in);
            node.value = get<double>(in);
            if (node.feature >= 0) {
                // Children always follow their parent, which also rules out cycles.
                const auto self = static_cast<std::int64_t>(i);
                const auto limit = static_cast<std::int64_t>(n_nodes);
                if (node.feature >= static_cast<std::int32_t>(kHoursPerDay) || node.left <= self
                    || node.right <= self || node.left >= limit || node.right >= limit) {
                    throw std::runtime_error("corrupt forest file (node links)");
                }
            }
        }
        trees.emplace_back(std::move(nodes));
    }
    return Forest(std::move(trees), params);
}

void save_forest(const std::filesystem::path& file, const Forest& forest)
{
    std::ofstream out(file, std::ios::binary);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", file.string()));
    }
    write_forest(out, forest);
}

Forest load_forest(const std::filesystem::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw std::runtime_error(fmt::format("cannot open '{}'", file.string()));
    }
    return read_forest(in);
}

} // namespace ramc
