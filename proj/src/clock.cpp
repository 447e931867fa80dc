#include "ramc/clock.hpp"

namespace ramc {

std::string_view to_string(CostKind kind) noexcept
{
    switch (kind) {
    case CostKind::SampleYear: return "sample_year";
    case CostKind::SampleDay: return "sample_day";
    case CostKind::ExactYear: return "exact_year";
    case CostKind::LabelDay: return "label_day";
    case CostKind::SurrogateYear: return "surrogate_year";
    case CostKind::FitTreeRow: return "fit_tree_row";
    case CostKind::ScoreTreeDay: return "score_tree_day";
    }
    return "unknown";
}

double CostModel::unit_cost(CostKind kind) const noexcept
{
    switch (kind) {
    case CostKind::SampleYear: return sample_year;
    case CostKind::SampleDay: return sample_day;
    case CostKind::ExactYear: return exact_year;
    case CostKind::LabelDay: return label_day;
    case CostKind::SurrogateYear: return surrogate_year;
    case CostKind::FitTreeRow: return fit_tree_row;
    case CostKind::ScoreTreeDay: return score_tree_day;
    }
    return 0.0;
}

} // namespace ramc
