#include "dtbsm/common.hpp"

#include <algorithm>
#include <cmath>

namespace dtbsm {

std::string_view error_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidInput: return "InvalidInput";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::InfeasibleMass: return "InfeasibleMass";
        case ErrorCode::ActionSpaceMismatch: return "ActionSpaceMismatch";
        case ErrorCode::DiscountMismatch: return "DiscountMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::SpecTooLarge: return "SpecTooLarge";
        case ErrorCode::EmptyPool: return "EmptyPool";
        case ErrorCode::Degenerate: return "Degenerate";
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::abs(x));
    return m;
}

double median(std::vector<double> values) {
    if (values.empty()) throw Error(ErrorCode::InvalidInput, "median of empty sample");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + mid);
    return 0.5 * (lower + upper);
}

}  // namespace dtbsm
