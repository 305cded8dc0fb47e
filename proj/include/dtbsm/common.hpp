#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dtbsm {

/// Error categories surfaced by the library. The CLI maps every one of them to
/// exit status 2 and prints the name on the diagnostic stream.
enum class ErrorCode {
    InvalidInput,
    IndexOutOfRange,
    InfeasibleMass,
    ActionSpaceMismatch,
    DiscountMismatch,
    ShapeMismatch,
    EmptyBatch,
    SpecTooLarge,
    EmptyPool,
    Degenerate,
    MissingColumn,
    Io,
};

std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    double max_abs() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Median of a sample; averages the two middle elements for even sizes.
double median(std::vector<double> values);

}  // namespace dtbsm
