#pragma once

#include "manigap/core.hpp"

#include <string>

namespace manigap {

/// Points in ambient space, one per row.
struct PointCloud {
    Matrix points;
    std::string source;

    [[nodiscard]] Index size() const noexcept { return points.rows(); }
    [[nodiscard]] Index ambient_dim() const noexcept { return points.cols(); }
    [[nodiscard]] Vector point(Index i) const { return points.row(i).transpose(); }

    [[nodiscard]] bool all_finite() const { return points.allFinite(); }

    friend bool operator==(const PointCloud& a, const PointCloud& b) {
        return a.points.rows() == b.points.rows() && a.points.cols() == b.points.cols() &&
               (a.points.array() == b.points.array()).all();
    }
};

/// Copies coordinates into a wider matrix, zero-filling extra columns.
[[nodiscard]] inline Matrix pad_columns(const Matrix& m, Index width) {
    if (m.cols() > width) throw ConfigError("pad_columns: cloud wider than requested width");
    Matrix out = Matrix::Zero(m.rows(), width);
    out.leftCols(m.cols()) = m;
    return out;
}

}  // namespace manigap
