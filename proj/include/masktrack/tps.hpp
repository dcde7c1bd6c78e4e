// SPDX-License-Identifier: Apache-2.0
//
// Two-dimensional thin-plate spline with radial kernel U(r) = r^2 log r^2 and
// an affine part, fitted to vector values at control points.

#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "masktrack/types.hpp"

namespace masktrack {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

class DegenerateControlPoints : public Error {
public:
    using Error::Error;
};

class ThinPlateSpline {
public:
    /// Solves
    ///   [K + ridge*I  P] [w]   [values]
    ///   [P^T          0] [a] = [0     ]
    /// with K_ij = U(|c_i - c_j|) and P rows (1, x_i, y_i). Coordinates are
    /// centered and scaled to unit extent first; the fitted function is
    /// unchanged by this because the side conditions cancel the r^2 term.
    /// Throws DegenerateControlPoints for fewer than 3 points or a collinear set.
    static ThinPlateSpline fit(std::span<const Point2> controls, std::span<const Point2> values,
                               double ridge = 0.0);

    [[nodiscard]] Point2 operator()(Point2 p) const;

    /// Largest |f(c_i) - value_i| over the control points.
    [[nodiscard]] double max_residual() const { return max_residual_; }

    [[nodiscard]] std::size_t size() const noexcept { return controls_.size(); }

private:
    std::vector<Point2> controls_;  // normalized
    Point2 center_;
    double scale_ = 1.0;
    Eigen::MatrixX2d weights_;
    Eigen::Matrix<double, 3, 2> affine_;
    double max_residual_ = 0.0;
};

/// r^2 log r^2, with U(0) = 0.
double tps_kernel(double r2);

/// True when every triple of points spans a triangle smaller than
/// `relative_area` times the extent area (i.e. the set is numerically collinear).
bool collinear(std::span<const Point2> points, double extent_area, double relative_area = 1e-3);

}  // namespace masktrack
