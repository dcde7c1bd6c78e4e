// SPDX-License-Identifier: Apache-2.0

#include "masktrack/tps.hpp"

#include <algorithm>
#include <cmath>

namespace masktrack {

double tps_kernel(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

bool collinear(std::span<const Point2> points, double extent_area, double relative_area) {
    const double limit = relative_area * std::max(extent_area, 1e-12);
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            for (std::size_t k = j + 1; k < points.size(); ++k) {
                const double cross = (points[j].x - points[i].x) * (points[k].y - points[i].y) -
                                     (points[j].y - points[i].y) * (points[k].x - points[i].x);
                if (0.5 * std::abs(cross) >= limit) return false;
            }
        }
    }
    return true;
}

ThinPlateSpline ThinPlateSpline::fit(std::span<const Point2> controls,
                                     std::span<const Point2> values, double ridge) {
    if (controls.size() != values.size()) throw Error("ThinPlateSpline: point/value count mismatch");
    const auto n = static_cast<Eigen::Index>(controls.size());
    if (n < 3) throw DegenerateControlPoints("ThinPlateSpline: need at least 3 control points");

    ThinPlateSpline tps;
    double min_x = controls[0].x, max_x = controls[0].x;
    double min_y = controls[0].y, max_y = controls[0].y;
    for (const auto& c : controls) {
        min_x = std::min(min_x, c.x);
        max_x = std::max(max_x, c.x);
        min_y = std::min(min_y, c.y);
        max_y = std::max(max_y, c.y);
    }
    tps.center_ = {0.5 * (min_x + max_x), 0.5 * (min_y + max_y)};
    tps.scale_ = std::max({max_x - min_x, max_y - min_y, 1e-12});
    tps.controls_.reserve(controls.size());
    for (const auto& c : controls) {
        tps.controls_.push_back({(c.x - tps.center_.x) / tps.scale_, (c.y - tps.center_.y) / tps.scale_});
    }
    if (collinear(tps.controls_, 1.0)) {
        throw DegenerateControlPoints("ThinPlateSpline: control points are collinear");
    }

    Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n + 3, n + 3);
    Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(n + 3, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Point2& ci = tps.controls_[i];
        for (Eigen::Index j = 0; j < n; ++j) {
            const Point2& cj = tps.controls_[j];
            const double dx = ci.x - cj.x;
            const double dy = ci.y - cj.y;
            system(i, j) = tps_kernel(dx * dx + dy * dy);
        }
        system(i, i) += ridge;
        system(i, n) = system(n, i) = 1.0;
        system(i, n + 1) = system(n + 1, i) = ci.x;
        system(i, n + 2) = system(n + 2, i) = ci.y;
        rhs(i, 0) = values[i].x;
        rhs(i, 1) = values[i].y;
    }

    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(system);
    Eigen::MatrixX2d solution = qr.solve(rhs);
    // Iterative refinement recovers the digits lost to close control points.
    for (int step = 0; step < 3; ++step) solution += qr.solve(rhs - system * solution);
    if (!solution.allFinite()) throw DegenerateControlPoints("ThinPlateSpline: singular system");
    tps.weights_ = solution.topRows(n);
    tps.affine_ = solution.bottomRows(3);

    for (Eigen::Index i = 0; i < n; ++i) {
        const Point2 f = tps(controls[i]);
        tps.max_residual_ = std::max({tps.max_residual_, std::abs(f.x - values[i].x),
                                      std::abs(f.y - values[i].y)});
    }
    return tps;
}

Point2 ThinPlateSpline::operator()(Point2 p) const {
    const double x = (p.x - center_.x) / scale_;
    const double y = (p.y - center_.y) / scale_;
    double fx = affine_(0, 0) + affine_(1, 0) * x + affine_(2, 0) * y;
    double fy = affine_(0, 1) + affine_(1, 1) * x + affine_(2, 1) * y;
    for (std::size_t i = 0; i < controls_.size(); ++i) {
        const double dx = x - controls_[i].x;
        const double dy = y - controls_[i].y;
        const double u = tps_kernel(dx * dx + dy * dy);
        fx += weights_(static_cast<Eigen::Index>(i), 0) * u;
        fy += weights_(static_cast<Eigen::Index>(i), 1) * u;
    }
    return {fx, fy};
}

}  // namespace masktrack
