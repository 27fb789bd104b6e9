#pragma once

#include <algorithm>
#include <string>

#include "tscam/errors.hpp"

namespace tscam {

// Axis-aligned pixel box, half-open: [x0, x1) x [y0, y1).
struct Box {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    long long area() const { return static_cast<long long>(width()) * height(); }

    bool operator==(const Box& other) const = default;

    std::string str() const {
        return "(" + std::to_string(x0) + "," + std::to_string(y0) + "," + std::to_string(x1) +
               "," + std::to_string(y1) + ")";
    }
};

inline void validate_box(const Box& b, const char* who) {
    if (b.x0 >= b.x1 || b.y0 >= b.y1) {
        throw ValueError(std::string(who) + ": degenerate box " + b.str());
    }
}

inline long long intersection_area(const Box& a, const Box& b) {
    const int ix = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    const int iy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    if (ix <= 0 || iy <= 0) {
        return 0;
    }
    return static_cast<long long>(ix) * iy;
}

inline double iou(const Box& a, const Box& b) {
    validate_box(a, "iou");
    validate_box(b, "iou");
    const long long inter = intersection_area(a, b);
    const long long uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// Intersection over ground-truth area.
inline double iog(const Box& pred, const Box& gt) {
    validate_box(pred, "iog");
    validate_box(gt, "iog");
    return static_cast<double>(intersection_area(pred, gt)) / static_cast<double>(gt.area());
}

// Intersection over predicted area.
inline double iop(const Box& pred, const Box& gt) {
    validate_box(pred, "iop");
    validate_box(gt, "iop");
    return static_cast<double>(intersection_area(pred, gt)) / static_cast<double>(pred.area());
}

}  // namespace tscam
