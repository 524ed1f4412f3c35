#pragma once

#include <cmath>
#include <stdexcept>

namespace sqdh {

// P_d(x,y) = (x^d - y^d)/(x - y), evaluated in the sum form so it is exact
// and continuous at x = y.
inline double poly_P(int d, double x, double y) {
    if (d < 1) throw std::invalid_argument("poly_P: d must be >= 1");
    double s = 0.0;
    double xm = 1.0;  // x^m
    for (int m = 0; m < d; ++m) {
        s += xm * std::pow(y, d - 1 - m);
        xm *= x;
    }
    return s;
}

}  // namespace sqdh
