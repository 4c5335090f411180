#pragma once

#include <array>
#include <cmath>

namespace hkflow {

// Forward-mode dual number carrying a gradient with respect to four coordinates.
struct Dual4 {
    double v = 0.0;
    std::array<double, 4> d{0.0, 0.0, 0.0, 0.0};

    Dual4() = default;
    Dual4(double value) : v(value) {}
    static Dual4 variable(double value, int slot) {
        Dual4 x(value);
        x.d[slot] = 1.0;
        return x;
    }
};

inline double value_of(double x) { return x; }
inline double value_of(const Dual4& x) { return x.v; }

inline Dual4 operator+(const Dual4& a, const Dual4& b) {
    Dual4 r(a.v + b.v);
    for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] + b.d[i];
    return r;
}
inline Dual4 operator-(const Dual4& a, const Dual4& b) {
    Dual4 r(a.v - b.v);
    for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] - b.d[i];
    return r;
}
inline Dual4 operator-(const Dual4& a) {
    Dual4 r(-a.v);
    for (int i = 0; i < 4; ++i) r.d[i] = -a.d[i];
    return r;
}
inline Dual4 operator*(const Dual4& a, const Dual4& b) {
    Dual4 r(a.v * b.v);
    for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
}
inline Dual4 operator/(const Dual4& a, const Dual4& b) {
    Dual4 r(a.v / b.v);
    const double inv2 = 1.0 / (b.v * b.v);
    for (int i = 0; i < 4; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv2;
    return r;
}
inline Dual4 operator+(const Dual4& a, double b) { return a + Dual4(b); }
inline Dual4 operator+(double a, const Dual4& b) { return Dual4(a) + b; }
inline Dual4 operator-(const Dual4& a, double b) { return a - Dual4(b); }
inline Dual4 operator-(double a, const Dual4& b) { return Dual4(a) - b; }
inline Dual4 operator*(const Dual4& a, double b) {
    Dual4 r(a.v * b);
    for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] * b;
    return r;
}
inline Dual4 operator*(double a, const Dual4& b) { return b * a; }
inline Dual4 operator/(const Dual4& a, double b) { return a * (1.0 / b); }
inline Dual4 operator/(double a, const Dual4& b) { return Dual4(a) / b; }

inline Dual4 chain(const Dual4& a, double f, double df) {
    Dual4 r(f);
    for (int i = 0; i < 4; ++i) r.d[i] = df * a.d[i];
    return r;
}
inline Dual4 sin(const Dual4& a) { return chain(a, std::sin(a.v), std::cos(a.v)); }
inline Dual4 cos(const Dual4& a) { return chain(a, std::cos(a.v), -std::sin(a.v)); }
inline Dual4 sinh(const Dual4& a) { return chain(a, std::sinh(a.v), std::cosh(a.v)); }
inline Dual4 cosh(const Dual4& a) { return chain(a, std::cosh(a.v), std::sinh(a.v)); }
inline Dual4 sqrt(const Dual4& a) {
    const double s = std::sqrt(a.v);
    return chain(a, s, 0.5 / s);
}

inline Dual4 acos(const Dual4& a) { return chain(a, std::acos(a.v), -1.0 / std::sqrt(1.0 - a.v * a.v)); }
inline Dual4 acosh(const Dual4& a) { return chain(a, std::acosh(a.v), 1.0 / std::sqrt(a.v * a.v - 1.0)); }
inline Dual4 atan2(const Dual4& y, const Dual4& x) {
    Dual4 r(std::atan2(y.v, x.v));
    const double inv = 1.0 / (x.v * x.v + y.v * y.v);
    for (int i = 0; i < 4; ++i) r.d[i] = (x.v * y.d[i] - y.v * x.d[i]) * inv;
    return r;
}

}  // namespace hkflow
