#include "causalflow/flow/spline.h"

#include "causalflow/error.h"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>

namespace causalflow::flow {

namespace {

// Forward-mode number with a fixed set of partials, used for the local
// bin formula: (x_k, x_k+1, y_k, y_k+1, d_k, d_k+1, input).
constexpr int kLocalVars = 7;

struct Dual {
    double v = 0.0;
    std::array<double, kLocalVars> g{};
};

Dual variable(double v, int index) {
    Dual d{v, {}};
    d.g[static_cast<std::size_t>(index)] = 1.0;
    return d;
}

Dual operator+(const Dual& a, const Dual& b) {
    Dual r{a.v + b.v, {}};
    for (int i = 0; i < kLocalVars; ++i) r.g[i] = a.g[i] + b.g[i];
    return r;
}
Dual operator-(const Dual& a, const Dual& b) {
    Dual r{a.v - b.v, {}};
    for (int i = 0; i < kLocalVars; ++i) r.g[i] = a.g[i] - b.g[i];
    return r;
}
Dual operator*(const Dual& a, const Dual& b) {
    Dual r{a.v * b.v, {}};
    for (int i = 0; i < kLocalVars; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
    return r;
}
Dual operator*(double s, const Dual& a) {
    Dual r{s * a.v, {}};
    for (int i = 0; i < kLocalVars; ++i) r.g[i] = s * a.g[i];
    return r;
}
Dual operator/(const Dual& a, const Dual& b) {
    const double inv = 1.0 / b.v;
    Dual r{a.v * inv, {}};
    for (int i = 0; i < kLocalVars; ++i) r.g[i] = (a.g[i] - r.v * b.g[i]) * inv;
    return r;
}
Dual operator-(double s, const Dual& a) {
    Dual r{s - a.v, {}};
    for (int i = 0; i < kLocalVars; ++i) r.g[i] = -a.g[i];
    return r;
}
Dual log(const Dual& a) {
    Dual r{std::log(a.v), {}};
    for (int i = 0; i < kLocalVars; ++i) r.g[i] = a.g[i] / a.v;
    return r;
}

double softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

// Shift so a zero raw derivative maps to exactly 1.
double derivative_shift(double min_derivative) {
    return std::log(std::expm1(1.0 - min_derivative));
}

void softmax(std::span<const double> logits, std::vector<double>& out) {
    out.resize(logits.size());
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        sum += out[i];
    }
    for (auto& v : out) {
        v /= sum;
    }
}

using std::log;

template <typename T>
struct BinResult {
    T value;
    T log_derivative;
};

template <typename T>
BinResult<T> evaluate_bin(const T& xk, const T& xk1, const T& yk, const T& yk1, const T& dk,
                          const T& dk1, const T& input) {
    const T w = xk1 - xk;
    const T h = yk1 - yk;
    const T s = h / w;
    const T xi = (input - xk) / w;
    const T one_minus = 1.0 - xi;
    const T xi_om = xi * one_minus;
    const T denom = s + (dk1 + dk - 2.0 * s) * xi_om;
    const T numer = h * (s * xi * xi + dk * xi_om);
    const T value = yk + numer / denom;
    const T inner = dk1 * xi * xi + 2.0 * s * xi_om + dk * one_minus * one_minus;
    const T log_derivative = 2.0 * log(s) + log(inner) - 2.0 * log(denom);
    return {value, log_derivative};
}

int find_bin(const std::vector<double>& knots, double v) {
    // knots[0] <= v < knots[K]; returns k with knots[k] <= v < knots[k+1].
    const auto it = std::upper_bound(knots.begin() + 1, knots.end() - 1, v);
    return static_cast<int>(it - knots.begin()) - 1;
}

}  // namespace

void make_knots(std::span<const double> raw, const SplineConfig& config, SplineKnots& knots) {
    const int k = config.bins;
    if (static_cast<int>(raw.size()) != spline_param_count(k)) {
        throw ContractViolation(
            fmt::format("spline expects {} raw parameters, got {}", spline_param_count(k), raw.size()));
    }
    const auto K = static_cast<std::size_t>(k);
    const double b = config.tail_bound;
    softmax(raw.subspan(0, K), knots.width_softmax);
    softmax(raw.subspan(K, K), knots.height_softmax);
    knots.x.resize(K + 1);
    knots.y.resize(K + 1);
    knots.d.resize(K + 1);
    knots.derivative_sigmoid.resize(K - 1);

    const double wscale = 1.0 - config.min_width * static_cast<double>(k);
    const double hscale = 1.0 - config.min_height * static_cast<double>(k);
    double cx = 0.0;
    double cy = 0.0;
    knots.x[0] = -b;
    knots.y[0] = -b;
    for (std::size_t i = 0; i < K; ++i) {
        cx += config.min_width + wscale * knots.width_softmax[i];
        cy += config.min_height + hscale * knots.height_softmax[i];
        knots.x[i + 1] = -b + 2.0 * b * cx;
        knots.y[i + 1] = -b + 2.0 * b * cy;
    }
    knots.x[K] = b;
    knots.y[K] = b;

    const double shift = derivative_shift(config.min_derivative);
    knots.d[0] = 1.0;
    knots.d[K] = 1.0;
    for (std::size_t i = 0; i + 1 < K; ++i) {
        const double r = raw[2 * K + i] + shift;
        knots.d[i + 1] = config.min_derivative + softplus(r);
        knots.derivative_sigmoid[i] = sigmoid(r);
    }
}

SplineKnots make_knots(std::span<const double> raw, const SplineConfig& config) {
    SplineKnots knots;
    make_knots(raw, config, knots);
    return knots;
}

SplineValue spline_forward(const SplineKnots& knots, double input) {
    const double b = knots.x.back();
    if (input <= -b || input >= b) {
        return {input, 0.0};
    }
    const int k = find_bin(knots.x, input);
    const auto i = static_cast<std::size_t>(k);
    const auto r = evaluate_bin<double>(knots.x[i], knots.x[i + 1], knots.y[i], knots.y[i + 1],
                                        knots.d[i], knots.d[i + 1], input);
    return {r.value, r.log_derivative};
}

SplineGradient spline_forward_with_gradient(const SplineKnots& knots, const SplineConfig& config,
                                            double input, std::span<double> dvalue_draw,
                                            std::span<double> dlogd_draw) {
    std::fill(dvalue_draw.begin(), dvalue_draw.end(), 0.0);
    std::fill(dlogd_draw.begin(), dlogd_draw.end(), 0.0);
    const double b = config.tail_bound;
    if (input <= -b || input >= b) {
        return {input, 0.0, 1.0, 0.0};
    }
    const int kbin = find_bin(knots.x, input);
    const auto k = static_cast<std::size_t>(kbin);
    const auto K = static_cast<std::size_t>(config.bins);

    const auto r = evaluate_bin<Dual>(variable(knots.x[k], 0), variable(knots.x[k + 1], 1),
                                      variable(knots.y[k], 2), variable(knots.y[k + 1], 3),
                                      variable(knots.d[k], 4), variable(knots.d[k + 1], 5),
                                      variable(input, 6));

    // Chain the local partials into the raw parameters of both outputs.
    const auto chain = [&](const Dual& out, std::span<double> draw) {
        const double wscale = 1.0 - config.min_width * static_cast<double>(K);
        const double hscale = 1.0 - config.min_height * static_cast<double>(K);
        // knot x_j = -B + 2B * sum_{i<j} w_i, so dx_j/dw_i = 2B [i < j].
        double dot_w = 0.0;
        double dot_h = 0.0;
        std::array<double, 2> gx{out.g[0], out.g[1]};
        std::array<double, 2> gy{out.g[2], out.g[3]};
        for (std::size_t i = 0; i < K; ++i) {
            double gw = 0.0;
            double gh = 0.0;
            if (i < k) {
                gw += gx[0];
                gh += gy[0];
            }
            if (i < k + 1) {
                gw += gx[1];
                gh += gy[1];
            }
            gw *= 2.0 * b * wscale;
            gh *= 2.0 * b * hscale;
            draw[i] = gw;
            draw[K + i] = gh;
            dot_w += knots.width_softmax[i] * gw;
            dot_h += knots.height_softmax[i] * gh;
        }
        for (std::size_t i = 0; i < K; ++i) {
            draw[i] = knots.width_softmax[i] * (draw[i] - dot_w);
            draw[K + i] = knots.height_softmax[i] * (draw[K + i] - dot_h);
        }
        // Interior derivatives d_1..d_{K-1} map to raw[2K + j - 1].
        if (k >= 1) {
            draw[2 * K + k - 1] += out.g[4] * knots.derivative_sigmoid[k - 1];
        }
        if (k + 1 <= K - 1) {
            draw[2 * K + k] += out.g[5] * knots.derivative_sigmoid[k];
        }
    };
    chain(r.value, dvalue_draw);
    chain(r.log_derivative, dlogd_draw);
    return {r.value.v, r.log_derivative.v, r.value.g[6], r.log_derivative.g[6]};
}

double spline_inverse(const SplineKnots& knots, double output) {
    const double b = knots.y.back();
    if (output <= -b || output >= b) {
        return output;
    }
    const auto k = static_cast<std::size_t>(find_bin(knots.y, output));
    const double xk = knots.x[k];
    const double w = knots.x[k + 1] - xk;
    const double yk = knots.y[k];
    const double h = knots.y[k + 1] - yk;
    const double dk = knots.d[k];
    const double dk1 = knots.d[k + 1];
    const double s = h / w;

    const double dy = output - yk;
    const double a = h * (s - dk) + dy * (dk1 + dk - 2.0 * s);
    const double bq = h * dk - dy * (dk1 + dk - 2.0 * s);
    const double c = -s * dy;
    const double disc = std::max(bq * bq - 4.0 * a * c, 0.0);
    double xi = (2.0 * c) / (-bq - std::sqrt(disc));
    if (!std::isfinite(xi)) {
        xi = 0.5;
    }
    xi = std::clamp(xi, 0.0, 1.0);

    const auto residual = [&](double t) {
        const auto r = evaluate_bin<double>(xk, xk + w, yk, yk + h, dk, dk1, xk + t * w);
        return std::pair{r.value - output, std::exp(r.log_derivative) * w};
    };
    double lo = 0.0;
    double hi = 1.0;
    for (int iter = 0; iter < 100; ++iter) {
        const auto [f, df] = residual(xi);
        if (std::abs(f) <= 1e-10) {
            return xk + xi * w;
        }
        if (f > 0.0) {
            hi = xi;
        } else {
            lo = xi;
        }
        double next = xi - f / df;
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        xi = next;
    }
    throw NumericalError(fmt::format("spline inversion did not converge for output {}", output));
}

std::vector<double> identity_spline_parameters(int bins) {
    return std::vector<double>(static_cast<std::size_t>(spline_param_count(bins)), 0.0);
}

}  // namespace causalflow::flow
