#include "segline/penalty.hpp"

#include <cmath>
#include <stdexcept>

namespace segline {

namespace {

void check_scad(double x, double lambda, double gamma) {
    if (x < 0.0) {
        throw std::invalid_argument("penalty argument must be nonnegative");
    }
    if (!(lambda > 0.0) || !(gamma > 2.0)) {
        throw std::invalid_argument("SCAD needs lambda > 0 and gamma > 2");
    }
}

void check_mcp(double x, double lambda, double gamma) {
    if (x < 0.0) {
        throw std::invalid_argument("penalty argument must be nonnegative");
    }
    if (!(lambda > 0.0) || !(gamma > 1.0)) {
        throw std::invalid_argument("MCP needs lambda > 0 and gamma > 1");
    }
}

} // namespace

double scad_penalty(double x, double lambda, double gamma) {
    check_scad(x, lambda, gamma);
    if (x <= lambda) {
        return lambda * x;
    }
    if (x <= gamma * lambda) {
        return (gamma * lambda * x - 0.5 * (x * x + lambda * lambda)) / (gamma - 1.0);
    }
    return lambda * lambda * (gamma + 1.0) / 2.0;
}

double scad_derivative(double x, double lambda, double gamma) {
    check_scad(x, lambda, gamma);
    if (x <= lambda) {
        return lambda;
    }
    if (x <= gamma * lambda) {
        return (gamma * lambda - x) / (gamma - 1.0);
    }
    return 0.0;
}

double mcp_penalty(double x, double lambda, double gamma) {
    check_mcp(x, lambda, gamma);
    if (x <= gamma * lambda) {
        return lambda * x - x * x / (2.0 * gamma);
    }
    return 0.5 * gamma * lambda * lambda;
}

double mcp_derivative(double x, double lambda, double gamma) {
    check_mcp(x, lambda, gamma);
    if (x <= gamma * lambda) {
        return lambda - x / gamma;
    }
    return 0.0;
}

double scad_threshold_scalar(double z, double lambda, double gamma) {
    check_scad(0.0, lambda, gamma);
    const double a = std::abs(z);
    const double s = z < 0.0 ? -1.0 : 1.0;
    if (a <= 2.0 * lambda) {
        return a > lambda ? s * (a - lambda) : 0.0;
    }
    if (a <= gamma * lambda) {
        return ((gamma - 1.0) * z - s * gamma * lambda) / (gamma - 2.0);
    }
    return z;
}

} // namespace segline
