#pragma once

namespace segline {

/// SCAD penalty of Fan and Li; x >= 0, lambda > 0, gamma > 2.
double scad_penalty(double x, double lambda, double gamma);
/// Right derivative of scad_penalty at x >= 0.
double scad_derivative(double x, double lambda, double gamma);

/// Minimax concave penalty; x >= 0, lambda > 0, gamma > 1.
double mcp_penalty(double x, double lambda, double gamma);
double mcp_derivative(double x, double lambda, double gamma);

/// Minimizer over μ of ½(z − μ)² + scad_penalty(|μ|, λ, γ).
double scad_threshold_scalar(double z, double lambda, double gamma);

} // namespace segline
