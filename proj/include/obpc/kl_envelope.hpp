#pragma once

#include <cmath>
#include <vector>

namespace obpc {

/// beta(r, t) = c * r * exp(-sigma * t), a class-KL function for c >= 1, sigma > 0.
struct KlFit {
    double c = 1.0;
    double sigma = 1.0;

    double operator()(double r, double t) const { return c * r * std::exp(-sigma * t); }
};

/// One nonnegative signal |z(t)| together with the magnitude r it is bounded relative to.
/// Times are measured from the start of the series.
struct EnvelopeSeries {
    double initial_norm = 0.0;
    std::vector<double> times;
    std::vector<double> values;
};

inline constexpr double kEnvelopeSigmaMin = 1.0 / 64.0;
inline constexpr double kEnvelopeSigmaMax = 16.0;
inline constexpr int kEnvelopeSigmaGrid = 64;
inline constexpr double kEnvelopeMaxScale = 1e6;

struct EnvelopeFit {
    bool success = false;
    /// No sample exceeded the floor, so any envelope dominates.
    bool zero_data = false;
    KlFit fit;
    /// Samples above max{fit(r, t), floor}.
    long violations = 0;
    long active_samples = 0;
};

/// Fits the exponential envelope max{c r exp(-sigma t), floor} to all series.
///
/// Only samples above `floor` constrain the fit. For each decay rate sigma
/// the scale is the smallest c >= 1 that dominates every active sample. A
/// rate is admissible when that c stays below 1e6 and, for every series, the
/// sample that fixes c lies in the first half of the record: if the binding
/// sample sits late, the data do not show a decay that fast. The result is
/// the largest admissible sigma from a geometric grid on [1/64, 16], refined
/// by bisection towards the next (inadmissible) grid point.
///
/// When no rate is admissible the fit is reported as failed, with the
/// smallest grid rate and its scale (possibly above the cap) for diagnostics.
EnvelopeFit fit_exponential_envelope(const std::vector<EnvelopeSeries>& series, double floor = 0.0);

/// Number of samples above max{fit(r, t), floor}.
long count_envelope_violations(const std::vector<EnvelopeSeries>& series, const KlFit& fit, double floor);

}  // namespace obpc
