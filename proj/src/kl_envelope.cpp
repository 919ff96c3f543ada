#include "obpc/kl_envelope.hpp"

#include <algorithm>
#include <limits>

namespace obpc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Ties between the two halves of a record are resolved against admissibility.
constexpr double kLateBindingSlack = 1e-9;

struct Probe {
    bool admissible = false;
    double log_c = 0.0;
};

// Works with log(value * exp(sigma t) / r) so that large sigma*t cannot overflow.
Probe probe(const std::vector<EnvelopeSeries>& series, double floor, double sigma) {
    Probe out;
    out.admissible = true;
    out.log_c = 0.0;  // c >= 1
    for (const auto& s : series) {
        if (s.values.empty()) continue;
        const double t0 = s.times.front();
        const double mid = 0.5 * (s.times.back() - t0);
        double first_half = kNegInf;
        double second_half = kNegInf;
        bool any = false;
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            const double v = s.values[i];
            if (!(v > floor)) continue;
            any = true;
            if (!(s.initial_norm > 0.0)) {
                out.admissible = false;
                out.log_c = std::numeric_limits<double>::infinity();
                return out;
            }
            const double t = s.times[i] - t0;
            const double q = std::log(v) + sigma * t - std::log(s.initial_norm);
            if (t <= mid) {
                first_half = std::max(first_half, q);
            } else {
                second_half = std::max(second_half, q);
            }
        }
        if (!any) continue;
        out.log_c = std::max({out.log_c, first_half, second_half});
        if (!(second_half < first_half - kLateBindingSlack)) out.admissible = false;
    }
    if (out.log_c > std::log(kEnvelopeMaxScale)) out.admissible = false;
    return out;
}

double sigma_at(int i) {
    const double ratio = kEnvelopeSigmaMax / kEnvelopeSigmaMin;
    return kEnvelopeSigmaMin * std::pow(ratio, static_cast<double>(i) / (kEnvelopeSigmaGrid - 1));
}

}  // namespace

long count_envelope_violations(const std::vector<EnvelopeSeries>& series, const KlFit& fit, double floor) {
    long violations = 0;
    for (const auto& s : series) {
        if (s.values.empty()) continue;
        const double t0 = s.times.front();
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            const double bound = std::max(fit(s.initial_norm, s.times[i] - t0), floor);
            if (s.values[i] > bound * (1.0 + 1e-12)) ++violations;
        }
    }
    return violations;
}

EnvelopeFit fit_exponential_envelope(const std::vector<EnvelopeSeries>& series, double floor) {
    EnvelopeFit out;
    for (const auto& s : series) {
        for (double v : s.values) {
            if (v > floor) ++out.active_samples;
        }
    }
    if (out.active_samples == 0) {
        out.success = true;
        out.zero_data = true;
        out.fit = KlFit{1.0, kEnvelopeSigmaMax};
        return out;
    }

    int best = -1;
    for (int i = 0; i < kEnvelopeSigmaGrid; ++i) {
        if (probe(series, floor, sigma_at(i)).admissible) best = i;
    }
    if (best < 0) {
        const Probe p = probe(series, floor, kEnvelopeSigmaMin);
        out.success = false;
        out.fit = KlFit{std::min(std::exp(p.log_c), kEnvelopeMaxScale), kEnvelopeSigmaMin};
        out.violations = count_envelope_violations(series, out.fit, floor);
        return out;
    }

    double lo = sigma_at(best);
    if (best + 1 < kEnvelopeSigmaGrid) {
        double hi = sigma_at(best + 1);
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (probe(series, floor, mid).admissible) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    out.success = true;
    out.fit = KlFit{std::exp(probe(series, floor, lo).log_c), lo};
    out.violations = count_envelope_violations(series, out.fit, floor);
    return out;
}

}  // namespace obpc
