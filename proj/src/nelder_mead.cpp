#include "obpc/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "obpc/errors.hpp"

namespace obpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sanitize(double v) { return std::isfinite(v) ? v : kInf; }

}  // namespace

NelderMeadResult nelder_mead_box(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& start, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi, const NelderMeadOptions& options) {
    if (start.size() != lo.size() || start.size() != hi.size()) {
        throw InvalidParameter("Nelder-Mead start and bounds differ in dimension");
    }
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < start.size(); ++i) {
        if (hi[i] > lo[i]) free.push_back(i);
    }

    NelderMeadResult out;
    Eigen::VectorXd full = start.cwiseMax(lo).cwiseMin(hi);
    auto eval = [&](const Eigen::VectorXd& reduced) {
        for (std::size_t k = 0; k < free.size(); ++k) {
            full[free[k]] = std::clamp(reduced[static_cast<Eigen::Index>(k)], lo[free[k]], hi[free[k]]);
        }
        ++out.evaluations;
        return sanitize(f(full));
    };
    auto embed = [&](const Eigen::VectorXd& reduced) {
        Eigen::VectorXd x = full;
        for (std::size_t k = 0; k < free.size(); ++k) x[free[k]] = reduced[static_cast<Eigen::Index>(k)];
        return x;
    };

    const auto d = static_cast<Eigen::Index>(free.size());
    if (d == 0) {
        out.value = sanitize(f(full));
        out.evaluations = 1;
        out.x = full;
        return out;
    }

    Eigen::VectorXd rlo(d), rhi(d), x0(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        rlo[k] = lo[free[static_cast<std::size_t>(k)]];
        rhi[k] = hi[free[static_cast<std::size_t>(k)]];
        x0[k] = full[free[static_cast<std::size_t>(k)]];
    }
    auto project = [&](Eigen::VectorXd v) { return Eigen::VectorXd(v.cwiseMax(rlo).cwiseMin(rhi)); };

    const double dd = static_cast<double>(d);
    const double alpha = 1.0;
    // Dimension-adapted coefficients; they reduce to the classical (2, 1/2, 1/2) at d = 2.
    const double gamma = d > 1 ? 1.0 + 2.0 / dd : 2.0;
    const double rho = d > 1 ? 0.75 - 1.0 / (2.0 * dd) : 0.5;
    const double shrink = d > 1 ? 1.0 - 1.0 / dd : 0.5;

    std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(d) + 1, x0);
    std::vector<double> values(static_cast<std::size_t>(d) + 1);
    values[0] = eval(x0);
    for (Eigen::Index k = 0; k < d; ++k) {
        const double step = options.initial_step * (rhi[k] - rlo[k]);
        Eigen::VectorXd v = x0;
        v[k] = (x0[k] + step <= rhi[k]) ? x0[k] + step : x0[k] - step;
        simplex[static_cast<std::size_t>(k) + 1] = project(v);
        values[static_cast<std::size_t>(k) + 1] = eval(simplex[static_cast<std::size_t>(k) + 1]);
    }

    std::vector<std::size_t> order(simplex.size());
    const double xtol = std::sqrt(options.tolerance);
    for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        {
            std::vector<Eigen::VectorXd> s2;
            std::vector<double> v2;
            s2.reserve(order.size());
            v2.reserve(order.size());
            for (auto i : order) {
                s2.push_back(std::move(simplex[i]));
                v2.push_back(values[i]);
            }
            simplex = std::move(s2);
            values = std::move(v2);
        }
        const double best = values.front();
        const double worst = values.back();
        double diameter = 0.0;
        for (std::size_t i = 1; i < simplex.size(); ++i) {
            diameter = std::max(diameter, (simplex[i] - simplex[0]).lpNorm<Eigen::Infinity>());
        }
        if (std::isfinite(worst) && worst - best <= options.tolerance * (1.0 + std::abs(best)) &&
            diameter <= xtol * (1.0 + simplex[0].lpNorm<Eigen::Infinity>())) {
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
        for (std::size_t i = 0; i + 1 < simplex.size(); ++i) centroid += simplex[i];
        centroid /= dd;

        const std::size_t w = simplex.size() - 1;
        const Eigen::VectorXd reflected = project(centroid + alpha * (centroid - simplex[w]));
        const double fr = eval(reflected);
        if (fr < values[0]) {
            const Eigen::VectorXd expanded = project(centroid + gamma * (reflected - centroid));
            const double fe = eval(expanded);
            if (fe < fr) {
                simplex[w] = expanded;
                values[w] = fe;
            } else {
                simplex[w] = reflected;
                values[w] = fr;
            }
            continue;
        }
        if (fr < values[w - 1]) {
            simplex[w] = reflected;
            values[w] = fr;
            continue;
        }
        if (fr < values[w]) {
            const Eigen::VectorXd outside = project(centroid + rho * (reflected - centroid));
            const double fo = eval(outside);
            if (fo <= fr) {
                simplex[w] = outside;
                values[w] = fo;
                continue;
            }
        } else {
            const Eigen::VectorXd inside = project(centroid - rho * (centroid - simplex[w]));
            const double fi = eval(inside);
            if (fi < values[w]) {
                simplex[w] = inside;
                values[w] = fi;
                continue;
            }
        }
        for (std::size_t i = 1; i < simplex.size(); ++i) {
            simplex[i] = project(simplex[0] + shrink * (simplex[i] - simplex[0]));
            values[i] = eval(simplex[i]);
        }
    }

    const auto it = std::min_element(values.begin(), values.end());
    const auto ib = static_cast<std::size_t>(it - values.begin());
    out.value = *it;
    out.x = embed(simplex[ib]);
    return out;
}

}  // namespace obpc
