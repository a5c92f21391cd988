#include "metric_oracles.hpp"

#include <algorithm>
#include <cmath>

#include "cortexnet/common/rng.hpp"

namespace cortexnet::testing {

double oracle_dice(const LabelVolume& a, const LabelVolume& b) {
    long p = 0, g = 0, both = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        p += a.data[i] == 1;
        g += b.data[i] == 1;
        both += a.data[i] == 1 && b.data[i] == 1;
    }
    return p + g == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

OracleError oracle_masked_error(const Volume& pred, const MetricVolume& gt) {
    std::vector<double> errs;
    double sum = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!gt.mask[i]) continue;
        const double e = std::abs(static_cast<double>(pred.data[i]) - gt.data[i]);
        errs.insert(std::upper_bound(errs.begin(), errs.end(), e), e);
        sum += e;
    }
    const std::size_t n = errs.size();
    if (n == 0) return {};
    return {sum / static_cast<double>(n), n % 2 ? errs[n / 2] : (errs[n / 2 - 1] + errs[n / 2]) / 2, n};
}

double oracle_percent_in_range(const Volume& lo, const Volume& hi, const MetricVolume& gt) {
    long inside = 0, total = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!gt.mask[i]) continue;
        ++total;
        inside += lo.data[i] <= gt.data[i] && gt.data[i] <= hi.data[i];
    }
    return 100.0 * static_cast<double>(inside) / static_cast<double>(total);
}

std::optional<double> oracle_pearson(const Volume& x, const Volume& y, const std::vector<std::uint8_t>& mask) {
    double n = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const double a = x.data[i], b = y.data[i];
        n += 1;
        sx += a, sy += b, sxx += a * a, syy += b * b, sxy += a * b;
    }
    const double vx = n * sxx - sx * sx, vy = n * syy - sy * sy;
    if (vx <= 1e-300 || vy <= 1e-300) return std::nullopt;
    return (n * sxy - sx * sy) / std::sqrt(vx * vy);
}

std::array<double, 5> oracle_quantiles(const std::vector<double>& values) {
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const std::array<double, 5> pct{5, 25, 50, 75, 95};
    std::array<double, 5> q{};
    for (std::size_t k = 0; k < 5; ++k) {
        std::size_t rank = 1;
        while (100.0 * static_cast<double>(rank) < pct[k] * static_cast<double>(sorted.size())) ++rank;
        q[k] = sorted[rank - 1];
    }
    return q;
}

MetricCase random_metric_case(std::uint64_t seed) {
    const Dims d{4, 4, 4};
    const Spacing s{0.5, 0.5, 0.5};
    Rng rng = make_rng({seed, 77});
    MetricCase c{LabelVolume(d, s), LabelVolume(d, s), Volume(d, s), Volume(d, s), Volume(d, s), Volume(d, s),
                 MetricVolume(d, s)};
    const double density = uniform01(rng);
    for (std::size_t i = 0; i < d.count(); ++i) {
        c.a.data[i] = uniform01(rng) < density;
        c.b.data[i] = uniform01(rng) < density;
        c.gt.mask[i] = i == 0 || uniform01(rng) < 0.5;
        c.gt.data[i] = c.gt.mask[i] ? static_cast<float>(1.0 + 2.0 * uniform01(rng)) : 0.0f;
        c.pred.data[i] = static_cast<float>(1.0 + 2.0 * uniform01(rng));
        const double w = 0.5 * uniform01(rng);
        c.lo.data[i] = static_cast<float>(c.pred.data[i] - w);
        c.hi.data[i] = static_cast<float>(c.pred.data[i] + w);
        c.var.data[i] = static_cast<float>(w * w);
    }
    return c;
}

}  // namespace cortexnet::testing
