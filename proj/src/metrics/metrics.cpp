#include "cortexnet/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cortexnet/common/error.hpp"

namespace cortexnet {

namespace {

template <typename A, typename B>
void require_same_dims(const Grid3<A>& a, const Grid3<B>& b, const char* what) {
    if (!(a.dims == b.dims) || a.size() != b.size()) throw ShapeError(std::string(what) + ": dims mismatch");
}

double median_of_sorted(const std::vector<double>& v) {
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::string csv_number(double v) {
    std::ostringstream os;
    os << std::setprecision(9) << v;
    return os.str();
}

}  // namespace

DiceScore dice(const LabelVolume& pred, const LabelVolume& gt, std::uint8_t cls) {
    require_same_dims(pred, gt, "dice");
    std::size_t p = 0, g = 0, both = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool a = pred.data[i] == cls, b = gt.data[i] == cls;
        p += a;
        g += b;
        both += a && b;
    }
    if (p + g == 0) return {1.0, true};
    return {2.0 * static_cast<double>(both) / static_cast<double>(p + g), false};
}

MaskedError masked_error(const Volume& pred, const MetricVolume& gt) {
    require_same_dims(pred, gt, "masked_error");
    std::vector<double> errs;
    double sum = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (gt.mask[i]) {
            errs.push_back(std::abs(static_cast<double>(pred.data[i]) - gt.data[i]));
            sum += errs.back();
        }
    if (errs.empty()) throw InvariantError("masked_error: empty mask");
    std::sort(errs.begin(), errs.end());
    return {sum / static_cast<double>(errs.size()), median_of_sorted(errs), errs.size()};
}

double percent_in_range(const Volume& min_grid, const Volume& max_grid, const MetricVolume& gt) {
    require_same_dims(min_grid, gt, "percent_in_range");
    require_same_dims(max_grid, gt, "percent_in_range");
    std::size_t inside = 0, total = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!gt.mask[i]) continue;
        ++total;
        inside += min_grid.data[i] <= gt.data[i] && gt.data[i] <= max_grid.data[i];
    }
    if (total == 0) throw InvariantError("percent_in_range: empty mask");
    return 100.0 * static_cast<double>(inside) / static_cast<double>(total);
}

std::optional<double> confidence_error_correlation(const Volume& var_grid, const Volume& abs_err_grid,
                                                   std::span<const std::uint8_t> mask) {
    require_same_dims(var_grid, abs_err_grid, "confidence_error_correlation");
    if (mask.size() != var_grid.size()) throw ShapeError("confidence_error_correlation: mask size mismatch");
    double n = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) {
            n += 1.0;
            sx += var_grid.data[i];
            sy += abs_err_grid.data[i];
        }
    if (n == 0.0) throw InvariantError("confidence_error_correlation: empty mask");
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) {
            const double dx = var_grid.data[i] - mx, dy = abs_err_grid.data[i] - my;
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Volume abs_error_grid(const Volume& pred, const MetricVolume& gt) {
    require_same_dims(pred, gt, "abs_error_grid");
    Volume out(gt.dims, gt.spacing);
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (gt.mask[i]) out.data[i] = std::abs(pred.data[i] - gt.data[i]);
    return out;
}

std::array<double, 5> nearest_rank_quantiles(std::vector<double> values) {
    if (values.empty()) throw InvariantError("quantiles of an empty list");
    std::sort(values.begin(), values.end());
    std::array<double, 5> q{};
    const auto n = static_cast<double>(values.size());
    for (std::size_t k = 0; k < q.size(); ++k) {
        const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(kSummaryPercentiles[k] / 100.0 * n)));
        q[k] = values[std::min(rank, values.size()) - 1];
    }
    return q;
}

CohortSummary cohort_summary(const std::vector<double>& predicted_means, const std::vector<double>& ground_truth_means) {
    if (predicted_means.empty() || predicted_means.size() != ground_truth_means.size())
        throw InvariantError("cohort_summary needs equally sized, nonempty series");
    return {nearest_rank_quantiles(predicted_means), nearest_rank_quantiles(ground_truth_means), predicted_means,
            ground_truth_means};
}

void write_cohort_summary_csv(const std::filesystem::path& path, const CohortSummary& s) {
    std::ofstream out(path);
    out << "series,p5,p25,p50,p75,p95\n";
    for (const auto& [name, q] : {std::pair{"predicted", s.predicted}, std::pair{"ground_truth", s.ground_truth}}) {
        out << name;
        for (double v : q) out << ',' << csv_number(v);
        out << '\n';
    }
    if (!out) throw IoError("cannot write " + path.string());
}

std::string render_cohort_summary_svg(const CohortSummary& s, const std::string& metric_name) {
    constexpr double W = 420, H = 320, top = 30, bottom = 280, left = 70;
    double lo = std::min(s.predicted.front(), s.ground_truth.front());
    double hi = std::max(s.predicted.back(), s.ground_truth.back());
    for (double v : s.predicted_means) lo = std::min(lo, v), hi = std::max(hi, v);
    for (double v : s.ground_truth_means) lo = std::min(lo, v), hi = std::max(hi, v);
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto y = [&](double v) { return bottom - (v - lo) / (hi - lo) * (bottom - top); };

    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << metric_name
       << ": per-subject global means</text>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
       << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        os << "<text x=\"" << left - 6 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
           << std::setprecision(4) << v << std::setprecision(2) << "</text>\n";
    }
    struct Series {
        const char* name;
        const std::array<double, 5>* q;
        const std::vector<double>* pts;
        const char* colour;
        double x;
    };
    for (const Series& sr : {Series{"predicted", &s.predicted, &s.predicted_means, "#3b6fb6", left + 100},
                             Series{"ground truth", &s.ground_truth, &s.ground_truth_means, "#c0504d", left + 240}}) {
        const auto& q = *sr.q;
        os << "<line x1=\"" << sr.x << "\" y1=\"" << y(q[0]) << "\" x2=\"" << sr.x << "\" y2=\"" << y(q[4])
           << "\" stroke=\"" << sr.colour << "\"/>\n";
        os << "<rect x=\"" << sr.x - 25 << "\" y=\"" << y(q[3]) << "\" width=\"50\" height=\"" << y(q[1]) - y(q[3])
           << "\" fill=\"" << sr.colour << "\" fill-opacity=\"0.3\" stroke=\"" << sr.colour << "\"/>\n";
        os << "<line x1=\"" << sr.x - 25 << "\" y1=\"" << y(q[2]) << "\" x2=\"" << sr.x + 25 << "\" y2=\"" << y(q[2])
           << "\" stroke=\"" << sr.colour << "\" stroke-width=\"2\"/>\n";
        for (double v : *sr.pts)
            os << "<circle cx=\"" << sr.x + 40 << "\" cy=\"" << y(v) << "\" r=\"2.5\" fill=\"" << sr.colour << "\"/>\n";
        os << "<text x=\"" << sr.x << "\" y=\"" << bottom + 20 << "\" text-anchor=\"middle\" font-size=\"12\">"
           << sr.name << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

SubjectMetrics evaluate_subject(const std::string& subject, const LabelVolume& pred_labels, const Volume& metric,
                                const Volume& min_grid, const Volume& max_grid, const Volume& var,
                                const LabelVolume& gt_labels, const MetricVolume& gt_metric) {
    SubjectMetrics s;
    s.subject = subject;
    s.dice = dice(pred_labels, gt_labels);
    s.error = masked_error(metric, gt_metric);
    s.percent_in_range = percent_in_range(min_grid, max_grid, gt_metric);
    s.n_cortex_voxels = s.error.count;
    if (var.size() > 0) s.confidence_error_correlation = confidence_error_correlation(var, abs_error_grid(metric, gt_metric), gt_metric.mask);

    double gsum = 0.0;
    for (std::size_t i = 0; i < gt_metric.size(); ++i)
        if (gt_metric.mask[i]) gsum += gt_metric.data[i];
    s.ground_truth_global_mean = gsum / static_cast<double>(s.n_cortex_voxels);
    double psum = 0.0;
    std::size_t pcount = 0;
    for (std::size_t i = 0; i < pred_labels.size(); ++i)
        if (pred_labels.data[i] == 1) {
            psum += metric.data[i];
            ++pcount;
        }
    if (pcount == 0)
        for (std::size_t i = 0; i < gt_metric.size(); ++i)
            if (gt_metric.mask[i]) {
                psum += metric.data[i];
                ++pcount;
            }
    s.predicted_global_mean = psum / static_cast<double>(pcount);
    return s;
}

MetricsReport aggregate_report(std::vector<SubjectMetrics> subjects) {
    if (subjects.empty()) throw InvariantError("no subjects to evaluate");
    MetricsReport r;
    const auto n = static_cast<double>(subjects.size());
    double corr = 0.0;
    std::size_t corr_n = 0;
    for (const auto& s : subjects) {
        r.dice += s.dice.value / n;
        r.mean_abs_error += s.error.mean_abs / n;
        r.median_abs_error += s.error.median_abs / n;
        r.percent_in_range += s.percent_in_range / n;
        r.n_cortex_voxels += s.n_cortex_voxels;
        if (s.confidence_error_correlation) {
            corr += *s.confidence_error_correlation;
            ++corr_n;
        }
    }
    if (corr_n) r.confidence_error_correlation = corr / static_cast<double>(corr_n);
    r.per_subject = std::move(subjects);
    return r;
}

void to_json(nlohmann::json& j, const SubjectMetrics& s) {
    j = {{"subject", s.subject},
         {"dice", s.dice.value},
         {"dice_both_empty", s.dice.both_empty},
         {"mean_abs_error", s.error.mean_abs},
         {"median_abs_error", s.error.median_abs},
         {"percent_in_range", s.percent_in_range},
         {"confidence_error_correlation", optional_json(s.confidence_error_correlation)},
         {"confidence_error_correlation_defined", s.confidence_error_correlation.has_value()},
         {"n_cortex_voxels", s.n_cortex_voxels},
         {"predicted_global_mean", s.predicted_global_mean},
         {"ground_truth_global_mean", s.ground_truth_global_mean}};
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
    j = {{"dice", r.dice},
         {"mean_abs_error", r.mean_abs_error},
         {"median_abs_error", r.median_abs_error},
         {"percent_in_range", r.percent_in_range},
         {"confidence_error_correlation", optional_json(r.confidence_error_correlation)},
         {"confidence_error_correlation_defined", r.confidence_error_correlation.has_value()},
         {"n_cortex_voxels", r.n_cortex_voxels},
         {"per_subject", r.per_subject}};
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& r) {
    std::ofstream out(path);
    out << "subject,dice,mean_abs,median_abs,pct_in_range,conf_corr\n";
    auto corr = [](const std::optional<double>& c) { return c ? csv_number(*c) : std::string("undefined"); };
    for (const auto& s : r.per_subject)
        out << s.subject << ',' << csv_number(s.dice.value) << ',' << csv_number(s.error.mean_abs) << ','
            << csv_number(s.error.median_abs) << ',' << csv_number(s.percent_in_range) << ','
            << corr(s.confidence_error_correlation) << '\n';
    out << "mean," << csv_number(r.dice) << ',' << csv_number(r.mean_abs_error) << ','
        << csv_number(r.median_abs_error) << ',' << csv_number(r.percent_in_range) << ','
        << corr(r.confidence_error_correlation) << '\n';
    if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace cortexnet
