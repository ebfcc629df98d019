#include "uq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uq/errors.hpp"

namespace uq {

namespace {

struct ScorePoint {
    double confidence;
    double error; // 1 - correct
};

std::vector<ScorePoint> checked_points(std::span<const LabeledScore> scores) {
    std::vector<ScorePoint> pts;
    pts.reserve(scores.size());
    for (const auto& s : scores) {
        if (!std::isfinite(s.confidence))
            throw ValidationError("confidence must be finite (record '" + s.record_id + "')");
        if (!(s.correct >= 0.0 && s.correct <= 1.0))
            throw ValidationError("correct must be in [0, 1] (record '" + s.record_id + "')");
        pts.push_back({s.confidence, 1.0 - s.correct});
    }
    return pts;
}

// prefix[i] = expected error mass among the i lowest-confidence samples,
// averaging over orders inside tied confidence blocks. prefix[n] is the
// exact total, so complements are consistent.
std::vector<double> expected_rejected_error(std::vector<ScorePoint> pts) {
    std::sort(pts.begin(), pts.end(), [](const ScorePoint& a, const ScorePoint& b) {
        return a.confidence < b.confidence;
    });
    const std::size_t n = pts.size();
    std::vector<double> prefix(n + 1, 0.0);
    std::size_t b = 0;
    double before_block = 0.0;
    while (b < n) {
        std::size_t e = b;
        double block_sum = 0.0;
        while (e < n && pts[e].confidence == pts[b].confidence) {
            block_sum += pts[e].error;
            ++e;
        }
        const double mean = block_sum / static_cast<double>(e - b);
        for (std::size_t i = b + 1; i < e; ++i)
            prefix[i] = before_block + static_cast<double>(i - b) * mean;
        prefix[e] = before_block + block_sum;
        before_block = prefix[e];
        b = e;
    }
    return prefix;
}

std::vector<double> rejection_values(std::span<const LabeledScore> scores) {
    std::vector<ScorePoint> pts = checked_points(scores);
    const std::size_t n = pts.size();
    const std::vector<double> rejected = expected_rejected_error(std::move(pts));
    const double total = rejected[n];
    std::vector<double> values(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        values[i] = (total - rejected[i]) / static_cast<double>(n - i);
    values[n] = 0.0; // empty-set convention
    return values;
}

double trapezoid_area_of_difference(const std::vector<double>& upper,
                                    const std::vector<double>& lower) {
    const std::size_t n = upper.size() - 1;
    double area = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d0 = upper[i] - lower[i];
        const double d1 = upper[i + 1] - lower[i + 1];
        area += 0.5 * (d0 + d1);
    }
    return area / static_cast<double>(n);
}

// Expected error mass among the top-i most confident samples, i = 0..n.
std::vector<double> expected_accepted_error(std::span<const LabeledScore> scores) {
    std::vector<ScorePoint> pts = checked_points(scores);
    const std::size_t n = pts.size();
    const std::vector<double> rejected = expected_rejected_error(std::move(pts));
    const double total = rejected[n];
    std::vector<double> accepted(n + 1, 0.0);
    for (std::size_t i = 0; i <= n; ++i) accepted[i] = total - rejected[n - i];
    return accepted;
}

} // namespace

std::vector<CurvePoint> rejection_curve(std::span<const LabeledScore> scores) {
    if (scores.size() < 2) throw ValidationError("rejection_curve: n < 2");
    const std::vector<double> values = rejection_values(scores);
    const std::size_t n = scores.size();
    std::vector<CurvePoint> curve(n + 1);
    for (std::size_t i = 0; i <= n; ++i)
        curve[i] = {static_cast<double>(i) / static_cast<double>(n), values[i]};
    return curve;
}

double prr(std::span<const LabeledScore> scores) {
    if (scores.size() < 2) throw ValidationError("prr: n < 2");

    std::vector<LabeledScore> baseline(scores.begin(), scores.end());
    for (auto& s : baseline) s.confidence = 0.0;
    std::vector<LabeledScore> oracle(scores.begin(), scores.end());
    for (auto& s : oracle) s.confidence = s.correct; // reject all incorrect first

    const std::vector<double> unc = rejection_values(scores);
    const std::vector<double> base = rejection_values(baseline);
    const std::vector<double> orc = rejection_values(oracle);

    const double ar_orc = trapezoid_area_of_difference(base, orc);
    if (ar_orc == 0.0)
        throw PrrUndefined("oracle rejection area is zero (constant correctness)");
    const double ar_unc = trapezoid_area_of_difference(base, unc);
    return ar_unc / ar_orc;
}

std::vector<CurvePoint> generalized_risk_curve(std::span<const LabeledScore> scores) {
    if (scores.empty()) throw ValidationError("generalized_risk_curve: empty input");
    const std::vector<double> accepted = expected_accepted_error(scores);
    const std::size_t n = scores.size();
    std::vector<CurvePoint> curve(n + 1);
    for (std::size_t i = 0; i <= n; ++i)
        curve[i] = {static_cast<double>(i) / static_cast<double>(n),
                    accepted[i] / static_cast<double>(n)};
    return curve;
}

double augrc(std::span<const LabeledScore> scores) {
    if (scores.size() < 2) throw ValidationError("augrc: n < 2");
    const std::vector<CurvePoint> curve = generalized_risk_curve(scores);
    const std::size_t n = scores.size();
    double area = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        area += 0.5 * (curve[i].value + curve[i + 1].value);
    return area / static_cast<double>(n);
}

std::vector<CurvePoint> selective_risk_curve(std::span<const LabeledScore> scores) {
    if (scores.empty()) throw ValidationError("selective_risk_curve: empty input");
    const std::vector<double> accepted = expected_accepted_error(scores);
    const std::size_t n = scores.size();
    std::vector<CurvePoint> curve(n + 1);
    for (std::size_t i = 1; i <= n; ++i)
        curve[i] = {static_cast<double>(i) / static_cast<double>(n),
                    accepted[i] / static_cast<double>(i)};
    curve[0] = {0.0, curve[1].value}; // first accepted sample's risk
    return curve;
}

double aurc(std::span<const LabeledScore> scores) {
    if (scores.size() < 2) throw ValidationError("aurc: n < 2");
    const std::vector<CurvePoint> curve = selective_risk_curve(scores);
    const std::size_t n = scores.size();
    double sum = 0.0;
    for (std::size_t i = 1; i <= n; ++i) sum += curve[i].value;
    return sum / static_cast<double>(n);
}

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
        i = j;
    }
    return ranks;
}

namespace {

double pearson(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw CorrelationUndefined("constant vector: correlation undefined");
    return sab / (std::sqrt(saa) * std::sqrt(sbb));
}

} // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("spearman: size mismatch");
    if (a.size() < 2) throw ValidationError("spearman: n < 2");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
            throw ValidationError("spearman: non-finite input");
    const std::vector<double> ra = average_ranks(a);
    const std::vector<double> rb = average_ranks(b);
    return pearson(ra, rb);
}

double partial_spearman(std::span<const double> x, std::span<const double> y,
                        const std::vector<std::vector<double>>& controls) {
    const std::size_t n = x.size();
    if (y.size() != n) throw ValidationError("partial_spearman: size mismatch");
    for (const auto& c : controls)
        if (c.size() != n) throw ValidationError("partial_spearman: control size mismatch");
    if (n <= controls.size() + 2)
        throw ValidationError("partial_spearman: need n > controls + 2");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
            throw ValidationError("partial_spearman: non-finite input");

    std::vector<double> rx = average_ranks(x);
    std::vector<double> ry = average_ranks(y);

    // Orthonormal basis over [intercept, ranked controls] via modified
    // Gram-Schmidt; dependent columns (e.g. constant controls) are dropped.
    std::vector<std::vector<double>> basis;
    auto project_out = [&](std::vector<double>& v) {
        for (const auto& q : basis) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += q[i] * v[i];
            for (std::size_t i = 0; i < n; ++i) v[i] -= dot * q[i];
        }
    };
    auto add_column = [&](std::vector<double> col) {
        const double orig = std::sqrt(std::inner_product(col.begin(), col.end(), col.begin(), 0.0));
        project_out(col);
        double norm = std::sqrt(std::inner_product(col.begin(), col.end(), col.begin(), 0.0));
        if (norm <= 1e-9 * (orig + 1.0)) return false; // collinear, drop
        for (double& v : col) v /= norm;
        basis.push_back(std::move(col));
        return true;
    };

    add_column(std::vector<double>(n, 1.0));
    bool any_control = false;
    for (const auto& c : controls) {
        for (double v : c)
            if (!std::isfinite(v)) throw ValidationError("partial_spearman: non-finite control");
        if (add_column(average_ranks(c))) any_control = true;
    }
    if (!any_control) return spearman(x, y); // nothing to remove

    project_out(rx);
    project_out(ry);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += rx[i] * rx[i];
        syy += ry[i] * ry[i];
        sxy += rx[i] * ry[i];
    }
    if (sxx <= 1e-12 || syy <= 1e-12)
        throw CorrelationUndefined("residual variance is zero after controls");
    return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

FisherAggregate fisher_aggregate(std::span<const FisherInput> inputs) {
    if (inputs.empty()) throw ValidationError("fisher_aggregate: empty input");
    double sum_w = 0.0, sum_wz = 0.0;
    for (const auto& in : inputs) {
        if (!(std::abs(in.r) < 1.0))
            throw ValidationError("fisher_aggregate: |r| must be < 1");
        if (in.n <= in.k_controls + 3)
            throw ValidationError("fisher_aggregate: need n > k + 3");
        const double w = static_cast<double>(in.n) - 3.0 - static_cast<double>(in.k_controls);
        sum_w += w;
        sum_wz += w * std::atanh(in.r);
    }
    const double z = sum_wz / sum_w;
    const double half = 1.96 / std::sqrt(sum_w);
    return {std::tanh(z), std::tanh(z - half), std::tanh(z + half)};
}

} // namespace uq
