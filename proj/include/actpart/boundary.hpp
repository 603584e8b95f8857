#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "actpart/core.hpp"
#include "json.hpp"

namespace actpart {

/// Soft-margin and kernel settings. Unset C or gamma are chosen from a grid
/// (C in {1, 10, 100}, gamma in {1, 10, 100, 1e3, 1e4} / feature_dim) by
/// accuracy on a seeded holdout of the labelled points.
struct SvmParams {
    std::optional<double> c;
    std::optional<double> gamma;
    double tolerance = 1e-3;
    /// Iteration cap; 0 means max(100000, 100 * n).
    std::size_t max_iterations = 0;
    double selection_holdout = 0.2;
    std::uint64_t selection_seed = 0;
};

/// Decision function of one class pair: f(x) = sum coef_i K(sv_i, x) - rho.
/// f > 0 votes for `positive`, otherwise for `negative`.
struct PairMachine {
    ModelId positive = 0;
    ModelId negative = 0;
    Matrix support_vectors;
    std::vector<double> coefficients;
    double rho = 0.0;

    friend bool operator==(const PairMachine&, const PairMachine&) = default;
};

/// One-vs-one soft-margin classifier with a Gaussian kernel.
struct BoundaryClassifier {
    std::vector<ModelId> classes;
    std::size_t feature_dim = 0;
    double gamma = 1.0;
    double c = 1.0;
    std::vector<PairMachine> machines;

    friend bool operator==(const BoundaryClassifier&, const BoundaryClassifier&) = default;
};

inline double gaussian_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

/// Dual solution of a binary problem; `alpha` aligns with the input rows.
struct BinaryFit {
    PairMachine machine;
    std::vector<double> alpha;
    std::size_t iterations = 0;
    bool converged = false;
};

namespace detail {

/// Rows of the signed kernel matrix Q_ij = y_i y_j K(x_i, x_j), cached in
/// full for small problems and recomputed on demand otherwise.
class KernelRows {
public:
    static constexpr std::size_t kFullCacheLimit = 2500;

    KernelRows(const Matrix& x, std::span<const double> y, double gamma) : x_(x), y_(y), gamma_(gamma) {
        const std::size_t n = x.rows;
        if (n <= kFullCacheLimit) {
            full_.resize(n * n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j <= i; ++j) {
                    const double q = y[i] * y[j] * gaussian_kernel(x.row(i), x.row(j), gamma);
                    full_[i * n + j] = q;
                    full_[j * n + i] = q;
                }
        } else {
            scratch_[0].resize(n);
            scratch_[1].resize(n);
        }
    }

    /// slot selects one of two scratch buffers so two rows can be live.
    std::span<const double> row(std::size_t i, int slot) {
        const std::size_t n = x_.rows;
        if (!full_.empty()) return {full_.data() + i * n, n};
        auto& buf = scratch_[slot];
        for (std::size_t j = 0; j < n; ++j) buf[j] = y_[i] * y_[j] * gaussian_kernel(x_.row(i), x_.row(j), gamma_);
        return buf;
    }

private:
    const Matrix& x_;
    std::span<const double> y_;
    double gamma_;
    std::vector<double> full_;
    std::vector<double> scratch_[2];
};

}  // namespace detail

/// Sequential minimal optimization with maximal-violating-pair / second
/// order working set selection. Labels are +1 / -1.
inline BinaryFit train_binary_svm(const Matrix& x, std::span<const double> y, double c, double gamma,
                                  double tolerance, std::size_t max_iterations = 0) {
    const std::size_t n = x.rows;
    require(n == y.size() && n > 0, "binary svm: features and labels misaligned");
    require(c > 0.0 && gamma > 0.0, "binary svm: C and gamma must be positive");
    constexpr double kTau = 1e-12;
    if (max_iterations == 0) max_iterations = std::max<std::size_t>(100000, 100 * n);

    detail::KernelRows q(x, y, gamma);
    std::vector<double> alpha(n, 0.0), grad(n, -1.0);
    const auto upper = [&](std::size_t t) { return alpha[t] >= c; };
    const auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

    BinaryFit fit;
    while (fit.iterations < max_iterations) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (y[t] > 0) {
                if (!upper(t) && -grad[t] >= gmax) { gmax = -grad[t]; i = t; }
            } else if (!lower(t) && grad[t] >= gmax) {
                gmax = grad[t];
                i = t;
            }
        }
        if (i == n) { fit.converged = true; break; }
        const auto qi = q.row(i, 0);

        double gmax2 = -std::numeric_limits<double>::infinity();
        double best_obj = std::numeric_limits<double>::infinity();
        std::size_t j = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (y[t] > 0) {
                if (lower(t)) continue;
                const double diff = gmax + grad[t];
                gmax2 = std::max(gmax2, grad[t]);
                if (diff > 0) {
                    double quad = 2.0 - 2.0 * y[i] * qi[t];
                    if (quad <= 0) quad = kTau;
                    const double obj = -(diff * diff) / quad;
                    if (obj <= best_obj) { best_obj = obj; j = t; }
                }
            } else {
                if (upper(t)) continue;
                const double diff = gmax - grad[t];
                gmax2 = std::max(gmax2, -grad[t]);
                if (diff > 0) {
                    double quad = 2.0 + 2.0 * y[i] * qi[t];
                    if (quad <= 0) quad = kTau;
                    const double obj = -(diff * diff) / quad;
                    if (obj <= best_obj) { best_obj = obj; j = t; }
                }
            }
        }
        if (gmax + gmax2 < tolerance || j == n) { fit.converged = true; break; }
        ++fit.iterations;

        const auto qj = q.row(j, 1);
        const double old_i = alpha[i], old_j = alpha[j];
        if (y[i] != y[j]) {
            double quad = 2.0 + 2.0 * qi[j];
            if (quad <= 0) quad = kTau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0) {
                if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = -diff;
            }
            if (diff > 0) {
                if (alpha[i] > c) { alpha[i] = c; alpha[j] = c - diff; }
            } else if (alpha[j] > c) {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            double quad = 2.0 - 2.0 * qi[j];
            if (quad <= 0) quad = kTau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > c) {
                if (alpha[i] > c) { alpha[i] = c; alpha[j] = sum - c; }
            } else if (alpha[j] < 0) {
                alpha[j] = 0;
                alpha[i] = sum;
            }
            if (sum > c) {
                if (alpha[j] > c) { alpha[j] = c; alpha[i] = sum - c; }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = sum;
            }
        }
        const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
        for (std::size_t t = 0; t < n; ++t) grad[t] += qi[t] * di + qj[t] * dj;
    }

    // rho: average over free vectors, else midpoint of the feasible interval
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    std::size_t free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * grad[t];
        if (upper(t)) {
            if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (lower(t)) {
            if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            ++free;
            sum_free += yg;
        }
    }
    fit.machine.rho = free > 0 ? sum_free / static_cast<double>(free) : (ub + lb) / 2.0;

    std::size_t nsv = 0;
    for (double a : alpha) nsv += a > 0.0;
    fit.machine.support_vectors = Matrix(nsv, x.cols);
    std::size_t k = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] <= 0.0) continue;
        std::ranges::copy(x.row(t), fit.machine.support_vectors.row(k++).begin());
        fit.machine.coefficients.push_back(alpha[t] * y[t]);
    }
    fit.alpha = std::move(alpha);
    return fit;
}

inline double decision_value(const PairMachine& m, std::span<const double> feature, double gamma) {
    double f = -m.rho;
    for (std::size_t k = 0; k < m.coefficients.size(); ++k)
        f += m.coefficients[k] * gaussian_kernel(m.support_vectors.row(k), feature, gamma);
    return f;
}

namespace detail {

inline BoundaryClassifier fit_fixed(const Matrix& features, std::span<const ModelId> labels, double c, double gamma,
                                    const SvmParams& params) {
    require(c > 0.0, "fit_boundary: C must be positive");
    require(gamma > 0.0, "fit_boundary: gamma must be positive");
    BoundaryClassifier clf;
    clf.feature_dim = features.cols;
    clf.c = c;
    clf.gamma = gamma;
    clf.classes.assign(labels.begin(), labels.end());
    std::ranges::sort(clf.classes);
    clf.classes.erase(std::unique(clf.classes.begin(), clf.classes.end()), clf.classes.end());

    for (std::size_t a = 0; a < clf.classes.size(); ++a) {
        for (std::size_t b = a + 1; b < clf.classes.size(); ++b) {
            std::vector<std::size_t> rows;
            std::vector<double> y;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (labels[i] == clf.classes[a]) { rows.push_back(i); y.push_back(1.0); }
                else if (labels[i] == clf.classes[b]) { rows.push_back(i); y.push_back(-1.0); }
            }
            Matrix x(rows.size(), features.cols);
            for (std::size_t k = 0; k < rows.size(); ++k) std::ranges::copy(features.row(rows[k]), x.row(k).begin());
            auto fit = train_binary_svm(x, y, clf.c, clf.gamma, params.tolerance, params.max_iterations);
            fit.machine.positive = clf.classes[a];
            fit.machine.negative = clf.classes[b];
            clf.machines.push_back(std::move(fit.machine));
        }
    }
    return clf;
}

}  // namespace detail

/// One-vs-one voting; ties (in a pair or in the vote count) go to the lower id.
inline ModelId classify(const BoundaryClassifier& clf, std::span<const double> feature) {
    require(!clf.classes.empty(), "classify: classifier has no classes");
    require(feature.size() == clf.feature_dim, "classify: feature dimension mismatch: expected " +
                                                   std::to_string(clf.feature_dim) + ", got " +
                                                   std::to_string(feature.size()));
    if (clf.classes.size() == 1) return clf.classes.front();
    std::map<ModelId, std::size_t> votes;
    for (const auto& m : clf.machines) {
        const double f = decision_value(m, feature, clf.gamma);
        const ModelId winner = f > 0.0 ? m.positive : (f < 0.0 ? m.negative : std::min(m.positive, m.negative));
        ++votes[winner];
    }
    ModelId best = clf.classes.front();
    std::size_t best_votes = 0;
    for (auto id : clf.classes) {
        const auto it = votes.find(id);
        const std::size_t v = it == votes.end() ? 0 : it->second;
        if (v > best_votes) { best = id; best_votes = v; }
    }
    return best;
}

inline double training_accuracy(const BoundaryClassifier& clf, const Matrix& features, std::span<const ModelId> labels) {
    require(features.rows > 0, "training_accuracy: empty input");
    require(features.rows == labels.size(), "training_accuracy: features and labels misaligned");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < features.rows; ++i) hits += classify(clf, features.row(i)) == labels[i];
    return static_cast<double>(hits) / static_cast<double>(features.rows);
}

struct SvmSelection {
    double c = 1.0;
    double gamma = 1.0;
    double holdout_accuracy = 0.0;
};

/// Grid choice of (C, gamma) for the unset members of `params`; ties keep the
/// smaller gamma, then the smaller C.
inline SvmSelection select_svm_params(const Matrix& features, std::span<const ModelId> labels,
                                      const SvmParams& params) {
    const double inv_dim = 1.0 / static_cast<double>(std::max<std::size_t>(1, features.cols));
    std::vector<double> cs, gammas;
    if (params.c) cs = {*params.c}; else cs = {1.0, 10.0, 100.0};
    if (params.gamma) gammas = {*params.gamma};
    else for (double g : {1.0, 10.0, 100.0, 1000.0, 10000.0}) gammas.push_back(g * inv_dim);
    SvmSelection best{cs.front(), gammas.front(), -1.0};
    if (cs.size() * gammas.size() == 1) return best;

    std::vector<std::size_t> order(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(params.selection_seed);
    rng.shuffle(order);
    auto n_val = static_cast<std::size_t>(std::round(params.selection_holdout * static_cast<double>(order.size())));
    if (order.size() < 5) n_val = 0;
    const std::size_t n_fit = order.size() - n_val;
    auto gather = [&](std::size_t from, std::size_t to, Matrix& x, std::vector<ModelId>& y) {
        x = Matrix(to - from, features.cols);
        y.clear();
        for (std::size_t k = from; k < to; ++k) {
            std::ranges::copy(features.row(order[k]), x.row(k - from).begin());
            y.push_back(labels[order[k]]);
        }
    };
    Matrix x_fit, x_val;
    std::vector<ModelId> y_fit, y_val;
    gather(0, n_fit, x_fit, y_fit);
    if (n_val > 0) gather(n_fit, order.size(), x_val, y_val);
    else { x_val = x_fit; y_val = y_fit; }

    for (double g : gammas)
        for (double c : cs) {
            const auto clf = detail::fit_fixed(x_fit, y_fit, c, g, params);
            const double acc = training_accuracy(clf, x_val, y_val);
            if (acc > best.holdout_accuracy) best = {c, g, acc};
        }
    return best;
}

/// Fits one machine per class pair. A single distinct label yields a
/// constant classifier.
inline BoundaryClassifier fit_boundary(const Matrix& features, std::span<const ModelId> labels,
                                       const SvmParams& params = {}) {
    require(features.rows > 0, "fit_boundary: no points");
    require(features.rows == labels.size(), "fit_boundary: features and labels misaligned");
    const bool single_class = std::ranges::all_of(labels, [&](ModelId l) { return l == labels.front(); });
    if (single_class) {
        const double c = params.c.value_or(1.0);
        const double g = params.gamma.value_or(1.0 / static_cast<double>(std::max<std::size_t>(1, features.cols)));
        return detail::fit_fixed(features, labels, c, g, params);
    }
    const auto chosen = select_svm_params(features, labels, params);
    return detail::fit_fixed(features, labels, chosen.c, chosen.gamma, params);
}

inline void to_json(nlohmann::json& j, const PairMachine& m) {
    j = nlohmann::json{{"positive", m.positive},
                       {"negative", m.negative},
                       {"rho", m.rho},
                       {"coefficients", m.coefficients},
                       {"support_vectors", m.support_vectors.values}};
}

inline void to_json(nlohmann::json& j, const BoundaryClassifier& clf) {
    j = nlohmann::json{{"kernel", "gaussian"},  {"gamma", clf.gamma},       {"c", clf.c},
                       {"classes", clf.classes}, {"feature_dim", clf.feature_dim}, {"machines", clf.machines}};
}

inline void from_json(const nlohmann::json& j, BoundaryClassifier& clf) {
    require(j.value("kernel", std::string("gaussian")) == "gaussian", "unsupported kernel");
    clf.gamma = j.at("gamma").get<double>();
    clf.c = j.at("c").get<double>();
    clf.classes = j.at("classes").get<std::vector<ModelId>>();
    clf.feature_dim = j.at("feature_dim").get<std::size_t>();
    clf.machines.clear();
    for (const auto& jm : j.at("machines")) {
        PairMachine m;
        m.positive = jm.at("positive").get<ModelId>();
        m.negative = jm.at("negative").get<ModelId>();
        m.rho = jm.at("rho").get<double>();
        m.coefficients = jm.at("coefficients").get<std::vector<double>>();
        m.support_vectors = Matrix(m.coefficients.size(), clf.feature_dim);
        m.support_vectors.values = jm.at("support_vectors").get<std::vector<double>>();
        require(m.support_vectors.values.size() == m.coefficients.size() * clf.feature_dim,
                "serialized support vector shape mismatch");
        clf.machines.push_back(std::move(m));
    }
}

}  // namespace actpart
