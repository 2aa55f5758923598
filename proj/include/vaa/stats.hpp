#pragma once
// Regression machinery for quantifying intervention effects.
//
// Per-stimulus random intercepts are approximated by within-cluster demeaning
// (fixed effects): consistent for the slopes we report, with no variance
// components to estimate. Standard errors for the linear and binary-logistic
// fits are cluster-robust with a G/(G-1) small-sample factor; the multinomial
// fit reports observed-information errors. Intervals are Wald, p-values
// two-sided.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vaa/common.hpp"

namespace vaa {

struct CoefficientStats {
    double b = 0.0;
    double se = 0.0;
    double z = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double p = 1.0;
};

struct RegressionResult {
    std::string kind;
    std::map<std::string, CoefficientStats> coefficients;
    std::size_t n = 0;
    std::size_t clusters = 0;
    bool separation_flag = false;
    std::vector<std::string> warnings;
};

inline CoefficientStats wald_stats(double b, double se) {
    CoefficientStats c;
    c.b = b;
    c.se = se;
    if (se > 0.0) {
        c.z = b / se;
        c.p = std::erfc(std::abs(c.z) / std::numbers::sqrt2);
    } else {
        c.z = b == 0.0 ? 0.0 : (b > 0.0 ? INFINITY : -INFINITY);
        c.p = b == 0.0 ? 1.0 : 0.0;
    }
    c.ci_lo = b - 1.96 * se;
    c.ci_hi = b + 1.96 * se;
    return c;
}

inline double pearson(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) throw data_error("pearson: length mismatch");
    std::size_t n = u.size();
    if (n < 2) throw data_error("pearson: need at least 2 points");
    double mu = 0.0, mv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mu += u[i];
        mv += v[i];
    }
    mu /= static_cast<double>(n);
    mv /= static_cast<double>(n);
    double suv = 0.0, suu = 0.0, svv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double du = u[i] - mu, dv = v[i] - mv;
        suv += du * dv;
        suu += du * du;
        svv += dv * dv;
    }
    if (suu == 0.0 || svv == 0.0) throw data_error("pearson: correlation undefined for constant input");
    return suv / std::sqrt(suu * svv);
}

namespace detail {

inline std::map<std::string, std::vector<std::size_t>> group_by_cluster(const std::vector<std::string>& cluster) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < cluster.size(); ++i) groups[cluster[i]].push_back(i);
    return groups;
}

}  // namespace detail

// Slope of y on x with one intercept per cluster, estimated by demeaning both
// variables within each cluster. Cluster-robust standard error.
inline RegressionResult linear_fixed_intercepts(const std::vector<double>& y, const std::vector<double>& x,
                                                const std::vector<std::string>& cluster) {
    std::size_t n = y.size();
    if (x.size() != n || cluster.size() != n) throw data_error("linear fit: length mismatch");
    if (n < 3) throw data_error("linear fit: need at least 3 observations");
    auto groups = detail::group_by_cluster(cluster);
    std::size_t G = groups.size();
    if (G < 2) throw data_error("linear fit: need at least 2 clusters");

    std::vector<double> xd(n), yd(n);
    double xscale = 0.0;
    for (const auto& [_, idx] : groups) {
        double mx = 0.0, my = 0.0;
        for (auto i : idx) {
            mx += x[i];
            my += y[i];
        }
        mx /= static_cast<double>(idx.size());
        my /= static_cast<double>(idx.size());
        for (auto i : idx) {
            xd[i] = x[i] - mx;
            yd[i] = y[i] - my;
            xscale += x[i] * x[i];
        }
    }
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += xd[i] * xd[i];
        sxy += xd[i] * yd[i];
    }
    if (sxx <= 1e-12 * std::max(1.0, xscale))
        throw data_error("linear fit: slope unidentified, x is constant within every cluster");
    double b = sxy / sxx;

    double meat = 0.0;
    for (const auto& [_, idx] : groups) {
        double sg = 0.0;
        for (auto i : idx) sg += xd[i] * (yd[i] - b * xd[i]);
        meat += sg * sg;
    }
    double var = (static_cast<double>(G) / static_cast<double>(G - 1)) * meat / (sxx * sxx);
    RegressionResult r;
    r.kind = "linear_fixed_intercepts";
    r.coefficients["slope"] = wald_stats(b, std::sqrt(std::max(0.0, var)));
    r.n = n;
    r.clusters = G;
    return r;
}

// Binary logistic fit of y on [1, x] by Newton iteration, cluster-robust
// sandwich errors. Perfect separation drives |b| unbounded; we cap at 20
// natural-log-odds, freeze the capped coordinate, and flag the result.
inline RegressionResult logistic_regression(const std::vector<double>& y, const std::vector<double>& x,
                                            const std::vector<std::string>& cluster) {
    constexpr double kCap = 20.0;
    constexpr double kTol = 1e-8;
    constexpr int kMaxIter = 100;
    std::size_t n = y.size();
    if (x.size() != n || cluster.size() != n) throw data_error("logistic fit: length mismatch");
    bool any0 = false, any1 = false;
    for (double v : y) {
        if (v == 0.0) any0 = true;
        else if (v == 1.0) any1 = true;
        else throw data_error("logistic fit: outcomes must be 0 or 1");
    }
    if (!any0 || !any1) throw data_error("logistic fit: both outcome classes required");

    double b0 = 0.0, b1 = 0.0;
    bool frozen0 = false, frozen1 = false;
    bool separation = false;
    std::vector<double> p(n);
    for (int iter = 0; iter < kMaxIter; ++iter) {
        double g0 = 0.0, g1 = 0.0, h00 = 0.0, h01 = 0.0, h11 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double eta = b0 + b1 * x[i];
            double pi = 1.0 / (1.0 + std::exp(-eta));
            p[i] = pi;
            double w = pi * (1.0 - pi);
            double r = y[i] - pi;
            g0 += r;
            g1 += r * x[i];
            h00 += w;
            h01 += w * x[i];
            h11 += w * x[i] * x[i];
        }
        double d0 = 0.0, d1 = 0.0;
        if (frozen0 && frozen1) break;
        if (frozen0) {
            if (h11 <= 0.0) break;
            d1 = g1 / h11;
        } else if (frozen1) {
            if (h00 <= 0.0) break;
            d0 = g0 / h00;
        } else {
            double det = h00 * h11 - h01 * h01;
            if (std::abs(det) < 1e-300) throw data_error("logistic fit: singular information matrix");
            d0 = (h11 * g0 - h01 * g1) / det;
            d1 = (h00 * g1 - h01 * g0) / det;
        }
        b0 += d0;
        b1 += d1;
        if (std::abs(b0) > kCap) {
            b0 = b0 > 0 ? kCap : -kCap;
            frozen0 = true;
        }
        if (std::abs(b1) > kCap) {
            b1 = b1 > 0 ? kCap : -kCap;
            separation = true;
            frozen1 = true;
        }
        if (std::max(std::abs(d0), std::abs(d1)) < kTol) break;
    }

    // Sandwich: bread from the final information matrix, meat from per-cluster
    // score sums.
    double h00 = 0.0, h01 = 0.0, h11 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double eta = b0 + b1 * x[i];
        double pi = 1.0 / (1.0 + std::exp(-eta));
        p[i] = pi;
        double w = pi * (1.0 - pi);
        h00 += w;
        h01 += w * x[i];
        h11 += w * x[i] * x[i];
    }
    double det = h00 * h11 - h01 * h01;
    if (std::abs(det) < 1e-300) throw data_error("logistic fit: singular information matrix");
    double i00 = h11 / det, i01 = -h01 / det, i11 = h00 / det;
    auto groups = detail::group_by_cluster(cluster);
    std::size_t G = groups.size();
    double m00 = 0.0, m01 = 0.0, m11 = 0.0;
    for (const auto& [_, idx] : groups) {
        double u0 = 0.0, u1 = 0.0;
        for (auto i : idx) {
            double r = y[i] - p[i];
            u0 += r;
            u1 += r * x[i];
        }
        m00 += u0 * u0;
        m01 += u0 * u1;
        m11 += u1 * u1;
    }
    double cg = G > 1 ? static_cast<double>(G) / static_cast<double>(G - 1) : 1.0;
    // V = bread * meat * bread
    double v00 = i00 * (m00 * i00 + m01 * i01) + i01 * (m01 * i00 + m11 * i01);
    double v11 = i01 * (m00 * i01 + m01 * i11) + i11 * (m01 * i01 + m11 * i11);
    v00 *= cg;
    v11 *= cg;

    RegressionResult r;
    r.kind = "logistic_regression";
    r.coefficients["(intercept)"] = wald_stats(b0, std::sqrt(std::max(0.0, v00)));
    r.coefficients["slope"] = wald_stats(b1, std::sqrt(std::max(0.0, v11)));
    r.n = n;
    r.clusters = G;
    r.separation_flag = separation;
    if (separation) r.warnings.push_back("perfect separation: slope capped at |b| <= 20");
    return r;
}

struct MultinomialResult {
    std::string reference;
    std::map<std::string, RegressionResult> by_category;  // non-reference categories
    std::vector<std::string> warnings;
};

// Maximum-likelihood multinomial logit of category on [1, x], log-odds
// relative to the reference category. Declared substitute for the Bayesian
// mixed model: no random effects, no priors.
inline MultinomialResult multinomial_logistic(const std::vector<std::string>& labels, const std::vector<double>& x,
                                              const std::string& reference,
                                              const std::vector<std::string>& expected_categories = {}) {
    constexpr double kCap = 20.0;
    constexpr double kTol = 1e-8;
    constexpr int kMaxIter = 200;
    std::size_t n = labels.size();
    if (x.size() != n) throw data_error("multinomial fit: length mismatch");
    if (n == 0) throw data_error("multinomial fit: no observations");

    std::map<std::string, std::size_t> counts;
    for (const auto& l : labels) counts[l]++;
    MultinomialResult out;
    out.reference = reference;
    for (const auto& c : expected_categories)
        if (!counts.count(c)) out.warnings.push_back("category dropped (no observations): " + c);
    if (!counts.count(reference)) throw config_error("multinomial fit: reference category absent: " + reference);
    if (counts.size() < 2) throw data_error("multinomial fit: need at least 2 observed categories");

    std::vector<std::string> cats;  // non-reference, sorted
    for (const auto& [c, _] : counts)
        if (c != reference) cats.push_back(c);
    std::size_t C = cats.size();
    std::map<std::string, std::size_t> cat_index;
    for (std::size_t c = 0; c < C; ++c) cat_index[cats[c]] = c;

    std::size_t P = 2 * C;  // (intercept, slope) per non-reference category
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P));
    std::vector<bool> frozen(P, false);
    bool separation = false;

    Eigen::MatrixXd probs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(C + 1));
    auto compute_probs = [&]() {
        for (std::size_t i = 0; i < n; ++i) {
            double mx = 0.0;  // eta of reference is 0
            std::vector<double> eta(C);
            for (std::size_t c = 0; c < C; ++c) {
                eta[c] = theta[static_cast<Eigen::Index>(2 * c)] + theta[static_cast<Eigen::Index>(2 * c + 1)] * x[i];
                mx = std::max(mx, eta[c]);
            }
            double z = std::exp(0.0 - mx);
            for (std::size_t c = 0; c < C; ++c) z += std::exp(eta[c] - mx);
            probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(C)) = std::exp(0.0 - mx) / z;
            for (std::size_t c = 0; c < C; ++c)
                probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = std::exp(eta[c] - mx) / z;
        }
    };

    for (int iter = 0; iter < kMaxIter; ++iter) {
        compute_probs();
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P));
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
        for (std::size_t i = 0; i < n; ++i) {
            auto it = cat_index.find(labels[i]);
            double xi[2] = {1.0, x[i]};
            for (std::size_t c = 0; c < C; ++c) {
                double pc = probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
                double yc = (it != cat_index.end() && it->second == c) ? 1.0 : 0.0;
                for (int a = 0; a < 2; ++a)
                    grad[static_cast<Eigen::Index>(2 * c + static_cast<std::size_t>(a))] += (yc - pc) * xi[a];
                for (std::size_t c2 = 0; c2 < C; ++c2) {
                    double pc2 = probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c2));
                    double wcc = pc * ((c == c2 ? 1.0 : 0.0) - pc2);
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b)
                            hess(static_cast<Eigen::Index>(2 * c + static_cast<std::size_t>(a)),
                                 static_cast<Eigen::Index>(2 * c2 + static_cast<std::size_t>(b))) +=
                                wcc * xi[a] * xi[b];
                }
            }
        }
        for (std::size_t j = 0; j < P; ++j) {
            if (!frozen[j]) continue;
            grad[static_cast<Eigen::Index>(j)] = 0.0;
            for (std::size_t k = 0; k < P; ++k) {
                hess(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = 0.0;
                hess(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = 0.0;
            }
            hess(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) = 1.0;
        }
        Eigen::VectorXd delta = hess.ldlt().solve(grad);
        theta += delta;
        for (std::size_t j = 0; j < P; ++j) {
            if (std::abs(theta[static_cast<Eigen::Index>(j)]) > kCap) {
                theta[static_cast<Eigen::Index>(j)] = theta[static_cast<Eigen::Index>(j)] > 0 ? kCap : -kCap;
                frozen[j] = true;
                if (j % 2 == 1) separation = true;
            }
        }
        if (delta.cwiseAbs().maxCoeff() < kTol) break;
    }

    // Observed-information standard errors at the optimum.
    compute_probs();
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
    for (std::size_t i = 0; i < n; ++i) {
        double xi[2] = {1.0, x[i]};
        for (std::size_t c = 0; c < C; ++c) {
            double pc = probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
            for (std::size_t c2 = 0; c2 < C; ++c2) {
                double pc2 = probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c2));
                double wcc = pc * ((c == c2 ? 1.0 : 0.0) - pc2);
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b)
                        hess(static_cast<Eigen::Index>(2 * c + static_cast<std::size_t>(a)),
                             static_cast<Eigen::Index>(2 * c2 + static_cast<std::size_t>(b))) += wcc * xi[a] * xi[b];
            }
        }
    }
    Eigen::MatrixXd cov = hess.completeOrthogonalDecomposition().pseudoInverse();

    for (std::size_t c = 0; c < C; ++c) {
        RegressionResult r;
        r.kind = "multinomial_logistic";
        double se0 = std::sqrt(std::max(0.0, cov(static_cast<Eigen::Index>(2 * c), static_cast<Eigen::Index>(2 * c))));
        double se1 = std::sqrt(
            std::max(0.0, cov(static_cast<Eigen::Index>(2 * c + 1), static_cast<Eigen::Index>(2 * c + 1))));
        r.coefficients["(intercept)"] = wald_stats(theta[static_cast<Eigen::Index>(2 * c)], se0);
        r.coefficients["slope"] = wald_stats(theta[static_cast<Eigen::Index>(2 * c + 1)], se1);
        r.n = n;
        r.clusters = 0;  // unclustered fit; observed-information errors
        r.separation_flag = separation;
        out.by_category[cats[c]] = std::move(r);
    }
    return out;
}

}  // namespace vaa
