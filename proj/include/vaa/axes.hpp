#pragma once
// Principal-component judgment axes: extraction from activation records,
// support orientation, cross-format layer profiling, projections, and the
// AUC utility used by the axis-alignment analyses.
//
// PCA runs on mean-centered, unscaled activations. The training mean is
// stored on the axis and reused for every later projection, including
// projections of other tasks' activations.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vaa/backend.hpp"
#include "vaa/common.hpp"
#include "vaa/core.hpp"
#include "vaa/stats.hpp"

namespace vaa {

struct SteeringAxis {
    std::string axis_id;
    std::string model_id;
    int layer_index = 0;
    std::vector<double> loading;  // unit length within 1e-9
    std::vector<double> mean;     // training mean used for all projections
    double orientation_r = 0.0;   // >= 0 after the sign convention
    std::string source_task_id;
    double explained_variance_ratio = 0.0;
    bool balance_warning = false;  // either support class under 40%
};

inline ojson to_json(const SteeringAxis& a) {
    ojson j;
    j["axis_id"] = a.axis_id;
    j["model_id"] = a.model_id;
    j["layer_index"] = a.layer_index;
    j["loading"] = a.loading;
    j["mean"] = a.mean;
    j["orientation_r"] = a.orientation_r;
    j["source_task_id"] = a.source_task_id;
    j["explained_variance_ratio"] = a.explained_variance_ratio;
    j["balance_warning"] = a.balance_warning;
    return j;
}

inline SteeringAxis axis_from_json(const ojson& j) {
    SteeringAxis a;
    a.axis_id = j.at("axis_id").get<std::string>();
    a.model_id = j.at("model_id").get<std::string>();
    a.layer_index = j.at("layer_index").get<int>();
    a.loading = j.at("loading").get<std::vector<double>>();
    a.mean = j.at("mean").get<std::vector<double>>();
    a.orientation_r = j.at("orientation_r").get<double>();
    a.source_task_id = j.at("source_task_id").get<std::string>();
    a.explained_variance_ratio = j.at("explained_variance_ratio").get<double>();
    a.balance_warning = j.value("balance_warning", false);
    return a;
}

struct AxisComparison {
    std::string axis_a_id;
    std::string axis_b_id;
    double loading_similarity = 0.0;
    double projection_correlation = 0.0;
    std::size_t shared_stimulus_count = 0;
};

namespace detail {

// Rows in record order; every record must carry the requested layer at the
// backend's hidden width.
inline Eigen::MatrixXd activation_matrix(const std::vector<ActivationRecord>& records, int layer) {
    if (records.empty()) throw data_error("no activation records");
    Eigen::Index n = static_cast<Eigen::Index>(records.size());
    Eigen::Index d = -1;
    Eigen::MatrixXd X;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto it = records[static_cast<std::size_t>(i)].layer_states.find(layer);
        if (it == records[static_cast<std::size_t>(i)].layer_states.end())
            throw config_error("record missing layer " + std::to_string(layer));
        const auto& v = it->second;
        if (d < 0) {
            d = static_cast<Eigen::Index>(v.size());
            X.resize(n, d);
        }
        if (static_cast<Eigen::Index>(v.size()) != d) throw data_error("inconsistent activation width");
        for (Eigen::Index k = 0; k < d; ++k) X(i, k) = v[static_cast<std::size_t>(k)];
    }
    return X;
}

}  // namespace detail

// First principal component of the layer's centered activations, sign-fixed
// so projections correlate non-negatively with the support labels. A label
// tie (r exactly 0, or single-class labels) falls back to making the
// largest-magnitude loading coordinate positive, keeping builds deterministic.
inline SteeringAxis extract_axis(const std::vector<ActivationRecord>& records, int layer,
                                 const std::map<std::string, int>& support_labels,
                                 const std::string& model_id = "synthetic") {
    if (records.size() < 3) throw data_error("axis extraction needs at least 3 records");
    Eigen::MatrixXd X = detail::activation_matrix(records, layer);
    Eigen::RowVectorXd mean = X.colwise().mean();
    Eigen::MatrixXd Xc = X.rowwise() - mean;

    double scale = Xc.cwiseAbs().maxCoeff();
    if (scale <= 1e-14) throw data_error("degenerate activations: zero variance at layer " + std::to_string(layer));

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd sv = svd.singularValues();
    double total = sv.squaredNorm();
    if (sv[0] * sv[0] <= 1e-24 * total || total == 0.0)
        throw data_error("degenerate activations at layer " + std::to_string(layer));
    Eigen::VectorXd loading = svd.matrixV().col(0);
    Eigen::VectorXd proj = Xc * loading;

    std::vector<double> labels;
    labels.reserve(records.size());
    std::size_t pos = 0, neg = 0;
    for (const auto& r : records) {
        auto it = support_labels.find(r.stimulus_id);
        if (it == support_labels.end()) throw data_error("support label missing for stimulus " + r.stimulus_id);
        if (it->second > 0) ++pos;
        else ++neg;
        labels.push_back(it->second > 0 ? 1.0 : -1.0);
    }

    double r = 0.0;
    if (pos > 0 && neg > 0) {
        std::vector<double> pv(proj.data(), proj.data() + proj.size());
        r = pearson(pv, labels);
    }
    if (r < 0.0) {
        loading = -loading;
        r = -r;
    } else if (r == 0.0) {
        Eigen::Index imax = 0;
        loading.cwiseAbs().maxCoeff(&imax);
        if (loading[imax] < 0.0) loading = -loading;
    }

    SteeringAxis axis;
    axis.model_id = model_id;
    axis.layer_index = layer;
    axis.loading.assign(loading.data(), loading.data() + loading.size());
    axis.mean.assign(mean.data(), mean.data() + mean.size());
    axis.orientation_r = r;
    axis.source_task_id = records.front().task_id;
    axis.explained_variance_ratio = sv[0] * sv[0] / total;
    axis.balance_warning =
        static_cast<double>(std::min(pos, neg)) < 0.4 * static_cast<double>(records.size());

    ojson ident;
    ident["model_id"] = axis.model_id;
    ident["layer_index"] = axis.layer_index;
    ident["source_task_id"] = axis.source_task_id;
    ident["loading"] = axis.loading;
    axis.axis_id = content_id(ident.dump());
    return axis;
}

inline double project(const SteeringAxis& axis, const std::vector<double>& vec) {
    if (vec.size() != axis.loading.size()) throw config_error("projection dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < vec.size(); ++i) s += (vec[i] - axis.mean[i]) * axis.loading[i];
    return s;
}

inline double project(const SteeringAxis& axis, const ActivationRecord& rec) {
    auto it = rec.layer_states.find(axis.layer_index);
    if (it == rec.layer_states.end())
        throw config_error("record missing axis layer " + std::to_string(axis.layer_index));
    return project(axis, it->second);
}

struct LayerProfileEntry {
    double similarity = 0.0;  // Pearson between the two formats' oriented loadings
    std::optional<double> projection_decision_r_a;  // projection vs decision, format A
    std::optional<double> projection_decision_r_b;  // projection vs decision, format B
};

using LayerProfile = std::map<int, LayerProfileEntry>;

namespace detail {

inline std::optional<double> projection_decision_r(const std::vector<ActivationRecord>& records,
                                                   const SteeringAxis& axis) {
    std::vector<double> proj, dec;
    proj.reserve(records.size());
    for (const auto& r : records) {
        proj.push_back(project(axis, r));
        dec.push_back(r.decision_value);
    }
    try {
        return pearson(proj, dec);
    } catch (const data_error&) {
        return std::nullopt;  // constant decisions; correlation undefined
    }
}

}  // namespace detail

// Per-layer agreement between the axes extracted from two task formats of the
// same stimuli (binary and continuous renderings), plus each format's
// projection-vs-decision correlation curve.
inline LayerProfile layer_similarity_profile(const std::vector<ActivationRecord>& records_a,
                                             const std::vector<ActivationRecord>& records_b,
                                             const std::map<std::string, int>& support_labels,
                                             const std::string& model_id = "synthetic") {
    if (records_a.empty() || records_b.empty()) throw data_error("empty record set");
    auto layers_of = [](const std::vector<ActivationRecord>& rs) {
        std::vector<int> ls;
        for (const auto& [l, _] : rs.front().layer_states) ls.push_back(l);
        return ls;
    };
    auto la = layers_of(records_a);
    auto lb = layers_of(records_b);
    if (la != lb) throw config_error("record sets cover different layers");

    LayerProfile profile;
    for (int l : la) {
        SteeringAxis ax = extract_axis(records_a, l, support_labels, model_id);
        SteeringAxis bx = extract_axis(records_b, l, support_labels, model_id);
        LayerProfileEntry e;
        e.similarity = pearson(ax.loading, bx.loading);
        e.projection_decision_r_a = detail::projection_decision_r(records_a, ax);
        e.projection_decision_r_b = detail::projection_decision_r(records_b, bx);
        profile[l] = e;
    }
    return profile;
}

struct LayerSelectionPolicy {
    int rerank_top_k = 0;  // 0 keeps the plain similarity argmax
    std::function<double(int)> steering_effect;  // required when rerank_top_k > 0
};

// Argmax of similarity, ties to the lower index. With rerank_top_k > 0 the
// top-k band is re-ranked by measured steering effect instead.
inline int select_layer(const LayerProfile& profile, const LayerSelectionPolicy& policy = {}) {
    if (profile.empty()) throw data_error("empty layer profile");
    std::vector<std::pair<int, double>> by_sim(profile.size());
    std::size_t i = 0;
    for (const auto& [l, e] : profile) by_sim[i++] = {l, e.similarity};
    std::stable_sort(by_sim.begin(), by_sim.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (policy.rerank_top_k <= 0) return by_sim.front().first;
    if (!policy.steering_effect) throw config_error("steering-effect policy needs a measurement callback");
    std::size_t k = std::min(static_cast<std::size_t>(policy.rerank_top_k), by_sim.size());
    int best = by_sim[0].first;
    double best_effect = -INFINITY;
    for (std::size_t t = 0; t < k; ++t) {
        double eff = policy.steering_effect(by_sim[t].first);
        if (eff > best_effect || (eff == best_effect && by_sim[t].first < best)) {
            best_effect = eff;
            best = by_sim[t].first;
        }
    }
    return best;
}

// Pairwise concordance probability, ties counted half. Computed from midranks
// (Mann-Whitney U), which equals the pairwise count exactly.
inline double predictive_auc(const std::vector<double>& projections, const std::vector<int>& labels) {
    if (projections.size() != labels.size()) throw data_error("auc: length mismatch");
    std::size_t n = projections.size();
    std::size_t n1 = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw data_error("auc: labels must be 0/1");
        n1 += static_cast<std::size_t>(l);
    }
    std::size_t n0 = n - n1;
    if (n0 == 0 || n1 == 0) throw data_error("auc undefined: single-class labels");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return projections[a] < projections[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && projections[order[j]] == projections[order[i]]) ++j;
        double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;  // 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += midrank;
        i = j;
    }
    double u = rank_sum_pos - static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0;
    return u / (static_cast<double>(n1) * static_cast<double>(n0));
}

inline AxisComparison compare_axes(const SteeringAxis& a, const SteeringAxis& b,
                                   const std::vector<ActivationRecord>& shared_records) {
    AxisComparison c;
    c.axis_a_id = a.axis_id;
    c.axis_b_id = b.axis_id;
    c.loading_similarity = pearson(a.loading, b.loading);
    std::vector<double> pa, pb;
    pa.reserve(shared_records.size());
    for (const auto& r : shared_records) {
        pa.push_back(project(a, r));
        pb.push_back(project(b, r));
    }
    c.projection_correlation = pearson(pa, pb);
    c.shared_stimulus_count = shared_records.size();
    return c;
}

// Share of a record set's total centered variance lying along the axis
// direction (centering by the record set's own mean).
inline double variance_explained(const SteeringAxis& axis, const std::vector<ActivationRecord>& records) {
    Eigen::MatrixXd X = detail::activation_matrix(records, axis.layer_index);
    Eigen::RowVectorXd mean = X.colwise().mean();
    Eigen::MatrixXd Xc = X.rowwise() - mean;
    double total = Xc.squaredNorm();
    if (total == 0.0) throw data_error("variance undefined: zero-variance records");
    Eigen::Map<const Eigen::VectorXd> v(axis.loading.data(), static_cast<Eigen::Index>(axis.loading.size()));
    return (Xc * v).squaredNorm() / total;
}

// Top-two components for plot export. PC2 is analysis-only and never steered.
struct PrincipalPlane {
    std::vector<double> pc1;
    std::vector<double> pc2;
    double evr1 = 0.0;
    double evr2 = 0.0;
};

inline PrincipalPlane principal_plane(const std::vector<ActivationRecord>& records, int layer) {
    if (records.size() < 3) throw data_error("principal plane needs at least 3 records");
    Eigen::MatrixXd X = detail::activation_matrix(records, layer);
    Eigen::RowVectorXd mean = X.colwise().mean();
    Eigen::MatrixXd Xc = X.rowwise() - mean;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd sv = svd.singularValues();
    double total = sv.squaredNorm();
    if (total == 0.0) throw data_error("degenerate activations at layer " + std::to_string(layer));
    PrincipalPlane plane;
    for (int comp = 0; comp < 2 && comp < sv.size(); ++comp) {
        Eigen::VectorXd v = svd.matrixV().col(comp);
        Eigen::Index imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        if (v[imax] < 0.0) v = -v;  // deterministic sign for export
        Eigen::VectorXd proj = Xc * v;
        auto& dst = comp == 0 ? plane.pc1 : plane.pc2;
        dst.assign(proj.data(), proj.data() + proj.size());
        (comp == 0 ? plane.evr1 : plane.evr2) = sv[comp] * sv[comp] / total;
    }
    return plane;
}

}  // namespace vaa
