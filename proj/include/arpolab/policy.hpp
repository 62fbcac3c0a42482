#pragma once

#include "arpolab/mdp.hpp"

#include <cmath>
#include <variant>

namespace arpolab {

/// Two-parameter direct policy on the two-state toy:
/// pi(a1|s1) = alpha, pi(a1|s2) = beta.
struct Direct2 {
    double alpha = 0.5;
    double beta = 0.5;
};

struct TabularSoftmax {
    Mat logits;  // [S x A]
};

/// Linear softmax over observations: probs(x) = softmax(W x + b). Linear on
/// purpose: every gradient below is closed-form.
struct EmbeddedSoftmax {
    Mat weights;  // [A x d]
    Vec bias;     // [A]
};

using PolicySpec = std::variant<Direct2, TabularSoftmax, EmbeddedSoftmax>;

/// Per-state observation perturbation with an l-infinity budget.
struct ObsPerturbation {
    Mat delta;         // [S x d], row s = theta_s
    double eps = 0.0;

    void validate() const {
        require(eps >= 0.0, ErrorKind::InvalidArgument, "eps must be nonnegative");
        require(delta.cwiseAbs().maxCoeff() <= eps || delta.size() == 0,
                ErrorKind::BudgetExceeded, "perturbation exceeds the l-infinity budget");
    }
};

inline ObsPerturbation zero_perturbation(const TabularIsaMdp& mdp, double eps) {
    return ObsPerturbation{Mat::Zero(mdp.n_states, mdp.embed_dim()), eps};
}

struct FisherAtObs {
    Mat m;  // [d x d], symmetric PSD
};

inline void validate_policy(const PolicySpec& policy) {
    if (const auto* d2 = std::get_if<Direct2>(&policy)) {
        require(d2->alpha >= 0.0 && d2->alpha <= 1.0 && d2->beta >= 0.0 && d2->beta <= 1.0 &&
                    std::isfinite(d2->alpha) && std::isfinite(d2->beta),
                ErrorKind::InvalidArgument, "Direct2 parameters must lie in [0,1]");
    } else if (const auto* ts = std::get_if<TabularSoftmax>(&policy)) {
        require(ts->logits.allFinite(), ErrorKind::InvalidArgument, "logits must be finite");
    } else {
        const auto& es = std::get<EmbeddedSoftmax>(policy);
        require(es.weights.allFinite() && es.bias.allFinite() &&
                    es.bias.size() == es.weights.rows(),
                ErrorKind::InvalidArgument, "EmbeddedSoftmax parameters invalid");
    }
}

inline Vec softmax(const Vec& z) {
    Vec shifted = z.array() - z.maxCoeff();
    Vec e = shifted.array().exp();
    return e / e.sum();
}

/// Action distribution at a tabular state index.
inline Vec action_probs(const PolicySpec& policy, int state) {
    if (const auto* d2 = std::get_if<Direct2>(&policy)) {
        require(state == 0 || state == 1, ErrorKind::InvalidArgument,
                "Direct2 policies are defined on two states");
        double p = state == 0 ? d2->alpha : d2->beta;
        Vec out(2);
        out << p, 1.0 - p;
        return out;
    }
    if (const auto* ts = std::get_if<TabularSoftmax>(&policy)) {
        require(state >= 0 && state < ts->logits.rows(), ErrorKind::InvalidArgument,
                "state index out of range");
        return softmax(ts->logits.row(state).transpose());
    }
    fail(ErrorKind::Unsupported, "EmbeddedSoftmax needs an observation vector, not a state index");
}

/// Action distribution at an observation (EmbeddedSoftmax only).
inline Vec action_probs(const PolicySpec& policy, const Vec& obs) {
    const auto* es = std::get_if<EmbeddedSoftmax>(&policy);
    require(es != nullptr, ErrorKind::Unsupported,
            "observation inputs require an EmbeddedSoftmax policy");
    require(obs.size() == es->weights.cols(), ErrorKind::DimensionMismatch,
            "observation dimension mismatch");
    return softmax(es->weights * obs + es->bias);
}

inline int param_count(const PolicySpec& policy) {
    if (std::holds_alternative<Direct2>(policy)) return 2;
    if (const auto* ts = std::get_if<TabularSoftmax>(&policy))
        return static_cast<int>(ts->logits.size());
    const auto& es = std::get<EmbeddedSoftmax>(policy);
    return static_cast<int>(es.weights.size() + es.bias.size());
}

/// Flattened parameter vector. Layout: Direct2 = (alpha, beta);
/// TabularSoftmax = logits row-major; EmbeddedSoftmax = weights row-major
/// followed by bias.
inline Vec get_params(const PolicySpec& policy) {
    Vec out(param_count(policy));
    if (const auto* d2 = std::get_if<Direct2>(&policy)) {
        out << d2->alpha, d2->beta;
    } else if (const auto* ts = std::get_if<TabularSoftmax>(&policy)) {
        int k = 0;
        for (int s = 0; s < ts->logits.rows(); ++s)
            for (int a = 0; a < ts->logits.cols(); ++a) out(k++) = ts->logits(s, a);
    } else {
        const auto& es = std::get<EmbeddedSoftmax>(policy);
        int k = 0;
        for (int i = 0; i < es.weights.rows(); ++i)
            for (int j = 0; j < es.weights.cols(); ++j) out(k++) = es.weights(i, j);
        for (int i = 0; i < es.bias.size(); ++i) out(k++) = es.bias(i);
    }
    return out;
}

inline void set_params(PolicySpec& policy, const Vec& params) {
    require(params.size() == param_count(policy), ErrorKind::DimensionMismatch,
            "parameter vector length mismatch");
    if (auto* d2 = std::get_if<Direct2>(&policy)) {
        d2->alpha = params(0);
        d2->beta = params(1);
    } else if (auto* ts = std::get_if<TabularSoftmax>(&policy)) {
        int k = 0;
        for (int s = 0; s < ts->logits.rows(); ++s)
            for (int a = 0; a < ts->logits.cols(); ++a) ts->logits(s, a) = params(k++);
    } else {
        auto& es = std::get<EmbeddedSoftmax>(policy);
        int k = 0;
        for (int i = 0; i < es.weights.rows(); ++i)
            for (int j = 0; j < es.weights.cols(); ++j) es.weights(i, j) = params(k++);
        for (int i = 0; i < es.bias.size(); ++i) es.bias(i) = params(k++);
    }
}

namespace detail {
// Probabilities are floored at 1e-12 inside log derivatives so boundary
// parameters (alpha or beta in {0,1}) never produce infinities.
inline double safe_inv(double p) { return 1.0 / std::max(p, 1e-12); }
}  // namespace detail

/// Gradient of log pi(action|state) with respect to the flat parameters, for
/// the tabular variants.
inline Vec log_prob_grad_theta(const PolicySpec& policy, int state, int action) {
    Vec grad = Vec::Zero(param_count(policy));
    if (const auto* d2 = std::get_if<Direct2>(&policy)) {
        require(state == 0 || state == 1, ErrorKind::InvalidArgument, "state index out of range");
        require(action == 0 || action == 1, ErrorKind::InvalidArgument,
                "action index out of range");
        double p = state == 0 ? d2->alpha : d2->beta;
        grad(state) = action == 0 ? detail::safe_inv(p) : -detail::safe_inv(1.0 - p);
        return grad;
    }
    const auto* ts = std::get_if<TabularSoftmax>(&policy);
    require(ts != nullptr, ErrorKind::Unsupported,
            "EmbeddedSoftmax needs an observation vector, not a state index");
    require(state >= 0 && state < ts->logits.rows() && action >= 0 && action < ts->logits.cols(),
            ErrorKind::InvalidArgument, "state or action index out of range");
    Vec probs = softmax(ts->logits.row(state).transpose());
    int offset = state * static_cast<int>(ts->logits.cols());
    for (int a = 0; a < ts->logits.cols(); ++a)
        grad(offset + a) = (a == action ? 1.0 : 0.0) - probs(a);
    return grad;
}

/// Same, for EmbeddedSoftmax at an observation.
inline Vec log_prob_grad_theta(const PolicySpec& policy, const Vec& obs, int action) {
    const auto* es = std::get_if<EmbeddedSoftmax>(&policy);
    require(es != nullptr, ErrorKind::Unsupported,
            "observation inputs require an EmbeddedSoftmax policy");
    require(action >= 0 && action < es->weights.rows(), ErrorKind::InvalidArgument,
            "action index out of range");
    Vec probs = action_probs(policy, obs);
    const int n_actions = static_cast<int>(es->weights.rows());
    const int d = static_cast<int>(es->weights.cols());
    Vec grad(n_actions * d + n_actions);
    for (int i = 0; i < n_actions; ++i) {
        double coeff = (i == action ? 1.0 : 0.0) - probs(i);
        for (int j = 0; j < d; ++j) grad(i * d + j) = coeff * obs(j);
        grad(n_actions * d + i) = coeff;
    }
    return grad;
}

/// Gradient of the probability itself, d pi(action|state) / d theta. Unlike
/// the score function this stays exact when some probability is 0, which
/// matters for box-constrained Direct2 policies sitting on the boundary.
inline Vec prob_grad_theta(const PolicySpec& policy, int state, int action) {
    Vec grad = Vec::Zero(param_count(policy));
    if (std::holds_alternative<Direct2>(policy)) {
        require(state == 0 || state == 1, ErrorKind::InvalidArgument, "state index out of range");
        require(action == 0 || action == 1, ErrorKind::InvalidArgument,
                "action index out of range");
        grad(state) = action == 0 ? 1.0 : -1.0;
        return grad;
    }
    const auto* ts = std::get_if<TabularSoftmax>(&policy);
    require(ts != nullptr, ErrorKind::Unsupported,
            "EmbeddedSoftmax needs an observation vector, not a state index");
    Vec probs = softmax(ts->logits.row(state).transpose());
    int offset = state * static_cast<int>(ts->logits.cols());
    for (int i = 0; i < ts->logits.cols(); ++i)
        grad(offset + i) = probs(action) * ((i == action ? 1.0 : 0.0) - probs(i));
    return grad;
}

inline Vec prob_grad_theta(const PolicySpec& policy, const Vec& obs, int action) {
    const auto* es = std::get_if<EmbeddedSoftmax>(&policy);
    require(es != nullptr, ErrorKind::Unsupported,
            "observation inputs require an EmbeddedSoftmax policy");
    Vec probs = action_probs(policy, obs);
    const int n_actions = static_cast<int>(es->weights.rows());
    const int d = static_cast<int>(es->weights.cols());
    Vec grad(n_actions * d + n_actions);
    for (int i = 0; i < n_actions; ++i) {
        double coeff = probs(action) * ((i == action ? 1.0 : 0.0) - probs(i));
        for (int j = 0; j < d; ++j) grad(i * d + j) = coeff * obs(j);
        grad(n_actions * d + i) = coeff;
    }
    return grad;
}

/// Gradient of log pi(action|x) with respect to the observation x:
/// W^T (e_action - probs(x)) for the linear softmax.
inline Vec log_prob_grad_obs(const PolicySpec& policy, const Vec& obs, int action) {
    const auto* es = std::get_if<EmbeddedSoftmax>(&policy);
    require(es != nullptr, ErrorKind::Unsupported,
            "observation gradients require an EmbeddedSoftmax policy");
    require(action >= 0 && action < es->weights.rows(), ErrorKind::InvalidArgument,
            "action index out of range");
    Vec diff = -action_probs(policy, obs);
    diff(action) += 1.0;
    return es->weights.transpose() * diff;
}

/// KL divergence between finite distributions, with 0 log 0 = 0. Requires
/// q > 0 wherever p > 0.
inline double kl(const Vec& p, const Vec& q) {
    require(p.size() == q.size(), ErrorKind::DimensionMismatch, "kl: length mismatch");
    double sum = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        if (p(i) <= 0.0) continue;
        require(q(i) > 0.0, ErrorKind::SupportViolation,
                "kl: q vanishes on the support of p at index " + std::to_string(i));
        sum += p(i) * std::log(p(i) / q(i));
    }
    return std::max(sum, 0.0);
}

inline double entropy(const Vec& p) {
    double h = 0.0;
    for (int i = 0; i < p.size(); ++i)
        if (p(i) > 0.0) h -= p(i) * std::log(p(i));
    return h;
}

/// Exact Fisher information of log pi(.|x) with respect to the observation:
/// F = sum_a pi(a|x) g_a g_a^T with g_a = log_prob_grad_obs(x, a).
inline FisherAtObs fisher_at_obs(const PolicySpec& policy, const Vec& obs) {
    const auto* es = std::get_if<EmbeddedSoftmax>(&policy);
    require(es != nullptr, ErrorKind::Unsupported,
            "fisher_at_obs requires an EmbeddedSoftmax policy");
    Vec probs = action_probs(policy, obs);
    const int d = static_cast<int>(es->weights.cols());
    Mat f = Mat::Zero(d, d);
    for (int a = 0; a < probs.size(); ++a) {
        Vec g = log_prob_grad_obs(policy, obs, a);
        f += probs(a) * (g * g.transpose());
    }
    f = 0.5 * (f + f.transpose());
    return FisherAtObs{std::move(f)};
}

/// Unperturbed policy matrix over all states of the mdp.
inline PolicyMatrix policy_matrix(const PolicySpec& policy, const TabularIsaMdp& mdp) {
    PolicyMatrix out;
    out.probs.resize(mdp.n_states, mdp.n_actions);
    bool embedded = std::holds_alternative<EmbeddedSoftmax>(policy);
    for (int s = 0; s < mdp.n_states; ++s) {
        Vec row = embedded ? action_probs(policy, mdp.embedding(s)) : action_probs(policy, s);
        require(row.size() == mdp.n_actions, ErrorKind::DimensionMismatch,
                "policy action count does not match the mdp");
        out.probs.row(s) = row.transpose();
    }
    return out;
}

/// Policy matrix under a discrete state remap.
inline PolicyMatrix policy_matrix(const PolicySpec& policy, const TabularIsaMdp& mdp,
                                  const DiscreteAdversary& adv) {
    PolicyMatrix out;
    out.probs.resize(mdp.n_states, mdp.n_actions);
    bool embedded = std::holds_alternative<EmbeddedSoftmax>(policy);
    for (int s = 0; s < mdp.n_states; ++s) {
        int sv = perturbed_state(mdp, adv, s);
        Vec row = embedded ? action_probs(policy, mdp.embedding(sv)) : action_probs(policy, sv);
        out.probs.row(s) = row.transpose();
    }
    return out;
}

/// Policy matrix under a continuous observation perturbation (embedded only).
inline PolicyMatrix policy_matrix(const PolicySpec& policy, const TabularIsaMdp& mdp,
                                  const ObsPerturbation& pert) {
    require(std::holds_alternative<EmbeddedSoftmax>(policy), ErrorKind::Unsupported,
            "observation perturbations require an EmbeddedSoftmax policy");
    require(pert.delta.rows() == mdp.n_states && pert.delta.cols() == mdp.embed_dim(),
            ErrorKind::DimensionMismatch, "perturbation shape does not match the embeddings");
    PolicyMatrix out;
    out.probs.resize(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s) {
        Vec x = mdp.embedding(s) + pert.delta.row(s).transpose();
        out.probs.row(s) = action_probs(policy, x).transpose();
    }
    return out;
}

/// Gradient of the entropy H(pi(.|input)) with respect to the flat parameters.
/// For softmax heads dH/dz_i = -p_i (log p_i + H).
inline Vec entropy_grad_theta(const PolicySpec& policy, int state) {
    Vec probs = action_probs(policy, state);
    double h = entropy(probs);
    Vec grad = Vec::Zero(param_count(policy));
    for (int a = 0; a < probs.size(); ++a) {
        if (probs(a) <= 0.0) continue;
        grad += -probs(a) * (std::log(probs(a)) + h) * log_prob_grad_theta(policy, state, a);
    }
    return grad;
}

inline Vec entropy_grad_theta(const PolicySpec& policy, const Vec& obs) {
    Vec probs = action_probs(policy, obs);
    double h = entropy(probs);
    Vec grad = Vec::Zero(param_count(policy));
    for (int a = 0; a < probs.size(); ++a) {
        if (probs(a) <= 0.0) continue;
        grad += -probs(a) * (std::log(probs(a)) + h) * log_prob_grad_theta(policy, obs, a);
    }
    return grad;
}

}  // namespace arpolab
