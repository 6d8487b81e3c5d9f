#ifndef RRL_POLICIES_HPP
#define RRL_POLICIES_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "rrl/errors.hpp"
#include "rrl/matrix.hpp"
#include "rrl/nn.hpp"
#include "rrl/rng.hpp"

namespace rrl {

inline constexpr double kLogStdLo = -5.0;
inline constexpr double kLogStdHi = 2.0;
inline constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*ln(2*pi)

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log(1 - tanh(x)^2), stable for large |x|
inline double log_one_minus_tanh_sq(double x) {
    return 2.0 * (std::log(2.0) - x - softplus(-2.0 * x));
}

// --- residual actor ---------------------------------------------------------

// Squashed-Gaussian policy head. The trunk emits, per action dimension,
// a mean and a raw log-std; the log-std is clamped to [kLogStdLo, kLogStdHi]
// and actions are action_scale * tanh(mu + sigma*eps).
struct SquashedGaussianActor {
    DenseNet trunk;  // state -> 2*act_dim (means, then log-stds)
    std::vector<double> action_scale;

    std::size_t action_dim() const { return action_scale.size(); }
    std::size_t state_dim() const { return trunk.input_dim(); }
};

inline SquashedGaussianActor make_actor(std::size_t state_dim,
                                        const std::vector<double>& action_scale,
                                        const std::vector<std::size_t>& hidden,
                                        std::uint64_t seed) {
    std::vector<std::size_t> sizes;
    sizes.push_back(state_dim);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * action_scale.size());
    SquashedGaussianActor actor;
    actor.trunk = net_init(sizes, Activation::Relu, Activation::Identity, seed);
    actor.action_scale = action_scale;
    return actor;
}

// One reparameterized sampling pass over a batch, from a trunk output matrix.
// Everything needed for the exact backward pass is retained.
struct ActorSampleBatch {
    Matrix eps;           // B x A, the fixed noise
    Matrix pre;           // mu + sigma*eps
    Matrix tanh_pre;      // tanh(pre)
    Matrix sigma;         // exp(clamped log-std)
    Matrix action;        // scale * tanh_pre
    Matrix clamped;       // 1 where the raw log-std hit the clamp (zero grad)
    std::vector<double> log_prob;  // per sample
};

inline ActorSampleBatch actor_sample_batch(const SquashedGaussianActor& actor,
                                           const Matrix& trunk_out, const Matrix& eps) {
    const std::size_t B = trunk_out.rows;
    const std::size_t A = actor.action_dim();
    if (trunk_out.cols != 2 * A) throw ShapeError("actor_sample_batch: trunk output width");
    if (eps.rows != B || eps.cols != A) throw ShapeError("actor_sample_batch: eps shape");

    ActorSampleBatch s;
    s.eps = eps;
    s.pre = Matrix(B, A);
    s.tanh_pre = Matrix(B, A);
    s.sigma = Matrix(B, A);
    s.action = Matrix(B, A);
    s.clamped = Matrix(B, A);
    s.log_prob.assign(B, 0.0);

    for (std::size_t r = 0; r < B; ++r) {
        double lp = 0.0;
        for (std::size_t d = 0; d < A; ++d) {
            const double mu = trunk_out(r, d);
            const double raw = trunk_out(r, A + d);
            if (!std::isfinite(mu) || !std::isfinite(raw))
                throw NumericalError("actor_sample_batch: non-finite trunk output");
            const double log_std = std::clamp(raw, kLogStdLo, kLogStdHi);
            s.clamped(r, d) = (raw < kLogStdLo || raw > kLogStdHi) ? 1.0 : 0.0;
            const double sigma = std::exp(log_std);
            const double pre = mu + sigma * eps(r, d);
            const double t = std::tanh(pre);
            s.sigma(r, d) = sigma;
            s.pre(r, d) = pre;
            s.tanh_pre(r, d) = t;
            s.action(r, d) = actor.action_scale[d] * t;
            // Gaussian density of pre, then the tanh and scale change of
            // variables
            lp += -0.5 * eps(r, d) * eps(r, d) - log_std - kHalfLog2Pi;
            lp -= log_one_minus_tanh_sq(pre) + std::log(actor.action_scale[d]);
        }
        s.log_prob[r] = lp;
    }
    return s;
}

// Chain rule back to the trunk output given dL/d(action) and dL/d(log_prob)
// per sample (either may be empty for a zero contribution).
inline Matrix actor_output_grad(const SquashedGaussianActor& actor, const ActorSampleBatch& s,
                                const Matrix& dL_daction, const std::vector<double>& dL_dlogp) {
    const std::size_t B = s.action.rows;
    const std::size_t A = actor.action_dim();
    Matrix g(B, 2 * A);
    for (std::size_t r = 0; r < B; ++r) {
        const double glp = dL_dlogp.empty() ? 0.0 : dL_dlogp[r];
        for (std::size_t d = 0; d < A; ++d) {
            const double t = s.tanh_pre(r, d);
            const double dact_dpre = actor.action_scale[d] * (1.0 - t * t);
            const double ga = dL_daction.data.empty() ? 0.0 : dL_daction(r, d);
            // d log_prob / d pre = 2*tanh(pre); / d log_std = -1 (+ pre path)
            const double dlp_dpre = 2.0 * t;
            const double dpre_dlogstd = s.sigma(r, d) * s.eps(r, d);
            const double g_pre = ga * dact_dpre + glp * dlp_dpre;
            g(r, d) = g_pre;  // mu
            double g_logstd = g_pre * dpre_dlogstd - glp;
            if (s.clamped(r, d) != 0.0) g_logstd = 0.0;
            g(r, A + d) = g_logstd;
        }
    }
    return g;
}

// Single-state stochastic sample
inline std::pair<std::vector<double>, double> actor_sample(const SquashedGaussianActor& actor,
                                                           const std::vector<double>& state,
                                                           Rng& rng) {
    Matrix out = net_forward(actor.trunk, Matrix::from_row(state));
    Matrix eps(1, actor.action_dim());
    rng.fill_normal(eps.data);
    ActorSampleBatch s = actor_sample_batch(actor, out, eps);
    return {s.action.row_vec(0), s.log_prob[0]};
}

// Deterministic evaluation action: action_scale * tanh(mu)
inline std::vector<double> actor_mean(const SquashedGaussianActor& actor,
                                      const std::vector<double>& state) {
    Matrix out = net_forward(actor.trunk, Matrix::from_row(state));
    std::vector<double> a(actor.action_dim());
    for (std::size_t d = 0; d < a.size(); ++d)
        a[d] = actor.action_scale[d] * std::tanh(out(0, d));
    return a;
}

// --- twin critic ------------------------------------------------------------

enum class CriticInputMode { Combined, ResidualOnly };

struct TwinCritic {
    DenseNet q1, q2;  // concat(state, action) -> scalar
    CriticInputMode input_mode = CriticInputMode::Combined;

    std::size_t state_dim() const { return q1.input_dim() - action_dim_; }
    std::size_t action_dim() const { return action_dim_; }
    std::size_t action_dim_ = 0;
};

inline TwinCritic make_critic(std::size_t state_dim, std::size_t action_dim,
                              const std::vector<std::size_t>& hidden, CriticInputMode mode,
                              std::uint64_t seed) {
    std::vector<std::size_t> sizes;
    sizes.push_back(state_dim + action_dim);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    TwinCritic c;
    Rng rng(seed);
    c.q1 = net_init(sizes, Activation::Relu, Activation::Identity, rng.next_u64());
    c.q2 = net_init(sizes, Activation::Relu, Activation::Identity, rng.next_u64());
    c.input_mode = mode;
    c.action_dim_ = action_dim;
    return c;
}

inline Matrix concat_cols(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw ShapeError("concat_cols: row mismatch");
    Matrix m(a.rows, a.cols + b.cols);
    for (std::size_t r = 0; r < a.rows; ++r) {
        std::copy(a.row(r), a.row(r) + a.cols, m.row(r));
        std::copy(b.row(r), b.row(r) + b.cols, m.row(r) + a.cols);
    }
    return m;
}

inline std::pair<double, double> critic_eval(const TwinCritic& critic,
                                             const std::vector<double>& state,
                                             const std::vector<double>& action_input) {
    std::vector<double> x = state;
    x.insert(x.end(), action_input.begin(), action_input.end());
    const Matrix in = Matrix::from_row(x);
    return {net_forward(critic.q1, in)(0, 0), net_forward(critic.q2, in)(0, 0)};
}

// --- base policies ----------------------------------------------------------

// Feedforward mixture-density policy head: the trunk emits, for each of K
// components, a logit, a mean vector and a log-std vector over the pre-squash
// action space. Layout: [logits K][means K*A][log_stds K*A].
struct MixtureDensityBasePolicy {
    DenseNet trunk;
    std::size_t components = 1;  // K
    std::vector<double> action_scale;

    std::size_t action_dim() const { return action_scale.size(); }
    std::size_t state_dim() const { return trunk.input_dim(); }
    std::size_t out_width() const { return components * (1 + 2 * action_dim()); }
};

inline MixtureDensityBasePolicy make_mixture_policy(std::size_t state_dim,
                                                    const std::vector<double>& action_scale,
                                                    std::size_t components,
                                                    const std::vector<std::size_t>& hidden,
                                                    std::uint64_t seed) {
    std::vector<std::size_t> sizes;
    sizes.push_back(state_dim);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(components * (1 + 2 * action_scale.size()));
    MixtureDensityBasePolicy p;
    p.trunk = net_init(sizes, Activation::Relu, Activation::Identity, seed);
    p.components = components;
    p.action_scale = action_scale;
    return p;
}

struct MixtureParams {
    std::vector<double> weights;   // K, softmax of logits
    Matrix means;                  // K x A
    Matrix log_stds;               // K x A, clamped
};

inline MixtureParams mixture_params_from_out(const MixtureDensityBasePolicy& p,
                                             const double* out) {
    const std::size_t K = p.components;
    const std::size_t A = p.action_dim();
    MixtureParams mp;
    mp.weights.resize(K);
    double mx = out[0];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, out[k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        mp.weights[k] = std::exp(out[k] - mx);
        z += mp.weights[k];
    }
    for (auto& w : mp.weights) w /= z;
    mp.means = Matrix(K, A);
    mp.log_stds = Matrix(K, A);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t d = 0; d < A; ++d) {
            mp.means(k, d) = out[K + k * A + d];
            mp.log_stds(k, d) = std::clamp(out[K + K * A + k * A + d], kLogStdLo, kLogStdHi);
        }
    return mp;
}

inline MixtureParams mixture_params(const MixtureDensityBasePolicy& p,
                                    const std::vector<double>& state) {
    Matrix out = net_forward(p.trunk, Matrix::from_row(state));
    return mixture_params_from_out(p, out.row(0));
}

inline std::vector<double> mixture_sample(const MixtureDensityBasePolicy& p,
                                          const std::vector<double>& state, Rng& rng) {
    const MixtureParams mp = mixture_params(p, state);
    const double u = rng.uniform();
    std::size_t k = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < mp.weights.size(); ++i) {
        acc += mp.weights[i];
        if (u < acc) {
            k = i;
            break;
        }
        k = i;
    }
    std::vector<double> a(p.action_dim());
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double pre = mp.means(k, d) + std::exp(mp.log_stds(k, d)) * rng.normal();
        a[d] = p.action_scale[d] * std::tanh(pre);
    }
    return a;
}

// Deterministic convention: weighted sum of squashed component means.
inline std::vector<double> mixture_expected_action(const MixtureDensityBasePolicy& p,
                                                   const std::vector<double>& state) {
    const MixtureParams mp = mixture_params(p, state);
    std::vector<double> a(p.action_dim(), 0.0);
    for (std::size_t k = 0; k < p.components; ++k)
        for (std::size_t d = 0; d < a.size(); ++d)
            a[d] += mp.weights[k] * p.action_scale[d] * std::tanh(mp.means(k, d));
    return a;
}

// Pre-squash inverse of the squashing map, with the boundary pulled inward.
inline double unsquash(double a, double scale) {
    double y = a / scale;
    const double lim = 1.0 - 1e-6;
    y = std::clamp(y, -lim, lim);
    return std::atanh(y);
}

// NLL of `action` under the squashed mixture, including the tanh/scale
// change-of-variables terms. `grad_out`, when given, receives d(nll)/d(trunk
// output row).
inline double mixture_nll_from_out(const MixtureDensityBasePolicy& p, const double* out,
                                   const std::vector<double>& action,
                                   double* grad_out = nullptr) {
    const std::size_t K = p.components;
    const std::size_t A = p.action_dim();
    const MixtureParams mp = mixture_params_from_out(p, out);

    std::vector<double> u(A);
    double cov = 0.0;  // change-of-variables: sum_d log(scale_d * (1 - (a/scale)^2))
    for (std::size_t d = 0; d < A; ++d) {
        u[d] = unsquash(action[d], p.action_scale[d]);
        cov += std::log(p.action_scale[d]) + log_one_minus_tanh_sq(u[d]);
    }

    // log w_k + log N(u; mu_k, sigma_k), combined with log-sum-exp
    std::vector<double> comp_log(K);
    for (std::size_t k = 0; k < K; ++k) {
        double lg = std::log(mp.weights[k]);
        for (std::size_t d = 0; d < A; ++d) {
            const double sd = std::exp(mp.log_stds(k, d));
            const double z = (u[d] - mp.means(k, d)) / sd;
            lg += -0.5 * z * z - mp.log_stds(k, d) - kHalfLog2Pi;
        }
        comp_log[k] = lg;
    }
    double mx = comp_log[0];
    for (double v : comp_log) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : comp_log) sum += std::exp(v - mx);
    const double log_mix = mx + std::log(sum);
    // a = scale*tanh(u) compresses, so the action-space density picks up a
    // factor 1/|da/du|; the NLL gains +cov relative to the pre-squash NLL.
    const double nll = cov - log_mix;
    if (!std::isfinite(nll)) throw NumericalError("mixture_nll: non-finite value");

    if (grad_out) {
        std::fill(grad_out, grad_out + p.out_width(), 0.0);
        // responsibilities
        std::vector<double> resp(K);
        for (std::size_t k = 0; k < K; ++k) resp[k] = std::exp(comp_log[k] - log_mix);
        for (std::size_t k = 0; k < K; ++k) {
            // d nll / d logit_k = w_k - resp_k
            grad_out[k] = mp.weights[k] - resp[k];
            for (std::size_t d = 0; d < A; ++d) {
                const double raw = out[K + K * A + k * A + d];
                const double sd = std::exp(mp.log_stds(k, d));
                const double z = (u[d] - mp.means(k, d)) / sd;
                grad_out[K + k * A + d] = -resp[k] * z / sd;
                const bool clamped = raw < kLogStdLo || raw > kLogStdHi;
                grad_out[K + K * A + k * A + d] = clamped ? 0.0 : resp[k] * (1.0 - z * z);
            }
        }
    }
    return nll;
}

inline double mixture_nll(const MixtureDensityBasePolicy& p, const std::vector<double>& state,
                          const std::vector<double>& action) {
    Matrix out = net_forward(p.trunk, Matrix::from_row(state));
    return mixture_nll_from_out(p, out.row(0), action);
}

struct DeterministicBasePolicy {
    DenseNet net;  // state -> action, tanh output
    std::vector<double> action_scale;

    std::size_t action_dim() const { return action_scale.size(); }
    std::size_t state_dim() const { return net.input_dim(); }
};

inline DeterministicBasePolicy make_deterministic_policy(std::size_t state_dim,
                                                         const std::vector<double>& action_scale,
                                                         const std::vector<std::size_t>& hidden,
                                                         std::uint64_t seed) {
    std::vector<std::size_t> sizes;
    sizes.push_back(state_dim);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(action_scale.size());
    DeterministicBasePolicy p;
    p.net = net_init(sizes, Activation::Relu, Activation::Tanh, seed);
    p.action_scale = action_scale;
    return p;
}

inline std::vector<double> deterministic_action(const DeterministicBasePolicy& p,
                                                const std::vector<double>& state) {
    Matrix out = net_forward(p.net, Matrix::from_row(state));
    std::vector<double> a(p.action_dim());
    for (std::size_t d = 0; d < a.size(); ++d) a[d] = p.action_scale[d] * out(0, d);
    return a;
}

// --- unified base-policy handle ---------------------------------------------

enum class BasePolicyKind : std::uint8_t { Deterministic = 0, Mixture = 1, Ensemble = 2 };

struct BasePolicy {
    BasePolicyKind kind = BasePolicyKind::Deterministic;
    DeterministicBasePolicy det;
    MixtureDensityBasePolicy mix;
    std::vector<BasePolicy> members;  // Ensemble only

    std::size_t action_dim() const {
        switch (kind) {
            case BasePolicyKind::Deterministic: return det.action_dim();
            case BasePolicyKind::Mixture: return mix.action_dim();
            default: return members.front().action_dim();
        }
    }

    std::vector<double> sample(const std::vector<double>& state, Rng& rng) const {
        switch (kind) {
            case BasePolicyKind::Deterministic: return deterministic_action(det, state);
            case BasePolicyKind::Mixture: return mixture_sample(mix, state, rng);
            // the first member acts; the full ensemble is used for uncertainty
            default: return members.front().sample(state, rng);
        }
    }

    std::vector<double> predict(const std::vector<double>& state) const {
        switch (kind) {
            case BasePolicyKind::Deterministic: return deterministic_action(det, state);
            case BasePolicyKind::Mixture: return mixture_expected_action(mix, state);
            default: {
                std::vector<double> acc(action_dim(), 0.0);
                for (const auto& m : members) {
                    const auto a = m.predict(state);
                    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += a[d];
                }
                for (auto& v : acc) v /= static_cast<double>(members.size());
                return acc;
            }
        }
    }

    std::vector<std::vector<double>> member_predictions(const std::vector<double>& state) const {
        if (kind != BasePolicyKind::Ensemble)
            throw ConfigError("member_predictions: not an ensemble policy");
        std::vector<std::vector<double>> out;
        out.reserve(members.size());
        for (const auto& m : members) out.push_back(m.predict(state));
        return out;
    }
};

// Checkpoints: a kind tag byte, a small per-kind header, then the RRLNET1
// blob(s). Ensembles store a u32 member count followed by each member.
inline void base_policy_save(const BasePolicy& p, std::ostream& os) {
    os.put(static_cast<char>(p.kind));
    switch (p.kind) {
        case BasePolicyKind::Deterministic: {
            write_u32(os, static_cast<std::uint32_t>(p.det.action_dim()));
            for (double s : p.det.action_scale) write_f64(os, s);
            net_save(p.det.net, os);
            break;
        }
        case BasePolicyKind::Mixture: {
            write_u32(os, static_cast<std::uint32_t>(p.mix.components));
            write_u32(os, static_cast<std::uint32_t>(p.mix.action_dim()));
            for (double s : p.mix.action_scale) write_f64(os, s);
            net_save(p.mix.trunk, os);
            break;
        }
        case BasePolicyKind::Ensemble: {
            write_u32(os, static_cast<std::uint32_t>(p.members.size()));
            for (const auto& m : p.members) base_policy_save(m, os);
            break;
        }
    }
}

inline BasePolicy base_policy_load(std::istream& is) {
    const int tag = is.get();
    if (tag < 0) throw IoError("base_policy_load: empty stream");
    BasePolicy p;
    p.kind = static_cast<BasePolicyKind>(tag);
    switch (p.kind) {
        case BasePolicyKind::Deterministic: {
            const std::uint32_t a = read_u32(is);
            p.det.action_scale.resize(a);
            for (auto& s : p.det.action_scale) s = read_f64(is);
            p.det.net = net_load(is, Activation::Relu, Activation::Tanh);
            break;
        }
        case BasePolicyKind::Mixture: {
            p.mix.components = read_u32(is);
            const std::uint32_t a = read_u32(is);
            p.mix.action_scale.resize(a);
            for (auto& s : p.mix.action_scale) s = read_f64(is);
            p.mix.trunk = net_load(is, Activation::Relu, Activation::Identity);
            break;
        }
        case BasePolicyKind::Ensemble: {
            const std::uint32_t n = read_u32(is);
            p.members.resize(n);
            for (auto& m : p.members) m = base_policy_load(is);
            break;
        }
        default:
            throw IoError("base_policy_load: unknown kind tag");
    }
    return p;
}

inline void base_policy_save_file(const BasePolicy& p, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("base_policy_save_file: cannot open " + path);
    base_policy_save(p, os);
}

inline BasePolicy base_policy_load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("base_policy_load_file: cannot open " + path);
    return base_policy_load(is);
}

} // namespace rrl

#endif
