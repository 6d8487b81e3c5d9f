#ifndef RRL_SAC_HPP
#define RRL_SAC_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rrl/envs.hpp"
#include "rrl/errors.hpp"
#include "rrl/nn.hpp"
#include "rrl/policies.hpp"
#include "rrl/replay.hpp"
#include "rrl/rng.hpp"
#include "rrl/uncertainty.hpp"

namespace rrl {

struct SACConfig {
    double gamma = 0.99;
    double rho = 0.005;  // polyak
    std::size_t batch_size = 256;
    double actor_lr = 1e-4;
    double critic_lr = 1e-4;
    double alpha_lr = 1e-4;
    double target_entropy = 0.0;  // 0 -> -(action_dim) at setup
    double init_alpha = 0.2;
    std::size_t warmup_steps = 1000;
    double updates_per_step = 1.0;
    std::size_t capacity = 1000000;
    std::vector<std::size_t> hidden = {256, 256};
};

struct TemperatureState {
    double log_alpha = 0.0;
    double alpha() const { return std::exp(log_alpha); }
};

// Uncertainty source for the gate. None reports zero uncertainty, which with
// U = 0 reduces to always taking the combined action.
struct UncertaintyEstimator {
    enum class Kind { None, DistanceToData, EnsembleVariance };
    Kind kind = Kind::None;
    const DemoStateIndex* index = nullptr;

    double operator()(const BasePolicy* base, const std::vector<double>& obs) const {
        switch (kind) {
            case Kind::DistanceToData:
                if (!index) throw ConfigError("UncertaintyEstimator: missing index");
                return index->distance_to_data(obs);
            case Kind::EnsembleVariance:
                if (!base || base->kind != BasePolicyKind::Ensemble)
                    throw ConfigError("UncertaintyEstimator: ensemble metric needs an ensemble base");
                return ensemble_variance(base->member_predictions(obs));
            default:
                return 0.0;
        }
    }
};

struct Batch {
    Matrix states;
    Matrix combined;  // a_c
    Matrix base;      // a_b
    Matrix next_states;
    std::vector<double> rewards;
    std::vector<double> done;  // 0/1
};

inline Batch assemble_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& idx) {
    const std::size_t B = idx.size();
    const Transition& t0 = buffer.at(idx[0]);
    Batch b;
    b.states = Matrix(B, t0.state.size());
    b.combined = Matrix(B, t0.combined_action.size());
    b.base = Matrix(B, t0.base_action.size());
    b.next_states = Matrix(B, t0.next_state.size());
    b.rewards.resize(B);
    b.done.resize(B);
    for (std::size_t r = 0; r < B; ++r) {
        const Transition& t = buffer.at(idx[r]);
        std::copy(t.state.begin(), t.state.end(), b.states.row(r));
        std::copy(t.combined_action.begin(), t.combined_action.end(), b.combined.row(r));
        std::copy(t.base_action.begin(), t.base_action.end(), b.base.row(r));
        std::copy(t.next_state.begin(), t.next_state.end(), b.next_states.row(r));
        b.rewards[r] = t.reward;
        b.done[r] = t.done ? 1.0 : 0.0;
    }
    return b;
}

// y = r + gamma*(1-d)*[min_i Q'_i(s', a'_r + a'_b) - alpha*log pi_r(a'_r|s')]
// with a'_r from the actor (noise `eps`), a'_b given, and the sum clipped to
// the action bounds before the critic sees it. In residual-only mode the
// critic input is a'_r alone. Pure given (eps, base_next).
inline std::vector<double> compute_target(const Batch& batch, const SquashedGaussianActor& actor,
                                          const TwinCritic& target_critic, double alpha,
                                          double gamma, const std::vector<double>& action_bounds,
                                          const Matrix& eps, const Matrix& base_next) {
    const std::size_t B = batch.states.rows;
    Matrix trunk_out = net_forward(actor.trunk, batch.next_states);
    ActorSampleBatch s = actor_sample_batch(actor, trunk_out, eps);

    Matrix action_in(B, actor.action_dim());
    if (target_critic.input_mode == CriticInputMode::Combined) {
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t d = 0; d < actor.action_dim(); ++d)
                action_in(r, d) = std::clamp(s.action(r, d) + base_next(r, d),
                                             -action_bounds[d], action_bounds[d]);
    } else {
        action_in = s.action;
    }
    const Matrix qin = concat_cols(batch.next_states, action_in);
    const Matrix q1 = net_forward(target_critic.q1, qin);
    const Matrix q2 = net_forward(target_critic.q2, qin);

    std::vector<double> y(B);
    for (std::size_t r = 0; r < B; ++r) {
        const double qmin = std::min(q1(r, 0), q2(r, 0));
        y[r] = batch.rewards[r] +
               gamma * (1.0 - batch.done[r]) * (qmin - alpha * s.log_prob[r]);
    }
    return y;
}

// Convenience wrapper that draws eps and fresh base actions at s'.
inline std::vector<double> compute_target(const Batch& batch, const SquashedGaussianActor& actor,
                                          const BasePolicy* base, const TwinCritic& target_critic,
                                          double alpha, double gamma,
                                          const std::vector<double>& action_bounds, Rng& rng) {
    const std::size_t B = batch.states.rows;
    const std::size_t A = actor.action_dim();
    Matrix eps(B, A);
    rng.fill_normal(eps.data);
    Matrix base_next(B, A);
    if (target_critic.input_mode == CriticInputMode::Combined) {
        for (std::size_t r = 0; r < B; ++r) {
            const std::vector<double> ab =
                base ? base->sample(batch.next_states.row_vec(r), rng)
                     : std::vector<double>(A, 0.0);
            std::copy(ab.begin(), ab.end(), base_next.row(r));
        }
    }
    return compute_target(batch, actor, target_critic, alpha, gamma, action_bounds, eps,
                          base_next);
}

// Critic input per mode: stored a_c, or a_c - a_b = a_r in the residual-only
// ablation.
inline Matrix critic_action_input(const Batch& batch, CriticInputMode mode) {
    Matrix action_in = batch.combined;
    if (mode == CriticInputMode::ResidualOnly)
        for (std::size_t k = 0; k < action_in.data.size(); ++k)
            action_in.data[k] -= batch.base.data[k];
    return action_in;
}

// Mean-squared-error regression loss and its gradient wrt the net parameters.
inline double mse_loss_grads(const DenseNet& net, const Matrix& input,
                             const std::vector<double>& targets, std::vector<double>& grads) {
    const std::size_t B = input.rows;
    ForwardCache cache;
    Matrix q = net_forward(net, input, &cache);
    Matrix dout(B, 1);
    double loss = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
        const double err = q(r, 0) - targets[r];
        loss += err * err;
        dout(r, 0) = 2.0 * err / static_cast<double>(B);
    }
    grads = net_backward(net, cache, dout);
    return loss / static_cast<double>(B);
}

// Critic regression on the stored combined action (or a_c - a_b in the
// residual-only ablation). One Adam step per critic; returns pre-step losses.
inline std::pair<double, double> critic_update(const Batch& batch, TwinCritic& critic,
                                               const std::vector<double>& targets,
                                               AdamState& opt1, AdamState& opt2) {
    const Matrix qin = concat_cols(batch.states, critic_action_input(batch, critic.input_mode));
    double losses[2];
    DenseNet* nets[2] = {&critic.q1, &critic.q2};
    AdamState* opts[2] = {&opt1, &opt2};
    for (int i = 0; i < 2; ++i) {
        std::vector<double> grads;
        losses[i] = mse_loss_grads(*nets[i], qin, targets, grads);
        adam_step(nets[i]->params, std::move(grads), *opts[i]);
    }
    return {losses[0], losses[1]};
}

struct ActorObjective {
    double loss = 0.0;
    std::vector<double> grads;      // wrt actor.trunk.params
    std::vector<double> log_probs;  // reused by the temperature update
};

// Loss and gradient of E[alpha*log pi - min_i Q_i(s, a_r + a_b)] with fixed
// reparameterization noise `eps`; pure, so finite-differencing in the actor
// parameters is well defined.
inline ActorObjective actor_objective(const Batch& batch, const SquashedGaussianActor& actor,
                                      const TwinCritic& critic, double alpha, const Matrix& eps) {
    const std::size_t B = batch.states.rows;
    const std::size_t A = actor.action_dim();

    ForwardCache trunk_cache;
    Matrix trunk_out = net_forward(actor.trunk, batch.states, &trunk_cache);
    ActorSampleBatch s = actor_sample_batch(actor, trunk_out, eps);

    Matrix action_in = s.action;
    if (critic.input_mode == CriticInputMode::Combined)
        for (std::size_t k = 0; k < action_in.data.size(); ++k)
            action_in.data[k] += batch.base.data[k];
    const Matrix qin = concat_cols(batch.states, action_in);

    ForwardCache c1, c2;
    Matrix q1 = net_forward(critic.q1, qin, &c1);
    Matrix q2 = net_forward(critic.q2, qin, &c2);

    const double invB = 1.0 / static_cast<double>(B);
    double loss = 0.0;
    Matrix dq1(B, 1), dq2(B, 1);
    for (std::size_t r = 0; r < B; ++r) {
        const double qmin = std::min(q1(r, 0), q2(r, 0));
        loss += (alpha * s.log_prob[r] - qmin) * invB;
        // backprop -qmin through the critic that attains the min
        if (q1(r, 0) <= q2(r, 0))
            dq1(r, 0) = -invB;
        else
            dq2(r, 0) = -invB;
    }

    Matrix in_grad1, in_grad2;
    net_backward(critic.q1, c1, dq1, &in_grad1);
    net_backward(critic.q2, c2, dq2, &in_grad2);

    const std::size_t S = batch.states.cols;
    Matrix dL_daction(B, A);
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t d = 0; d < A; ++d)
            dL_daction(r, d) = in_grad1(r, S + d) + in_grad2(r, S + d);
    std::vector<double> dL_dlogp(B, alpha * invB);

    Matrix dout = actor_output_grad(actor, s, dL_daction, dL_dlogp);
    ActorObjective res;
    res.grads = net_backward(actor.trunk, trunk_cache, dout);
    res.loss = loss;
    res.log_probs = std::move(s.log_prob);
    return res;
}

struct ActorUpdateResult {
    double loss = 0.0;
    std::vector<double> log_probs;  // reused by the temperature update
};

// One Adam step minimizing E[alpha*log pi - min_i Q_i(s, a_r + a_b)], with
// a_b taken from the stored batch and gradients flowing through the
// reparameterized a_r.
inline ActorUpdateResult actor_update(const Batch& batch, SquashedGaussianActor& actor,
                                      const TwinCritic& critic, double alpha, AdamState& opt,
                                      Rng& rng) {
    Matrix eps(batch.states.rows, actor.action_dim());
    rng.fill_normal(eps.data);
    ActorObjective obj = actor_objective(batch, actor, critic, alpha, eps);
    adam_step(actor.trunk.params, std::move(obj.grads), opt);
    ActorUpdateResult res;
    res.loss = obj.loss;
    res.log_probs = std::move(obj.log_probs);
    return res;
}

// Automatic entropy temperature: minimize E[-log_alpha*(log pi + H_target)].
inline double alpha_update(const std::vector<double>& batch_log_probs,
                           TemperatureState& temperature, double target_entropy,
                           AdamState& opt) {
    double g = 0.0;
    for (double lp : batch_log_probs) g -= lp + target_entropy;
    g /= static_cast<double>(batch_log_probs.size());
    std::vector<double> p = {temperature.log_alpha};
    adam_step(p, {g}, opt);
    temperature.log_alpha = p[0];
    return temperature.alpha();
}

// --- trainer ----------------------------------------------------------------

struct MetricsRow {
    bool is_eval = false;
    std::uint64_t step = 0;
    std::uint64_t episode = 0;
    double tau = 0.0;
    double uncertainty_mean = 0.0;
    double frac_residual_steps = 0.0;
    double critic_loss1 = 0.0;
    double critic_loss2 = 0.0;
    double actor_loss = 0.0;
    double alpha = 0.0;
    double eval_success = 0.0;
    double eval_return = 0.0;
};

struct EvalResult {
    double success_rate = 0.0;
    double mean_return = 0.0;
};

// Deterministic-actor evaluation with the same gating rule at a fixed tau.
inline EvalResult evaluate(const SquashedGaussianActor& actor, const BasePolicy* base,
                           const UncertaintyEstimator& estimator, double tau,
                           const EnvSpec& spec, std::size_t n_episodes, Rng& rng) {
    EvalResult res;
    const std::size_t A = spec.act_dim;
    for (std::size_t ep = 0; ep < n_episodes; ++ep) {
        EnvState st = env_reset(spec, rng);
        double ret = 0.0;
        for (;;) {
            const std::vector<double> obs = observation(spec, st);
            const std::vector<double> ab =
                base ? base->sample(obs, rng) : std::vector<double>(A, 0.0);
            const std::vector<double> ar = actor_mean(actor, obs);
            const double unc = estimator(base, obs);
            const GateDecision d = gate(unc, tau, ab, ar, spec.action_bounds);
            StepResult r = env_step(spec, st, d.action_taken);
            ret += r.reward;
            st = r.next_state;
            if (r.done) {
                if (r.success) res.success_rate += 1.0;
                break;
            }
        }
        res.mean_return += ret;
    }
    res.success_rate /= static_cast<double>(n_episodes);
    res.mean_return /= static_cast<double>(n_episodes);
    return res;
}

struct TrainOptions {
    std::uint64_t total_env_steps = 150000;
    std::uint64_t eval_interval = 5000;
    std::size_t eval_episodes = 50;
    std::uint64_t log_interval = 1000;
    CriticInputMode critic_mode = CriticInputMode::Combined;
};

class ResidualSACTrainer {
public:
    ResidualSACTrainer(const EnvSpec& spec, const BasePolicy* base,
                       UncertaintyEstimator estimator, ThresholdSchedule schedule,
                       SACConfig cfg, TrainOptions opts, std::uint64_t seed)
        : spec_(spec),
          base_(base),
          estimator_(estimator),
          schedule_(schedule),
          cfg_(cfg),
          opts_(opts),
          rng_(seed),
          eval_rng_(Rng(seed ^ 0x5eedULL).next_u64()),
          buffer_(cfg.capacity) {
        if (cfg_.target_entropy == 0.0)
            cfg_.target_entropy = -static_cast<double>(spec.act_dim);
        Rng init(rng_.next_u64());
        actor_ = make_actor(spec.obs_dim, spec.action_bounds, cfg_.hidden, init.next_u64());
        critic_ = make_critic(spec.obs_dim, spec.act_dim, cfg_.hidden, opts.critic_mode,
                              init.next_u64());
        target_critic_ = critic_;
        temperature_.log_alpha = std::log(cfg_.init_alpha);
        actor_opt_ = AdamState(actor_.trunk.params.size(), cfg_.actor_lr);
        critic_opt1_ = AdamState(critic_.q1.params.size(), cfg_.critic_lr);
        critic_opt2_ = AdamState(critic_.q2.params.size(), cfg_.critic_lr);
        alpha_opt_ = AdamState(1, cfg_.alpha_lr);
    }

    using MetricsSink = std::function<void(const MetricsRow&)>;
    using CheckpointSink = std::function<void(std::uint64_t step, const ResidualSACTrainer&)>;

    void run(const MetricsSink& sink, const CheckpointSink& checkpoint = nullptr) {
        EnvState st = env_reset(spec_, rng_);
        std::uint64_t episode = 0;
        double update_credit = 0.0;

        // accumulators for the periodic training row
        double acc_unc = 0.0, acc_resid = 0.0, acc_c1 = 0.0, acc_c2 = 0.0, acc_actor = 0.0;
        std::uint64_t acc_steps = 0, acc_updates = 0;

        for (std::uint64_t step = 1; step <= opts_.total_env_steps; ++step) {
            const std::vector<double> obs = observation(spec_, st);
            auto [ar, ar_logp] = actor_sample(actor_, obs, rng_);
            (void)ar_logp;
            const std::vector<double> ab =
                base_ ? base_->sample(obs, rng_) : std::vector<double>(spec_.act_dim, 0.0);
            const double tau = schedule_.at(static_cast<double>(step));
            const double unc = estimator_(base_, obs);
            GateDecision d;
            if (step <= cfg_.warmup_steps) {
                d.action_taken = ab;
                d.used_residual = false;
                d.uncertainty_value = unc;
                d.threshold_value = tau;
            } else {
                d = gate(unc, tau, ab, ar, spec_.action_bounds);
            }

            StepResult r = env_step(spec_, st, d.action_taken);
            Transition t;
            t.state = obs;
            t.combined_action = d.action_taken;
            t.base_action = d.used_residual ? ab : d.action_taken;
            t.reward = r.reward;
            t.next_state = r.observation;
            t.done = r.success;  // horizon truncation keeps bootstrapping
            t.used_residual = d.used_residual;
            buffer_.push(std::move(t));

            acc_unc += unc;
            acc_resid += d.used_residual ? 1.0 : 0.0;
            ++acc_steps;

            if (r.done) {
                st = env_reset(spec_, rng_);
                ++episode;
            } else {
                st = r.next_state;
            }

            if (step > cfg_.warmup_steps) {
                update_credit += cfg_.updates_per_step;
                while (update_credit >= 1.0) {
                    update_credit -= 1.0;
                    auto [c1, c2, al] = update_once();
                    acc_c1 += c1;
                    acc_c2 += c2;
                    acc_actor += al;
                    ++acc_updates;
                }
            }

            if (sink && step % opts_.log_interval == 0) {
                MetricsRow row;
                row.step = step;
                row.episode = episode;
                row.tau = tau;
                row.uncertainty_mean = acc_unc / static_cast<double>(acc_steps);
                row.frac_residual_steps = acc_resid / static_cast<double>(acc_steps);
                if (acc_updates > 0) {
                    row.critic_loss1 = acc_c1 / static_cast<double>(acc_updates);
                    row.critic_loss2 = acc_c2 / static_cast<double>(acc_updates);
                    row.actor_loss = acc_actor / static_cast<double>(acc_updates);
                }
                row.alpha = temperature_.alpha();
                sink(row);
                acc_unc = acc_resid = acc_c1 = acc_c2 = acc_actor = 0.0;
                acc_steps = acc_updates = 0;
            }

            if (step % opts_.eval_interval == 0) {
                const EvalResult er = evaluate(actor_, base_, estimator_, tau, spec_,
                                               opts_.eval_episodes, eval_rng_);
                if (sink) {
                    MetricsRow row;
                    row.is_eval = true;
                    row.step = step;
                    row.episode = episode;
                    row.tau = tau;
                    row.alpha = temperature_.alpha();
                    row.eval_success = er.success_rate;
                    row.eval_return = er.mean_return;
                    sink(row);
                }
                if (checkpoint) checkpoint(step, *this);
            }
        }
    }

    const SquashedGaussianActor& actor() const { return actor_; }
    const TwinCritic& critic() const { return critic_; }
    const TwinCritic& target_critic() const { return target_critic_; }
    double alpha() const { return temperature_.alpha(); }

private:
    std::tuple<double, double, double> update_once() {
        const auto idx = buffer_.sample_indices(cfg_.batch_size, rng_);
        const Batch batch = assemble_batch(buffer_, idx);
        const double alpha = temperature_.alpha();
        const std::vector<double> y =
            compute_target(batch, actor_, base_, target_critic_, alpha, cfg_.gamma,
                           spec_.action_bounds, rng_);
        const auto [c1, c2] = critic_update(batch, critic_, y, critic_opt1_, critic_opt2_);
        ActorUpdateResult ar = actor_update(batch, actor_, critic_, alpha, actor_opt_, rng_);
        alpha_update(ar.log_probs, temperature_, cfg_.target_entropy, alpha_opt_);
        polyak_blend(target_critic_.q1.params, critic_.q1.params, cfg_.rho);
        polyak_blend(target_critic_.q2.params, critic_.q2.params, cfg_.rho);
        return {c1, c2, ar.loss};
    }

    EnvSpec spec_;
    const BasePolicy* base_;
    UncertaintyEstimator estimator_;
    ThresholdSchedule schedule_;
    SACConfig cfg_;
    TrainOptions opts_;
    Rng rng_;
    Rng eval_rng_;
    ReplayBuffer buffer_;
    SquashedGaussianActor actor_{};
    TwinCritic critic_{};
    TwinCritic target_critic_{};
    TemperatureState temperature_;
    AdamState actor_opt_{0};
    AdamState critic_opt1_{0};
    AdamState critic_opt2_{0};
    AdamState alpha_opt_{0};
};

} // namespace rrl

#endif
