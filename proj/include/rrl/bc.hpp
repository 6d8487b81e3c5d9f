#ifndef RRL_BC_HPP
#define RRL_BC_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "rrl/dataset.hpp"
#include "rrl/errors.hpp"
#include "rrl/policies.hpp"

namespace rrl {

struct BCConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    std::size_t mixture_components = 5;  // K
    std::vector<std::size_t> hidden = {64, 64};
};

struct BCResult {
    BasePolicy policy;
    double final_loss = 0.0;
    std::vector<double> epoch_losses;
};

// Behavior cloning by minibatch Adam: mixture kind minimizes the mean
// squashed-mixture NLL, deterministic kind the mean squared error.
inline BCResult bc_train(const DemoDataset& dataset, BasePolicyKind kind,
                         const std::vector<double>& action_scale, const BCConfig& cfg,
                         std::uint64_t seed) {
    if (dataset.size() == 0) throw ConfigError("bc_train: empty dataset");
    if (dataset.action_dim() != action_scale.size())
        throw ConfigError("bc_train: action dimension mismatch");
    if (kind == BasePolicyKind::Ensemble)
        throw ConfigError("bc_train: train ensemble members individually");

    const std::size_t M = dataset.size();
    const std::size_t S = dataset.state_dim();
    const std::size_t A = dataset.action_dim();
    Rng rng(seed);

    BCResult res;
    res.policy.kind = kind;
    DenseNet* net = nullptr;
    if (kind == BasePolicyKind::Mixture) {
        res.policy.mix = make_mixture_policy(S, action_scale, cfg.mixture_components,
                                             cfg.hidden, rng.next_u64());
        net = &res.policy.mix.trunk;
    } else {
        res.policy.det = make_deterministic_policy(S, action_scale, cfg.hidden, rng.next_u64());
        net = &res.policy.det.net;
    }

    AdamState opt(net->params.size(), cfg.learning_rate);
    std::vector<std::size_t> perm(M);
    std::iota(perm.begin(), perm.end(), std::size_t{0});

    const std::size_t bs = std::min(cfg.batch_size, M);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the run rng
        for (std::size_t i = M; i > 1; --i) {
            const std::size_t j = rng.next_below(i);
            std::swap(perm[i - 1], perm[j]);
        }
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start + bs <= M; start += bs) {
            Matrix states(bs, S);
            for (std::size_t r = 0; r < bs; ++r)
                std::copy(dataset.states.row(perm[start + r]),
                          dataset.states.row(perm[start + r]) + S, states.row(r));

            ForwardCache cache;
            Matrix out = net_forward(*net, states, &cache);
            Matrix dout(bs, out.cols);
            double loss = 0.0;
            if (kind == BasePolicyKind::Mixture) {
                std::vector<double> action(A);
                for (std::size_t r = 0; r < bs; ++r) {
                    const std::size_t idx = perm[start + r];
                    for (std::size_t d = 0; d < A; ++d) action[d] = dataset.actions(idx, d);
                    loss += mixture_nll_from_out(res.policy.mix, out.row(r), action, dout.row(r));
                }
            } else {
                for (std::size_t r = 0; r < bs; ++r) {
                    const std::size_t idx = perm[start + r];
                    for (std::size_t d = 0; d < A; ++d) {
                        const double pred = action_scale[d] * out(r, d);
                        const double err = pred - dataset.actions(idx, d);
                        loss += err * err;
                        dout(r, d) = 2.0 * err * action_scale[d];
                    }
                }
            }
            const double inv = 1.0 / static_cast<double>(bs);
            loss *= inv;
            for (auto& v : dout.data) v *= inv;
            auto grads = net_backward(*net, cache, dout);
            adam_step(net->params, std::move(grads), opt);
            epoch_loss += loss;
            ++batches;
        }
        res.epoch_losses.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(batches, 1)));
    }
    res.final_loss = res.epoch_losses.empty() ? 0.0 : res.epoch_losses.back();
    return res;
}

// N members on the same data, different seeds
inline BCResult bc_train_ensemble(const DemoDataset& dataset, BasePolicyKind member_kind,
                                  const std::vector<double>& action_scale, const BCConfig& cfg,
                                  std::size_t n_members, std::uint64_t seed) {
    if (n_members < 2) throw ConfigError("bc_train_ensemble: need at least 2 members");
    BCResult res;
    res.policy.kind = BasePolicyKind::Ensemble;
    Rng rng(seed);
    double loss = 0.0;
    for (std::size_t i = 0; i < n_members; ++i) {
        BCResult member = bc_train(dataset, member_kind, action_scale, cfg, rng.next_u64());
        loss += member.final_loss;
        res.policy.members.push_back(std::move(member.policy));
    }
    res.final_loss = loss / static_cast<double>(n_members);
    return res;
}

} // namespace rrl

#endif
