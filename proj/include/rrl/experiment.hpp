#ifndef RRL_EXPERIMENT_HPP
#define RRL_EXPERIMENT_HPP

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rrl/bc.hpp"
#include "rrl/config.hpp"
#include "rrl/dataset.hpp"
#include "rrl/envs.hpp"
#include "rrl/metrics.hpp"
#include "rrl/sac.hpp"

namespace rrl {

inline const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> m = {"ours_distance",  "ours_ensemble",
                                               "residual_nogate", "residual_only_critic",
                                               "scratch_sac",     "base_only"};
    return m;
}

// Everything a single training run needs, resolved from a RunConfig.
struct MethodSetup {
    EnvSpec spec;
    std::optional<BasePolicy> base;
    std::shared_ptr<DemoStateIndex> index;  // ours_distance only
    UncertaintyEstimator estimator;
    ThresholdSchedule schedule;
    CriticInputMode critic_mode = CriticInputMode::Combined;
    bool trains = true;  // base_only does not
};

inline MethodSetup resolve_method(const RunConfig& cfg) {
    MethodSetup s;
    s.spec = env_spec(cfg.env);
    s.schedule.max_threshold = cfg.u_max;
    s.schedule.decay_rate = cfg.decay_rate;
    s.schedule.kind = decay_kind_from_string(cfg.decay_kind);
    s.schedule.min_tau = cfg.min_tau;

    const std::string& m = cfg.method;
    const bool needs_base = (m != "scratch_sac");
    if (needs_base) {
        if (cfg.base_policy_path.empty())
            throw ConfigError("method '" + m + "' requires base_policy");
        s.base = base_policy_load_file(cfg.base_policy_path);
    }

    if (m == "ours_distance") {
        if (cfg.dataset_path.empty())
            throw ConfigError("ours_distance requires dataset for the distance metric");
        const DemoDataset ds = dataset_load(cfg.dataset_path);
        s.index = std::make_shared<DemoStateIndex>(ds.states);
        s.estimator.kind = UncertaintyEstimator::Kind::DistanceToData;
        s.estimator.index = s.index.get();
    } else if (m == "ours_ensemble") {
        if (!s.base || s.base->kind != BasePolicyKind::Ensemble)
            throw ConfigError("ours_ensemble requires an ensemble base policy");
        s.estimator.kind = UncertaintyEstimator::Kind::EnsembleVariance;
    } else if (m == "residual_nogate" || m == "residual_only_critic" || m == "scratch_sac") {
        s.estimator.kind = UncertaintyEstimator::Kind::None;
        s.schedule = ThresholdSchedule{0.0, 1.0, DecayKind::Constant, 0.0};  // gate off
        if (m == "residual_only_critic") s.critic_mode = CriticInputMode::ResidualOnly;
    } else if (m == "base_only") {
        s.trains = false;
    } else {
        throw ConfigError("unknown method '" + m + "'");
    }
    return s;
}

inline std::string run_stem(const RunConfig& cfg, std::uint64_t seed) {
    return cfg.method + "_seed" + std::to_string(seed);
}

// Runs one (config, seed) job and writes {out_dir}/{method}_seed{seed}.jsonl
// plus periodic checkpoints. Returns the metrics path.
inline std::string run_single(const RunConfig& cfg, std::uint64_t seed,
                              bool write_checkpoints = true) {
    const MethodSetup setup = resolve_method(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string stem = cfg.out_dir + "/" + run_stem(cfg, seed);
    const std::string metrics_path = stem + ".jsonl";
    std::ofstream os(metrics_path);
    if (!os) throw IoError("run_single: cannot open " + metrics_path);

    if (!setup.trains) {
        // base policy reference: evaluation rows on the same eval grid
        Rng eval_rng(Rng(seed ^ 0x5eedULL).next_u64());
        for (std::uint64_t step = cfg.eval_interval; step <= cfg.total_env_steps;
             step += cfg.eval_interval) {
            EvalResult er{0.0, 0.0};
            const BasePolicy& base = *setup.base;
            for (std::size_t ep = 0; ep < cfg.eval_episodes; ++ep) {
                EnvState st = env_reset(setup.spec, eval_rng);
                double ret = 0.0;
                for (;;) {
                    const auto obs = observation(setup.spec, st);
                    const auto a = base.sample(obs, eval_rng);
                    StepResult r = env_step(setup.spec, st, a);
                    ret += r.reward;
                    st = r.next_state;
                    if (r.done) {
                        if (r.success) er.success_rate += 1.0;
                        break;
                    }
                }
                er.mean_return += ret;
            }
            er.success_rate /= static_cast<double>(cfg.eval_episodes);
            er.mean_return /= static_cast<double>(cfg.eval_episodes);
            MetricsRow row;
            row.is_eval = true;
            row.step = step;
            row.eval_success = er.success_rate;
            row.eval_return = er.mean_return;
            os << metrics_row_json(row) << "\n";
        }
        return metrics_path;
    }

    TrainOptions opts;
    opts.total_env_steps = cfg.total_env_steps;
    opts.eval_interval = cfg.eval_interval;
    opts.eval_episodes = cfg.eval_episodes;
    opts.log_interval = cfg.log_interval;
    opts.critic_mode = setup.critic_mode;

    ResidualSACTrainer trainer(setup.spec, setup.base ? &*setup.base : nullptr,
                               setup.estimator, setup.schedule, cfg.sac, opts, seed);
    auto sink = [&](const MetricsRow& row) { os << metrics_row_json(row) << "\n"; };
    ResidualSACTrainer::CheckpointSink ckpt;
    if (write_checkpoints)
        ckpt = [&](std::uint64_t step, const ResidualSACTrainer& t) {
            std::ofstream cs(stem + "_ckpt_" + std::to_string(step) + ".bin", std::ios::binary);
            net_save(t.actor().trunk, cs);
            net_save(t.critic().q1, cs);
            net_save(t.critic().q2, cs);
        };
    trainer.run(sink, ckpt);
    return metrics_path;
}

// Independent (config, seed) workers; each owns its files and rng.
inline void run_jobs(std::vector<std::function<void()>> jobs, std::size_t n_threads) {
    if (n_threads <= 1) {
        for (auto& j : jobs) j();
        return;
    }
    std::mutex mu;
    std::size_t next = 0;
    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lk(mu);
                if (next >= jobs.size()) return;
                i = next++;
            }
            jobs[i]();
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < std::min(n_threads, jobs.size()); ++i)
        threads.emplace_back(worker);
    for (auto& t : threads) t.join();
}

// Runs every seed of one config, optionally in parallel; returns metrics paths.
inline std::vector<std::string> run_config(const RunConfig& cfg, std::size_t jobs = 1,
                                           bool write_checkpoints = true) {
    std::vector<std::string> paths(cfg.seeds.size());
    std::vector<std::function<void()>> work;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
        work.push_back([&, i] { paths[i] = run_single(cfg, cfg.seeds[i], write_checkpoints); });
    run_jobs(std::move(work), jobs);
    return paths;
}

// --- ablation matrices ------------------------------------------------------

struct VerdictLine {
    std::string description;
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;
};

struct AblateReport {
    std::vector<CurveSummary> curves;
    std::vector<VerdictLine> verdicts;
    std::string svg_path;
    std::string csv_path;
    std::string verdict_path;

    bool all_pass() const {
        for (const auto& v : verdicts)
            if (!v.pass) return false;
        return true;
    }
};

// final success of one seed: mean of the last (up to) 3 evaluation points
inline double final_success(const std::string& metrics_file) {
    std::vector<double> evals;
    for (const auto& r : metrics_load(metrics_file))
        if (r.is_eval) evals.push_back(r.eval_success);
    if (evals.empty()) throw ConfigError("final_success: no eval rows in " + metrics_file);
    const std::size_t k = std::min<std::size_t>(3, evals.size());
    double s = 0.0;
    for (std::size_t i = evals.size() - k; i < evals.size(); ++i) s += evals[i];
    return s / static_cast<double>(k);
}

inline double median_final_success(const std::vector<std::string>& files) {
    std::vector<double> v;
    for (const auto& f : files) v.push_back(final_success(f));
    return median(v);
}

// environment steps needed to first reach `fraction` of the run's own final
// success (the whole budget when never reached)
inline double steps_to_fraction_of_final(const std::string& metrics_file, double fraction) {
    std::vector<std::pair<std::uint64_t, double>> evals;
    for (const auto& r : metrics_load(metrics_file))
        if (r.is_eval) evals.emplace_back(r.step, r.eval_success);
    if (evals.empty()) throw ConfigError("steps_to_fraction_of_final: no eval rows");
    const double target = fraction * final_success(metrics_file);
    for (const auto& [step, s] : evals)
        if (s >= target) return static_cast<double>(step);
    return static_cast<double>(evals.back().first);
}

// mean frac_residual_steps over the last (up to) 10 training rows
inline double final_frac_residual(const std::string& metrics_file) {
    std::vector<double> v;
    for (const auto& r : metrics_load(metrics_file))
        if (!r.is_eval) v.push_back(r.frac_residual_steps);
    if (v.empty()) throw ConfigError("final_frac_residual: no training rows");
    const std::size_t k = std::min<std::size_t>(10, v.size());
    double s = 0.0;
    for (std::size_t i = v.size() - k; i < v.size(); ++i) s += v[i];
    return s / static_cast<double>(k);
}

inline void write_verdicts(const std::vector<VerdictLine>& verdicts, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("write_verdicts: cannot open " + path);
    for (const auto& v : verdicts)
        os << (v.pass ? "PASS" : "FAIL") << "  " << v.description
           << "  (lhs=" << format_double(v.lhs) << ", rhs=" << format_double(v.rhs) << ")\n";
}

namespace detail {

inline std::vector<std::string> run_variant(RunConfig cfg, const std::string& method,
                                            const std::string& label_suffix, std::size_t jobs) {
    cfg.method = method;
    if (!label_suffix.empty()) cfg.out_dir += "/" + label_suffix;
    return run_config(cfg, jobs, false);
}

} // namespace detail

// The named experiment matrices. `cfg` provides the environment, base-policy
// artifacts, schedule tuning and budgets; the matrix overrides method and
// schedule fields per variant and writes curves + a verdict file.
inline AblateReport ablate(const std::string& matrix, const RunConfig& cfg,
                           const std::string& det_base_path = "", std::size_t jobs = 1) {
    AblateReport rep;
    std::filesystem::create_directories(cfg.out_dir);

    if (matrix == "combined_vs_residual") {
        RunConfig stoch = cfg;
        auto combined_s = detail::run_variant(stoch, "residual_nogate", "mix_combined", jobs);
        auto residual_s = detail::run_variant(stoch, "residual_only_critic", "mix_residual", jobs);
        rep.curves.push_back(aggregate(combined_s, "combined critic (stochastic base)"));
        rep.curves.push_back(aggregate(residual_s, "residual-only critic (stochastic base)"));

        const double cs = median_final_success(combined_s);
        const double rs = median_final_success(residual_s);
        rep.verdicts.push_back({"stochastic base: combined - residual_only >= 0.3", cs - rs, 0.3,
                                cs - rs >= 0.3});

        if (!det_base_path.empty()) {
            RunConfig det = cfg;
            det.base_policy_path = det_base_path;
            det.base_policy_kind = "deterministic";
            auto combined_d = detail::run_variant(det, "residual_nogate", "det_combined", jobs);
            auto residual_d =
                detail::run_variant(det, "residual_only_critic", "det_residual", jobs);
            rep.curves.push_back(aggregate(combined_d, "combined critic (deterministic base)"));
            rep.curves.push_back(
                aggregate(residual_d, "residual-only critic (deterministic base)"));
            const double cd = median_final_success(combined_d);
            const double rd = median_final_success(residual_d);
            rep.verdicts.push_back({"deterministic base: |combined - residual_only| <= 0.1",
                                    std::abs(cd - rd), 0.1, std::abs(cd - rd) <= 0.1});
        }
    } else if (matrix == "decay_strategies") {
        std::vector<std::pair<std::string, std::string>> kinds = {
            {"exp_to_zero", "exp to zero"},
            {"exp_to_min", "exp to min"},
            {"constant", "constant"}};
        std::vector<std::vector<std::string>> files;
        for (const auto& [kind, label] : kinds) {
            RunConfig v = cfg;
            v.decay_kind = kind;
            auto fs = detail::run_variant(v, cfg.method, kind, jobs);
            rep.curves.push_back(aggregate(fs, label));
            files.push_back(fs);
        }
        const double zero = median_final_success(files[0]);
        const double tomin = median_final_success(files[1]);
        const double constant = median_final_success(files[2]);
        rep.verdicts.push_back(
            {"exp_to_zero >= exp_to_min", zero, tomin, zero >= tomin});
        rep.verdicts.push_back(
            {"exp_to_min >= constant", tomin, constant, tomin >= constant});
        rep.verdicts.push_back(
            {"exp_to_zero - constant >= 0.1", zero - constant, 0.1, zero - constant >= 0.1});
        std::vector<double> fz, fc;
        for (const auto& f : files[0]) fz.push_back(final_frac_residual(f));
        for (const auto& f : files[2]) fc.push_back(final_frac_residual(f));
        const double mz = median(fz), mc = median(fc);
        rep.verdicts.push_back(
            {"exp_to_zero frac_residual -> 1 (>= 0.99)", mz, 0.99, mz >= 0.99});
        rep.verdicts.push_back({"constant frac_residual stays < 0.99", mc, 0.99, mc < 0.99});
    } else if (matrix == "decay_rates") {
        const double base_rate = cfg.decay_rate;
        std::vector<double> finals;
        for (double mult : {0.5, 1.0, 1.5}) {
            RunConfig v = cfg;
            v.decay_rate = base_rate * mult;
            const std::string tag = "rate" + std::to_string(static_cast<int>(mult * 100));
            auto fs = detail::run_variant(v, cfg.method, tag, jobs);
            rep.curves.push_back(aggregate(fs, format_double(mult) + "x decay rate"));
            finals.push_back(median_final_success(fs));
        }
        const double spread = *std::max_element(finals.begin(), finals.end()) -
                              *std::min_element(finals.begin(), finals.end());
        rep.verdicts.push_back(
            {"decay-rate spread of final success <= 0.15", spread, 0.15, spread <= 0.15});
    } else if (matrix == "main") {
        auto ours = detail::run_variant(cfg, "ours_distance", "ours", jobs);
        auto nogate = detail::run_variant(cfg, "residual_nogate", "nogate", jobs);
        rep.curves.push_back(aggregate(ours, "ours (distance gate)"));
        rep.curves.push_back(aggregate(nogate, "residual RL (no gate)"));

        std::vector<double> so, sn;
        for (const auto& f : ours) so.push_back(steps_to_fraction_of_final(f, 0.9));
        for (const auto& f : nogate) sn.push_back(steps_to_fraction_of_final(f, 0.9));
        const double mo = median(so), mn = median(sn);
        rep.verdicts.push_back({"steps-to-90%(ours) <= 0.7 * steps-to-90%(nogate)", mo,
                                0.7 * mn, mo <= 0.7 * mn});
        const double fo = median_final_success(ours);
        const double fn = median_final_success(nogate);
        rep.verdicts.push_back(
            {"final(ours) >= final(nogate) - 0.05", fo, fn - 0.05, fo >= fn - 0.05});
    } else {
        throw ConfigError("unknown ablation matrix '" + matrix + "'");
    }

    rep.svg_path = cfg.out_dir + "/" + matrix + ".svg";
    rep.csv_path = cfg.out_dir + "/" + matrix + ".csv";
    rep.verdict_path = cfg.out_dir + "/" + matrix + "_verdict.txt";
    emit_svg(rep.curves, rep.svg_path, matrix);
    summary_save_csv(rep.curves, rep.csv_path);
    write_verdicts(rep.verdicts, rep.verdict_path);
    return rep;
}

} // namespace rrl

#endif
