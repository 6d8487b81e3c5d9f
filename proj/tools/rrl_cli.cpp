// rrl — residual RL experiment driver.
//
// Subcommands: demo-gen, bc-train, rl-train, eval, plot, ablate.
// Exit codes: 0 ok, 2 malformed config, 3 numerical abort (partial metrics
// files are left in place).

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rrl/rrl.hpp"

namespace {

std::string resolve_out_dir(std::string out) {
    if (const char* env = std::getenv("RRL_OUT"); env && *env) return env;
    return out;
}

rrl::RunConfig load_run_config(const std::string& path, std::uint64_t seed_override,
                               bool has_seed, const std::string& out_override) {
    rrl::RunConfig cfg = rrl::run_config_load(path);
    if (has_seed) cfg.seeds = {seed_override};
    if (!out_override.empty()) cfg.out_dir = out_override;
    cfg.out_dir = resolve_out_dir(cfg.out_dir);
    return cfg;
}

// "label=fileA,fileB" -> curve aggregated over the files
rrl::CurveSummary parse_curve_arg(const std::string& arg) {
    const std::size_t eq = arg.find('=');
    if (eq == std::string::npos)
        throw rrl::ConfigError("curve spec '" + arg + "' must be label=file[,file...]");
    const std::string label = arg.substr(0, eq);
    std::vector<std::string> files;
    std::stringstream ss(arg.substr(eq + 1));
    std::string f;
    while (std::getline(ss, f, ','))
        if (!f.empty()) files.push_back(f);
    if (files.empty()) throw rrl::ConfigError("curve spec '" + arg + "' lists no files");
    return rrl::aggregate(files, label);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"residual reinforcement learning with uncertainty gating"};
    app.require_subcommand(1);

    // demo-gen
    auto* demo = app.add_subcommand("demo-gen", "generate scripted demonstrations");
    std::string demo_env = "reach2d", demo_out = "demos.bin", demo_csv;
    std::size_t demo_n = 200;
    double demo_noise = 0.25, demo_subopt = 0.2;
    bool demo_keep_failures = false;
    std::uint64_t demo_seed = 0;
    demo->add_option("--env", demo_env, "environment name");
    demo->add_option("-n,--n-demos", demo_n, "number of demonstrations");
    demo->add_option("--noise", demo_noise, "action noise std");
    demo->add_option("--suboptimality", demo_subopt, "detour probability");
    demo->add_flag("--keep-failures", demo_keep_failures, "retain failed trajectories");
    demo->add_option("--seed", demo_seed, "rng seed");
    demo->add_option("--out", demo_out, "output dataset file");
    demo->add_option("--csv", demo_csv, "also export a CSV mirror");

    // bc-train
    auto* bc = app.add_subcommand("bc-train", "behavior-clone a base policy");
    std::string bc_dataset, bc_env = "reach2d", bc_kind = "mixture", bc_out = "base.bin";
    std::size_t bc_members = 5, bc_epochs = 200, bc_batch = 128, bc_components = 5;
    double bc_lr = 1e-3;
    std::vector<std::size_t> bc_hidden = {64, 64};
    std::uint64_t bc_seed = 0;
    bc->add_option("--dataset", bc_dataset, "demo dataset file")->required();
    bc->add_option("--env", bc_env, "environment name (action bounds)");
    bc->add_option("--kind", bc_kind, "mixture | deterministic | ensemble");
    bc->add_option("--members", bc_members, "ensemble member count");
    bc->add_option("--epochs", bc_epochs, "training epochs");
    bc->add_option("--batch-size", bc_batch, "minibatch size");
    bc->add_option("--lr", bc_lr, "learning rate");
    bc->add_option("--components", bc_components, "mixture components K");
    bc->add_option("--hidden", bc_hidden, "hidden layer sizes");
    bc->add_option("--seed", bc_seed, "rng seed");
    bc->add_option("--out", bc_out, "output checkpoint");

    // rl-train
    auto* train = app.add_subcommand("rl-train", "run residual SAC training");
    std::string train_config, train_out;
    std::uint64_t train_seed = 0;
    std::size_t train_jobs = 1;
    bool train_has_seed = false;
    train->add_option("--config", train_config, "run config file")->required();
    train->add_option("--seed", train_seed, "override the config seed list")
        ->each([&](const std::string&) { train_has_seed = true; });
    train->add_option("--out", train_out, "override out_dir");
    train->add_option("--jobs", train_jobs, "parallel seed workers");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate the base policy of a config");
    std::string eval_config;
    std::size_t eval_episodes = 0;
    std::uint64_t eval_seed = 0;
    ev->add_option("--config", eval_config, "run config file")->required();
    ev->add_option("--episodes", eval_episodes, "episode count override");
    ev->add_option("--seed", eval_seed, "rng seed");

    // plot
    auto* plot = app.add_subcommand("plot", "aggregate metrics and draw curves");
    std::vector<std::string> plot_curves;
    std::string plot_out = "curves.svg", plot_csv, plot_title;
    double plot_base_ref = -1.0;
    plot->add_option("curves", plot_curves, "label=file[,file...] per curve")->required();
    plot->add_option("--out", plot_out, "output SVG path");
    plot->add_option("--csv", plot_csv, "also write a summary CSV");
    plot->add_option("--title", plot_title, "plot title");
    plot->add_option("--base-reference", plot_base_ref, "dashed base success line");

    // ablate
    auto* ab = app.add_subcommand("ablate", "run a named experiment matrix");
    std::string ab_matrix, ab_config, ab_det_base, ab_out;
    std::size_t ab_jobs = 1;
    ab->add_option("matrix", ab_matrix,
                   "combined_vs_residual | decay_strategies | decay_rates | main")
        ->required();
    ab->add_option("--config", ab_config, "run config file")->required();
    ab->add_option("--det-base", ab_det_base, "deterministic base checkpoint");
    ab->add_option("--out", ab_out, "override out_dir");
    ab->add_option("--jobs", ab_jobs, "parallel workers");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*demo) {
            const rrl::EnvSpec spec = rrl::env_spec(demo_env);
            const rrl::DemoDataset ds = rrl::make_dataset(spec, demo_n, demo_noise, demo_subopt,
                                                          demo_keep_failures, demo_seed);
            rrl::dataset_save(ds, demo_out);
            if (!demo_csv.empty()) rrl::dataset_save_csv(ds, demo_csv);
            std::cout << "wrote " << ds.size() << " transitions from " << demo_n << " demos to "
                      << demo_out << "\n";
        } else if (*bc) {
            const rrl::EnvSpec spec = rrl::env_spec(bc_env);
            const rrl::DemoDataset ds = rrl::dataset_load(bc_dataset);
            rrl::BCConfig cfg;
            cfg.epochs = bc_epochs;
            cfg.batch_size = bc_batch;
            cfg.learning_rate = bc_lr;
            cfg.mixture_components = bc_components;
            cfg.hidden = bc_hidden;
            rrl::BCResult res;
            if (bc_kind == "ensemble") {
                res = rrl::bc_train_ensemble(ds, rrl::BasePolicyKind::Mixture, spec.action_bounds,
                                             cfg, bc_members, bc_seed);
            } else if (bc_kind == "mixture") {
                res = rrl::bc_train(ds, rrl::BasePolicyKind::Mixture, spec.action_bounds, cfg,
                                    bc_seed);
            } else if (bc_kind == "deterministic") {
                res = rrl::bc_train(ds, rrl::BasePolicyKind::Deterministic, spec.action_bounds,
                                    cfg, bc_seed);
            } else {
                throw rrl::ConfigError("unknown bc kind '" + bc_kind + "'");
            }
            rrl::base_policy_save_file(res.policy, bc_out);
            std::cout << "final loss " << rrl::format_double(res.final_loss) << ", checkpoint "
                      << bc_out << "\n";
        } else if (*train) {
            const rrl::RunConfig cfg =
                load_run_config(train_config, train_seed, train_has_seed, train_out);
            const auto paths = rrl::run_config(cfg, train_jobs);
            for (const auto& p : paths) std::cout << p << "\n";
        } else if (*ev) {
            rrl::RunConfig cfg = load_run_config(eval_config, 0, false, "");
            if (eval_episodes > 0) cfg.eval_episodes = eval_episodes;
            if (cfg.base_policy_path.empty())
                throw rrl::ConfigError("eval requires base_policy in the config");
            const rrl::EnvSpec spec = rrl::env_spec(cfg.env);
            const rrl::BasePolicy base = rrl::base_policy_load_file(cfg.base_policy_path);
            rrl::Rng rng(eval_seed);
            double success = 0.0, ret = 0.0;
            for (std::size_t ep = 0; ep < cfg.eval_episodes; ++ep) {
                rrl::EnvState st = rrl::env_reset(spec, rng);
                double r_ep = 0.0;
                for (;;) {
                    const auto obs = rrl::observation(spec, st);
                    const auto a = base.sample(obs, rng);
                    rrl::StepResult r = rrl::env_step(spec, st, a);
                    r_ep += r.reward;
                    st = r.next_state;
                    if (r.done) {
                        if (r.success) success += 1.0;
                        break;
                    }
                }
                ret += r_ep;
            }
            const double n = static_cast<double>(cfg.eval_episodes);
            std::cout << "env " << cfg.env << "  episodes " << cfg.eval_episodes << "\n";
            std::cout << "success " << rrl::format_double(success / n) << "  mean_return "
                      << rrl::format_double(ret / n) << "\n";
        } else if (*plot) {
            std::vector<rrl::CurveSummary> curves;
            for (const auto& arg : plot_curves) curves.push_back(parse_curve_arg(arg));
            rrl::emit_svg(curves, plot_out, plot_title, plot_base_ref);
            if (!plot_csv.empty()) rrl::summary_save_csv(curves, plot_csv);
            std::cout << "wrote " << plot_out << "\n";
        } else if (*ab) {
            const rrl::RunConfig cfg = load_run_config(ab_config, 0, false, ab_out);
            const rrl::AblateReport rep = rrl::ablate(ab_matrix, cfg, ab_det_base, ab_jobs);
            for (const auto& v : rep.verdicts)
                std::cout << (v.pass ? "PASS" : "FAIL") << "  " << v.description << "\n";
            std::cout << "curves " << rep.svg_path << "\nverdicts " << rep.verdict_path << "\n";
            return rep.all_pass() ? 0 : 1;
        }
    } catch (const rrl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const rrl::NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
