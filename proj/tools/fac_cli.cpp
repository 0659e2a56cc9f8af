#include <sys/wait.h>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "fac/experiment.hpp"
#include "fac/report_io.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> data, forecaster, ols_variant, model, adapter, mode, batch_rule, out, selection, timestamp_column;
    std::optional<std::size_t> horizon, lookback, steps;
    std::optional<double> lr, ridge, gate_init;
    std::optional<std::uint64_t> seed;
    bool no_input_calibration = false;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "JSON config file; flags override its values");
        app->add_option("--data", data, "CSV dataset");
        app->add_option("--timestamp-column", timestamp_column, "timestamp column (default: first column)");
        app->add_option("--forecaster", forecaster, "naive | ols | dlinear");
        app->add_option("--model", model, "saved forecaster to load instead of fitting");
        app->add_option("--ridge", ridge, "ridge penalty for ols");
        app->add_option("--ols-variant", ols_variant, "per_channel | shared | shared_centered");
        app->add_option("--adapter", adapter, "fac | temporal_gcm");
        app->add_option("--gate-init", gate_init, "initial gate pre-activation");
        app->add_option("--mode", mode, "frozen | matured_only | mixed_supervision");
        app->add_option("--selection", selection, "most_recent | all_with_weights");
        app->add_option("--horizon", horizon, "forecast horizon H");
        app->add_option("--lookback", lookback, "look-back length L");
        app->add_option("--batch-rule", batch_rule, "paas | paas:full | fixed:B");
        app->add_option("--lr", lr, "Adam learning rate");
        app->add_option("--steps", steps, "gradient steps per update");
        app->add_option("--seed", seed, "random seed");
        app->add_option("--out", out, "output directory");
        app->add_flag("--no-input-calibration", no_input_calibration, "output calibration only");
    }

    fac::ExperimentConfig resolve() const {
        fac::ExperimentConfig c = config.empty() ? fac::ExperimentConfig{} : fac::ExperimentConfig::load(config);
        if (data) c.data = *data;
        if (timestamp_column) c.timestamp_column = *timestamp_column;
        if (forecaster) c.forecaster = *forecaster;
        if (model) c.model = *model;
        if (ridge) c.ridge = *ridge;
        if (ols_variant) c.ols_variant = *ols_variant;
        if (adapter) c.adapter = *adapter;
        if (gate_init) c.gate_init = *gate_init;
        if (mode) c.mode = *mode;
        if (selection) c.selection = *selection;
        if (horizon) c.horizon = *horizon;
        if (lookback) c.lookback = *lookback;
        if (batch_rule) c.batch_rule = *batch_rule;
        if (lr) c.lr = *lr;
        if (steps) c.steps = *steps;
        if (seed) {
            c.seed = *seed;
            c.dlinear.seed = *seed;
        }
        if (out) c.out = *out;
        if (no_input_calibration) c.input_calibration = false;
        return c;
    }
};

std::string self_exe(const char* argv0) {
    std::error_code ec;
    auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
    return ec ? std::string(argv0) : p.string();
}

std::string shell_quote(const std::string& s) {
    std::string q = "'";
    for (char ch : s) q += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
    return q + "'";
}

int run_sweep(const std::string& exe, const std::vector<std::string>& configs, std::size_t jobs) {
    std::atomic<std::size_t> next{0};
    std::atomic<int> worst{0};
    std::mutex io;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < configs.size();) {
            const std::string cmd = shell_quote(exe) + " run --config " + shell_quote(configs[i]);
            const int status = std::system(cmd.c_str());
            const int code = status == -1 ? 1 : (WIFEXITED(status) ? WEXITSTATUS(status) : 1);
            {
                std::lock_guard lock(io);
                std::cerr << "[sweep] " << configs[i] << " exit " << code << '\n';
            }
            int prev = worst.load();
            while (code > prev && !worst.compare_exchange_weak(prev, code)) {
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < std::max<std::size_t>(1, jobs); ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return worst.load() == 0 ? 0 : (worst.load() == 2 ? 2 : 1);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Test-time calibration of frozen forecasters under a matured-ground-truth protocol"};
    app.require_subcommand(1);

    Overrides train_o, run_o, audit_o;
    auto* train = app.add_subcommand("train", "fit the source forecaster on the train split");
    train_o.attach(train);
    auto* run = app.add_subcommand("run", "run a rolling adaptation protocol over the test split");
    run_o.attach(run);
    auto* audit = app.add_subcommand("audit", "audit a rolling batch plan for supervision leakage");
    audit_o.attach(audit);
    std::size_t audit_windows = 0;
    audit->add_option("--windows", audit_windows, "audit a data-free plan of this many windows");

    auto* params = app.add_subcommand("params", "print the trainable parameter count of an adapter");
    std::size_t p_channels = 0, p_lookback = 96, p_horizon = 96;
    std::string p_adapter = "fac";
    bool p_no_input = false;
    params->add_option("--channels", p_channels, "number of channels C")->required();
    params->add_option("--lookback", p_lookback, "look-back length L");
    params->add_option("--horizon", p_horizon, "forecast horizon H");
    params->add_option("--adapter", p_adapter, "fac | temporal_gcm");
    params->add_flag("--no-input-calibration", p_no_input, "output calibration only");

    auto* diagnose = app.add_subcommand("diagnose", "correction spectra and early-vs-late curves from trace files");
    fac::DiagnoseOptions d_opt;
    std::string d_out = "diagnostics";
    diagnose->add_option("traces", d_opt.traces, "trace.bin files written by run")->required();
    diagnose->add_option("--out", d_out, "output directory");
    diagnose->add_option("--correction", d_opt.correction, "source-final | pre-post");
    diagnose->add_option("--batch-size", d_opt.batch_size, "batch size for curves (default: nominal)");

    auto* sweep = app.add_subcommand("sweep", "run several configs in parallel processes");
    std::vector<std::string> s_configs;
    std::size_t s_jobs = 1;
    sweep->add_option("configs", s_configs, "config files")->required();
    sweep->add_option("--jobs", s_jobs, "parallel processes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) {
            const auto cfg = train_o.resolve();
            const auto r = fac::cmd_train(cfg);
            std::cout << "config_hash " << r.config_hash << "\ntrain_mse " << r.train_mse << "\nval_mse " << r.val_mse
                      << "\nwrote " << (std::filesystem::path(cfg.out) / "forecaster.json").string() << '\n';
        } else if (*run) {
            const auto cfg = run_o.resolve();
            const auto r = fac::cmd_run(cfg);
            for (const auto& n : r.report.notices) std::cerr << "notice: " << n << '\n';
            std::cout << "config_hash " << r.config_hash << "\nmode " << r.report.mode << "\nbatch_size "
                      << r.report.nominal_batch << "\nwindows " << r.report.windows << "\nupdates " << r.report.updates
                      << "\nparams " << r.report.param_count << "\nmse " << r.report.mse << "\nmae " << r.report.mae
                      << "\nmean_adapt_ms " << r.report.mean_adapt_ms << "\nwrote " << cfg.out << '\n';
        } else if (*audit) {
            const auto cfg = audit_o.resolve();
            const auto r = fac::cmd_audit(cfg, audit_windows);
            std::cout << "config_hash " << r.config_hash << '\n';
            for (const auto* rep : {&r.streaming, &r.matured}) {
                std::cout << (rep == &r.streaming ? "streaming" : "matured") << ": batches " << rep->batches
                          << ", windows checked " << rep->windows_checked << ", violations " << rep->violations.size()
                          << ", overlapping timestamps " << rep->overlapping_timestamps
                          << ", pairs with H >= B_k + B_k+1 " << rep->sufficient_condition_pairs << '\n';
            }
        } else if (*params) {
            std::cout << fac::param_count(fac::adapter_kind_from_string(p_adapter), p_channels, p_lookback, p_horizon,
                                          !p_no_input)
                      << '\n';
        } else if (*diagnose) {
            d_opt.out = d_out;
            const auto spectra = fac::cmd_diagnose(d_opt);
            std::cout << "spectra " << spectra.size() << "\nwrote " << d_out << '\n';
        } else if (*sweep) {
            return run_sweep(self_exe(argv[0]), s_configs, s_jobs);
        }
    } catch (const fac::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
