#include "fac/experiment.hpp"

#include <algorithm>

#include "fac/report_io.hpp"
#include "fac/timeseries.hpp"
#include "json.hpp"

namespace fac {

namespace {

using nlohmann::json;

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["data"] = c.data;
    j["timestamp_column"] = c.timestamp_column;
    j["forecaster"] = c.forecaster;
    j["model"] = c.model;
    j["ridge"] = c.ridge;
    j["ols_variant"] = c.ols_variant;
    j["dlinear"] = {{"kernel", c.dlinear.kernel},
                    {"epochs", c.dlinear.epochs},
                    {"lr", c.dlinear.lr},
                    {"batch_size", c.dlinear.batch_size},
                    {"patience", c.dlinear.patience}};
    j["adapter"] = c.adapter;
    j["input_calibration"] = c.input_calibration;
    j["gate_init"] = c.gate_init;
    j["mode"] = c.mode;
    j["selection"] = c.selection;
    j["weight_decay"] = c.weight_decay;
    j["max_matured"] = c.max_matured;
    j["lookback"] = c.lookback;
    j["horizon"] = c.horizon;
    j["batch_rule"] = c.batch_rule;
    j["lr"] = c.lr;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["eps"] = c.eps;
    j["steps"] = c.steps;
    j["seed"] = c.seed;
    j["out"] = c.out;
    return j;
}

void reject_unknown(const json& given, const json& known, const std::string& prefix) {
    for (auto it = given.begin(); it != given.end(); ++it) {
        if (!known.contains(it.key())) throw ConfigError("unknown config key '" + prefix + it.key() + "'");
        if (known.at(it.key()).is_object()) {
            if (!it.value().is_object()) throw ConfigError("config key '" + prefix + it.key() + "' must be an object");
            reject_unknown(it.value(), known.at(it.key()), prefix + it.key() + ".");
        }
    }
}

std::filesystem::path out_dir(const ExperimentConfig& c) {
    std::filesystem::path p(c.out);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec) throw Error("cannot create output directory '" + c.out + "': " + ec.message());
    return p;
}

TimeSeriesDataset load_data(const ExperimentConfig& c) {
    if (c.data.empty()) throw ConfigError("no dataset given (--data)");
    if (!std::filesystem::is_regular_file(c.data)) throw ConfigError("data file not found: '" + c.data + "'");
    return load_csv(c.data, c.timestamp_column);
}

ForecasterModel obtain_model(const ExperimentConfig& c, const TimeSeriesDataset& ds) {
    const std::size_t L = c.lookback, H = c.horizon, C = ds.channels();
    if (!c.model.empty()) {
        if (!std::filesystem::is_regular_file(c.model)) throw ConfigError("model file not found: '" + c.model + "'");
        auto m = load_forecaster(c.model);
        if (m.lookback() != L || m.horizon() != H || m.channels() != C) {
            throw ConfigError("model '" + c.model + "' has shape L=" + std::to_string(m.lookback()) +
                              " H=" + std::to_string(m.horizon()) + " C=" + std::to_string(m.channels()) +
                              ", config needs L=" + std::to_string(L) + " H=" + std::to_string(H) +
                              " C=" + std::to_string(C));
        }
        return m;
    }
    switch (forecaster_kind_from_string(c.forecaster)) {
        case ForecasterKind::naive: return ForecasterModel::naive(L, H, C);
        case ForecasterKind::ols: return fit_ols(ds, L, H, c.ridge, ols_variant_from_string(c.ols_variant));
        case ForecasterKind::dlinear: {
            DLinearOptions opt = c.dlinear;
            opt.seed = c.seed;
            return fit_dlinear(ds, L, H, opt);
        }
    }
    throw ConfigError("unknown forecaster '" + c.forecaster + "'");
}

template <class F>
void check_name(F parse, const std::string& value, const char* what) {
    try {
        parse(value);
    } catch (const Error&) {
        throw ConfigError(std::string("unknown ") + what + " '" + value + "'");
    }
}

}  // namespace

std::string ExperimentConfig::to_json() const { return config_to_json(*this).dump(); }

ExperimentConfig ExperimentConfig::from_json(const std::string& text, const ExperimentConfig& base) {
    json given;
    try {
        given = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!given.is_object()) throw ConfigError("config must be a JSON object");
    json merged = config_to_json(base);
    reject_unknown(given, merged, "");
    merged.merge_patch(given);
    ExperimentConfig c;
    try {
        c.data = merged.at("data").get<std::string>();
        c.timestamp_column = merged.at("timestamp_column").get<std::string>();
        c.forecaster = merged.at("forecaster").get<std::string>();
        c.model = merged.at("model").get<std::string>();
        c.ridge = merged.at("ridge").get<double>();
        c.ols_variant = merged.at("ols_variant").get<std::string>();
        const auto& d = merged.at("dlinear");
        c.dlinear.kernel = d.at("kernel").get<std::size_t>();
        c.dlinear.epochs = d.at("epochs").get<std::size_t>();
        c.dlinear.lr = d.at("lr").get<double>();
        c.dlinear.batch_size = d.at("batch_size").get<std::size_t>();
        c.dlinear.patience = d.at("patience").get<std::size_t>();
        c.adapter = merged.at("adapter").get<std::string>();
        c.input_calibration = merged.at("input_calibration").get<bool>();
        c.gate_init = merged.at("gate_init").get<double>();
        c.mode = merged.at("mode").get<std::string>();
        c.selection = merged.at("selection").get<std::string>();
        c.weight_decay = merged.at("weight_decay").get<double>();
        c.max_matured = merged.at("max_matured").get<std::size_t>();
        c.lookback = merged.at("lookback").get<std::size_t>();
        c.horizon = merged.at("horizon").get<std::size_t>();
        c.batch_rule = merged.at("batch_rule").is_number() ? std::to_string(merged.at("batch_rule").get<std::size_t>())
                                                           : merged.at("batch_rule").get<std::string>();
        c.lr = merged.at("lr").get<double>();
        c.beta1 = merged.at("beta1").get<double>();
        c.beta2 = merged.at("beta2").get<double>();
        c.eps = merged.at("eps").get<double>();
        c.steps = merged.at("steps").get<std::size_t>();
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.out = merged.at("out").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config value has the wrong type: ") + e.what());
    }
    c.dlinear.seed = c.seed;
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: '" + path.string() + "'");
    return from_json(read_text(path));
}

void ExperimentConfig::validate() const {
    check_name(forecaster_kind_from_string, forecaster, "forecaster");
    check_name(ols_variant_from_string, ols_variant, "OLS variant");
    check_name(adapter_kind_from_string, adapter, "adapter");
    check_name(protocol_mode_from_string, mode, "mode");
    check_name(matured_selection_from_string, selection, "matured selection");
    check_name(batch_size_rule_from_string, batch_rule, "batch rule");
    if (lookback == 0) throw ConfigError("lookback must be >= 1");
    if (horizon == 0) throw ConfigError("horizon must be >= 1");
    if (steps == 0) throw ConfigError("steps must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must be in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
    if (!(ridge >= 0.0)) throw ConfigError("ridge must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(gate_init > -1e300 && gate_init < 1e300)) throw ConfigError("gate_init must be finite");
    if (dlinear.kernel == 0 || dlinear.batch_size == 0) throw ConfigError("dlinear kernel and batch_size must be >= 1");
    if (out.empty()) throw ConfigError("output directory must not be empty");
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(to_json()); }

std::string ExperimentConfig::dataset_name() const {
    return data.empty() ? std::string() : std::filesystem::path(data).stem().string();
}

ProtocolConfig ExperimentConfig::protocol() const {
    ProtocolConfig p;
    p.mode = protocol_mode_from_string(mode);
    p.selection = matured_selection_from_string(selection);
    p.weight_decay = weight_decay;
    p.max_matured = max_matured;
    p.steps_per_update = steps;
    p.optimizer = {lr, beta1, beta2, eps};
    p.batch_rule = batch_size_rule_from_string(batch_rule);
    return p;
}

AdapterConfig ExperimentConfig::adapter_config() const {
    return {adapter_kind_from_string(adapter), input_calibration, gate_init};
}

TrainResult cmd_train(const ExperimentConfig& config) {
    config.validate();
    const auto ds = load_data(config);
    TrainResult r;
    r.config_hash = config.hash();
    r.model = obtain_model(config, ds);
    const auto [tx, ty] = stack_windows(ds, Region::train, config.lookback, config.horizon);
    const auto [vx, vy] = stack_windows(ds, Region::val, config.lookback, config.horizon);
    r.train_mse = mse(r.model.forward(tx), ty);
    r.val_mse = vx.count ? mse(r.model.forward(vx), vy) : 0.0;
    r.model.train_loss = r.train_mse;
    r.model.val_loss = r.val_mse;

    const auto dir = out_dir(config);
    json blob = json::parse(forecaster_to_json(r.model));
    blob["config_hash"] = r.config_hash;
    write_text(dir / "forecaster.json", blob.dump());
    json summary = {{"config_hash", r.config_hash},
                    {"config", json::parse(config.to_json())},
                    {"forecaster", to_string(r.model.kind())},
                    {"train_windows", tx.count},
                    {"val_windows", vx.count},
                    {"train_mse", r.train_mse},
                    {"val_mse", r.val_mse}};
    write_text(dir / "train.json", summary.dump(2));
    return r;
}

RunResult cmd_run(const ExperimentConfig& config, bool write_outputs) {
    config.validate();
    const auto ds = load_data(config);
    const auto model = obtain_model(config, ds);
    const auto pc = config.protocol();
    AdapterState state = make_adapter(config.adapter_config(), ds.channels(), config.lookback, config.horizon);

    RunResult r;
    r.config_hash = config.hash();
    switch (pc.mode) {
        case ProtocolMode::frozen: r.trace = run_frozen(ds, model, pc, config.lookback, config.horizon); break;
        case ProtocolMode::matured_only:
            r.trace = run_matured_only(ds, model, state, pc, config.lookback, config.horizon);
            break;
        case ProtocolMode::mixed_supervision:
            r.trace = run_mixed_supervision(ds, model, state, pc, config.lookback, config.horizon);
            break;
    }
    r.report = evaluate(r.trace);
    r.report.dataset = config.dataset_name();
    r.report.forecaster = to_string(model.kind());
    r.report.adapter = pc.mode == ProtocolMode::frozen ? "none" : to_string(state.config.kind);
    r.report.config_json = config.to_json();

    if (write_outputs) {
        const auto dir = out_dir(config);
        write_text(dir / "report.json", report_json(r.report, r.config_hash));
        write_text(dir / "report.csv", std::string(kReportColumns) + "\n" + report_csv_row(r.report, r.config_hash));
        write_text(dir / "trace.json", trace_summary_json(r.trace, r.config_hash));
        write_text(dir / "batches.csv", batches_csv(r.trace, r.config_hash));
        write_text(dir / "windows.csv", windows_csv(r.trace, r.config_hash));
        write_trace_binary(r.trace, r.config_hash, dir / "trace.bin");
        json ad = {{"config_hash", r.config_hash}, {"adapter", json::parse(adapter_to_json(state))}};
        write_text(dir / "adapter.json", ad.dump());
    }
    return r;
}

AuditResult cmd_audit(const ExperimentConfig& config, std::size_t windows) {
    config.validate();
    const auto rule = batch_size_rule_from_string(config.batch_rule);
    std::vector<PlanEntry> plan;
    if (windows > 0) {
        if (rule.kind != BatchSizeRule::Kind::fixed)
            throw ConfigError("a data-free audit needs a fixed batch rule (--batch-rule fixed:B)");
        long anchor = 0;
        for (std::size_t b : plan_batch_sizes(windows, rule.fixed_size)) {
            plan.push_back({anchor, b});
            anchor += static_cast<long>(b);
        }
    } else {
        const auto ds = load_data(config);
        for (const auto& b : plan_batches(ds, Region::test, config.lookback, config.horizon, rule))
            plan.push_back({b.anchor, b.size});
    }
    AuditResult r{audit_streaming_leakage(plan, config.horizon), audit_matured_plan(plan, config.horizon),
                  config.hash()};
    const auto dir = out_dir(config);
    json j = {{"config_hash", r.config_hash},
              {"streaming", json::parse(r.streaming.to_json())},
              {"matured", json::parse(r.matured.to_json())}};
    write_text(dir / "leakage.json", j.dump(2));
    return r;
}

std::vector<CorrectionSpectrum> cmd_diagnose(const DiagnoseOptions& options) {
    if (options.traces.empty()) throw ConfigError("no trace files given");
    if (options.correction != "source-final" && options.correction != "pre-post")
        throw ConfigError("unknown correction '" + options.correction + "', expected source-final or pre-post");
    std::error_code ec;
    std::filesystem::create_directories(options.out, ec);
    if (ec) throw Error("cannot create output directory '" + options.out.string() + "'");

    std::vector<CorrectionSpectrum> spectra;
    std::vector<PlotSeries> spec_series, curve_series;
    std::string hashes;
    for (std::size_t i = 0; i < options.traces.size(); ++i) {
        const auto& path = options.traces[i];
        if (!std::filesystem::is_regular_file(path)) throw ConfigError("trace file not found: '" + path.string() + "'");
        const auto st = read_trace_binary(path);
        const auto& t = st.trace;
        if (t.batches.empty()) throw ValidationError("trace '" + path.string() + "' has no batches");
        const std::string label = path.parent_path().filename().string() + ":" + to_string(t.mode);
        const bool pre_post = options.correction == "pre-post";
        auto s = correction_spectrum(t.stacked(pre_post ? &BatchRecord::pre : &BatchRecord::source),
                                     t.stacked(pre_post ? &BatchRecord::post : &BatchRecord::final), label);
        const std::string tag = "# config_hash=" + st.config_hash + "\n";
        write_text(options.out / ("spectrum_" + std::to_string(i) + ".csv"), tag + spectrum_csv(s));
        spec_series.push_back({label, s.magnitudes});
        hashes += " " + st.config_hash;

        const std::size_t B = options.batch_size ? options.batch_size : t.nominal_batch;
        if (t.mode == ProtocolMode::mixed_supervision && B >= 1 && B <= t.horizon) {
            const bool any = std::any_of(t.batches.begin(), t.batches.end(), [&](const auto& b) { return b.size == B; });
            if (any) {
                auto c = early_vs_late_curves(t, B);
                write_text(options.out / ("curves_" + std::to_string(i) + ".csv"), tag + curves_csv(c));
                curve_series.push_back({label + " direct", c.direct});
                curve_series.push_back({label + " adjusted", c.adjusted});
            }
        }
        spectra.push_back(std::move(s));
    }
    const std::string stamp = "<!-- config_hash:" + hashes + " -->\n";
    write_text(options.out / "spectrum.svg",
               stamp + svg_line_plot(spec_series, "Correction magnitude spectrum", "frequency index", true));
    if (!curve_series.empty()) {
        write_text(options.out / "curves.svg",
                   stamp + svg_line_plot(curve_series, "Overlapping-region MSE", "sample position j", false));
    }
    return spectra;
}

}  // namespace fac
