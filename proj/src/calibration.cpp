#include "fac/calibration.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace fac {

namespace {

constexpr int kAdapterVersion = 1;

std::size_t module_length(const CalibrationModule& m) {
    return std::visit([](const auto& mod) { return mod.length(); }, m);
}

std::size_t module_channels(const CalibrationModule& m) {
    return std::visit([](const auto& mod) { return mod.channels(); }, m);
}

void check_signal(const Tensor3& x, std::size_t len, std::size_t channels, const char* where) {
    if (x.steps != len || x.channels != channels) {
        throw ShapeError(std::string(where) + ": expected [B x " + std::to_string(len) + " x " +
                         std::to_string(channels) + "], got [" + std::to_string(x.count) + " x " +
                         std::to_string(x.steps) + " x " + std::to_string(x.channels) + "]");
    }
}

}  // namespace

const char* to_string(AdapterKind k) {
    switch (k) {
        case AdapterKind::fac: return "fac";
        case AdapterKind::temporal_gcm: return "temporal_gcm";
    }
    return "?";
}

AdapterKind adapter_kind_from_string(const std::string& s) {
    if (s == "fac") return AdapterKind::fac;
    if (s == "temporal_gcm" || s == "tafas") return AdapterKind::temporal_gcm;
    throw ValidationError("unknown adapter kind '" + s + "' (expected fac or temporal_gcm)");
}

// ---------------------------------------------------------------- FreqGcm

FreqGcm::FreqGcm(std::size_t len, std::size_t channels, double gate_init)
    : len_(len), channels_(channels), params_(4 * spectrum_bins(len) * channels + channels, 0.0) {
    if (len == 0 || channels == 0) throw ShapeError("FreqGcm: length and channels must be >= 1");
    for (std::size_t c = 0; c < channels_; ++c) set_gate(c, gate_init);
}

cplx FreqGcm::weight(std::size_t f, std::size_t c) const {
    const std::size_t o = 2 * (f * channels_ + c);
    return {params_[o], params_[o + 1]};
}

cplx FreqGcm::shift(std::size_t f, std::size_t c) const {
    const std::size_t o = shift_offset() + 2 * (f * channels_ + c);
    return {params_[o], params_[o + 1]};
}

void FreqGcm::set_weight(std::size_t f, std::size_t c, cplx v) {
    const std::size_t o = 2 * (f * channels_ + c);
    params_[o] = v.real();
    params_[o + 1] = v.imag();
}

void FreqGcm::set_shift(std::size_t f, std::size_t c, cplx v) {
    const std::size_t o = shift_offset() + 2 * (f * channels_ + c);
    params_[o] = v.real();
    params_[o + 1] = v.imag();
}

Tensor3 FreqGcm::apply(const Tensor3& x, Tape* tape) const {
    check_signal(x, len_, channels_, "FreqGcm");
    const auto& plan = real_fft(len_);
    const std::size_t F = bins();
    Tensor3 y = x;
    if (tape) {
        tape->spectrum = SpectrumBatch{x.count, len_, channels_, std::vector<cplx>(x.count * F * channels_)};
        tape->correction = Tensor3(x.count, len_, channels_);
    }
    std::vector<double> buf(len_), corr(len_);
    std::vector<cplx> spec(F), delta(F);
    for (std::size_t c = 0; c < channels_; ++c) {
        const double g = std::tanh(gate(c));
        for (std::size_t i = 0; i < x.count; ++i) {
            gather_channel(x, i, c, buf);
            plan.forward(buf, spec);
            for (std::size_t f = 0; f < F; ++f) delta[f] = spec[f] * weight(f, c) + shift(f, c);
            plan.inverse(delta, corr, ImagPolicy::discard);
            for (std::size_t t = 0; t < len_; ++t) y(i, t, c) += g * corr[t];
            if (tape) {
                for (std::size_t f = 0; f < F; ++f) tape->spectrum(i, f, c) = spec[f];
                scatter_channel(tape->correction, i, c, corr);
            }
        }
    }
    return y;
}

void FreqGcm::backward(const Tape& tape, const Tensor3& grad_out, std::span<double> grad_params,
                       Tensor3* grad_input) const {
    check_signal(grad_out, len_, channels_, "FreqGcm::backward");
    if (grad_params.size() != params_.size()) throw ShapeError("FreqGcm::backward: gradient buffer size");
    if (tape.spectrum.count != grad_out.count || tape.correction.count != grad_out.count)
        throw ShapeError("FreqGcm::backward: tape does not match gradient batch");
    const auto& plan = real_fft(len_);
    const std::size_t F = bins();
    if (grad_input) *grad_input = grad_out;
    std::vector<double> g(len_), scaled(len_), gx(len_);
    std::vector<cplx> gdelta(F), gspec(F);
    for (std::size_t c = 0; c < channels_; ++c) {
        const double th = std::tanh(gate(c));
        double galpha = 0.0;
        for (std::size_t i = 0; i < grad_out.count; ++i) {
            gather_channel(grad_out, i, c, g);
            for (std::size_t t = 0; t < len_; ++t) {
                scaled[t] = th * g[t];
                galpha += g[t] * tape.correction(i, t, c);
            }
            plan.inverse_adjoint(scaled, gdelta);
            for (std::size_t f = 0; f < F; ++f) {
                const cplx gw = std::conj(tape.spectrum(i, f, c)) * gdelta[f];
                const std::size_t ow = 2 * (f * channels_ + c);
                grad_params[ow] += gw.real();
                grad_params[ow + 1] += gw.imag();
                const std::size_t ob = shift_offset() + ow;
                grad_params[ob] += gdelta[f].real();
                grad_params[ob + 1] += gdelta[f].imag();
            }
            if (grad_input) {
                for (std::size_t f = 0; f < F; ++f) gspec[f] = std::conj(weight(f, c)) * gdelta[f];
                plan.forward_adjoint(gspec, gx);
                for (std::size_t t = 0; t < len_; ++t) (*grad_input)(i, t, c) += gx[t];
            }
        }
        grad_params[gate_offset() + c] += (1.0 - th * th) * galpha;
    }
}

Tensor3 calibrate(const FreqGcm& module, const Tensor3& x) { return module.apply(x); }

// ------------------------------------------------------------ TemporalGcm

TemporalGcm::TemporalGcm(std::size_t len, std::size_t channels, double gate_init)
    : len_(len), channels_(channels), params_(channels * (len * len + len + 1), 0.0) {
    if (len == 0 || channels == 0) throw ShapeError("TemporalGcm: length and channels must be >= 1");
    for (std::size_t c = 0; c < channels_; ++c) set_gate(c, gate_init);
}

Tensor3 TemporalGcm::apply(const Tensor3& x, Tape* tape) const {
    check_signal(x, len_, channels_, "TemporalGcm");
    Tensor3 y = x;
    if (tape) {
        tape->input = x;
        tape->correction = Tensor3(x.count, len_, channels_);
    }
    std::vector<double> buf(len_);
    for (std::size_t c = 0; c < channels_; ++c) {
        const double g = std::tanh(gate(c));
        for (std::size_t i = 0; i < x.count; ++i) {
            gather_channel(x, i, c, buf);
            for (std::size_t r = 0; r < len_; ++r) {
                const double* row = &params_[(c * len_ + r) * len_];
                double acc = bias(c, r);
                for (std::size_t k = 0; k < len_; ++k) acc += row[k] * buf[k];
                y(i, r, c) += g * acc;
                if (tape) tape->correction(i, r, c) = acc;
            }
        }
    }
    return y;
}

void TemporalGcm::backward(const Tape& tape, const Tensor3& grad_out, std::span<double> grad_params,
                           Tensor3* grad_input) const {
    check_signal(grad_out, len_, channels_, "TemporalGcm::backward");
    if (grad_params.size() != params_.size()) throw ShapeError("TemporalGcm::backward: gradient buffer size");
    if (tape.input.count != grad_out.count) throw ShapeError("TemporalGcm::backward: tape does not match batch");
    if (grad_input) *grad_input = grad_out;
    std::vector<double> x(len_), g(len_);
    for (std::size_t c = 0; c < channels_; ++c) {
        const double th = std::tanh(gate(c));
        double galpha = 0.0;
        for (std::size_t i = 0; i < grad_out.count; ++i) {
            gather_channel(tape.input, i, c, x);
            gather_channel(grad_out, i, c, g);
            for (std::size_t r = 0; r < len_; ++r) {
                galpha += g[r] * tape.correction(i, r, c);
                const double tg = th * g[r];
                double* grow = &grad_params[(c * len_ + r) * len_];
                const double* row = &params_[(c * len_ + r) * len_];
                for (std::size_t k = 0; k < len_; ++k) grow[k] += tg * x[k];
                grad_params[bias_offset() + c * len_ + r] += tg;
                if (grad_input)
                    for (std::size_t k = 0; k < len_; ++k) (*grad_input)(i, k, c) += row[k] * tg;
            }
        }
        grad_params[gate_offset() + c] += (1.0 - th * th) * galpha;
    }
}

// ---------------------------------------------------------- module helpers

std::span<double> module_params(CalibrationModule& m) {
    return std::visit([](auto& mod) { return mod.params(); }, m);
}

std::span<const double> module_params(const CalibrationModule& m) {
    return std::visit([](const auto& mod) { return mod.params(); }, m);
}

Tensor3 module_apply(const CalibrationModule& m, const Tensor3& x, CalibrationTape* tape) {
    return std::visit(
        [&](const auto& mod) -> Tensor3 {
            using Tape = typename std::decay_t<decltype(mod)>::Tape;
            if (!tape) return mod.apply(x, nullptr);
            Tape t;
            Tensor3 y = mod.apply(x, &t);
            *tape = std::move(t);
            return y;
        },
        m);
}

void module_backward(const CalibrationModule& m, const CalibrationTape& tape, const Tensor3& grad_out,
                     std::span<double> grad_params, Tensor3* grad_input) {
    std::visit(
        [&](const auto& mod) {
            using Tape = typename std::decay_t<decltype(mod)>::Tape;
            const auto* t = std::get_if<Tape>(&tape);
            if (!t) throw ValidationError("adapter_backward: tape was produced by a different module kind");
            mod.backward(*t, grad_out, grad_params, grad_input);
        },
        m);
}

// ---------------------------------------------------------------- adapter

std::size_t AdapterState::param_count() const {
    std::size_t n = module_params(output_module).size();
    if (input_module) n += module_params(*input_module).size();
    return n;
}

namespace {

CalibrationModule build_module(AdapterKind kind, std::size_t len, std::size_t C, double gate_init) {
    if (kind == AdapterKind::fac) return FreqGcm(len, C, gate_init);
    return TemporalGcm(len, C, gate_init);
}

}  // namespace

AdapterState make_adapter(const AdapterConfig& config, std::size_t C, std::size_t L, std::size_t H) {
    AdapterState s{config, std::nullopt, build_module(config.kind, H, C, config.gate_init), std::nullopt, {}};
    s.output_optimizer = AdamState(module_params(s.output_module).size());
    if (config.use_input_calibration) {
        s.input_module = build_module(config.kind, L, C, config.gate_init);
        s.input_optimizer = AdamState(module_params(*s.input_module).size());
    }
    return s;
}

namespace {

Tensor3 timed_forward(const ForecasterModel& model, const Tensor3& x, double* seconds) {
    if (!seconds) return model.forward(x);
    const auto t0 = std::chrono::steady_clock::now();
    Tensor3 y = model.forward(x);
    *seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return y;
}

}  // namespace

std::pair<Tensor3, ForwardTape> adapter_forward(const AdapterState& state, const ForecasterModel& model,
                                                const Tensor3& inputs, double* source_seconds) {
    ForwardTape tape;
    tape.raw_inputs = inputs;
    if (state.input_module) {
        CalibrationTape t;
        tape.forecaster_inputs = module_apply(*state.input_module, inputs, &t);
        tape.input_tape = std::move(t);
    } else {
        tape.forecaster_inputs = inputs;
    }
    tape.raw_forecast = timed_forward(model, tape.forecaster_inputs, source_seconds);
    Tensor3 pred = module_apply(state.output_module, tape.raw_forecast, &tape.output_tape);
    return {std::move(pred), std::move(tape)};
}

Tensor3 adapter_predict(const AdapterState& state, const ForecasterModel& model, const Tensor3& inputs,
                        double* source_seconds) {
    const Tensor3 fin = state.input_module ? module_apply(*state.input_module, inputs) : inputs;
    return module_apply(state.output_module, timed_forward(model, fin, source_seconds));
}

GradientBlock adapter_backward(const AdapterState& state, const ForecasterModel& model, const ForwardTape& tape,
                               const Tensor3& grad_prediction) {
    if (state.input_module.has_value() != tape.input_tape.has_value())
        throw ValidationError("adapter_backward: tape and state disagree about input calibration");
    GradientBlock g;
    g.output.assign(module_params(state.output_module).size(), 0.0);
    if (!state.input_module) {
        module_backward(state.output_module, tape.output_tape, grad_prediction, g.output, nullptr);
        return g;
    }
    Tensor3 grad_forecast;
    module_backward(state.output_module, tape.output_tape, grad_prediction, g.output, &grad_forecast);
    const Tensor3 grad_cal_input = model.vjp(tape.forecaster_inputs, grad_forecast);
    g.input = std::vector<double>(module_params(*state.input_module).size(), 0.0);
    module_backward(*state.input_module, *tape.input_tape, grad_cal_input, *g.input, nullptr);
    return g;
}

bool apply_gradients(AdapterState& state, const GradientBlock& grads, const AdamHyper& hyper) {
    auto finite = [](const std::vector<double>& v) {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    };
    if (!finite(grads.output) || (grads.input && !finite(*grads.input))) return false;
    if (state.input_module) {
        if (!grads.input) throw ValidationError("apply_gradients: missing input-module gradient");
        adam_step(module_params(*state.input_module), *grads.input, *state.input_optimizer, hyper);
    }
    adam_step(module_params(state.output_module), grads.output, state.output_optimizer, hyper);
    return true;
}

std::size_t param_count(AdapterKind kind, std::size_t C, std::size_t L, std::size_t H, bool use_input) {
    auto one = [&](std::size_t len) {
        if (kind == AdapterKind::fac) return 4 * C * spectrum_bins(len) + C;
        return C * (len * len + len + 1);
    };
    return one(H) + (use_input ? one(L) : 0);
}

double mse_with_grad(const Tensor3& pred, const Tensor3& target, Tensor3& grad, double weight) {
    require_same_shape(pred, target, "mse_with_grad");
    if (!grad.same_shape(pred)) grad = Tensor3(pred.count, pred.steps, pred.channels);
    const double n = static_cast<double>(pred.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred.data[i] - target.data[i];
        loss += e * e;
        grad.data[i] += weight * 2.0 * e / n;
    }
    return weight * loss / n;
}

// ------------------------------------------------------------ serialization

namespace {

nlohmann::json module_to_json(const CalibrationModule& m, const AdamState& opt) {
    return {{"length", module_length(m)},
            {"params", std::vector<double>(module_params(m).begin(), module_params(m).end())},
            {"adam", {{"m", opt.m}, {"v", opt.v}, {"step", opt.step}}}};
}

void module_from_json(const nlohmann::json& j, CalibrationModule& m, AdamState& opt) {
    auto p = j.at("params").get<std::vector<double>>();
    auto dst = module_params(m);
    if (p.size() != dst.size()) throw ValidationError("adapter blob: parameter array size mismatch");
    std::copy(p.begin(), p.end(), dst.begin());
    opt.m = j.at("adam").at("m").get<std::vector<double>>();
    opt.v = j.at("adam").at("v").get<std::vector<double>>();
    opt.step = j.at("adam").at("step").get<std::size_t>();
    if (opt.m.size() != dst.size() || opt.v.size() != dst.size())
        throw ValidationError("adapter blob: optimizer state does not mirror parameter shape");
}

}  // namespace

std::string adapter_to_json(const AdapterState& s) {
    nlohmann::json j;
    j["format"] = "fac-adapter";
    j["version"] = kAdapterVersion;
    j["kind"] = to_string(s.config.kind);
    j["use_input_calibration"] = s.config.use_input_calibration;
    j["gate_init"] = s.config.gate_init;
    j["channels"] = module_channels(s.output_module);
    j["output"] = module_to_json(s.output_module, s.output_optimizer);
    if (s.input_module) j["input"] = module_to_json(*s.input_module, *s.input_optimizer);
    return j.dump();
}

AdapterState adapter_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("adapter blob: ") + e.what());
    }
    if (j.value("format", "") != "fac-adapter") throw ValidationError("adapter blob: wrong format tag");
    if (!j.contains("version") || j.at("version").get<int>() != kAdapterVersion)
        throw ValidationError("adapter blob: missing or unsupported version");
    AdapterConfig cfg;
    cfg.kind = adapter_kind_from_string(j.at("kind").get<std::string>());
    cfg.use_input_calibration = j.at("use_input_calibration").get<bool>();
    cfg.gate_init = j.value("gate_init", kDefaultGateInit);
    const auto C = j.at("channels").get<std::size_t>();
    const auto H = j.at("output").at("length").get<std::size_t>();
    const std::size_t L = cfg.use_input_calibration ? j.at("input").at("length").get<std::size_t>() : 1;
    AdapterState s = make_adapter(cfg, C, L, H);
    module_from_json(j.at("output"), s.output_module, s.output_optimizer);
    if (s.input_module) module_from_json(j.at("input"), *s.input_module, *s.input_optimizer);
    return s;
}

}  // namespace fac
