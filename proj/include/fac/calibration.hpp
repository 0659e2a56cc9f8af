#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fac/forecaster.hpp"
#include "fac/optim.hpp"
#include "fac/spectral.hpp"
#include "fac/tensor.hpp"

namespace fac {

enum class AdapterKind { fac, temporal_gcm };

const char* to_string(AdapterKind k);
AdapterKind adapter_kind_from_string(const std::string& s);

/// Gate pre-activation used by freshly built modules. The residual branch is
/// zero at construction regardless of the gate (W = B = 0 or A = b = 0), so a
/// new module is the identity; a nonzero gate keeps the first gradient step
/// from sitting on the all-zero saddle where every gradient vanishes.
inline constexpr double kDefaultGateInit = 0.01;

/// Frequency-domain gated calibration module over signals of length `len`:
///
///   y = x + tanh(alpha_c) * irfft(rfft(x) (.) W + B)     per channel c
///
/// W and B are complex [F x C], alpha is real [C]. Parameters live in one flat
/// vector: W as (re, im) pairs, then B likewise, then alpha.
class FreqGcm {
public:
    struct Tape {
        SpectrumBatch spectrum;  // rfft of the module input
        Tensor3 correction;      // irfft(spectrum (.) W + B), before the gate
    };

    FreqGcm(std::size_t len, std::size_t channels, double gate_init = kDefaultGateInit);

    std::size_t length() const { return len_; }
    std::size_t channels() const { return channels_; }
    std::size_t bins() const { return spectrum_bins(len_); }
    std::size_t param_count() const { return params_.size(); }

    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    cplx weight(std::size_t f, std::size_t c) const;
    cplx shift(std::size_t f, std::size_t c) const;
    double gate(std::size_t c) const { return params_[gate_offset() + c]; }
    void set_weight(std::size_t f, std::size_t c, cplx v);
    void set_shift(std::size_t f, std::size_t c, cplx v);
    void set_gate(std::size_t c, double v) { params_[gate_offset() + c] = v; }

    Tensor3 apply(const Tensor3& x, Tape* tape = nullptr) const;
    /// Accumulates parameter gradients into `grad_params`; writes the input
    /// gradient when `grad_input` is non-null.
    void backward(const Tape& tape, const Tensor3& grad_out, std::span<double> grad_params,
                  Tensor3* grad_input) const;

private:
    std::size_t shift_offset() const { return 2 * bins() * channels_; }
    std::size_t gate_offset() const { return 4 * bins() * channels_; }

    std::size_t len_;
    std::size_t channels_;
    std::vector<double> params_;
};

/// Dense per-channel temporal calibration, the TAFAS-style baseline:
///
///   y = x + tanh(alpha_c) * (A_c x + b_c)
///
/// with A_c [len x len], b_c [len]. Flat layout: A, then b, then alpha.
class TemporalGcm {
public:
    struct Tape {
        Tensor3 input;
        Tensor3 correction;  // A x + b, before the gate
    };

    TemporalGcm(std::size_t len, std::size_t channels, double gate_init = kDefaultGateInit);

    std::size_t length() const { return len_; }
    std::size_t channels() const { return channels_; }
    std::size_t param_count() const { return params_.size(); }

    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    double& matrix(std::size_t c, std::size_t r, std::size_t k) { return params_[(c * len_ + r) * len_ + k]; }
    double matrix(std::size_t c, std::size_t r, std::size_t k) const { return params_[(c * len_ + r) * len_ + k]; }
    double& bias(std::size_t c, std::size_t r) { return params_[bias_offset() + c * len_ + r]; }
    double bias(std::size_t c, std::size_t r) const { return params_[bias_offset() + c * len_ + r]; }
    double gate(std::size_t c) const { return params_[gate_offset() + c]; }
    void set_gate(std::size_t c, double v) { params_[gate_offset() + c] = v; }

    Tensor3 apply(const Tensor3& x, Tape* tape = nullptr) const;
    void backward(const Tape& tape, const Tensor3& grad_out, std::span<double> grad_params,
                  Tensor3* grad_input) const;

private:
    std::size_t bias_offset() const { return channels_ * len_ * len_; }
    std::size_t gate_offset() const { return bias_offset() + channels_ * len_; }

    std::size_t len_;
    std::size_t channels_;
    std::vector<double> params_;
};

using CalibrationModule = std::variant<FreqGcm, TemporalGcm>;
using CalibrationTape = std::variant<FreqGcm::Tape, TemporalGcm::Tape>;

std::span<double> module_params(CalibrationModule& m);
std::span<const double> module_params(const CalibrationModule& m);
Tensor3 module_apply(const CalibrationModule& m, const Tensor3& x, CalibrationTape* tape = nullptr);
void module_backward(const CalibrationModule& m, const CalibrationTape& tape, const Tensor3& grad_out,
                     std::span<double> grad_params, Tensor3* grad_input);

/// Same as FreqGcm::apply; named for the calibration operation itself.
Tensor3 calibrate(const FreqGcm& module, const Tensor3& x);

struct AdapterConfig {
    AdapterKind kind = AdapterKind::fac;
    bool use_input_calibration = true;
    double gate_init = kDefaultGateInit;
};

/// Calibration modules around a frozen forecaster plus their optimizer state.
/// Output-only mode is exactly "no input module".
struct AdapterState {
    AdapterConfig config;
    std::optional<CalibrationModule> input_module;
    CalibrationModule output_module;
    std::optional<AdamState> input_optimizer;
    AdamState output_optimizer;

    std::size_t param_count() const;
};

AdapterState make_adapter(const AdapterConfig& config, std::size_t C, std::size_t L, std::size_t H);

/// Intermediates of one adapter forward pass.
struct ForwardTape {
    Tensor3 raw_inputs;
    std::optional<CalibrationTape> input_tape;
    Tensor3 forecaster_inputs;  // calibrated look-back fed to the forecaster
    Tensor3 raw_forecast;       // forecaster output before output calibration
    CalibrationTape output_tape;
};

struct GradientBlock {
    std::optional<std::vector<double>> input;
    std::vector<double> output;
};

/// `source_seconds`, when given, accumulates wall time spent inside the
/// frozen forecaster.
std::pair<Tensor3, ForwardTape> adapter_forward(const AdapterState& state, const ForecasterModel& model,
                                                const Tensor3& inputs, double* source_seconds = nullptr);
Tensor3 adapter_predict(const AdapterState& state, const ForecasterModel& model, const Tensor3& inputs,
                        double* source_seconds = nullptr);

GradientBlock adapter_backward(const AdapterState& state, const ForecasterModel& model, const ForwardTape& tape,
                               const Tensor3& grad_prediction);

/// One Adam step on every module. Returns false (nothing changed) when any
/// gradient is non-finite.
bool apply_gradients(AdapterState& state, const GradientBlock& grads, const AdamHyper& hyper);

/// Trainable parameters: fac 4*C*(len/2+1) + C, temporal_gcm C*(len^2+len+1),
/// summed over the active modules.
std::size_t param_count(AdapterKind kind, std::size_t C, std::size_t L, std::size_t H, bool use_input);

/// Mean squared error and its gradient with respect to `pred`.
double mse_with_grad(const Tensor3& pred, const Tensor3& target, Tensor3& grad, double weight = 1.0);

std::string adapter_to_json(const AdapterState& s);
AdapterState adapter_from_json(const std::string& text);

}  // namespace fac
