#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fac/tensor.hpp"
#include "fac/timeseries.hpp"

namespace fac {

enum class ForecasterKind { naive, ols, dlinear };

const char* to_string(ForecasterKind k);
ForecasterKind forecaster_kind_from_string(const std::string& s);

/// Per-channel affine map look-back [L] -> horizon [H].
struct LinearMap {
    std::size_t channels = 0;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::vector<double> weight;  // [C x H x L]
    std::vector<double> bias;    // [C x H]

    LinearMap() = default;
    LinearMap(std::size_t C, std::size_t L, std::size_t H, double w0 = 0.0)
        : channels(C), lookback(L), horizon(H), weight(C * H * L, w0), bias(C * H, 0.0) {}

    double& w(std::size_t c, std::size_t h, std::size_t l) { return weight[(c * horizon + h) * lookback + l]; }
    double w(std::size_t c, std::size_t h, std::size_t l) const { return weight[(c * horizon + h) * lookback + l]; }
    double& b(std::size_t c, std::size_t h) { return bias[c * horizon + h]; }
    double b(std::size_t c, std::size_t h) const { return bias[c * horizon + h]; }

    /// out[h] += b[h] + sum_l w[h][l] * x[l]
    void apply(std::size_t c, std::span<const double> x, std::span<double> out) const;
    /// gx[l] += sum_h w[h][l] * g[h]
    void apply_transpose(std::size_t c, std::span<const double> g, std::span<double> gx) const;
};

/// Frozen source forecaster. Every supported kind is affine in its input and
/// channel-independent, so the vector-Jacobian product ignores the input.
class ForecasterModel {
public:
    ForecasterModel() = default;

    static ForecasterModel naive(std::size_t L, std::size_t H, std::size_t C);
    static ForecasterModel ols(LinearMap map);
    static ForecasterModel dlinear(LinearMap trend, LinearMap remainder, std::size_t kernel);

    ForecasterKind kind() const { return kind_; }
    std::size_t lookback() const { return L_; }
    std::size_t horizon() const { return H_; }
    std::size_t channels() const { return C_; }
    std::size_t kernel() const { return kernel_; }
    const LinearMap& primary() const { return primary_; }
    const LinearMap& trend() const { return trend_; }

    double train_loss = 0.0;
    double val_loss = 0.0;

    /// [B x L x C] -> [B x H x C]
    Tensor3 forward(const Tensor3& inputs) const;
    /// d<forward(inputs), grad_out>/d inputs, [B x L x C]
    Tensor3 vjp(const Tensor3& inputs, const Tensor3& grad_out) const;

    /// Centered moving average with edge replication, length preserved.
    static void moving_average(std::span<const double> x, std::size_t kernel, std::span<double> out);
    static void moving_average_transpose(std::span<const double> g, std::size_t kernel, std::span<double> gx);

    /// Output of the remainder (seasonal) branch alone, dlinear only.
    Tensor3 remainder_branch(const Tensor3& inputs) const;

private:
    void check_input(const Tensor3& inputs, const char* where) const;

    ForecasterKind kind_ = ForecasterKind::naive;
    std::size_t L_ = 0, H_ = 0, C_ = 0;
    std::size_t kernel_ = 1;
    LinearMap primary_;  // ols map, or dlinear remainder branch
    LinearMap trend_;    // dlinear trend branch
};

/// per_channel: one ridge regression per channel.
/// shared: one map fitted on the windows of every channel.
/// shared_centered: shared, on inputs and targets minus the input-window
/// mean, which is added back at prediction time (still affine).
enum class OlsVariant { per_channel, shared, shared_centered };

const char* to_string(OlsVariant v);
OlsVariant ols_variant_from_string(const std::string& s);

/// Ridge regression with an unpenalized intercept.
ForecasterModel fit_ols_pairs(const Tensor3& inputs, const Tensor3& targets, double ridge = 1e-4,
                              OlsVariant variant = OlsVariant::shared_centered);
ForecasterModel fit_ols(const TimeSeriesDataset& ds, std::size_t L, std::size_t H, double ridge = 1e-4,
                        OlsVariant variant = OlsVariant::shared_centered);

struct DLinearOptions {
    std::size_t kernel = 25;
    std::size_t epochs = 10;
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t patience = 3;
    std::uint64_t seed = 2024;
};

ForecasterModel fit_dlinear_pairs(const Tensor3& train_x, const Tensor3& train_y, const Tensor3& val_x,
                                  const Tensor3& val_y, const DLinearOptions& opt);
ForecasterModel fit_dlinear(const TimeSeriesDataset& ds, std::size_t L, std::size_t H, const DLinearOptions& opt);

double mse(const Tensor3& a, const Tensor3& b);

// Versioned JSON blob: kind, shapes and flat weight arrays.
std::string forecaster_to_json(const ForecasterModel& m);
ForecasterModel forecaster_from_json(const std::string& text);
void save_forecaster(const ForecasterModel& m, const std::filesystem::path& path);
ForecasterModel load_forecaster(const std::filesystem::path& path);

}  // namespace fac
