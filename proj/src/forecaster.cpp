#include "fac/forecaster.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "fac/optim.hpp"
#include "json.hpp"

namespace fac {

namespace {

constexpr int kBlobVersion = 1;

}  // namespace

const char* to_string(ForecasterKind k) {
    switch (k) {
        case ForecasterKind::naive: return "naive";
        case ForecasterKind::ols: return "ols";
        case ForecasterKind::dlinear: return "dlinear";
    }
    return "?";
}

ForecasterKind forecaster_kind_from_string(const std::string& s) {
    if (s == "naive") return ForecasterKind::naive;
    if (s == "ols") return ForecasterKind::ols;
    if (s == "dlinear") return ForecasterKind::dlinear;
    throw ValidationError("unknown forecaster kind '" + s + "' (expected naive, ols or dlinear)");
}

void LinearMap::apply(std::size_t c, std::span<const double> x, std::span<double> out) const {
    for (std::size_t h = 0; h < horizon; ++h) {
        const double* row = &weight[(c * horizon + h) * lookback];
        double acc = bias[c * horizon + h];
        for (std::size_t l = 0; l < lookback; ++l) acc += row[l] * x[l];
        out[h] += acc;
    }
}

void LinearMap::apply_transpose(std::size_t c, std::span<const double> g, std::span<double> gx) const {
    for (std::size_t h = 0; h < horizon; ++h) {
        const double* row = &weight[(c * horizon + h) * lookback];
        const double gh = g[h];
        for (std::size_t l = 0; l < lookback; ++l) gx[l] += row[l] * gh;
    }
}

ForecasterModel ForecasterModel::naive(std::size_t L, std::size_t H, std::size_t C) {
    ForecasterModel m;
    m.kind_ = ForecasterKind::naive;
    m.L_ = L;
    m.H_ = H;
    m.C_ = C;
    return m;
}

ForecasterModel ForecasterModel::ols(LinearMap map) {
    ForecasterModel m;
    m.kind_ = ForecasterKind::ols;
    m.L_ = map.lookback;
    m.H_ = map.horizon;
    m.C_ = map.channels;
    m.primary_ = std::move(map);
    return m;
}

ForecasterModel ForecasterModel::dlinear(LinearMap trend, LinearMap remainder, std::size_t kernel) {
    if (kernel == 0 || kernel % 2 == 0) throw ValidationError("dlinear kernel must be odd and >= 1");
    if (trend.lookback != remainder.lookback || trend.horizon != remainder.horizon ||
        trend.channels != remainder.channels)
        throw ShapeError("dlinear branches disagree in shape");
    ForecasterModel m;
    m.kind_ = ForecasterKind::dlinear;
    m.L_ = trend.lookback;
    m.H_ = trend.horizon;
    m.C_ = trend.channels;
    m.kernel_ = kernel;
    m.trend_ = std::move(trend);
    m.primary_ = std::move(remainder);
    return m;
}

void ForecasterModel::check_input(const Tensor3& inputs, const char* where) const {
    if (inputs.steps != L_ || inputs.channels != C_) {
        throw ShapeError(std::string(where) + ": expected [B x " + std::to_string(L_) + " x " +
                         std::to_string(C_) + "] input, got [" + std::to_string(inputs.count) + " x " +
                         std::to_string(inputs.steps) + " x " + std::to_string(inputs.channels) + "]");
    }
}

void ForecasterModel::moving_average(std::span<const double> x, std::size_t kernel, std::span<double> out) {
    const long n = static_cast<long>(x.size());
    const long half = static_cast<long>(kernel / 2);
    const double inv = 1.0 / static_cast<double>(kernel);
    for (long i = 0; i < n; ++i) {
        double acc = 0.0;
        for (long d = -half; d <= half; ++d) acc += x[static_cast<std::size_t>(std::clamp(i + d, 0L, n - 1))];
        out[static_cast<std::size_t>(i)] = acc * inv;
    }
}

void ForecasterModel::moving_average_transpose(std::span<const double> g, std::size_t kernel,
                                               std::span<double> gx) {
    const long n = static_cast<long>(g.size());
    const long half = static_cast<long>(kernel / 2);
    const double inv = 1.0 / static_cast<double>(kernel);
    for (long i = 0; i < n; ++i) {
        const double gi = g[static_cast<std::size_t>(i)] * inv;
        for (long d = -half; d <= half; ++d) gx[static_cast<std::size_t>(std::clamp(i + d, 0L, n - 1))] += gi;
    }
}

Tensor3 ForecasterModel::forward(const Tensor3& inputs) const {
    check_input(inputs, "forward");
    Tensor3 out(inputs.count, H_, C_);
    std::vector<double> x(L_), trend(L_), rem(L_), y(H_);
    for (std::size_t i = 0; i < inputs.count; ++i) {
        for (std::size_t c = 0; c < C_; ++c) {
            gather_channel(inputs, i, c, x);
            std::fill(y.begin(), y.end(), 0.0);
            switch (kind_) {
                case ForecasterKind::naive:
                    std::fill(y.begin(), y.end(), x[L_ - 1]);
                    break;
                case ForecasterKind::ols:
                    primary_.apply(c, x, y);
                    break;
                case ForecasterKind::dlinear:
                    moving_average(x, kernel_, trend);
                    for (std::size_t l = 0; l < L_; ++l) rem[l] = x[l] - trend[l];
                    trend_.apply(c, trend, y);
                    primary_.apply(c, rem, y);
                    break;
            }
            scatter_channel(out, i, c, y);
        }
    }
    return out;
}

Tensor3 ForecasterModel::remainder_branch(const Tensor3& inputs) const {
    if (kind_ != ForecasterKind::dlinear) throw ValidationError("remainder_branch is only defined for dlinear");
    check_input(inputs, "remainder_branch");
    Tensor3 out(inputs.count, H_, C_);
    std::vector<double> x(L_), trend(L_), rem(L_), y(H_);
    for (std::size_t i = 0; i < inputs.count; ++i)
        for (std::size_t c = 0; c < C_; ++c) {
            gather_channel(inputs, i, c, x);
            moving_average(x, kernel_, trend);
            for (std::size_t l = 0; l < L_; ++l) rem[l] = x[l] - trend[l];
            std::fill(y.begin(), y.end(), 0.0);
            primary_.apply(c, rem, y);
            scatter_channel(out, i, c, y);
        }
    return out;
}

Tensor3 ForecasterModel::vjp(const Tensor3& inputs, const Tensor3& grad_out) const {
    check_input(inputs, "vjp");
    if (grad_out.count != inputs.count || grad_out.steps != H_ || grad_out.channels != C_)
        throw ShapeError("vjp: grad_out shape does not match forward output");
    Tensor3 gx(inputs.count, L_, C_);
    std::vector<double> g(H_), gl(L_), gt(L_), gr(L_);
    for (std::size_t i = 0; i < inputs.count; ++i) {
        for (std::size_t c = 0; c < C_; ++c) {
            gather_channel(grad_out, i, c, g);
            std::fill(gl.begin(), gl.end(), 0.0);
            switch (kind_) {
                case ForecasterKind::naive:
                    gl[L_ - 1] = std::accumulate(g.begin(), g.end(), 0.0);
                    break;
                case ForecasterKind::ols:
                    primary_.apply_transpose(c, g, gl);
                    break;
                case ForecasterKind::dlinear:
                    // y = Wt*MA(x) + Wr*(x - MA(x))  =>  gx = Wr^T g + MA^T (Wt^T g - Wr^T g)
                    std::fill(gt.begin(), gt.end(), 0.0);
                    std::fill(gr.begin(), gr.end(), 0.0);
                    trend_.apply_transpose(c, g, gt);
                    primary_.apply_transpose(c, g, gr);
                    for (std::size_t l = 0; l < L_; ++l) {
                        gl[l] = gr[l];
                        gt[l] -= gr[l];
                    }
                    moving_average_transpose(gt, kernel_, gl);
                    break;
            }
            scatter_channel(gx, i, c, gl);
        }
    }
    return gx;
}

double mse(const Tensor3& a, const Tensor3& b) {
    require_same_shape(a, b, "mse");
    if (a.size() == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    return acc / static_cast<double>(a.size());
}

namespace {

// Centered ridge solve with an unpenalized intercept: returns W [L x H], b [H].
std::pair<Eigen::MatrixXd, Eigen::RowVectorXd> solve_ridge(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                                           double ridge, const std::string& label) {
    const Eigen::RowVectorXd xm = X.colwise().mean();
    const Eigen::RowVectorXd ym = Y.colwise().mean();
    const Eigen::MatrixXd Xc = X.rowwise() - xm;
    const Eigen::MatrixXd Yc = Y.rowwise() - ym;
    Eigen::MatrixXd A = Xc.transpose() * Xc;
    A.diagonal().array() += ridge;
    if (ridge == 0.0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = std::max(eig.eigenvalues().maxCoeff(), 1e-300);
        if (lo <= 1e-12 * hi) throw NumericalError("fit_ols: normal matrix is singular for " + label + "; use ridge > 0");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success)
        throw NumericalError("fit_ols: factorization failed for " + label + "; use ridge > 0");
    Eigen::MatrixXd W = llt.solve(Xc.transpose() * Yc);
    Eigen::RowVectorXd b = ym - xm * W;
    return {std::move(W), std::move(b)};
}

}  // namespace

const char* to_string(OlsVariant v) {
    switch (v) {
        case OlsVariant::per_channel: return "per_channel";
        case OlsVariant::shared: return "shared";
        case OlsVariant::shared_centered: return "shared_centered";
    }
    return "?";
}

OlsVariant ols_variant_from_string(const std::string& s) {
    if (s == "per_channel") return OlsVariant::per_channel;
    if (s == "shared") return OlsVariant::shared;
    if (s == "shared_centered") return OlsVariant::shared_centered;
    throw ValidationError("unknown OLS variant '" + s + "' (expected per_channel, shared or shared_centered)");
}

ForecasterModel fit_ols_pairs(const Tensor3& inputs, const Tensor3& targets, double ridge, OlsVariant variant) {
    if (ridge < 0.0) throw ValidationError("ridge must be >= 0");
    if (inputs.count == 0 || inputs.count != targets.count || inputs.channels != targets.channels)
        throw ShapeError("fit_ols: need at least one (input, target) pair with matching channels");
    const std::size_t N = inputs.count, L = inputs.steps, H = targets.steps, C = inputs.channels;
    LinearMap map(C, L, H);
    auto store = [&](std::size_t c, const Eigen::MatrixXd& W, const Eigen::RowVectorXd& b) {
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t l = 0; l < L; ++l) map.w(c, h, l) = W(l, h);
            map.b(c, h) = b(h);
        }
    };
    if (variant == OlsVariant::per_channel) {
        Eigen::MatrixXd X(N, L), Y(N, H);
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t i = 0; i < N; ++i) {
                for (std::size_t l = 0; l < L; ++l) X(i, l) = inputs(i, l, c);
                for (std::size_t h = 0; h < H; ++h) Y(i, h) = targets(i, h, c);
            }
            const auto [W, b] = solve_ridge(X, Y, ridge, "channel " + std::to_string(c));
            store(c, W, b);
        }
    } else {
        const bool center = variant == OlsVariant::shared_centered;
        Eigen::MatrixXd X(N * C, L), Y(N * C, H);
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < N; ++i) {
                double mu = 0.0;
                if (center) {
                    for (std::size_t l = 0; l < L; ++l) mu += inputs(i, l, c);
                    mu /= static_cast<double>(L);
                }
                const auto r = static_cast<Eigen::Index>(c * N + i);
                for (std::size_t l = 0; l < L; ++l) X(r, l) = inputs(i, l, c) - mu;
                for (std::size_t h = 0; h < H; ++h) Y(r, h) = targets(i, h, c) - mu;
            }
        auto [W, b] = solve_ridge(X, Y, ridge, "shared channels");
        if (center) {
            // y = W'(x - mean(x)) + b + mean(x) folded into one affine map
            const Eigen::RowVectorXd colsum = W.colwise().sum();
            W.rowwise() -= colsum / static_cast<double>(L);
            W.array() += 1.0 / static_cast<double>(L);
        }
        for (std::size_t c = 0; c < C; ++c) store(c, W, b);
    }
    ForecasterModel m = ForecasterModel::ols(std::move(map));
    m.train_loss = mse(m.forward(inputs), targets);
    return m;
}

ForecasterModel fit_ols(const TimeSeriesDataset& ds, std::size_t L, std::size_t H, double ridge, OlsVariant variant) {
    auto [x, y] = stack_windows(ds, Region::train, L, H);
    if (x.count == 0) throw LengthError("train region yields no (input, target) pair for L and H");
    ForecasterModel m = fit_ols_pairs(x, y, ridge, variant);
    auto [vx, vy] = stack_windows(ds, Region::val, L, H);
    if (vx.count > 0) m.val_loss = mse(m.forward(vx), vy);
    return m;
}

namespace {

struct DLinearParams {
    LinearMap trend;
    LinearMap rem;
};

// Gradient of mean squared error over a batch of windows for both branches.
double dlinear_batch_grad(const ForecasterModel& model, const Tensor3& x, const Tensor3& y,
                          std::span<const std::size_t> rows, DLinearParams& grad) {
    const std::size_t L = model.lookback(), H = model.horizon(), C = model.channels(), K = model.kernel();
    std::fill(grad.trend.weight.begin(), grad.trend.weight.end(), 0.0);
    std::fill(grad.trend.bias.begin(), grad.trend.bias.end(), 0.0);
    std::fill(grad.rem.weight.begin(), grad.rem.weight.end(), 0.0);
    std::fill(grad.rem.bias.begin(), grad.rem.bias.end(), 0.0);
    const double scale = 2.0 / static_cast<double>(rows.size() * H * C);
    std::vector<double> xv(L), tr(L), rm(L), out(H);
    double loss = 0.0;
    for (std::size_t r : rows) {
        for (std::size_t c = 0; c < C; ++c) {
            gather_channel(x, r, c, xv);
            ForecasterModel::moving_average(xv, K, tr);
            for (std::size_t l = 0; l < L; ++l) rm[l] = xv[l] - tr[l];
            std::fill(out.begin(), out.end(), 0.0);
            model.trend().apply(c, tr, out);
            model.primary().apply(c, rm, out);
            for (std::size_t h = 0; h < H; ++h) {
                const double e = out[h] - y(r, h, c);
                loss += e * e;
                const double g = scale * e;
                grad.trend.b(c, h) += g;
                grad.rem.b(c, h) += g;
                double* wt = &grad.trend.weight[(c * H + h) * L];
                double* wr = &grad.rem.weight[(c * H + h) * L];
                for (std::size_t l = 0; l < L; ++l) {
                    wt[l] += g * tr[l];
                    wr[l] += g * rm[l];
                }
            }
        }
    }
    return loss / static_cast<double>(rows.size() * H * C);
}

}  // namespace

ForecasterModel fit_dlinear_pairs(const Tensor3& train_x, const Tensor3& train_y, const Tensor3& val_x,
                                  const Tensor3& val_y, const DLinearOptions& opt) {
    if (opt.kernel == 0 || opt.kernel % 2 == 0) throw ValidationError("dlinear kernel must be odd and >= 1");
    if (train_x.count == 0 || train_x.count != train_y.count) throw ShapeError("fit_dlinear: no training pairs");
    if (opt.batch_size == 0) throw ValidationError("fit_dlinear: batch size must be >= 1");
    const std::size_t L = train_x.steps, H = train_y.steps, C = train_x.channels;

    // Both branches start as the window mean, the usual DLinear initialization.
    const double w0 = 1.0 / static_cast<double>(L);
    ForecasterModel model = ForecasterModel::dlinear(LinearMap(C, L, H, w0), LinearMap(C, L, H, w0), opt.kernel);
    DLinearParams grad{LinearMap(C, L, H), LinearMap(C, L, H)};

    const std::size_t n_params = 2 * (C * H * L + C * H);
    AdamState state(n_params);
    AdamHyper hyper;
    hyper.lr = opt.lr;
    std::vector<double> flat(n_params), gflat(n_params);
    auto pack = [](const LinearMap& a, const LinearMap& b, std::vector<double>& out) {
        auto it = std::copy(a.weight.begin(), a.weight.end(), out.begin());
        it = std::copy(a.bias.begin(), a.bias.end(), it);
        it = std::copy(b.weight.begin(), b.weight.end(), it);
        std::copy(b.bias.begin(), b.bias.end(), it);
    };
    auto unpack = [](const std::vector<double>& in, LinearMap& a, LinearMap& b) {
        auto it = in.begin();
        std::copy_n(it, a.weight.size(), a.weight.begin());
        it += static_cast<long>(a.weight.size());
        std::copy_n(it, a.bias.size(), a.bias.begin());
        it += static_cast<long>(a.bias.size());
        std::copy_n(it, b.weight.size(), b.weight.begin());
        it += static_cast<long>(b.weight.size());
        std::copy_n(it, b.bias.size(), b.bias.begin());
    };

    const bool has_val = val_x.count > 0;
    ForecasterModel best = model;
    double best_val = has_val ? mse(model.forward(val_x), val_y) : std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    std::mt19937_64 rng(opt.seed);
    std::vector<std::size_t> order(train_x.count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t stop = std::min(order.size(), start + opt.batch_size);
            const double loss =
                dlinear_batch_grad(model, train_x, train_y, std::span(order).subspan(start, stop - start), grad);
            if (!std::isfinite(loss)) throw NumericalError("fit_dlinear: training loss diverged (NaN/inf)");
            LinearMap trend = model.trend();
            LinearMap rem = model.primary();
            pack(trend, rem, flat);
            pack(grad.trend, grad.rem, gflat);
            if (!adam_step(flat, gflat, state, hyper))
                throw NumericalError("fit_dlinear: non-finite gradient during training");
            unpack(flat, trend, rem);
            model = ForecasterModel::dlinear(std::move(trend), std::move(rem), opt.kernel);
        }
        if (has_val) {
            const double v = mse(model.forward(val_x), val_y);
            if (!std::isfinite(v)) throw NumericalError("fit_dlinear: validation loss diverged (NaN/inf)");
            if (v < best_val) {
                best_val = v;
                best = model;
                since_best = 0;
            } else if (++since_best >= opt.patience) {
                break;
            }
        } else {
            best = model;
        }
    }
    best.train_loss = mse(best.forward(train_x), train_y);
    best.val_loss = has_val ? best_val : 0.0;
    return best;
}

ForecasterModel fit_dlinear(const TimeSeriesDataset& ds, std::size_t L, std::size_t H, const DLinearOptions& opt) {
    auto [x, y] = stack_windows(ds, Region::train, L, H);
    if (x.count == 0) throw LengthError("train region yields no (input, target) pair for L and H");
    auto [vx, vy] = stack_windows(ds, Region::val, L, H);
    return fit_dlinear_pairs(x, y, vx, vy, opt);
}

namespace {

nlohmann::json map_to_json(const LinearMap& m) {
    return {{"weight", m.weight}, {"bias", m.bias}};
}

LinearMap map_from_json(const nlohmann::json& j, std::size_t C, std::size_t L, std::size_t H) {
    LinearMap m(C, L, H);
    auto w = j.at("weight").get<std::vector<double>>();
    auto b = j.at("bias").get<std::vector<double>>();
    if (w.size() != m.weight.size() || b.size() != m.bias.size())
        throw ValidationError("forecaster blob: weight array sizes do not match declared shapes");
    m.weight = std::move(w);
    m.bias = std::move(b);
    return m;
}

}  // namespace

std::string forecaster_to_json(const ForecasterModel& m) {
    nlohmann::json j;
    j["format"] = "fac-forecaster";
    j["version"] = kBlobVersion;
    j["kind"] = to_string(m.kind());
    j["lookback"] = m.lookback();
    j["horizon"] = m.horizon();
    j["channels"] = m.channels();
    j["kernel"] = m.kernel();
    j["train_loss"] = m.train_loss;
    j["val_loss"] = m.val_loss;
    if (m.kind() == ForecasterKind::ols) j["map"] = map_to_json(m.primary());
    if (m.kind() == ForecasterKind::dlinear) {
        j["trend"] = map_to_json(m.trend());
        j["remainder"] = map_to_json(m.primary());
    }
    return j.dump();
}

ForecasterModel forecaster_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("forecaster blob: ") + e.what());
    }
    if (j.value("format", "") != "fac-forecaster") throw ValidationError("forecaster blob: wrong format tag");
    if (!j.contains("version")) throw ValidationError("forecaster blob: missing version");
    if (j.at("version").get<int>() != kBlobVersion)
        throw ValidationError("forecaster blob: unsupported version " + j.at("version").dump());
    const auto kind = forecaster_kind_from_string(j.at("kind").get<std::string>());
    const auto L = j.at("lookback").get<std::size_t>();
    const auto H = j.at("horizon").get<std::size_t>();
    const auto C = j.at("channels").get<std::size_t>();
    ForecasterModel m;
    switch (kind) {
        case ForecasterKind::naive: m = ForecasterModel::naive(L, H, C); break;
        case ForecasterKind::ols: m = ForecasterModel::ols(map_from_json(j.at("map"), C, L, H)); break;
        case ForecasterKind::dlinear:
            m = ForecasterModel::dlinear(map_from_json(j.at("trend"), C, L, H),
                                         map_from_json(j.at("remainder"), C, L, H),
                                         j.at("kernel").get<std::size_t>());
            break;
    }
    m.train_loss = j.value("train_loss", 0.0);
    m.val_loss = j.value("val_loss", 0.0);
    return m;
}

void save_forecaster(const ForecasterModel& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << forecaster_to_json(m) << '\n';
}

ForecasterModel load_forecaster(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return forecaster_from_json(ss.str());
}

}  // namespace fac
