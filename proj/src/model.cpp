#include "msfl/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace msfl {

namespace {

void check_shapes(const ParamVector& params, const BatchView& batch) {
    if (params.values.size() != params.shape.param_count()) {
        throw std::invalid_argument("parameter vector does not match its shape");
    }
    if (batch.count <= 0) throw std::invalid_argument("empty batch");
    if (batch.feature_dim != params.shape.feature_dim) {
        throw std::invalid_argument("batch feature dimension mismatch");
    }
}

// Softmax cross-entropy pieces shared by loss and gradient. Writes the
// probability vector for one sample and returns its loss contribution.
double softmax_ce(std::span<const double> logits, int label, std::span<double> probs) {
    const int C = static_cast<int>(logits.size());
    double zmax = logits[0];
    for (int c = 1; c < C; ++c) zmax = std::max(zmax, logits[static_cast<std::size_t>(c)]);
    double sum = 0.0;
    for (int c = 0; c < C; ++c) {
        const double e = std::exp(logits[static_cast<std::size_t>(c)] - zmax);
        probs[static_cast<std::size_t>(c)] = e;
        sum += e;
    }
    for (int c = 0; c < C; ++c) probs[static_cast<std::size_t>(c)] /= sum;
    return std::log(sum) + zmax - logits[static_cast<std::size_t>(label)];
}

struct LogisticView {
    std::span<const double> W;  // C x d
    std::span<const double> b;  // C
};

LogisticView logistic_view(const ParamVector& p) {
    const std::size_t wd = static_cast<std::size_t>(p.shape.num_classes) *
                           static_cast<std::size_t>(p.shape.feature_dim);
    return {std::span(p.values).subspan(0, wd), std::span(p.values).subspan(wd)};
}

struct MlpView {
    std::span<const double> W1;  // H x d
    std::span<const double> b1;  // H
    std::span<const double> W2;  // C x H
    std::span<const double> b2;  // C
};

MlpView mlp_view(const ParamVector& p) {
    const std::size_t d = static_cast<std::size_t>(p.shape.feature_dim);
    const std::size_t h = static_cast<std::size_t>(p.shape.hidden);
    const std::size_t c = static_cast<std::size_t>(p.shape.num_classes);
    std::span<const double> v(p.values);
    return {v.subspan(0, h * d), v.subspan(h * d, h), v.subspan(h * d + h, c * h),
            v.subspan(h * d + h + c * h, c)};
}

// per_sample(x, label) adds one sample's gradient into grad_out and returns
// its loss; both get scaled by 1/count here.
template <typename PerSample>
double eval_batch(const BatchView& batch, std::span<double> grad_out,
                  PerSample per_sample) {
    double total = 0.0;
    for (int i = 0; i < batch.count; ++i) {
        const double* x = batch.features + static_cast<std::size_t>(i) *
                                               static_cast<std::size_t>(batch.feature_dim);
        total += per_sample(x, batch.labels[i]);
    }
    const double inv = 1.0 / batch.count;
    for (auto& g : grad_out) g *= inv;
    return total * inv;
}

double logistic_eval(const ParamVector& params, const BatchView& batch,
                     std::span<double> grad_out) {
    const auto view = logistic_view(params);
    const int C = params.shape.num_classes;
    const int d = params.shape.feature_dim;
    std::vector<double> logits(static_cast<std::size_t>(C));
    std::vector<double> probs(static_cast<std::size_t>(C));
    double* gW = grad_out.empty() ? nullptr : grad_out.data();
    double* gb = grad_out.empty() ? nullptr : grad_out.data() + static_cast<std::size_t>(C) * d;

    return eval_batch(batch, grad_out, [&](const double* x, int y) {
        for (int c = 0; c < C; ++c) {
            const double* w = view.W.data() + static_cast<std::size_t>(c) * d;
            double z = view.b[static_cast<std::size_t>(c)];
            for (int k = 0; k < d; ++k) z += w[k] * x[k];
            logits[static_cast<std::size_t>(c)] = z;
        }
        const double l = softmax_ce(logits, y, probs);
        if (gW) {
            for (int c = 0; c < C; ++c) {
                const double delta = probs[static_cast<std::size_t>(c)] - (c == y ? 1.0 : 0.0);
                double* gw = gW + static_cast<std::size_t>(c) * d;
                for (int k = 0; k < d; ++k) gw[k] += delta * x[k];
                gb[c] += delta;
            }
        }
        return l;
    });
}

double mlp_eval(const ParamVector& params, const BatchView& batch,
                std::span<double> grad_out) {
    const auto view = mlp_view(params);
    const int C = params.shape.num_classes;
    const int d = params.shape.feature_dim;
    const int H = params.shape.hidden;
    std::vector<double> hidden(static_cast<std::size_t>(H));
    std::vector<double> logits(static_cast<std::size_t>(C));
    std::vector<double> probs(static_cast<std::size_t>(C));
    std::vector<double> dhidden(static_cast<std::size_t>(H));

    const std::size_t o1 = static_cast<std::size_t>(H) * d;
    const std::size_t o2 = o1 + static_cast<std::size_t>(H);
    const std::size_t o3 = o2 + static_cast<std::size_t>(C) * H;
    double* gW1 = grad_out.empty() ? nullptr : grad_out.data();
    double* gb1 = grad_out.empty() ? nullptr : grad_out.data() + o1;
    double* gW2 = grad_out.empty() ? nullptr : grad_out.data() + o2;
    double* gb2 = grad_out.empty() ? nullptr : grad_out.data() + o3;

    return eval_batch(batch, grad_out, [&](const double* x, int y) {
        for (int j = 0; j < H; ++j) {
            const double* w = view.W1.data() + static_cast<std::size_t>(j) * d;
            double z = view.b1[static_cast<std::size_t>(j)];
            for (int k = 0; k < d; ++k) z += w[k] * x[k];
            hidden[static_cast<std::size_t>(j)] = std::tanh(z);
        }
        for (int c = 0; c < C; ++c) {
            const double* w = view.W2.data() + static_cast<std::size_t>(c) * H;
            double z = view.b2[static_cast<std::size_t>(c)];
            for (int j = 0; j < H; ++j) z += w[j] * hidden[static_cast<std::size_t>(j)];
            logits[static_cast<std::size_t>(c)] = z;
        }
        const double l = softmax_ce(logits, y, probs);
        if (gW1) {
            std::fill(dhidden.begin(), dhidden.end(), 0.0);
            for (int c = 0; c < C; ++c) {
                const double delta = probs[static_cast<std::size_t>(c)] - (c == y ? 1.0 : 0.0);
                const double* w = view.W2.data() + static_cast<std::size_t>(c) * H;
                double* gw = gW2 + static_cast<std::size_t>(c) * H;
                for (int j = 0; j < H; ++j) {
                    gw[j] += delta * hidden[static_cast<std::size_t>(j)];
                    dhidden[static_cast<std::size_t>(j)] += delta * w[j];
                }
                gb2[c] += delta;
            }
            for (int j = 0; j < H; ++j) {
                const double hj = hidden[static_cast<std::size_t>(j)];
                const double dz = dhidden[static_cast<std::size_t>(j)] * (1.0 - hj * hj);
                double* gw = gW1 + static_cast<std::size_t>(j) * d;
                for (int k = 0; k < d; ++k) gw[k] += dz * x[k];
                gb1[j] += dz;
            }
        }
        return l;
    });
}

double eval(const ParamVector& params, const BatchView& batch, std::span<double> grad_out) {
    check_shapes(params, batch);
    if (!grad_out.empty()) {
        if (grad_out.size() != params.values.size()) {
            throw std::invalid_argument("gradient buffer size mismatch");
        }
        std::fill(grad_out.begin(), grad_out.end(), 0.0);
    }
    return params.shape.kind == ModelKind::logistic ? logistic_eval(params, batch, grad_out)
                                                    : mlp_eval(params, batch, grad_out);
}

}  // namespace

std::size_t ModelSpec::param_count() const {
    const std::size_t d = static_cast<std::size_t>(feature_dim);
    const std::size_t c = static_cast<std::size_t>(num_classes);
    if (kind == ModelKind::logistic) return c * d + c;
    const std::size_t h = static_cast<std::size_t>(hidden);
    return h * d + h + c * h + c;
}

ParamVector zero_params(const ModelSpec& spec) {
    if (spec.feature_dim < 1 || spec.num_classes < 2 ||
        (spec.kind == ModelKind::mlp && spec.hidden < 1)) {
        throw std::invalid_argument("invalid model spec");
    }
    return {spec, std::vector<double>(spec.param_count(), 0.0)};
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    ParamVector p = zero_params(spec);
    if (spec.init_scale > 0.0) {
        RngStream rng(seed, StreamDomain::model_init);
        for (auto& v : p.values) v = spec.init_scale * rng.next_normal();
    }
    return p;
}

double loss(const ParamVector& params, BatchView batch) {
    return eval(params, batch, {});
}

void grad_into(const ParamVector& params, BatchView batch, std::span<double> out) {
    eval(params, batch, out);
}

double loss_and_grad(const ParamVector& params, BatchView batch, std::span<double> out) {
    return eval(params, batch, out);
}

ParamVector grad(const ParamVector& params, BatchView batch) {
    ParamVector g = zero_params(params.shape);
    eval(params, batch, g.values);
    return g;
}

namespace {

// Gathers an index subset into a contiguous buffer so the batch kernels run
// once per mini-batch.
struct GatheredBatch {
    std::vector<double> features;
    std::vector<int> labels;

    BatchView gather(const ClientDataset& data, std::span<const int> idx) {
        const std::size_t d = static_cast<std::size_t>(data.feature_dim);
        features.resize(idx.size() * d);
        labels.resize(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const double* src = data.row(static_cast<std::size_t>(idx[r]));
            std::copy(src, src + d, features.data() + r * d);
            labels[r] = data.labels[static_cast<std::size_t>(idx[r])];
        }
        return {features.data(), labels.data(), static_cast<int>(idx.size()),
                data.feature_dim};
    }
};

}  // namespace

double loss_indexed(const ParamVector& params, const ClientDataset& data,
                    std::span<const int> idx) {
    GatheredBatch scratch;
    return loss(params, scratch.gather(data, idx));
}

void grad_indexed_into(const ParamVector& params, const ClientDataset& data,
                       std::span<const int> idx, std::span<double> out) {
    GatheredBatch scratch;
    grad_into(params, scratch.gather(data, idx), out);
}

ParamVector sgd_epochs(ParamVector params, const ClientDataset& data, int epochs,
                       int batch_size, double eta_l, RngStream& shuffle_rng,
                       double* sigma_probe) {
    if (data.size() == 0) throw std::invalid_argument("sgd_epochs: empty dataset");
    if (epochs < 1) throw std::invalid_argument("sgd_epochs: need at least one epoch");
    if (eta_l < 0.0) throw std::invalid_argument("sgd_epochs: negative step size");
    const int n = static_cast<int>(data.size());
    const int bs = std::min(batch_size < 1 ? n : batch_size, n);

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> g(params.values.size());
    std::vector<double> gfull(params.values.size());
    if (sigma_probe) *sigma_probe = 0.0;

    for (int e = 0; e < epochs; ++e) {
        shuffle_rng.shuffle(order);
        for (int start = 0; start < n; start += bs) {
            const int count = std::min(bs, n - start);
            std::span<const int> idx(order.data() + start, static_cast<std::size_t>(count));
            if (count == n) {
                // Full-batch step: canonical sample order, so the step equals
                // the plain gradient exactly and the variance probe reads 0.
                grad_into(params, BatchView::all(data), g);
            } else {
                grad_indexed_into(params, data, idx, g);
            }
            if (sigma_probe) {
                grad_into(params, BatchView::all(data), gfull);
                double diff = 0.0;
                for (std::size_t k = 0; k < g.size(); ++k) {
                    const double d = g[k] - gfull[k];
                    diff += d * d;
                }
                *sigma_probe = std::max(*sigma_probe, diff);
            }
            for (std::size_t k = 0; k < g.size(); ++k) params.values[k] -= eta_l * g[k];
        }
    }
    return params;
}

double accuracy(const ParamVector& params, const ClientDataset& data) {
    if (data.size() == 0) return 0.0;
    const int C = params.shape.num_classes;
    const int d = params.shape.feature_dim;
    std::vector<double> logits(static_cast<std::size_t>(C));
    int hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double* x = data.row(i);
        if (params.shape.kind == ModelKind::logistic) {
            const auto view = logistic_view(params);
            for (int c = 0; c < C; ++c) {
                const double* w = view.W.data() + static_cast<std::size_t>(c) * d;
                double z = view.b[static_cast<std::size_t>(c)];
                for (int k = 0; k < d; ++k) z += w[k] * x[k];
                logits[static_cast<std::size_t>(c)] = z;
            }
        } else {
            const auto view = mlp_view(params);
            const int H = params.shape.hidden;
            std::vector<double> hidden(static_cast<std::size_t>(H));
            for (int j = 0; j < H; ++j) {
                const double* w = view.W1.data() + static_cast<std::size_t>(j) * d;
                double z = view.b1[static_cast<std::size_t>(j)];
                for (int k = 0; k < d; ++k) z += w[k] * x[k];
                hidden[static_cast<std::size_t>(j)] = std::tanh(z);
            }
            for (int c = 0; c < C; ++c) {
                const double* w = view.W2.data() + static_cast<std::size_t>(c) * H;
                double z = view.b2[static_cast<std::size_t>(c)];
                for (int j = 0; j < H; ++j) z += w[j] * hidden[static_cast<std::size_t>(j)];
                logits[static_cast<std::size_t>(c)] = z;
            }
        }
        const int pred = static_cast<int>(
            std::max_element(logits.begin(), logits.end()) - logits.begin());
        if (pred == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

nlohmann::json ParamVector::to_json() const {
    return {{"kind", to_string(shape.kind)},
            {"feature_dim", shape.feature_dim},
            {"num_classes", shape.num_classes},
            {"hidden", shape.hidden},
            {"values", values}};
}

ParamVector ParamVector::from_json(const nlohmann::json& j) {
    ParamVector p;
    p.shape.kind = model_kind_from_string(j.at("kind").get<std::string>());
    p.shape.feature_dim = j.at("feature_dim").get<int>();
    p.shape.num_classes = j.at("num_classes").get<int>();
    p.shape.hidden = j.at("hidden").get<int>();
    p.values = j.at("values").get<std::vector<double>>();
    if (p.values.size() != p.shape.param_count()) {
        throw std::invalid_argument("parameter payload does not match shape header");
    }
    return p;
}

std::string to_string(ModelKind kind) {
    return kind == ModelKind::logistic ? "logistic" : "mlp";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "logistic") return ModelKind::logistic;
    if (s == "mlp") return ModelKind::mlp;
    throw std::invalid_argument("unknown model kind: " + s);
}

}  // namespace msfl
