#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msfl/datagen.hpp"
#include "msfl/rng.hpp"

#include <nlohmann/json_fwd.hpp>

namespace msfl {

enum class ModelKind { logistic, mlp };

struct ModelSpec {
    ModelKind kind = ModelKind::logistic;
    int feature_dim = 0;
    int num_classes = 0;
    int hidden = 0;          // mlp only
    double init_scale = 0.0;

    std::size_t param_count() const;
    bool operator==(const ModelSpec&) const = default;
};

struct ParamVector {
    ModelSpec shape;
    std::vector<double> values;

    nlohmann::json to_json() const;
    static ParamVector from_json(const nlohmann::json& j);
};

// A contiguous run of samples; mini-batches index through a permutation
// instead, see sgd_epochs.
struct BatchView {
    const double* features = nullptr;
    const int* labels = nullptr;
    int count = 0;
    int feature_dim = 0;

    static BatchView all(const ClientDataset& data) {
        return {data.features.data(), data.labels.data(),
                static_cast<int>(data.size()), data.feature_dim};
    }
};

ParamVector zero_params(const ModelSpec& spec);
// Gaussian(0, init_scale^2) entries from the model-init stream.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Mean softmax cross-entropy over the batch.
double loss(const ParamVector& params, BatchView batch);
// Analytic gradient of `loss`. grad_into accumulates nothing; it overwrites.
void grad_into(const ParamVector& params, BatchView batch, std::span<double> out);
ParamVector grad(const ParamVector& params, BatchView batch);
// Single pass computing both.
double loss_and_grad(const ParamVector& params, BatchView batch, std::span<double> out);

// Loss and gradient of the mean cross-entropy over an index subset.
double loss_indexed(const ParamVector& params, const ClientDataset& data,
                    std::span<const int> idx);
void grad_indexed_into(const ParamVector& params, const ClientDataset& data,
                       std::span<const int> idx, std::span<double> out);

// E shuffled passes of mini-batch SGD at step size eta_l. When sigma_probe is
// non-null it receives max over steps of ||grad(batch) - grad(full shard)||^2,
// evaluated at the pre-step iterate.
ParamVector sgd_epochs(ParamVector params, const ClientDataset& data, int epochs,
                       int batch_size, double eta_l, RngStream& shuffle_rng,
                       double* sigma_probe = nullptr);

double accuracy(const ParamVector& params, const ClientDataset& data);

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

}  // namespace msfl
