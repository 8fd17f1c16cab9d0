#pragma once

#include <deque>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "srs/autodiff.hpp"
#include "srs/tensor.hpp"

namespace srs {

struct Param {
    std::string name;
    Tensor value;
    Tensor m;  // Adam first-moment estimate
    Tensor v;  // Adam second-moment estimate
};

/// Named trainable parameters with Adam moments and a step counter.
/// References returned by add()/at() stay valid for the store's lifetime.
class ParamStore {
public:
    Param& add(const std::string& name, Tensor init);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;

    /// Registration order (the deterministic iteration order for training).
    const std::deque<Param>& params() const { return params_; }
    std::deque<Param>& params() { return params_; }

    std::size_t count() const { return params_.size(); }
    int total_size() const;
    std::vector<std::string> names() const;  // registration order

    long long step = 0;  // optimizer step counter

private:
    std::deque<Param> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Gradients keyed by parameter name (ordered map: deterministic iteration).
using GradMap = std::map<std::string, Tensor>;

/// Binds parameters to requires-grad leaves on one tape, on demand, and
/// collects their gradients after backward().
class ParamBinding {
public:
    ParamBinding(Tape& tape, ParamStore& store) : tape_(&tape), store_(&store) {}

    Var get(const std::string& name);
    Var operator()(const std::string& name) { return get(name); }

    /// Adds d(loss)/d(param) for every bound parameter into `acc`.
    void add_grads_to(GradMap& acc) const;

private:
    Tape* tape_;
    ParamStore* store_;
    std::map<std::string, Var> bound_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update over all parameters. Parameters without an
/// entry in `grads` are treated as zero-gradient (moments still decay).
/// Throws TrainingFault naming the parameter on non-finite gradients/values.
void adam_step(ParamStore& store, const GradMap& grads, const AdamConfig& cfg);

/// Applies value -= lr * grad without touching moments (plain gradient
/// descent; used by line-search style tests).
void sgd_step(ParamStore& store, const GradMap& grads, double lr);

// ---------------------------------------------------------------------------
// Checkpoint container: magic "SRSCKPT\x01", u64 little-endian header length,
// JSON header {version, step, config, params:[{name, shape}] sorted by name},
// then per manifest entry the raw little-endian doubles of value, m, v.
// Round-trips bit-exactly.
// ---------------------------------------------------------------------------

struct Checkpoint {
    int version = 1;
    long long step = 0;
    nlohmann::json config;
    std::vector<Param> params;  // in manifest (name-sorted) order
};

void write_checkpoint(const std::string& path, const ParamStore& store,
                      const nlohmann::json& config);
Checkpoint read_checkpoint(const std::string& path);

/// Copies checkpoint tensors into an already-built store. The name sets and
/// shapes must match exactly; otherwise throws IoError describing the
/// mismatch.
void install_checkpoint(const Checkpoint& ck, ParamStore& store);

}  // namespace srs
