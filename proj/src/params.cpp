#include "srs/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "srs/errors.hpp"

namespace srs {

Param& ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw TrainingFault("duplicate parameter name: " + name);
    Param p;
    p.name = name;
    p.m = Tensor::zeros(init.shape());
    p.v = Tensor::zeros(init.shape());
    p.value = std::move(init);
    params_.push_back(std::move(p));
    index_[name] = params_.size() - 1;
    return params_.back();
}

Param& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw TrainingFault("unknown parameter: " + name);
    return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw TrainingFault("unknown parameter: " + name);
    return params_[it->second];
}

int ParamStore::total_size() const {
    int n = 0;
    for (const Param& p : params_) n += p.value.size();
    return n;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const Param& p : params_) out.push_back(p.name);
    return out;
}

Var ParamBinding::get(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v = tape_->leaf(store_->at(name).value, true);
    bound_.emplace(name, v);
    return v;
}

void ParamBinding::add_grads_to(GradMap& acc) const {
    for (const auto& [name, var] : bound_) {
        if (!tape_->has_grad(var.id())) continue;
        const Tensor& g = tape_->grad_buf(var.id());
        auto it = acc.find(name);
        if (it == acc.end()) {
            acc.emplace(name, g);
        } else {
            Tensor& dst = it->second;
            for (int i = 0; i < g.size(); ++i) dst[i] += g[i];
        }
    }
}

void adam_step(ParamStore& store, const GradMap& grads, const AdamConfig& cfg) {
    store.step += 1;
    const double t = static_cast<double>(store.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (Param& p : store.params()) {
        auto it = grads.find(p.name);
        const Tensor* g = it == grads.end() ? nullptr : &it->second;
        if (g != nullptr) {
            if (!g->same_shape(p.value))
                throw TrainingFault("gradient shape mismatch for parameter: " + p.name);
            if (!g->all_finite())
                throw TrainingFault("non-finite gradient for parameter: " + p.name);
        }
        for (int i = 0; i < p.value.size(); ++i) {
            const double gi = g ? (*g)[i] : 0.0;
            p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * gi;
            p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = p.m[i] / bc1;
            const double vhat = p.v[i] / bc2;
            p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        if (!p.value.all_finite())
            throw TrainingFault("non-finite value after update for parameter: " + p.name);
    }
}

void sgd_step(ParamStore& store, const GradMap& grads, double lr) {
    for (Param& p : store.params()) {
        auto it = grads.find(p.name);
        if (it == grads.end()) continue;
        const Tensor& g = it->second;
        if (!g.same_shape(p.value))
            throw TrainingFault("gradient shape mismatch for parameter: " + p.name);
        for (int i = 0; i < p.value.size(); ++i) p.value[i] -= lr * g[i];
    }
}

namespace {

constexpr char kMagic[8] = {'S', 'R', 'S', 'C', 'K', 'P', 'T', '\x01'};

void write_doubles(std::ofstream& out, const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.size())));
}

void read_doubles(std::ifstream& in, Tensor& t) {
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.size())));
    if (!in) throw IoError("checkpoint truncated while reading tensor data");
}

}  // namespace

void write_checkpoint(const std::string& path, const ParamStore& store,
                      const nlohmann::json& config) {
    std::vector<const Param*> manifest;
    manifest.reserve(store.count());
    for (const Param& p : store.params()) manifest.push_back(&p);
    std::sort(manifest.begin(), manifest.end(),
              [](const Param* a, const Param* b) { return a->name < b->name; });

    nlohmann::json header;
    header["version"] = 1;
    header["step"] = store.step;
    header["config"] = config;
    nlohmann::json plist = nlohmann::json::array();
    for (const Param* p : manifest)
        plist.push_back({{"name", p->name}, {"shape", p->value.shape()}});
    header["params"] = std::move(plist);
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, 8);
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const Param* p : manifest) {
        write_doubles(out, p->value);
        write_doubles(out, p->m);
        write_doubles(out, p->v);
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("not a checkpoint file (bad magic): " + path);
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    if (!in) throw IoError("checkpoint truncated (header length): " + path);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw IoError("checkpoint truncated (header): " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    Checkpoint ck;
    ck.version = header.at("version").get<int>();
    if (ck.version != 1)
        throw IoError("unsupported checkpoint version " + std::to_string(ck.version));
    ck.step = header.at("step").get<long long>();
    ck.config = header.value("config", nlohmann::json::object());
    for (const auto& e : header.at("params")) {
        Param p;
        p.name = e.at("name").get<std::string>();
        const std::vector<int> shape = e.at("shape").get<std::vector<int>>();
        p.value = Tensor::zeros(shape);
        p.m = Tensor::zeros(shape);
        p.v = Tensor::zeros(shape);
        read_doubles(in, p.value);
        read_doubles(in, p.m);
        read_doubles(in, p.v);
        ck.params.push_back(std::move(p));
    }
    return ck;
}

void install_checkpoint(const Checkpoint& ck, ParamStore& store) {
    if (ck.params.size() != store.count())
        throw IoError("checkpoint/model mismatch: " + std::to_string(ck.params.size()) +
                      " checkpoint parameters vs " + std::to_string(store.count()) + " in model");
    for (const Param& src : ck.params) {
        if (!store.has(src.name))
            throw IoError("checkpoint/model mismatch: model lacks parameter " + src.name);
        Param& dst = store.at(src.name);
        if (!src.value.same_shape(dst.value))
            throw IoError("checkpoint/model mismatch: shape of " + src.name + " is " +
                          src.value.shape_str() + " in checkpoint vs " + dst.value.shape_str());
        dst.value = src.value;
        dst.m = src.m;
        dst.v = src.v;
    }
    store.step = ck.step;
}

}  // namespace srs
