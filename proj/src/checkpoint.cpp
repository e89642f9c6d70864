#include "uqst/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace uqst::checkpoint {

namespace {

using nlohmann::json;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xFF;
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xFF;
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(os, bits);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& is) {
    std::uint64_t bits = read_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

json model_cfg_to_json(const model::ModelConfig& c) {
    json j;
    j["input_len"] = c.input_len;
    j["horizon"] = c.horizon;
    j["cheb_order"] = c.cheb_order;
    j["mdgcn_hidden"] = c.mdgcn_hidden;
    j["embed_dim"] = c.embed_dim;
    j["itcn_blocks"] = c.itcn_blocks;
    j["itcn_kernel"] = c.itcn_kernel;
    j["channels_per_var"] = c.channels_per_var;
    j["dropout"] = c.dropout;
    j["mpp_conv_channels"] = c.mpp_conv_channels;
    j["mpp_hidden"] = c.mpp_hidden;
    j["v_min"] = c.v_min;
    j["variant"] = model::to_string(c.variant);
    j["dist"] = model::to_string(c.dist);
    j["shared_theta"] = c.shared_theta;
    j["mean_pool_temporal"] = c.mean_pool_temporal;
    return j;
}

model::ModelConfig model_cfg_from_json(const json& j) {
    model::ModelConfig c;
    c.input_len = j.at("input_len").get<std::size_t>();
    c.horizon = j.at("horizon").get<std::size_t>();
    c.cheb_order = j.at("cheb_order").get<std::size_t>();
    c.mdgcn_hidden = j.at("mdgcn_hidden").get<std::vector<std::size_t>>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.itcn_blocks = j.at("itcn_blocks").get<std::size_t>();
    c.itcn_kernel = j.at("itcn_kernel").get<std::size_t>();
    c.channels_per_var = j.at("channels_per_var").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.mpp_conv_channels = j.at("mpp_conv_channels").get<std::size_t>();
    c.mpp_hidden = j.at("mpp_hidden").get<std::size_t>();
    c.v_min = j.at("v_min").get<double>();
    c.variant = model::variant_from_string(j.at("variant").get<std::string>());
    c.dist = model::dist_from_string(j.at("dist").get<std::string>());
    c.shared_theta = j.at("shared_theta").get<bool>();
    c.mean_pool_temporal = j.at("mean_pool_temporal").get<bool>();
    return c;
}

json train_cfg_to_json(const training::TrainConfig& c) {
    json j;
    j["batch_size"] = c.batch_size;
    j["lr0"] = c.lr0;
    j["decay"] = c.decay;
    j["decay_every"] = c.decay_every;
    j["lr_floor"] = c.lr_floor;
    j["multiplicative_decay"] = c.multiplicative_decay;
    j["patience"] = c.patience;
    j["max_epochs"] = c.max_epochs;
    j["seed"] = c.seed;
    j["clip_norm"] = c.clip_norm;
    return j;
}

training::TrainConfig train_cfg_from_json(const json& j) {
    training::TrainConfig c;
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr0 = j.at("lr0").get<double>();
    c.decay = j.at("decay").get<double>();
    c.decay_every = j.at("decay_every").get<std::size_t>();
    c.lr_floor = j.at("lr_floor").get<double>();
    c.multiplicative_decay = j.at("multiplicative_decay").get<bool>();
    c.patience = j.at("patience").get<std::size_t>();
    c.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.clip_norm = j.at("clip_norm").get<double>();
    return c;
}

}  // namespace

void save(const Checkpoint& ck, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os.write("UQST", 4);
    write_u32(os, kVersion);
    write_u32(os, std::uint32_t(ck.params.size()));
    for (const auto& [name, arr] : ck.params) {
        write_u32(os, std::uint32_t(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
        write_u32(os, std::uint32_t(arr.rank()));
        for (auto d : arr.shape()) write_u64(os, d);
        for (std::size_t i = 0; i < arr.size(); ++i) write_f64(os, arr[i]);
    }

    json trailer;
    trailer["model"] = model_cfg_to_json(ck.model_cfg);
    trailer["train"] = train_cfg_to_json(ck.train_cfg);
    trailer["n_regions"] = ck.n_regions;
    trailer["n_vars"] = ck.n_vars;
    trailer["variable_names"] = ck.variable_names;
    trailer["norm"] = {
        {"n", ck.norm_spec.n},
        {"m", ck.norm_spec.m},
        {"min", ck.norm_spec.min_vals.vec()},
        {"max", ck.norm_spec.max_vals.vec()},
        {"offset", ck.norm_spec.offset},
    };
    trailer["best_val_loss"] = ck.best_val_loss;
    trailer["best_epoch"] = ck.best_epoch;
    std::string s = trailer.dump();
    write_u64(os, s.size());
    os.write(s.data(), std::streamsize(s.size()));
}

Checkpoint load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (std::memcmp(magic, "UQST", 4) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    std::uint32_t version = read_u32(is);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    std::uint32_t n_params = read_u32(is);
    for (std::uint32_t p = 0; p < n_params; ++p) {
        std::uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        std::uint32_t rank = read_u32(is);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = read_u64(is);
        NDArray arr(shape);
        for (std::size_t i = 0; i < arr.size(); ++i) arr[i] = read_f64(is);
        ck.params.emplace_back(std::move(name), std::move(arr));
    }

    std::uint64_t trailer_len = read_u64(is);
    std::string s(trailer_len, '\0');
    is.read(s.data(), std::streamsize(trailer_len));
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    json trailer = json::parse(s);
    ck.model_cfg = model_cfg_from_json(trailer.at("model"));
    ck.train_cfg = train_cfg_from_json(trailer.at("train"));
    ck.n_regions = trailer.at("n_regions").get<std::size_t>();
    ck.n_vars = trailer.at("n_vars").get<std::size_t>();
    ck.variable_names = trailer.at("variable_names").get<std::vector<std::string>>();
    const auto& nj = trailer.at("norm");
    ck.norm_spec.n = nj.at("n").get<std::size_t>();
    ck.norm_spec.m = nj.at("m").get<std::size_t>();
    ck.norm_spec.min_vals =
        NDArray({ck.norm_spec.n, ck.norm_spec.m}, nj.at("min").get<std::vector<double>>());
    ck.norm_spec.max_vals =
        NDArray({ck.norm_spec.n, ck.norm_spec.m}, nj.at("max").get<std::vector<double>>());
    ck.norm_spec.offset = nj.at("offset").get<std::vector<double>>();
    ck.best_val_loss = trailer.at("best_val_loss").get<double>();
    ck.best_epoch = trailer.at("best_epoch").get<std::size_t>();
    return ck;
}

Checkpoint from_model(const model::Model& m, const training::TrainConfig& tcfg,
                      const dataset::MinMaxSpec& spec,
                      const std::vector<std::string>& variable_names, double best_val_loss,
                      std::size_t best_epoch) {
    Checkpoint ck;
    ck.model_cfg = m.config();
    ck.train_cfg = tcfg;
    ck.n_regions = m.n_regions();
    ck.n_vars = m.n_vars();
    ck.variable_names = variable_names;
    ck.norm_spec = spec;
    ck.best_val_loss = best_val_loss;
    ck.best_epoch = best_epoch;
    for (const auto& e : m.params().entries()) ck.params.emplace_back(e.name, e.value);
    return ck;
}

model::Model to_model(const Checkpoint& ck, graph::DiffusionOps ops) {
    model::Model m(ck.model_cfg, ck.n_regions, ck.n_vars, std::move(ops), 0);
    auto& entries = m.params().entries();
    if (entries.size() != ck.params.size())
        throw std::runtime_error("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].name != ck.params[i].first ||
            entries[i].value.shape() != ck.params[i].second.shape())
            throw std::runtime_error("checkpoint parameter mismatch at " + entries[i].name);
        entries[i].value = ck.params[i].second;
    }
    return m;
}

}  // namespace uqst::checkpoint
